//! Language names, IETF tags and script classes.
//!
//! Prompts use the human-readable name; file names use the tag.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScriptClass {
    /// Latin, Cyrillic, Greek, Arabic, Hebrew and other alphabets or abjads.
    Alphabetic,
    /// Han, kana and Hangul.
    Cjk,
    /// Brahmic and Ethiopic scripts.
    Abugida,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Language {
    pub name: String,
    pub tag: String,
    pub script: ScriptClass,
}

use ScriptClass::*;

const KNOWN: &[(&str, &str, ScriptClass)] = &[
    ("English", "en", Alphabetic),
    ("Arabic", "ar", Alphabetic),
    ("Bengali", "bn", Abugida),
    ("Chinese", "zh", Cjk),
    ("Simplified Chinese", "zh-Hans", Cjk),
    ("Traditional Chinese", "zh-Hant", Cjk),
    ("Czech", "cs", Alphabetic),
    ("Danish", "da", Alphabetic),
    ("Dutch", "nl", Alphabetic),
    ("Finnish", "fi", Alphabetic),
    ("French", "fr", Alphabetic),
    ("German", "de", Alphabetic),
    ("Greek", "el", Alphabetic),
    ("Hebrew", "he", Alphabetic),
    ("Hindi", "hi", Abugida),
    ("Hungarian", "hu", Alphabetic),
    ("Indonesian", "id", Alphabetic),
    ("Italian", "it", Alphabetic),
    ("Japanese", "ja", Cjk),
    ("Korean", "ko", Cjk),
    ("Malay", "ms", Alphabetic),
    ("Norwegian", "no", Alphabetic),
    ("Persian", "fa", Alphabetic),
    ("Polish", "pl", Alphabetic),
    ("Portuguese", "pt", Alphabetic),
    ("Romanian", "ro", Alphabetic),
    ("Russian", "ru", Alphabetic),
    ("Spanish", "es", Alphabetic),
    ("Swahili", "sw", Alphabetic),
    ("Swedish", "sv", Alphabetic),
    ("Tamil", "ta", Abugida),
    ("Telugu", "te", Abugida),
    ("Thai", "th", Abugida),
    ("Turkish", "tr", Alphabetic),
    ("Ukrainian", "uk", Alphabetic),
    ("Urdu", "ur", Alphabetic),
    ("Vietnamese", "vi", Alphabetic),
    ("Amharic", "am", Abugida),
    ("Yoruba", "yo", Alphabetic),
    ("Hausa", "ha", Alphabetic),
    ("Marathi", "mr", Abugida),
    ("Gujarati", "gu", Abugida),
    ("Punjabi", "pa", Abugida),
];

impl Language {
    /// Looks up a language by name or tag, ignoring case. Unknown names are
    /// accepted as alphabetic with a slug for a tag.
    pub fn resolve(name_or_tag: &str) -> Language {
        let q = name_or_tag.trim();
        for (name, tag, script) in KNOWN {
            if name.eq_ignore_ascii_case(q) || tag.eq_ignore_ascii_case(q) {
                return Language {
                    name: (*name).into(),
                    tag: (*tag).into(),
                    script: *script,
                };
            }
        }
        Language {
            name: q.into(),
            tag: slug(q),
            script: Alphabetic,
        }
    }

    pub fn english() -> Language {
        Self::resolve("en")
    }

    pub fn is_english(&self) -> bool {
        self.tag == "en"
    }
}

/// Lowercase ASCII slug safe for file names.
pub fn slug(s: &str) -> String {
    let mut out = String::new();
    for c in s.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') && !out.is_empty() {
            out.push('-');
        }
    }
    let t = out.trim_end_matches('-').to_owned();
    if t.is_empty() {
        "x".into()
    } else {
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolves_names_and_tags() {
        assert_eq!(Language::resolve("korean").tag, "ko");
        assert_eq!(Language::resolve("ja").name, "Japanese");
        assert_eq!(Language::resolve("Tamil").script, ScriptClass::Abugida);
        assert_eq!(Language::resolve("Klingon").tag, "klingon");
    }

    #[test]
    fn slugs() {
        assert_eq!(slug("Brazilian Portuguese!"), "brazilian-portuguese");
        assert_eq!(slug("日本"), "x");
    }
}
