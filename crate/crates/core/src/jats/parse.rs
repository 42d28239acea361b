use quick_xml::events::{BytesRef, BytesStart, Event};
use quick_xml::Reader;

use super::{Attribute, Element, JatsDoc, JatsError, XmlNode};

const FRAGMENT_WRAPPER: &str = "jats-fragment-root";

/// Parses UTF-8 bytes into a [`JatsDoc`].
pub fn parse(bytes: &[u8]) -> Result<JatsDoc, JatsError> {
    let text = std::str::from_utf8(bytes).map_err(|e| JatsError::MalformedXml {
        position: e.valid_up_to() as u64,
        reason: "input is not valid UTF-8".into(),
    })?;
    parse_str(text)
}

pub fn parse_str(text: &str) -> Result<JatsDoc, JatsError> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let parsed = parse_document(text)?;
    let mut doc = JatsDoc::from_root(parsed.root, "")?;
    doc.prolog = parsed.prolog;
    doc.epilog = parsed.epilog;
    Ok(doc)
}

/// Parses a sequence of sibling nodes, e.g. a chunk of an article or a model
/// response. A leading XML declaration is tolerated and dropped.
pub fn parse_fragment(text: &str) -> Result<Vec<XmlNode>, JatsError> {
    let mut body = text.trim_start_matches('\u{feff}');
    if body.trim_start().starts_with("<?xml") {
        let start = body.find("<?xml").unwrap_or(0);
        match body[start..].find("?>") {
            Some(end) => body = &body[start + end + 2..],
            None => {
                return Err(JatsError::MalformedXml {
                    position: 0,
                    reason: "unterminated XML declaration".into(),
                })
            }
        }
    }
    let open = format!("<{FRAGMENT_WRAPPER}>");
    let wrapped = format!("{open}{body}</{FRAGMENT_WRAPPER}>");
    let offset = open.len() as u64;
    let parsed = parse_document(&wrapped).map_err(|e| match e {
        JatsError::MalformedXml { position, reason } => JatsError::MalformedXml {
            position: position.saturating_sub(offset).min(body.len() as u64),
            reason,
        },
        other => other,
    })?;
    Ok(parsed.root.children)
}

struct Parsed {
    prolog: String,
    root: Element,
    epilog: String,
}

fn malformed(position: u64, reason: impl Into<String>) -> JatsError {
    JatsError::MalformedXml {
        position,
        reason: reason.into(),
    }
}

fn parse_document(text: &str) -> Result<Parsed, JatsError> {
    let mut reader = Reader::from_str(text);
    {
        let cfg = reader.config_mut();
        cfg.trim_text(false);
        cfg.check_end_names = true;
        cfg.expand_empty_elements = false;
        cfg.check_comments = true;
    }

    let mut stack: Vec<Element> = Vec::new();
    let mut root: Option<Element> = None;
    let mut prolog_end: Option<usize> = None;
    let mut epilog_start: Option<usize> = None;

    loop {
        let before = reader.buffer_position();
        let event = reader
            .read_event()
            .map_err(|e| malformed(reader.error_position(), e.to_string()))?;
        match event {
            Event::Start(start) => {
                if stack.is_empty() {
                    if root.is_some() {
                        return Err(malformed(before, "content after the root element"));
                    }
                    prolog_end = Some(before as usize);
                }
                stack.push(element_from_start(&start, before)?);
            }
            Event::Empty(start) => {
                let el = element_from_start(&start, before)?;
                if stack.is_empty() {
                    if root.is_some() {
                        return Err(malformed(before, "content after the root element"));
                    }
                    prolog_end = Some(before as usize);
                    root = Some(el);
                    epilog_start = Some(reader.buffer_position() as usize);
                } else {
                    push_child(&mut stack, XmlNode::Element(el));
                }
            }
            Event::End(_) => {
                let el = stack
                    .pop()
                    .ok_or_else(|| malformed(before, "unexpected closing tag"))?;
                if stack.is_empty() {
                    root = Some(el);
                    epilog_start = Some(reader.buffer_position() as usize);
                } else {
                    push_child(&mut stack, XmlNode::Element(el));
                }
            }
            Event::Text(t) => {
                let s = t
                    .xml10_content()
                    .map_err(|e| malformed(before, e.to_string()))?;
                if stack.is_empty() {
                    if !s.chars().all(char::is_whitespace) {
                        return Err(malformed(before, "text outside the root element"));
                    }
                } else {
                    push_text(&mut stack, &s);
                }
            }
            Event::GeneralRef(r) => {
                if stack.is_empty() {
                    return Err(malformed(
                        before,
                        "entity reference outside the root element",
                    ));
                }
                let s = resolve_ref(&r, before)?;
                push_text(&mut stack, &s);
            }
            Event::CData(c) => {
                let s = c.decode().map_err(|e| malformed(before, e.to_string()))?;
                if stack.is_empty() {
                    return Err(malformed(before, "CDATA outside the root element"));
                }
                push_child(&mut stack, XmlNode::CData(s.into_owned()));
            }
            Event::Comment(c) => {
                if !stack.is_empty() {
                    let s = c.decode().map_err(|e| malformed(before, e.to_string()))?;
                    push_child(&mut stack, XmlNode::Comment(s.into_owned()));
                }
            }
            Event::PI(pi) => {
                if !stack.is_empty() {
                    let raw = std::str::from_utf8(&pi)
                        .map_err(|e| malformed(before, e.to_string()))?
                        .to_owned();
                    push_child(&mut stack, XmlNode::ProcessingInstruction(raw));
                }
            }
            Event::Decl(_) | Event::DocType(_) => {
                if root.is_some() || !stack.is_empty() {
                    return Err(malformed(before, "declaration inside document content"));
                }
            }
            Event::Eof => break,
        }
    }

    if let Some(open) = stack.last() {
        return Err(malformed(
            text.len() as u64,
            format!("unexpected end of input inside <{}>", open.name),
        ));
    }
    let root = root.ok_or_else(|| malformed(0, "no root element"))?;
    let prolog = text[..prolog_end.unwrap_or(0)].to_owned();
    let epilog = text[epilog_start.unwrap_or(text.len())..].to_owned();
    Ok(Parsed {
        prolog,
        root,
        epilog,
    })
}

fn element_from_start(start: &BytesStart<'_>, pos: u64) -> Result<Element, JatsError> {
    let name = std::str::from_utf8(start.name().as_ref())
        .map_err(|e| malformed(pos, e.to_string()))?
        .to_owned();
    let mut attributes = Vec::new();
    for attr in start.attributes().with_checks(true) {
        let attr = attr.map_err(|e| malformed(pos, e.to_string()))?;
        let key = std::str::from_utf8(attr.key.as_ref())
            .map_err(|e| malformed(pos, e.to_string()))?
            .to_owned();
        let value = attr
            .unescape_value()
            .map_err(|e| malformed(pos, format!("attribute {key}: {e}")))?
            .into_owned();
        attributes.push(Attribute { name: key, value });
    }
    Ok(Element {
        name,
        attributes,
        children: Vec::new(),
    })
}

fn resolve_ref(r: &BytesRef<'_>, pos: u64) -> Result<String, JatsError> {
    if let Some(c) = r
        .resolve_char_ref()
        .map_err(|e| malformed(pos, e.to_string()))?
    {
        return Ok(c.to_string());
    }
    let name = r.decode().map_err(|e| malformed(pos, e.to_string()))?;
    let s = match name.as_ref() {
        "lt" => "<",
        "gt" => ">",
        "amp" => "&",
        "apos" => "'",
        "quot" => "\"",
        other => return Err(malformed(pos, format!("undeclared entity &{other};"))),
    };
    Ok(s.to_owned())
}

fn push_child(stack: &mut [Element], node: XmlNode) {
    if let Some(parent) = stack.last_mut() {
        parent.children.push(node);
    }
}

/// Appends text, merging with a preceding text node so entity references do
/// not split a run.
fn push_text(stack: &mut [Element], s: &str) {
    if let Some(parent) = stack.last_mut() {
        if let Some(XmlNode::Text(prev)) = parent.children.last_mut() {
            prev.push_str(s);
        } else {
            parent.children.push(XmlNode::Text(s.to_owned()));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_article() {
        let doc = parse_str("<article><body><p>hi</p></body></article>").unwrap();
        let body = doc.body().unwrap();
        assert_eq!(body.children.len(), 1);
        assert_eq!(body.first_child("p").unwrap().text_content(), "hi");
    }

    #[test]
    fn mixed_content_has_three_children() {
        let doc = parse_str(r#"<article><body><p>a<xref rid="b1">1</xref>b</p></body></article>"#)
            .unwrap();
        let p = doc.body().unwrap().first_child("p").unwrap();
        assert_eq!(p.children.len(), 3);
        assert!(matches!(&p.children[0], XmlNode::Text(t) if t == "a"));
        assert!(matches!(&p.children[1], XmlNode::Element(e) if e.name == "xref"));
        assert!(matches!(&p.children[2], XmlNode::Text(t) if t == "b"));
    }

    #[test]
    fn entities_are_resolved_into_one_text_node() {
        let doc = parse_str("<article><p>a &lt; b &#x2013; &amp;c</p></article>").unwrap();
        let p = doc.root.first_child("p").unwrap();
        assert_eq!(p.children.len(), 1);
        assert_eq!(p.text_content(), "a < b \u{2013} &c");
    }

    #[test]
    fn not_an_article() {
        let err = parse_str("<book><p/></book>").unwrap_err();
        assert_eq!(
            err,
            JatsError::NotAJatsArticle {
                found: "book".into()
            }
        );
    }

    #[test]
    fn malformed_inputs() {
        for bad in [
            "<article><p>x</article>",
            "<article><p>x</p>",
            "not xml at all",
            "",
            "<article/><article/>",
            "<article>&nbsp;</article>",
            "<article a=\"1\" a=\"2\"/>",
        ] {
            assert!(
                matches!(parse_str(bad), Err(JatsError::MalformedXml { .. })),
                "accepted {bad:?}"
            );
        }
    }

    #[test]
    fn prolog_and_comments_preserved() {
        let src =
            "<?xml version=\"1.0\"?>\n<!DOCTYPE article PUBLIC \"-//NLM//DTD JATS\" \"x.dtd\">\n\
                   <article><!-- note --><?proc data?><body/></article>\n";
        let doc = parse_str(src).unwrap();
        assert!(doc.prolog.starts_with("<?xml"));
        assert!(doc.prolog.contains("DOCTYPE"));
        assert_eq!(doc.epilog, "\n");
        assert!(matches!(&doc.root.children[0], XmlNode::Comment(c) if c == " note "));
        assert!(
            matches!(&doc.root.children[1], XmlNode::ProcessingInstruction(p) if p == "proc data")
        );
    }

    #[test]
    fn attribute_order_preserved() {
        let doc = parse_str(r#"<article z="1" a="2" m="3"/>"#).unwrap();
        let names: Vec<_> = doc
            .root
            .attributes
            .iter()
            .map(|a| a.name.as_str())
            .collect();
        assert_eq!(names, ["z", "a", "m"]);
    }

    #[test]
    fn fragment_with_multiple_roots() {
        let nodes = parse_fragment("<p>a</p>\n<p>b</p>").unwrap();
        assert_eq!(nodes.len(), 3);
        let nodes = parse_fragment("<?xml version=\"1.0\"?><p>a</p>").unwrap();
        assert_eq!(nodes.len(), 1);
    }

    #[test]
    fn truncated_fragment_is_malformed() {
        let err = parse_fragment("<p>a</p><p>b").unwrap_err();
        assert!(matches!(err, JatsError::MalformedXml { .. }));
    }
}
