//! Seeded generator of small but realistic JATS articles, for stress and
//! fault-injection runs where a hand-written corpus is too small.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::jats::escape_text;

const NOUNS: &[&str] = &[
    "model",
    "network",
    "sample",
    "cohort",
    "protein",
    "signal",
    "gradient",
    "layer",
    "membrane",
    "enzyme",
    "dataset",
    "estimator",
    "pathway",
    "receptor",
    "sensor",
    "distribution",
    "algorithm",
    "variance",
    "catalyst",
    "substrate",
    "tissue",
    "lattice",
    "spectrum",
    "channel",
    "population",
    "parameter",
    "benchmark",
    "kernel",
    "operator",
];
const VERBS: &[&str] = &[
    "increases",
    "reduces",
    "predicts",
    "regulates",
    "binds",
    "stabilizes",
    "modulates",
    "improves",
    "constrains",
    "activates",
    "suppresses",
    "explains",
    "outperforms",
];
const ADJECTIVES: &[&str] = &[
    "robust",
    "sparse",
    "nonlinear",
    "stochastic",
    "transient",
    "significant",
    "adaptive",
    "local",
    "global",
    "thermal",
    "convolutional",
    "latent",
    "bayesian",
    "cellular",
];
const TERMS: &[&str] = &[
    "dropout",
    "attention",
    "transformer",
    "CRISPR",
    "p-value",
    "ReLU",
    "ATP",
    "fine-tuning",
    "Monte Carlo",
    "PCR",
    "RNA-seq",
    "softmax",
];
const SECTIONS: &[&str] = &[
    "Introduction",
    "Methods",
    "Results",
    "Discussion",
    "Conclusion",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthOptions {
    pub sections: (usize, usize),
    pub paragraphs: (usize, usize),
    pub figure_rate: f64,
    pub table_rate: f64,
    pub formula_rate: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            sections: (2, 4),
            paragraphs: (2, 7),
            figure_rate: 0.3,
            table_rate: 0.2,
            formula_rate: 0.2,
        }
    }
}

struct Gen {
    rng: ChaCha8Rng,
    refs: usize,
    figs: usize,
    tables: usize,
    formulas: usize,
}

impl Gen {
    fn pick(&mut self, words: &[&'static str]) -> &'static str {
        words.choose(&mut self.rng).expect("non-empty word list")
    }

    fn sentence(&mut self) -> String {
        let mut s = format!(
            "The {} {} {} the {} {}",
            self.pick(ADJECTIVES),
            self.pick(NOUNS),
            self.pick(VERBS),
            self.pick(ADJECTIVES),
            self.pick(NOUNS)
        );
        if self.rng.random_bool(0.4) {
            s.push_str(&format!(" when {} is applied", self.pick(TERMS)));
        }
        if self.rng.random_bool(0.3) {
            let n: u32 = self.rng.random_range(10..500);
            s.push_str(&format!(" across {n} trials"));
        }
        s.push('.');
        escape_text(&s)
    }

    fn paragraph(&mut self) -> String {
        let n = self.rng.random_range(3..6);
        let mut out = String::from("<p>");
        for i in 0..n {
            if i > 0 {
                out.push(' ');
            }
            let s = self.sentence();
            match self.rng.random_range(0..6) {
                0 => {
                    let w = self.pick(TERMS);
                    out.push_str(&format!("{s} We use <italic>{w}</italic> throughout."));
                }
                1 if self.refs > 0 => {
                    let r = self.rng.random_range(1..=self.refs);
                    out.push_str(&format!(
                        "{} <xref ref-type=\"bibr\" rid=\"r{r}\">[{r}]</xref>.",
                        s.trim_end_matches('.')
                    ));
                }
                2 => out.push_str(&format!(
                    "{s} Values were <bold>{}</bold>.",
                    self.rng.random_range(1..99)
                )),
                _ => out.push_str(&s),
            }
        }
        out.push_str("</p>");
        out
    }

    fn figure(&mut self) -> String {
        self.figs += 1;
        let k = self.figs;
        format!(
            "<fig id=\"f{k}\"><label>Figure {k}</label><caption><title>{}</title><p>{}</p></caption>\
             <graphic xlink:href=\"fig{k}.png\"/></fig>",
            self.sentence(),
            self.sentence()
        )
    }

    fn table(&mut self) -> String {
        self.tables += 1;
        let k = self.tables;
        let mut rows = String::new();
        for _ in 0..self.rng.random_range(2..4) {
            rows.push_str(&format!(
                "<tr><td>{}</td><td>{:.2}</td></tr>",
                self.pick(NOUNS),
                self.rng.random_range(0.0..1.0f64)
            ));
        }
        format!(
            "<table-wrap id=\"t{k}\"><label>Table {k}</label><caption><p>{}</p></caption>\
             <table><thead><tr><th>Condition</th><th>Score</th></tr></thead><tbody>{rows}</tbody></table></table-wrap>",
            self.sentence()
        )
    }

    fn formula(&mut self) -> String {
        self.formulas += 1;
        let k = self.formulas;
        format!(
            "<disp-formula id=\"e{k}\"><label>({k})</label><mml:math><mml:mi>y</mml:mi><mml:mo>=</mml:mo>\
             <mml:mi>x</mml:mi><mml:mo>+</mml:mo><mml:mn>{}</mml:mn></mml:math></disp-formula>",
            self.rng.random_range(1..10)
        )
    }
}

/// One article from `seed`. The same seed always gives the same text.
pub fn article(seed: u64, opts: &SynthOptions) -> String {
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        refs: 0,
        figs: 0,
        tables: 0,
        formulas: 0,
    };
    g.refs = g.rng.random_range(2..6);
    let title = g.sentence();
    let abstract_p = g.paragraph();
    let mut body = String::new();
    let n_sec = g.rng.random_range(opts.sections.0..=opts.sections.1);
    for s in 0..n_sec {
        let title = SECTIONS[s % SECTIONS.len()];
        body.push_str(&format!("<sec id=\"s{}\"><title>{title}</title>", s + 1));
        let n_p = g.rng.random_range(opts.paragraphs.0..=opts.paragraphs.1);
        for _ in 0..n_p {
            body.push_str(&g.paragraph());
            if g.rng.random_bool(opts.formula_rate / n_p as f64) {
                body.push_str(&g.formula());
            }
        }
        if g.rng.random_bool(opts.figure_rate) {
            body.push_str(&g.figure());
        }
        if g.rng.random_bool(opts.table_rate) {
            body.push_str(&g.table());
        }
        body.push_str("</sec>");
    }
    let mut refs = String::new();
    for r in 1..=g.refs {
        let year = g.rng.random_range(1990..2024);
        refs.push_str(&format!(
            "<ref id=\"r{r}\"><mixed-citation publication-type=\"journal\">Author {r}. \
             A study of {} {}. <source>J Synth Res</source>. {year};{r}:1-9.</mixed-citation></ref>",
            g.pick(ADJECTIVES),
            g.pick(NOUNS)
        ));
    }
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
         <article xmlns:xlink=\"http://www.w3.org/1999/xlink\" xmlns:mml=\"http://www.w3.org/1998/Math/MathML\" \
         article-type=\"research-article\" xml:lang=\"en\">\
         <front><article-meta><article-id pub-id-type=\"doi\">10.5555/synth.{seed}</article-id>\
         <title-group><article-title>{title}</article-title></title-group>\
         <abstract>{abstract_p}</abstract></article-meta></front>\
         <body>{body}</body><back><ref-list><title>References</title>{refs}</ref-list></back></article>\n"
    )
}

/// `n` articles with ids `synth-<seed+i>`.
pub fn corpus(seed: u64, n: usize, opts: &SynthOptions) -> Vec<(String, String)> {
    (0..n as u64)
        .map(|i| (format!("synth-{}", seed + i), article(seed + i, opts)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jats::{parse_str, serialize};

    #[test]
    fn deterministic_and_parseable() {
        let o = SynthOptions::default();
        assert_eq!(article(7, &o), article(7, &o));
        assert_ne!(article(7, &o), article(8, &o));
        for (_, xml) in corpus(1, 30, &o) {
            let doc = parse_str(&xml).unwrap();
            assert_eq!(serialize(&doc), xml);
            assert!(doc.body().unwrap().count_named("p") >= 2);
        }
    }
}
