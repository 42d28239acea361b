use super::{Element, JatsDoc, XmlNode};

/// Serializes the whole document, including the verbatim prolog and epilog.
pub fn serialize(doc: &JatsDoc) -> String {
    let mut out = String::with_capacity(doc.prolog.len() + 4096);
    out.push_str(&doc.prolog);
    write_element(&doc.root, &mut out);
    out.push_str(&doc.epilog);
    out
}

pub fn serialize_node(node: &XmlNode) -> String {
    let mut out = String::new();
    write_node(node, &mut out);
    out
}

pub fn serialize_nodes(nodes: &[XmlNode]) -> String {
    let mut out = String::new();
    for n in nodes {
        write_node(n, &mut out);
    }
    out
}

pub fn escape_text(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    push_escaped(s, false, &mut out);
    out
}

pub fn escape_attr(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    push_escaped(s, true, &mut out);
    out
}

fn push_escaped(s: &str, attr: bool, out: &mut String) {
    for c in s.chars() {
        match c {
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '&' => out.push_str("&amp;"),
            '"' if attr => out.push_str("&quot;"),
            '\t' if attr => out.push_str("&#9;"),
            '\n' if attr => out.push_str("&#10;"),
            '\r' => out.push_str("&#13;"),
            c => out.push(c),
        }
    }
}

fn write_node(node: &XmlNode, out: &mut String) {
    match node {
        XmlNode::Element(e) => write_element(e, out),
        XmlNode::Text(t) => push_escaped(t, false, out),
        XmlNode::CData(t) => {
            // `]]>` cannot appear inside a CDATA section; split it across two.
            out.push_str("<![CDATA[");
            out.push_str(&t.replace("]]>", "]]]]><![CDATA[>"));
            out.push_str("]]>");
        }
        XmlNode::Comment(c) => {
            out.push_str("<!--");
            out.push_str(c);
            out.push_str("-->");
        }
        XmlNode::ProcessingInstruction(p) => {
            out.push_str("<?");
            out.push_str(p);
            out.push_str("?>");
        }
    }
}

fn write_element(e: &Element, out: &mut String) {
    out.push('<');
    out.push_str(&e.name);
    for a in &e.attributes {
        out.push(' ');
        out.push_str(&a.name);
        out.push_str("=\"");
        push_escaped(&a.value, true, out);
        out.push('"');
    }
    if e.children.is_empty() {
        out.push_str("/>");
        return;
    }
    out.push('>');
    for c in &e.children {
        write_node(c, out);
    }
    out.push_str("</");
    out.push_str(&e.name);
    out.push('>');
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jats::{parse_str, tree_equal};

    #[test]
    fn escapes_less_than_in_text() {
        let doc = JatsDoc::from_root(
            Element::new("article").with_child(Element::new("p").with_text("a < b")),
            "t",
        )
        .unwrap();
        assert_eq!(serialize(&doc), "<article><p>a &lt; b</p></article>");
    }

    #[test]
    fn attributes_emitted_verbatim() {
        let src = r#"<article><p><xref ref-type="bibr" rid="CR12">12</xref></p></article>"#;
        let doc = parse_str(src).unwrap();
        assert_eq!(serialize(&doc), src);
    }

    #[test]
    fn round_trip_keeps_prolog_and_specials() {
        let src = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<article xmlns:mml=\"http://www.w3.org/1998/Math/MathML\">\
                   <!--c--><p>x &amp; y &gt; z<![CDATA[raw <b>]]></p><?pi x?></article>";
        let doc = parse_str(src).unwrap();
        let out = serialize(&doc);
        assert_eq!(out, src);
        assert!(tree_equal(&doc, &parse_str(&out).unwrap()));
    }

    #[test]
    fn attribute_with_quotes_and_newlines() {
        let doc = JatsDoc::from_root(
            Element::new("article").with_attr("title", "say \"hi\"\n<now> & then"),
            "t",
        )
        .unwrap();
        let again = parse_str(&serialize(&doc)).unwrap();
        assert_eq!(again.root, doc.root);
    }

    #[test]
    fn cdata_terminator_is_split() {
        let doc = JatsDoc::from_root(
            Element::new("article").with_child(XmlNode::CData("a]]>b".into())),
            "t",
        )
        .unwrap();
        let again = parse_str(&serialize(&doc)).unwrap();
        assert_eq!(again.root.text_content(), "a]]>b");
    }
}
