//! A small, strict XML reader producing a raw element tree with source
//! locations, plus `as` alias resolution and instance skeleton validation.
//!
//! The reader covers the XML subset used by XCSP3 documents: elements,
//! attributes, character data, CDATA sections, comments, processing
//! instructions and the five predefined entities plus numeric character
//! references. DOCTYPE declarations are rejected.

use std::collections::{HashMap, HashSet};

use crate::error::{Error, ErrorKind, Location, Result};
use crate::grammar;

/// One element of the raw document tree.
///
/// `text` is the concatenation of all character data directly inside the
/// element, entity-decoded but otherwise verbatim: leading and trailing
/// whitespace is preserved so later stages can trim tolerantly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawElement {
    pub name: String,
    /// Attributes in document order; names are unique.
    pub attributes: Vec<(String, String)>,
    pub children: Vec<RawElement>,
    pub text: String,
    pub location: Location,
}

impl RawElement {
    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attributes
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_str())
    }

    pub fn has_attr(&self, name: &str) -> bool {
        self.attr(name).is_some()
    }

    pub fn child(&self, name: &str) -> Option<&RawElement> {
        self.children.iter().find(|c| c.name == name)
    }

    pub fn children_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a RawElement> {
        self.children.iter().filter(move |c| c.name == name)
    }

    pub fn trimmed_text(&self) -> &str {
        self.text.trim()
    }

    pub fn has_text(&self) -> bool {
        !self.text.trim().is_empty()
    }

    /// Builds an error anchored at this element's location.
    pub fn err(&self, kind: ErrorKind, message: impl Into<String>) -> Error {
        Error::new(kind, message).at(self.location)
    }

    /// Pre-order traversal.
    pub fn walk<'a>(&'a self, visit: &mut impl FnMut(&'a RawElement)) {
        visit(self);
        for child in &self.children {
            child.walk(visit);
        }
    }
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

/// Parses an XML document into its root element.
pub fn load_document(text: &str) -> Result<RawElement> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut reader = Reader::new(text);
    reader.skip_misc()?;
    if reader.at_end() {
        return Err(Error::xml("not XML: no root element found"));
    }
    let root = reader.parse_element()?;
    reader.skip_misc()?;
    if !reader.at_end() {
        return Err(Error::xml("trailing content after the root element").at(reader.location()));
    }
    Ok(root)
}

/// Parses an XML document from raw bytes, validating UTF-8 first.
pub fn load_document_bytes(bytes: &[u8]) -> Result<RawElement> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::xml(format!("invalid UTF-8: {e}")))?;
    load_document(text)
}

struct Reader<'a> {
    text: &'a str,
    bytes: &'a [u8],
    pos: usize,
    line: u32,
    col: u32,
}

impl<'a> Reader<'a> {
    fn new(text: &'a str) -> Self {
        Reader { text, bytes: text.as_bytes(), pos: 0, line: 1, col: 1 }
    }

    fn location(&self) -> Location {
        Location::new(self.line, self.col)
    }

    fn at_end(&self) -> bool {
        self.pos >= self.bytes.len()
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn starts_with(&self, s: &str) -> bool {
        self.bytes[self.pos..].starts_with(s.as_bytes())
    }

    fn bump(&mut self) -> u8 {
        let b = self.bytes[self.pos];
        self.pos += 1;
        if b == b'\n' {
            self.line += 1;
            self.col = 1;
        } else if b & 0xC0 != 0x80 {
            // Count one column per character, not per UTF-8 byte.
            self.col += 1;
        }
        b
    }

    fn bump_n(&mut self, n: usize) {
        for _ in 0..n {
            self.bump();
        }
    }

    fn expect(&mut self, b: u8) -> Result<()> {
        match self.peek() {
            Some(got) if got == b => {
                self.bump();
                Ok(())
            }
            Some(got) => Err(Error::xml(format!(
                "expected \"{}\" but found \"{}\"",
                b as char, got as char
            ))
            .at(self.location())),
            None => Err(Error::xml(format!("expected \"{}\" but reached end of input", b as char))
                .at(self.location())),
        }
    }

    fn skip_whitespace(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t' | b'\r' | b'\n')) {
            self.bump();
        }
    }

    /// Skips whitespace, comments and processing instructions. Rejects
    /// DOCTYPE declarations.
    fn skip_misc(&mut self) -> Result<()> {
        loop {
            self.skip_whitespace();
            if self.starts_with("<!--") {
                self.skip_comment()?;
            } else if self.starts_with("<!DOCTYPE") {
                return Err(Error::xml("DOCTYPE declarations are not supported").at(self.location()));
            } else if self.starts_with("<?") {
                self.skip_pi()?;
            } else {
                return Ok(());
            }
        }
    }

    fn skip_comment(&mut self) -> Result<()> {
        let start = self.location();
        self.bump_n(4); // <!--
        loop {
            if self.at_end() {
                return Err(Error::xml("unterminated comment").at(start));
            }
            if self.starts_with("--") {
                if self.starts_with("-->") {
                    self.bump_n(3);
                    return Ok(());
                }
                return Err(Error::xml("\"--\" is not allowed inside a comment").at(self.location()));
            }
            self.bump();
        }
    }

    fn skip_pi(&mut self) -> Result<()> {
        let start = self.location();
        self.bump_n(2); // <?
        loop {
            if self.at_end() {
                return Err(Error::xml("unterminated processing instruction").at(start));
            }
            if self.starts_with("?>") {
                self.bump_n(2);
                return Ok(());
            }
            self.bump();
        }
    }

    fn read_name(&mut self) -> Result<String> {
        let start = self.pos;
        let loc = self.location();
        match self.peek() {
            Some(b) if b.is_ascii_alphabetic() || b == b'_' => {
                self.bump();
            }
            _ => return Err(Error::xml("expected a name").at(loc)),
        }
        while let Some(b) = self.peek() {
            if b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b'.' | b':') {
                self.bump();
            } else {
                break;
            }
        }
        Ok(self.text[start..self.pos].to_string())
    }

    fn parse_element(&mut self) -> Result<RawElement> {
        let location = self.location();
        self.expect(b'<')?;
        let name = self.read_name()?;
        let mut element = RawElement {
            name,
            attributes: Vec::new(),
            children: Vec::new(),
            text: String::new(),
            location,
        };
        loop {
            self.skip_whitespace();
            match self.peek() {
                Some(b'>') => {
                    self.bump();
                    self.parse_content(&mut element)?;
                    return Ok(element);
                }
                Some(b'/') => {
                    self.bump();
                    self.expect(b'>')?;
                    return Ok(element);
                }
                Some(_) => {
                    let attr_loc = self.location();
                    let attr_name = self.read_name()?;
                    self.skip_whitespace();
                    self.expect(b'=')?;
                    self.skip_whitespace();
                    let value = self.read_attr_value()?;
                    if element.attr(&attr_name).is_some() {
                        return Err(Error::xml(format!(
                            "duplicate attribute \"{attr_name}\" on <{}>",
                            element.name
                        ))
                        .at(attr_loc));
                    }
                    if value != value.trim() {
                        return Err(Error::grammar(format!(
                            "attribute \"{attr_name}\" has leading or trailing whitespace in its value \"{value}\""
                        ))
                        .at(attr_loc));
                    }
                    element.attributes.push((attr_name, value));
                }
                None => {
                    return Err(Error::xml(format!("unterminated <{}> tag", element.name)).at(location));
                }
            }
        }
    }

    fn read_attr_value(&mut self) -> Result<String> {
        let quote = match self.peek() {
            Some(q @ (b'"' | b'\'')) => {
                self.bump();
                q
            }
            _ => return Err(Error::xml("attribute value must be quoted").at(self.location())),
        };
        let mut value = String::new();
        let mut seg_start = self.pos;
        loop {
            match self.peek() {
                None => return Err(Error::xml("unterminated attribute value").at(self.location())),
                Some(b) if b == quote => {
                    value.push_str(&self.text[seg_start..self.pos]);
                    self.bump();
                    return Ok(value);
                }
                Some(b'<') => {
                    return Err(Error::xml("\"<\" is not allowed in an attribute value")
                        .at(self.location()));
                }
                Some(b'&') => {
                    value.push_str(&self.text[seg_start..self.pos]);
                    value.push(self.parse_entity()?);
                    seg_start = self.pos;
                }
                Some(_) => {
                    self.bump();
                }
            }
        }
    }

    fn parse_content(&mut self, element: &mut RawElement) -> Result<()> {
        loop {
            let mut seg_start = self.pos;
            // Character data up to the next markup.
            loop {
                match self.peek() {
                    None => {
                        return Err(Error::xml(format!("missing </{}> end tag", element.name))
                            .at(element.location));
                    }
                    Some(b'<') => break,
                    Some(b'&') => {
                        element.text.push_str(&self.text[seg_start..self.pos]);
                        element.text.push(self.parse_entity()?);
                        seg_start = self.pos;
                    }
                    Some(_) => {
                        self.bump();
                    }
                }
            }
            element.text.push_str(&self.text[seg_start..self.pos]);
            if self.starts_with("</") {
                self.bump_n(2);
                let end_loc = self.location();
                let end_name = self.read_name()?;
                if end_name != element.name {
                    return Err(Error::xml(format!(
                        "mismatched end tag: expected </{}>, found </{end_name}>",
                        element.name
                    ))
                    .at(end_loc));
                }
                self.skip_whitespace();
                self.expect(b'>')?;
                return Ok(());
            } else if self.starts_with("<!--") {
                self.skip_comment()?;
            } else if self.starts_with("<![CDATA[") {
                self.parse_cdata(element)?;
            } else if self.starts_with("<!") {
                return Err(Error::xml("unexpected \"<!\" markup").at(self.location()));
            } else if self.starts_with("<?") {
                self.skip_pi()?;
            } else {
                let child = self.parse_element()?;
                element.children.push(child);
            }
        }
    }

    fn parse_cdata(&mut self, element: &mut RawElement) -> Result<()> {
        let start = self.location();
        self.bump_n(9); // <![CDATA[
        let seg_start = self.pos;
        loop {
            if self.at_end() {
                return Err(Error::xml("unterminated CDATA section").at(start));
            }
            if self.starts_with("]]>") {
                element.text.push_str(&self.text[seg_start..self.pos]);
                self.bump_n(3);
                return Ok(());
            }
            self.bump();
        }
    }

    fn parse_entity(&mut self) -> Result<char> {
        let start = self.location();
        self.bump(); // &
        let name_start = self.pos;
        loop {
            match self.peek() {
                Some(b';') => break,
                Some(_) if self.pos - name_start < 10 => {
                    self.bump();
                }
                _ => return Err(Error::xml("malformed entity reference").at(start)),
            }
        }
        let name = &self.text[name_start..self.pos];
        self.bump(); // ;
        let c = match name {
            "lt" => '<',
            "gt" => '>',
            "amp" => '&',
            "quot" => '"',
            "apos" => '\'',
            _ => {
                let code = if let Some(hex) = name.strip_prefix("#x") {
                    u32::from_str_radix(hex, 16).ok()
                } else if let Some(dec) = name.strip_prefix('#') {
                    dec.parse::<u32>().ok()
                } else {
                    None
                };
                code.and_then(char::from_u32)
                    .ok_or_else(|| Error::xml(format!("unknown entity \"&{name};\"")).at(start))?
            }
        };
        Ok(c)
    }
}

// ---------------------------------------------------------------------------
// Alias resolution
// ---------------------------------------------------------------------------

/// Resolves `as` aliases in place.
///
/// An element carrying `as="other"` receives a copy of the content
/// (children and text) of the element whose `id` is `other`. Restrictions:
/// the target must precede the alias in document order, must not itself be
/// an alias, must not contain `id`-bearing descendants, and the aliasing
/// element must have no content of its own. Each violation has its own
/// diagnostic. Also validates all `id` attributes (identifier syntax,
/// reserved words, document-wide uniqueness).
pub fn resolve_aliases(root: &mut RawElement) -> Result<()> {
    let mut all_ids = HashSet::new();
    collect_ids(root, &mut all_ids)?;
    let mut registry = HashMap::new();
    resolve_rec(root, &all_ids, &mut registry)
}

fn collect_ids(element: &RawElement, seen: &mut HashSet<String>) -> Result<()> {
    if let Some(id) = element.attr("id") {
        grammar::validate_id(id).map_err(|e| e.at(element.location))?;
        if !seen.insert(id.to_string()) {
            return Err(element.err(
                ErrorKind::Structure,
                format!("id \"{id}\" is used more than once; ids must be unique in the document"),
            ));
        }
    }
    for child in &element.children {
        collect_ids(child, seen)?;
    }
    Ok(())
}

struct AliasTarget {
    children: Vec<RawElement>,
    text: String,
    was_alias: bool,
    has_inner_id: bool,
}

fn resolve_rec(
    element: &mut RawElement,
    all_ids: &HashSet<String>,
    registry: &mut HashMap<String, AliasTarget>,
) -> Result<()> {
    let was_alias = element.has_attr("as");
    if was_alias {
        let target_id = element.attr("as").unwrap().to_string();
        if !element.children.is_empty() || element.has_text() {
            return Err(element.err(
                ErrorKind::Structure,
                format!(
                    "element <{}> uses as=\"{target_id}\" but has content of its own",
                    element.name
                ),
            ));
        }
        let target = match registry.get(&target_id) {
            Some(t) => t,
            None if all_ids.contains(&target_id) => {
                return Err(element.err(
                    ErrorKind::Structure,
                    format!(
                        "as=\"{target_id}\" refers to an element that appears later; the target must precede the alias"
                    ),
                ));
            }
            None => {
                return Err(element.err(
                    ErrorKind::Structure,
                    format!("as=\"{target_id}\" refers to an unknown id"),
                ));
            }
        };
        if target.was_alias {
            return Err(element.err(
                ErrorKind::Structure,
                format!("as=\"{target_id}\" refers to another alias; alias chains are not allowed"),
            ));
        }
        if target.has_inner_id {
            return Err(element.err(
                ErrorKind::Structure,
                format!(
                    "as=\"{target_id}\" refers to an element whose content contains id attributes and cannot be copied"
                ),
            ));
        }
        element.children = target.children.clone();
        element.text = target.text.clone();
        element.attributes.retain(|(n, _)| n != "as");
    }
    for child in &mut element.children {
        resolve_rec(child, all_ids, registry)?;
    }
    if let Some(id) = element.attr("id") {
        let has_inner_id = element.children.iter().any(subtree_has_id);
        registry.insert(
            id.to_string(),
            AliasTarget {
                children: element.children.clone(),
                text: element.text.clone(),
                was_alias,
                has_inner_id,
            },
        );
    }
    Ok(())
}

fn subtree_has_id(element: &RawElement) -> bool {
    element.has_attr("id") || element.children.iter().any(subtree_has_id)
}

// ---------------------------------------------------------------------------
// Skeleton validation
// ---------------------------------------------------------------------------

/// The problem framework of an instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Framework {
    Csp,
    Cop,
}

impl std::fmt::Display for Framework {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Framework::Csp => write!(f, "CSP"),
            Framework::Cop => write!(f, "COP"),
        }
    }
}

/// The validated top-level structure of an instance document.
#[derive(Debug)]
pub struct DocumentFrame<'a> {
    pub framework: Framework,
    pub variables: &'a RawElement,
    pub constraints: &'a RawElement,
    pub objectives: Option<&'a RawElement>,
    pub annotations: Option<&'a RawElement>,
    pub warnings: Vec<String>,
}

/// Framework names that are valid in the format but outside the scope of
/// this toolkit.
const UNSUPPORTED_FRAMEWORKS: &[&str] = &[
    "WCSP", "FCSP", "QCSP", "QCSP+", "QCOP", "QCOP+", "SCSP", "SCOP", "QSTR", "TCSP", "NCSP",
    "NCOP", "DisCSP", "DisWCSP",
];

/// Attributes that switch an element to reified or relaxed semantics;
/// instances using them are rejected rather than misread. The `href...`
/// spellings appear in some generators.
const REIFICATION_ATTRS: &[&str] = &[
    "reifiedBy",
    "hreifiedFrom",
    "hreifiedTo",
    "hrefifiedFrom",
    "hrefifiedTo",
];

/// Validates the document skeleton and extracts the four top-level blocks.
pub fn validate_skeleton(root: &RawElement) -> Result<DocumentFrame<'_>> {
    if root.name != "instance" {
        return Err(root.err(
            ErrorKind::Structure,
            format!("root element must be <instance>, found <{}>", root.name),
        ));
    }
    let mut warnings = Vec::new();
    match root.attr("format") {
        None => {
            return Err(root.err(ErrorKind::Structure, "missing format attribute on <instance>"));
        }
        Some("XCSP3") => {}
        Some(other) => {
            return Err(root.err(
                ErrorKind::Structure,
                format!("format must be \"XCSP3\", found \"{other}\""),
            ));
        }
    }
    let framework = match root.attr("type") {
        None => {
            return Err(root.err(ErrorKind::Structure, "missing type attribute on <instance>"));
        }
        Some("CSP") => Framework::Csp,
        Some("COP") => Framework::Cop,
        Some(other) if UNSUPPORTED_FRAMEWORKS.contains(&other) => {
            return Err(root.err(
                ErrorKind::Unsupported,
                format!("framework \"{other}\" is recognized but not supported; only CSP and COP are"),
            ));
        }
        Some(other) => {
            return Err(root.err(
                ErrorKind::Structure,
                format!("unknown framework type \"{other}\""),
            ));
        }
    };
    for (attr, _) in &root.attributes {
        if !matches!(attr.as_str(), "format" | "type" | "note" | "class" | "id") {
            warnings.push(format!("unknown attribute \"{attr}\" on <instance> is ignored"));
        }
    }

    // Reified and relaxed constraint forms change the meaning of an element;
    // reject the whole document rather than checking it wrongly.
    let mut reified: Option<Error> = None;
    root.walk(&mut |el| {
        if reified.is_none() {
            for attr in REIFICATION_ATTRS {
                if el.has_attr(attr) {
                    reified = Some(el.err(
                        ErrorKind::Unsupported,
                        format!("attribute \"{attr}\" on <{}> requests reification, which is not supported", el.name),
                    ));
                }
            }
        }
    });
    if let Some(e) = reified {
        return Err(e);
    }

    if root.has_text() {
        return Err(root.err(ErrorKind::Structure, "stray text directly under <instance>"));
    }

    let expected = ["variables", "constraints", "objectives", "annotations"];
    let mut next_allowed = 0usize;
    let mut blocks: [Option<&RawElement>; 4] = [None; 4];
    for child in &root.children {
        match expected.iter().position(|n| *n == child.name) {
            Some(pos) if pos >= next_allowed => {
                blocks[pos] = Some(child);
                next_allowed = pos + 1;
            }
            Some(pos) if blocks[pos].is_some() => {
                return Err(child.err(
                    ErrorKind::Structure,
                    format!("<{}> appears more than once", child.name),
                ));
            }
            Some(_) => {
                return Err(child.err(
                    ErrorKind::Structure,
                    format!(
                        "<{}> is out of order; expected variables, constraints, objectives, annotations",
                        child.name
                    ),
                ));
            }
            None => {
                return Err(child.err(
                    ErrorKind::Structure,
                    format!("unexpected <{}> under <instance>", child.name),
                ));
            }
        }
    }

    let variables = blocks[0].ok_or_else(|| {
        root.err(ErrorKind::Structure, "missing <variables> element")
    })?;
    let constraints = blocks[1].ok_or_else(|| {
        root.err(ErrorKind::Structure, "missing <constraints> element")
    })?;
    let objectives = blocks[2];
    let annotations = blocks[3];

    if variables.children.is_empty() {
        return Err(variables.err(
            ErrorKind::Structure,
            "<variables> must declare at least one variable or array",
        ));
    }

    match framework {
        Framework::Csp => {
            if let Some(obj) = objectives {
                return Err(obj.err(
                    ErrorKind::Structure,
                    "a CSP instance cannot have an <objectives> element",
                ));
            }
        }
        Framework::Cop => {
            let obj = objectives.ok_or_else(|| {
                root.err(ErrorKind::Structure, "a COP instance requires an <objectives> element")
            })?;
            if obj.children.is_empty() {
                return Err(obj.err(
                    ErrorKind::Structure,
                    "<objectives> must contain at least one minimize or maximize element",
                ));
            }
        }
    }

    Ok(DocumentFrame { framework, variables, constraints, objectives, annotations, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> RawElement {
        load_document(text).expect("document should load")
    }

    #[test]
    fn basic_tree() {
        let doc = load(
            "<instance format=\"XCSP3\" type=\"CSP\">\n  <variables>\n    <var id=\"x\"> 0 1 </var>\n  </variables>\n  <constraints/>\n</instance>",
        );
        assert_eq!(doc.name, "instance");
        assert_eq!(doc.attr("format"), Some("XCSP3"));
        assert_eq!(doc.children.len(), 2);
        let var = &doc.children[0].children[0];
        assert_eq!(var.name, "var");
        assert_eq!(var.text, " 0 1 ");
        assert_eq!(var.trimmed_text(), "0 1");
        assert_eq!(var.location.line, 3);
        assert_eq!(var.location.column, 5);
    }

    #[test]
    fn prolog_comments_and_cdata() {
        let doc = load(
            "<?xml version=\"1.0\"?>\n<!-- header -->\n<a><!-- inner --><b/><![CDATA[2<3]]></a>",
        );
        assert_eq!(doc.name, "a");
        assert_eq!(doc.children.len(), 1);
        assert_eq!(doc.text, "2<3");
    }

    #[test]
    fn entities() {
        let doc = load("<a note=\"&lt;tag&gt;\">&amp;&#65;&#x42;</a>");
        assert_eq!(doc.attr("note"), Some("<tag>"));
        assert_eq!(doc.text, "&AB");
    }

    #[test]
    fn malformed_documents() {
        assert_eq!(load_document("").unwrap_err().kind, ErrorKind::Xml);
        assert_eq!(load_document("hello").unwrap_err().kind, ErrorKind::Xml);
        assert_eq!(load_document("<a>").unwrap_err().kind, ErrorKind::Xml);
        assert_eq!(load_document("<a></b>").unwrap_err().kind, ErrorKind::Xml);
        assert_eq!(load_document("<a/><b/>").unwrap_err().kind, ErrorKind::Xml);
        assert_eq!(load_document("<a>&bogus;</a>").unwrap_err().kind, ErrorKind::Xml);
        assert_eq!(
            load_document("<!DOCTYPE a><a/>").unwrap_err().kind,
            ErrorKind::Xml
        );
        let e = load_document("<a x=\"1\" x=\"2\"/>").unwrap_err();
        assert_eq!(e.kind, ErrorKind::Xml);
        assert!(e.to_string().contains("duplicate attribute"));
    }

    #[test]
    fn attribute_whitespace_rejected() {
        let e = load_document("<var id=\" x\"/>").unwrap_err();
        assert_eq!(e.kind, ErrorKind::Grammar);
        assert!(e.location.is_some());
        let e = load_document("<var id=\"x \"/>").unwrap_err();
        assert_eq!(e.kind, ErrorKind::Grammar);
    }

    #[test]
    fn error_locations() {
        let e = load_document("<a>\n  <b>\n</a>").unwrap_err();
        let loc = e.location.expect("location");
        assert_eq!(loc.line, 3);
    }

    fn resolve(text: &str) -> Result<RawElement> {
        let mut doc = load(text);
        resolve_aliases(&mut doc)?;
        Ok(doc)
    }

    #[test]
    fn alias_copies_content() {
        let doc = resolve(
            "<vs><var id=\"x1\">1 2 3</var><var id=\"x2\" as=\"x1\"/><var id=\"x3\" as=\"x1\"></var></vs>",
        )
        .unwrap();
        assert_eq!(doc.children[1].text, "1 2 3");
        assert_eq!(doc.children[2].text, "1 2 3");
        assert!(!doc.children[1].has_attr("as"));
    }

    #[test]
    fn alias_copies_children_across_tags() {
        let doc = resolve(
            "<c><supports id=\"tps\"><t>(1,2)</t></supports><conflicts as=\"tps\"/></c>",
        )
        .unwrap();
        assert_eq!(doc.children[1].children.len(), 1);
        assert_eq!(doc.children[1].children[0].text, "(1,2)");
    }

    #[test]
    fn alias_diagnostics_are_distinct() {
        let dangling = resolve("<a><b as=\"nope\"/></a>").unwrap_err();
        assert!(dangling.to_string().contains("unknown id"));
        let forward = resolve("<a><b as=\"late\"/><c id=\"late\">1</c></a>").unwrap_err();
        assert!(forward.to_string().contains("must precede"));
        let transitive =
            resolve("<a><b id=\"b0\">1</b><c id=\"c0\" as=\"b0\"/><d as=\"c0\"/></a>").unwrap_err();
        assert!(transitive.to_string().contains("alias chains"));
        let nonempty = resolve("<a><b id=\"b0\">1</b><c as=\"b0\">2</c></a>").unwrap_err();
        assert!(nonempty.to_string().contains("content of its own"));
        let inner_id =
            resolve("<a><b id=\"b0\"><v id=\"v0\"/></b><c as=\"b0\"/></a>").unwrap_err();
        assert!(inner_id.to_string().contains("contains id attributes"));
        for e in [&dangling, &forward, &transitive, &nonempty, &inner_id] {
            assert_eq!(e.kind, ErrorKind::Structure);
            assert!(e.location.is_some());
        }
    }

    #[test]
    fn alias_resolution_is_idempotent() {
        let text = "<vs><var id=\"x1\">1 2 3</var><var id=\"x2\" as=\"x1\"/></vs>";
        let mut once = load(text);
        resolve_aliases(&mut once).unwrap();
        let mut twice = once.clone();
        resolve_aliases(&mut twice).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn duplicate_and_invalid_ids() {
        let dup = resolve("<a><b id=\"x\"/><c id=\"x\"/></a>").unwrap_err();
        assert_eq!(dup.kind, ErrorKind::Structure);
        assert!(dup.to_string().contains("more than once"));
        let keyword = resolve("<a><b id=\"add\"/></a>").unwrap_err();
        assert_eq!(keyword.kind, ErrorKind::Grammar);
        let bad = resolve("<a><b id=\"2x\"/></a>").unwrap_err();
        assert_eq!(bad.kind, ErrorKind::Grammar);
    }

    fn skeleton(text: &str) -> Result<Framework> {
        let doc = load(text);
        validate_skeleton(&doc).map(|f| f.framework)
    }

    const CSP_OK: &str = "<instance format=\"XCSP3\" type=\"CSP\"><variables><var id=\"x\">0 1</var></variables><constraints/></instance>";

    #[test]
    fn skeleton_accepts_csp_and_cop() {
        assert_eq!(skeleton(CSP_OK).unwrap(), Framework::Csp);
        let cop = "<instance format=\"XCSP3\" type=\"COP\"><variables><var id=\"x\">0 1</var></variables><constraints/><objectives><minimize>x</minimize></objectives></instance>";
        assert_eq!(skeleton(cop).unwrap(), Framework::Cop);
    }

    #[test]
    fn skeleton_framework_errors() {
        let missing_type = "<instance format=\"XCSP3\"><variables><var id=\"x\">0</var></variables><constraints/></instance>";
        assert_eq!(skeleton(missing_type).unwrap_err().kind, ErrorKind::Structure);
        let missing_format = "<instance type=\"CSP\"><variables><var id=\"x\">0</var></variables><constraints/></instance>";
        assert!(skeleton(missing_format).unwrap_err().to_string().contains("format"));
        let wcsp = CSP_OK.replace("\"CSP\"", "\"WCSP\"");
        assert_eq!(skeleton(&wcsp).unwrap_err().kind, ErrorKind::Unsupported);
        let qcsp_plus = CSP_OK.replace("\"CSP\"", "\"QCSP+\"");
        assert_eq!(skeleton(&qcsp_plus).unwrap_err().kind, ErrorKind::Unsupported);
        let unknown = CSP_OK.replace("\"CSP\"", "\"FOO\"");
        assert_eq!(skeleton(&unknown).unwrap_err().kind, ErrorKind::Structure);
    }

    #[test]
    fn skeleton_block_errors() {
        let no_vars = "<instance format=\"XCSP3\" type=\"CSP\"><constraints/></instance>";
        assert!(skeleton(no_vars).unwrap_err().to_string().contains("<variables>"));
        let empty_vars = "<instance format=\"XCSP3\" type=\"CSP\"><variables></variables><constraints/></instance>";
        assert!(skeleton(empty_vars).unwrap_err().to_string().contains("at least one"));
        let wrong_order = "<instance format=\"XCSP3\" type=\"CSP\"><constraints/><variables><var id=\"x\">0</var></variables></instance>";
        assert_eq!(skeleton(wrong_order).unwrap_err().kind, ErrorKind::Structure);
        let csp_with_obj = "<instance format=\"XCSP3\" type=\"CSP\"><variables><var id=\"x\">0 1</var></variables><constraints/><objectives><minimize>x</minimize></objectives></instance>";
        assert!(skeleton(csp_with_obj).unwrap_err().to_string().contains("CSP"));
        let cop_without_obj = "<instance format=\"XCSP3\" type=\"COP\"><variables><var id=\"x\">0 1</var></variables><constraints/></instance>";
        assert!(skeleton(cop_without_obj).unwrap_err().to_string().contains("requires"));
        let empty_obj = "<instance format=\"XCSP3\" type=\"COP\"><variables><var id=\"x\">0 1</var></variables><constraints/><objectives/></instance>";
        assert!(skeleton(empty_obj).unwrap_err().to_string().contains("minimize or maximize"));
    }

    #[test]
    fn skeleton_rejects_reification() {
        let text = "<instance format=\"XCSP3\" type=\"CSP\"><variables><var id=\"x\">0 1</var></variables><constraints><intension reifiedBy=\"b\">eq(x,1)</intension></constraints></instance>";
        let doc = load(text);
        let e = validate_skeleton(&doc).unwrap_err();
        assert_eq!(e.kind, ErrorKind::Unsupported);
        assert!(e.to_string().contains("reifiedBy"));
        for attr in ["hreifiedFrom", "hreifiedTo", "hrefifiedFrom", "hrefifiedTo"] {
            let t = text.replace("reifiedBy", attr);
            let doc = load(&t);
            assert_eq!(validate_skeleton(&doc).unwrap_err().kind, ErrorKind::Unsupported);
        }
    }
}
