//! JSON rendition of XCSP3 documents.
//!
//! The translation mirrors the XML structure directly rather than the typed
//! model, so it works on any well-formed document, validated or not:
//!
//! - every attribute becomes a property whose name is the attribute name
//!   prefixed with `@`;
//! - an element without attributes and without children becomes `null`, or
//!   its textual content when there is one;
//! - otherwise the element becomes an object listing its attributes, its
//!   text node (under a name that depends on the parent element), and its
//!   children, preserving document order;
//! - a run of consecutive same-named siblings collapses into a single
//!   property holding an array;
//! - the root `instance` element is not represented: its attributes and
//!   children are emitted at the top level.
//!
//! Since sibling runs with the same name may appear more than once (say,
//! `intension`, `extension`, `intension`), the default output can contain
//! duplicate keys. That is legal JSON but many decoders silently keep only
//! the last occurrence, so [`document_to_json`] also offers a safe mode
//! that merges all same-named siblings into one array placed where the
//! first of them occurred. Safe mode no longer preserves the relative
//! order between differently-named siblings.

use crate::xml::RawElement;

/// A JSON value produced by the converter.
///
/// Objects are kept as ordered property lists because the default rendition
/// may legitimately repeat a key; a map type would lose those duplicates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum JsonValue {
    Null,
    Str(String),
    Arr(Vec<JsonValue>),
    Obj(Vec<(String, JsonValue)>),
}

impl JsonValue {
    /// Serializes the value with two-space indentation and a trailing newline.
    pub fn to_pretty(&self) -> String {
        let mut out = String::new();
        write_value(self, 0, &mut out);
        out.push('\n');
        out
    }
}

/// Converts a whole document. The root element itself is dropped: its
/// attributes and children appear directly in the returned object.
pub fn document_to_json(root: &RawElement, safe_mode: bool) -> JsonValue {
    JsonValue::Obj(object_of(root, safe_mode))
}

/// Converts a single element to its JSON value.
pub fn element_to_json(el: &RawElement, safe_mode: bool) -> JsonValue {
    if el.attributes.is_empty() && el.children.is_empty() {
        if el.has_text() {
            JsonValue::Str(el.trimmed_text().to_string())
        } else {
            JsonValue::Null
        }
    } else {
        JsonValue::Obj(object_of(el, safe_mode))
    }
}

/// Builds the property list for an element rendered as an object:
/// attributes first, then the text node if any, then the children.
fn object_of(el: &RawElement, safe_mode: bool) -> Vec<(String, JsonValue)> {
    let mut props = Vec::new();
    for (name, value) in &el.attributes {
        props.push((format!("@{name}"), JsonValue::Str(value.clone())));
    }
    if el.has_text() {
        props.push((
            text_key(el).to_string(),
            JsonValue::Str(el.trimmed_text().to_string()),
        ));
    }
    if safe_mode {
        group_all(&el.children, safe_mode, &mut props);
    } else {
        group_runs(&el.children, safe_mode, &mut props);
    }
    props
}

/// Property name used for an element's text node when the element is
/// rendered as an object. A handful of elements use a meaningful name in
/// place of the generic `#text`.
fn text_key(el: &RawElement) -> &'static str {
    match el.name.as_str() {
        "var" | "array" => "domain",
        "intension" => "function",
        "minimize" | "maximize" => match el.attr("type") {
            None | Some("expression") => "expression",
            Some(_) => "list",
        },
        "allDifferent" | "allEqual" | "ordered" | "channel" | "circuit" | "clause" | "cube"
        | "allIntersecting" => "list",
        _ => "#text",
    }
}

/// Default grouping: each maximal run of consecutive same-named siblings
/// becomes one property, an array when the run has two or more elements.
fn group_runs(children: &[RawElement], safe_mode: bool, props: &mut Vec<(String, JsonValue)>) {
    let mut i = 0;
    while i < children.len() {
        let name = &children[i].name;
        let mut j = i + 1;
        while j < children.len() && children[j].name == *name {
            j += 1;
        }
        let run: Vec<JsonValue> = children[i..j]
            .iter()
            .map(|c| element_to_json(c, safe_mode))
            .collect();
        props.push((name.clone(), wrap_run(run)));
        i = j;
    }
}

/// Safe-mode grouping: all same-named siblings are merged into one property
/// placed at the position of the first of them, so every key is unique.
fn group_all(children: &[RawElement], safe_mode: bool, props: &mut Vec<(String, JsonValue)>) {
    let mut order: Vec<&str> = Vec::new();
    for child in children {
        if !order.contains(&child.name.as_str()) {
            order.push(&child.name);
        }
    }
    for name in order {
        let run: Vec<JsonValue> = children
            .iter()
            .filter(|c| c.name == name)
            .map(|c| element_to_json(c, safe_mode))
            .collect();
        props.push((name.to_string(), wrap_run(run)));
    }
}

fn wrap_run(mut run: Vec<JsonValue>) -> JsonValue {
    if run.len() == 1 {
        run.pop().unwrap()
    } else {
        JsonValue::Arr(run)
    }
}

fn write_value(value: &JsonValue, depth: usize, out: &mut String) {
    match value {
        JsonValue::Null => out.push_str("null"),
        JsonValue::Str(s) => write_string(s, out),
        JsonValue::Arr(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push('\n');
                indent(depth + 1, out);
                write_value(item, depth + 1, out);
            }
            out.push('\n');
            indent(depth, out);
            out.push(']');
        }
        JsonValue::Obj(props) => {
            if props.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push('{');
            for (i, (key, val)) in props.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push('\n');
                indent(depth + 1, out);
                write_string(key, out);
                out.push_str(": ");
                write_value(val, depth + 1, out);
            }
            out.push('\n');
            indent(depth, out);
            out.push('}');
        }
    }
}

fn write_string(s: &str, out: &mut String) {
    out.push('"');
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => {
                out.push_str(&format!("\\u{:04x}", c as u32));
            }
            c => out.push(c),
        }
    }
    out.push('"');
}

fn indent(depth: usize, out: &mut String) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::xml::load_document;

    fn parse(text: &str) -> RawElement {
        load_document(text).unwrap()
    }

    #[test]
    fn leaf_elements_become_null_or_text() {
        let root = parse("<instance format=\"XCSP3\" type=\"CSP\"><annotations/></instance>");
        let json = document_to_json(&root, false);
        assert_eq!(
            json,
            JsonValue::Obj(vec![
                ("@format".into(), JsonValue::Str("XCSP3".into())),
                ("@type".into(), JsonValue::Str("CSP".into())),
                ("annotations".into(), JsonValue::Null),
            ])
        );

        let el = parse("<intension> eq(x,0) </intension>");
        assert_eq!(
            element_to_json(&el, false),
            JsonValue::Str("eq(x,0)".into())
        );
    }

    #[test]
    fn attributes_and_text_nodes_share_an_object() {
        let el = parse("<var id=\"x\"> 0..10 </var>");
        assert_eq!(
            element_to_json(&el, false),
            JsonValue::Obj(vec![
                ("@id".into(), JsonValue::Str("x".into())),
                ("domain".into(), JsonValue::Str("0..10".into())),
            ])
        );
    }

    #[test]
    fn text_node_names_depend_on_the_parent() {
        let cases = [
            ("<array id=\"t\" size=\"[3]\"> 1..5 </array>", "domain"),
            ("<intension id=\"c\"> eq(x,0) </intension>", "function"),
            ("<minimize id=\"o\"> add(x,y) </minimize>", "expression"),
            (
                "<minimize id=\"o\" type=\"expression\"> add(x,y) </minimize>",
                "expression",
            ),
            ("<minimize id=\"o\" type=\"sum\"> x y z </minimize>", "list"),
            ("<maximize id=\"o\" type=\"maximum\"> x y </maximize>", "list"),
            ("<allDifferent id=\"c\"> x y z </allDifferent>", "list"),
            ("<circuit id=\"c\"> x y z </circuit>", "list"),
            ("<clause id=\"c\"> x not(y) </clause>", "list"),
            ("<group id=\"g\"> oops </group>", "#text"),
        ];
        for (text, key) in cases {
            let el = parse(text);
            match element_to_json(&el, false) {
                JsonValue::Obj(props) => {
                    assert!(
                        props.iter().any(|(k, _)| k == key),
                        "expected key {key} for {text}, got {props:?}"
                    );
                }
                other => panic!("expected object for {text}, got {other:?}"),
            }
        }
    }

    #[test]
    fn consecutive_siblings_collapse_into_arrays() {
        let el = parse(
            "<elt><a> text1 </a><a att=\"val\"> text2 </a><b> text3 </b><a> text4 </a></elt>",
        );
        assert_eq!(
            element_to_json(&el, false),
            JsonValue::Obj(vec![
                (
                    "a".into(),
                    JsonValue::Arr(vec![
                        JsonValue::Str("text1".into()),
                        JsonValue::Obj(vec![
                            ("@att".into(), JsonValue::Str("val".into())),
                            ("#text".into(), JsonValue::Str("text2".into())),
                        ]),
                    ])
                ),
                ("b".into(), JsonValue::Str("text3".into())),
                ("a".into(), JsonValue::Str("text4".into())),
            ])
        );
    }

    #[test]
    fn safe_mode_merges_all_same_named_siblings() {
        let el = parse(
            "<constraints>\
             <intension> eq(x,0) </intension>\
             <extension><list> t[0] t[1] </list><supports> (2,4)(3,5) </supports></extension>\
             <intension> le(y,z) </intension>\
             </constraints>",
        );
        assert_eq!(
            element_to_json(&el, true),
            JsonValue::Obj(vec![
                (
                    "intension".into(),
                    JsonValue::Arr(vec![
                        JsonValue::Str("eq(x,0)".into()),
                        JsonValue::Str("le(y,z)".into()),
                    ])
                ),
                (
                    "extension".into(),
                    JsonValue::Obj(vec![
                        ("list".into(), JsonValue::Str("t[0] t[1]".into())),
                        ("supports".into(), JsonValue::Str("(2,4)(3,5)".into())),
                    ])
                ),
            ])
        );
    }

    #[test]
    fn root_element_is_not_represented() {
        let root = parse(
            "<instance format=\"XCSP3\" type=\"CSP\">\
             <variables><var id=\"x\"> 0..10 </var></variables>\
             <constraints/>\
             </instance>",
        );
        let rendered = document_to_json(&root, false).to_pretty();
        assert_eq!(
            rendered,
            "{\n  \"@format\": \"XCSP3\",\n  \"@type\": \"CSP\",\n  \"variables\": {\n    \"var\": {\n      \"@id\": \"x\",\n      \"domain\": \"0..10\"\n    }\n  },\n  \"constraints\": null\n}\n"
        );
    }

    #[test]
    fn strings_are_escaped() {
        let val = JsonValue::Obj(vec![(
            "k\"ey".into(),
            JsonValue::Str("a\\b\nc\u{1}".into()),
        )]);
        assert_eq!(
            val.to_pretty(),
            "{\n  \"k\\\"ey\": \"a\\\\b\\nc\\u0001\"\n}\n"
        );
    }

    #[test]
    fn empty_containers_render_compactly() {
        assert_eq!(JsonValue::Obj(vec![]).to_pretty(), "{}\n");
        assert_eq!(JsonValue::Arr(vec![]).to_pretty(), "[]\n");
        assert_eq!(JsonValue::Null.to_pretty(), "null\n");
    }
}
