//! Parsing, validation, solution checking, exhaustive solving and JSON
//! rendering for XCSP3-core instances over integer variables.
//!
//! The crate is organized as a pipeline:
//!
//! - [`xml`] loads a document into a raw element tree and validates the
//!   instance skeleton (root attributes, section order, `as` aliases);
//! - [`model`] turns the tree into a typed [`model::Instance`]: variable
//!   arrays are flattened into cells, groups, blocks and `slide` are
//!   expanded, and every constraint is normalized;
//! - [`semantics`] evaluates functional expressions and decides whether a
//!   constraint holds under a (partial) assignment;
//! - [`checker`] parses candidate solutions and produces a [`checker::Verdict`]
//!   with a per-constraint account;
//! - [`solver`] searches instances exhaustively: find one solution, count
//!   them all, or prove an optimum by branch and bound;
//! - [`json`] renders any well-formed document as JSON.
//!
//! For the common case there are two one-call entry points:
//!
//! ```
//! let text = r#"
//! <instance format="XCSP3" type="CSP">
//!   <variables>
//!     <var id="x"> 1..3 </var>
//!     <var id="y"> 1..3 </var>
//!   </variables>
//!   <constraints>
//!     <intension> lt(x,y) </intension>
//!   </constraints>
//! </instance>"#;
//!
//! let instance = xcsp3::parse_instance_str(text)?;
//! let result = xcsp3::solver::solve(&instance, &xcsp3::solver::SearchConfig::default())?;
//! assert_eq!(result.status, xcsp3::solver::SolveStatus::Sat);
//! # Ok::<(), xcsp3::Error>(())
//! ```

pub mod checker;
pub mod error;
pub mod grammar;
pub mod json;
pub mod model;
pub mod semantics;
pub mod solver;
pub mod xml;

pub use error::{Error, ErrorKind, Location, Result};

use model::{BuildOptions, Instance};

/// Parses, validates and normalizes an instance from XML text.
pub fn parse_instance_str(text: &str) -> Result<Instance> {
    parse_instance_str_with(text, &BuildOptions::default())
}

/// Like [`parse_instance_str`], with explicit build options.
pub fn parse_instance_str_with(text: &str, options: &BuildOptions) -> Result<Instance> {
    let mut root = xml::load_document(text)?;
    xml::resolve_aliases(&mut root)?;
    let frame = xml::validate_skeleton(&root)?;
    model::build_instance(&frame, options)
}

/// Parses, validates and normalizes an instance from a file.
pub fn parse_instance_file(path: &std::path::Path) -> Result<Instance> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::xml(format!("cannot read {}: {e}", path.display())))?;
    let mut root = xml::load_document_bytes(&bytes)?;
    xml::resolve_aliases(&mut root)?;
    let frame = xml::validate_skeleton(&root)?;
    model::build_instance(&frame, &BuildOptions::default())
}
