//! Crate-wide error and diagnostic types.
//!
//! Every fallible operation in this crate returns [`Error`], which couples a
//! coarse [`ErrorKind`] (used to select process exit codes) with a
//! human-readable message and, whenever one is known, a source [`Location`]
//! in the XML document.

use std::fmt;

/// A position in a source document. Lines and columns are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Location {
    pub line: u32,
    pub column: u32,
}

impl Location {
    pub fn new(line: u32, column: u32) -> Self {
        Location { line, column }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}", self.line, self.column)
    }
}

/// Coarse failure classification.
///
/// The variants map onto stable process exit codes: malformed input
/// (`Xml`/`Grammar`/`Structure`) exits 1, deliberately unsupported features
/// exit 2, and exhausted budgets or internal faults exit 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorKind {
    /// Lexical or well-formedness problems in the XML byte stream.
    Xml,
    /// Element or attribute text that violates the token grammar
    /// (domains, conditions, tuples, functional expressions, ...).
    Grammar,
    /// Structurally invalid documents: wrong or missing elements, bad
    /// arities, dangling references.
    Structure,
    /// Recognized but deliberately unsupported features (frameworks,
    /// variable kinds, constraint families outside the integer core).
    Unsupported,
    /// A search budget (nodes or seconds) ran out before an answer.
    Budget,
    /// Internal invariant violations and evaluation faults that are not the
    /// user's fault (e.g. arithmetic overflow while checking).
    Internal,
}

impl ErrorKind {
    /// Stable exit code for command-line front ends.
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Xml | ErrorKind::Grammar | ErrorKind::Structure => 1,
            ErrorKind::Unsupported => 2,
            ErrorKind::Budget | ErrorKind::Internal => 3,
        }
    }

    /// Short lowercase label used in rendered diagnostics.
    pub fn label(self) -> &'static str {
        match self {
            ErrorKind::Xml => "xml",
            ErrorKind::Grammar => "grammar",
            ErrorKind::Structure => "structure",
            ErrorKind::Unsupported => "unsupported",
            ErrorKind::Budget => "budget",
            ErrorKind::Internal => "internal",
        }
    }
}

/// The crate-wide error type.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{}{}", fmt_location(.location), .message)]
pub struct Error {
    pub kind: ErrorKind,
    pub message: String,
    pub location: Option<Location>,
}

fn fmt_location(location: &Option<Location>) -> String {
    match location {
        Some(loc) => format!("{loc}: "),
        None => String::new(),
    }
}

impl Error {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Error { kind, message: message.into(), location: None }
    }

    pub fn xml(message: impl Into<String>) -> Self {
        Error::new(ErrorKind::Xml, message)
    }

    pub fn grammar(message: impl Into<String>) -> Self {
        Error::new(ErrorKind::Grammar, message)
    }

    pub fn structure(message: impl Into<String>) -> Self {
        Error::new(ErrorKind::Structure, message)
    }

    pub fn unsupported(message: impl Into<String>) -> Self {
        Error::new(ErrorKind::Unsupported, message)
    }

    pub fn budget(message: impl Into<String>) -> Self {
        Error::new(ErrorKind::Budget, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Error::new(ErrorKind::Internal, message)
    }

    /// Attaches a location, keeping an already-present one.
    pub fn at(mut self, location: Location) -> Self {
        self.location.get_or_insert(location);
        self
    }

    /// Attaches a location if one is given and none is present yet.
    pub fn at_opt(mut self, location: Option<Location>) -> Self {
        if let Some(loc) = location {
            self.location.get_or_insert(loc);
        }
        self
    }
}

pub type Result<T> = std::result::Result<T, Error>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_with_and_without_location() {
        let plain = Error::grammar("bad token");
        assert_eq!(plain.to_string(), "bad token");
        let located = plain.at(Location::new(3, 7));
        assert_eq!(located.to_string(), "line 3, column 7: bad token");
    }

    #[test]
    fn at_keeps_first_location() {
        let e = Error::structure("x").at(Location::new(1, 1)).at(Location::new(9, 9));
        assert_eq!(e.location, Some(Location::new(1, 1)));
    }

    #[test]
    fn exit_codes_are_stable() {
        assert_eq!(ErrorKind::Xml.exit_code(), 1);
        assert_eq!(ErrorKind::Grammar.exit_code(), 1);
        assert_eq!(ErrorKind::Structure.exit_code(), 1);
        assert_eq!(ErrorKind::Unsupported.exit_code(), 2);
        assert_eq!(ErrorKind::Budget.exit_code(), 3);
        assert_eq!(ErrorKind::Internal.exit_code(), 3);
    }
}
