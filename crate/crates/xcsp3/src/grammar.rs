//! Lexing and parsing of the textual micro-grammar found inside element
//! content and attribute values: integers, intervals, domains, numerical
//! conditions, value tuples, variable accesses and functional expressions.
//!
//! All parsers here are strict about whitespace: tokens such as intervals,
//! conditions and functional expressions must not contain any whitespace
//! character, and value tuples allow whitespace between tuples but never
//! inside one.

use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Identifiers and reserved words
// ---------------------------------------------------------------------------

/// Reserved words that may not be used as identifiers (variable, array,
/// constraint or group ids). These are the operator and function names of
/// the expression language plus the special tokens `others`, `PI` and `E`.
pub const KEYWORDS: &[&str] = &[
    "neg", "abs", "add", "sub", "mul", "div", "mod", "sqr", "pow", "min", "max", "dist",
    "lt", "le", "ge", "gt", "ne", "eq", "set", "in", "not", "and", "or", "xor", "iff",
    "imp", "if", "card", "union", "inter", "diff", "sdiff", "hull", "djoint", "subset",
    "subseq", "supseq", "supset", "convex", "fdiv", "fmod", "sqrt", "nroot", "exp", "ln",
    "log", "sin", "cos", "tan", "asin", "acos", "atan", "sinh", "cosh", "tanh", "PI", "E",
    "others",
];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.contains(&word)
}

/// An identifier is a letter followed by letters, digits or underscores.
pub fn is_identifier(text: &str) -> bool {
    let mut chars = text.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Validates an id attribute value: identifier syntax and not a keyword.
pub fn validate_id(text: &str) -> Result<()> {
    if !is_identifier(text) {
        return Err(Error::grammar(format!("\"{text}\" is not a valid identifier")));
    }
    if is_keyword(text) {
        return Err(Error::grammar(format!("\"{text}\" is a reserved word and cannot be used as an id")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Integers, bounds and intervals
// ---------------------------------------------------------------------------

/// Parses a signed 64-bit integer. No whitespace, no stray characters.
pub fn parse_integer(text: &str) -> Result<i64> {
    if text.is_empty() {
        return Err(Error::grammar("empty integer token"));
    }
    text.parse::<i64>()
        .map_err(|_| Error::grammar(format!("\"{text}\" is not a valid integer")))
}

/// One end of an integer interval: finite or an infinity.
///
/// The derived ordering places `NegInf` below every `Finite` value and
/// `PosInf` above, which is exactly the numeric order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Bound {
    NegInf,
    Finite(i64),
    PosInf,
}

impl Bound {
    pub fn finite(self) -> Option<i64> {
        match self {
            Bound::Finite(v) => Some(v),
            _ => None,
        }
    }
}

impl std::fmt::Display for Bound {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Bound::NegInf => write!(f, "-infinity"),
            Bound::Finite(v) => write!(f, "{v}"),
            Bound::PosInf => write!(f, "+infinity"),
        }
    }
}

/// An integer interval `lo..hi`, possibly unbounded on either side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IntInterval {
    pub lo: Bound,
    pub hi: Bound,
}

impl IntInterval {
    /// A finite interval. Panics if `lo > hi`; use [`parse_interval`] for
    /// untrusted input.
    pub fn finite(lo: i64, hi: i64) -> Self {
        assert!(lo <= hi, "interval bounds out of order");
        IntInterval { lo: Bound::Finite(lo), hi: Bound::Finite(hi) }
    }

    pub fn singleton(v: i64) -> Self {
        IntInterval::finite(v, v)
    }

    pub fn contains(&self, v: i64) -> bool {
        self.lo <= Bound::Finite(v) && Bound::Finite(v) <= self.hi
    }

    pub fn is_finite(&self) -> bool {
        matches!((self.lo, self.hi), (Bound::Finite(_), Bound::Finite(_)))
    }

    /// Number of values in the interval, `None` when unbounded.
    pub fn size(&self) -> Option<u64> {
        match (self.lo, self.hi) {
            (Bound::Finite(lo), Bound::Finite(hi)) => Some((hi as i128 - lo as i128 + 1) as u64),
            _ => None,
        }
    }
}

impl std::fmt::Display for IntInterval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if let (Bound::Finite(lo), Bound::Finite(hi)) = (self.lo, self.hi) {
            if lo == hi {
                return write!(f, "{lo}");
            }
        }
        write!(f, "{}..{}", self.lo, self.hi)
    }
}

/// Parses an interval token such as `1..3` or `0..+infinity`.
///
/// Whitespace anywhere in the token (e.g. `1 .. 10`) is rejected, the
/// infinities require their sign, and the bounds must be ordered.
pub fn parse_interval(text: &str) -> Result<IntInterval> {
    if text.chars().any(char::is_whitespace) {
        return Err(Error::grammar(format!("interval \"{text}\" must not contain whitespace")));
    }
    let (lo_text, hi_text) = text
        .split_once("..")
        .ok_or_else(|| Error::grammar(format!("\"{text}\" is not an interval (missing \"..\")")))?;
    if hi_text.contains("..") {
        return Err(Error::grammar(format!("interval \"{text}\" has more than one \"..\"")));
    }
    let lo = match lo_text {
        "-infinity" => Bound::NegInf,
        "+infinity" | "infinity" => {
            return Err(Error::grammar(format!("\"{lo_text}\" cannot be the lower bound of an interval")));
        }
        _ => Bound::Finite(parse_integer(lo_text)?),
    };
    let hi = match hi_text {
        "+infinity" => Bound::PosInf,
        "-infinity" | "infinity" => {
            return Err(Error::grammar(format!("\"{hi_text}\" cannot be the upper bound of an interval")));
        }
        _ => Bound::Finite(parse_integer(hi_text)?),
    };
    if lo > hi {
        return Err(Error::grammar(format!("interval \"{text}\" has its bounds out of order")));
    }
    Ok(IntInterval { lo, hi })
}

/// Parses a token that is either a single integer or an interval.
pub fn parse_value_or_interval(token: &str) -> Result<IntInterval> {
    if token.contains("..") {
        parse_interval(token)
    } else {
        Ok(IntInterval::singleton(parse_integer(token)?))
    }
}

// ---------------------------------------------------------------------------
// Domains
// ---------------------------------------------------------------------------

/// The value set of one integer variable: an ordered sequence of pairwise
/// disjoint intervals with strictly increasing bounds. May be empty, and may
/// be unbounded on either side.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Domain {
    ranges: Vec<IntInterval>,
}

impl Domain {
    pub fn empty() -> Self {
        Domain { ranges: Vec::new() }
    }

    /// Builds a domain from ranges, validating order and disjointness.
    pub fn from_ranges(ranges: Vec<IntInterval>) -> Result<Self> {
        for pair in ranges.windows(2) {
            if pair[0].hi >= pair[1].lo {
                return Err(Error::grammar(format!(
                    "domain values must be given in strictly increasing order (\"{}\" then \"{}\")",
                    pair[0], pair[1]
                )));
            }
        }
        Ok(Domain { ranges })
    }

    pub fn ranges(&self) -> &[IntInterval] {
        &self.ranges
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.ranges.iter().all(IntInterval::is_finite)
    }

    /// Number of values, `None` when some range is unbounded. Saturates at
    /// `u64::MAX` for absurdly wide finite domains.
    pub fn size(&self) -> Option<u64> {
        let mut total: u64 = 0;
        for r in &self.ranges {
            total = total.saturating_add(r.size()?);
        }
        Some(total)
    }

    pub fn contains(&self, v: i64) -> bool {
        // Binary search on the lower bounds, then a containment check.
        let idx = self.ranges.partition_point(|r| r.lo <= Bound::Finite(v));
        idx > 0 && self.ranges[idx - 1].contains(v)
    }

    /// Iterates over all values in increasing order.
    ///
    /// Panics if the domain is unbounded; callers must check
    /// [`Domain::is_finite`] first.
    pub fn iter(&self) -> impl Iterator<Item = i64> + '_ {
        self.ranges.iter().flat_map(|r| {
            match (r.lo, r.hi) {
                (Bound::Finite(lo), Bound::Finite(hi)) => lo..=hi,
                _ => panic!("cannot enumerate an unbounded domain"),
            }
        })
    }

    /// Smallest and largest value, `None` when empty.
    pub fn bounds(&self) -> Option<(Bound, Bound)> {
        match (self.ranges.first(), self.ranges.last()) {
            (Some(first), Some(last)) => Some((first.lo, last.hi)),
            _ => None,
        }
    }

    /// Canonical text rendering, e.g. `-6..-2 0 1..3`.
    pub fn to_text(&self) -> String {
        let parts: Vec<String> = self.ranges.iter().map(|r| r.to_string()).collect();
        parts.join(" ")
    }
}

/// Parses domain text: whitespace-separated integers and intervals in
/// strictly increasing order. Empty text yields the empty domain.
pub fn parse_domain(text: &str) -> Result<Domain> {
    let mut ranges = Vec::new();
    for token in text.split_whitespace() {
        ranges.push(parse_value_or_interval(token)?);
    }
    Domain::from_ranges(ranges)
}

// ---------------------------------------------------------------------------
// Variable accesses
// ---------------------------------------------------------------------------

/// One bracket group of a variable access.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Indexer {
    /// `[3]`
    Index(i64),
    /// `[2..5]`
    Range(i64, i64),
    /// `[]`
    Full,
}

/// A variable reference: a base identifier plus zero or more indexers.
/// `x`, `x[3]`, `y[2..3][0..1]` and `z[]` are all accesses.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VarAccess {
    pub base: String,
    pub indexers: Vec<Indexer>,
}

impl VarAccess {
    pub fn scalar(base: impl Into<String>) -> Self {
        VarAccess { base: base.into(), indexers: Vec::new() }
    }

    /// True when every indexer picks a single cell.
    pub fn is_single_cell(&self) -> bool {
        self.indexers.iter().all(|ix| matches!(ix, Indexer::Index(_)))
    }
}

impl std::fmt::Display for VarAccess {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.base)?;
        for ix in &self.indexers {
            match ix {
                Indexer::Index(i) => write!(f, "[{i}]")?,
                Indexer::Range(a, b) => write!(f, "[{a}..{b}]")?,
                Indexer::Full => write!(f, "[]")?,
            }
        }
        Ok(())
    }
}

/// Parses a variable access token. Indexes must be nonnegative.
pub fn parse_var_access(text: &str) -> Result<VarAccess> {
    if text.chars().any(char::is_whitespace) {
        return Err(Error::grammar(format!("variable access \"{text}\" must not contain whitespace")));
    }
    let bracket = text.find('[').unwrap_or(text.len());
    let (base, mut rest) = text.split_at(bracket);
    if !is_identifier(base) {
        return Err(Error::grammar(format!("\"{text}\" is not a valid variable access")));
    }
    let mut indexers = Vec::new();
    while !rest.is_empty() {
        if !rest.starts_with('[') {
            return Err(Error::grammar(format!("malformed brackets in \"{text}\"")));
        }
        let close = rest
            .find(']')
            .ok_or_else(|| Error::grammar(format!("unclosed bracket in \"{text}\"")))?;
        let inner = &rest[1..close];
        if inner.contains('[') {
            return Err(Error::grammar(format!("malformed brackets in \"{text}\"")));
        }
        let indexer = if inner.is_empty() {
            Indexer::Full
        } else if let Some((a, b)) = inner.split_once("..") {
            let a = parse_integer(a)?;
            let b = parse_integer(b)?;
            if a < 0 || b < 0 {
                return Err(Error::grammar(format!("negative index in \"{text}\"")));
            }
            if a > b {
                return Err(Error::grammar(format!("index range out of order in \"{text}\"")));
            }
            Indexer::Range(a, b)
        } else {
            let i = parse_integer(inner)?;
            if i < 0 {
                return Err(Error::grammar(format!("negative index in \"{text}\"")));
            }
            Indexer::Index(i)
        };
        indexers.push(indexer);
        rest = &rest[close + 1..];
    }
    Ok(VarAccess { base: base.to_string(), indexers })
}

// ---------------------------------------------------------------------------
// Numerical conditions
// ---------------------------------------------------------------------------

/// Operator of a numerical condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CondOp {
    Lt,
    Le,
    Ge,
    Gt,
    Eq,
    Ne,
    In,
    NotIn,
}

impl CondOp {
    pub fn name(self) -> &'static str {
        match self {
            CondOp::Lt => "lt",
            CondOp::Le => "le",
            CondOp::Ge => "ge",
            CondOp::Gt => "gt",
            CondOp::Eq => "eq",
            CondOp::Ne => "ne",
            CondOp::In => "in",
            CondOp::NotIn => "notin",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "lt" => CondOp::Lt,
            "le" => CondOp::Le,
            "ge" => CondOp::Ge,
            "gt" => CondOp::Gt,
            "eq" => CondOp::Eq,
            "ne" => CondOp::Ne,
            "in" => CondOp::In,
            "notin" => CondOp::NotIn,
            _ => return None,
        })
    }

    /// True for the six relational operators (which take a value or a
    /// variable operand); false for `in`/`notin` (interval or set operand).
    pub fn is_relational(self) -> bool {
        !matches!(self, CondOp::In | CondOp::NotIn)
    }
}

/// Operand of a numerical condition. `Cell` is the resolved form of `Var`
/// produced while building an instance.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum CondOperand {
    Value(i64),
    Var(VarAccess),
    Cell(usize),
    Interval(IntInterval),
    Set(Vec<i64>),
}

/// A numerical condition `(operator,operand)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Condition {
    pub op: CondOp,
    pub operand: CondOperand,
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},", self.op.name())?;
        match &self.operand {
            CondOperand::Value(v) => write!(f, "{v}")?,
            CondOperand::Var(a) => write!(f, "{a}")?,
            CondOperand::Cell(c) => write!(f, "<cell {c}>")?,
            CondOperand::Interval(r) => write!(f, "{}..{}", r.lo, r.hi)?,
            CondOperand::Set(vs) => {
                write!(f, "{{")?;
                for (i, v) in vs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{v}")?;
                }
                write!(f, "}}")?;
            }
        }
        write!(f, ")")
    }
}

/// Parses a numerical condition such as `(le,4000)`, `(gt,y)`,
/// `(in,2..5)` or `(notin,{1,2,3})`.
///
/// The text must not contain any whitespace; `(lt, 10)` is invalid.
pub fn parse_condition(text: &str) -> Result<Condition> {
    if text.chars().any(char::is_whitespace) {
        return Err(Error::grammar(format!("condition \"{text}\" must not contain whitespace")));
    }
    let inner = text
        .strip_prefix('(')
        .and_then(|t| t.strip_suffix(')'))
        .ok_or_else(|| Error::grammar(format!("condition \"{text}\" must be parenthesized")))?;
    let (op_text, operand_text) = inner
        .split_once(',')
        .ok_or_else(|| Error::grammar(format!("condition \"{text}\" must contain a comma")))?;
    let op = CondOp::from_name(op_text)
        .ok_or_else(|| Error::grammar(format!("unknown condition operator \"{op_text}\"")))?;
    let operand = parse_cond_operand(operand_text)?;
    let class_ok = match (&operand, op.is_relational()) {
        (CondOperand::Value(_) | CondOperand::Var(_), true) => true,
        (CondOperand::Interval(_) | CondOperand::Set(_), false) => true,
        _ => false,
    };
    if !class_ok {
        return Err(Error::grammar(format!(
            "operator \"{}\" cannot take operand \"{operand_text}\"",
            op.name()
        )));
    }
    Ok(Condition { op, operand })
}

fn parse_cond_operand(text: &str) -> Result<CondOperand> {
    if text.is_empty() {
        return Err(Error::grammar("empty condition operand"));
    }
    if let Some(body) = text.strip_prefix('{').and_then(|t| t.strip_suffix('}')) {
        return Ok(CondOperand::Set(parse_comma_integers(body)?));
    }
    if let Some(body) = text.strip_prefix("set(").and_then(|t| t.strip_suffix(')')) {
        return Ok(CondOperand::Set(parse_comma_integers(body)?));
    }
    if text.contains("..") {
        return Ok(CondOperand::Interval(parse_interval(text)?));
    }
    if text.starts_with(|c: char| c.is_ascii_digit() || c == '-' || c == '+') {
        return Ok(CondOperand::Value(parse_integer(text)?));
    }
    let access = parse_var_access(text)?;
    if !access.is_single_cell() {
        return Err(Error::grammar(format!(
            "condition operand \"{text}\" must be a single variable"
        )));
    }
    Ok(CondOperand::Var(access))
}

fn parse_comma_integers(body: &str) -> Result<Vec<i64>> {
    if body.is_empty() {
        return Ok(Vec::new());
    }
    body.split(',').map(parse_integer).collect()
}

// ---------------------------------------------------------------------------
// Value tuples
// ---------------------------------------------------------------------------

/// One cell of an extension tuple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cell {
    Int(i64),
    Star,
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Star => write!(f, "*"),
        }
    }
}

/// Parses a tuple list such as `(0,1,0)(1,0,0)`.
///
/// Whitespace is tolerated between tuples but never inside one, all tuples
/// must share the same arity, and `*` cells are accepted only when
/// `allow_star` is set. Compressed cells (sets inside tuples) and smart
/// cells (expressions inside tuples) are rejected as unsupported.
pub fn parse_tuples(text: &str, allow_star: bool) -> Result<Vec<Vec<Cell>>> {
    let mut rows: Vec<Vec<Cell>> = Vec::new();
    let mut rest = text.trim_start();
    while !rest.is_empty() {
        let Some(tail) = rest.strip_prefix('(') else {
            return Err(Error::grammar(format!(
                "expected \"(\" at \"{}\" in tuple list",
                snippet(rest)
            )));
        };
        let close = tail
            .find(')')
            .ok_or_else(|| Error::grammar("unclosed \"(\" in tuple list"))?;
        let inner = &tail[..close];
        if inner.chars().any(char::is_whitespace) {
            return Err(Error::grammar(format!(
                "whitespace inside tuple \"({inner})\" is not allowed"
            )));
        }
        let mut row = Vec::new();
        for cell_text in inner.split(',') {
            row.push(parse_tuple_cell(cell_text, allow_star)?);
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::grammar(format!(
                    "tuple \"({inner})\" has arity {} but earlier tuples have arity {}",
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
        rest = tail[close + 1..].trim_start();
    }
    Ok(rows)
}

fn parse_tuple_cell(text: &str, allow_star: bool) -> Result<Cell> {
    if text == "*" {
        if !allow_star {
            return Err(Error::grammar("\"*\" is not allowed in this tuple list"));
        }
        return Ok(Cell::Star);
    }
    if text.starts_with('{') {
        return Err(Error::unsupported("compressed tuples (set cells) are not supported"));
    }
    if text.contains('(') || text.contains(')') {
        return Err(Error::unsupported("smart tuples (expression cells) are not supported"));
    }
    Ok(Cell::Int(parse_integer(text)?))
}

/// Checks the lexicographic-order and no-repetition rule on ordinary rows.
///
/// Returns a description of the first violation, or `None`. Tables
/// containing `*` cells are skipped: the ordering rule is defined for
/// ordinary tuples only.
pub fn tuple_order_violation(rows: &[Vec<Cell>]) -> Option<String> {
    if rows.iter().any(|r| r.contains(&Cell::Star)) {
        return None;
    }
    for pair in rows.windows(2) {
        let a: Vec<i64> = pair[0].iter().map(|c| match c { Cell::Int(v) => *v, Cell::Star => 0 }).collect();
        let b: Vec<i64> = pair[1].iter().map(|c| match c { Cell::Int(v) => *v, Cell::Star => 0 }).collect();
        if a >= b {
            let show = |r: &[i64]| {
                let cells: Vec<String> = r.iter().map(|v| v.to_string()).collect();
                format!("({})", cells.join(","))
            };
            return Some(format!(
                "tuples must be in lexicographic order without repetition: {} is followed by {}",
                show(&a),
                show(&b)
            ));
        }
    }
    None
}

/// Parses a list of parenthesized token tuples such as `(x1,y1)(x2,y2)`,
/// used for matrices, transitions and k-dimensional boxes. The same
/// whitespace rules apply as for value tuples; cells are returned verbatim.
pub fn parse_token_tuples(text: &str) -> Result<Vec<Vec<String>>> {
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut rest = text.trim_start();
    while !rest.is_empty() {
        let Some(tail) = rest.strip_prefix('(') else {
            return Err(Error::grammar(format!(
                "expected \"(\" at \"{}\" in tuple list",
                snippet(rest)
            )));
        };
        let close = tail
            .find(')')
            .ok_or_else(|| Error::grammar("unclosed \"(\" in tuple list"))?;
        let inner = &tail[..close];
        if inner.chars().any(char::is_whitespace) {
            return Err(Error::grammar(format!(
                "whitespace inside tuple \"({inner})\" is not allowed"
            )));
        }
        if inner.is_empty() {
            return Err(Error::grammar("empty tuple \"()\" in tuple list"));
        }
        rows.push(inner.split(',').map(str::to_string).collect());
        rest = tail[close + 1..].trim_start();
    }
    Ok(rows)
}

fn snippet(text: &str) -> String {
    let cut: String = text.chars().take(12).collect();
    if cut.len() < text.len() {
        format!("{cut}...")
    } else {
        cut
    }
}

// ---------------------------------------------------------------------------
// Functional expressions
// ---------------------------------------------------------------------------

/// Operators of the integer expression language.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    Neg,
    Abs,
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Sqr,
    Pow,
    Min,
    Max,
    Dist,
    Lt,
    Le,
    Ge,
    Gt,
    Ne,
    Eq,
    In,
    Not,
    And,
    Or,
    Xor,
    Iff,
    Imp,
    If,
}

impl Op {
    pub fn name(self) -> &'static str {
        match self {
            Op::Neg => "neg",
            Op::Abs => "abs",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::Mod => "mod",
            Op::Sqr => "sqr",
            Op::Pow => "pow",
            Op::Min => "min",
            Op::Max => "max",
            Op::Dist => "dist",
            Op::Lt => "lt",
            Op::Le => "le",
            Op::Ge => "ge",
            Op::Gt => "gt",
            Op::Ne => "ne",
            Op::Eq => "eq",
            Op::In => "in",
            Op::Not => "not",
            Op::And => "and",
            Op::Or => "or",
            Op::Xor => "xor",
            Op::Iff => "iff",
            Op::Imp => "imp",
            Op::If => "if",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "neg" => Op::Neg,
            "abs" => Op::Abs,
            "add" => Op::Add,
            "sub" => Op::Sub,
            "mul" => Op::Mul,
            "div" => Op::Div,
            "mod" => Op::Mod,
            "sqr" => Op::Sqr,
            "pow" => Op::Pow,
            "min" => Op::Min,
            "max" => Op::Max,
            "dist" => Op::Dist,
            "lt" => Op::Lt,
            "le" => Op::Le,
            "ge" => Op::Ge,
            "gt" => Op::Gt,
            "ne" => Op::Ne,
            "eq" => Op::Eq,
            "in" => Op::In,
            "not" => Op::Not,
            "and" => Op::And,
            "or" => Op::Or,
            "xor" => Op::Xor,
            "iff" => Op::Iff,
            "imp" => Op::Imp,
            "if" => Op::If,
            _ => return None,
        })
    }

    /// Minimum and maximum argument counts.
    pub fn arity(self) -> (usize, Option<usize>) {
        match self {
            Op::Neg | Op::Abs | Op::Sqr | Op::Not => (1, Some(1)),
            Op::Sub | Op::Div | Op::Mod | Op::Pow | Op::Dist => (2, Some(2)),
            Op::Lt | Op::Le | Op::Ge | Op::Gt | Op::Ne | Op::In | Op::Imp => (2, Some(2)),
            Op::If => (3, Some(3)),
            Op::Add | Op::Mul | Op::Min | Op::Max | Op::Eq => (2, None),
            Op::And | Op::Or | Op::Xor | Op::Iff => (2, None),
        }
    }

    /// True when the operator produces a Boolean (0/1) result.
    pub fn is_boolean(self) -> bool {
        matches!(
            self,
            Op::Lt | Op::Le | Op::Ge | Op::Gt | Op::Ne | Op::Eq | Op::In
                | Op::Not | Op::And | Op::Or | Op::Xor | Op::Iff | Op::Imp
        )
    }

    /// True when the operator requires Boolean arguments (all of them).
    fn wants_boolean_args(self) -> bool {
        matches!(self, Op::Not | Op::And | Op::Or | Op::Xor | Op::Iff | Op::Imp)
    }
}

/// A node of the functional expression language.
///
/// `Var` holds an unresolved variable access as parsed from text; building
/// an instance replaces it with `Cell`, an index into the instance's cell
/// table. `Param`/`ParamRest` are the formal parameters `%k` and `%...` of
/// constraint templates.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expression {
    Const(i64),
    Var(VarAccess),
    Cell(usize),
    Param(usize),
    ParamRest,
    SetLit(Vec<i64>),
    Apply(Op, Vec<Expression>),
}

impl Expression {
    /// True when the node is usable where a Boolean is required.
    /// Variables count as Booleans (they may be 0/1 variables); integer
    /// constants do not.
    pub fn is_boolean(&self) -> bool {
        match self {
            Expression::Const(_) | Expression::SetLit(_) => false,
            Expression::Var(_) | Expression::Cell(_) => true,
            Expression::Param(_) | Expression::ParamRest => true,
            Expression::Apply(op, _) => op.is_boolean(),
        }
    }

    /// Largest `%k` index used, if any parameters occur.
    pub fn max_param(&self) -> Option<usize> {
        match self {
            Expression::Param(k) => Some(*k),
            Expression::Apply(_, args) => args.iter().filter_map(Expression::max_param).max(),
            _ => None,
        }
    }

    pub fn contains_param_rest(&self) -> bool {
        match self {
            Expression::ParamRest => true,
            Expression::Apply(_, args) => args.iter().any(Expression::contains_param_rest),
            _ => false,
        }
    }

    /// Collects every resolved cell index in the tree.
    pub fn collect_cells(&self, out: &mut Vec<usize>) {
        match self {
            Expression::Cell(c) => out.push(*c),
            Expression::Apply(_, args) => {
                for a in args {
                    a.collect_cells(out);
                }
            }
            _ => {}
        }
    }

    /// Canonical text rendering (no whitespace).
    pub fn to_text(&self) -> String {
        match self {
            Expression::Const(v) => v.to_string(),
            Expression::Var(a) => a.to_string(),
            Expression::Cell(c) => format!("<cell {c}>"),
            Expression::Param(k) => format!("%{k}"),
            Expression::ParamRest => "%...".to_string(),
            Expression::SetLit(vs) => {
                let parts: Vec<String> = vs.iter().map(|v| v.to_string()).collect();
                format!("set({})", parts.join(","))
            }
            Expression::Apply(op, args) => {
                let parts: Vec<String> = args.iter().map(Expression::to_text).collect();
                format!("{}({})", op.name(), parts.join(","))
            }
        }
    }
}

/// Parses a functional expression such as `eq(add(x,y),z)`.
///
/// The text must not contain any whitespace. `%k`/`%...` parameters are
/// accepted only when `allow_params` is set. Arities and argument kinds
/// are validated: Boolean operators require Boolean arguments, `set(...)`
/// literals may contain only integers and may appear only as the second
/// argument of `in`.
pub fn parse_expression(text: &str, allow_params: bool) -> Result<Expression> {
    if text.is_empty() {
        return Err(Error::grammar("empty expression"));
    }
    if text.chars().any(char::is_whitespace) {
        return Err(Error::grammar(format!("expression \"{text}\" must not contain whitespace")));
    }
    let mut parser = ExprParser { text, pos: 0, allow_params };
    let expr = parser.parse_node()?;
    if parser.pos != text.len() {
        return Err(Error::grammar(format!(
            "unexpected trailing characters \"{}\" in expression \"{text}\"",
            &text[parser.pos..]
        )));
    }
    validate_expression(&expr, false)?;
    Ok(expr)
}

struct ExprParser<'a> {
    text: &'a str,
    pos: usize,
    allow_params: bool,
}

impl<'a> ExprParser<'a> {
    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    fn bump(&mut self, n: usize) {
        self.pos += n;
    }

    fn parse_node(&mut self) -> Result<Expression> {
        let rest = self.rest();
        let first = rest
            .chars()
            .next()
            .ok_or_else(|| Error::grammar(format!("truncated expression \"{}\"", self.text)))?;
        if first == '%' {
            return self.parse_param();
        }
        if first.is_ascii_digit() || first == '-' || first == '+' {
            return self.parse_number();
        }
        if first.is_ascii_alphabetic() {
            return self.parse_word();
        }
        Err(Error::grammar(format!(
            "unexpected character \"{first}\" in expression \"{}\"",
            self.text
        )))
    }

    fn parse_param(&mut self) -> Result<Expression> {
        if !self.allow_params {
            return Err(Error::grammar(format!(
                "parameter in \"{}\" is only allowed inside a constraint template",
                self.text
            )));
        }
        self.bump(1);
        if self.rest().starts_with("...") {
            self.bump(3);
            return Ok(Expression::ParamRest);
        }
        let digits: String = self.rest().chars().take_while(|c| c.is_ascii_digit()).collect();
        if digits.is_empty() {
            return Err(Error::grammar(format!("malformed parameter in \"{}\"", self.text)));
        }
        self.bump(digits.len());
        let k: usize = digits
            .parse()
            .map_err(|_| Error::grammar(format!("parameter index out of range in \"{}\"", self.text)))?;
        Ok(Expression::Param(k))
    }

    fn parse_number(&mut self) -> Result<Expression> {
        let rest = self.rest();
        let mut len = 0;
        for (i, c) in rest.char_indices() {
            if i == 0 && (c == '-' || c == '+') {
                len = 1;
                continue;
            }
            if c.is_ascii_digit() {
                len = i + 1;
            } else {
                break;
            }
        }
        let token = &rest[..len];
        let value = parse_integer(token)?;
        self.bump(len);
        Ok(Expression::Const(value))
    }

    fn parse_word(&mut self) -> Result<Expression> {
        let rest = self.rest();
        let word_len = rest
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(rest.len());
        let word = &rest[..word_len];
        let after = &rest[word_len..];
        if after.starts_with('(') {
            self.bump(word_len + 1);
            if word == "set" {
                return self.parse_set();
            }
            let op = Op::from_name(word).ok_or_else(|| {
                Error::grammar(format!("unknown operator \"{word}\" in expression \"{}\"", self.text))
            })?;
            let mut args = vec![self.parse_node()?];
            loop {
                match self.rest().chars().next() {
                    Some(',') => {
                        self.bump(1);
                        args.push(self.parse_node()?);
                    }
                    Some(')') => {
                        self.bump(1);
                        break;
                    }
                    _ => {
                        return Err(Error::grammar(format!(
                            "expected \",\" or \")\" in expression \"{}\"",
                            self.text
                        )));
                    }
                }
            }
            return Ok(Expression::Apply(op, args));
        }
        // A bare word: a variable, possibly with constant indexes.
        self.bump(word_len);
        let mut indexers = Vec::new();
        while self.rest().starts_with('[') {
            let rest = self.rest();
            let close = rest
                .find(']')
                .ok_or_else(|| Error::grammar(format!("unclosed bracket in \"{}\"", self.text)))?;
            let inner = &rest[1..close];
            let i = parse_integer(inner).map_err(|_| {
                Error::grammar(format!(
                    "only single constant indexes are allowed inside expressions, found \"[{inner}]\""
                ))
            })?;
            if i < 0 {
                return Err(Error::grammar(format!("negative index in \"{}\"", self.text)));
            }
            indexers.push(Indexer::Index(i));
            self.bump(close + 1);
        }
        if !is_identifier(word) {
            return Err(Error::grammar(format!("\"{word}\" is not a valid identifier")));
        }
        Ok(Expression::Var(VarAccess { base: word.to_string(), indexers }))
    }

    fn parse_set(&mut self) -> Result<Expression> {
        // `set(` has been consumed; integers only, possibly empty.
        let mut values = Vec::new();
        if self.rest().starts_with(')') {
            self.bump(1);
            return Ok(Expression::SetLit(values));
        }
        loop {
            let rest = self.rest();
            let len = rest
                .find([',', ')'])
                .ok_or_else(|| Error::grammar(format!("unclosed set literal in \"{}\"", self.text)))?;
            let token = &rest[..len];
            let value = parse_integer(token).map_err(|_| {
                Error::grammar(format!("set literals may contain only integers, found \"{token}\""))
            })?;
            values.push(value);
            let sep = rest.as_bytes()[len];
            self.bump(len + 1);
            if sep == b')' {
                break;
            }
        }
        Ok(Expression::SetLit(values))
    }
}

fn validate_expression(expr: &Expression, bool_required: bool) -> Result<()> {
    match expr {
        Expression::SetLit(_) => Err(Error::grammar(
            "set(...) literals may appear only as the second argument of in(...)",
        )),
        Expression::Const(_) if bool_required => Err(Error::grammar(
            "an integer constant cannot be used where a Boolean expression is required",
        )),
        Expression::Apply(op, args) => {
            if bool_required && !op.is_boolean() {
                return Err(Error::grammar(format!(
                    "operator \"{}\" cannot be used where a Boolean expression is required",
                    op.name()
                )));
            }
            let (min, max) = op.arity();
            if args.len() < min || max.is_some_and(|m| args.len() > m) {
                let expected = match (min, max) {
                    (a, Some(b)) if a == b => format!("{a}"),
                    (a, Some(b)) => format!("{a}..{b}"),
                    (a, None) => format!("at least {a}"),
                };
                return Err(Error::grammar(format!(
                    "operator \"{}\" takes {expected} argument(s), found {}",
                    op.name(),
                    args.len()
                )));
            }
            match op {
                Op::In => {
                    validate_expression(&args[0], false)?;
                    match &args[1] {
                        Expression::SetLit(_) => Ok(()),
                        _ => Err(Error::grammar(
                            "the second argument of in(...) must be a set(...) literal",
                        )),
                    }
                }
                Op::If => {
                    validate_expression(&args[0], true)?;
                    validate_expression(&args[1], false)?;
                    validate_expression(&args[2], false)
                }
                _ => {
                    let want_bool = op.wants_boolean_args();
                    for a in args {
                        validate_expression(a, want_bool)?;
                    }
                    Ok(())
                }
            }
        }
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identifiers() {
        assert!(is_identifier("x"));
        assert!(is_identifier("row_2"));
        assert!(!is_identifier("2x"));
        assert!(!is_identifier("_x"));
        assert!(!is_identifier("x[1]"));
        assert!(validate_id("add").is_err());
        assert!(validate_id("others").is_err());
        assert!(validate_id("total").is_ok());
    }

    #[test]
    fn integers() {
        assert_eq!(parse_integer("42").unwrap(), 42);
        assert_eq!(parse_integer("-7").unwrap(), -7);
        assert_eq!(parse_integer("+7").unwrap(), 7);
        assert!(parse_integer("3.14").is_err());
        assert!(parse_integer("").is_err());
        assert!(parse_integer("99999999999999999999").is_err());
    }

    #[test]
    fn intervals() {
        assert_eq!(parse_interval("1..3").unwrap(), IntInterval::finite(1, 3));
        let unbounded = parse_interval("0..+infinity").unwrap();
        assert_eq!(unbounded.lo, Bound::Finite(0));
        assert_eq!(unbounded.hi, Bound::PosInf);
        assert_eq!(parse_interval("-infinity..4").unwrap().lo, Bound::NegInf);
        assert!(parse_interval("1 .. 10").is_err());
        assert!(parse_interval("5..2").is_err());
        assert!(parse_interval("infinity..2").is_err());
        assert!(parse_interval("1..infinity").is_err());
        assert!(parse_interval("1..2..3").is_err());
    }

    #[test]
    fn interval_display_roundtrip() {
        for text in ["1..3", "-6..-2", "0..+infinity", "-infinity..0", "7"] {
            let parsed = parse_value_or_interval(text).unwrap();
            assert_eq!(parsed.to_string(), text);
        }
    }

    #[test]
    fn domain_parsing() {
        let d = parse_domain("-6..-2 0 1..3 4 7 8..11").unwrap();
        assert_eq!(d.ranges().len(), 6);
        assert_eq!(d.size(), Some(15));
        assert!(d.contains(-4));
        assert!(d.contains(0));
        assert!(!d.contains(5));
        assert!(d.contains(11));
        let all: Vec<i64> = d.iter().collect();
        assert_eq!(all.len(), 15);
        assert!(all.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn domain_empty_and_order() {
        assert!(parse_domain("").unwrap().is_empty());
        assert!(parse_domain("0..10 10").is_err());
        assert!(parse_domain("5 3").is_err());
        assert!(parse_domain("1..3 3..5").is_err());
        // Adjacent but disjoint ranges are fine.
        assert!(parse_domain("1..3 4..6").is_ok());
    }

    #[test]
    fn domain_infinite() {
        let d = parse_domain("0..+infinity").unwrap();
        assert!(!d.is_finite());
        assert_eq!(d.size(), None);
        assert!(d.contains(1_000_000));
        assert!(!d.contains(-1));
    }

    #[test]
    fn domain_text_roundtrip() {
        for text in ["", "1..3", "-6..-2 0 1..3 4 7 8..11", "0..+infinity"] {
            let d = parse_domain(text).unwrap();
            assert_eq!(parse_domain(&d.to_text()).unwrap(), d);
        }
    }

    #[test]
    fn var_accesses() {
        let a = parse_var_access("y[2..3][0..1]").unwrap();
        assert_eq!(a.base, "y");
        assert_eq!(a.indexers, vec![Indexer::Range(2, 3), Indexer::Range(0, 1)]);
        let b = parse_var_access("x[3]").unwrap();
        assert_eq!(b.indexers, vec![Indexer::Index(3)]);
        let c = parse_var_access("y[2][]").unwrap();
        assert_eq!(c.indexers, vec![Indexer::Index(2), Indexer::Full]);
        assert_eq!(parse_var_access("x").unwrap(), VarAccess::scalar("x"));
        assert!(parse_var_access("x[-1]").is_err());
        assert!(parse_var_access("x[1").is_err());
        assert!(parse_var_access("x[3..1]").is_err());
        assert!(parse_var_access("x [1]").is_err());
    }

    #[test]
    fn var_access_display_roundtrip() {
        for text in ["x", "x[3]", "y[2..3][0..1]", "z[][2]"] {
            let a = parse_var_access(text).unwrap();
            assert_eq!(a.to_string(), text);
            assert_eq!(parse_var_access(&a.to_string()).unwrap(), a);
        }
    }

    #[test]
    fn conditions() {
        let c = parse_condition("(le,4000)").unwrap();
        assert_eq!(c.op, CondOp::Le);
        assert_eq!(c.operand, CondOperand::Value(4000));
        let c = parse_condition("(gt,y)").unwrap();
        assert_eq!(c.operand, CondOperand::Var(VarAccess::scalar("y")));
        let c = parse_condition("(in,2..5)").unwrap();
        assert_eq!(c.operand, CondOperand::Interval(IntInterval::finite(2, 5)));
        let c = parse_condition("(notin,{1,2,3})").unwrap();
        assert_eq!(c.operand, CondOperand::Set(vec![1, 2, 3]));
        // The appendix grammar spells sets as set(...); both are accepted.
        let c = parse_condition("(in,set(4,8))").unwrap();
        assert_eq!(c.operand, CondOperand::Set(vec![4, 8]));
    }

    #[test]
    fn condition_negatives() {
        assert!(parse_condition("(lt, 10)").is_err());
        assert!(parse_condition("(lt,10").is_err());
        assert!(parse_condition("lt,10").is_err());
        assert!(parse_condition("(lt,2..5)").is_err());
        assert!(parse_condition("(in,10)").is_err());
        assert!(parse_condition("(in,y)").is_err());
        assert!(parse_condition("(foo,10)").is_err());
    }

    #[test]
    fn condition_display_roundtrip() {
        for text in ["(le,4000)", "(gt,y)", "(in,2..5)", "(notin,{1,2,3})", "(eq,x[2])"] {
            let c = parse_condition(text).unwrap();
            assert_eq!(parse_condition(&c.to_string()).unwrap(), c);
        }
    }

    #[test]
    fn tuples() {
        let rows = parse_tuples("(0,1,0)(1,0,0)(1,1,0)(1,1,1)", false).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0], vec![Cell::Int(0), Cell::Int(1), Cell::Int(0)]);
        let short = parse_tuples("(1,*,1,2)(2,1,*,*)", true).unwrap();
        assert_eq!(short[0][1], Cell::Star);
        assert!(parse_tuples("(1, 3)(2,4)", false).is_err());
        assert!(parse_tuples("(1,2)(3,4,5)", false).is_err());
        assert!(parse_tuples("(1,*)", false).is_err());
        assert!(parse_tuples("(1,2", false).is_err());
        assert!(parse_tuples("1,2", false).is_err());
        assert_eq!(parse_tuples("", false).unwrap().len(), 0);
        // whitespace between tuples is tolerated
        assert_eq!(parse_tuples("  (1,2)\n\t(2,3)  ", false).unwrap().len(), 2);
    }

    #[test]
    fn tuples_compressed_and_smart_rejected() {
        let e = parse_tuples("(1,{2,3})", false).unwrap_err();
        assert_eq!(e.kind, crate::ErrorKind::Unsupported);
        let e = parse_tuples("(1,gt(2))", false).unwrap_err();
        assert_eq!(e.kind, crate::ErrorKind::Unsupported);
    }

    #[test]
    fn tuple_ordering_rule() {
        let ok = parse_tuples("(1,2)(1,3)(2,1)", false).unwrap();
        assert!(tuple_order_violation(&ok).is_none());
        let bad = parse_tuples("(1,3)(1,2)", false).unwrap();
        assert!(tuple_order_violation(&bad).is_some());
        let dup = parse_tuples("(1,2)(1,2)", false).unwrap();
        assert!(tuple_order_violation(&dup).is_some());
        // Tables with stars are exempt.
        let starred = parse_tuples("(2,*)(1,*)", true).unwrap();
        assert!(tuple_order_violation(&starred).is_none());
    }

    #[test]
    fn token_tuples() {
        let rows = parse_token_tuples("(x1,y1,z1)(x2,y2,z2)").unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0], vec!["x1", "y1", "z1"]);
        assert!(parse_token_tuples("(x1, y1)").is_err());
        assert!(parse_token_tuples("()").is_err());
    }

    #[test]
    fn expressions() {
        let e = parse_expression("eq(add(x,y),z)", false).unwrap();
        assert_eq!(e.to_text(), "eq(add(x,y),z)");
        let e = parse_expression("le(add(mul(250,b),mul(200,c)),4000)", false).unwrap();
        assert_eq!(e.to_text(), "le(add(mul(250,b),mul(200,c)),4000)");
        let e = parse_expression("eq(x[2],-3)", false).unwrap();
        assert!(matches!(e, Expression::Apply(Op::Eq, _)));
        let e = parse_expression("in(x,set(1,2,3))", false).unwrap();
        assert!(matches!(e, Expression::Apply(Op::In, _)));
    }

    #[test]
    fn expression_negatives() {
        assert!(parse_expression("add(x, y)", false).is_err());
        assert!(parse_expression("sub(x)", false).is_err());
        assert!(parse_expression("sub(x,y,z)", false).is_err());
        assert!(parse_expression("frob(x)", false).is_err());
        assert!(parse_expression("add(x,y))", false).is_err());
        assert!(parse_expression("set(1,2)", false).is_err());
        assert!(parse_expression("in(x,y)", false).is_err());
        assert!(parse_expression("set(x)", false).is_err());
        assert!(parse_expression("and(x,5)", false).is_err());
        assert!(parse_expression("not(add(x,y))", false).is_err());
        assert!(parse_expression("x[1..2]", false).is_err());
        assert!(parse_expression("%0", false).is_err());
    }

    #[test]
    fn expression_params() {
        let e = parse_expression("eq(add(%0,%1),%2)", true).unwrap();
        assert_eq!(e.max_param(), Some(2));
        assert!(!e.contains_param_rest());
        assert_eq!(e.to_text(), "eq(add(%0,%1),%2)");
    }

    #[test]
    fn expression_boolean_typing() {
        // `if` requires a Boolean guard; integer guards are rejected.
        assert!(parse_expression("if(le(2,3),5,7)", false).is_ok());
        assert!(parse_expression("if(2,5,7)", false).is_err());
        // Variables are acceptable Boolean arguments (0/1 variables).
        assert!(parse_expression("and(x,y)", false).is_ok());
        // Relational operators accept integer arguments.
        assert!(parse_expression("lt(1,2)", false).is_ok());
    }

    #[test]
    fn expression_text_roundtrip() {
        for text in [
            "eq(add(x,y),z)",
            "if(le(2,3),5,7)",
            "in(x,set(1,2,3))",
            "not(and(x,or(y,z)))",
            "dist(4,9)",
            "mul(x[0],x[1])",
        ] {
            let e = parse_expression(text, false).unwrap();
            assert_eq!(e.to_text(), text);
            assert_eq!(parse_expression(&e.to_text(), false).unwrap(), e);
        }
    }
}
