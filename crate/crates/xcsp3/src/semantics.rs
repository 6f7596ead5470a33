//! Ground semantics: expression evaluation under an assignment and the
//! satisfaction check of every supported constraint.
//!
//! Arithmetic is fully checked. Division and remainder truncate toward
//! zero; dividing by zero or raising to a negative power yields an
//! undefined value, which makes the enclosing constraint violated rather
//! than aborting the check. Genuine 64-bit overflow is reported as an
//! internal error instead of wrapping silently.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::grammar::{Cell, CondOp, CondOperand, Condition, Expression, Op};
use crate::model::{
    ChannelForm, ConstraintKind, ElementForm, IndexSpec, OccursSpec, Rank, Table,
    VarOrVal,
};

// ---------------------------------------------------------------------------
// Automaton and MDD
// ---------------------------------------------------------------------------

/// A finite automaton over integer values, possibly nondeterministic.
#[derive(Debug, Clone)]
pub struct Automaton {
    states: Vec<String>,
    start: Option<usize>,
    finals: Vec<usize>,
    edges: HashMap<(usize, i64), Vec<usize>>,
}

impl Automaton {
    pub fn new(transitions: Vec<(String, i64, String)>, start: String, finals: Vec<String>) -> Self {
        let mut states: Vec<String> = Vec::new();
        let mut ids: HashMap<String, usize> = HashMap::new();
        let intern = |name: &str, states: &mut Vec<String>, ids: &mut HashMap<String, usize>| {
            if let Some(ix) = ids.get(name) {
                *ix
            } else {
                let ix = states.len();
                states.push(name.to_string());
                ids.insert(name.to_string(), ix);
                ix
            }
        };
        let mut edges: HashMap<(usize, i64), Vec<usize>> = HashMap::new();
        for (from, value, to) in &transitions {
            let f = intern(from, &mut states, &mut ids);
            let t = intern(to, &mut states, &mut ids);
            edges.entry((f, *value)).or_default().push(t);
        }
        let start = ids.get(&start).copied();
        let finals = finals.iter().filter_map(|f| ids.get(f).copied()).collect();
        Automaton { states, start, finals, edges }
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    /// True when the automaton accepts the word.
    pub fn accepts(&self, word: &[i64]) -> bool {
        let Some(start) = self.start else { return false };
        let mut current = vec![false; self.states.len()];
        current[start] = true;
        for &value in word {
            let mut next = vec![false; self.states.len()];
            let mut any = false;
            for (state, live) in current.iter().enumerate() {
                if !live {
                    continue;
                }
                if let Some(targets) = self.edges.get(&(state, value)) {
                    for &t in targets {
                        next[t] = true;
                        any = true;
                    }
                }
            }
            if !any {
                return false;
            }
            current = next;
        }
        self.finals.iter().any(|f| current[*f])
    }
}

/// A multivalued decision diagram: a rooted acyclic graph whose edges are
/// labelled with integers and whose root-to-terminal paths all have the
/// same length.
#[derive(Debug, Clone)]
pub struct Mdd {
    /// Number of edges on every root-to-terminal path.
    pub depth: usize,
    nodes: Vec<String>,
    root: usize,
    terminal: usize,
    edges: HashMap<(usize, i64), usize>,
}

impl Mdd {
    /// Validates the transition list: a unique root (no incoming edge), a
    /// unique terminal (no outgoing edge), no cycles, no duplicate edge
    /// labels out of one node, and equal-length root-to-terminal paths.
    pub fn from_transitions(transitions: Vec<(String, i64, String)>) -> Result<Self> {
        if transitions.is_empty() {
            return Err(Error::structure("an mdd requires at least one transition"));
        }
        let mut nodes: Vec<String> = Vec::new();
        let mut ids: HashMap<String, usize> = HashMap::new();
        let intern = |name: &str, nodes: &mut Vec<String>, ids: &mut HashMap<String, usize>| {
            if let Some(ix) = ids.get(name) {
                *ix
            } else {
                let ix = nodes.len();
                nodes.push(name.to_string());
                ids.insert(name.to_string(), ix);
                ix
            }
        };
        let mut edges: HashMap<(usize, i64), usize> = HashMap::new();
        let mut adjacency: Vec<Vec<usize>> = Vec::new();
        let mut incoming: Vec<usize> = Vec::new();
        for (from, value, to) in &transitions {
            let f = intern(from, &mut nodes, &mut ids);
            let t = intern(to, &mut nodes, &mut ids);
            while adjacency.len() < nodes.len() {
                adjacency.push(Vec::new());
                incoming.push(0);
            }
            if edges.insert((f, *value), t).is_some() {
                return Err(Error::structure(format!(
                    "node \"{from}\" has two outgoing transitions labelled {value}"
                )));
            }
            adjacency[f].push(t);
            incoming[t] += 1;
        }
        let roots: Vec<usize> = (0..nodes.len()).filter(|n| incoming[*n] == 0).collect();
        let terminals: Vec<usize> =
            (0..nodes.len()).filter(|n| adjacency[*n].is_empty()).collect();
        let root = match roots.as_slice() {
            [r] => *r,
            [] => return Err(Error::structure("the mdd has no root: every node has an incoming transition")),
            _ => {
                return Err(Error::structure(format!(
                    "the mdd has several root candidates: {}",
                    roots.iter().map(|r| nodes[*r].as_str()).collect::<Vec<_>>().join(", ")
                )));
            }
        };
        let terminal = match terminals.as_slice() {
            [t] => *t,
            [] => return Err(Error::structure("the mdd has no terminal: every node has an outgoing transition")),
            _ => {
                return Err(Error::structure(format!(
                    "the mdd has several terminal candidates: {}",
                    terminals.iter().map(|t| nodes[*t].as_str()).collect::<Vec<_>>().join(", ")
                )));
            }
        };
        // Depth-first pass from the root: detects cycles and computes the
        // distance to the terminal, which must be unique per node.
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            White,
            Gray,
            Black,
        }
        fn visit(
            node: usize,
            terminal: usize,
            adjacency: &[Vec<usize>],
            nodes: &[String],
            marks: &mut [Mark],
            dist: &mut [usize],
        ) -> Result<usize> {
            match marks[node] {
                Mark::Gray => {
                    return Err(Error::structure(format!(
                        "the mdd contains a cycle through node \"{}\"",
                        nodes[node]
                    )));
                }
                Mark::Black => return Ok(dist[node]),
                Mark::White => {}
            }
            marks[node] = Mark::Gray;
            let mut depth: Option<usize> = if node == terminal { Some(0) } else { None };
            for &child in &adjacency[node] {
                let d = visit(child, terminal, adjacency, nodes, marks, dist)? + 1;
                match depth {
                    None => depth = Some(d),
                    Some(existing) if existing != d => {
                        return Err(Error::structure(format!(
                            "paths through node \"{}\" have unequal lengths",
                            nodes[node]
                        )));
                    }
                    Some(_) => {}
                }
            }
            let depth = depth.expect("non-terminal nodes reachable from the root have children");
            marks[node] = Mark::Black;
            dist[node] = depth;
            Ok(depth)
        }
        let mut marks = vec![Mark::White; nodes.len()];
        let mut dist = vec![0usize; nodes.len()];
        let depth = visit(root, terminal, &adjacency, &nodes, &mut marks, &mut dist)?;
        if depth == 0 {
            return Err(Error::structure("the mdd root and terminal coincide"));
        }
        Ok(Mdd { depth, nodes, root, terminal, edges })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// True when the word labels a root-to-terminal path.
    pub fn accepts(&self, word: &[i64]) -> bool {
        let mut node = self.root;
        for &value in word {
            match self.edges.get(&(node, value)) {
                Some(&next) => node = next,
                None => return false,
            }
        }
        node == self.terminal
    }
}

// ---------------------------------------------------------------------------
// Assignments and evaluation
// ---------------------------------------------------------------------------

/// A (possibly partial) assignment of values to cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    vals: Vec<Option<i64>>,
}

impl Assignment {
    pub fn new(len: usize) -> Self {
        Assignment { vals: vec![None; len] }
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    pub fn get(&self, cell: usize) -> Option<i64> {
        self.vals.get(cell).copied().flatten()
    }

    pub fn set(&mut self, cell: usize, value: i64) {
        self.vals[cell] = Some(value);
    }

    pub fn unset(&mut self, cell: usize) {
        self.vals[cell] = None;
    }
}

/// Why an evaluation produced no value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalError {
    /// Division by zero, remainder by zero, or a negative exponent. Makes
    /// the enclosing relation violated.
    Undefined,
    /// The result does not fit in 64 bits.
    Overflow,
    /// A referenced cell has no value.
    Unassigned(usize),
    /// Evaluation reached a node that should not survive instance
    /// construction (an unresolved name or template parameter).
    Malformed,
}

impl EvalError {
    /// The error reported when an evaluation failure cannot be absorbed as
    /// a violated constraint.
    pub fn into_error(self) -> Error {
        match self {
            EvalError::Undefined => Error::internal("undefined value escaped a constraint check"),
            EvalError::Overflow => Error::internal("arithmetic overflow beyond 64 bits"),
            EvalError::Unassigned(cell) => {
                Error::internal(format!("cell #{cell} was read before being assigned"))
            }
            EvalError::Malformed => {
                Error::internal("evaluated an expression that was not fully resolved")
            }
        }
    }
}

pub type EvalResult = std::result::Result<i64, EvalError>;

fn cell_value(a: &Assignment, cell: usize) -> EvalResult {
    a.get(cell).ok_or(EvalError::Unassigned(cell))
}

fn truth(v: i64) -> bool {
    v != 0
}

fn from_bool(b: bool) -> i64 {
    i64::from(b)
}

fn checked_pow(base: i64, exp: i64) -> EvalResult {
    if exp < 0 {
        return Err(EvalError::Undefined);
    }
    match base {
        0 => Ok(if exp == 0 { 1 } else { 0 }),
        1 => Ok(1),
        -1 => Ok(if exp % 2 == 0 { 1 } else { -1 }),
        _ => {
            let exp: u32 = exp.try_into().map_err(|_| EvalError::Overflow)?;
            base.checked_pow(exp).ok_or(EvalError::Overflow)
        }
    }
}

/// Evaluates a fully resolved expression under an assignment.
pub fn eval_expression(expr: &Expression, a: &Assignment) -> EvalResult {
    match expr {
        Expression::Const(v) => Ok(*v),
        Expression::Cell(c) => cell_value(a, *c),
        Expression::Var(_)
        | Expression::Param(_)
        | Expression::ParamRest
        | Expression::SetLit(_) => Err(EvalError::Malformed),
        Expression::Apply(op, args) => eval_apply(*op, args, a),
    }
}

fn eval_apply(op: Op, args: &[Expression], a: &Assignment) -> EvalResult {
    // `if` and the set-membership test need special argument handling.
    match op {
        Op::If => {
            let guard = truth(eval_expression(&args[0], a)?);
            return eval_expression(&args[if guard { 1 } else { 2 }], a);
        }
        Op::In => {
            let needle = eval_expression(&args[0], a)?;
            let Expression::SetLit(values) = &args[1] else {
                return Err(EvalError::Malformed);
            };
            return Ok(from_bool(values.contains(&needle)));
        }
        _ => {}
    }
    let mut vals = Vec::with_capacity(args.len());
    for arg in args {
        vals.push(eval_expression(arg, a)?);
    }
    let v = &vals;
    Ok(match op {
        Op::Neg => v[0].checked_neg().ok_or(EvalError::Overflow)?,
        Op::Abs => v[0].checked_abs().ok_or(EvalError::Overflow)?,
        Op::Add => {
            let mut acc = 0i64;
            for x in v {
                acc = acc.checked_add(*x).ok_or(EvalError::Overflow)?;
            }
            acc
        }
        Op::Sub => v[0].checked_sub(v[1]).ok_or(EvalError::Overflow)?,
        Op::Mul => {
            let mut acc = 1i64;
            for x in v {
                acc = acc.checked_mul(*x).ok_or(EvalError::Overflow)?;
            }
            acc
        }
        Op::Div => {
            if v[1] == 0 {
                return Err(EvalError::Undefined);
            }
            v[0].checked_div(v[1]).ok_or(EvalError::Overflow)?
        }
        Op::Mod => {
            if v[1] == 0 {
                return Err(EvalError::Undefined);
            }
            v[0].checked_rem(v[1]).ok_or(EvalError::Overflow)?
        }
        Op::Sqr => v[0].checked_mul(v[0]).ok_or(EvalError::Overflow)?,
        Op::Pow => checked_pow(v[0], v[1])?,
        Op::Min => *v.iter().min().expect("min takes at least two arguments"),
        Op::Max => *v.iter().max().expect("max takes at least two arguments"),
        Op::Dist => v[0]
            .checked_sub(v[1])
            .and_then(i64::checked_abs)
            .ok_or(EvalError::Overflow)?,
        Op::Lt => from_bool(v[0] < v[1]),
        Op::Le => from_bool(v[0] <= v[1]),
        Op::Ge => from_bool(v[0] >= v[1]),
        Op::Gt => from_bool(v[0] > v[1]),
        Op::Ne => from_bool(v[0] != v[1]),
        Op::Eq => from_bool(v.windows(2).all(|w| w[0] == w[1])),
        Op::Not => from_bool(!truth(v[0])),
        Op::And => from_bool(v.iter().all(|x| truth(*x))),
        Op::Or => from_bool(v.iter().any(|x| truth(*x))),
        Op::Xor => from_bool(v.iter().filter(|x| truth(**x)).count() % 2 == 1),
        Op::Iff => {
            let first = truth(v[0]);
            from_bool(v.iter().all(|x| truth(*x) == first))
        }
        Op::Imp => from_bool(!truth(v[0]) || truth(v[1])),
        Op::If | Op::In => unreachable!("handled above"),
    })
}

/// Evaluates a condition against a left-hand value.
pub fn eval_condition(
    cond: &Condition,
    lhs: i64,
    a: &Assignment,
) -> std::result::Result<bool, EvalError> {
    let relational = |rhs: i64| -> std::result::Result<bool, EvalError> {
        Ok(match cond.op {
            CondOp::Lt => lhs < rhs,
            CondOp::Le => lhs <= rhs,
            CondOp::Ge => lhs >= rhs,
            CondOp::Gt => lhs > rhs,
            CondOp::Eq => lhs == rhs,
            CondOp::Ne => lhs != rhs,
            CondOp::In | CondOp::NotIn => return Err(EvalError::Malformed),
        })
    };
    match &cond.operand {
        CondOperand::Value(v) => relational(*v),
        CondOperand::Cell(c) => relational(cell_value(a, *c)?),
        CondOperand::Var(_) => Err(EvalError::Malformed),
        CondOperand::Interval(interval) => match cond.op {
            CondOp::In => Ok(interval.contains(lhs)),
            CondOp::NotIn => Ok(!interval.contains(lhs)),
            _ => Err(EvalError::Malformed),
        },
        CondOperand::Set(values) => match cond.op {
            CondOp::In => Ok(values.contains(&lhs)),
            CondOp::NotIn => Ok(!values.contains(&lhs)),
            _ => Err(EvalError::Malformed),
        },
    }
}

// ---------------------------------------------------------------------------
// Constraint checks
// ---------------------------------------------------------------------------

type Check = std::result::Result<bool, EvalError>;

/// Checks one constraint under a complete-on-its-scope assignment.
///
/// Undefined arithmetic (division by zero and friends) makes the
/// constraint violated; overflow and unassigned cells surface as internal
/// errors.
pub fn check_constraint(kind: &ConstraintKind, a: &Assignment) -> Result<bool> {
    match check_inner(kind, a) {
        Ok(sat) => Ok(sat),
        Err(EvalError::Undefined) => Ok(false),
        Err(e) => Err(e.into_error()),
    }
}

fn check_inner(kind: &ConstraintKind, a: &Assignment) -> Check {
    match kind {
        ConstraintKind::Intension { expr } => Ok(truth(eval_expression(expr, a)?)),
        ConstraintKind::Extension { scope, table } => check_extension(scope, table, a),
        ConstraintKind::Regular { scope, automaton } => {
            let word = values_of(scope, a)?;
            Ok(automaton.accepts(&word))
        }
        ConstraintKind::Mdd { scope, mdd } => {
            let word = values_of(scope, a)?;
            Ok(mdd.accepts(&word))
        }
        ConstraintKind::AllDifferent { terms, except } => {
            let mut vals = Vec::with_capacity(terms.len());
            for t in terms {
                vals.push(eval_expression(t, a)?);
            }
            Ok(all_different(&vals, except))
        }
        ConstraintKind::AllDifferentLists { lists, except } => {
            let mut tuples = Vec::with_capacity(lists.len());
            for list in lists {
                tuples.push(values_of(list, a)?);
            }
            for i in 0..tuples.len() {
                for j in i + 1..tuples.len() {
                    if tuples[i] == tuples[j] && !except.contains(&tuples[i]) {
                        return Ok(false);
                    }
                }
            }
            Ok(true)
        }
        ConstraintKind::AllDifferentMatrix { matrix, except } => {
            for row in matrix {
                if !all_different(&values_of(row, a)?, except) {
                    return Ok(false);
                }
            }
            for j in 0..matrix[0].len() {
                let col: Vec<usize> = matrix.iter().map(|row| row[j]).collect();
                if !all_different(&values_of(&col, a)?, except) {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        ConstraintKind::AllEqual { scope } => {
            let vals = values_of(scope, a)?;
            Ok(vals.windows(2).all(|w| w[0] == w[1]))
        }
        ConstraintKind::Ordered { scope, lengths, op } => {
            let vals = values_of(scope, a)?;
            for i in 0..vals.len() - 1 {
                let lhs = match lengths {
                    None => vals[i],
                    Some(ls) => vals[i]
                        .checked_add(var_or_val(&ls[i], a)?)
                        .ok_or(EvalError::Overflow)?,
                };
                if !op.holds(lhs, vals[i + 1]) {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        ConstraintKind::LexLists { lists, op } => {
            let mut tuples = Vec::with_capacity(lists.len());
            for list in lists {
                tuples.push(values_of(list, a)?);
            }
            Ok(tuples.windows(2).all(|w| op.holds(&w[0], &w[1])))
        }
        ConstraintKind::LexMatrix { matrix, op } => {
            let mut rows = Vec::with_capacity(matrix.len());
            for row in matrix {
                rows.push(values_of(row, a)?);
            }
            if !rows.windows(2).all(|w| op.holds(&w[0], &w[1])) {
                return Ok(false);
            }
            let cols: Vec<Vec<i64>> = (0..rows[0].len())
                .map(|j| rows.iter().map(|row| row[j]).collect())
                .collect();
            Ok(cols.windows(2).all(|w| op.holds(&w[0], &w[1])))
        }
        ConstraintKind::Sum { terms, coeffs, condition } => {
            let mut total: i128 = 0;
            for (i, term) in terms.iter().enumerate() {
                let term = eval_expression(term, a)? as i128;
                let coeff = match coeffs {
                    None => 1,
                    Some(cs) => var_or_val(&cs[i], a)? as i128,
                };
                total += term * coeff;
            }
            let total: i64 = total.try_into().map_err(|_| EvalError::Overflow)?;
            eval_condition(condition, total, a)
        }
        ConstraintKind::Count { scope, values, condition } => {
            let vals = values_of(scope, a)?;
            let mut wanted = Vec::with_capacity(values.len());
            for v in values {
                wanted.push(var_or_val(v, a)?);
            }
            let count = vals.iter().filter(|v| wanted.contains(v)).count() as i64;
            eval_condition(condition, count, a)
        }
        ConstraintKind::NValues { scope, except, condition } => {
            let mut vals = values_of(scope, a)?;
            vals.retain(|v| !except.contains(v));
            vals.sort_unstable();
            vals.dedup();
            eval_condition(condition, vals.len() as i64, a)
        }
        ConstraintKind::Cardinality { scope, closed, values, occurs } => {
            let vals = values_of(scope, a)?;
            let mut wanted = Vec::with_capacity(values.len());
            for v in values {
                wanted.push(var_or_val(v, a)?);
            }
            if *closed && vals.iter().any(|v| !wanted.contains(v)) {
                return Ok(false);
            }
            for (value, occur) in wanted.iter().zip(occurs) {
                let count = vals.iter().filter(|v| *v == value).count() as i64;
                let ok = match occur {
                    OccursSpec::Val(k) => count == *k,
                    OccursSpec::Cell(c) => count == cell_value(a, *c)?,
                    OccursSpec::Range(lo, hi) => *lo <= count && count <= *hi,
                };
                if !ok {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        ConstraintKind::Minimum { scope, condition, index } => {
            check_extremum(scope, condition, index, a, true)
        }
        ConstraintKind::Maximum { scope, condition, index } => {
            check_extremum(scope, condition, index, a, false)
        }
        ConstraintKind::Element(form) => check_element(form, a),
        ConstraintKind::Channel(form) => check_channel(form, a),
        ConstraintKind::NoOverlap { origins, lengths, zero_ignored } => {
            check_no_overlap(origins, lengths, *zero_ignored, a)
        }
        ConstraintKind::Cumulative { origins, lengths, ends, heights, condition } => {
            check_cumulative(origins, lengths, ends.as_deref(), heights, condition, a)
        }
        ConstraintKind::Circuit { scope, start, size } => check_circuit(scope, *start, size, a),
        ConstraintKind::Instantiation { scope, values } => {
            for (cell, value) in scope.iter().zip(values) {
                if let Some(v) = value {
                    if cell_value(a, *cell)? != *v {
                        return Ok(false);
                    }
                }
            }
            Ok(true)
        }
        ConstraintKind::Slide { windows } => {
            for window in windows {
                if !check_inner(window, a)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
    }
}

fn values_of(cells: &[usize], a: &Assignment) -> std::result::Result<Vec<i64>, EvalError> {
    cells.iter().map(|c| cell_value(a, *c)).collect()
}

fn var_or_val(v: &VarOrVal, a: &Assignment) -> EvalResult {
    match v {
        VarOrVal::Val(k) => Ok(*k),
        VarOrVal::Cell(c) => cell_value(a, *c),
    }
}

fn all_different(vals: &[i64], except: &[i64]) -> bool {
    let mut seen: Vec<i64> = vals.iter().copied().filter(|v| !except.contains(v)).collect();
    let before = seen.len();
    seen.sort_unstable();
    seen.dedup();
    seen.len() == before
}

fn check_extension(scope: &[usize], table: &Table, a: &Assignment) -> Check {
    let vals = values_of(scope, a)?;
    match table {
        Table::Unary { values, conflicts } => Ok(values.contains(vals[0]) != *conflicts),
        Table::Rows { rows, conflicts } => {
            let matched = rows.iter().any(|row| {
                row.iter().zip(&vals).all(|(cell, v)| match cell {
                    Cell::Star => true,
                    Cell::Int(t) => t == v,
                })
            });
            Ok(matched != *conflicts)
        }
    }
}

fn check_extremum(
    scope: &[usize],
    condition: &Option<Condition>,
    index: &Option<IndexSpec>,
    a: &Assignment,
    is_min: bool,
) -> Check {
    let vals = values_of(scope, a)?;
    let extremum = if is_min {
        *vals.iter().min().expect("scope is nonempty")
    } else {
        *vals.iter().max().expect("scope is nonempty")
    };
    if let Some(cond) = condition {
        if !eval_condition(cond, extremum, a)? {
            return Ok(false);
        }
    }
    if let Some(spec) = index {
        let iv = cell_value(a, spec.cell)?;
        let pos = iv - spec.start;
        if pos < 0 || pos as usize >= vals.len() {
            return Ok(false);
        }
        let pos = pos as usize;
        if vals[pos] != extremum {
            return Ok(false);
        }
        match spec.rank {
            Rank::Any => {}
            Rank::First => {
                if vals[..pos].contains(&extremum) {
                    return Ok(false);
                }
            }
            Rank::Last => {
                if vals[pos + 1..].contains(&extremum) {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

fn check_element(form: &ElementForm, a: &Assignment) -> Check {
    match form {
        ElementForm::VarsValue { list, value } => {
            let value = var_or_val(value, a)?;
            let vals = values_of(list, a)?;
            Ok(vals.contains(&value))
        }
        ElementForm::VarsIndexValue { list, index, value } => {
            let vals = values_of(list, a)?;
            check_indexed(&vals, index, var_or_val(value, a)?, a)
        }
        ElementForm::ValuesIndexValue { list, index, value } => {
            check_indexed(list, index, var_or_val(value, a)?, a)
        }
    }
}

fn check_indexed(vals: &[i64], index: &IndexSpec, value: i64, a: &Assignment) -> Check {
    let iv = cell_value(a, index.cell)?;
    let pos = iv - index.start;
    if pos < 0 || pos as usize >= vals.len() {
        return Ok(false);
    }
    let pos = pos as usize;
    if vals[pos] != value {
        return Ok(false);
    }
    match index.rank {
        Rank::Any => Ok(true),
        Rank::First => Ok(!vals[..pos].contains(&value)),
        Rank::Last => Ok(!vals[pos + 1..].contains(&value)),
    }
}

fn check_channel(form: &ChannelForm, a: &Assignment) -> Check {
    match form {
        ChannelForm::OneList { list, start } => {
            let vals = values_of(list, a)?;
            let n = vals.len() as i64;
            for (k, &v) in vals.iter().enumerate() {
                let q = v - start;
                if q < 0 || q >= n {
                    return Ok(false);
                }
                if vals[q as usize] != start + k as i64 {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        ChannelForm::TwoLists { x, x_start, y, y_start } => {
            let xs = values_of(x, a)?;
            let ys = values_of(y, a)?;
            // Forward direction: every x value selects a y position that
            // points back.
            for (k, &v) in xs.iter().enumerate() {
                let q = v - y_start;
                if q < 0 || q as usize >= ys.len() {
                    return Ok(false);
                }
                if ys[q as usize] != x_start + k as i64 {
                    return Ok(false);
                }
            }
            // With equally long lists the channeling is an equivalence.
            if xs.len() == ys.len() {
                for (k, &v) in ys.iter().enumerate() {
                    let q = v - x_start;
                    if q < 0 || q as usize >= xs.len() {
                        return Ok(false);
                    }
                    if xs[q as usize] != y_start + k as i64 {
                        return Ok(false);
                    }
                }
            }
            Ok(true)
        }
        ChannelForm::Value { list, start, value } => {
            let vals = values_of(list, a)?;
            let v = cell_value(a, *value)?;
            let mut ones = 0usize;
            for (k, &x) in vals.iter().enumerate() {
                if x == 1 {
                    ones += 1;
                }
                if (x == 1) != (v == start + k as i64) {
                    return Ok(false);
                }
            }
            Ok(ones == 1)
        }
    }
}

fn check_no_overlap(
    origins: &[Vec<usize>],
    lengths: &[Vec<VarOrVal>],
    zero_ignored: bool,
    a: &Assignment,
) -> Check {
    let n = origins.len();
    let dim = origins[0].len();
    let mut pos = Vec::with_capacity(n);
    let mut len = Vec::with_capacity(n);
    for i in 0..n {
        pos.push(values_of(&origins[i], a)?);
        let mut ls = Vec::with_capacity(dim);
        for l in &lengths[i] {
            ls.push(var_or_val(l, a)?);
        }
        len.push(ls);
    }
    let zero: Vec<bool> = len.iter().map(|ls| ls.iter().all(|l| *l == 0)).collect();
    for i in 0..n {
        for j in i + 1..n {
            if zero_ignored && (zero[i] || zero[j]) {
                continue;
            }
            let mut separated = false;
            for d in 0..dim {
                let end_i = pos[i][d].checked_add(len[i][d]).ok_or(EvalError::Overflow)?;
                let end_j = pos[j][d].checked_add(len[j][d]).ok_or(EvalError::Overflow)?;
                if end_i <= pos[j][d] || end_j <= pos[i][d] {
                    separated = true;
                    break;
                }
            }
            if !separated {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn check_cumulative(
    origins: &[usize],
    lengths: &[VarOrVal],
    ends: Option<&[usize]>,
    heights: &[VarOrVal],
    condition: &Condition,
    a: &Assignment,
) -> Check {
    let n = origins.len();
    let starts = values_of(origins, a)?;
    let mut lens = Vec::with_capacity(n);
    for l in lengths {
        lens.push(var_or_val(l, a)?);
    }
    let mut hs = Vec::with_capacity(n);
    for h in heights {
        hs.push(var_or_val(h, a)?);
    }
    let finish: Vec<i64> = starts
        .iter()
        .zip(&lens)
        .map(|(s, l)| s.checked_add(*l).ok_or(EvalError::Overflow))
        .collect::<std::result::Result<_, _>>()?;
    if let Some(ends) = ends {
        let end_vals = values_of(ends, a)?;
        for (f, e) in finish.iter().zip(&end_vals) {
            if f != e {
                return Ok(false);
            }
        }
    }
    // The resource profile is piecewise constant, so it suffices to check
    // it where it can change: at task starts and ends, ignoring moments
    // when no task runs. Tasks of nonpositive length never run.
    let mut events: Vec<i64> = Vec::with_capacity(2 * n);
    for i in 0..n {
        if lens[i] > 0 {
            events.push(starts[i]);
            events.push(finish[i]);
        }
    }
    events.sort_unstable();
    events.dedup();
    for &t in &events {
        let mut running = false;
        let mut load: i128 = 0;
        for i in 0..n {
            if lens[i] > 0 && starts[i] <= t && t < finish[i] {
                running = true;
                load += hs[i] as i128;
            }
        }
        if !running {
            continue;
        }
        let load: i64 = load.try_into().map_err(|_| EvalError::Overflow)?;
        if !eval_condition(condition, load, a)? {
            return Ok(false);
        }
    }
    Ok(true)
}

fn check_circuit(scope: &[usize], start: i64, size: &Option<VarOrVal>, a: &Assignment) -> Check {
    let vals = values_of(scope, a)?;
    let n = vals.len();
    let mut succ = Vec::with_capacity(n);
    for &v in &vals {
        let s = v - start;
        if s < 0 || s as usize >= n {
            return Ok(false);
        }
        succ.push(s as usize);
    }
    let non_self: Vec<bool> = succ.iter().enumerate().map(|(k, s)| *s != k).collect();
    let circuit_nodes = non_self.iter().filter(|b| **b).count();
    if circuit_nodes == 0 {
        // A circuit must contain at least two nodes.
        return Ok(false);
    }
    let origin = non_self.iter().position(|b| *b).expect("checked nonempty");
    let mut visited = vec![false; n];
    let mut cur = origin;
    let mut steps = 0usize;
    loop {
        if !non_self[cur] || visited[cur] {
            break;
        }
        visited[cur] = true;
        steps += 1;
        cur = succ[cur];
    }
    if cur != origin || steps != circuit_nodes {
        return Ok(false);
    }
    if let Some(size) = size {
        if var_or_val(size, a)? != steps as i64 {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::parse_expression;

    fn assignment(values: &[i64]) -> Assignment {
        let mut a = Assignment::new(values.len());
        for (i, v) in values.iter().enumerate() {
            a.set(i, *v);
        }
        a
    }

    fn eval_const(text: &str) -> EvalResult {
        let expr = parse_expression(text, false).unwrap();
        eval_expression(&expr, &Assignment::new(0))
    }

    #[test]
    fn arithmetic_truncates_toward_zero() {
        assert_eq!(eval_const("div(7,2)"), Ok(3));
        assert_eq!(eval_const("div(neg(7),2)"), Ok(-3));
        assert_eq!(eval_const("mod(neg(7),2)"), Ok(-1));
        assert_eq!(eval_const("mod(7,2)"), Ok(1));
        assert_eq!(eval_const("div(7,0)"), Err(EvalError::Undefined));
        assert_eq!(eval_const("mod(7,0)"), Err(EvalError::Undefined));
    }

    #[test]
    fn power_and_overflow() {
        assert_eq!(eval_const("pow(2,10)"), Ok(1024));
        assert_eq!(eval_const("pow(0,0)"), Ok(1));
        assert_eq!(eval_const("pow(2,neg(1))"), Err(EvalError::Undefined));
        assert_eq!(
            eval_const("mul(4611686018427387904,4)"),
            Err(EvalError::Overflow)
        );
        assert_eq!(eval_const("pow(neg(1),1000001)"), Ok(-1));
    }

    #[test]
    fn logic_connectives() {
        assert_eq!(eval_const("and(lt(1,2),lt(2,3))"), Ok(1));
        assert_eq!(eval_const("xor(lt(1,2),lt(2,3),lt(3,4))"), Ok(1));
        assert_eq!(eval_const("iff(lt(2,1),lt(3,2))"), Ok(1));
        assert_eq!(eval_const("imp(lt(2,1),lt(3,2))"), Ok(1));
        assert_eq!(eval_const("eq(1,1,1)"), Ok(1));
        assert_eq!(eval_const("eq(1,1,2)"), Ok(0));
        assert_eq!(eval_const("if(lt(1,2),5,div(1,0))"), Ok(5));
        assert_eq!(eval_const("in(3,set(1,2,3))"), Ok(1));
        assert_eq!(eval_const("in(4,set(1,2,3))"), Ok(0));
    }

    #[test]
    fn division_by_zero_violates_instead_of_failing() {
        let expr = parse_expression("eq(div(5,0),1)", false).unwrap();
        let kind = ConstraintKind::Intension { expr };
        assert_eq!(check_constraint(&kind, &Assignment::new(0)).unwrap(), false);
        // Overflow, by contrast, is an error.
        let expr = parse_expression("eq(mul(4611686018427387904,4),0)", false).unwrap();
        let kind = ConstraintKind::Intension { expr };
        assert!(check_constraint(&kind, &Assignment::new(0)).is_err());
    }

    #[test]
    fn automaton_acceptance() {
        let automaton = Automaton::new(
            vec![
                ("a".into(), 0, "a".into()),
                ("a".into(), 1, "b".into()),
                ("b".into(), 1, "c".into()),
                ("c".into(), 0, "d".into()),
                ("d".into(), 0, "d".into()),
                ("d".into(), 1, "e".into()),
                ("e".into(), 0, "e".into()),
            ],
            "a".into(),
            vec!["e".into()],
        );
        assert!(automaton.accepts(&[0, 1, 1, 0, 0, 1, 0]));
        assert!(!automaton.accepts(&[0, 0, 0, 0, 0, 0, 0]));
    }

    #[test]
    fn mdd_structure_and_acceptance() {
        let transitions = vec![
            ("r".to_string(), 0, "n1".to_string()),
            ("r".to_string(), 1, "n2".to_string()),
            ("r".to_string(), 2, "n3".to_string()),
            ("n1".to_string(), 2, "n4".to_string()),
            ("n2".to_string(), 2, "n4".to_string()),
            ("n3".to_string(), 0, "n5".to_string()),
            ("n4".to_string(), 0, "t".to_string()),
            ("n5".to_string(), 0, "t".to_string()),
        ];
        let mdd = Mdd::from_transitions(transitions).unwrap();
        assert_eq!(mdd.depth, 3);
        assert!(mdd.accepts(&[0, 2, 0]));
        assert!(mdd.accepts(&[1, 2, 0]));
        assert!(mdd.accepts(&[2, 0, 0]));
        assert!(!mdd.accepts(&[1, 0, 0]));

        // A cycle is rejected.
        let cyclic = vec![
            ("a".to_string(), 0, "b".to_string()),
            ("b".to_string(), 0, "a".to_string()),
        ];
        assert!(Mdd::from_transitions(cyclic).is_err());
        // Unequal path lengths are rejected.
        let ragged = vec![
            ("r".to_string(), 0, "m".to_string()),
            ("r".to_string(), 1, "t".to_string()),
            ("m".to_string(), 0, "t".to_string()),
        ];
        assert!(Mdd::from_transitions(ragged).is_err());
    }

    #[test]
    fn short_tuples_with_stars() {
        // Table (1,*,1,2)(2,1,*,*) over four cells.
        let rows = vec![
            vec![Cell::Int(1), Cell::Star, Cell::Int(1), Cell::Int(2)],
            vec![Cell::Int(2), Cell::Int(1), Cell::Star, Cell::Star],
        ];
        let kind = ConstraintKind::Extension {
            scope: vec![0, 1, 2, 3],
            table: Table::Rows { rows, conflicts: false },
        };
        let mut accepted = Vec::new();
        for a0 in 1..=2 {
            for a1 in 1..=2 {
                for a2 in 1..=2 {
                    for a3 in 1..=2 {
                        let a = assignment(&[a0, a1, a2, a3]);
                        if check_constraint(&kind, &a).unwrap() {
                            accepted.push((a0, a1, a2, a3));
                        }
                    }
                }
            }
        }
        assert_eq!(
            accepted,
            vec![
                (1, 1, 1, 2),
                (1, 2, 1, 2),
                (2, 1, 1, 1),
                (2, 1, 1, 2),
                (2, 1, 2, 1),
                (2, 1, 2, 2),
            ]
        );
    }

    #[test]
    fn channel_and_circuit_oracles() {
        let channel = ConstraintKind::Channel(ChannelForm::OneList { list: vec![0, 1, 2], start: 0 });
        assert!(check_constraint(&channel, &assignment(&[1, 0, 2])).unwrap());
        assert!(!check_constraint(&channel, &assignment(&[1, 2, 0])).unwrap());

        let circuit = ConstraintKind::Circuit { scope: vec![0, 1, 2, 3], start: 0, size: None };
        assert!(check_constraint(&circuit, &assignment(&[1, 2, 3, 0])).unwrap());
        assert!(check_constraint(&circuit, &assignment(&[1, 2, 0, 3])).unwrap());
        assert!(!check_constraint(&circuit, &assignment(&[1, 0, 3, 2])).unwrap());
        // All self-loops do not form a circuit.
        assert!(!check_constraint(&circuit, &assignment(&[0, 1, 2, 3])).unwrap());
        // The size, when present, must match the circuit length.
        let sized = ConstraintKind::Circuit {
            scope: vec![0, 1, 2, 3],
            start: 0,
            size: Some(VarOrVal::Val(3)),
        };
        assert!(check_constraint(&sized, &assignment(&[1, 2, 0, 3])).unwrap());
        assert!(!check_constraint(&sized, &assignment(&[1, 2, 3, 0])).unwrap());
    }

    #[test]
    fn cumulative_profile() {
        use crate::grammar::parse_condition;
        // Two unit-height tasks of length 4 and 2 starting together exceed
        // a capacity of 1.
        let kind = ConstraintKind::Cumulative {
            origins: vec![0, 1],
            lengths: vec![VarOrVal::Val(4), VarOrVal::Val(2)],
            ends: None,
            heights: vec![VarOrVal::Val(1), VarOrVal::Val(1)],
            condition: parse_condition("(le,1)").unwrap(),
        };
        assert!(!check_constraint(&kind, &assignment(&[0, 0])).unwrap());
        assert!(check_constraint(&kind, &assignment(&[0, 4])).unwrap());
        // A lower-bound condition must hold between events as well: task A
        // covers [0,4), task B covers [0,2); at time 2 the load drops to 1.
        let ge = ConstraintKind::Cumulative {
            origins: vec![0, 1],
            lengths: vec![VarOrVal::Val(4), VarOrVal::Val(2)],
            ends: None,
            heights: vec![VarOrVal::Val(4), VarOrVal::Val(4)],
            condition: parse_condition("(ge,6)").unwrap(),
        };
        assert!(!check_constraint(&ge, &assignment(&[0, 0])).unwrap());
        // Nonpositive lengths never run.
        let soft = ConstraintKind::Cumulative {
            origins: vec![0, 1],
            lengths: vec![VarOrVal::Val(0), VarOrVal::Val(3)],
            ends: None,
            heights: vec![VarOrVal::Val(9), VarOrVal::Val(1)],
            condition: parse_condition("(le,1)").unwrap(),
        };
        assert!(check_constraint(&soft, &assignment(&[0, 0])).unwrap());
    }

    #[test]
    fn no_overlap_zero_lengths() {
        let boxes = |zero_ignored| ConstraintKind::NoOverlap {
            origins: vec![vec![0], vec![1]],
            lengths: vec![vec![VarOrVal::Val(3)], vec![VarOrVal::Val(0)]],
            zero_ignored,
        };
        // A zero-length task strictly inside another: ignored by default,
        // overlapping when zeroIgnored is false.
        let inside = assignment(&[2, 3]);
        assert!(check_constraint(&boxes(true), &inside).unwrap());
        assert!(!check_constraint(&boxes(false), &inside).unwrap());
        // At the boundary both readings accept.
        let boundary = assignment(&[2, 5]);
        assert!(check_constraint(&boxes(false), &boundary).unwrap());
    }

    #[test]
    fn element_and_rank() {
        let kind = ConstraintKind::Element(ElementForm::VarsIndexValue {
            list: vec![0, 1, 2],
            index: IndexSpec { cell: 3, start: 1, rank: Rank::First },
            value: VarOrVal::Val(7),
        });
        // values (7, 7, 5), index must point at the first 7 in 1-based
        // numbering.
        assert!(check_constraint(&kind, &assignment(&[7, 7, 5, 1])).unwrap());
        assert!(!check_constraint(&kind, &assignment(&[7, 7, 5, 2])).unwrap());
        // Out-of-range index is a violation, not an error.
        assert!(!check_constraint(&kind, &assignment(&[7, 7, 5, 9])).unwrap());
    }

    #[test]
    fn minimum_with_condition_and_index() {
        use crate::grammar::parse_condition;
        let kind = ConstraintKind::Minimum {
            scope: vec![0, 1, 2],
            condition: Some(parse_condition("(eq,3)").unwrap()),
            index: Some(IndexSpec { cell: 3, start: 0, rank: Rank::Last }),
        };
        assert!(check_constraint(&kind, &assignment(&[5, 3, 3, 2])).unwrap());
        assert!(!check_constraint(&kind, &assignment(&[5, 3, 3, 1])).unwrap());
        assert!(!check_constraint(&kind, &assignment(&[5, 4, 4, 2])).unwrap());
    }

    #[test]
    fn cardinality_closed_and_ranges() {
        let kind = ConstraintKind::Cardinality {
            scope: vec![0, 1, 2, 3],
            closed: true,
            values: vec![VarOrVal::Val(1), VarOrVal::Val(2)],
            occurs: vec![OccursSpec::Range(1, 2), OccursSpec::Val(2)],
        };
        assert!(check_constraint(&kind, &assignment(&[1, 2, 2, 1])).unwrap());
        // Value 3 breaks closedness.
        assert!(!check_constraint(&kind, &assignment(&[1, 2, 2, 3])).unwrap());
        // Wrong cardinality of value 2.
        assert!(!check_constraint(&kind, &assignment(&[1, 1, 2, 1])).unwrap());
    }
}
