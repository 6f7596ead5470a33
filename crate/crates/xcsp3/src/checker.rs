//! Candidate-solution checking: parses a solution document, binds it to an
//! instance, checks every constraint, evaluates objectives, and verifies a
//! declared cost.

use std::fmt;

use crate::error::{Error, ErrorKind, Result};
use crate::grammar;
use crate::model::{Combination, Instance, ObjKind, Objective, ObjectiveForm};
use crate::semantics::{self, Assignment, EvalError};
use crate::xml::{self, Framework};

/// The declared kind of a solution document.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolType {
    Solution,
    Optimum,
}

impl SolType {
    pub fn name(self) -> &'static str {
        match self {
            SolType::Solution => "solution",
            SolType::Optimum => "optimum",
        }
    }
}

/// A parsed solution: an instantiation document bound to instance cells.
#[derive(Debug, Clone)]
pub struct SolutionDoc {
    pub sol_type: SolType,
    pub cost: Option<i64>,
    /// One entry per listed cell; `None` records a `*` value.
    pub bindings: Vec<(usize, Option<i64>)>,
}

/// Parses the XML text of a solution (an `<instantiation>` element) against
/// an instance.
pub fn parse_solution(instance: &Instance, text: &str) -> Result<SolutionDoc> {
    let root = xml::load_document(text)?;
    if root.name != "instantiation" {
        return Err(root.err(
            ErrorKind::Structure,
            format!("expected an <instantiation> solution, found <{}>", root.name),
        ));
    }
    for (attr, _) in &root.attributes {
        if !matches!(attr.as_str(), "id" | "type" | "cost" | "note") {
            return Err(root.err(
                ErrorKind::Structure,
                format!("unknown attribute \"{attr}\" on a solution"),
            ));
        }
    }
    let sol_type = match root.attr("type") {
        Some("solution") => SolType::Solution,
        Some("optimum") => SolType::Optimum,
        Some(other) => {
            return Err(root.err(
                ErrorKind::Structure,
                format!("unknown solution type \"{other}\""),
            ));
        }
        None => {
            return Err(root.err(
                ErrorKind::Structure,
                "a solution must declare type=\"solution\" or type=\"optimum\"",
            ));
        }
    };
    if instance.framework == Framework::Csp && sol_type == SolType::Optimum {
        return Err(root.err(
            ErrorKind::Structure,
            "a satisfaction instance cannot have an optimum solution",
        ));
    }
    let cost = match root.attr("cost") {
        None => None,
        Some(text) => Some(grammar::parse_integer(text).map_err(|e| e.at(root.location))?),
    };
    if instance.framework == Framework::Csp && cost.is_some() {
        return Err(root.err(
            ErrorKind::Structure,
            "a cost is not allowed on a solution of a satisfaction instance",
        ));
    }
    if sol_type == SolType::Optimum && cost.is_none() {
        return Err(root.err(
            ErrorKind::Structure,
            "an optimum solution must declare its cost",
        ));
    }
    for child in &root.children {
        if !matches!(child.name.as_str(), "list" | "values") {
            return Err(child.err(
                ErrorKind::Structure,
                format!("unexpected <{}> inside a solution", child.name),
            ));
        }
    }
    let list = root
        .child("list")
        .ok_or_else(|| root.err(ErrorKind::Structure, "a solution requires a <list>"))?;
    let values_el = root
        .child("values")
        .ok_or_else(|| root.err(ErrorKind::Structure, "a solution requires <values>"))?;
    let mut cells = Vec::new();
    for token in list.trimmed_text().split_whitespace() {
        let access = grammar::parse_var_access(token).map_err(|e| e.at(list.location))?;
        cells.extend(instance.resolve_access(&access, list.location)?);
    }
    if cells.is_empty() {
        return Err(list.err(ErrorKind::Structure, "the solution lists no variables"));
    }
    let mut values = Vec::new();
    for token in values_el.trimmed_text().split_whitespace() {
        if token == "*" {
            values.push(None);
        } else {
            values.push(Some(
                grammar::parse_integer(token).map_err(|e| e.at(values_el.location))?,
            ));
        }
    }
    if values.len() != cells.len() {
        return Err(values_el.err(
            ErrorKind::Structure,
            format!("{} values for {} listed variables", values.len(), cells.len()),
        ));
    }
    let mut seen = vec![false; instance.cells.len()];
    for &cell in &cells {
        if seen[cell] {
            return Err(list.err(
                ErrorKind::Structure,
                format!("\"{}\" is listed more than once", instance.cells[cell].name),
            ));
        }
        seen[cell] = true;
    }
    Ok(SolutionDoc { sol_type, cost, bindings: cells.into_iter().zip(values).collect() })
}

/// Binds a solution to an assignment over the instance cells.
///
/// Every variable that occurs in a constraint or objective must receive a
/// concrete value. Variables that occur nowhere may be omitted, starred,
/// or valued; cells without a declared domain may not receive a value.
pub fn bind_assignment(instance: &Instance, doc: &SolutionDoc) -> Result<Assignment> {
    let mut assignment = Assignment::new(instance.cells.len());
    for &(cell, value) in &doc.bindings {
        let info = &instance.cells[cell];
        match value {
            None => {
                if instance.is_useful(cell) {
                    return Err(Error::structure(format!(
                        "\"{}\" occurs in a constraint or objective and cannot be starred",
                        info.name
                    )));
                }
            }
            Some(v) => {
                if info.domain.is_none() {
                    return Err(Error::structure(format!(
                        "\"{}\" has no declared domain and cannot take a value",
                        info.name
                    )));
                }
                assignment.set(cell, v);
            }
        }
    }
    for cell in 0..instance.cells.len() {
        if instance.is_useful(cell) && assignment.get(cell).is_none() {
            return Err(Error::structure(format!(
                "\"{}\" occurs in a constraint or objective but the solution gives it no value",
                instance.cells[cell].name
            )));
        }
    }
    Ok(assignment)
}

/// The value of one objective under an assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ObjValue {
    Int(i64),
    /// Lexicographic objectives produce a vector of values.
    Tuple(Vec<i64>),
}

impl fmt::Display for ObjValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObjValue::Int(v) => write!(f, "{v}"),
            ObjValue::Tuple(vs) => {
                write!(f, "(")?;
                for (i, v) in vs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{v}")?;
                }
                write!(f, ")")
            }
        }
    }
}

fn objective_eval_error(e: EvalError) -> Error {
    match e {
        EvalError::Undefined => {
            Error::structure("the objective value is undefined under this assignment")
        }
        other => other.into_error(),
    }
}

/// Evaluates one objective under a complete assignment.
pub fn eval_objective(objective: &Objective, a: &Assignment) -> Result<ObjValue> {
    match &objective.form {
        ObjectiveForm::Expr(expr) => {
            let v = semantics::eval_expression(expr, a).map_err(objective_eval_error)?;
            Ok(ObjValue::Int(v))
        }
        ObjectiveForm::Specialized { kind, terms, coeffs } => {
            let mut vals: Vec<i64> = Vec::with_capacity(terms.len());
            for (term, coeff) in terms.iter().zip(coeffs) {
                let t = semantics::eval_expression(term, a).map_err(objective_eval_error)?;
                let v = (t as i128) * (*coeff as i128);
                vals.push(v.try_into().map_err(|_| EvalError::Overflow.into_error())?);
            }
            let scalar = |v: i128| -> Result<ObjValue> {
                let v: i64 = v.try_into().map_err(|_| EvalError::Overflow.into_error())?;
                Ok(ObjValue::Int(v))
            };
            match kind {
                ObjKind::Sum => scalar(vals.iter().map(|v| *v as i128).sum()),
                ObjKind::Product => {
                    let mut acc: i128 = 1;
                    for v in &vals {
                        acc = acc
                            .checked_mul(*v as i128)
                            .ok_or_else(|| EvalError::Overflow.into_error())?;
                    }
                    scalar(acc)
                }
                ObjKind::Minimum => Ok(ObjValue::Int(*vals.iter().min().expect("nonempty"))),
                ObjKind::Maximum => Ok(ObjValue::Int(*vals.iter().max().expect("nonempty"))),
                ObjKind::NValues => {
                    let mut distinct = vals.clone();
                    distinct.sort_unstable();
                    distinct.dedup();
                    Ok(ObjValue::Int(distinct.len() as i64))
                }
                ObjKind::Lex => Ok(ObjValue::Tuple(vals)),
            }
        }
    }
}

/// Completeness classification of the checked assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AssignmentStatus {
    Complete,
    /// Variables that occur in constraints or objectives but have no value.
    MissingVars(Vec<String>),
    /// Variables whose value lies outside their domain.
    OutOfDomain(Vec<String>),
}

impl AssignmentStatus {
    pub fn label(&self) -> &'static str {
        match self {
            AssignmentStatus::Complete => "complete",
            AssignmentStatus::MissingVars(_) => "missing-vars",
            AssignmentStatus::OutOfDomain(_) => "out-of-domain",
        }
    }
}

/// Result of comparing a declared cost with the computed objective value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CostCheck {
    Match,
    Mismatch { declared: i64, computed: ObjValue },
    NotApplicable,
}

/// Satisfaction status of one constraint.
#[derive(Debug, Clone)]
pub struct ConstraintVerdict {
    pub provenance: String,
    pub satisfied: bool,
}

/// The full outcome of checking a candidate solution.
#[derive(Debug, Clone)]
pub struct Verdict {
    pub assignment_status: AssignmentStatus,
    /// One entry per instance constraint, in instance order; empty when the
    /// assignment status prevented checking.
    pub per_constraint: Vec<ConstraintVerdict>,
    /// One entry per objective, in instance order; empty when not checked.
    pub objective_values: Vec<ObjValue>,
    pub cost_check: CostCheck,
    pub accepted: bool,
    pub notes: Vec<String>,
}

impl Verdict {
    pub fn violated(&self) -> impl Iterator<Item = &ConstraintVerdict> {
        self.per_constraint.iter().filter(|c| !c.satisfied)
    }
}

fn out_of_domain_cells(instance: &Instance, a: &Assignment) -> Vec<String> {
    let mut names = Vec::new();
    for (cell, info) in instance.cells.iter().enumerate() {
        if let (Some(v), Some(domain)) = (a.get(cell), info.domain.as_ref()) {
            if !domain.contains(v) {
                names.push(info.name.clone());
            }
        }
    }
    names
}

fn check_complete(
    instance: &Instance,
    a: &Assignment,
    declared_cost: Option<i64>,
    notes: Vec<String>,
) -> Result<Verdict> {
    let mut per_constraint = Vec::with_capacity(instance.constraints.len());
    let mut all_sat = true;
    for constraint in &instance.constraints {
        let satisfied = semantics::check_constraint(&constraint.kind, a)?;
        all_sat &= satisfied;
        per_constraint.push(ConstraintVerdict {
            provenance: constraint.provenance.clone(),
            satisfied,
        });
    }
    let mut objective_values = Vec::with_capacity(instance.objectives.len());
    for objective in &instance.objectives {
        objective_values.push(eval_objective(objective, a)?);
    }
    let cost_check = match declared_cost {
        None => CostCheck::NotApplicable,
        Some(declared) => {
            let computed = if instance.objectives.len() > 1 {
                match instance.combination {
                    Combination::Lexico => &objective_values[0],
                    Combination::Pareto => {
                        return Err(Error::unsupported(
                            "a single cost cannot be verified against pareto-combined objectives",
                        ));
                    }
                }
            } else {
                objective_values.first().ok_or_else(|| {
                    Error::structure("a cost was declared but the instance has no objective")
                })?
            };
            match computed {
                ObjValue::Int(v) if *v == declared => CostCheck::Match,
                ObjValue::Int(_) => {
                    CostCheck::Mismatch { declared, computed: computed.clone() }
                }
                ObjValue::Tuple(_) => {
                    return Err(Error::unsupported(
                        "a scalar cost cannot be verified against a lexicographic objective",
                    ));
                }
            }
        }
    };
    let accepted = all_sat && !matches!(cost_check, CostCheck::Mismatch { .. });
    Ok(Verdict {
        assignment_status: AssignmentStatus::Complete,
        per_constraint,
        objective_values,
        cost_check,
        accepted,
        notes,
    })
}

/// Checks a parsed solution document against the instance.
pub fn check_solution(instance: &Instance, doc: &SolutionDoc) -> Result<Verdict> {
    let assignment = bind_assignment(instance, doc)?;
    let mut notes = Vec::new();
    if doc.sol_type == SolType::Optimum {
        notes.push(
            "optimality itself is not verified by the checker; the solver can confirm it"
                .to_string(),
        );
    }
    let out = out_of_domain_cells(instance, &assignment);
    if !out.is_empty() {
        return Ok(Verdict {
            assignment_status: AssignmentStatus::OutOfDomain(out),
            per_constraint: Vec::new(),
            objective_values: Vec::new(),
            cost_check: CostCheck::NotApplicable,
            accepted: false,
            notes,
        });
    }
    check_complete(instance, &assignment, doc.cost, notes)
}

/// Checks a raw (possibly partial) assignment against the instance.
pub fn check_assignment(instance: &Instance, a: &Assignment) -> Result<Verdict> {
    let out = out_of_domain_cells(instance, a);
    if !out.is_empty() {
        return Ok(Verdict {
            assignment_status: AssignmentStatus::OutOfDomain(out),
            per_constraint: Vec::new(),
            objective_values: Vec::new(),
            cost_check: CostCheck::NotApplicable,
            accepted: false,
            notes: Vec::new(),
        });
    }
    let missing: Vec<String> = (0..instance.cells.len())
        .filter(|c| instance.is_useful(*c) && a.get(*c).is_none())
        .map(|c| instance.cells[c].name.clone())
        .collect();
    if !missing.is_empty() {
        return Ok(Verdict {
            assignment_status: AssignmentStatus::MissingVars(missing),
            per_constraint: Vec::new(),
            objective_values: Vec::new(),
            cost_check: CostCheck::NotApplicable,
            accepted: false,
            notes: Vec::new(),
        });
    }
    check_complete(instance, a, None, Vec::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_instance, BuildOptions};

    fn build(text: &str) -> Instance {
        let mut doc = xml::load_document(text).unwrap();
        xml::resolve_aliases(&mut doc).unwrap();
        let frame = xml::validate_skeleton(&doc).unwrap();
        build_instance(&frame, &BuildOptions::default()).unwrap()
    }

    fn cop() -> Instance {
        build(
            "<instance format=\"XCSP3\" type=\"COP\"><variables>\
             <var id=\"b\">0..4</var><var id=\"c\">0..4</var></variables>\
             <constraints><intension>le(add(mul(2,b),mul(3,c)),10)</intension></constraints>\
             <objectives><maximize type=\"sum\"><list>b c</list><coeffs>400 450</coeffs></maximize></objectives>\
             </instance>",
        )
    }

    fn csp() -> Instance {
        build(
            "<instance format=\"XCSP3\" type=\"CSP\"><variables>\
             <array id=\"x\" size=\"[3]\">1..3</array><var id=\"y\">0..9</var></variables>\
             <constraints><allDifferent>x[]</allDifferent></constraints></instance>",
        )
    }

    #[test]
    fn accepts_a_correct_solution_with_cost() {
        let instance = cop();
        let doc = parse_solution(
            &instance,
            "<instantiation type=\"optimum\" cost=\"1700\"><list>b c</list><values>2 2</values></instantiation>",
        )
        .unwrap();
        let verdict = check_solution(&instance, &doc).unwrap();
        assert_eq!(verdict.assignment_status, AssignmentStatus::Complete);
        assert!(verdict.accepted);
        assert_eq!(verdict.cost_check, CostCheck::Match);
        assert_eq!(verdict.objective_values, vec![ObjValue::Int(1700)]);
        assert!(verdict.notes.iter().any(|n| n.contains("optimality")));
    }

    #[test]
    fn detects_cost_mismatch_and_violations() {
        let instance = cop();
        let doc = parse_solution(
            &instance,
            "<instantiation type=\"solution\" cost=\"1000\"><list>b c</list><values>2 2</values></instantiation>",
        )
        .unwrap();
        let verdict = check_solution(&instance, &doc).unwrap();
        assert!(!verdict.accepted);
        assert!(matches!(verdict.cost_check, CostCheck::Mismatch { declared: 1000, .. }));
        // Constraint violation: 2*4 + 3*4 = 20 > 10.
        let doc = parse_solution(
            &instance,
            "<instantiation type=\"solution\"><list>b c</list><values>4 4</values></instantiation>",
        )
        .unwrap();
        let verdict = check_solution(&instance, &doc).unwrap();
        assert!(!verdict.accepted);
        assert_eq!(verdict.violated().count(), 1);
    }

    #[test]
    fn solution_type_and_cost_rules() {
        let instance = cop();
        let missing_type =
            "<instantiation><list>b c</list><values>2 2</values></instantiation>";
        assert!(parse_solution(&instance, missing_type).is_err());
        let optimum_without_cost =
            "<instantiation type=\"optimum\"><list>b c</list><values>2 2</values></instantiation>";
        assert!(parse_solution(&instance, optimum_without_cost).is_err());

        let csp = csp();
        let cost_on_csp =
            "<instantiation type=\"solution\" cost=\"3\"><list>x[] y</list><values>1 2 3 0</values></instantiation>";
        assert!(parse_solution(&csp, cost_on_csp).is_err());
        let optimum_on_csp =
            "<instantiation type=\"optimum\" cost=\"3\"><list>x[] y</list><values>1 2 3 0</values></instantiation>";
        assert!(parse_solution(&csp, optimum_on_csp).is_err());
    }

    #[test]
    fn useless_variables_have_three_representations() {
        let instance = csp();
        // y occurs in no constraint: it may be omitted, starred, or valued.
        for doc_text in [
            "<instantiation type=\"solution\"><list>x[]</list><values>1 2 3</values></instantiation>",
            "<instantiation type=\"solution\"><list>x[] y</list><values>1 2 3 *</values></instantiation>",
            "<instantiation type=\"solution\"><list>x[] y</list><values>1 2 3 7</values></instantiation>",
        ] {
            let doc = parse_solution(&instance, doc_text).unwrap();
            let verdict = check_solution(&instance, &doc).unwrap();
            assert!(verdict.accepted, "{doc_text}");
        }
        // A useful variable cannot be starred or missing.
        let starred =
            "<instantiation type=\"solution\"><list>x[]</list><values>1 * 3</values></instantiation>";
        let doc = parse_solution(&instance, starred).unwrap();
        assert!(check_solution(&instance, &doc).is_err());
        let missing =
            "<instantiation type=\"solution\"><list>x[0] x[1]</list><values>1 2</values></instantiation>";
        let doc = parse_solution(&instance, missing).unwrap();
        assert!(check_solution(&instance, &doc).is_err());
    }

    #[test]
    fn out_of_domain_skips_constraint_checks() {
        let instance = csp();
        let doc = parse_solution(
            &instance,
            "<instantiation type=\"solution\"><list>x[]</list><values>1 2 9</values></instantiation>",
        )
        .unwrap();
        let verdict = check_solution(&instance, &doc).unwrap();
        match &verdict.assignment_status {
            AssignmentStatus::OutOfDomain(names) => assert_eq!(names, &vec!["x[2]".to_string()]),
            other => panic!("unexpected status {other:?}"),
        }
        assert!(verdict.per_constraint.is_empty());
        assert!(!verdict.accepted);
    }

    #[test]
    fn duplicate_and_miscounted_solutions_rejected() {
        let instance = csp();
        let dup =
            "<instantiation type=\"solution\"><list>x[0] x[0] x[2]</list><values>1 1 3</values></instantiation>";
        assert!(parse_solution(&instance, dup).is_err());
        let short =
            "<instantiation type=\"solution\"><list>x[]</list><values>1 2</values></instantiation>";
        assert!(parse_solution(&instance, short).is_err());
    }

    #[test]
    fn partial_assignment_status() {
        let instance = csp();
        let mut a = Assignment::new(instance.cells.len());
        a.set(0, 1);
        let verdict = check_assignment(&instance, &a).unwrap();
        assert!(matches!(verdict.assignment_status, AssignmentStatus::MissingVars(_)));
        a.set(1, 2);
        a.set(2, 3);
        let verdict = check_assignment(&instance, &a).unwrap();
        assert!(verdict.accepted);
    }

    #[test]
    fn lex_objective_costs_are_refused() {
        let instance = build(
            "<instance format=\"XCSP3\" type=\"COP\"><variables>\
             <var id=\"a\">0..4</var><var id=\"b\">0..4</var></variables>\
             <constraints/>\
             <objectives><minimize type=\"lex\"><list>a b</list></minimize></objectives>\
             </instance>",
        );
        let doc = parse_solution(
            &instance,
            "<instantiation type=\"solution\" cost=\"3\"><list>a b</list><values>1 2</values></instantiation>",
        )
        .unwrap();
        let err = check_solution(&instance, &doc).unwrap_err();
        assert_eq!(err.kind, ErrorKind::Unsupported);
        // Without a declared cost the lex objective value is reported.
        let doc = parse_solution(
            &instance,
            "<instantiation type=\"solution\"><list>a b</list><values>1 2</values></instantiation>",
        )
        .unwrap();
        let verdict = check_solution(&instance, &doc).unwrap();
        assert_eq!(verdict.objective_values, vec![ObjValue::Tuple(vec![1, 2])]);
        assert!(verdict.accepted);
    }

    #[test]
    fn multi_objective_cost_rules() {
        let two = "<instance format=\"XCSP3\" type=\"COP\"><variables>\
             <var id=\"a\">0..4</var><var id=\"b\">0..4</var></variables>\
             <constraints/>\
             <objectives combination=\"{}\"><minimize>a</minimize><maximize>b</maximize></objectives>\
             </instance>";
        let lexico = build(&two.replace("{}", "lexico"));
        let doc = parse_solution(
            &lexico,
            "<instantiation type=\"solution\" cost=\"1\"><list>a b</list><values>1 2</values></instantiation>",
        )
        .unwrap();
        let verdict = check_solution(&lexico, &doc).unwrap();
        assert_eq!(verdict.cost_check, CostCheck::Match);
        assert_eq!(
            verdict.objective_values,
            vec![ObjValue::Int(1), ObjValue::Int(2)]
        );

        let pareto = build(&two.replace("{}", "pareto"));
        let doc = parse_solution(
            &pareto,
            "<instantiation type=\"solution\" cost=\"1\"><list>a b</list><values>1 2</values></instantiation>",
        )
        .unwrap();
        let err = check_solution(&pareto, &doc).unwrap_err();
        assert_eq!(err.kind, ErrorKind::Unsupported);
    }
}
