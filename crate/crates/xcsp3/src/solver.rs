//! An exhaustive reference solver for desk-scale instances: chronological
//! backtracking over the declared variable order with ascending values,
//! checking each constraint as soon as its scope is fully assigned.
//!
//! It is meant as ground truth, not as a performance contender: the search
//! is complete and deterministic, counts are exact, and optimization
//! exhausts the space (with sound bounding for the specialized sum,
//! minimum, and maximum objectives).

use std::time::{Duration, Instant};

use crate::checker::{self, ObjValue};
use crate::error::{Error, Result};
use crate::grammar::Expression;
use crate::model::{ConstraintKind, Instance, ObjKind, Objective, ObjectiveForm};
use crate::semantics::{self, Assignment};

/// What the search should produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMode {
    /// Stop at the first solution.
    FindOne,
    /// Count all solutions, optionally stopping at a limit.
    CountAll { limit: Option<u64> },
    /// Find a provably optimal solution.
    Optimize,
}

/// Search limits and mode.
#[derive(Debug, Clone)]
pub struct SearchConfig {
    pub mode: SearchMode,
    /// Maximum number of value assignments to try.
    pub node_budget: Option<u64>,
    pub time_budget: Option<Duration>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { mode: SearchMode::FindOne, node_budget: None, time_budget: None }
    }
}

/// Outcome classification of a search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Sat,
    Unsat,
    /// Optimal cost, proved by exhaustion.
    Optimum(i64),
    /// The node or time budget ran out before the search concluded.
    BudgetExhausted,
}

/// Everything a search produced.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// First solution found, or the optimal one when optimizing; assigns
    /// only variables that occur in constraints or objectives.
    pub witness: Option<Assignment>,
    /// Exact solution count (counting mode only).
    pub count: Option<u64>,
    /// Number of value assignments tried.
    pub nodes: u64,
    pub notes: Vec<String>,
}

/// Bounding data for one branch-and-bound objective term.
struct BoundTerm {
    cell: usize,
    coeff: i64,
    /// Smallest and largest achievable contribution `coeff * value`.
    lo: i128,
    hi: i128,
}

struct Bounder {
    kind: ObjKind,
    terms: Vec<BoundTerm>,
}

impl Bounder {
    /// The best cost still reachable below the current node: a lower bound
    /// when minimizing, an upper bound when maximizing.
    fn optimistic(&self, a: &Assignment, minimize: bool) -> i128 {
        let contribution = |t: &BoundTerm| match a.get(t.cell) {
            Some(v) => (v as i128) * (t.coeff as i128),
            None if minimize => t.lo,
            None => t.hi,
        };
        match self.kind {
            ObjKind::Sum => self.terms.iter().map(contribution).sum(),
            ObjKind::Minimum => {
                self.terms.iter().map(contribution).min().expect("objective list is nonempty")
            }
            ObjKind::Maximum => {
                self.terms.iter().map(contribution).max().expect("objective list is nonempty")
            }
            _ => unreachable!("only sum, minimum and maximum objectives are bounded"),
        }
    }
}

struct Search<'a> {
    order: Vec<usize>,
    values: Vec<Vec<i64>>,
    units: Vec<&'a ConstraintKind>,
    /// Unit indexes to check after assigning the cell at each depth.
    buckets: Vec<Vec<usize>>,
    a: Assignment,
    mode: SearchMode,
    nodes: u64,
    node_budget: Option<u64>,
    deadline: Option<Instant>,
    out_of_budget: bool,
    stop: bool,
    count: u64,
    factor: u64,
    witness: Option<Assignment>,
    objective: Option<&'a Objective>,
    minimize: bool,
    best: Option<i64>,
    bounder: Option<Bounder>,
}

impl Search<'_> {
    fn budget_exceeded(&self) -> bool {
        // Node budgets are exact; the clock is polled only every 1024
        // nodes to keep the per-node cost down.
        self.node_budget.is_some_and(|limit| self.nodes >= limit)
            || (self.nodes % 1024 == 0
                && self.deadline.is_some_and(|deadline| Instant::now() >= deadline))
    }

    fn dfs(&mut self, depth: usize) -> Result<()> {
        if self.stop {
            return Ok(());
        }
        if depth == self.order.len() {
            return self.on_solution();
        }
        let cell = self.order[depth];
        for i in 0..self.values[depth].len() {
            if self.stop {
                break;
            }
            if self.budget_exceeded() {
                self.out_of_budget = true;
                self.stop = true;
                break;
            }
            self.nodes += 1;
            let v = self.values[depth][i];
            self.a.set(cell, v);
            let mut feasible = true;
            for u in 0..self.buckets[depth].len() {
                let unit = self.buckets[depth][u];
                if !semantics::check_constraint(self.units[unit], &self.a)? {
                    feasible = false;
                    break;
                }
            }
            if feasible && !self.bound_prunes() {
                self.dfs(depth + 1)?;
            }
            self.a.unset(cell);
        }
        Ok(())
    }

    fn bound_prunes(&self) -> bool {
        let (Some(bounder), Some(best)) = (&self.bounder, self.best) else {
            return false;
        };
        let optimistic = bounder.optimistic(&self.a, self.minimize);
        if self.minimize {
            optimistic >= best as i128
        } else {
            optimistic <= best as i128
        }
    }

    fn on_solution(&mut self) -> Result<()> {
        match self.mode {
            SearchMode::FindOne => {
                self.witness = Some(self.a.clone());
                self.stop = true;
            }
            SearchMode::CountAll { limit } => {
                self.count = self.count.saturating_add(self.factor);
                if self.witness.is_none() {
                    self.witness = Some(self.a.clone());
                }
                if limit.is_some_and(|l| self.count >= l) {
                    self.stop = true;
                }
            }
            SearchMode::Optimize => {
                let objective = self.objective.expect("optimize mode requires an objective");
                let cost = match checker::eval_objective(objective, &self.a)? {
                    ObjValue::Int(v) => v,
                    ObjValue::Tuple(_) => unreachable!("lex objectives are rejected before search"),
                };
                let improved = match self.best {
                    None => true,
                    Some(best) => {
                        if self.minimize {
                            cost < best
                        } else {
                            cost > best
                        }
                    }
                };
                if improved {
                    self.best = Some(cost);
                    self.witness = Some(self.a.clone());
                }
            }
        }
        Ok(())
    }
}

/// Runs an exhaustive search over the instance.
pub fn solve(instance: &Instance, config: &SearchConfig) -> Result<SolveResult> {
    let mut notes = Vec::new();

    // Finite-domain guard and empty-domain short circuit, over every cell
    // that has a domain at all: a variable with an empty domain admits no
    // total assignment, wherever it occurs.
    for (ix, cell) in instance.cells.iter().enumerate() {
        let Some(domain) = &cell.domain else { continue };
        if !domain.is_finite() {
            return Err(Error::unsupported(format!(
                "\"{}\" has an unbounded domain; the exhaustive solver needs finite domains",
                cell.name
            )));
        }
        if domain.is_empty() {
            notes.push(format!(
                "\"{}\" has an empty domain, so no total assignment exists",
                instance.cells[ix].name
            ));
            let count =
                matches!(config.mode, SearchMode::CountAll { .. }).then_some(0);
            return Ok(SolveResult {
                status: SolveStatus::Unsat,
                witness: None,
                count,
                nodes: 0,
                notes,
            });
        }
    }

    let objective = match config.mode {
        SearchMode::Optimize => {
            if instance.objectives.is_empty() {
                return Err(Error::unsupported(
                    "cannot optimize: the instance declares no objective",
                ));
            }
            if instance.objectives.len() > 1 {
                return Err(Error::unsupported(
                    "optimization over several combined objectives is not supported",
                ));
            }
            let objective = &instance.objectives[0];
            if matches!(&objective.form, ObjectiveForm::Specialized { kind: ObjKind::Lex, .. }) {
                return Err(Error::unsupported(
                    "optimization of a lexicographic objective vector is not supported",
                ));
            }
            Some(objective)
        }
        _ => None,
    };

    // Search order: declaration order over the variables that actually
    // occur in constraints or objectives.
    let order: Vec<usize> = (0..instance.cells.len())
        .filter(|c| instance.is_useful(*c) && instance.cells[*c].domain.is_some())
        .collect();
    let values: Vec<Vec<i64>> = order
        .iter()
        .map(|c| instance.cells[*c].domain.as_ref().expect("filtered above").iter().collect())
        .collect();
    let mut position = vec![usize::MAX; instance.cells.len()];
    for (depth, cell) in order.iter().enumerate() {
        position[*cell] = depth;
    }

    // Checkable units: whole constraints, except that a slide contributes
    // its windows individually so each window prunes as early as possible.
    let mut units: Vec<&ConstraintKind> = Vec::new();
    for constraint in &instance.constraints {
        match &constraint.kind {
            ConstraintKind::Slide { windows } => units.extend(windows.iter()),
            other => units.push(other),
        }
    }
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); order.len()];
    let empty = Assignment::new(instance.cells.len());
    for (u, unit) in units.iter().enumerate() {
        let mut cells = Vec::new();
        unit.collect_cells(&mut cells);
        match cells.iter().map(|c| position[*c]).max() {
            Some(depth) => buckets[depth].push(u),
            None => {
                // A constraint over no variables is decided immediately.
                if !semantics::check_constraint(unit, &empty)? {
                    notes.push("a constant constraint is violated".to_string());
                    let count =
                        matches!(config.mode, SearchMode::CountAll { .. }).then_some(0);
                    return Ok(SolveResult {
                        status: SolveStatus::Unsat,
                        witness: None,
                        count,
                        nodes: 0,
                        notes,
                    });
                }
            }
        }
    }

    // Unconstrained variables multiply the solution count without needing
    // to be searched.
    let mut factor: u64 = 1;
    if matches!(config.mode, SearchMode::CountAll { .. }) {
        let mut unconstrained = 0usize;
        for (ix, cell) in instance.cells.iter().enumerate() {
            let Some(domain) = &cell.domain else { continue };
            if !instance.is_useful(ix) {
                unconstrained += 1;
                factor = factor.saturating_mul(domain.size().expect("finite by the guard above"));
            }
        }
        if unconstrained > 0 {
            notes.push(format!(
                "{unconstrained} unconstrained variable(s) contribute a factor of {factor} to the count"
            ));
        }
    }

    let bounder = objective.and_then(bounder_for(instance));
    let minimize = objective.is_some_and(|o| o.minimize);
    let mut search = Search {
        order,
        values,
        units,
        buckets,
        a: Assignment::new(instance.cells.len()),
        mode: config.mode,
        nodes: 0,
        node_budget: config.node_budget,
        deadline: config.time_budget.map(|d| Instant::now() + d),
        out_of_budget: false,
        stop: false,
        count: 0,
        factor,
        witness: None,
        objective,
        minimize,
        best: None,
        bounder,
    };
    search.dfs(0)?;

    let mut notes = notes;
    let count = matches!(config.mode, SearchMode::CountAll { .. }).then_some(search.count);
    let status = if search.out_of_budget {
        if let Some(best) = search.best {
            notes.push(format!("best cost before the budget ran out: {best}"));
        }
        if let SearchMode::CountAll { .. } = config.mode {
            notes.push(format!("solutions counted before the budget ran out: {}", search.count));
        }
        SolveStatus::BudgetExhausted
    } else {
        match config.mode {
            SearchMode::FindOne => {
                if search.witness.is_some() {
                    SolveStatus::Sat
                } else {
                    SolveStatus::Unsat
                }
            }
            SearchMode::CountAll { limit } => {
                if limit.is_some_and(|l| search.count >= l) {
                    notes.push(
                        "stopped at the requested limit; more solutions may exist".to_string(),
                    );
                }
                if search.count > 0 {
                    SolveStatus::Sat
                } else {
                    SolveStatus::Unsat
                }
            }
            SearchMode::Optimize => match search.best {
                Some(best) => SolveStatus::Optimum(best),
                None => SolveStatus::Unsat,
            },
        }
    };
    Ok(SolveResult {
        status,
        witness: search.witness,
        count,
        nodes: search.nodes,
        notes,
    })
}

/// Builds the branch-and-bound helper when the objective is a specialized
/// sum, minimum, or maximum over plain variables.
fn bounder_for(instance: &Instance) -> impl Fn(&Objective) -> Option<Bounder> + '_ {
    move |objective| {
        let ObjectiveForm::Specialized { kind, terms, coeffs } = &objective.form else {
            return None;
        };
        if !matches!(kind, ObjKind::Sum | ObjKind::Minimum | ObjKind::Maximum) {
            return None;
        }
        let mut bound_terms = Vec::with_capacity(terms.len());
        for (term, &coeff) in terms.iter().zip(coeffs) {
            let Expression::Cell(cell) = term else { return None };
            let domain = instance.cells[*cell].domain.as_ref()?;
            let (lo_bound, hi_bound) = domain.bounds()?;
            let lo = lo_bound.finite()? as i128;
            let hi = hi_bound.finite()? as i128;
            let (c_lo, c_hi) = if coeff >= 0 {
                (lo * coeff as i128, hi * coeff as i128)
            } else {
                (hi * coeff as i128, lo * coeff as i128)
            };
            bound_terms.push(BoundTerm { cell: *cell, coeff, lo: c_lo, hi: c_hi });
        }
        Some(Bounder { kind: *kind, terms: bound_terms })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_instance, BuildOptions};
    use crate::xml;

    fn build(text: &str) -> Instance {
        let mut doc = xml::load_document(text).unwrap();
        xml::resolve_aliases(&mut doc).unwrap();
        let frame = xml::validate_skeleton(&doc).unwrap();
        build_instance(&frame, &BuildOptions::default()).unwrap()
    }

    fn count(instance: &Instance) -> u64 {
        let config = SearchConfig {
            mode: SearchMode::CountAll { limit: None },
            ..SearchConfig::default()
        };
        let result = solve(instance, &config).unwrap();
        result.count.unwrap()
    }

    fn latin3() -> Instance {
        build(
            "<instance format=\"XCSP3\" type=\"CSP\"><variables>\
             <array id=\"x\" size=\"[3][3]\">1..3</array></variables><constraints>\
             <group><allDifferent>%...</allDifferent>\
             <args>x[0][]</args><args>x[1][]</args><args>x[2][]</args>\
             <args>x[][0]</args><args>x[][1]</args><args>x[][2]</args></group>\
             </constraints></instance>",
        )
    }

    #[test]
    fn counts_latin_squares_of_order_3() {
        assert_eq!(count(&latin3()), 12);
    }

    #[test]
    fn find_one_returns_the_lexicographically_first_solution() {
        let instance = latin3();
        let result = solve(&instance, &SearchConfig::default()).unwrap();
        assert_eq!(result.status, SolveStatus::Sat);
        let witness = result.witness.unwrap();
        let values: Vec<i64> = (0..9).map(|c| witness.get(c).unwrap()).collect();
        assert_eq!(values, vec![1, 2, 3, 2, 3, 1, 3, 1, 2]);
    }

    #[test]
    fn optimizes_with_and_without_bounding() {
        // Same model twice: once with a specialized sum objective (which
        // the solver bounds) and once with an equivalent expression
        // objective (which it exhausts). Both must agree.
        let specialized = build(
            "<instance format=\"XCSP3\" type=\"COP\"><variables>\
             <var id=\"b\">0..4</var><var id=\"c\">0..4</var></variables>\
             <constraints><intension>le(add(mul(2,b),mul(3,c)),10)</intension></constraints>\
             <objectives><maximize type=\"sum\"><list>b c</list><coeffs>400 450</coeffs></maximize></objectives>\
             </instance>",
        );
        let expression = build(
            "<instance format=\"XCSP3\" type=\"COP\"><variables>\
             <var id=\"b\">0..4</var><var id=\"c\">0..4</var></variables>\
             <constraints><intension>le(add(mul(2,b),mul(3,c)),10)</intension></constraints>\
             <objectives><maximize>add(mul(400,b),mul(450,c))</maximize></objectives>\
             </instance>",
        );
        let config = SearchConfig { mode: SearchMode::Optimize, ..SearchConfig::default() };
        let fast = solve(&specialized, &config).unwrap();
        let slow = solve(&expression, &config).unwrap();
        assert_eq!(fast.status, SolveStatus::Optimum(1700));
        assert_eq!(slow.status, SolveStatus::Optimum(1700));
        let w = fast.witness.unwrap();
        assert_eq!((w.get(0), w.get(1)), (Some(2), Some(2)));
        let w = slow.witness.unwrap();
        assert_eq!((w.get(0), w.get(1)), (Some(2), Some(2)));
        // Bounding must not have cost the search any solutions, only nodes.
        assert!(fast.nodes <= slow.nodes);
    }

    #[test]
    fn slide_windows_prune_during_search() {
        let instance = build(
            "<instance format=\"XCSP3\" type=\"CSP\"><variables>\
             <array id=\"x\" size=\"[4]\">1..5</array></variables><constraints>\
             <slide id=\"c1\"><list>x[]</list><intension>eq(add(%0,%1),%2)</intension></slide>\
             </constraints></instance>",
        );
        assert_eq!(count(&instance), 4);
    }

    #[test]
    fn unconstrained_variables_multiply_the_count() {
        let instance = build(
            "<instance format=\"XCSP3\" type=\"CSP\"><variables>\
             <var id=\"x\">1..3</var><var id=\"y\">1..4</var><var id=\"z\">0 1</var>\
             </variables><constraints><intension>lt(x,3)</intension></constraints></instance>",
        );
        // x has 2 satisfying values; y and z are unconstrained.
        assert_eq!(count(&instance), 2 * 4 * 2);
    }

    #[test]
    fn empty_domain_means_unsat() {
        let instance = build(
            "<instance format=\"XCSP3\" type=\"CSP\"><variables>\
             <var id=\"x\"></var><var id=\"y\">0 1</var></variables>\
             <constraints><intension>le(y,1)</intension></constraints></instance>",
        );
        let result = solve(
            &instance,
            &SearchConfig { mode: SearchMode::CountAll { limit: None }, ..Default::default() },
        )
        .unwrap();
        assert_eq!(result.status, SolveStatus::Unsat);
        assert_eq!(result.count, Some(0));
        assert!(result.notes.iter().any(|n| n.contains("empty domain")));
    }

    #[test]
    fn unbounded_domain_is_unsupported() {
        let instance = build(
            "<instance format=\"XCSP3\" type=\"CSP\"><variables>\
             <var id=\"x\">0..+infinity</var></variables>\
             <constraints><intension>ge(x,5)</intension></constraints></instance>",
        );
        let err = solve(&instance, &SearchConfig::default()).unwrap_err();
        assert_eq!(err.kind, crate::error::ErrorKind::Unsupported);
    }

    #[test]
    fn budgets_interrupt_the_search() {
        let config = SearchConfig {
            mode: SearchMode::CountAll { limit: None },
            node_budget: Some(64),
            time_budget: None,
        };
        let result = solve(&latin3(), &config).unwrap();
        assert_eq!(result.status, SolveStatus::BudgetExhausted);
        assert!(result.nodes <= 64);
    }

    #[test]
    fn count_limit_stops_early() {
        let config = SearchConfig {
            mode: SearchMode::CountAll { limit: Some(5) },
            ..SearchConfig::default()
        };
        let result = solve(&latin3(), &config).unwrap();
        assert_eq!(result.status, SolveStatus::Sat);
        assert_eq!(result.count, Some(5));
        assert!(result.notes.iter().any(|n| n.contains("limit")));
    }

    #[test]
    fn unsatisfiable_instances_are_reported() {
        let instance = build(
            "<instance format=\"XCSP3\" type=\"CSP\"><variables>\
             <var id=\"x\">0 1</var><var id=\"y\">0 1</var></variables>\
             <constraints><allDifferent>x y</allDifferent><intension>eq(x,y)</intension>\
             </constraints></instance>",
        );
        let result = solve(&instance, &SearchConfig::default()).unwrap();
        assert_eq!(result.status, SolveStatus::Unsat);
        assert!(result.witness.is_none());
    }

    #[test]
    fn solver_and_checker_agree_on_witnesses() {
        let instance = latin3();
        let result = solve(&instance, &SearchConfig::default()).unwrap();
        let verdict =
            crate::checker::check_assignment(&instance, &result.witness.unwrap()).unwrap();
        assert!(verdict.accepted);
    }
}
