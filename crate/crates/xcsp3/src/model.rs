//! Instance construction: variables and arrays with resolved domains,
//! compact-list expansion, constraint normalization, group and block
//! expansion, slide, objectives and useless-variable analysis.

use std::collections::HashMap;

use crate::error::{Error, ErrorKind, Location, Result};
use crate::grammar::{
    self, Cell, CondOperand, Condition, Domain, Expression, Indexer, VarAccess,
};
use crate::semantics::{Automaton, Mdd};
use crate::xml::{DocumentFrame, Framework, RawElement};

// ---------------------------------------------------------------------------
// Model types
// ---------------------------------------------------------------------------

/// One concrete integer variable: a scalar declaration or one array cell.
#[derive(Debug, Clone)]
pub struct CellInfo {
    /// Canonical name, e.g. `x` or `q[2][3]`.
    pub name: String,
    /// `None` means the cell has no declared domain (an array cell covered
    /// by no domain rule); such cells may not occur in constraints.
    pub domain: Option<Domain>,
    /// Index of the owning declaration in [`Instance::decls`].
    pub decl: usize,
}

/// A `<var>` or `<array>` declaration.
#[derive(Debug, Clone)]
pub struct VariableDecl {
    pub id: String,
    pub note: Option<String>,
    pub classes: Vec<String>,
    /// Array dimensions; empty for scalar variables.
    pub dims: Vec<usize>,
    /// First cell index in [`Instance::cells`].
    pub first_cell: usize,
    pub cell_count: usize,
}

/// A token that is either an integer literal or a variable reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarOrVal {
    Val(i64),
    Cell(usize),
}

/// One entry of a cardinality `<occurs>` list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OccursSpec {
    Val(i64),
    Cell(usize),
    Range(i64, i64),
}

/// Comparison operator used by ordered and lex constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderOp {
    Lt,
    Le,
    Ge,
    Gt,
}

impl OrderOp {
    pub fn name(self) -> &'static str {
        match self {
            OrderOp::Lt => "lt",
            OrderOp::Le => "le",
            OrderOp::Ge => "ge",
            OrderOp::Gt => "gt",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "lt" => OrderOp::Lt,
            "le" => OrderOp::Le,
            "ge" => OrderOp::Ge,
            "gt" => OrderOp::Gt,
            _ => return None,
        })
    }

    pub fn holds<T: Ord>(self, a: T, b: T) -> bool {
        match self {
            OrderOp::Lt => a < b,
            OrderOp::Le => a <= b,
            OrderOp::Ge => a >= b,
            OrderOp::Gt => a > b,
        }
    }
}

/// Rank policy of an `<index>` element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Rank {
    #[default]
    Any,
    First,
    Last,
}

/// The `<index>` part of minimum/maximum/element constraints.
#[derive(Debug, Clone, Copy)]
pub struct IndexSpec {
    pub cell: usize,
    /// Value of startIndex on the list the index points into.
    pub start: i64,
    pub rank: Rank,
}

/// Table of an extension constraint.
#[derive(Debug, Clone)]
pub enum Table {
    /// Arity ≥ 2: explicit rows, possibly containing `*`.
    Rows { rows: Vec<Vec<Cell>>, conflicts: bool },
    /// Arity 1: values and intervals in domain syntax.
    Unary { values: Domain, conflicts: bool },
}

/// The three element-constraint variants.
#[derive(Debug, Clone)]
pub enum ElementForm {
    /// Some list variable equals the value.
    VarsValue { list: Vec<usize>, value: VarOrVal },
    /// The list variable selected by the index equals the value.
    VarsIndexValue { list: Vec<usize>, index: IndexSpec, value: VarOrVal },
    /// The listed constant selected by the index equals the value.
    ValuesIndexValue { list: Vec<i64>, index: IndexSpec, value: VarOrVal },
}

/// The three channel-constraint forms.
#[derive(Debug, Clone)]
pub enum ChannelForm {
    OneList { list: Vec<usize>, start: i64 },
    TwoLists { x: Vec<usize>, x_start: i64, y: Vec<usize>, y_start: i64 },
    Value { list: Vec<usize>, start: i64, value: usize },
}

/// A normalized constraint payload.
#[derive(Debug, Clone)]
pub enum ConstraintKind {
    Intension {
        expr: Expression,
    },
    Extension {
        scope: Vec<usize>,
        table: Table,
    },
    Regular {
        scope: Vec<usize>,
        automaton: Automaton,
    },
    Mdd {
        scope: Vec<usize>,
        mdd: Mdd,
    },
    AllDifferent {
        terms: Vec<Expression>,
        except: Vec<i64>,
    },
    AllDifferentLists {
        lists: Vec<Vec<usize>>,
        except: Vec<Vec<i64>>,
    },
    AllDifferentMatrix {
        matrix: Vec<Vec<usize>>,
        except: Vec<i64>,
    },
    AllEqual {
        scope: Vec<usize>,
    },
    Ordered {
        scope: Vec<usize>,
        lengths: Option<Vec<VarOrVal>>,
        op: OrderOp,
    },
    LexLists {
        lists: Vec<Vec<usize>>,
        op: OrderOp,
    },
    LexMatrix {
        matrix: Vec<Vec<usize>>,
        op: OrderOp,
    },
    Sum {
        terms: Vec<Expression>,
        coeffs: Option<Vec<VarOrVal>>,
        condition: Condition,
    },
    Count {
        scope: Vec<usize>,
        values: Vec<VarOrVal>,
        condition: Condition,
    },
    NValues {
        scope: Vec<usize>,
        except: Vec<i64>,
        condition: Condition,
    },
    Cardinality {
        scope: Vec<usize>,
        closed: bool,
        values: Vec<VarOrVal>,
        occurs: Vec<OccursSpec>,
    },
    Minimum {
        scope: Vec<usize>,
        condition: Option<Condition>,
        index: Option<IndexSpec>,
    },
    Maximum {
        scope: Vec<usize>,
        condition: Option<Condition>,
        index: Option<IndexSpec>,
    },
    Element(ElementForm),
    Channel(ChannelForm),
    NoOverlap {
        /// One entry per box; inner vectors hold one origin cell per
        /// dimension (length 1 in the one-dimensional form).
        origins: Vec<Vec<usize>>,
        lengths: Vec<Vec<VarOrVal>>,
        zero_ignored: bool,
    },
    Cumulative {
        origins: Vec<usize>,
        lengths: Vec<VarOrVal>,
        ends: Option<Vec<usize>>,
        heights: Vec<VarOrVal>,
        condition: Condition,
    },
    Circuit {
        scope: Vec<usize>,
        start: i64,
        size: Option<VarOrVal>,
    },
    Instantiation {
        scope: Vec<usize>,
        /// `None` marks a `*` entry, which constrains nothing.
        values: Vec<Option<i64>>,
    },
    Slide {
        /// The instantiated window constraints, in window order.
        windows: Vec<ConstraintKind>,
    },
}

impl ConstraintKind {
    /// The element name this payload was parsed from.
    pub fn name(&self) -> &'static str {
        match self {
            ConstraintKind::Intension { .. } => "intension",
            ConstraintKind::Extension { .. } => "extension",
            ConstraintKind::Regular { .. } => "regular",
            ConstraintKind::Mdd { .. } => "mdd",
            ConstraintKind::AllDifferent { .. }
            | ConstraintKind::AllDifferentLists { .. }
            | ConstraintKind::AllDifferentMatrix { .. } => "allDifferent",
            ConstraintKind::AllEqual { .. } => "allEqual",
            ConstraintKind::Ordered { .. } => "ordered",
            ConstraintKind::LexLists { .. } | ConstraintKind::LexMatrix { .. } => "lex",
            ConstraintKind::Sum { .. } => "sum",
            ConstraintKind::Count { .. } => "count",
            ConstraintKind::NValues { .. } => "nValues",
            ConstraintKind::Cardinality { .. } => "cardinality",
            ConstraintKind::Minimum { .. } => "minimum",
            ConstraintKind::Maximum { .. } => "maximum",
            ConstraintKind::Element(_) => "element",
            ConstraintKind::Channel(_) => "channel",
            ConstraintKind::NoOverlap { .. } => "noOverlap",
            ConstraintKind::Cumulative { .. } => "cumulative",
            ConstraintKind::Circuit { .. } => "circuit",
            ConstraintKind::Instantiation { .. } => "instantiation",
            ConstraintKind::Slide { .. } => "slide",
        }
    }

    /// Appends every referenced cell index to `out`.
    pub fn collect_cells(&self, out: &mut Vec<usize>) {
        fn from_var_or_val(v: &VarOrVal, out: &mut Vec<usize>) {
            if let VarOrVal::Cell(c) = v {
                out.push(*c);
            }
        }
        fn from_condition(c: &Condition, out: &mut Vec<usize>) {
            if let CondOperand::Cell(cell) = &c.operand {
                out.push(*cell);
            }
        }
        match self {
            ConstraintKind::Intension { expr } => expr.collect_cells(out),
            ConstraintKind::Extension { scope, .. }
            | ConstraintKind::Regular { scope, .. }
            | ConstraintKind::Mdd { scope, .. }
            | ConstraintKind::AllEqual { scope } => out.extend(scope),
            ConstraintKind::AllDifferent { terms, .. } => {
                for t in terms {
                    t.collect_cells(out);
                }
            }
            ConstraintKind::AllDifferentLists { lists, .. }
            | ConstraintKind::LexLists { lists, .. } => {
                for l in lists {
                    out.extend(l);
                }
            }
            ConstraintKind::AllDifferentMatrix { matrix, .. }
            | ConstraintKind::LexMatrix { matrix, .. } => {
                for row in matrix {
                    out.extend(row);
                }
            }
            ConstraintKind::Ordered { scope, lengths, .. } => {
                out.extend(scope);
                for l in lengths.iter().flatten() {
                    from_var_or_val(l, out);
                }
            }
            ConstraintKind::Sum { terms, coeffs, condition } => {
                for t in terms {
                    t.collect_cells(out);
                }
                for c in coeffs.iter().flatten() {
                    from_var_or_val(c, out);
                }
                from_condition(condition, out);
            }
            ConstraintKind::Count { scope, values, condition } => {
                out.extend(scope);
                for v in values {
                    from_var_or_val(v, out);
                }
                from_condition(condition, out);
            }
            ConstraintKind::NValues { scope, condition, .. } => {
                out.extend(scope);
                from_condition(condition, out);
            }
            ConstraintKind::Cardinality { scope, values, occurs, .. } => {
                out.extend(scope);
                for v in values {
                    from_var_or_val(v, out);
                }
                for o in occurs {
                    if let OccursSpec::Cell(c) = o {
                        out.push(*c);
                    }
                }
            }
            ConstraintKind::Minimum { scope, condition, index }
            | ConstraintKind::Maximum { scope, condition, index } => {
                out.extend(scope);
                if let Some(c) = condition {
                    from_condition(c, out);
                }
                if let Some(ix) = index {
                    out.push(ix.cell);
                }
            }
            ConstraintKind::Element(form) => match form {
                ElementForm::VarsValue { list, value } => {
                    out.extend(list);
                    from_var_or_val(value, out);
                }
                ElementForm::VarsIndexValue { list, index, value } => {
                    out.extend(list);
                    out.push(index.cell);
                    from_var_or_val(value, out);
                }
                ElementForm::ValuesIndexValue { index, value, .. } => {
                    out.push(index.cell);
                    from_var_or_val(value, out);
                }
            },
            ConstraintKind::Channel(form) => match form {
                ChannelForm::OneList { list, .. } => out.extend(list),
                ChannelForm::TwoLists { x, y, .. } => {
                    out.extend(x);
                    out.extend(y);
                }
                ChannelForm::Value { list, value, .. } => {
                    out.extend(list);
                    out.push(*value);
                }
            },
            ConstraintKind::NoOverlap { origins, lengths, .. } => {
                for o in origins {
                    out.extend(o);
                }
                for tuple in lengths {
                    for l in tuple {
                        from_var_or_val(l, out);
                    }
                }
            }
            ConstraintKind::Cumulative { origins, lengths, ends, heights, condition } => {
                out.extend(origins);
                for l in lengths {
                    from_var_or_val(l, out);
                }
                if let Some(e) = ends {
                    out.extend(e);
                }
                for h in heights {
                    from_var_or_val(h, out);
                }
                from_condition(condition, out);
            }
            ConstraintKind::Circuit { scope, size, .. } => {
                out.extend(scope);
                if let Some(s) = size {
                    from_var_or_val(s, out);
                }
            }
            ConstraintKind::Instantiation { scope, .. } => out.extend(scope),
            ConstraintKind::Slide { windows } => {
                for w in windows {
                    w.collect_cells(out);
                }
            }
        }
    }
}

/// A constraint with its identity and metadata.
#[derive(Debug, Clone)]
pub struct NormConstraint {
    /// The id attribute, a group-member id like `g[2]`, or a positional
    /// `#k` for anonymous constraints.
    pub provenance: String,
    pub classes: Vec<String>,
    pub note: Option<String>,
    pub kind: ConstraintKind,
    pub location: Location,
}

/// Specialized objective types.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjKind {
    Sum,
    Product,
    Minimum,
    Maximum,
    NValues,
    Lex,
}

impl ObjKind {
    pub fn name(self) -> &'static str {
        match self {
            ObjKind::Sum => "sum",
            ObjKind::Product => "product",
            ObjKind::Minimum => "minimum",
            ObjKind::Maximum => "maximum",
            ObjKind::NValues => "nValues",
            ObjKind::Lex => "lex",
        }
    }
}

/// The body of an objective.
#[derive(Debug, Clone)]
pub enum ObjectiveForm {
    Expr(Expression),
    Specialized { kind: ObjKind, terms: Vec<Expression>, coeffs: Vec<i64> },
}

/// One minimize/maximize element.
#[derive(Debug, Clone)]
pub struct Objective {
    pub minimize: bool,
    pub form: ObjectiveForm,
    pub provenance: String,
    pub location: Location,
}

impl Objective {
    pub fn collect_cells(&self, out: &mut Vec<usize>) {
        match &self.form {
            ObjectiveForm::Expr(e) => e.collect_cells(out),
            ObjectiveForm::Specialized { terms, .. } => {
                for t in terms {
                    t.collect_cells(out);
                }
            }
        }
    }
}

/// How multiple objectives combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Combination {
    Lexico,
    #[default]
    Pareto,
}

/// Options controlling instance construction.
#[derive(Debug, Clone, Default)]
pub struct BuildOptions {
    /// Constraints carrying any of these classes are discarded after
    /// parsing, mirroring the usual treatment of tagged constraint groups
    /// such as "redundantConstraints".
    pub drop_classes: Vec<String>,
}

/// A fully normalized instance.
#[derive(Debug, Clone)]
pub struct Instance {
    pub framework: Framework,
    pub decls: Vec<VariableDecl>,
    pub cells: Vec<CellInfo>,
    pub constraints: Vec<NormConstraint>,
    pub objectives: Vec<Objective>,
    pub combination: Combination,
    pub annotations: Option<RawElement>,
    pub warnings: Vec<String>,
    by_id: HashMap<String, usize>,
    useful: Vec<bool>,
}

impl Instance {
    pub fn decl_by_id(&self, id: &str) -> Option<&VariableDecl> {
        self.by_id.get(id).map(|ix| &self.decls[*ix])
    }

    /// True when the cell occurs in some constraint or objective.
    pub fn is_useful(&self, cell: usize) -> bool {
        self.useful[cell]
    }

    pub fn useless_cells(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.cells.len()).filter(|c| !self.useful[*c])
    }

    /// Resolves a variable access to its cells in lexicographic index
    /// order. Undefined cells are included; callers decide whether they
    /// are acceptable.
    pub fn resolve_access(&self, access: &VarAccess, location: Location) -> Result<Vec<usize>> {
        let decl_ix = *self.by_id.get(&access.base).ok_or_else(|| {
            Error::structure(format!("unknown variable \"{}\"", access.base)).at(location)
        })?;
        let decl = &self.decls[decl_ix];
        if decl.dims.is_empty() {
            if !access.indexers.is_empty() {
                return Err(Error::structure(format!(
                    "\"{access}\" indexes the scalar variable \"{}\"",
                    access.base
                ))
                .at(location));
            }
            return Ok(vec![decl.first_cell]);
        }
        if access.indexers.len() > decl.dims.len() {
            return Err(Error::structure(format!(
                "\"{access}\" has more indexes than the {} dimension(s) of \"{}\"",
                decl.dims.len(),
                access.base
            ))
            .at(location));
        }
        let mut axes: Vec<Vec<usize>> = Vec::with_capacity(decl.dims.len());
        for (d, dim) in decl.dims.iter().enumerate() {
            let indexer = access.indexers.get(d).copied().unwrap_or(Indexer::Full);
            let range = match indexer {
                Indexer::Full => 0..*dim,
                Indexer::Index(i) => {
                    let i = check_bound(i, *dim, access, location)?;
                    i..i + 1
                }
                Indexer::Range(a, b) => {
                    let a = check_bound(a, *dim, access, location)?;
                    let b = check_bound(b, *dim, access, location)?;
                    a..b + 1
                }
            };
            axes.push(range.collect());
        }
        let mut cells = Vec::new();
        let mut cursor = vec![0usize; axes.len()];
        'outer: loop {
            let mut offset = 0usize;
            for (d, axis) in axes.iter().enumerate() {
                offset = offset * decl.dims[d] + axis[cursor[d]];
            }
            cells.push(decl.first_cell + offset);
            for d in (0..axes.len()).rev() {
                cursor[d] += 1;
                if cursor[d] < axes[d].len() {
                    continue 'outer;
                }
                cursor[d] = 0;
                if d == 0 {
                    break 'outer;
                }
            }
        }
        Ok(cells)
    }
}

fn check_bound(i: i64, dim: usize, access: &VarAccess, location: Location) -> Result<usize> {
    if i < 0 || i as usize >= dim {
        return Err(Error::structure(format!(
            "index {i} is out of bounds in \"{access}\" (dimension has size {dim})"
        ))
        .at(location));
    }
    Ok(i as usize)
}

// ---------------------------------------------------------------------------
// Builder
// ---------------------------------------------------------------------------

/// Builds a normalized instance from a validated document frame.
pub fn build_instance(frame: &DocumentFrame<'_>, options: &BuildOptions) -> Result<Instance> {
    let mut builder = Builder {
        instance: Instance {
            framework: frame.framework,
            decls: Vec::new(),
            cells: Vec::new(),
            constraints: Vec::new(),
            objectives: Vec::new(),
            combination: Combination::default(),
            annotations: frame.annotations.cloned(),
            warnings: frame.warnings.clone(),
            by_id: HashMap::new(),
            useful: Vec::new(),
        },
        anon: 0,
    };
    builder.build_variables(frame.variables)?;
    let mut constraints = Vec::new();
    builder.process_constraint_items(&frame.constraints.children, &[], &mut constraints)?;
    if !options.drop_classes.is_empty() {
        constraints.retain(|c: &NormConstraint| {
            !c.classes.iter().any(|cl| options.drop_classes.iter().any(|d| d == cl))
        });
    }
    builder.instance.constraints = constraints;
    if let Some(objectives) = frame.objectives {
        builder.build_objectives(objectives)?;
    }
    let mut inst = builder.instance;
    let mut used = Vec::new();
    for c in &inst.constraints {
        c.kind.collect_cells(&mut used);
    }
    for o in &inst.objectives {
        o.collect_cells(&mut used);
    }
    inst.useful = vec![false; inst.cells.len()];
    for cell in used {
        inst.useful[cell] = true;
    }
    Ok(inst)
}

const MAX_CELLS: usize = 4_000_000;

/// Constraint element names that belong to the wider format but are outside
/// the integer core handled here.
const UNSUPPORTED_CONSTRAINTS: &[&str] = &[
    "clause",
    "cube",
    "allDistant",
    "ordered2",
    "precedence",
    "balance",
    "spread",
    "deviation",
    "sumCosts",
    "stretch",
    "noHoles",
    "sequence",
    "binPacking",
    "knapsack",
    "networkFlow",
    "flow",
    "circuits",
    "nCircuits",
    "path",
    "nPaths",
    "tree",
    "nTrees",
    "permutation",
    "allIntersecting",
    "range",
    "roots",
    "partition",
    "minimumArg",
    "maximumArg",
    "and",
    "or",
    "not",
    "iff",
    "ifThen",
    "ifThenElse",
    "grammar",
    "smart",
    "seqbin",
];

struct Builder {
    instance: Instance,
    anon: usize,
}

impl Builder {
    // -- variables ---------------------------------------------------------

    fn build_variables(&mut self, variables: &RawElement) -> Result<()> {
        for child in &variables.children {
            match child.name.as_str() {
                "var" => self.build_var(child)?,
                "array" => self.build_array(child)?,
                other => {
                    return Err(child.err(
                        ErrorKind::Structure,
                        format!("unexpected <{other}> inside <variables>"),
                    ));
                }
            }
        }
        Ok(())
    }

    fn check_var_type(&mut self, el: &RawElement) -> Result<()> {
        match el.attr("type") {
            None | Some("integer") => Ok(()),
            Some(other) => Err(el.err(
                ErrorKind::Unsupported,
                format!("variables of type \"{other}\" are not supported; only integer variables are"),
            )),
        }
    }

    fn decl_metadata(&mut self, el: &RawElement, extra: &[&str]) -> (Option<String>, Vec<String>) {
        for (attr, _) in &el.attributes {
            if !matches!(attr.as_str(), "id" | "note" | "class" | "type")
                && !extra.contains(&attr.as_str())
            {
                self.instance
                    .warnings
                    .push(format!("unknown attribute \"{attr}\" on <{}> is ignored", el.name));
            }
        }
        let note = el.attr("note").map(str::to_string);
        let classes = split_classes(el.attr("class"));
        (note, classes)
    }

    fn require_id(&self, el: &RawElement) -> Result<String> {
        el.attr("id")
            .map(str::to_string)
            .ok_or_else(|| el.err(ErrorKind::Structure, format!("<{}> requires an id", el.name)))
    }

    fn push_decl(&mut self, decl: VariableDecl, domains: Vec<Option<Domain>>) {
        let decl_ix = self.instance.decls.len();
        let base = &decl.id;
        for (offset, domain) in domains.into_iter().enumerate() {
            let name = if decl.dims.is_empty() {
                base.clone()
            } else {
                let mut name = base.clone();
                let mut rem = offset;
                let mut idx = vec![0usize; decl.dims.len()];
                for d in (0..decl.dims.len()).rev() {
                    idx[d] = rem % decl.dims[d];
                    rem /= decl.dims[d];
                }
                for i in idx {
                    name.push('[');
                    name.push_str(&i.to_string());
                    name.push(']');
                }
                name
            };
            self.instance.cells.push(CellInfo { name, domain, decl: decl_ix });
        }
        self.instance.by_id.insert(decl.id.clone(), decl_ix);
        self.instance.decls.push(decl);
    }

    fn build_var(&mut self, el: &RawElement) -> Result<()> {
        let id = self.require_id(el)?;
        self.check_var_type(el)?;
        let (note, classes) = self.decl_metadata(el, &[]);
        if !el.children.is_empty() {
            return Err(el.err(
                ErrorKind::Unsupported,
                format!("<var> \"{id}\" has structured content; only plain integer domains are supported"),
            ));
        }
        let domain = grammar::parse_domain(el.trimmed_text()).map_err(|e| e.at(el.location))?;
        let decl = VariableDecl {
            id,
            note,
            classes,
            dims: Vec::new(),
            first_cell: self.instance.cells.len(),
            cell_count: 1,
        };
        self.push_decl(decl, vec![Some(domain)]);
        Ok(())
    }

    fn build_array(&mut self, el: &RawElement) -> Result<()> {
        let id = self.require_id(el)?;
        self.check_var_type(el)?;
        let (note, classes) = self.decl_metadata(el, &["size", "startIndex"]);
        let size = el
            .attr("size")
            .ok_or_else(|| el.err(ErrorKind::Structure, format!("<array> \"{id}\" requires a size attribute")))?;
        let dims = parse_dimensions(size).map_err(|e| e.at(el.location))?;
        let cell_count: usize = dims.iter().try_fold(1usize, |acc, d| {
            acc.checked_mul(*d).filter(|n| *n <= MAX_CELLS)
        }).ok_or_else(|| {
            el.err(ErrorKind::Budget, format!("array \"{id}\" is too large to materialize"))
        })?;

        let domains = if !el.children.is_empty() {
            if el.has_text() {
                return Err(el.err(
                    ErrorKind::Structure,
                    format!("array \"{id}\" mixes a default domain text with <domain> children"),
                ));
            }
            self.mixed_domains(el, &id, &dims, cell_count)?
        } else {
            // Homogeneous array: one shared domain, possibly empty text.
            let domain = grammar::parse_domain(el.trimmed_text()).map_err(|e| e.at(el.location))?;
            vec![Some(domain); cell_count]
        };

        let decl = VariableDecl {
            id,
            note,
            classes,
            dims,
            first_cell: self.instance.cells.len(),
            cell_count,
        };
        self.push_decl(decl, domains);
        Ok(())
    }

    fn mixed_domains(
        &mut self,
        el: &RawElement,
        id: &str,
        dims: &[usize],
        cell_count: usize,
    ) -> Result<Vec<Option<Domain>>> {
        let mut domains: Vec<Option<Domain>> = vec![None; cell_count];
        let mut covered = vec![false; cell_count];
        let mut seen_others = false;
        for child in &el.children {
            if child.name != "domain" {
                return Err(child.err(
                    ErrorKind::Structure,
                    format!("unexpected <{}> inside <array>", child.name),
                ));
            }
            if seen_others {
                return Err(child.err(
                    ErrorKind::Structure,
                    "for=\"others\" must be the last <domain> of the array",
                ));
            }
            let for_attr = child.attr("for").ok_or_else(|| {
                child.err(ErrorKind::Structure, "<domain> inside <array> requires a for attribute")
            })?;
            let domain =
                grammar::parse_domain(child.trimmed_text()).map_err(|e| e.at(child.location))?;
            if for_attr == "others" {
                seen_others = true;
                for (slot, done) in domains.iter_mut().zip(&covered) {
                    if !done {
                        *slot = Some(domain.clone());
                    }
                }
                continue;
            }
            for token in for_attr.split_whitespace() {
                let access = grammar::parse_var_access(token).map_err(|e| e.at(child.location))?;
                if access.base != id {
                    return Err(child.err(
                        ErrorKind::Structure,
                        format!("for=\"{token}\" does not refer to array \"{id}\""),
                    ));
                }
                let offsets = expand_offsets(&access, dims, child.location)?;
                for offset in offsets {
                    if covered[offset] {
                        return Err(child.err(
                            ErrorKind::Structure,
                            format!("cell {token} is covered by more than one <domain> rule"),
                        ));
                    }
                    covered[offset] = true;
                    domains[offset] = Some(domain.clone());
                }
            }
        }
        Ok(domains)
    }

    // -- general token resolution ------------------------------------------

    fn resolve_defined(&self, access: &VarAccess, location: Location) -> Result<Vec<usize>> {
        let cells = self.instance.resolve_access(access, location)?;
        for &cell in &cells {
            if self.instance.cells[cell].domain.is_none() {
                return Err(Error::structure(format!(
                    "\"{}\" has no declared domain and cannot be used in a constraint or objective",
                    self.instance.cells[cell].name
                ))
                .at(location));
            }
        }
        Ok(cells)
    }

    /// Parses whitespace-separated variable tokens, expanding compact
    /// accesses, into a flat cell list.
    fn parse_scope(&self, text: &str, location: Location) -> Result<Vec<usize>> {
        let mut cells = Vec::new();
        for token in text.split_whitespace() {
            let access = grammar::parse_var_access(token).map_err(|e| e.at(location))?;
            cells.extend(self.resolve_defined(&access, location)?);
        }
        Ok(cells)
    }

    /// Parses a single-variable token.
    fn parse_single_var(&self, text: &str, location: Location) -> Result<usize> {
        let access = grammar::parse_var_access(text.trim()).map_err(|e| e.at(location))?;
        let cells = self.resolve_defined(&access, location)?;
        if cells.len() != 1 {
            return Err(Error::structure(format!(
                "expected a single variable, but \"{}\" names {} cells",
                text.trim(),
                cells.len()
            ))
            .at(location));
        }
        Ok(cells[0])
    }

    /// Parses tokens that may be integers or variables.
    fn parse_var_or_vals(&self, text: &str, location: Location) -> Result<Vec<VarOrVal>> {
        let mut out = Vec::new();
        for token in text.split_whitespace() {
            if starts_like_number(token) {
                out.push(VarOrVal::Val(grammar::parse_integer(token).map_err(|e| e.at(location))?));
            } else {
                let access = grammar::parse_var_access(token).map_err(|e| e.at(location))?;
                for cell in self.resolve_defined(&access, location)? {
                    out.push(VarOrVal::Cell(cell));
                }
            }
        }
        Ok(out)
    }

    /// Parses list terms that may be variables, integers, or functional
    /// expressions (the "views" extension used by allDifferent, sum and
    /// objective lists).
    fn parse_terms(&self, text: &str, location: Location) -> Result<Vec<Expression>> {
        let mut out = Vec::new();
        for token in text.split_whitespace() {
            if token.contains('(') {
                let expr =
                    grammar::parse_expression(token, false).map_err(|e| e.at(location))?;
                out.push(self.resolve_expression(expr, location)?);
            } else if starts_like_number(token) {
                out.push(Expression::Const(
                    grammar::parse_integer(token).map_err(|e| e.at(location))?,
                ));
            } else {
                let access = grammar::parse_var_access(token).map_err(|e| e.at(location))?;
                for cell in self.resolve_defined(&access, location)? {
                    out.push(Expression::Cell(cell));
                }
            }
        }
        Ok(out)
    }

    fn resolve_expression(&self, expr: Expression, location: Location) -> Result<Expression> {
        Ok(match expr {
            Expression::Var(access) => {
                let cells = self.resolve_defined(&access, location)?;
                if cells.len() != 1 {
                    return Err(Error::structure(format!(
                        "\"{access}\" names {} cells but expressions require single variables",
                        cells.len()
                    ))
                    .at(location));
                }
                Expression::Cell(cells[0])
            }
            Expression::Apply(op, args) => {
                let args = args
                    .into_iter()
                    .map(|a| self.resolve_expression(a, location))
                    .collect::<Result<Vec<_>>>()?;
                Expression::Apply(op, args)
            }
            Expression::Param(_) | Expression::ParamRest => {
                return Err(Error::structure(
                    "a % parameter survived template instantiation",
                )
                .at(location));
            }
            other => other,
        })
    }

    fn resolve_condition(&self, text: &str, location: Location) -> Result<Condition> {
        let mut cond = grammar::parse_condition(text.trim()).map_err(|e| e.at(location))?;
        if let CondOperand::Var(access) = &cond.operand {
            let access = access.clone();
            let cells = self.resolve_defined(&access, location)?;
            if cells.len() != 1 {
                return Err(Error::structure(format!(
                    "condition operand \"{access}\" must be a single variable"
                ))
                .at(location));
            }
            cond.operand = CondOperand::Cell(cells[0]);
        }
        Ok(cond)
    }

    // -- constraint tree ----------------------------------------------------

    fn next_anon(&mut self) -> String {
        let id = format!("#{}", self.anon);
        self.anon += 1;
        id
    }

    fn provenance_of(&mut self, el: &RawElement) -> String {
        match el.attr("id") {
            Some(id) => id.to_string(),
            None => self.next_anon(),
        }
    }

    fn process_constraint_items(
        &mut self,
        items: &[RawElement],
        classes: &[String],
        out: &mut Vec<NormConstraint>,
    ) -> Result<()> {
        for el in items {
            match el.name.as_str() {
                "block" => {
                    let mut inner = classes.to_vec();
                    inner.extend(split_classes(el.attr("class")));
                    self.process_constraint_items(&el.children, &inner, out)?;
                }
                "group" => self.expand_group(el, classes, out)?,
                "slide" => {
                    let constraint = self.parse_slide(el, classes)?;
                    out.push(constraint);
                }
                _ => {
                    let provenance = self.provenance_of(el);
                    let kind = self.parse_constraint_element(el)?;
                    out.push(NormConstraint {
                        provenance,
                        classes: merged_classes(classes, el),
                        note: el.attr("note").map(str::to_string),
                        kind,
                        location: el.location,
                    });
                }
            }
        }
        Ok(())
    }

    fn expand_group(
        &mut self,
        el: &RawElement,
        classes: &[String],
        out: &mut Vec<NormConstraint>,
    ) -> Result<()> {
        let group_id = self.provenance_of(el);
        let mut template: Option<&RawElement> = None;
        let mut args_elements: Vec<&RawElement> = Vec::new();
        for child in &el.children {
            if child.name == "args" {
                args_elements.push(child);
            } else if template.is_some() {
                return Err(child.err(
                    ErrorKind::Structure,
                    "a group must contain exactly one constraint template",
                ));
            } else {
                template = Some(child);
            }
        }
        let template = template.ok_or_else(|| {
            el.err(ErrorKind::Structure, "a group requires a constraint template")
        })?;
        match template.name.as_str() {
            "group" | "block" | "slide" => {
                return Err(template.err(
                    ErrorKind::Structure,
                    format!("<{}> cannot appear inside a group", template.name),
                ));
            }
            "not" => {
                return Err(template.err(
                    ErrorKind::Unsupported,
                    "negated constraint templates are not supported",
                ));
            }
            _ => {}
        }
        if args_elements.is_empty() {
            return Err(el.err(ErrorKind::Structure, "a group requires at least one <args>"));
        }
        let (max_param, has_rest) = scan_params(template);
        let fixed = max_param.map_or(0, |k| k + 1);
        let group_classes = merged_classes(classes, el);
        let group_note = el.attr("note").map(str::to_string);
        for (i, args_el) in args_elements.iter().enumerate() {
            let args: Vec<String> =
                args_el.trimmed_text().split_whitespace().map(str::to_string).collect();
            if args.is_empty() {
                return Err(args_el.err(ErrorKind::Structure, "<args> must contain at least one token"));
            }
            if args.len() < fixed {
                return Err(args_el.err(
                    ErrorKind::Structure,
                    format!(
                        "template uses %{} but <args> supplies only {} token(s)",
                        fixed - 1,
                        args.len()
                    ),
                ));
            }
            if !has_rest && args.len() > fixed {
                return Err(args_el.err(
                    ErrorKind::Structure,
                    format!(
                        "template takes {fixed} argument(s) but <args> supplies {}",
                        args.len()
                    ),
                ));
            }
            let rest = if has_rest { Some(args[fixed..].join(" ")) } else { None };
            let instantiated =
                apply_substitution(template, &args[..fixed.min(args.len())], rest.as_deref())?;
            let kind = self.parse_constraint_element(&instantiated)?;
            let mut item_classes = group_classes.clone();
            item_classes.extend(split_classes(instantiated.attr("class")));
            let note =
                instantiated.attr("note").map(str::to_string).or_else(|| group_note.clone());
            out.push(NormConstraint {
                provenance: format!("{group_id}[{i}]"),
                classes: item_classes,
                note,
                kind,
                location: args_el.location,
            });
        }
        Ok(())
    }

    fn parse_slide(&mut self, el: &RawElement, classes: &[String]) -> Result<NormConstraint> {
        let provenance = self.provenance_of(el);
        let circular = match el.attr("circular") {
            None | Some("false") => false,
            Some("true") => true,
            Some(other) => {
                return Err(el.err(
                    ErrorKind::Grammar,
                    format!("circular must be \"true\" or \"false\", found \"{other}\""),
                ));
            }
        };
        let mut lists: Vec<&RawElement> = Vec::new();
        let mut template: Option<&RawElement> = None;
        for child in &el.children {
            if child.name == "list" {
                if template.is_some() {
                    return Err(child.err(
                        ErrorKind::Structure,
                        "slide lists must precede the constraint template",
                    ));
                }
                lists.push(child);
            } else if template.is_some() {
                return Err(child.err(
                    ErrorKind::Structure,
                    "a slide must contain exactly one constraint template",
                ));
            } else {
                template = Some(child);
            }
        }
        let template = template.ok_or_else(|| {
            el.err(ErrorKind::Structure, "a slide requires a constraint template")
        })?;
        if matches!(template.name.as_str(), "group" | "block" | "slide") {
            return Err(template.err(
                ErrorKind::Structure,
                format!("<{}> cannot appear inside a slide", template.name),
            ));
        }
        if lists.is_empty() {
            return Err(el.err(ErrorKind::Structure, "a slide requires at least one <list>"));
        }
        let (max_param, has_rest) = scan_params(template);
        if has_rest {
            return Err(template.err(
                ErrorKind::Structure,
                "%... cannot be used in a slide template",
            ));
        }
        let arity = match max_param {
            Some(k) => k + 1,
            None => {
                return Err(template.err(
                    ErrorKind::Structure,
                    "a slide template must use % parameters",
                ));
            }
        };

        // Gather per-list cells plus offsets/collects.
        let mut per_list: Vec<(Vec<usize>, usize, usize)> = Vec::new();
        for list_el in &lists {
            let cells = self.parse_scope(list_el.trimmed_text(), list_el.location)?;
            let offset = parse_count_attr(list_el, "offset", 1)?;
            let collect = parse_count_attr(list_el, "collect", 1)?;
            per_list.push((cells, offset, collect));
        }

        let mut window_args: Vec<Vec<String>> = Vec::new();
        if per_list.len() == 1 {
            let (cells, offset, collect) = &per_list[0];
            // In the single-list form the window size is the template arity
            // unless a collect attribute groups differently.
            let q = if lists[0].has_attr("collect") { *collect } else { arity };
            if q != arity {
                return Err(lists[0].err(
                    ErrorKind::Structure,
                    format!("collect={q} does not match the template arity {arity}"),
                ));
            }
            let n = cells.len();
            if n < q {
                return Err(lists[0].err(
                    ErrorKind::Structure,
                    format!("the list has {n} variables but each window needs {q}"),
                ));
            }
            if circular {
                if *offset != 1 {
                    return Err(el.err(
                        ErrorKind::Unsupported,
                        "circular slide with an offset other than 1 is not supported",
                    ));
                }
                for i in 0..=(n - q + 1) {
                    let args: Vec<String> = (0..q)
                        .map(|j| self.instance.cells[cells[(i + j) % n]].name.clone())
                        .collect();
                    window_args.push(args);
                }
            } else {
                if (n - q) % offset != 0 {
                    return Err(lists[0].err(
                        ErrorKind::Structure,
                        format!(
                            "offset {offset} leaves a ragged final window over {n} variables (window size {q})"
                        ),
                    ));
                }
                let mut i = 0;
                while i + q <= n {
                    let args: Vec<String> =
                        cells[i..i + q].iter().map(|c| self.instance.cells[*c].name.clone()).collect();
                    window_args.push(args);
                    i += offset;
                }
            }
        } else {
            if circular {
                return Err(el.err(
                    ErrorKind::Unsupported,
                    "circular slide over several lists is not supported",
                ));
            }
            let total: usize = per_list.iter().map(|(_, _, collect)| *collect).sum();
            if total != arity {
                return Err(el.err(
                    ErrorKind::Structure,
                    format!("the collect attributes sum to {total} but the template arity is {arity}"),
                ));
            }
            let mut iteration_counts = Vec::new();
            for (ix, (cells, offset, collect)) in per_list.iter().enumerate() {
                let n = cells.len();
                if n < *collect || (n - collect) % offset != 0 {
                    return Err(lists[ix].err(
                        ErrorKind::Structure,
                        format!(
                            "offset {offset} and collect {collect} leave a ragged final window over {n} variables"
                        ),
                    ));
                }
                iteration_counts.push((n - collect) / offset + 1);
            }
            let count = iteration_counts[0];
            if iteration_counts.iter().any(|c| *c != count) {
                return Err(el.err(
                    ErrorKind::Structure,
                    format!("the lists admit different window counts ({iteration_counts:?})"),
                ));
            }
            for i in 0..count {
                let mut args = Vec::with_capacity(arity);
                for (cells, offset, collect) in &per_list {
                    let base = i * offset;
                    for j in 0..*collect {
                        args.push(self.instance.cells[cells[base + j]].name.clone());
                    }
                }
                window_args.push(args);
            }
        }

        let mut windows = Vec::with_capacity(window_args.len());
        for args in &window_args {
            let instantiated = apply_substitution(template, args, None)?;
            windows.push(self.parse_constraint_element(&instantiated)?);
        }
        Ok(NormConstraint {
            provenance,
            classes: merged_classes(classes, el),
            note: el.attr("note").map(str::to_string),
            kind: ConstraintKind::Slide { windows },
            location: el.location,
        })
    }

    // -- individual constraints ---------------------------------------------

    fn parse_constraint_element(&mut self, el: &RawElement) -> Result<ConstraintKind> {
        match el.name.as_str() {
            "intension" => self.parse_intension(el),
            "extension" => self.parse_extension(el),
            "regular" => self.parse_regular(el),
            "mdd" => self.parse_mdd(el),
            "allDifferent" => self.parse_all_different(el),
            "allEqual" => self.parse_all_equal(el),
            "ordered" => self.parse_ordered(el),
            "lex" => self.parse_lex(el),
            "sum" => self.parse_sum(el),
            "count" => self.parse_count(el),
            "nValues" => self.parse_n_values(el),
            "cardinality" => self.parse_cardinality(el),
            "minimum" => self.parse_min_max(el, true),
            "maximum" => self.parse_min_max(el, false),
            "element" => self.parse_element(el),
            "channel" => self.parse_channel(el),
            "noOverlap" => self.parse_no_overlap(el),
            "cumulative" => self.parse_cumulative(el),
            "circuit" => self.parse_circuit(el),
            "instantiation" => self.parse_instantiation(el),
            name if UNSUPPORTED_CONSTRAINTS.contains(&name) => Err(el.err(
                ErrorKind::Unsupported,
                format!("constraint <{name}> is recognized but not supported"),
            )),
            name => Err(el.err(ErrorKind::Structure, format!("unknown constraint <{name}>"))),
        }
    }

    /// Returns the `<list>` child text, or the element's own text for the
    /// simplified child-free forms.
    fn list_content<'b>(&self, el: &'b RawElement) -> Result<(&'b str, Location)> {
        if let Some(list) = el.child("list") {
            Ok((list.trimmed_text(), list.location))
        } else if el.children.is_empty() {
            Ok((el.trimmed_text(), el.location))
        } else {
            Err(el.err(
                ErrorKind::Structure,
                format!("<{}> with child elements requires an explicit <list>", el.name),
            ))
        }
    }

    fn reject_unknown_children(&self, el: &RawElement, known: &[&str], unsupported: &[&str]) -> Result<()> {
        for child in &el.children {
            let name = child.name.as_str();
            if unsupported.contains(&name) {
                return Err(child.err(
                    ErrorKind::Unsupported,
                    format!("<{name}> inside <{}> is recognized but not supported", el.name),
                ));
            }
            if !known.contains(&name) {
                return Err(child.err(
                    ErrorKind::Structure,
                    format!("unexpected <{name}> inside <{}>", el.name),
                ));
            }
        }
        Ok(())
    }

    fn unique_child<'b>(&self, el: &'b RawElement, name: &str) -> Result<Option<&'b RawElement>> {
        let mut found: Option<&'b RawElement> = None;
        for child in &el.children {
            if child.name == name {
                if found.is_some() {
                    return Err(el.err(
                        ErrorKind::Structure,
                        format!("<{name}> appears more than once inside <{}>", el.name),
                    ));
                }
                found = Some(child);
            }
        }
        Ok(found)
    }

    fn required_child<'b>(&self, el: &'b RawElement, name: &str) -> Result<&'b RawElement> {
        self.unique_child(el, name)?.ok_or_else(|| {
            el.err(ErrorKind::Structure, format!("<{}> requires a <{name}> child", el.name))
        })
    }

    fn condition_of(&self, el: &RawElement) -> Result<Condition> {
        let child = self.required_child(el, "condition")?;
        self.resolve_condition(child.trimmed_text(), child.location)
    }

    fn parse_intension(&mut self, el: &RawElement) -> Result<ConstraintKind> {
        let (text, location) = if let Some(function) = self.unique_child(el, "function")? {
            (function.trimmed_text(), function.location)
        } else if el.children.is_empty() {
            (el.trimmed_text(), el.location)
        } else {
            return Err(el.err(ErrorKind::Structure, "<intension> contains unexpected children"));
        };
        let expr = grammar::parse_expression(text, false).map_err(|e| e.at(location))?;
        if !expr.is_boolean() {
            return Err(Error::structure(
                "an intension constraint requires a Boolean expression",
            )
            .at(location));
        }
        let expr = self.resolve_expression(expr, location)?;
        Ok(ConstraintKind::Intension { expr })
    }

    fn parse_extension(&mut self, el: &RawElement) -> Result<ConstraintKind> {
        self.reject_unknown_children(el, &["list", "supports", "conflicts"], &[])?;
        let list = self.required_child(el, "list")?;
        let scope = self.parse_scope(list.trimmed_text(), list.location)?;
        if scope.is_empty() {
            return Err(list.err(ErrorKind::Structure, "<list> must name at least one variable"));
        }
        let supports = self.unique_child(el, "supports")?;
        let conflicts = self.unique_child(el, "conflicts")?;
        let (table_el, is_conflicts) = match (supports, conflicts) {
            (Some(s), None) => (s, false),
            (None, Some(c)) => (c, true),
            (Some(_), Some(_)) => {
                return Err(el.err(
                    ErrorKind::Structure,
                    "<extension> cannot have both <supports> and <conflicts>",
                ));
            }
            (None, None) => {
                return Err(el.err(
                    ErrorKind::Structure,
                    "<extension> requires <supports> or <conflicts>",
                ));
            }
        };
        let text = table_el.trimmed_text();
        if text.contains('{') {
            return Err(table_el.err(
                ErrorKind::Unsupported,
                "unsupported feature: compressed tuples (value sets inside table tuples)",
            ));
        }
        let table = if scope.len() == 1 {
            let values = grammar::parse_domain(text).map_err(|e| e.at(table_el.location))?;
            Table::Unary { values, conflicts: is_conflicts }
        } else {
            let rows = grammar::parse_tuples(text, true).map_err(|e| e.at(table_el.location))?;
            for row in &rows {
                if row.len() != scope.len() {
                    return Err(table_el.err(
                        ErrorKind::Structure,
                        format!(
                            "tuples have arity {} but the list has {} variables",
                            row.len(),
                            scope.len()
                        ),
                    ));
                }
            }
            if let Some(msg) = grammar::tuple_order_violation(&rows) {
                return Err(table_el.err(ErrorKind::Grammar, msg));
            }
            Table::Rows { rows, conflicts: is_conflicts }
        };
        Ok(ConstraintKind::Extension { scope, table })
    }

    fn parse_regular(&mut self, el: &RawElement) -> Result<ConstraintKind> {
        self.reject_unknown_children(el, &["list", "transitions", "start", "final"], &[])?;
        let list = self.required_child(el, "list")?;
        let scope = self.parse_scope(list.trimmed_text(), list.location)?;
        if scope.len() < 2 {
            return Err(list.err(ErrorKind::Structure, "<regular> requires at least 2 variables"));
        }
        let transitions_el = self.required_child(el, "transitions")?;
        let rows = grammar::parse_token_tuples(transitions_el.trimmed_text())
            .map_err(|e| e.at(transitions_el.location))?;
        let mut transitions = Vec::with_capacity(rows.len());
        for row in rows {
            if row.len() != 3 {
                return Err(transitions_el.err(
                    ErrorKind::Structure,
                    "each transition must be a (state,value,state) triple",
                ));
            }
            let value =
                grammar::parse_integer(&row[1]).map_err(|e| e.at(transitions_el.location))?;
            transitions.push((row[0].clone(), value, row[2].clone()));
        }
        let start_el = self.required_child(el, "start")?;
        let start = start_el.trimmed_text().to_string();
        if start.is_empty() || start.split_whitespace().count() != 1 {
            return Err(start_el.err(ErrorKind::Structure, "<start> must name exactly one state"));
        }
        let final_el = self.required_child(el, "final")?;
        let finals: Vec<String> =
            final_el.trimmed_text().split_whitespace().map(str::to_string).collect();
        if finals.is_empty() {
            return Err(final_el.err(ErrorKind::Structure, "<final> must name at least one state"));
        }
        Ok(ConstraintKind::Regular {
            scope,
            automaton: Automaton::new(transitions, start, finals),
        })
    }

    fn parse_mdd(&mut self, el: &RawElement) -> Result<ConstraintKind> {
        self.reject_unknown_children(el, &["list", "transitions"], &[])?;
        let list = self.required_child(el, "list")?;
        let scope = self.parse_scope(list.trimmed_text(), list.location)?;
        if scope.is_empty() {
            return Err(list.err(ErrorKind::Structure, "<list> must name at least one variable"));
        }
        let transitions_el = self.required_child(el, "transitions")?;
        let rows = grammar::parse_token_tuples(transitions_el.trimmed_text())
            .map_err(|e| e.at(transitions_el.location))?;
        let mut transitions = Vec::with_capacity(rows.len());
        for row in rows {
            if row.len() != 3 {
                return Err(transitions_el.err(
                    ErrorKind::Structure,
                    "each transition must be a (node,value,node) triple",
                ));
            }
            let value =
                grammar::parse_integer(&row[1]).map_err(|e| e.at(transitions_el.location))?;
            transitions.push((row[0].clone(), value, row[2].clone()));
        }
        let mdd = Mdd::from_transitions(transitions).map_err(|e| e.at(transitions_el.location))?;
        if mdd.depth != scope.len() {
            return Err(el.err(
                ErrorKind::Structure,
                format!(
                    "the diagram has depth {} but the list has {} variables",
                    mdd.depth,
                    scope.len()
                ),
            ));
        }
        Ok(ConstraintKind::Mdd { scope, mdd })
    }

    fn parse_except_values(&self, el: &RawElement) -> Result<Vec<i64>> {
        match self.unique_child(el, "except")? {
            None => Ok(Vec::new()),
            Some(except) => {
                let mut values = Vec::new();
                for token in except.trimmed_text().split_whitespace() {
                    let range = grammar::parse_value_or_interval(token)
                        .map_err(|e| e.at(except.location))?;
                    match (range.lo.finite(), range.hi.finite()) {
                        (Some(lo), Some(hi)) => values.extend(lo..=hi),
                        _ => {
                            return Err(except.err(
                                ErrorKind::Structure,
                                "except values must be finite",
                            ));
                        }
                    }
                }
                Ok(values)
            }
        }
    }

    fn parse_all_different(&mut self, el: &RawElement) -> Result<ConstraintKind> {
        self.reject_unknown_children(el, &["list", "matrix", "except"], &["set", "mset"])?;
        if let Some(matrix_el) = self.unique_child(el, "matrix")? {
            let matrix = self.parse_matrix(matrix_el)?;
            let except = self.parse_except_values(el)?;
            return Ok(ConstraintKind::AllDifferentMatrix { matrix, except });
        }
        let lists: Vec<&RawElement> = el.children_named("list").collect();
        if lists.len() >= 2 {
            let mut resolved = Vec::with_capacity(lists.len());
            for list in &lists {
                resolved.push(self.parse_scope(list.trimmed_text(), list.location)?);
            }
            let len = resolved[0].len();
            if len == 0 || resolved.iter().any(|l| l.len() != len) {
                return Err(el.err(
                    ErrorKind::Structure,
                    "the lists of allDifferent must be nonempty and of equal length",
                ));
            }
            let except = match self.unique_child(el, "except")? {
                None => Vec::new(),
                Some(except_el) => {
                    let rows = grammar::parse_tuples(except_el.trimmed_text(), false)
                        .map_err(|e| e.at(except_el.location))?;
                    rows.into_iter()
                        .map(|row| {
                            row.into_iter()
                                .map(|c| match c {
                                    Cell::Int(v) => v,
                                    Cell::Star => unreachable!("stars rejected above"),
                                })
                                .collect::<Vec<i64>>()
                        })
                        .collect()
                }
            };
            for row in &except {
                if row.len() != len {
                    return Err(el.err(
                        ErrorKind::Structure,
                        "except tuples must match the list length",
                    ));
                }
            }
            return Ok(ConstraintKind::AllDifferentLists { lists: resolved, except });
        }
        let (text, location) = self.list_content(el)?;
        let terms = self.parse_terms(text, location)?;
        if terms.len() < 2 {
            return Err(Error::structure("allDifferent requires at least 2 terms").at(location));
        }
        let except = self.parse_except_values(el)?;
        Ok(ConstraintKind::AllDifferent { terms, except })
    }

    fn parse_all_equal(&mut self, el: &RawElement) -> Result<ConstraintKind> {
        self.reject_unknown_children(el, &["list"], &[])?;
        let (text, location) = self.list_content(el)?;
        let scope = self.parse_scope(text, location)?;
        if scope.len() < 2 {
            return Err(Error::structure("allEqual requires at least 2 variables").at(location));
        }
        Ok(ConstraintKind::AllEqual { scope })
    }

    fn parse_ordered(&mut self, el: &RawElement) -> Result<ConstraintKind> {
        self.reject_unknown_children(el, &["list", "lengths", "operator"], &[])?;
        let case = el.attr("case");
        let operator_el = self.unique_child(el, "operator")?;
        let op = match (case, operator_el) {
            (Some(_), Some(_)) => {
                return Err(el.err(
                    ErrorKind::Structure,
                    "<ordered> cannot have both a case attribute and an <operator>",
                ));
            }
            (Some(case), None) => match case {
                "increasing" => OrderOp::Le,
                "strictlyIncreasing" => OrderOp::Lt,
                "decreasing" => OrderOp::Ge,
                "strictlyDecreasing" => OrderOp::Gt,
                other => {
                    return Err(el.err(
                        ErrorKind::Grammar,
                        format!("unknown ordered case \"{other}\""),
                    ));
                }
            },
            (None, Some(op_el)) => {
                let text = op_el.trimmed_text();
                OrderOp::from_name(text).ok_or_else(|| {
                    op_el.err(ErrorKind::Grammar, format!("unknown operator \"{text}\""))
                })?
            }
            (None, None) => {
                return Err(el.err(
                    ErrorKind::Structure,
                    "<ordered> requires an <operator> or a case attribute",
                ));
            }
        };
        let (text, location) = self.list_content(el)?;
        let scope = self.parse_scope(text, location)?;
        if scope.len() < 2 {
            return Err(Error::structure("ordered requires at least 2 variables").at(location));
        }
        let lengths = match self.unique_child(el, "lengths")? {
            None => None,
            Some(lengths_el) => {
                if case.is_some() {
                    return Err(lengths_el.err(
                        ErrorKind::Structure,
                        "the case attribute cannot be combined with <lengths>",
                    ));
                }
                let lengths =
                    self.parse_var_or_vals(lengths_el.trimmed_text(), lengths_el.location)?;
                if lengths.len() != scope.len() - 1 {
                    return Err(lengths_el.err(
                        ErrorKind::Structure,
                        format!(
                            "expected {} lengths for {} variables, found {}",
                            scope.len() - 1,
                            scope.len(),
                            lengths.len()
                        ),
                    ));
                }
                Some(lengths)
            }
        };
        Ok(ConstraintKind::Ordered { scope, lengths, op })
    }

    fn parse_lex(&mut self, el: &RawElement) -> Result<ConstraintKind> {
        self.reject_unknown_children(el, &["list", "matrix", "operator"], &[])?;
        let operator_el = self.required_child(el, "operator")?;
        let op_text = operator_el.trimmed_text();
        let op = OrderOp::from_name(op_text).ok_or_else(|| {
            operator_el.err(ErrorKind::Grammar, format!("unknown operator \"{op_text}\""))
        })?;
        if let Some(matrix_el) = self.unique_child(el, "matrix")? {
            let matrix = self.parse_matrix(matrix_el)?;
            return Ok(ConstraintKind::LexMatrix { matrix, op });
        }
        let lists: Vec<&RawElement> = el.children_named("list").collect();
        if lists.len() < 2 {
            return Err(el.err(ErrorKind::Structure, "<lex> requires at least 2 lists"));
        }
        let mut resolved = Vec::with_capacity(lists.len());
        for list in &lists {
            resolved.push(self.parse_scope(list.trimmed_text(), list.location)?);
        }
        let len = resolved[0].len();
        if len == 0 || resolved.iter().any(|l| l.len() != len) {
            return Err(el.err(
                ErrorKind::Structure,
                "the lists of lex must be nonempty and of equal length",
            ));
        }
        Ok(ConstraintKind::LexLists { lists: resolved, op })
    }

    fn parse_sum(&mut self, el: &RawElement) -> Result<ConstraintKind> {
        self.reject_unknown_children(el, &["list", "coeffs", "condition"], &[])?;
        let list = self.required_child(el, "list")?;
        let terms = self.parse_terms(list.trimmed_text(), list.location)?;
        // Single-term sums appear in canonical instances, so only an empty
        // list is rejected.
        if terms.is_empty() {
            return Err(list.err(ErrorKind::Structure, "sum requires at least 1 term"));
        }
        let coeffs = match self.unique_child(el, "coeffs")? {
            None => None,
            Some(coeffs_el) => {
                let coeffs =
                    self.parse_var_or_vals(coeffs_el.trimmed_text(), coeffs_el.location)?;
                if coeffs.len() != terms.len() {
                    return Err(coeffs_el.err(
                        ErrorKind::Structure,
                        format!("{} coefficients for {} terms", coeffs.len(), terms.len()),
                    ));
                }
                Some(coeffs)
            }
        };
        let condition = self.condition_of(el)?;
        Ok(ConstraintKind::Sum { terms, coeffs, condition })
    }

    fn parse_count(&mut self, el: &RawElement) -> Result<ConstraintKind> {
        self.reject_unknown_children(el, &["list", "values", "condition"], &[])?;
        if el.children_named("list").count() > 1 {
            return Err(el.err(
                ErrorKind::Unsupported,
                "count over several lists is not supported",
            ));
        }
        let list = self.required_child(el, "list")?;
        let scope = self.parse_scope(list.trimmed_text(), list.location)?;
        if scope.len() < 2 {
            return Err(list.err(ErrorKind::Structure, "count requires at least 2 variables"));
        }
        let values_el = self.required_child(el, "values")?;
        let values = self.parse_var_or_vals(values_el.trimmed_text(), values_el.location)?;
        if values.is_empty() {
            return Err(values_el.err(ErrorKind::Structure, "<values> must not be empty"));
        }
        let condition = self.condition_of(el)?;
        Ok(ConstraintKind::Count { scope, values, condition })
    }

    fn parse_n_values(&mut self, el: &RawElement) -> Result<ConstraintKind> {
        self.reject_unknown_children(el, &["list", "except", "condition"], &[])?;
        if el.children_named("list").count() > 1 {
            return Err(el.err(
                ErrorKind::Unsupported,
                "nValues over several lists is not supported",
            ));
        }
        let list = self.required_child(el, "list")?;
        let scope = self.parse_scope(list.trimmed_text(), list.location)?;
        if scope.len() < 2 {
            return Err(list.err(ErrorKind::Structure, "nValues requires at least 2 variables"));
        }
        let except = self.parse_except_values(el)?;
        let condition = self.condition_of(el)?;
        Ok(ConstraintKind::NValues { scope, except, condition })
    }

    fn parse_cardinality(&mut self, el: &RawElement) -> Result<ConstraintKind> {
        self.reject_unknown_children(el, &["list", "values", "occurs"], &[])?;
        let list = self.required_child(el, "list")?;
        let scope = self.parse_scope(list.trimmed_text(), list.location)?;
        if scope.len() < 2 {
            return Err(list.err(ErrorKind::Structure, "cardinality requires at least 2 variables"));
        }
        let values_el = self.required_child(el, "values")?;
        let closed = match values_el.attr("closed") {
            None | Some("false") => false,
            Some("true") => true,
            Some(other) => {
                return Err(values_el.err(
                    ErrorKind::Grammar,
                    format!("closed must be \"true\" or \"false\", found \"{other}\""),
                ));
            }
        };
        let values = self.parse_var_or_vals(values_el.trimmed_text(), values_el.location)?;
        if values.is_empty() {
            return Err(values_el.err(ErrorKind::Structure, "<values> must not be empty"));
        }
        let occurs_el = self.required_child(el, "occurs")?;
        let mut occurs = Vec::new();
        for token in occurs_el.trimmed_text().split_whitespace() {
            if token.contains("..") {
                let range =
                    grammar::parse_interval(token).map_err(|e| e.at(occurs_el.location))?;
                match (range.lo.finite(), range.hi.finite()) {
                    (Some(lo), Some(hi)) => occurs.push(OccursSpec::Range(lo, hi)),
                    _ => {
                        return Err(occurs_el.err(
                            ErrorKind::Structure,
                            "occurrence ranges must be finite",
                        ));
                    }
                }
            } else if starts_like_number(token) {
                occurs.push(OccursSpec::Val(
                    grammar::parse_integer(token).map_err(|e| e.at(occurs_el.location))?,
                ));
            } else {
                occurs.push(OccursSpec::Cell(self.parse_single_var(token, occurs_el.location)?));
            }
        }
        if occurs.len() != values.len() {
            return Err(occurs_el.err(
                ErrorKind::Structure,
                format!("{} occurrence entries for {} values", occurs.len(), values.len()),
            ));
        }
        Ok(ConstraintKind::Cardinality { scope, closed, values, occurs })
    }

    fn parse_index_spec(&mut self, el: &RawElement, start: i64) -> Result<Option<IndexSpec>> {
        match self.unique_child(el, "index")? {
            None => Ok(None),
            Some(index_el) => {
                let rank = match index_el.attr("rank") {
                    None | Some("any") => Rank::Any,
                    Some("first") => Rank::First,
                    Some("last") => Rank::Last,
                    Some(other) => {
                        return Err(index_el.err(
                            ErrorKind::Grammar,
                            format!("unknown rank \"{other}\""),
                        ));
                    }
                };
                let cell = self.parse_single_var(index_el.trimmed_text(), index_el.location)?;
                Ok(Some(IndexSpec { cell, start, rank }))
            }
        }
    }

    fn parse_min_max(&mut self, el: &RawElement, is_min: bool) -> Result<ConstraintKind> {
        self.reject_unknown_children(el, &["list", "condition", "index"], &[])?;
        let (list_text, list_loc, start) = match self.unique_child(el, "list")? {
            Some(list) => (
                list.trimmed_text(),
                list.location,
                parse_start_index(list)?,
            ),
            None if el.children_named("condition").count() > 0
                || el.children_named("index").count() > 0 =>
            {
                return Err(el.err(
                    ErrorKind::Structure,
                    format!("<{}> with child elements requires an explicit <list>", el.name),
                ));
            }
            None => (el.trimmed_text(), el.location, 0),
        };
        let scope = self.parse_scope(list_text, list_loc)?;
        if scope.len() < 2 {
            return Err(Error::structure(format!(
                "{} requires at least 2 variables",
                el.name
            ))
            .at(list_loc));
        }
        let condition = match self.unique_child(el, "condition")? {
            None => None,
            Some(cond_el) => {
                Some(self.resolve_condition(cond_el.trimmed_text(), cond_el.location)?)
            }
        };
        let index = self.parse_index_spec(el, start)?;
        if condition.is_none() && index.is_none() {
            return Err(el.err(
                ErrorKind::Structure,
                format!("<{}> requires a <condition> or an <index>", el.name),
            ));
        }
        Ok(if is_min {
            ConstraintKind::Minimum { scope, condition, index }
        } else {
            ConstraintKind::Maximum { scope, condition, index }
        })
    }

    fn parse_element(&mut self, el: &RawElement) -> Result<ConstraintKind> {
        self.reject_unknown_children(el, &["list", "index", "value"], &["matrix"])?;
        let list = self.required_child(el, "list")?;
        let start = parse_start_index(list)?;
        let value_el = self.required_child(el, "value")?;
        let value_text = value_el.trimmed_text();
        let value = if starts_like_number(value_text) {
            VarOrVal::Val(grammar::parse_integer(value_text).map_err(|e| e.at(value_el.location))?)
        } else {
            VarOrVal::Cell(self.parse_single_var(value_text, value_el.location)?)
        };
        let tokens: Vec<&str> = list.trimmed_text().split_whitespace().collect();
        if tokens.is_empty() {
            return Err(list.err(ErrorKind::Structure, "<list> must not be empty"));
        }
        let values_list = tokens.iter().all(|t| starts_like_number(t));
        let index = self.parse_index_spec(el, start)?;
        if values_list {
            let index = index.ok_or_else(|| {
                el.err(
                    ErrorKind::Structure,
                    "element over a list of values requires an <index>",
                )
            })?;
            let mut values = Vec::with_capacity(tokens.len());
            for t in &tokens {
                values.push(grammar::parse_integer(t).map_err(|e| e.at(list.location))?);
            }
            return Ok(ConstraintKind::Element(ElementForm::ValuesIndexValue {
                list: values,
                index,
                value,
            }));
        }
        let scope = self.parse_scope(list.trimmed_text(), list.location)?;
        Ok(match index {
            Some(index) => {
                ConstraintKind::Element(ElementForm::VarsIndexValue { list: scope, index, value })
            }
            None => ConstraintKind::Element(ElementForm::VarsValue { list: scope, value }),
        })
    }

    fn parse_channel(&mut self, el: &RawElement) -> Result<ConstraintKind> {
        self.reject_unknown_children(el, &["list", "value"], &[])?;
        let lists: Vec<&RawElement> = el.children_named("list").collect();
        let value_el = self.unique_child(el, "value")?;
        let (lists, bare_location) = if lists.is_empty() {
            if !el.children.is_empty() && value_el.is_none() {
                return Err(el.err(ErrorKind::Structure, "<channel> contains unexpected children"));
            }
            (Vec::new(), Some(el.location))
        } else {
            (lists, None)
        };
        let parse_list = |b: &Self, list_el: &RawElement| -> Result<(Vec<usize>, i64)> {
            let start = parse_start_index(list_el)?;
            let cells = b.parse_scope(list_el.trimmed_text(), list_el.location)?;
            if cells.len() < 2 {
                return Err(list_el.err(
                    ErrorKind::Structure,
                    "channel lists require at least 2 variables",
                ));
            }
            Ok((cells, start))
        };
        match (lists.len(), value_el) {
            (0, None) => {
                let location = bare_location.unwrap();
                let scope = self.parse_scope(el.trimmed_text(), location)?;
                if scope.len() < 2 {
                    return Err(Error::structure("channel requires at least 2 variables")
                        .at(location));
                }
                Ok(ConstraintKind::Channel(ChannelForm::OneList { list: scope, start: 0 }))
            }
            (1, None) => {
                let (list, start) = parse_list(self, lists[0])?;
                Ok(ConstraintKind::Channel(ChannelForm::OneList { list, start }))
            }
            (2, None) => {
                let (x, x_start) = parse_list(self, lists[0])?;
                let (y, y_start) = parse_list(self, lists[1])?;
                if x.len() > y.len() {
                    return Err(el.err(
                        ErrorKind::Structure,
                        format!(
                            "the first channel list ({} variables) cannot be longer than the second ({})",
                            x.len(),
                            y.len()
                        ),
                    ));
                }
                Ok(ConstraintKind::Channel(ChannelForm::TwoLists { x, x_start, y, y_start }))
            }
            (1, Some(value_el)) => {
                let (list, start) = parse_list(self, lists[0])?;
                let value = self.parse_single_var(value_el.trimmed_text(), value_el.location)?;
                Ok(ConstraintKind::Channel(ChannelForm::Value { list, start, value }))
            }
            (0, Some(_)) => {
                Err(el.err(ErrorKind::Structure, "<channel> with <value> requires a <list>"))
            }
            _ => Err(el.err(ErrorKind::Structure, "<channel> takes at most 2 lists")),
        }
    }

    fn parse_no_overlap(&mut self, el: &RawElement) -> Result<ConstraintKind> {
        self.reject_unknown_children(el, &["origins", "lengths"], &[])?;
        let zero_ignored = match el.attr("zeroIgnored") {
            None | Some("true") => true,
            Some("false") => false,
            Some(other) => {
                return Err(el.err(
                    ErrorKind::Grammar,
                    format!("zeroIgnored must be \"true\" or \"false\", found \"{other}\""),
                ));
            }
        };
        let origins_el = self.required_child(el, "origins")?;
        let lengths_el = self.required_child(el, "lengths")?;
        let origins_text = origins_el.trimmed_text();
        let (origins, lengths) = if origins_text.starts_with('(') {
            let origin_rows = grammar::parse_token_tuples(origins_text)
                .map_err(|e| e.at(origins_el.location))?;
            let length_rows = grammar::parse_token_tuples(lengths_el.trimmed_text())
                .map_err(|e| e.at(lengths_el.location))?;
            let mut origins = Vec::with_capacity(origin_rows.len());
            for row in &origin_rows {
                let mut tuple = Vec::with_capacity(row.len());
                for token in row {
                    tuple.push(self.parse_single_var(token, origins_el.location)?);
                }
                origins.push(tuple);
            }
            let mut lengths = Vec::with_capacity(length_rows.len());
            for row in &length_rows {
                let mut tuple = Vec::with_capacity(row.len());
                for token in row {
                    if starts_like_number(token) {
                        tuple.push(VarOrVal::Val(
                            grammar::parse_integer(token).map_err(|e| e.at(lengths_el.location))?,
                        ));
                    } else {
                        tuple.push(VarOrVal::Cell(
                            self.parse_single_var(token, lengths_el.location)?,
                        ));
                    }
                }
                lengths.push(tuple);
            }
            (origins, lengths)
        } else {
            let origin_cells = self.parse_scope(origins_text, origins_el.location)?;
            let length_items =
                self.parse_var_or_vals(lengths_el.trimmed_text(), lengths_el.location)?;
            (
                origin_cells.into_iter().map(|c| vec![c]).collect::<Vec<_>>(),
                length_items.into_iter().map(|l| vec![l]).collect::<Vec<_>>(),
            )
        };
        if origins.len() != lengths.len() {
            return Err(el.err(
                ErrorKind::Structure,
                format!("{} origins for {} lengths", origins.len(), lengths.len()),
            ));
        }
        if origins.len() < 2 {
            return Err(el.err(ErrorKind::Structure, "noOverlap requires at least 2 objects"));
        }
        let dim = origins[0].len();
        if dim == 0
            || origins.iter().any(|o| o.len() != dim)
            || lengths.iter().any(|l| l.len() != dim)
        {
            return Err(el.err(
                ErrorKind::Structure,
                "all origin and length tuples must share the same dimension",
            ));
        }
        Ok(ConstraintKind::NoOverlap { origins, lengths, zero_ignored })
    }

    fn parse_cumulative(&mut self, el: &RawElement) -> Result<ConstraintKind> {
        self.reject_unknown_children(
            el,
            &["origins", "lengths", "ends", "heights", "condition"],
            &["machines"],
        )?;
        let origins_el = self.required_child(el, "origins")?;
        let origins = self.parse_scope(origins_el.trimmed_text(), origins_el.location)?;
        let lengths_el = self.required_child(el, "lengths")?;
        let lengths = self.parse_var_or_vals(lengths_el.trimmed_text(), lengths_el.location)?;
        let heights_el = self.required_child(el, "heights")?;
        let heights = self.parse_var_or_vals(heights_el.trimmed_text(), heights_el.location)?;
        let ends = match self.unique_child(el, "ends")? {
            None => None,
            Some(ends_el) => Some(self.parse_scope(ends_el.trimmed_text(), ends_el.location)?),
        };
        let n = origins.len();
        if n < 2 {
            return Err(el.err(ErrorKind::Structure, "cumulative requires at least 2 tasks"));
        }
        if lengths.len() != n
            || heights.len() != n
            || ends.as_ref().is_some_and(|e| e.len() != n)
        {
            return Err(el.err(
                ErrorKind::Structure,
                "origins, lengths, heights (and ends) must have the same length",
            ));
        }
        let condition = self.condition_of(el)?;
        Ok(ConstraintKind::Cumulative { origins, lengths, ends, heights, condition })
    }

    fn parse_circuit(&mut self, el: &RawElement) -> Result<ConstraintKind> {
        self.reject_unknown_children(el, &["list", "size"], &[])?;
        let (scope, start) = match self.unique_child(el, "list")? {
            Some(list) => {
                let start = parse_start_index(list)?;
                (self.parse_scope(list.trimmed_text(), list.location)?, start)
            }
            None if el.children.is_empty() => {
                (self.parse_scope(el.trimmed_text(), el.location)?, 0)
            }
            None => {
                return Err(el.err(
                    ErrorKind::Structure,
                    "<circuit> with child elements requires an explicit <list>",
                ));
            }
        };
        if scope.len() < 2 {
            return Err(el.err(ErrorKind::Structure, "circuit requires at least 2 variables"));
        }
        let size = match self.unique_child(el, "size")? {
            None => None,
            Some(size_el) => {
                let text = size_el.trimmed_text();
                Some(if starts_like_number(text) {
                    VarOrVal::Val(grammar::parse_integer(text).map_err(|e| e.at(size_el.location))?)
                } else {
                    VarOrVal::Cell(self.parse_single_var(text, size_el.location)?)
                })
            }
        };
        Ok(ConstraintKind::Circuit { scope, start, size })
    }

    fn parse_instantiation(&mut self, el: &RawElement) -> Result<ConstraintKind> {
        self.reject_unknown_children(el, &["list", "values"], &[])?;
        let list = self.required_child(el, "list")?;
        let scope = self.parse_scope(list.trimmed_text(), list.location)?;
        if scope.is_empty() {
            return Err(list.err(ErrorKind::Structure, "<list> must name at least one variable"));
        }
        let mut seen = scope.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != scope.len() {
            return Err(list.err(
                ErrorKind::Structure,
                "a variable occurs more than once in the instantiation list",
            ));
        }
        let values_el = self.required_child(el, "values")?;
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
        if values.len() != scope.len() {
            return Err(values_el.err(
                ErrorKind::Structure,
                format!("{} values for {} variables", values.len(), scope.len()),
            ));
        }
        Ok(ConstraintKind::Instantiation { scope, values })
    }

    fn parse_matrix(&mut self, matrix_el: &RawElement) -> Result<Vec<Vec<usize>>> {
        let text = matrix_el.trimmed_text();
        let rows = if text.starts_with('(') {
            let token_rows =
                grammar::parse_token_tuples(text).map_err(|e| e.at(matrix_el.location))?;
            let mut rows = Vec::with_capacity(token_rows.len());
            for row in &token_rows {
                let mut cells = Vec::with_capacity(row.len());
                for token in row {
                    cells.push(self.parse_single_var(token, matrix_el.location)?);
                }
                rows.push(cells);
            }
            rows
        } else {
            let access =
                grammar::parse_var_access(text).map_err(|e| e.at(matrix_el.location))?;
            self.resolve_matrix_access(&access, matrix_el.location)?
        };
        if rows.len() < 2 {
            return Err(matrix_el.err(ErrorKind::Structure, "a matrix requires at least 2 rows"));
        }
        let width = rows[0].len();
        if width == 0 || rows.iter().any(|r| r.len() != width) {
            return Err(matrix_el.err(
                ErrorKind::Structure,
                "all matrix rows must be nonempty and of equal length",
            ));
        }
        Ok(rows)
    }

    fn resolve_matrix_access(
        &self,
        access: &VarAccess,
        location: Location,
    ) -> Result<Vec<Vec<usize>>> {
        let decl_ix = *self.instance.by_id.get(&access.base).ok_or_else(|| {
            Error::structure(format!("unknown variable \"{}\"", access.base)).at(location)
        })?;
        let decl = &self.instance.decls[decl_ix];
        if access.indexers.len() > decl.dims.len() {
            return Err(Error::structure(format!(
                "\"{access}\" has more indexes than the {} dimension(s) of \"{}\"",
                decl.dims.len(),
                access.base
            ))
            .at(location));
        }
        let free: Vec<usize> = (0..decl.dims.len())
            .filter(|d| {
                !matches!(access.indexers.get(*d), Some(Indexer::Index(_)))
            })
            .collect();
        if free.len() != 2 {
            return Err(Error::structure(format!(
                "\"{access}\" does not describe a two-dimensional matrix"
            ))
            .at(location));
        }
        let mut row_access = access.clone();
        while row_access.indexers.len() < decl.dims.len() {
            row_access.indexers.push(Indexer::Full);
        }
        let (row_lo, row_hi) = match row_access.indexers[free[0]] {
            Indexer::Full => (0, decl.dims[free[0]] as i64 - 1),
            Indexer::Range(a, b) => (a, b),
            Indexer::Index(_) => unreachable!("free dimensions are not fixed"),
        };
        let mut rows = Vec::new();
        for r in row_lo..=row_hi {
            let mut one = row_access.clone();
            one.indexers[free[0]] = Indexer::Index(r);
            let row = self.instance.resolve_access(&one, location)?;
            for &cell in &row {
                if self.instance.cells[cell].domain.is_none() {
                    return Err(Error::structure(format!(
                        "\"{}\" has no declared domain and cannot be used in a constraint or objective",
                        self.instance.cells[cell].name
                    ))
                    .at(location));
                }
            }
            rows.push(row);
        }
        Ok(rows)
    }

    // -- objectives ----------------------------------------------------------

    fn build_objectives(&mut self, objectives: &RawElement) -> Result<()> {
        let combination = match objectives.attr("combination") {
            None => None,
            Some("lexico") => Some(Combination::Lexico),
            Some("pareto") => Some(Combination::Pareto),
            Some(other) => {
                return Err(objectives.err(
                    ErrorKind::Grammar,
                    format!("unknown combination \"{other}\""),
                ));
            }
        };
        for child in &objectives.children {
            let minimize = match child.name.as_str() {
                "minimize" => true,
                "maximize" => false,
                other => {
                    return Err(child.err(
                        ErrorKind::Structure,
                        format!("unexpected <{other}> inside <objectives>"),
                    ));
                }
            };
            let provenance = self.provenance_of(child);
            let form = self.parse_objective_form(child)?;
            self.instance.objectives.push(Objective {
                minimize,
                form,
                provenance,
                location: child.location,
            });
        }
        if self.instance.objectives.is_empty() {
            return Err(objectives.err(
                ErrorKind::Structure,
                "<objectives> must contain at least one minimize or maximize element",
            ));
        }
        match combination {
            Some(c) => {
                if self.instance.objectives.len() == 1 {
                    return Err(objectives.err(
                        ErrorKind::Structure,
                        "the combination attribute is forbidden with a single objective",
                    ));
                }
                self.instance.combination = c;
            }
            None => self.instance.combination = Combination::default(),
        }
        Ok(())
    }

    fn parse_objective_form(&mut self, el: &RawElement) -> Result<ObjectiveForm> {
        let obj_type = el.attr("type").unwrap_or("expression");
        if obj_type == "expression" {
            if !el.children.is_empty() {
                return Err(el.err(
                    ErrorKind::Structure,
                    "an expression objective cannot have child elements",
                ));
            }
            let expr = grammar::parse_expression(el.trimmed_text(), false)
                .map_err(|e| e.at(el.location))?;
            return Ok(ObjectiveForm::Expr(self.resolve_expression(expr, el.location)?));
        }
        let kind = match obj_type {
            "sum" => ObjKind::Sum,
            "product" => ObjKind::Product,
            "minimum" => ObjKind::Minimum,
            "maximum" => ObjKind::Maximum,
            "nValues" => ObjKind::NValues,
            "lex" => ObjKind::Lex,
            other => {
                return Err(el.err(
                    ErrorKind::Structure,
                    format!("unknown objective type \"{other}\""),
                ));
            }
        };
        self.reject_unknown_children(el, &["list", "coeffs"], &[])?;
        let (list_text, list_loc) = self.list_content(el)?;
        let terms = self.parse_terms(list_text, list_loc)?;
        if terms.is_empty() {
            return Err(Error::structure("the objective list must not be empty").at(list_loc));
        }
        let coeffs = match self.unique_child(el, "coeffs")? {
            None => vec![1; terms.len()],
            Some(coeffs_el) => {
                let mut coeffs = Vec::new();
                for token in coeffs_el.trimmed_text().split_whitespace() {
                    coeffs.push(
                        grammar::parse_integer(token).map_err(|e| e.at(coeffs_el.location))?,
                    );
                }
                if coeffs.len() != terms.len() {
                    return Err(coeffs_el.err(
                        ErrorKind::Structure,
                        format!("{} coefficients for {} terms", coeffs.len(), terms.len()),
                    ));
                }
                coeffs
            }
        };
        Ok(ObjectiveForm::Specialized { kind, terms, coeffs })
    }
}

// ---------------------------------------------------------------------------
// Small helpers
// ---------------------------------------------------------------------------

fn starts_like_number(token: &str) -> bool {
    token.starts_with(|c: char| c.is_ascii_digit() || c == '-' || c == '+')
}

fn split_classes(attr: Option<&str>) -> Vec<String> {
    attr.map(|a| a.split_whitespace().map(str::to_string).collect()).unwrap_or_default()
}

fn merged_classes(outer: &[String], el: &RawElement) -> Vec<String> {
    let mut classes = outer.to_vec();
    classes.extend(split_classes(el.attr("class")));
    classes
}

fn parse_dimensions(size: &str) -> Result<Vec<usize>> {
    let mut dims = Vec::new();
    let mut rest = size;
    if rest.is_empty() {
        return Err(Error::grammar("empty size attribute"));
    }
    while !rest.is_empty() {
        let inner = rest
            .strip_prefix('[')
            .and_then(|r| r.split_once(']'))
            .ok_or_else(|| Error::grammar(format!("size \"{size}\" must be of the form [n][m]...")))?;
        let dim: usize = inner
            .0
            .parse()
            .ok()
            .filter(|d| *d > 0)
            .ok_or_else(|| Error::grammar(format!("invalid dimension \"{}\" in size", inner.0)))?;
        dims.push(dim);
        rest = inner.1;
    }
    Ok(dims)
}

fn parse_start_index(el: &RawElement) -> Result<i64> {
    match el.attr("startIndex") {
        None => Ok(0),
        Some(text) => grammar::parse_integer(text).map_err(|e| e.at(el.location)),
    }
}

fn parse_count_attr(el: &RawElement, name: &str, default: usize) -> Result<usize> {
    match el.attr(name) {
        None => Ok(default),
        Some(text) => {
            let v = grammar::parse_integer(text).map_err(|e| e.at(el.location))?;
            if v < 1 {
                return Err(el.err(
                    ErrorKind::Grammar,
                    format!("{name} must be at least 1, found {v}"),
                ));
            }
            Ok(v as usize)
        }
    }
}

/// Expands an array access to flat cell offsets within one declaration
/// (used by mixed-domain `for` patterns, before cells exist).
fn expand_offsets(access: &VarAccess, dims: &[usize], location: Location) -> Result<Vec<usize>> {
    if access.indexers.len() > dims.len() {
        return Err(Error::structure(format!(
            "\"{access}\" has more indexes than the array has dimensions"
        ))
        .at(location));
    }
    let mut offsets = vec![0usize];
    for (d, dim) in dims.iter().enumerate() {
        let indexer = access.indexers.get(d).copied().unwrap_or(Indexer::Full);
        let values: Vec<usize> = match indexer {
            Indexer::Full => (0..*dim).collect(),
            Indexer::Index(i) => {
                vec![check_bound(i, *dim, access, location)?]
            }
            Indexer::Range(a, b) => {
                let a = check_bound(a, *dim, access, location)?;
                let b = check_bound(b, *dim, access, location)?;
                (a..=b).collect()
            }
        };
        let mut next = Vec::with_capacity(offsets.len() * values.len());
        for base in &offsets {
            for v in &values {
                next.push(base * dim + v);
            }
        }
        offsets = next;
    }
    Ok(offsets)
}

/// Finds the highest `%k` index and whether `%...` occurs anywhere in a
/// template element (attributes, text, descendants).
fn scan_params(el: &RawElement) -> (Option<usize>, bool) {
    fn scan_text(text: &str, max: &mut Option<usize>, rest: &mut bool) {
        let bytes = text.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            if bytes[i] == b'%' {
                if text[i + 1..].starts_with("...") {
                    *rest = true;
                    i += 4;
                    continue;
                }
                let digits: String =
                    text[i + 1..].chars().take_while(|c| c.is_ascii_digit()).collect();
                if let Ok(k) = digits.parse::<usize>() {
                    *max = Some(max.map_or(k, |m: usize| m.max(k)));
                }
                i += 1 + digits.len();
            } else {
                i += 1;
            }
        }
    }
    fn scan_el(el: &RawElement, max: &mut Option<usize>, rest: &mut bool) {
        for (_, value) in &el.attributes {
            scan_text(value, max, rest);
        }
        scan_text(&el.text, max, rest);
        for child in &el.children {
            scan_el(child, max, rest);
        }
    }
    let mut max = None;
    let mut rest = false;
    scan_el(el, &mut max, &mut rest);
    (max, rest)
}

/// Replaces `%k` and `%...` parameters in a template element, returning the
/// instantiated copy. `rest` is the joined tail for `%...`; `None` means
/// `%...` is forbidden here.
fn apply_substitution(el: &RawElement, args: &[String], rest: Option<&str>) -> Result<RawElement> {
    let mut out = el.clone();
    for (_, value) in &mut out.attributes {
        *value = substitute_text(value, args, rest, el.location)?;
    }
    out.text = substitute_text(&out.text, args, rest, el.location)?;
    for child in &mut out.children {
        *child = apply_substitution(child, args, rest)?;
    }
    Ok(out)
}

fn substitute_text(
    text: &str,
    args: &[String],
    rest: Option<&str>,
    location: Location,
) -> Result<String> {
    if !text.contains('%') {
        return Ok(text.to_string());
    }
    let mut out = String::with_capacity(text.len());
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'%' {
            // Copy one whole character.
            let ch_len = text[i..].chars().next().map_or(1, char::len_utf8);
            out.push_str(&text[i..i + ch_len]);
            i += ch_len;
            continue;
        }
        if text[i + 1..].starts_with("...") {
            let before_ok = i == 0 || bytes[i - 1].is_ascii_whitespace();
            let after = i + 4;
            let after_ok = after >= bytes.len() || bytes[after].is_ascii_whitespace();
            if !(before_ok && after_ok) {
                return Err(Error::structure(
                    "%... must stand alone and cannot appear inside an expression",
                )
                .at(location));
            }
            let rest = rest.ok_or_else(|| {
                Error::structure("%... is not allowed in this template").at(location)
            })?;
            out.push_str(rest);
            i = after;
            continue;
        }
        let digits: String = text[i + 1..].chars().take_while(|c| c.is_ascii_digit()).collect();
        if digits.is_empty() {
            return Err(Error::grammar("stray % in a constraint template").at(location));
        }
        let k: usize = digits
            .parse()
            .map_err(|_| Error::grammar("parameter index out of range").at(location))?;
        let arg = args.get(k).ok_or_else(|| {
            Error::structure(format!("template parameter %{k} has no matching argument"))
                .at(location)
        })?;
        out.push_str(arg);
        i += 1 + digits.len();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::xml;

    fn build(text: &str) -> Result<Instance> {
        let mut doc = xml::load_document(text)?;
        xml::resolve_aliases(&mut doc)?;
        let frame = xml::validate_skeleton(&doc)?;
        build_instance(&frame, &BuildOptions::default())
    }

    fn csp(vars: &str, constraints: &str) -> String {
        format!(
            "<instance format=\"XCSP3\" type=\"CSP\"><variables>{vars}</variables><constraints>{constraints}</constraints></instance>"
        )
    }

    #[test]
    fn scalar_and_array_cells() {
        let inst = build(&csp(
            "<var id=\"x\">1..3</var><array id=\"y\" size=\"[2][2]\">0 1</array>",
            "",
        ))
        .unwrap();
        assert_eq!(inst.cells.len(), 5);
        assert_eq!(inst.cells[0].name, "x");
        assert_eq!(inst.cells[1].name, "y[0][0]");
        assert_eq!(inst.cells[4].name, "y[1][1]");
        assert_eq!(inst.decls[1].dims, vec![2, 2]);
    }

    #[test]
    fn compact_list_expansion_order() {
        let inst = build(&csp("<array id=\"y\" size=\"[4][8]\">0 1</array>", "")).unwrap();
        let access = grammar::parse_var_access("y[2..3][0..1]").unwrap();
        let cells = inst.resolve_access(&access, Location::new(1, 1)).unwrap();
        let names: Vec<&str> = cells.iter().map(|c| inst.cells[*c].name.as_str()).collect();
        assert_eq!(names, vec!["y[2][0]", "y[2][1]", "y[3][0]", "y[3][1]"]);
        let full = grammar::parse_var_access("y").unwrap();
        assert_eq!(inst.resolve_access(&full, Location::new(1, 1)).unwrap().len(), 32);
    }

    #[test]
    fn mixed_domains_with_others_and_undefined() {
        let inst = build(&csp(
            "<array id=\"z\" size=\"[6]\"><domain for=\"z[0] z[2]\">0 1</domain><domain for=\"z[1]\">2 4</domain><domain for=\"others\">9</domain></array>",
            "",
        ))
        .unwrap();
        let d0 = inst.cells[0].domain.as_ref().unwrap();
        assert!(d0.contains(0) && d0.contains(1));
        let d1 = inst.cells[1].domain.as_ref().unwrap();
        assert!(d1.contains(4));
        let d3 = inst.cells[3].domain.as_ref().unwrap();
        assert!(d3.contains(9));

        // Without "others", uncovered cells have no domain and are rejected
        // when used.
        let partial = csp(
            "<array id=\"z\" size=\"[3]\"><domain for=\"z[0] z[1]\">0 1</domain></array>",
            "<allEqual> z[0] z[2] </allEqual>",
        );
        let err = build(&partial).unwrap_err();
        assert!(err.to_string().contains("no declared domain"));
    }

    #[test]
    fn mixed_domain_errors() {
        let overlap = csp(
            "<array id=\"z\" size=\"[3]\"><domain for=\"z[0] z[0]\">0</domain></array>",
            "",
        );
        assert!(build(&overlap).unwrap_err().to_string().contains("more than one"));
        let others_not_last = csp(
            "<array id=\"z\" size=\"[3]\"><domain for=\"others\">0</domain><domain for=\"z[0]\">1</domain></array>",
            "",
        );
        assert!(build(&others_not_last).unwrap_err().to_string().contains("last"));
    }

    #[test]
    fn size_attribute_validation() {
        assert!(build(&csp("<array id=\"y\" size=\"4\">0 1</array>", "")).is_err());
        assert!(build(&csp("<array id=\"y\" size=\"[0]\">0 1</array>", "")).is_err());
        assert!(build(&csp("<array id=\"y\" size=\"[2][]\">0 1</array>", "")).is_err());
    }

    #[test]
    fn symbolic_variables_rejected() {
        let e = build(&csp("<var id=\"x\" type=\"symbolic\">a b</var>", "")).unwrap_err();
        assert_eq!(e.kind, ErrorKind::Unsupported);
    }

    #[test]
    fn intension_and_views() {
        let inst = build(&csp(
            "<var id=\"x\">0..3</var><var id=\"y\">0..3</var><var id=\"z\">0..3</var>",
            "<intension>eq(add(x,y),z)</intension><allDifferent>add(x,1) y z</allDifferent><sum><list>eq(x,1) y</list><condition>(le,2)</condition></sum>",
        ))
        .unwrap();
        assert_eq!(inst.constraints.len(), 3);
        assert_eq!(inst.constraints[0].provenance, "#0");
        assert!(matches!(inst.constraints[0].kind, ConstraintKind::Intension { .. }));
        match &inst.constraints[1].kind {
            ConstraintKind::AllDifferent { terms, .. } => assert_eq!(terms.len(), 3),
            other => panic!("unexpected kind {}", other.name()),
        }
        // A non-Boolean intension is rejected.
        let e = build(&csp("<var id=\"x\">0..3</var>", "<intension>add(x,1)</intension>"))
            .unwrap_err();
        assert!(e.to_string().contains("Boolean"));
    }

    #[test]
    fn extension_tables() {
        let inst = build(&csp(
            "<var id=\"x\">0 1</var><var id=\"y\">0 1</var><var id=\"z\">0 1</var>",
            "<extension><list>x y z</list><supports>(0,1,0)(1,0,0)(1,1,0)(1,1,1)</supports></extension>",
        ))
        .unwrap();
        match &inst.constraints[0].kind {
            ConstraintKind::Extension { scope, table: Table::Rows { rows, conflicts } } => {
                assert_eq!(scope.len(), 3);
                assert_eq!(rows.len(), 4);
                assert!(!conflicts);
            }
            _ => panic!("expected a table"),
        }
        // Unary form uses domain syntax.
        let unary = build(&csp(
            "<var id=\"x\">0..9</var>",
            "<extension><list>x</list><conflicts>2 5..7</conflicts></extension>",
        ))
        .unwrap();
        assert!(matches!(
            unary.constraints[0].kind,
            ConstraintKind::Extension { table: Table::Unary { conflicts: true, .. }, .. }
        ));
        // Out-of-order tuples violate the table ordering rule.
        let unordered = build(&csp(
            "<var id=\"x\">0 1</var><var id=\"y\">0 1</var>",
            "<extension><list>x y</list><supports>(1,0)(0,1)</supports></extension>",
        ));
        assert!(unordered.is_err());
    }

    #[test]
    fn ordered_case_desugaring() {
        let inst = build(&csp(
            "<var id=\"a\">0..9</var><var id=\"b\">0..9</var>",
            "<ordered case=\"strictlyIncreasing\"> a b </ordered>",
        ))
        .unwrap();
        match &inst.constraints[0].kind {
            ConstraintKind::Ordered { op, lengths, .. } => {
                assert_eq!(*op, OrderOp::Lt);
                assert!(lengths.is_none());
            }
            _ => panic!("expected ordered"),
        }
    }

    #[test]
    fn group_expansion() {
        let inst = build(&csp(
            "<array id=\"x\" size=\"[3]\">0..5</array><array id=\"y\" size=\"[3]\">0..5</array>",
            "<group id=\"g\"><intension>eq(add(%0,%1),%2)</intension><args>x[0] x[1] x[2]</args><args>y[0] y[1] y[2]</args></group>",
        ))
        .unwrap();
        assert_eq!(inst.constraints.len(), 2);
        assert_eq!(inst.constraints[0].provenance, "g[0]");
        assert_eq!(inst.constraints[1].provenance, "g[1]");
        // %... absorbs the remainder.
        let rest = build(&csp(
            "<array id=\"x\" size=\"[2][2]\">0..5</array>",
            "<group id=\"g\"><allDifferent>%...</allDifferent><args>x[0][]</args><args>x[1][]</args></group>",
        ))
        .unwrap();
        assert_eq!(rest.constraints.len(), 2);
        match &rest.constraints[0].kind {
            ConstraintKind::AllDifferent { terms, .. } => assert_eq!(terms.len(), 2),
            _ => panic!("expected allDifferent"),
        }
    }

    #[test]
    fn group_arity_errors() {
        let too_few = csp(
            "<var id=\"x\">0..5</var>",
            "<group><intension>eq(%0,%2)</intension><args>x 1</args></group>",
        );
        assert!(build(&too_few).unwrap_err().to_string().contains("%2"));
        let too_many = csp(
            "<var id=\"x\">0..5</var>",
            "<group><intension>eq(%0,1)</intension><args>x x</args></group>",
        );
        assert!(build(&too_many).unwrap_err().to_string().contains("supplies"));
        let nested = csp(
            "<var id=\"x\">0..5</var>",
            "<group><group><intension>eq(%0,1)</intension><args>x</args></group><args>x</args></group>",
        );
        assert!(build(&nested).unwrap_err().to_string().contains("group"));
    }

    #[test]
    fn rest_parameter_not_inside_expression() {
        let bad = csp(
            "<var id=\"x\">0..5</var>",
            "<group><intension>eq(add(%...),1)</intension><args>x</args></group>",
        );
        let e = build(&bad).unwrap_err();
        assert!(e.to_string().contains("%..."));
    }

    #[test]
    fn blocks_propagate_classes() {
        let inst = build(&csp(
            "<var id=\"x\">0..5</var><var id=\"y\">0..5</var>",
            "<block class=\"symmetryBreaking\"><intension>le(x,y)</intension><block class=\"inner\"><intension>ne(x,y)</intension></block></block>",
        ))
        .unwrap();
        assert_eq!(inst.constraints[0].classes, vec!["symmetryBreaking"]);
        assert_eq!(inst.constraints[1].classes, vec!["symmetryBreaking", "inner"]);
    }

    #[test]
    fn drop_classes_filter() {
        let doc = csp(
            "<var id=\"x\">0..5</var><var id=\"y\">0..5</var>",
            "<intension>le(x,y)</intension><block class=\"redundantConstraints\"><intension>ne(x,y)</intension></block>",
        );
        let mut raw = xml::load_document(&doc).unwrap();
        xml::resolve_aliases(&mut raw).unwrap();
        let frame = xml::validate_skeleton(&raw).unwrap();
        let options = BuildOptions { drop_classes: vec!["redundantConstraints".into()] };
        let inst = build_instance(&frame, &options).unwrap();
        assert_eq!(inst.constraints.len(), 1);
    }

    #[test]
    fn slide_windows() {
        let inst = build(&csp(
            "<array id=\"x\" size=\"[4]\">1..5</array>",
            "<slide id=\"c1\"><list>x[]</list><intension>eq(add(%0,%1),%2)</intension></slide>",
        ))
        .unwrap();
        match &inst.constraints[0].kind {
            ConstraintKind::Slide { windows } => assert_eq!(windows.len(), 2),
            _ => panic!("expected slide"),
        }
        // Circular slide wraps around.
        let circ = build(&csp(
            "<array id=\"x\" size=\"[4]\">0 1</array>",
            "<slide circular=\"true\"><list>x[]</list><intension>ne(%0,%1)</intension></slide>",
        ))
        .unwrap();
        match &circ.constraints[0].kind {
            ConstraintKind::Slide { windows } => assert_eq!(windows.len(), 4),
            _ => panic!("expected slide"),
        }
        // Ragged window arithmetic is an error.
        let ragged = csp(
            "<array id=\"x\" size=\"[4]\">0 1</array>",
            "<slide><list offset=\"2\">x[]</list><intension>eq(add(%0,%1),%2)</intension></slide>",
        );
        assert!(build(&ragged).unwrap_err().to_string().contains("ragged"));
    }

    #[test]
    fn slide_multi_list() {
        let inst = build(&csp(
            "<array id=\"w\" size=\"[3]\">0 1</array><array id=\"z\" size=\"[3]\">0 1</array>",
            "<slide><list>w[]</list><list>z[]</list><intension>ne(%0,%1)</intension></slide>",
        ))
        .unwrap();
        match &inst.constraints[0].kind {
            ConstraintKind::Slide { windows } => assert_eq!(windows.len(), 3),
            _ => panic!("expected slide"),
        }
    }

    #[test]
    fn objectives_forms() {
        let cop = "<instance format=\"XCSP3\" type=\"COP\"><variables><var id=\"b\">0..10</var><var id=\"c\">0..10</var></variables><constraints/><objectives><maximize type=\"sum\"><list>b c</list><coeffs>400 450</coeffs></maximize></objectives></instance>";
        let inst = build(cop).unwrap();
        assert_eq!(inst.objectives.len(), 1);
        match &inst.objectives[0].form {
            ObjectiveForm::Specialized { kind, terms, coeffs } => {
                assert_eq!(*kind, ObjKind::Sum);
                assert_eq!(terms.len(), 2);
                assert_eq!(coeffs, &vec![400, 450]);
            }
            _ => panic!("expected a specialized objective"),
        }
        let expr = "<instance format=\"XCSP3\" type=\"COP\"><variables><var id=\"b\">0..10</var></variables><constraints/><objectives><minimize>add(b,2)</minimize></objectives></instance>";
        assert!(matches!(build(expr).unwrap().objectives[0].form, ObjectiveForm::Expr(_)));
        let bad_combination = "<instance format=\"XCSP3\" type=\"COP\"><variables><var id=\"b\">0..10</var></variables><constraints/><objectives combination=\"lexico\"><minimize>b</minimize></objectives></instance>";
        assert!(build(bad_combination).unwrap_err().to_string().contains("combination"));
    }

    #[test]
    fn usefulness_analysis() {
        let inst = build(&csp(
            "<array id=\"x\" size=\"[4]\">1 2</array>",
            "<intension>eq(add(x[0],x[1]),x[2])</intension>",
        ))
        .unwrap();
        let useless: Vec<usize> = inst.useless_cells().collect();
        assert_eq!(useless.len(), 1);
        assert_eq!(inst.cells[useless[0]].name, "x[3]");
    }

    #[test]
    fn unsupported_and_unknown_constraints() {
        let e = build(&csp("<var id=\"x\">0 1</var>", "<stretch><list>x x</list></stretch>"))
            .unwrap_err();
        assert_eq!(e.kind, ErrorKind::Unsupported);
        let e = build(&csp("<var id=\"x\">0 1</var>", "<frobnicate/>")).unwrap_err();
        assert_eq!(e.kind, ErrorKind::Structure);
        let e = build(&csp(
            "<var id=\"x\">0 1</var><var id=\"y\">0 1</var>",
            "<cumulative><origins>x y</origins><lengths>1 1</lengths><heights>1 1</heights><machines>1 2</machines><condition>(le,2)</condition></cumulative>",
        ))
        .unwrap_err();
        assert_eq!(e.kind, ErrorKind::Unsupported);
    }

    #[test]
    fn matrix_parsing() {
        let inst = build(&csp(
            "<array id=\"m\" size=\"[2][3]\">0..5</array>",
            "<allDifferent><matrix>m[][]</matrix></allDifferent>",
        ))
        .unwrap();
        match &inst.constraints[0].kind {
            ConstraintKind::AllDifferentMatrix { matrix, .. } => {
                assert_eq!(matrix.len(), 2);
                assert_eq!(matrix[0].len(), 3);
            }
            _ => panic!("expected matrix"),
        }
        let explicit = build(&csp(
            "<var id=\"a\">0 1</var><var id=\"b\">0 1</var><var id=\"c\">0 1</var><var id=\"d\">0 1</var>",
            "<lex><matrix>(a,b)(c,d)</matrix><operator>le</operator></lex>",
        ))
        .unwrap();
        assert!(matches!(explicit.constraints[0].kind, ConstraintKind::LexMatrix { .. }));
    }

    #[test]
    fn channel_forms() {
        let two = build(&csp(
            "<array id=\"x\" size=\"[3]\">0..2</array><array id=\"y\" size=\"[3]\">0..2</array>",
            "<channel><list>x[]</list><list>y[]</list></channel>",
        ))
        .unwrap();
        assert!(matches!(
            two.constraints[0].kind,
            ConstraintKind::Channel(ChannelForm::TwoLists { .. })
        ));
        let longer_first = csp(
            "<array id=\"x\" size=\"[4]\">0..3</array><array id=\"y\" size=\"[3]\">0..3</array>",
            "<channel><list>x[]</list><list>y[]</list></channel>",
        );
        assert!(build(&longer_first).is_err());
    }

    #[test]
    fn instantiation_constraint() {
        let inst = build(&csp(
            "<array id=\"x\" size=\"[3]\">0..30</array>",
            "<instantiation><list>x[]</list><values>12 4 30</values></instantiation>",
        ))
        .unwrap();
        match &inst.constraints[0].kind {
            ConstraintKind::Instantiation { values, .. } => {
                assert_eq!(values, &vec![Some(12), Some(4), Some(30)]);
            }
            _ => panic!("expected instantiation"),
        }
        let dup = csp(
            "<var id=\"x\">0 1</var>",
            "<instantiation><list>x x</list><values>0 0</values></instantiation>",
        );
        assert!(build(&dup).unwrap_err().to_string().contains("more than once"));
    }

    #[test]
    fn undefined_cells_rejected_in_constraints() {
        let text = csp(
            "<array id=\"z\" size=\"[2]\"><domain for=\"z[0]\">0 1</domain></array>",
            "<allEqual> z[] </allEqual>",
        );
        let e = build(&text).unwrap_err();
        assert!(e.to_string().contains("z[1]"));
    }
}
