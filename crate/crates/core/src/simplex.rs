//! Generalized network simplex for networks with linear interdependencies.
//!
//! The basis is a spanning forest of independent arcs plus `r` interdependent
//! variables certified by the matrix `D` (or its reduced form `D̂`). Each
//! iteration:
//!
//! 1. guesses node potentials tree by tree, then corrects them by solving
//!    `Dᵀ σ = c^π` so every basic variable has zero reduced cost;
//! 2. prices the nonbasic variables;
//! 3. finds the change direction by solving `D x̃ = b̃` for the interdependent
//!    part and sweeping each tree from leaf to root for the rest;
//! 4. runs a ratio test and exchanges one variable.
//!
//! Phase 1 starts from an artificial star rooted at the first node, with all
//! slacks basic, so `D` is the identity and the start is trivially good.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::{
    build_cert, is_good, BasisError, BasisState, CertMatrix, RowTag, VarStatus, VariableRef,
};
use crate::instance::{ArcRecord, Instance, ModelKind, TOLERANCE};
use crate::linalg::Lu;

/// Changes smaller than this per unit step are treated as zero.
const DELTA_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PricingRule {
    /// Most negative reduced cost (largest violation).
    #[default]
    Dantzig,
    /// Least-index violating variable.
    Bland,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PivotCase {
    /// Flow only circulates inside forest components.
    Case1,
    /// Flow moves between forest components.
    Case2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TraceLevel {
    #[default]
    Off,
    /// One record per iteration: pivot, step and objective.
    Summary,
    /// Summary plus certificate matrices, requirements, potentials and values.
    Detailed,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("certificate matrix is singular; the basis is not good")]
    SingularCertificate,
    #[error("iteration limit {0} reached")]
    IterationLimit(usize),
    #[error("basis error: {0}")]
    Basis(#[from] BasisError),
    #[error("instance is not solvable as a linear model: {0}")]
    InvalidInstance(String),
    #[error("starting basis is not primal feasible (violation {0})")]
    InfeasibleStart(f64),
    #[error("invariant violated after iteration {iteration}: {what}")]
    Invariant { iteration: usize, what: String },
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub rule: PricingRule,
    /// Solve the reduced systems on `D̂` instead of `D`.
    pub use_dhat: bool,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub degenerate_limit: usize,
    /// Defaults to `10 (m + p) n`.
    pub max_iterations: Option<usize>,
    pub trace: TraceLevel,
    /// Re-verify basis and solution invariants after every pivot.
    pub check_invariants: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            rule: PricingRule::Dantzig,
            use_dhat: false,
            degenerate_limit: 50,
            max_iterations: None,
            trace: TraceLevel::Off,
            check_invariants: false,
        }
    }
}

/// Node potentials, interdependence potentials and the correction vector
/// that produced them (tree corrections for all but the last tree, then one
/// entry per interdependence).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PotentialState {
    pub node_pot: Vec<f64>,
    pub interdep_pot: Vec<f64>,
    pub correction: Vec<f64>,
}

impl PotentialState {
    /// Node potentials followed by interdependence potentials.
    pub fn stacked(&self) -> Vec<f64> {
        self.node_pot.iter().chain(&self.interdep_pot).copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PivotPlan {
    pub entering: VariableRef,
    /// +1 when the entering variable rises from its lower bound, -1 when it
    /// falls from its upper bound.
    pub direction: f64,
    /// Change per unit step of every moving variable, entering included.
    pub deltas: Vec<(VariableRef, f64)>,
    pub theta_star: f64,
    /// Blocking variable and the bound status it moves to. `None` only for
    /// an unbounded ray.
    pub blocking: Option<(VariableRef, VarStatus)>,
    pub case: PivotCase,
}

/// A readable name for a variable in traces and dumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum VarLabel {
    Arc { id: u32, tail: u32, head: u32 },
    /// 1-based interdependence number.
    Slack { index: usize },
    /// Phase-1 arc attached to this node.
    Artificial { node: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceDetail {
    pub trees: Vec<Vec<u32>>,
    pub columns: Vec<VarLabel>,
    pub d: Vec<Vec<f64>>,
    pub dhat: Vec<Vec<f64>>,
    pub net_requirements: Vec<f64>,
    pub potentials: Vec<f64>,
    pub correction: Vec<f64>,
    pub basic_values: Vec<(VarLabel, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub phase: u8,
    pub iteration: usize,
    pub entering: Option<VarLabel>,
    pub leaving: Option<VarLabel>,
    pub theta: Option<f64>,
    pub objective: f64,
    pub case: Option<PivotCase>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<TraceDetail>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub flows: Vec<f64>,
    pub slacks: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub phase1_iterations: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TraceRecord>,
}

/// `D` (or `D̂`) together with its LU factors.
#[derive(Debug, Clone)]
pub struct CertSystem {
    pub cert: CertMatrix,
    use_dhat: bool,
    lu: Lu,
    column_of: Vec<Option<usize>>,
}

impl CertSystem {
    pub fn new(basis: &BasisState, instance: &Instance, use_dhat: bool) -> Result<Self, SolveError> {
        let cert = build_cert(basis, instance)?;
        let lu = if use_dhat {
            if cert.dhat_rows.len() != cert.dhat_columns.len() {
                return Err(SolveError::SingularCertificate);
            }
            Lu::factor(&cert.dhat, TOLERANCE)
        } else {
            Lu::factor(&cert.d, TOLERANCE)
        }
        .ok_or(SolveError::SingularCertificate)?;
        let mut column_of = vec![None; instance.arc_count() + instance.interdep_count()];
        for (j, v) in cert.column_vars.iter().enumerate() {
            column_of[v.index(instance.arc_count())] = Some(j);
        }
        Ok(Self {
            cert,
            use_dhat,
            lu,
            column_of,
        })
    }

    fn tree_rows(&self) -> usize {
        self.cert
            .row_tags
            .iter()
            .filter(|t| matches!(t, RowTag::Tree(_)))
            .count()
    }

    /// Solves `D x̃ = b̃`, through `D̂` plus slack reconstruction when asked.
    fn solve(&self, instance: &Instance, btilde: &[f64]) -> Vec<f64> {
        if !self.use_dhat {
            return self.lu.solve(btilde);
        }
        let cert = &self.cert;
        let bhat: Vec<f64> = cert.dhat_rows.iter().map(|&i| btilde[i]).collect();
        let xhat = self.lu.solve(&bhat);
        let mut xt = vec![0.0; cert.r()];
        for (k, &j) in cert.dhat_columns.iter().enumerate() {
            xt[j] = xhat[k];
        }
        let trees = self.tree_rows();
        let n = instance.arc_count();
        for (j, v) in cert.column_vars.iter().enumerate() {
            if let VariableRef::Slack(t) = *v {
                let (p, c) = instance.link(t);
                let mut s = btilde[trees + t];
                for a in [p, c] {
                    if let Some(k) = self.column_of[a] {
                        s -= instance.link_coefficient(a) * xt[k];
                    }
                }
                debug_assert!(self.column_of[n + t] == Some(j));
                xt[j] = s;
            }
        }
        xt
    }

    /// Solves `Dᵀ σ = c`, setting basic-slack corrections to zero on the
    /// reduced path.
    fn solve_transpose(&self, c: &[f64]) -> Vec<f64> {
        if !self.use_dhat {
            return self.lu.solve_transpose(c);
        }
        let cert = &self.cert;
        let chat: Vec<f64> = cert.dhat_columns.iter().map(|&j| c[j]).collect();
        let shat = self.lu.solve_transpose(&chat);
        let mut sigma = vec![0.0; cert.r()];
        for (k, &i) in cert.dhat_rows.iter().enumerate() {
            sigma[i] = shat[k];
        }
        sigma
    }
}

fn raw_reduced_cost(instance: &Instance, v: VariableRef, node_pot: &[f64], link_pot: &[f64]) -> f64 {
    match v {
        VariableRef::Flow(a) => {
            let mut rc = instance.cost(a) - (node_pot[instance.tail(a)] - node_pot[instance.head(a)]);
            if let Some(t) = v.link(instance) {
                rc -= instance.link_coefficient(a) * link_pot[t];
            }
            rc
        }
        VariableRef::Slack(t) => -link_pot[t],
    }
}

/// Reduced cost of a variable under the given potentials.
pub fn reduced_cost(var: VariableRef, potentials: &PotentialState, instance: &Instance) -> f64 {
    raw_reduced_cost(instance, var, &potentials.node_pot, &potentials.interdep_pot)
}

/// Two-step potential computation: propagate guesses from each tree root,
/// then correct by `Dᵀ σ = c^π`.
///
/// Without `previous`, roots start at zero. With `previous`, every root keeps
/// its old potential, so only trees merged by the last pivot shift.
pub fn compute_potentials(
    basis: &BasisState,
    instance: &Instance,
    system: &CertSystem,
    previous: Option<&PotentialState>,
) -> PotentialState {
    let forest = basis.forest();
    let m = instance.node_count();
    let p = instance.interdep_count();
    let n = instance.arc_count();
    let mut pi = vec![0.0; m];
    for h in 0..forest.tree_count() {
        let members = forest.members(h);
        let root = members[0];
        pi[root] = previous.map_or(0.0, |s| s.node_pot[root]);
        for &v in &members[1..] {
            let (u, a) = forest.parent(v).expect("non-root has a parent");
            let c = instance.cost(a);
            pi[v] = if instance.tail(a) == u { pi[u] - c } else { pi[u] + c };
        }
    }
    let mut link_pot: Vec<f64> = (0..p)
        .map(|t| {
            if basis.statuses()[n + t] == VarStatus::Basic {
                0.0
            } else {
                previous.map_or(0.0, |s| s.interdep_pot[t])
            }
        })
        .collect();
    let crc: Vec<f64> = system
        .cert
        .column_vars
        .iter()
        .map(|&v| raw_reduced_cost(instance, v, &pi, &link_pot))
        .collect();
    let sigma = system.solve_transpose(&crc);
    let trees = system.tree_rows();
    for (i, x) in pi.iter_mut().enumerate() {
        let h = forest.tree_of(i);
        if h < trees {
            *x += sigma[h];
        }
    }
    for (t, x) in link_pot.iter_mut().enumerate() {
        *x += sigma[trees + t];
    }
    PotentialState {
        node_pot: pi,
        interdep_pot: link_pot,
        correction: sigma,
    }
}

/// Net requirement vector `b̃`: one entry per tree except the last, then one
/// per interdependence, with nonbasic variables fixed at their bounds.
pub fn net_requirements(basis: &BasisState, instance: &Instance) -> Vec<f64> {
    let (node_rhs, link_rhs) = nonbasic_rhs(basis, instance);
    let forest = basis.forest();
    let trees = forest.tree_count() - 1;
    let mut out = vec![0.0; trees];
    for (i, b) in node_rhs.iter().enumerate() {
        let h = forest.tree_of(i);
        if h < trees {
            out[h] += b;
        }
    }
    out.extend(link_rhs);
    out
}

fn nonbasic_rhs(basis: &BasisState, instance: &Instance) -> (Vec<f64>, Vec<f64>) {
    let mut node_rhs: Vec<f64> = instance.nodes().iter().map(|n| n.supply).collect();
    let mut link_rhs: Vec<f64> = instance.interdeps().iter().map(|d| d.beta).collect();
    for v in basis.upper() {
        if let VariableRef::Flow(a) = v {
            let u = instance.capacity(a);
            node_rhs[instance.tail(a)] -= u;
            node_rhs[instance.head(a)] += u;
            if let Some(t) = v.link(instance) {
                link_rhs[t] -= instance.link_coefficient(a) * u;
            }
        }
    }
    (node_rhs, link_rhs)
}

/// Solves `B x_B = (node_rhs; link_rhs)` for the basic variables, returning a
/// dense vector over all variables (zero for nonbasic ones).
fn solve_basic_system(
    basis: &BasisState,
    instance: &Instance,
    system: &CertSystem,
    node_rhs: &[f64],
    link_rhs: &[f64],
) -> Vec<f64> {
    let forest = basis.forest();
    let n = instance.arc_count();
    let trees = system.tree_rows();
    let mut btilde = vec![0.0; trees];
    for (i, b) in node_rhs.iter().enumerate() {
        let h = forest.tree_of(i);
        if h < trees {
            btilde[h] += b;
        }
    }
    btilde.extend_from_slice(link_rhs);
    let xt = system.solve(instance, &btilde);
    let mut vals = vec![0.0; n + instance.interdep_count()];
    let mut req = node_rhs.to_vec();
    for (j, &v) in system.cert.column_vars.iter().enumerate() {
        vals[v.index(n)] = xt[j];
        if let VariableRef::Flow(a) = v {
            req[instance.tail(a)] -= xt[j];
            req[instance.head(a)] += xt[j];
        }
    }
    for h in 0..forest.tree_count() {
        for &v in forest.members(h).iter().rev() {
            if let Some((u, a)) = forest.parent(v) {
                let e = req[v];
                vals[a] = if instance.tail(a) == v { e } else { -e };
                req[u] += e;
                req[v] = 0.0;
            }
        }
    }
    vals
}

/// Values of all variables for a basis: nonbasic at their bounds, basic
/// interdependent ones from the certificate system, tree arcs by
/// leaf-to-root conservation sweeps. Indexed by variable.
pub fn basic_values(basis: &BasisState, instance: &Instance, system: &CertSystem) -> Vec<f64> {
    let (node_rhs, link_rhs) = nonbasic_rhs(basis, instance);
    let mut vals = solve_basic_system(basis, instance, system, &node_rhs, &link_rhs);
    for v in basis.upper() {
        vals[v.index(instance.arc_count())] = v.upper_bound(instance);
    }
    vals
}

/// Change direction, step length and blocking variable for an entering
/// variable. Ratio-test ties go to the least variable index.
pub fn pivot_plan(
    entering: VariableRef,
    basis: &BasisState,
    instance: &Instance,
    system: &CertSystem,
    values: &[f64],
) -> PivotPlan {
    let n = instance.arc_count();
    let m = instance.node_count();
    let direction = match basis.status(entering) {
        VarStatus::Upper => -1.0,
        _ => 1.0,
    };
    let mut node_rhs = vec![0.0; m];
    let mut link_rhs = vec![0.0; instance.interdep_count()];
    match entering {
        VariableRef::Flow(a) => {
            node_rhs[instance.tail(a)] = -direction;
            node_rhs[instance.head(a)] = direction;
            if let Some(t) = entering.link(instance) {
                link_rhs[t] = -instance.link_coefficient(a) * direction;
            }
        }
        VariableRef::Slack(t) => link_rhs[t] = -direction,
    }
    let moved = solve_basic_system(basis, instance, system, &node_rhs, &link_rhs);
    let mut deltas: Vec<(VariableRef, f64)> = basis
        .basic()
        .iter()
        .filter_map(|&v| {
            let d = moved[v.index(n)];
            (d.abs() > DELTA_EPS).then_some((v, d))
        })
        .collect();
    deltas.push((entering, direction));

    let forest = basis.forest();
    let crosses = |v: &VariableRef| match *v {
        VariableRef::Flow(a) => forest.tree_of(instance.tail(a)) != forest.tree_of(instance.head(a)),
        VariableRef::Slack(_) => false,
    };
    let case = if deltas.iter().any(|(v, _)| crosses(v)) {
        PivotCase::Case2
    } else {
        PivotCase::Case1
    };

    let mut theta_star = f64::INFINITY;
    let mut blocking: Option<(VariableRef, VarStatus)> = None;
    let mut consider = |v: VariableRef, theta: f64, to: VarStatus| {
        let better = match blocking {
            None => true,
            Some((b, _)) => {
                let tie = (theta - theta_star).abs() <= 1e-12 * (1.0 + theta_star.abs());
                (theta < theta_star && !tie) || (tie && v.index(n) < b.index(n))
            }
        };
        if better {
            theta_star = theta;
            blocking = Some((v, to));
        }
    };
    let ub = entering.upper_bound(instance);
    if ub.is_finite() {
        let to = if direction > 0.0 { VarStatus::Upper } else { VarStatus::Lower };
        consider(entering, ub, to);
    }
    for &(v, d) in &deltas[..deltas.len() - 1] {
        let x = values[v.index(n)];
        if d < 0.0 {
            consider(v, x.max(0.0) / -d, VarStatus::Lower);
        } else {
            let u = v.upper_bound(instance);
            if u.is_finite() {
                consider(v, (u - x).max(0.0) / d, VarStatus::Upper);
            }
        }
    }
    PivotPlan {
        entering,
        direction,
        deltas,
        theta_star,
        blocking,
        case,
    }
}

/// Picks an entering variable, or `None` when the optimality conditions hold
/// (reduced costs `>= -tol` at lower bounds, `<= tol` at upper bounds).
pub fn price(
    basis: &BasisState,
    potentials: &PotentialState,
    instance: &Instance,
    rule: PricingRule,
    eligible: impl Fn(VariableRef) -> bool,
) -> Option<VariableRef> {
    let mut best: Option<(VariableRef, f64)> = None;
    for v in basis.nonbasic() {
        if !eligible(v) {
            continue;
        }
        let rc = reduced_cost(v, potentials, instance);
        let violation = match basis.status(v) {
            VarStatus::Lower => -rc,
            VarStatus::Upper => rc,
            VarStatus::Basic => continue,
        };
        if violation <= TOLERANCE {
            continue;
        }
        match rule {
            PricingRule::Bland => return Some(v),
            PricingRule::Dantzig => {
                if best.map_or(true, |(_, b)| violation > b) {
                    best = Some((v, violation));
                }
            }
        }
    }
    best.map(|(v, _)| v)
}

/// Phase-1 problem: the original network plus one artificial arc between the
/// first node and every other node, oriented to carry that node's supply.
#[derive(Debug, Clone)]
pub struct Phase1Setup {
    /// Original arcs at zero cost, artificial arcs at unit cost, uncapacitated.
    pub phase1: Instance,
    /// Original costs; artificial arcs capped at zero.
    pub phase2: Instance,
    pub basis: BasisState,
    /// Dense index of the first artificial arc.
    pub first_artificial: usize,
}

/// Artificial-star starting basis: all artificial arcs and all slacks basic,
/// every original arc at its lower bound.
pub fn initial_basis(instance: &Instance) -> Result<Phase1Setup, SolveError> {
    let n = instance.arc_count();
    let m = instance.node_count();
    if m < 2 {
        return Err(SolveError::InvalidInstance("need at least two nodes".into()));
    }
    let root = instance.nodes()[0].id;
    let mut next_id = instance.arcs().iter().map(|a| a.id).max().unwrap_or(0) + 1;
    let mut art = Vec::with_capacity(m - 1);
    for node in &instance.nodes()[1..] {
        let (tail, head) = if node.supply >= 0.0 {
            (node.id, root)
        } else {
            (root, node.id)
        };
        art.push(ArcRecord {
            id: next_id,
            tail,
            head,
            capacity: f64::INFINITY,
            cost: 1.0,
        });
        next_id += 1;
    }
    let kind = ModelKind::Lidm;
    let p1_arcs: Vec<ArcRecord> = instance
        .arcs()
        .iter()
        .map(|a| ArcRecord { cost: 0.0, ..*a })
        .chain(art.iter().copied())
        .collect();
    let p2_arcs: Vec<ArcRecord> = instance
        .arcs()
        .iter()
        .copied()
        .chain(art.iter().map(|a| ArcRecord {
            capacity: 0.0,
            cost: 0.0,
            ..*a
        }))
        .collect();
    let build = |arcs| {
        Instance::new(kind, instance.nodes().to_vec(), arcs, instance.interdeps().to_vec())
            .map_err(|e| SolveError::InvalidInstance(e.to_string()))
    };
    let phase1 = build(p1_arcs)?;
    let phase2 = build(p2_arcs)?;
    let basic: Vec<VariableRef> = (n..n + m - 1)
        .map(VariableRef::Flow)
        .chain((0..instance.interdep_count()).map(VariableRef::Slack))
        .collect();
    let basis = BasisState::new(&phase1, &basic, &[])?;
    Ok(Phase1Setup {
        phase1,
        phase2,
        basis,
        first_artificial: n,
    })
}

fn label(instance: &Instance, v: VariableRef, first_artificial: usize) -> VarLabel {
    match v {
        VariableRef::Flow(a) if a >= first_artificial => {
            let rec = instance.arcs()[a];
            let root = instance.nodes()[0].id;
            VarLabel::Artificial {
                node: if rec.tail == root { rec.head } else { rec.tail },
            }
        }
        VariableRef::Flow(a) => {
            let rec = instance.arcs()[a];
            VarLabel::Arc {
                id: rec.id,
                tail: rec.tail,
                head: rec.head,
            }
        }
        VariableRef::Slack(t) => VarLabel::Slack { index: t + 1 },
    }
}

/// Label for a variable of an instance without artificial arcs.
pub fn variable_label(instance: &Instance, v: VariableRef) -> VarLabel {
    label(instance, v, instance.arc_count())
}

struct PhaseRun<'a> {
    instance: &'a Instance,
    options: &'a SolveOptions,
    first_artificial: usize,
    allow_artificial: bool,
    phase: u8,
}

enum PhaseEnd {
    Optimal,
    Unbounded,
}

fn detail(
    instance: &Instance,
    basis: &BasisState,
    system: &CertSystem,
    pots: &PotentialState,
    values: &[f64],
    first_artificial: usize,
) -> TraceDetail {
    let forest = basis.forest();
    let n = instance.arc_count();
    let trees = (0..forest.tree_count())
        .map(|h| {
            let mut ids: Vec<u32> = forest.members(h).iter().map(|&i| instance.nodes()[i].id).collect();
            ids.sort_unstable();
            ids
        })
        .collect();
    TraceDetail {
        trees,
        columns: system
            .cert
            .column_vars
            .iter()
            .map(|&v| label(instance, v, first_artificial))
            .collect(),
        d: system.cert.d.to_rows(),
        dhat: system.cert.dhat.to_rows(),
        net_requirements: net_requirements(basis, instance),
        potentials: pots.stacked(),
        correction: pots.correction.clone(),
        basic_values: basis
            .basic()
            .iter()
            .map(|&v| (label(instance, v, first_artificial), values[v.index(n)]))
            .collect(),
    }
}

fn check_state(
    instance: &Instance,
    basis: &BasisState,
    system: &CertSystem,
    pots: &PotentialState,
    values: &[f64],
    iteration: usize,
) -> Result<(), SolveError> {
    let fail = |what: String| Err(SolveError::Invariant { iteration, what });
    let n = instance.arc_count();
    let p = instance.interdep_count();
    let scale = 1.0 + instance.nodes().iter().map(|x| x.supply.abs()).sum::<f64>();
    let tol = TOLERANCE * scale;
    if basis.basic().len() != instance.node_count() + p - 1 {
        return fail(format!("basis size {}", basis.basic().len()));
    }
    if basis.forest().tree_count() != basis.r() + 1 - p {
        return fail("forest component count".into());
    }
    if !is_good(&system.cert) {
        return fail("certificate lost full rank".into());
    }
    for (i, &x) in values.iter().enumerate() {
        let v = VariableRef::from_index(i, n);
        if x < -tol || x > v.upper_bound(instance) + tol {
            return fail(format!("{v:?} = {x} out of bounds"));
        }
    }
    let viol = instance.max_violation(&values[..n], &values[n..]);
    if viol > tol {
        return fail(format!("constraint violation {viol}"));
    }
    let cost_scale = 1.0 + instance.arcs().iter().map(|a| a.cost.abs()).fold(0.0, f64::max);
    for &v in basis.basic() {
        let rc = reduced_cost(v, pots, instance);
        if rc.abs() > TOLERANCE * cost_scale * 10.0 {
            return fail(format!("basic {v:?} has reduced cost {rc}"));
        }
    }
    Ok(())
}

impl PhaseRun<'_> {
    fn run(
        &self,
        basis: &mut BasisState,
        values: &mut Vec<f64>,
        iterations: &mut usize,
        limit: usize,
        trace: &mut Vec<TraceRecord>,
    ) -> Result<PhaseEnd, SolveError> {
        let inst = self.instance;
        let n = inst.arc_count();
        let mut previous: Option<PotentialState> = None;
        let mut degenerate_run = 0usize;
        loop {
            let system = CertSystem::new(basis, inst, self.options.use_dhat)?;
            let pots = compute_potentials(basis, inst, &system, previous.as_ref());
            if self.options.check_invariants {
                check_state(inst, basis, &system, &pots, values, *iterations)?;
            }
            let rule = if degenerate_run >= self.options.degenerate_limit {
                PricingRule::Bland
            } else {
                self.options.rule
            };
            let first_art = self.first_artificial;
            let allow_art = self.allow_artificial;
            let entering = price(basis, &pots, inst, rule, |v| {
                allow_art || !matches!(v, VariableRef::Flow(a) if a >= first_art)
            });
            let objective = inst.objective(&values[..n]);
            let Some(entering) = entering else {
                if self.options.trace != TraceLevel::Off {
                    trace.push(TraceRecord {
                        phase: self.phase,
                        iteration: *iterations,
                        entering: None,
                        leaving: None,
                        theta: None,
                        objective,
                        case: None,
                        detail: (self.options.trace == TraceLevel::Detailed)
                            .then(|| detail(inst, basis, &system, &pots, values, first_art)),
                    });
                }
                return Ok(PhaseEnd::Optimal);
            };
            if *iterations >= limit {
                return Err(SolveError::IterationLimit(limit));
            }
            let plan = pivot_plan(entering, basis, inst, &system, values);
            if self.options.trace != TraceLevel::Off {
                trace.push(TraceRecord {
                    phase: self.phase,
                    iteration: *iterations,
                    entering: Some(label(inst, entering, first_art)),
                    leaving: plan
                        .blocking
                        .filter(|(b, _)| *b != entering)
                        .map(|(b, _)| label(inst, b, first_art)),
                    theta: Some(plan.theta_star),
                    objective,
                    case: Some(plan.case),
                    detail: (self.options.trace == TraceLevel::Detailed)
                        .then(|| detail(inst, basis, &system, &pots, values, first_art)),
                });
            }
            let Some((blocker, to)) = plan.blocking else {
                return Ok(PhaseEnd::Unbounded);
            };
            *iterations += 1;
            if plan.theta_star <= 1e-12 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            if blocker == entering {
                basis.exchange(inst, entering, None)?;
            } else {
                basis.exchange(inst, entering, Some((blocker, to)))?;
            }
            // Fresh values from the new basis keep conservation exact up to
            // round-off regardless of the number of pivots.
            let system = CertSystem::new(basis, inst, self.options.use_dhat)?;
            *values = basic_values(basis, inst, &system);
            previous = Some(pots);
        }
    }
}

fn default_limit(instance: &Instance) -> usize {
    10 * (instance.node_count() + instance.interdep_count()) * instance.arc_count().max(1)
}

/// Two-phase solve of an LIDM instance (BIDM instances are solved through
/// their linear relaxation).
pub fn solve(instance: &Instance, options: &SolveOptions) -> Result<SolveResult, SolveError> {
    let relaxed;
    let instance = if instance.kind() == ModelKind::Bidm {
        relaxed = instance.lidm_relaxation();
        &relaxed
    } else {
        instance
    };
    let setup = initial_basis(instance)?;
    let limit = options.max_iterations.unwrap_or_else(|| default_limit(instance));
    let n_orig = instance.arc_count();
    let first_art = setup.first_artificial;
    let mut basis = setup.basis;
    let mut trace = Vec::new();
    let mut iterations = 0;

    let system = CertSystem::new(&basis, &setup.phase1, options.use_dhat)?;
    let mut values = basic_values(&basis, &setup.phase1, &system);
    let phase1 = PhaseRun {
        instance: &setup.phase1,
        options,
        first_artificial: first_art,
        allow_artificial: true,
        phase: 1,
    };
    phase1.run(&mut basis, &mut values, &mut iterations, limit, &mut trace)?;
    let phase1_iterations = iterations;
    let n_ext = setup.phase1.arc_count();
    let artificial: f64 = values[first_art..n_ext].iter().sum();
    let scale = 1.0 + instance.nodes().iter().map(|x| x.supply.abs()).sum::<f64>();
    let slacks_of = |values: &[f64]| values[n_ext..].to_vec();
    if artificial > TOLERANCE * scale {
        return Ok(SolveResult {
            status: SolveStatus::Infeasible,
            flows: values[..n_orig].to_vec(),
            slacks: slacks_of(&values),
            objective: f64::INFINITY,
            iterations,
            phase1_iterations,
            trace,
        });
    }
    // Artificial arcs are pinned at zero from here on.
    for x in &mut values[first_art..n_ext] {
        *x = 0.0;
    }
    let phase2 = PhaseRun {
        instance: &setup.phase2,
        options,
        first_artificial: first_art,
        allow_artificial: false,
        phase: 2,
    };
    let end = phase2.run(&mut basis, &mut values, &mut iterations, limit, &mut trace)?;
    let flows = values[..n_orig].to_vec();
    let (status, objective) = match end {
        PhaseEnd::Optimal => (SolveStatus::Optimal, instance.objective(&flows)),
        PhaseEnd::Unbounded => (SolveStatus::Unbounded, f64::NEG_INFINITY),
    };
    Ok(SolveResult {
        status,
        flows,
        slacks: slacks_of(&values),
        objective,
        iterations,
        phase1_iterations,
        trace,
    })
}

/// Runs phase 2 from a given primal-feasible basis of `instance`.
pub fn solve_from_basis(
    instance: &Instance,
    mut basis: BasisState,
    options: &SolveOptions,
) -> Result<SolveResult, SolveError> {
    let n = instance.arc_count();
    let system = CertSystem::new(&basis, instance, options.use_dhat)?;
    let mut values = basic_values(&basis, instance, &system);
    let mut worst: f64 = 0.0;
    for (i, &x) in values.iter().enumerate() {
        let v = VariableRef::from_index(i, n);
        worst = worst.max(-x).max(x - v.upper_bound(instance));
    }
    if worst > TOLERANCE {
        return Err(SolveError::InfeasibleStart(worst));
    }
    let limit = options.max_iterations.unwrap_or_else(|| default_limit(instance));
    let mut iterations = 0;
    let mut trace = Vec::new();
    let run = PhaseRun {
        instance,
        options,
        first_artificial: n,
        allow_artificial: false,
        phase: 2,
    };
    let end = run.run(&mut basis, &mut values, &mut iterations, limit, &mut trace)?;
    let flows = values[..n].to_vec();
    let (status, objective) = match end {
        PhaseEnd::Optimal => (SolveStatus::Optimal, instance.objective(&flows)),
        PhaseEnd::Unbounded => (SolveStatus::Unbounded, f64::NEG_INFINITY),
    };
    Ok(SolveResult {
        status,
        flows,
        slacks: values[n..].to_vec(),
        objective,
        iterations,
        phase1_iterations: 0,
        trace,
    })
}
