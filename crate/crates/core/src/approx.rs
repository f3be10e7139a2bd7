//! Binary-model solvers: exact branch and bound over the linking variables and
//! randomized rounding from the linear relaxation.
//!
//! A fixed linking variable turns its pair into plain network data: `y = 1`
//! pins the parent at capacity (capacity set to zero, its flow moved into the
//! endpoint supplies and the objective constant); `y = 0` sets the child's
//! capacity to zero. Arc positions never change, so flows map back directly.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{ArcRecord, Instance, ModelKind, NodeRecord, TOLERANCE};
use crate::simplex::{solve, SolveError, SolveOptions, SolveResult, SolveStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Child,
    Parent,
    Fair,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundingScheme {
    pub family: Family,
    pub epsilon: f64,
    pub max_attempts: usize,
    pub seed: u64,
}

impl RoundingScheme {
    pub fn new(family: Family, epsilon: f64, seed: u64) -> Result<Self, ApproxError> {
        if !(0.0..=0.5).contains(&epsilon) {
            return Err(ApproxError::InvalidScheme(format!("epsilon {epsilon} outside [0, 0.5]")));
        }
        Ok(Self {
            family,
            epsilon,
            max_attempts: 1000,
            seed,
        })
    }

    /// Short label such as `child(0.01)` or `fair`.
    pub fn label(&self) -> String {
        match self.family {
            Family::Fair => "fair".into(),
            Family::Child => format!("child({:.2})", self.epsilon),
            Family::Parent => format!("parent({:.2})", self.epsilon),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoundingStatus {
    Feasible,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundingOutcome {
    pub scheme: RoundingScheme,
    pub status: RoundingStatus,
    pub attempts: usize,
    /// Last vector drawn (the successful one when feasible).
    pub y: Vec<bool>,
    pub objective: Option<f64>,
    pub relative_error: Option<f64>,
    #[serde(skip)]
    pub flows: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BnBNode {
    pub fixed: Vec<Option<bool>>,
    pub bound: f64,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BidmSolution {
    /// Flows on the original arcs; slacks are empty (no linear links remain).
    pub result: SolveResult,
    pub y: Vec<bool>,
    pub nodes_explored: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ApproxError {
    #[error("arc {arc} has infinite capacity; saturation ratio undefined")]
    InfiniteCapacity { arc: u32 },
    #[error("linear relaxation is infeasible; rounding is undefined")]
    RelaxationInfeasible,
    #[error("linear relaxation is unbounded")]
    RelaxationUnbounded,
    #[error("relative error undefined for zero reference (approx {approx}, reference {reference})")]
    ZeroReference { approx: f64, reference: f64 },
    #[error("expected a binary-kind instance")]
    NotBinary,
    #[error("invalid scheme: {0}")]
    InvalidScheme(String),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Probability of drawing `y = 1` for interdependence `t`.
pub fn probability(
    scheme: &RoundingScheme,
    t: usize,
    lp_flows: &[f64],
    instance: &Instance,
) -> Result<f64, ApproxError> {
    let (p, c) = instance.link(t);
    let ratio = |a: usize| {
        let u = instance.capacity(a);
        if u.is_finite() {
            Ok(lp_flows[a] / u)
        } else {
            Err(ApproxError::InfiniteCapacity { arc: instance.arcs()[a].id })
        }
    };
    let raw = match scheme.family {
        Family::Fair => return Ok(0.5),
        Family::Child => ratio(c)?,
        Family::Parent => ratio(p)?,
    };
    Ok(raw.clamp(0.0, 1.0).min(1.0 - scheme.epsilon).max(scheme.epsilon))
}

/// `|approx - reference| / |reference|`.
pub fn relative_error(approx: f64, reference: f64) -> Result<f64, ApproxError> {
    if reference == 0.0 {
        return Err(ApproxError::ZeroReference { approx, reference });
    }
    Ok((approx - reference).abs() / reference.abs())
}

/// A binary instance with some linking variables fixed, as a linear instance
/// whose remaining pairs keep the relaxation `x_kl <= (u_kl/u_ij) x_ij`.
#[derive(Debug, Clone)]
pub struct FixedProblem {
    pub instance: Instance,
    /// Cost of the pinned parent flows.
    pub offset: f64,
    pinned: Vec<(usize, f64)>,
}

impl FixedProblem {
    /// Flows on the original arcs from a solution of the fixed problem.
    pub fn original_flows(&self, flows: &[f64]) -> Vec<f64> {
        let mut out = flows.to_vec();
        for &(a, u) in &self.pinned {
            out[a] = u;
        }
        out
    }
}

pub fn fix_linking(instance: &Instance, fixed: &[Option<bool>]) -> FixedProblem {
    let mut nodes: Vec<NodeRecord> = instance.nodes().to_vec();
    let mut arcs: Vec<ArcRecord> = instance.arcs().to_vec();
    let mut offset = 0.0;
    let mut pinned = Vec::new();
    let mut interdeps = Vec::new();
    for (t, d) in instance.interdeps().iter().enumerate() {
        let (p, c) = instance.link(t);
        match fixed[t] {
            Some(true) => {
                let u = arcs[p].capacity;
                nodes[instance.tail(p)].supply -= u;
                nodes[instance.head(p)].supply += u;
                offset += arcs[p].cost * u;
                arcs[p].capacity = 0.0;
                pinned.push((p, u));
            }
            Some(false) => arcs[c].capacity = 0.0,
            None => interdeps.push(crate::instance::Interdependence {
                alpha: instance.capacity(c) / instance.capacity(p),
                beta: 0.0,
                ..*d
            }),
        }
    }
    let instance = Instance::new(ModelKind::Lidm, nodes, arcs, interdeps)
        .expect("fixing keeps ids and links consistent");
    FixedProblem {
        instance,
        offset,
        pinned,
    }
}

fn solve_fixed(
    instance: &Instance,
    fixed: &[Option<bool>],
    options: &SolveOptions,
) -> Result<Option<(f64, Vec<f64>)>, ApproxError> {
    let fp = fix_linking(instance, fixed);
    let r = solve(&fp.instance, options)?;
    match r.status {
        SolveStatus::Optimal => Ok(Some((r.objective + fp.offset, fp.original_flows(&r.flows)))),
        SolveStatus::Infeasible => Ok(None),
        SolveStatus::Unbounded => Err(ApproxError::RelaxationUnbounded),
    }
}

/// Randomized rounding. Each interdependence draws from its own stream, one
/// draw per attempt, so `Child(0.5)` and `Fair` coincide under equal seeds.
pub fn round(
    instance: &Instance,
    scheme: &RoundingScheme,
    reference: Option<f64>,
) -> Result<RoundingOutcome, ApproxError> {
    if instance.kind() != ModelKind::Bidm {
        return Err(ApproxError::NotBinary);
    }
    let options = SolveOptions::default();
    let relax = solve(&instance.lidm_relaxation(), &options)?;
    match relax.status {
        SolveStatus::Infeasible => return Err(ApproxError::RelaxationInfeasible),
        SolveStatus::Unbounded => return Err(ApproxError::RelaxationUnbounded),
        SolveStatus::Optimal => {}
    }
    round_with_relaxation(instance, scheme, &relax.flows, reference)
}

/// Rounding from precomputed relaxation flows.
pub fn round_with_relaxation(
    instance: &Instance,
    scheme: &RoundingScheme,
    lp_flows: &[f64],
    reference: Option<f64>,
) -> Result<RoundingOutcome, ApproxError> {
    let p = instance.interdep_count();
    let probs = (0..p)
        .map(|t| probability(scheme, t, lp_flows, instance))
        .collect::<Result<Vec<_>, _>>()?;
    let mut streams: Vec<ChaCha8Rng> = (0..p)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(scheme.seed);
            rng.set_stream(t as u64);
            rng
        })
        .collect();
    let options = SolveOptions::default();
    let mut seen: HashMap<Vec<bool>, Option<(f64, Vec<f64>)>> = HashMap::new();
    let mut y = Vec::new();
    for attempt in 1..=scheme.max_attempts {
        y = streams
            .iter_mut()
            .zip(&probs)
            .map(|(rng, &pr)| rng.gen::<f64>() < pr)
            .collect();
        let res = match seen.get(&y) {
            Some(r) => r.clone(),
            None => {
                let fixed: Vec<Option<bool>> = y.iter().map(|&b| Some(b)).collect();
                let r = solve_fixed(instance, &fixed, &options)?;
                seen.insert(y.clone(), r.clone());
                r
            }
        };
        if let Some((objective, flows)) = res {
            let relative_error = match reference {
                Some(r) => Some(relative_error(objective, r)?),
                None => None,
            };
            return Ok(RoundingOutcome {
                scheme: *scheme,
                status: RoundingStatus::Feasible,
                attempts: attempt,
                y,
                objective: Some(objective),
                relative_error,
                flows,
            });
        }
    }
    Ok(RoundingOutcome {
        scheme: *scheme,
        status: RoundingStatus::Failed,
        attempts: scheme.max_attempts,
        y,
        objective: None,
        relative_error: None,
        flows: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SearchMode {
    /// Best-first until the optimum is proven.
    #[default]
    Exact,
    /// Depth-first, stop at the first binary-feasible solution.
    FirstFeasible,
}

struct Queued {
    node: BnBNode,
    order: usize,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    // Max-heap: smallest bound first, then most recent (deepest) first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .node
            .bound
            .total_cmp(&self.node.bound)
            .then(self.order.cmp(&other.order))
    }
}

/// A linking pair is already binary-consistent when the parent is saturated
/// or the child is idle.
fn binary_value(instance: &Instance, t: usize, flows: &[f64]) -> Option<bool> {
    let (p, c) = instance.link(t);
    let up = instance.capacity(p);
    if flows[p] >= up - TOLERANCE * up.max(1.0) {
        Some(true)
    } else if flows[c] <= TOLERANCE * instance.capacity(c).max(1.0) {
        Some(false)
    } else {
        None
    }
}

/// Exact binary-model optimum by branch and bound on the linking variables,
/// each node bounded by the relaxation with its fixings applied.
pub fn solve_bidm(instance: &Instance, mode: SearchMode) -> Result<BidmSolution, ApproxError> {
    if instance.kind() != ModelKind::Bidm {
        return Err(ApproxError::NotBinary);
    }
    let p = instance.interdep_count();
    let options = SolveOptions::default();
    let mut heap = BinaryHeap::new();
    let mut stack = Vec::new();
    let root = BnBNode {
        fixed: vec![None; p],
        bound: f64::NEG_INFINITY,
        depth: 0,
    };
    let mut order = 0;
    match mode {
        SearchMode::Exact => heap.push(Queued { node: root, order }),
        SearchMode::FirstFeasible => stack.push(root),
    }
    let mut best: Option<(f64, Vec<f64>, Vec<bool>)> = None;
    let mut explored = 0;
    let mut iterations = 0;
    loop {
        let node = match mode {
            SearchMode::Exact => heap.pop().map(|q| q.node),
            SearchMode::FirstFeasible => stack.pop(),
        };
        let Some(node) = node else { break };
        let cutoff = best.as_ref().map_or(f64::INFINITY, |b| b.0);
        if node.bound >= cutoff - TOLERANCE * cutoff.abs().max(1.0) {
            continue;
        }
        explored += 1;
        let fp = fix_linking(instance, &node.fixed);
        let r = solve(&fp.instance, &options)?;
        iterations += r.iterations;
        match r.status {
            SolveStatus::Infeasible => continue,
            SolveStatus::Unbounded => return Err(ApproxError::RelaxationUnbounded),
            SolveStatus::Optimal => {}
        }
        let bound = r.objective + fp.offset;
        if bound >= cutoff - TOLERANCE * cutoff.abs().max(1.0) {
            continue;
        }
        let flows = fp.original_flows(&r.flows);
        let mut branch: Option<(usize, f64)> = None;
        let mut y = vec![false; p];
        for t in 0..p {
            match node.fixed[t] {
                Some(v) => y[t] = v,
                None => match binary_value(instance, t, &flows) {
                    Some(v) => y[t] = v,
                    None => {
                        let (pa, _) = instance.link(t);
                        let score = (flows[pa] / instance.capacity(pa) - 0.5).abs();
                        if branch.map_or(true, |(_, s)| score < s) {
                            branch = Some((t, score));
                        }
                    }
                },
            }
        }
        match branch {
            None => {
                best = Some((bound, flows, y));
                if mode == SearchMode::FirstFeasible {
                    break;
                }
            }
            Some((t, _)) => {
                for v in [false, true] {
                    let mut fixed = node.fixed.clone();
                    fixed[t] = Some(v);
                    let child = BnBNode {
                        fixed,
                        bound,
                        depth: node.depth + 1,
                    };
                    order += 1;
                    match mode {
                        SearchMode::Exact => heap.push(Queued { node: child, order }),
                        SearchMode::FirstFeasible => stack.push(child),
                    }
                }
            }
        }
    }
    let result = match best {
        Some((objective, flows, y)) => {
            return Ok(BidmSolution {
                result: SolveResult {
                    status: SolveStatus::Optimal,
                    flows,
                    slacks: Vec::new(),
                    objective,
                    iterations,
                    phase1_iterations: 0,
                    trace: Vec::new(),
                },
                y,
                nodes_explored: explored,
            })
        }
        None => SolveResult {
            status: SolveStatus::Infeasible,
            flows: vec![0.0; instance.arc_count()],
            slacks: Vec::new(),
            objective: f64::INFINITY,
            iterations,
            phase1_iterations: 0,
            trace: Vec::new(),
        },
    };
    Ok(BidmSolution {
        result,
        y: Vec::new(),
        nodes_explored: explored,
    })
}

/// Largest violation of the binary-model constraints for flows paired with
/// `y`: conservation, bounds, parent saturation when `y = 1`, idle child when
/// `y = 0`.
pub fn bidm_violation(instance: &Instance, flows: &[f64], y: &[bool]) -> f64 {
    let plain = instance
        .with_interdeps(ModelKind::Lidm, Vec::new())
        .expect("dropping links keeps ids valid");
    let mut worst = plain.max_violation(flows, &[]);
    for (t, &yt) in y.iter().enumerate() {
        let (p, c) = instance.link(t);
        if yt {
            worst = worst.max((instance.capacity(p) - flows[p]).abs());
        } else {
            worst = worst.max(flows[c].abs());
        }
    }
    worst
}
