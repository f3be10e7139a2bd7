//! Seeded random instances in the style of NETGEN: a skeleton of max-cost
//! paths carrying all supply from sources to sinks, filled up with random
//! arcs, then interdependent pairs chosen either among demand nodes turned
//! into parent arcs (structured) or among arbitrary arcs (unstructured).

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::approx::{solve_bidm, ApproxError, SearchMode};
use crate::instance::{
    default_penalty, structured_transform, ArcRecord, Instance, InstanceError, Interdependence,
    ModelKind, NodeRecord,
};
use crate::simplex::SolveStatus;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "fraction", rename_all = "snake_case")]
pub enum InterdepMode {
    None,
    /// Fraction of sink nodes turned into parent arcs.
    StructuredSinkFrac(f64),
    /// Fraction of arcs used as parents (and as many again as children).
    UnstructuredArcFrac(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenSpec {
    pub nodes: usize,
    pub arcs_per_node: usize,
    pub source_frac: f64,
    pub sink_frac: f64,
    pub cost_range: (f64, f64),
    pub cap_range: (f64, f64),
    pub supply_per_256: f64,
    pub interdep_mode: InterdepMode,
    pub seed: u64,
    pub ensure_feasible: bool,
}

impl Default for GenSpec {
    fn default() -> Self {
        Self {
            nodes: 256,
            arcs_per_node: 4,
            source_frac: 0.2,
            sink_frac: 0.2,
            cost_range: (1.0, 100.0),
            cap_range: (100.0, 500.0),
            supply_per_256: 10000.0,
            interdep_mode: InterdepMode::None,
            seed: 0,
            ensure_feasible: true,
        }
    }
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("no feasible instance after {networks} networks with {per_network} interdependence draws each")]
    Unattainable { networks: usize, per_network: usize },
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Approx(#[from] ApproxError),
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub spec: GenSpec,
    pub network_draws: usize,
    pub interdep_draws: usize,
    pub skeleton_arcs: usize,
    pub total_supply: f64,
    pub skeleton: &'static str,
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub instance: Instance,
    pub provenance: Provenance,
}

const INTERDEP_RETRIES: usize = 100;
const NETWORK_RETRIES: usize = 20;

/// Nearest integer, at least one.
fn count_of(frac: f64, total: usize) -> usize {
    ((frac * total as f64).round() as usize).max(1)
}

fn check(spec: &GenSpec) -> Result<(), GenError> {
    let bad = |m: &str| Err(GenError::InvalidSpec(m.into()));
    if spec.nodes < 4 {
        return bad("need at least 4 nodes");
    }
    if spec.arcs_per_node < 2 {
        return bad("need at least 2 arcs per node");
    }
    for f in [spec.source_frac, spec.sink_frac] {
        if !(f > 0.0 && f < 1.0) {
            return bad("source and sink fractions must lie in (0, 1)");
        }
    }
    if count_of(spec.source_frac, spec.nodes) + count_of(spec.sink_frac, spec.nodes) > spec.nodes {
        return bad("sources and sinks exceed the node count");
    }
    for (lo, hi) in [spec.cost_range, spec.cap_range] {
        if !(lo <= hi) {
            return bad("empty range");
        }
    }
    if spec.cap_range.0 <= 0.0 {
        return bad("capacities must be positive");
    }
    match spec.interdep_mode {
        InterdepMode::StructuredSinkFrac(f) | InterdepMode::UnstructuredArcFrac(f) if !(f > 0.0 && f < 1.0) => {
            bad("interdependence fraction must lie in (0, 1)")
        }
        _ => Ok(()),
    }
}

/// Splits `total` into `parts` positive integers.
fn split(rng: &mut ChaCha8Rng, total: u64, parts: usize) -> Vec<f64> {
    let mut cuts: Vec<u64> = (1..total).collect::<Vec<_>>();
    cuts.shuffle(rng);
    let mut cuts: Vec<u64> = cuts.into_iter().take(parts - 1).collect();
    cuts.sort_unstable();
    let mut out = Vec::with_capacity(parts);
    let mut prev = 0;
    for c in cuts.into_iter().chain([total]) {
        out.push((c - prev) as f64);
        prev = c;
    }
    out
}

struct Network {
    nodes: Vec<NodeRecord>,
    arcs: Vec<ArcRecord>,
    skeleton: usize,
    total: f64,
}

fn draw_integer(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    let (lo, hi) = (lo.ceil() as i64, hi.floor() as i64);
    rng.gen_range(lo..=hi.max(lo)) as f64
}

fn network(spec: &GenSpec, rng: &mut ChaCha8Rng) -> Result<Network, GenError> {
    let m = spec.nodes;
    let n = m * spec.arcs_per_node;
    let ns = count_of(spec.source_frac, m);
    let nk = count_of(spec.sink_frac, m);
    let total = (spec.supply_per_256 * m as f64 / 256.0).round() as u64;
    if total < (ns.max(nk)) as u64 {
        return Err(GenError::InvalidSpec("total supply smaller than source or sink count".into()));
    }
    let mut ids: Vec<u32> = (1..=m as u32).collect();
    ids.shuffle(rng);
    let sources = ids[..ns].to_vec();
    let sinks = ids[ns..ns + nk].to_vec();
    let mut trans = ids[ns + nk..].to_vec();
    let supply = split(rng, total, ns);
    let demand = split(rng, total, nk);
    let mut b = vec![0.0; m + 1];
    for (s, v) in sources.iter().zip(&supply) {
        b[*s as usize] = *v;
    }
    for (k, v) in sinks.iter().zip(&demand) {
        b[*k as usize] = -v;
    }

    // Source/sink pairings by the northwest-corner rule.
    let mut pairs = Vec::new();
    let (mut i, mut j) = (0, 0);
    let (mut left_s, mut left_k) = (supply[0], demand[0]);
    while i < ns && j < nk {
        let f = left_s.min(left_k);
        pairs.push((sources[i], sinks[j], f));
        left_s -= f;
        left_k -= f;
        if left_s == 0.0 {
            i += 1;
            left_s = supply.get(i).copied().unwrap_or(0.0);
        }
        if left_k == 0.0 {
            j += 1;
            left_k = demand.get(j).copied().unwrap_or(0.0);
        }
    }

    // Transshipment nodes are spread over the pair paths, so every node lies
    // on the skeleton.
    trans.shuffle(rng);
    let mut chains: Vec<Vec<u32>> = vec![Vec::new(); pairs.len()];
    for (k, t) in trans.into_iter().enumerate() {
        chains[k % pairs.len()].push(t);
    }
    let max_cost = spec.cost_range.1;
    let mut arcs: Vec<ArcRecord> = Vec::with_capacity(n);
    let mut used: HashSet<(u32, u32)> = HashSet::new();
    let mut flow_on: Vec<f64> = Vec::new();
    for ((s, k, f), chain) in pairs.iter().zip(&chains) {
        let path: Vec<u32> = std::iter::once(*s).chain(chain.iter().copied()).chain([*k]).collect();
        for w in path.windows(2) {
            let key = (w[0], w[1]);
            if let Some(pos) = arcs.iter().position(|a| (a.tail, a.head) == key) {
                flow_on[pos] += f;
                continue;
            }
            used.insert(key);
            arcs.push(ArcRecord {
                id: arcs.len() as u32 + 1,
                tail: w[0],
                head: w[1],
                capacity: 0.0,
                cost: max_cost,
            });
            flow_on.push(*f);
        }
    }
    for (a, f) in arcs.iter_mut().zip(&flow_on) {
        a.capacity = draw_integer(rng, spec.cap_range).max(*f);
    }
    let skeleton = arcs.len();
    if skeleton > n {
        return Err(GenError::InvalidSpec("skeleton needs more arcs than requested".into()));
    }
    if n > m * (m - 1) {
        return Err(GenError::InvalidSpec("more arcs than ordered node pairs".into()));
    }
    while arcs.len() < n {
        let tail = rng.gen_range(1..=m as u32);
        let head = rng.gen_range(1..=m as u32);
        if tail == head || !used.insert((tail, head)) {
            continue;
        }
        let cost = draw_integer(rng, spec.cost_range);
        let capacity = draw_integer(rng, spec.cap_range);
        arcs.push(ArcRecord {
            id: arcs.len() as u32 + 1,
            tail,
            head,
            capacity,
            cost,
        });
    }
    let nodes = (1..=m as u32)
        .map(|id| NodeRecord {
            id,
            supply: b[id as usize],
        })
        .collect();
    Ok(Network {
        nodes,
        arcs,
        skeleton,
        total: total as f64,
    })
}

fn pair(parent: &ArcRecord, child: &ArcRecord) -> Interdependence {
    Interdependence {
        parent: parent.id,
        child: child.id,
        alpha: child.capacity / parent.capacity,
        beta: 0.0,
    }
}

fn interdependencies(spec: &GenSpec, net: &Network, rng: &mut ChaCha8Rng) -> Result<Instance, GenError> {
    let base = Instance::new(ModelKind::Bidm, net.nodes.clone(), net.arcs.clone(), Vec::new())?;
    match spec.interdep_mode {
        InterdepMode::None => Ok(base),
        InterdepMode::UnstructuredArcFrac(f) => {
            let k = count_of(f, net.arcs.len());
            if 2 * k > net.arcs.len() {
                return Err(GenError::InvalidSpec("too many interdependent pairs".into()));
            }
            let picked: Vec<&ArcRecord> = net.arcs.choose_multiple(rng, 2 * k).collect();
            let links = picked.chunks(2).map(|w| pair(w[0], w[1])).collect();
            Ok(base.with_interdeps(ModelKind::Bidm, links)?)
        }
        InterdepMode::StructuredSinkFrac(f) => {
            let sinks: Vec<u32> = net.nodes.iter().filter(|x| x.supply < 0.0).map(|x| x.id).collect();
            let k = count_of(f, sinks.len()).min(sinks.len());
            let mut chosen: Vec<u32> = sinks.choose_multiple(rng, k).copied().collect();
            chosen.sort_unstable();
            let (inst, mapping) = structured_transform(&base, &chosen, default_penalty(&base))?;
            let children: Vec<&ArcRecord> = net.arcs.choose_multiple(rng, mapping.len()).collect();
            let arc_by_id = |id: u32| inst.arcs()[inst.arc_index(id).expect("parent arc exists")];
            let links = mapping
                .iter()
                .zip(children)
                .map(|((_, parent), child)| pair(&arc_by_id(*parent), child))
                .collect();
            Ok(inst.with_interdeps(ModelKind::Bidm, links)?)
        }
    }
}

/// Draws an instance; with `ensure_feasible`, interdependencies are redrawn
/// until the binary model has a feasible point, then the whole network.
pub fn generate(spec: &GenSpec) -> Result<Generated, GenError> {
    check(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut interdep_draws = 0;
    for network_draw in 1..=NETWORK_RETRIES {
        let net = network(spec, &mut rng)?;
        for _ in 0..INTERDEP_RETRIES {
            interdep_draws += 1;
            let instance = interdependencies(spec, &net, &mut rng)?;
            let feasible = !spec.ensure_feasible
                || solve_bidm(&instance, SearchMode::FirstFeasible)?.result.status == SolveStatus::Optimal;
            if feasible {
                return Ok(Generated {
                    instance,
                    provenance: Provenance {
                        spec: spec.clone(),
                        network_draws: network_draw,
                        interdep_draws,
                        skeleton_arcs: net.skeleton,
                        total_supply: net.total,
                        skeleton: "source-to-sink paths over all transshipment nodes at maximum cost (NETGEN stand-in)",
                    },
                });
            }
            if spec.interdep_mode == InterdepMode::None {
                break;
            }
        }
    }
    Err(GenError::Unattainable {
        networks: NETWORK_RETRIES,
        per_network: INTERDEP_RETRIES,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{serialize, validate};

    fn spec(nodes: usize, mode: InterdepMode, seed: u64) -> GenSpec {
        GenSpec {
            nodes,
            interdep_mode: mode,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn sizes_and_supply() {
        let g = generate(&GenSpec {
            ensure_feasible: false,
            ..spec(256, InterdepMode::UnstructuredArcFrac(0.02), 3)
        })
        .unwrap();
        let inst = &g.instance;
        assert_eq!(inst.node_count(), 256);
        assert_eq!(inst.arc_count(), 1024);
        assert_eq!(inst.interdep_count(), 20);
        let supply: f64 = inst.nodes().iter().map(|x| x.supply.max(0.0)).sum();
        assert_eq!(supply, 10000.0);
        assert!(validate(inst).is_empty());
    }

    #[test]
    fn supply_scales_with_nodes() {
        let g = generate(&GenSpec {
            ensure_feasible: false,
            ..spec(512, InterdepMode::None, 1)
        })
        .unwrap();
        let supply: f64 = g.instance.nodes().iter().map(|x| x.supply.max(0.0)).sum();
        assert_eq!(supply, 20000.0);
    }

    #[test]
    fn same_seed_same_text() {
        let s = spec(32, InterdepMode::UnstructuredArcFrac(0.05), 9);
        let a = serialize(&generate(&s).unwrap().instance);
        let b = serialize(&generate(&s).unwrap().instance);
        assert_eq!(a, b);
    }

    #[test]
    fn structured_parents_are_sink_arcs() {
        let g = generate(&spec(40, InterdepMode::StructuredSinkFrac(0.25), 4)).unwrap();
        let inst = &g.instance;
        assert!(validate(inst).is_empty());
        assert_eq!(inst.interdep_count(), 2);
        for t in 0..inst.interdep_count() {
            let (p, c) = inst.link(t);
            assert_eq!(inst.cost(p), 0.0);
            assert!(inst.arcs()[c].id as usize <= 40 * 4);
        }
    }

    #[test]
    fn skeleton_arcs_have_max_cost() {
        let g = generate(&GenSpec {
            ensure_feasible: false,
            ..spec(64, InterdepMode::None, 5)
        })
        .unwrap();
        let k = g.provenance.skeleton_arcs;
        assert!(k >= 63);
        assert!(g.instance.arcs()[..k].iter().all(|a| a.cost == 100.0));
    }
}
