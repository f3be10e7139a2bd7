//! Shared fixtures and seeded random instances for integration tests.
#![allow(dead_code)]

use mcnfli::basis::{BasisState, VariableRef};
use mcnfli::oracle::{solve_dense, DenseLP};
use mcnfli::{ArcRecord, Instance, Interdependence, ModelKind, NodeRecord, SolveStatus};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn arc(id: usize, tail: u32, head: u32, capacity: f64, cost: f64) -> ArcRecord {
    ArcRecord {
        id: id as u32,
        tail,
        head,
        capacity,
        cost,
    }
}

/// Random arcs over `m` nodes, a spanning tree first so the graph is
/// connected, then distinct extra pairs.
fn random_arcs(rng: &mut ChaCha8Rng, m: usize, n: usize, cap: (u32, u32), cost: (i32, i32)) -> Vec<ArcRecord> {
    let mut order: Vec<u32> = (1..=m as u32).collect();
    order.shuffle(rng);
    let mut pairs: Vec<(u32, u32)> = Vec::new();
    for k in 1..m {
        let other = order[rng.gen_range(0..k)];
        let pair = if rng.gen_bool(0.5) { (other, order[k]) } else { (order[k], other) };
        pairs.push(pair);
    }
    let n = n.min(m * (m - 1)).max(m - 1);
    while pairs.len() < n {
        let (t, h) = (rng.gen_range(1..=m as u32), rng.gen_range(1..=m as u32));
        if t != h && !pairs.contains(&(t, h)) {
            pairs.push((t, h));
        }
    }
    pairs.shuffle(rng);
    pairs
        .into_iter()
        .enumerate()
        .map(|(k, (t, h))| {
            arc(
                k + 1,
                t,
                h,
                rng.gen_range(cap.0..=cap.1) as f64,
                rng.gen_range(cost.0..=cost.1) as f64,
            )
        })
        .collect()
}

/// Supplies that make `flows` conserve.
fn supplies_for(m: usize, arcs: &[ArcRecord], flows: &[f64]) -> Vec<NodeRecord> {
    let mut b = vec![0.0; m + 1];
    for (a, &x) in arcs.iter().zip(flows) {
        b[a.tail as usize] += x;
        b[a.head as usize] -= x;
    }
    (1..=m as u32)
        .map(|id| NodeRecord {
            id,
            supply: b[id as usize],
        })
        .collect()
}

/// Feasible linear instance: integer flows are drawn first, supplies follow
/// by conservation and every link gets enough room for them.
pub fn random_lidm(seed: u64, max_m: usize, max_n: usize, max_p: usize) -> Instance {
    let mut rng = rng(seed);
    let m = rng.gen_range(3..=max_m);
    let n = rng.gen_range(m..=max_n.max(m));
    let arcs = random_arcs(&mut rng, m, n, (1, 20), (-5, 20));
    let n = arcs.len();
    let p = rng.gen_range(0..=max_p.min(n / 2));
    let flows: Vec<f64> = arcs.iter().map(|a| rng.gen_range(0..=a.capacity as u32) as f64).collect();
    let nodes = supplies_for(m, &arcs, &flows);
    let mut picks: Vec<usize> = (0..n).collect();
    picks.shuffle(&mut rng);
    let interdeps = (0..p)
        .map(|t| {
            let (pa, ch) = (picks[2 * t], picks[2 * t + 1]);
            let alpha = [0.5, 1.0, 1.5, 2.0][rng.gen_range(0..4)];
            let need = (flows[ch] - alpha * flows[pa]).max(0.0);
            let beta = need + rng.gen_range(0..3) as f64;
            Interdependence {
                parent: arcs[pa].id,
                child: arcs[ch].id,
                alpha,
                beta,
            }
        })
        .collect();
    Instance::new(ModelKind::Lidm, nodes, arcs, interdeps).expect("valid random instance")
}

/// Feasible binary instance: a random `y` is drawn first and the flows obey
/// it (saturated parents, idle children).
pub fn random_bidm(seed: u64, max_m: usize, max_n: usize, p: usize) -> Instance {
    let mut rng = rng(seed);
    let m = rng.gen_range(4..=max_m);
    let n = rng.gen_range((m + 2 * p).max(m)..=max_n.max(m + 2 * p));
    let arcs = random_arcs(&mut rng, m, n, (1, 12), (0, 20));
    let n = arcs.len();
    let p = p.min(n / 2);
    let mut picks: Vec<usize> = (0..n).collect();
    picks.shuffle(&mut rng);
    let mut flows: Vec<f64> = arcs.iter().map(|a| rng.gen_range(0..=a.capacity as u32) as f64).collect();
    let mut interdeps = Vec::new();
    for t in 0..p {
        let (pa, ch) = (picks[2 * t], picks[2 * t + 1]);
        if rng.gen_bool(0.5) {
            flows[pa] = arcs[pa].capacity;
        } else {
            flows[ch] = 0.0;
        }
        interdeps.push(Interdependence {
            parent: arcs[pa].id,
            child: arcs[ch].id,
            alpha: arcs[ch].capacity / arcs[pa].capacity,
            beta: 0.0,
        });
    }
    let nodes = supplies_for(m, &arcs, &flows);
    Instance::new(ModelKind::Bidm, nodes, arcs, interdeps).expect("valid random instance")
}

/// Connected instance whose interdependence coefficients come from a small
/// set, so singular certificates occur often.
pub fn rank_instance(seed: u64) -> Instance {
    let mut rng = rng(seed);
    let m = rng.gen_range(3..=10);
    let p = rng.gen_range(1..=3);
    let n = rng.gen_range(m - 1 + 2 * p..=m - 1 + 2 * p + 6);
    let mut arcs = random_arcs(&mut rng, m, n, (1, 6), (0, 9));
    // The spanning tree must use independent arcs only: pairs come from the
    // extra arcs, placed after the tree arcs.
    let tree: Vec<ArcRecord> = spanning_subset(m, &arcs);
    let tree_ids: Vec<u32> = tree.iter().map(|a| a.id).collect();
    let mut extra: Vec<&ArcRecord> = arcs.iter().filter(|a| !tree_ids.contains(&a.id)).collect();
    extra.shuffle(&mut rng);
    let p = p.min(extra.len() / 2);
    let interdeps = (0..p)
        .map(|t| Interdependence {
            parent: extra[2 * t].id,
            child: extra[2 * t + 1].id,
            alpha: [0.5, 1.0, 2.0][rng.gen_range(0..3)],
            beta: 0.0,
        })
        .collect();
    for a in arcs.iter_mut() {
        a.cost = 0.0;
    }
    let nodes = (1..=m as u32).map(|id| NodeRecord { id, supply: 0.0 }).collect();
    Instance::new(ModelKind::Lidm, nodes, arcs, interdeps).expect("valid rank instance")
}

fn spanning_subset(m: usize, arcs: &[ArcRecord]) -> Vec<ArcRecord> {
    let mut uf: Vec<usize> = (0..=m).collect();
    fn find(uf: &mut [usize], mut x: usize) -> usize {
        while uf[x] != x {
            uf[x] = uf[uf[x]];
            x = uf[x];
        }
        x
    }
    let mut out = Vec::new();
    for a in arcs {
        let (r1, r2) = (find(&mut uf, a.tail as usize), find(&mut uf, a.head as usize));
        if r1 != r2 {
            uf[r1] = r2;
            out.push(a.clone());
        }
    }
    out
}

/// Random structurally valid candidate basis: a forest of independent arcs
/// with `k` components plus `p + k - 1` interdependent arcs or slacks.
pub fn candidate_basis(inst: &Instance, rng: &mut ChaCha8Rng) -> Option<BasisState> {
    let m = inst.node_count();
    let p = inst.interdep_count();
    let n = inst.arc_count();
    let linked: Vec<usize> = (0..p).flat_map(|t| [inst.link(t).0, inst.link(t).1]).collect();
    let mut independent: Vec<usize> = (0..n).filter(|a| !linked.contains(a)).collect();
    independent.shuffle(rng);
    let mut pool: Vec<VariableRef> = linked
        .iter()
        .map(|&a| VariableRef::Flow(a))
        .chain((0..p).map(VariableRef::Slack))
        .collect();
    let k = rng.gen_range(1..=(2 * p + 1).min(m));
    // Greedy spanning forest, then drop k-1 random tree arcs.
    let mut uf: Vec<usize> = (0..m).collect();
    fn find(uf: &mut [usize], mut x: usize) -> usize {
        while uf[x] != x {
            uf[x] = uf[uf[x]];
            x = uf[x];
        }
        x
    }
    let mut forest = Vec::new();
    for &a in &independent {
        let (r1, r2) = (find(&mut uf, inst.tail(a)), find(&mut uf, inst.head(a)));
        if r1 != r2 {
            uf[r1] = r2;
            forest.push(a);
        }
    }
    if forest.len() != m - 1 {
        return None;
    }
    forest.shuffle(rng);
    forest.truncate(m - k);
    pool.shuffle(rng);
    let mut basic: Vec<VariableRef> = forest.into_iter().map(VariableRef::Flow).collect();
    basic.extend(pool.into_iter().take(p + k - 1));
    BasisState::new(inst, &basic, &[]).ok()
}

/// Column positions of a basis in the dense block matrix (arcs, then slacks).
pub fn dense_columns(inst: &Instance, basis: &BasisState) -> Vec<usize> {
    basis.basic().iter().map(|v| v.index(inst.arc_count())).collect()
}

/// Objective of the binary model with every linking variable fixed, from the
/// dense oracle; `None` when infeasible.
pub fn fixed_y_objective(inst: &Instance, y: &[bool]) -> Option<f64> {
    let plain = inst.with_interdeps(ModelKind::Lidm, Vec::new()).unwrap();
    let mut lp = DenseLP::assemble(&plain);
    let arc_of = |id: u32| inst.arc_index(id).unwrap();
    for (t, d) in inst.interdeps().iter().enumerate() {
        if y[t] {
            let j = arc_of(d.parent);
            lp.fix(j, inst.arcs()[j].capacity);
        } else {
            lp.fix(arc_of(d.child), 0.0);
        }
    }
    let r = solve_dense(&lp).unwrap();
    (r.status == SolveStatus::Optimal).then_some(r.objective)
}

fn build(kind: ModelKind, supplies: &[(u32, f64)], m: u32, arcs: &[(u32, u32, f64, f64)], links: &[(u32, u32)]) -> Instance {
    let nodes = (1..=m)
        .map(|id| NodeRecord {
            id,
            supply: supplies.iter().find(|s| s.0 == id).map_or(0.0, |s| s.1),
        })
        .collect();
    let arcs: Vec<ArcRecord> = arcs
        .iter()
        .enumerate()
        .map(|(k, &(t, h, u, c))| arc(k + 1, t, h, u, c))
        .collect();
    let interdeps = links
        .iter()
        .map(|&(p, c)| Interdependence {
            parent: p,
            child: c,
            alpha: arcs[c as usize - 1].capacity / arcs[p as usize - 1].capacity,
            beta: 0.0,
        })
        .collect();
    Instance::new(kind, nodes, arcs, interdeps).unwrap()
}

const INF: f64 = f64::INFINITY;

/// Two pairs where the relaxation has a unique solution with child 1 at 5%
/// and child 2 saturated, yet the only feasible linking vector is all zeros.
pub fn failure_fixture() -> Instance {
    build(
        ModelKind::Bidm,
        &[(1, 11.0), (4, -1.0), (8, -5.0), (10, -5.0)],
        10,
        &[
            (1, 2, INF, 0.0),
            (2, 3, 10.0, 0.0),
            (3, 4, 1.0, 0.0),
            (1, 5, INF, 0.0),
            (5, 7, 100.0, 0.0),
            (7, 8, 5.0, 0.0),
            (1, 9, INF, 0.0),
            (9, 10, 5.0, 0.0),
            (1, 8, INF, 10.0),
            (1, 10, INF, 10.0),
        ],
        &[(2, 5), (6, 8)],
    )
}

/// Relaxation 0, binary optimum `big_m`: the parent can never be saturated.
pub fn lower_gap_fixture(big_m: f64) -> Instance {
    build(
        ModelKind::Bidm,
        &[(1, 2.0), (4, -2.0)],
        4,
        &[
            (1, 2, 1.0, 0.0),
            (2, 4, 2.0, 0.0),
            (1, 3, INF, 0.0),
            (3, 4, 2.0, 0.0),
            (1, 4, INF, big_m),
        ],
        &[(2, 4)],
    )
}

/// Relaxation and binary optimum 0 (parent saturated), but closing the
/// half-used child costs `big_m`.
pub fn upper_gap_fixture(big_m: f64) -> Instance {
    build(
        ModelKind::Bidm,
        &[(1, 3.0), (4, -3.0)],
        4,
        &[
            (1, 2, INF, 0.0),
            (2, 4, 2.0, 0.0),
            (1, 3, INF, 0.0),
            (3, 4, 2.0, 0.0),
            (1, 4, INF, big_m),
        ],
        &[(2, 4)],
    )
}

/// Relative closeness with an absolute floor of one.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
