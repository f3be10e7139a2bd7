//! Problem data: a directed network with supplies, arc costs and capacities,
//! plus arc-to-arc interdependence records.
//!
//! An [`Instance`] is immutable once built. Node and arc records keep their
//! external ids; dense 0-based indices (position in the record lists) are used
//! by the solvers and exposed through the accessor methods.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Global comparison tolerance for feasibility and equality tests.
pub const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    /// Linear input dependence: `x_child <= alpha * x_parent + beta`.
    Lidm,
    /// Binary input dependence: the child is usable (up to its capacity)
    /// only when the parent is saturated.
    Bidm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: u32,
    pub supply: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArcRecord {
    pub id: u32,
    pub tail: u32,
    pub head: u32,
    pub capacity: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interdependence {
    pub parent: u32,
    pub child: u32,
    pub alpha: f64,
    pub beta: f64,
}

/// How an arc takes part in the linking constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArcRole {
    Independent,
    Parent(usize),
    Child(usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InstanceError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate node id {0}")]
    DuplicateNode(u32),
    #[error("duplicate arc id {0}")]
    DuplicateArc(u32),
    #[error("arc {arc} references unknown node {node}")]
    UnknownNode { arc: u32, node: u32 },
    #[error("interdependence {index} references unknown arc {arc}")]
    UnknownArc { index: usize, arc: u32 },
    #[error("bridge {bridge} references missing endpoint (instance {instance}, node {node})")]
    DanglingBridge {
        bridge: usize,
        instance: usize,
        node: u32,
    },
    #[error("cannot merge instances of different kinds")]
    MixedKinds,
    #[error("nothing to merge")]
    EmptyMerge,
    #[error("node {node} is not a demand node (supply {supply})")]
    NotDemandNode { node: u32, supply: f64 },
    #[error("penalty cost {penalty} must exceed the largest arc cost {max_cost}")]
    PenaltyTooSmall { penalty: f64, max_cost: f64 },
}

/// One failed invariant found by [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    TooFewNodes(usize),
    NoArcs,
    SupplyImbalance { total: f64 },
    NegativeCapacity { arc: u32, capacity: f64 },
    SelfLoop { arc: u32 },
    NonFinite { entity: String },
    ParentIsChild { index: usize, arc: u32 },
    ArcReused { arc: u32 },
    NegativeLinkBound { index: usize, at: f64, value: f64 },
    InfiniteLinkedCapacity { index: usize, arc: u32 },
    ZeroParentCapacity { index: usize, arc: u32 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFewNodes(m) => write!(f, "instance has {m} nodes, need at least 2"),
            Violation::NoArcs => write!(f, "instance has no arcs"),
            Violation::SupplyImbalance { total } => {
                write!(f, "supplies sum to {total}, expected 0")
            }
            Violation::NegativeCapacity { arc, capacity } => {
                write!(f, "arc {arc} has negative capacity {capacity}")
            }
            Violation::SelfLoop { arc } => write!(f, "arc {arc} is a self-loop"),
            Violation::NonFinite { entity } => write!(f, "{entity} is not a finite number"),
            Violation::ParentIsChild { index, arc } => {
                write!(f, "interdependence {index} uses arc {arc} as both parent and child")
            }
            Violation::ArcReused { arc } => {
                write!(f, "arc {arc} appears in more than one interdependence")
            }
            Violation::NegativeLinkBound { index, at, value } => write!(
                f,
                "interdependence {index}: alpha*x + beta = {value} < 0 at parent flow {at}"
            ),
            Violation::InfiniteLinkedCapacity { index, arc } => write!(
                f,
                "interdependence {index}: arc {arc} needs a finite capacity in a binary model"
            ),
            Violation::ZeroParentCapacity { index, arc } => write!(
                f,
                "interdependence {index}: parent arc {arc} has zero capacity in a binary model"
            ),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Instance {
    kind: ModelKind,
    nodes: Vec<NodeRecord>,
    arcs: Vec<ArcRecord>,
    interdeps: Vec<Interdependence>,
    node_pos: HashMap<u32, usize>,
    arc_pos: HashMap<u32, usize>,
    tails: Vec<usize>,
    heads: Vec<usize>,
    roles: Vec<ArcRole>,
    links: Vec<(usize, usize)>,
}

impl PartialEq for Instance {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.nodes == other.nodes
            && self.arcs == other.arcs
            && self.interdeps == other.interdeps
    }
}

impl Instance {
    /// Builds an instance, resolving ids. Only referential problems are
    /// errors here; value-level invariants are reported by [`validate`].
    pub fn new(
        kind: ModelKind,
        nodes: Vec<NodeRecord>,
        arcs: Vec<ArcRecord>,
        interdeps: Vec<Interdependence>,
    ) -> Result<Self, InstanceError> {
        let mut node_pos = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if node_pos.insert(n.id, i).is_some() {
                return Err(InstanceError::DuplicateNode(n.id));
            }
        }
        let mut arc_pos = HashMap::with_capacity(arcs.len());
        let mut tails = Vec::with_capacity(arcs.len());
        let mut heads = Vec::with_capacity(arcs.len());
        for (k, a) in arcs.iter().enumerate() {
            if arc_pos.insert(a.id, k).is_some() {
                return Err(InstanceError::DuplicateArc(a.id));
            }
            let t = *node_pos.get(&a.tail).ok_or(InstanceError::UnknownNode {
                arc: a.id,
                node: a.tail,
            })?;
            let h = *node_pos.get(&a.head).ok_or(InstanceError::UnknownNode {
                arc: a.id,
                node: a.head,
            })?;
            tails.push(t);
            heads.push(h);
        }
        let mut roles = vec![ArcRole::Independent; arcs.len()];
        let mut links = Vec::with_capacity(interdeps.len());
        for (t, d) in interdeps.iter().enumerate() {
            let p = *arc_pos.get(&d.parent).ok_or(InstanceError::UnknownArc {
                index: t,
                arc: d.parent,
            })?;
            let c = *arc_pos.get(&d.child).ok_or(InstanceError::UnknownArc {
                index: t,
                arc: d.child,
            })?;
            // First assignment wins; reuse is reported by `validate`.
            if roles[p] == ArcRole::Independent {
                roles[p] = ArcRole::Parent(t);
            }
            if roles[c] == ArcRole::Independent {
                roles[c] = ArcRole::Child(t);
            }
            links.push((p, c));
        }
        Ok(Self {
            kind,
            nodes,
            arcs,
            interdeps,
            node_pos,
            arc_pos,
            tails,
            heads,
            roles,
            links,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn nodes(&self) -> &[NodeRecord] {
        &self.nodes
    }

    pub fn arcs(&self) -> &[ArcRecord] {
        &self.arcs
    }

    pub fn interdeps(&self) -> &[Interdependence] {
        &self.interdeps
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    pub fn interdep_count(&self) -> usize {
        self.interdeps.len()
    }

    pub fn node_index(&self, id: u32) -> Option<usize> {
        self.node_pos.get(&id).copied()
    }

    pub fn arc_index(&self, id: u32) -> Option<usize> {
        self.arc_pos.get(&id).copied()
    }

    /// Dense index of the tail node of arc `a`.
    pub fn tail(&self, a: usize) -> usize {
        self.tails[a]
    }

    pub fn head(&self, a: usize) -> usize {
        self.heads[a]
    }

    pub fn capacity(&self, a: usize) -> f64 {
        self.arcs[a].capacity
    }

    pub fn cost(&self, a: usize) -> f64 {
        self.arcs[a].cost
    }

    pub fn supply(&self, i: usize) -> f64 {
        self.nodes[i].supply
    }

    pub fn role(&self, a: usize) -> ArcRole {
        self.roles[a]
    }

    /// Dense (parent, child) arc indices of interdependence `t`.
    pub fn link(&self, t: usize) -> (usize, usize) {
        self.links[t]
    }

    /// Coefficient of arc `a` in its linking equality
    /// `x_child - alpha x_parent + s = beta`; zero for independent arcs.
    pub fn link_coefficient(&self, a: usize) -> f64 {
        match self.roles[a] {
            ArcRole::Independent => 0.0,
            ArcRole::Parent(t) => -self.interdeps[t].alpha,
            ArcRole::Child(_) => 1.0,
        }
    }

    pub fn max_cost(&self) -> f64 {
        self.arcs.iter().map(|a| a.cost).fold(f64::NEG_INFINITY, f64::max)
    }

    /// The linear relaxation used for the binary model: each pair links the
    /// child fraction to the parent fraction, `x_kl <= (u_kl / u_ij) x_ij`.
    /// LIDM instances are returned unchanged.
    pub fn lidm_relaxation(&self) -> Instance {
        match self.kind {
            ModelKind::Lidm => self.clone(),
            ModelKind::Bidm => {
                let interdeps = self
                    .interdeps
                    .iter()
                    .enumerate()
                    .map(|(t, d)| {
                        let (p, c) = self.links[t];
                        Interdependence {
                            alpha: self.arcs[c].capacity / self.arcs[p].capacity,
                            beta: 0.0,
                            ..*d
                        }
                    })
                    .collect();
                self.rebuild(ModelKind::Lidm, self.nodes.clone(), self.arcs.clone(), interdeps)
            }
        }
    }

    /// Same nodes and arcs with a different kind and interdependence list.
    pub fn with_interdeps(&self, kind: ModelKind, interdeps: Vec<Interdependence>) -> Result<Instance, InstanceError> {
        Instance::new(kind, self.nodes.clone(), self.arcs.clone(), interdeps)
    }

    fn rebuild(
        &self,
        kind: ModelKind,
        nodes: Vec<NodeRecord>,
        arcs: Vec<ArcRecord>,
        interdeps: Vec<Interdependence>,
    ) -> Instance {
        Instance::new(kind, nodes, arcs, interdeps).expect("ids already resolved")
    }

    /// Objective of a flow vector indexed by dense arc position.
    pub fn objective(&self, flows: &[f64]) -> f64 {
        self.arcs.iter().zip(flows).map(|(a, x)| a.cost * x).sum()
    }

    /// Largest violation of conservation, bounds and linking constraints for
    /// the given flows and slacks (LIDM semantics).
    pub fn max_violation(&self, flows: &[f64], slacks: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        let mut net = vec![0.0; self.nodes.len()];
        for (a, &x) in flows.iter().enumerate() {
            net[self.tails[a]] += x;
            net[self.heads[a]] -= x;
            worst = worst.max(-x).max(x - self.arcs[a].capacity);
        }
        for (i, n) in self.nodes.iter().enumerate() {
            worst = worst.max((net[i] - n.supply).abs());
        }
        for (t, d) in self.interdeps.iter().enumerate() {
            let (p, c) = self.links[t];
            let lhs = flows[c] - d.alpha * flows[p] + slacks[t];
            worst = worst.max((lhs - d.beta).abs()).max(-slacks[t]);
        }
        worst
    }
}

/// Checks every value-level invariant of an instance. Returns an empty list
/// when all hold.
pub fn validate(instance: &Instance) -> Vec<Violation> {
    let mut out = Vec::new();
    if instance.nodes.len() < 2 {
        out.push(Violation::TooFewNodes(instance.nodes.len()));
    }
    if instance.arcs.is_empty() {
        out.push(Violation::NoArcs);
    }
    let mut total = 0.0;
    for n in &instance.nodes {
        if !n.supply.is_finite() {
            out.push(Violation::NonFinite {
                entity: format!("supply of node {}", n.id),
            });
        }
        total += n.supply;
    }
    if total.is_finite() && total.abs() > TOLERANCE {
        out.push(Violation::SupplyImbalance { total });
    }
    for a in &instance.arcs {
        if a.capacity.is_nan() || a.capacity < 0.0 {
            out.push(Violation::NegativeCapacity {
                arc: a.id,
                capacity: a.capacity,
            });
        }
        if !a.cost.is_finite() {
            out.push(Violation::NonFinite {
                entity: format!("cost of arc {}", a.id),
            });
        }
        if a.tail == a.head {
            out.push(Violation::SelfLoop { arc: a.id });
        }
    }
    let mut seen = HashSet::new();
    let mut reported = HashSet::new();
    for (t, d) in instance.interdeps.iter().enumerate() {
        if d.parent == d.child {
            out.push(Violation::ParentIsChild {
                index: t,
                arc: d.parent,
            });
        }
        for arc in [d.parent, d.child] {
            if !seen.insert(arc) && reported.insert(arc) && d.parent != d.child {
                out.push(Violation::ArcReused { arc });
            }
        }
        if !d.alpha.is_finite() || !d.beta.is_finite() {
            out.push(Violation::NonFinite {
                entity: format!("coefficients of interdependence {t}"),
            });
            continue;
        }
        let (p, c) = instance.links[t];
        let u = instance.arcs[p].capacity;
        // Linear in x, so nonnegativity on [0, u] reduces to the endpoints.
        let mut ends = vec![0.0];
        if u.is_finite() {
            ends.push(u);
        } else if d.alpha < 0.0 {
            out.push(Violation::NegativeLinkBound {
                index: t,
                at: f64::INFINITY,
                value: f64::NEG_INFINITY,
            });
        }
        for x in ends {
            let value = d.alpha * x + d.beta;
            if value < -TOLERANCE {
                out.push(Violation::NegativeLinkBound { index: t, at: x, value });
            }
        }
        if instance.kind == ModelKind::Bidm {
            for (arc, k) in [(d.parent, p), (d.child, c)] {
                if !instance.arcs[k].capacity.is_finite() {
                    out.push(Violation::InfiniteLinkedCapacity { index: t, arc });
                }
            }
            if instance.arcs[p].capacity == 0.0 {
                out.push(Violation::ZeroParentCapacity {
                    index: t,
                    arc: d.parent,
                });
            }
        }
    }
    out
}

fn parse_real(tok: &str, line: usize, what: &str) -> Result<f64, InstanceError> {
    if tok.eq_ignore_ascii_case("inf") {
        return Ok(f64::INFINITY);
    }
    tok.parse::<f64>().map_err(|_| InstanceError::Parse {
        line,
        message: format!("invalid {what} '{tok}'"),
    })
}

fn parse_id(tok: &str, line: usize, what: &str) -> Result<u32, InstanceError> {
    tok.parse::<u32>().map_err(|_| InstanceError::Parse {
        line,
        message: format!("invalid {what} '{tok}'"),
    })
}

/// Parses the extended DIMACS text format:
///
/// ```text
/// c <comment>
/// p mcnfli|bidm <nodes> <arcs> <interdependencies>
/// n <node-id> <supply>
/// a <arc-id> <tail> <head> <capacity|inf> <cost>
/// i <parent-arc-id> <child-arc-id> <alpha> <beta>
/// ```
///
/// Nodes not listed on an `n` line are created with zero supply so that the
/// declared node count is honoured; ids then run from 1 to the count.
pub fn parse(text: &str) -> Result<Instance, InstanceError> {
    let mut header: Option<(ModelKind, usize, usize, usize, usize)> = None;
    let mut nodes: Vec<NodeRecord> = Vec::new();
    let mut arcs = Vec::new();
    let mut interdeps = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let toks: Vec<&str> = raw.split_whitespace().collect();
        let Some(&tag) = toks.first() else { continue };
        let expect = |n: usize| {
            if toks.len() != n {
                Err(InstanceError::Parse {
                    line,
                    message: format!("expected {} fields after '{tag}', found {}", n - 1, toks.len() - 1),
                })
            } else {
                Ok(())
            }
        };
        match tag {
            "c" => {}
            "p" => {
                if header.is_some() {
                    return Err(InstanceError::Parse {
                        line,
                        message: "second problem line".into(),
                    });
                }
                expect(5)?;
                let kind = match toks[1] {
                    "mcnfli" => ModelKind::Lidm,
                    "bidm" => ModelKind::Bidm,
                    other => {
                        return Err(InstanceError::Parse {
                            line,
                            message: format!("unknown problem type '{other}'"),
                        })
                    }
                };
                let m = parse_id(toks[2], line, "node count")? as usize;
                let n = parse_id(toks[3], line, "arc count")? as usize;
                let p = parse_id(toks[4], line, "interdependence count")? as usize;
                header = Some((kind, m, n, p, line));
            }
            "n" | "a" | "i" if header.is_none() => {
                return Err(InstanceError::Parse {
                    line,
                    message: "record before problem line".into(),
                });
            }
            "n" => {
                expect(3)?;
                nodes.push(NodeRecord {
                    id: parse_id(toks[1], line, "node id")?,
                    supply: parse_real(toks[2], line, "supply")?,
                });
            }
            "a" => {
                expect(6)?;
                arcs.push(ArcRecord {
                    id: parse_id(toks[1], line, "arc id")?,
                    tail: parse_id(toks[2], line, "tail")?,
                    head: parse_id(toks[3], line, "head")?,
                    capacity: parse_real(toks[4], line, "capacity")?,
                    cost: parse_real(toks[5], line, "cost")?,
                });
            }
            "i" => {
                expect(5)?;
                interdeps.push(Interdependence {
                    parent: parse_id(toks[1], line, "parent arc")?,
                    child: parse_id(toks[2], line, "child arc")?,
                    alpha: parse_real(toks[3], line, "alpha")?,
                    beta: parse_real(toks[4], line, "beta")?,
                });
            }
            other => {
                return Err(InstanceError::Parse {
                    line,
                    message: format!("unknown record type '{other}'"),
                })
            }
        }
    }
    let (kind, m, n, p, hline) = header.ok_or(InstanceError::Parse {
        line: 0,
        message: "missing problem line".into(),
    })?;
    if arcs.len() != n || interdeps.len() != p {
        return Err(InstanceError::Parse {
            line: hline,
            message: format!(
                "problem line declares {n} arcs and {p} interdependencies, found {} and {}",
                arcs.len(),
                interdeps.len()
            ),
        });
    }
    let mut listed = HashSet::new();
    for nd in &nodes {
        if !listed.insert(nd.id) {
            return Err(InstanceError::DuplicateNode(nd.id));
        }
    }
    if nodes.len() > m {
        return Err(InstanceError::Parse {
            line: hline,
            message: format!("problem line declares {m} nodes, found {} node lines", nodes.len()),
        });
    }
    for id in 1..=m as u32 {
        if !listed.contains(&id) {
            nodes.push(NodeRecord { id, supply: 0.0 });
        }
    }
    if nodes.len() != m {
        return Err(InstanceError::Parse {
            line: hline,
            message: format!("node ids must run from 1 to {m}"),
        });
    }
    nodes.sort_by_key(|n| n.id);
    Instance::new(kind, nodes, arcs, interdeps)
}

fn fmt_real(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".to_string()
    } else {
        format!("{x}")
    }
}

/// Writes the canonical text form: every node listed, records in storage
/// order, reals in shortest round-trip notation.
pub fn serialize(instance: &Instance) -> String {
    let mut s = String::new();
    let tag = match instance.kind {
        ModelKind::Lidm => "mcnfli",
        ModelKind::Bidm => "bidm",
    };
    s.push_str(&format!(
        "p {tag} {} {} {}\n",
        instance.nodes.len(),
        instance.arcs.len(),
        instance.interdeps.len()
    ));
    for n in &instance.nodes {
        s.push_str(&format!("n {} {}\n", n.id, fmt_real(n.supply)));
    }
    for a in &instance.arcs {
        s.push_str(&format!(
            "a {} {} {} {} {}\n",
            a.id,
            a.tail,
            a.head,
            fmt_real(a.capacity),
            fmt_real(a.cost)
        ));
    }
    for d in &instance.interdeps {
        s.push_str(&format!(
            "i {} {} {} {}\n",
            d.parent,
            d.child,
            fmt_real(d.alpha),
            fmt_real(d.beta)
        ));
    }
    s
}

/// An arc joining two networks during [`merge_networks`]. Endpoints are
/// `(instance position, node id)` pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bridge {
    pub from: (usize, u32),
    pub to: (usize, u32),
    pub capacity: f64,
    pub cost: f64,
}

/// Disjoint union of several networks, renumbered consecutively from 1, with
/// the bridge arcs appended after all original arcs.
pub fn merge_networks(instances: &[Instance], bridges: &[Bridge]) -> Result<Instance, InstanceError> {
    let first = instances.first().ok_or(InstanceError::EmptyMerge)?;
    if instances.iter().any(|i| i.kind != first.kind) {
        return Err(InstanceError::MixedKinds);
    }
    let mut nodes = Vec::new();
    let mut arcs = Vec::new();
    let mut interdeps = Vec::new();
    let mut node_maps: Vec<HashMap<u32, u32>> = Vec::with_capacity(instances.len());
    for inst in instances {
        let mut nmap = HashMap::new();
        for n in &inst.nodes {
            let id = nodes.len() as u32 + 1;
            nmap.insert(n.id, id);
            nodes.push(NodeRecord { id, supply: n.supply });
        }
        let mut amap = HashMap::new();
        for a in &inst.arcs {
            let id = arcs.len() as u32 + 1;
            amap.insert(a.id, id);
            arcs.push(ArcRecord {
                id,
                tail: nmap[&a.tail],
                head: nmap[&a.head],
                ..*a
            });
        }
        for d in &inst.interdeps {
            interdeps.push(Interdependence {
                parent: amap[&d.parent],
                child: amap[&d.child],
                ..*d
            });
        }
        node_maps.push(nmap);
    }
    for (b, br) in bridges.iter().enumerate() {
        let resolve = |(inst, node): (usize, u32)| {
            node_maps
                .get(inst)
                .and_then(|m| m.get(&node))
                .copied()
                .ok_or(InstanceError::DanglingBridge {
                    bridge: b,
                    instance: inst,
                    node,
                })
        };
        let tail = resolve(br.from)?;
        let head = resolve(br.to)?;
        arcs.push(ArcRecord {
            id: arcs.len() as u32 + 1,
            tail,
            head,
            capacity: br.capacity,
            cost: br.cost,
        });
    }
    Instance::new(first.kind, nodes, arcs, interdeps)
}

/// Default shortfall penalty for [`structured_transform`].
pub fn default_penalty(instance: &Instance) -> f64 {
    10.0 * instance.max_cost().max(1.0)
}

/// Converts demand nodes into parent arcs. Each listed demand node `d`
/// becomes a transshipment node feeding a new sink `d'` through the parent
/// arc `(d, d')`; a hub node collects optional supply from every source and
/// can cover any sink's shortfall through a penalised arc. Saturating the
/// parent arc means the original demand was met through the network.
///
/// Returns the new instance and the `(node id, parent arc id)` mapping.
pub fn structured_transform(
    instance: &Instance,
    parent_nodes: &[u32],
    penalty_cost: f64,
) -> Result<(Instance, Vec<(u32, u32)>), InstanceError> {
    if parent_nodes.is_empty() {
        return Ok((instance.clone(), Vec::new()));
    }
    let max_cost = instance.max_cost();
    if penalty_cost.is_nan() || penalty_cost <= max_cost {
        return Err(InstanceError::PenaltyTooSmall {
            penalty: penalty_cost,
            max_cost,
        });
    }
    let mut nodes = instance.nodes.clone();
    let mut arcs = instance.arcs.clone();
    let mut next_node = nodes.iter().map(|n| n.id).max().unwrap_or(0) + 1;
    let mut next_arc = arcs.iter().map(|a| a.id).max().unwrap_or(0) + 1;
    let mut sinks = Vec::with_capacity(parent_nodes.len());
    let mut mapping = Vec::with_capacity(parent_nodes.len());
    for &d in parent_nodes {
        let pos = instance.node_index(d).ok_or(InstanceError::UnknownNode { arc: 0, node: d })?;
        let demand = nodes[pos].supply;
        if demand >= 0.0 {
            return Err(InstanceError::NotDemandNode { node: d, supply: demand });
        }
        nodes[pos].supply = 0.0;
        let sink = next_node;
        next_node += 1;
        nodes.push(NodeRecord { id: sink, supply: demand });
        arcs.push(ArcRecord {
            id: next_arc,
            tail: d,
            head: sink,
            capacity: -demand,
            cost: 0.0,
        });
        mapping.push((d, next_arc));
        next_arc += 1;
        sinks.push((sink, -demand));
    }
    let hub = next_node;
    nodes.push(NodeRecord { id: hub, supply: 0.0 });
    for n in &instance.nodes {
        if n.supply > 0.0 {
            arcs.push(ArcRecord {
                id: next_arc,
                tail: n.id,
                head: hub,
                capacity: n.supply,
                cost: 0.0,
            });
            next_arc += 1;
        }
    }
    for (sink, amount) in sinks {
        arcs.push(ArcRecord {
            id: next_arc,
            tail: hub,
            head: sink,
            capacity: amount,
            cost: penalty_cost,
        });
        next_arc += 1;
    }
    let inst = Instance::new(instance.kind, nodes, arcs, instance.interdeps.clone())?;
    Ok((inst, mapping))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node() -> Instance {
        Instance::new(
            ModelKind::Lidm,
            vec![NodeRecord { id: 1, supply: 3.0 }, NodeRecord { id: 2, supply: -3.0 }],
            vec![ArcRecord { id: 1, tail: 1, head: 2, capacity: 5.0, cost: 2.0 }],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn balanced_two_node_is_valid() {
        assert!(validate(&two_node()).is_empty());
    }

    #[test]
    fn supply_imbalance_is_reported() {
        let i = Instance::new(
            ModelKind::Lidm,
            vec![NodeRecord { id: 1, supply: 5.0 }, NodeRecord { id: 2, supply: 0.0 }],
            vec![ArcRecord { id: 1, tail: 1, head: 2, capacity: 5.0, cost: 2.0 }],
            vec![],
        )
        .unwrap();
        let v = validate(&i);
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], Violation::SupplyImbalance { total } if total == 5.0));
    }

    #[test]
    fn negative_link_bound_at_capacity() {
        let i = Instance::new(
            ModelKind::Lidm,
            vec![NodeRecord { id: 1, supply: 0.0 }, NodeRecord { id: 2, supply: 0.0 }],
            vec![
                ArcRecord { id: 1, tail: 1, head: 2, capacity: 10.0, cost: 1.0 },
                ArcRecord { id: 2, tail: 2, head: 1, capacity: 10.0, cost: 1.0 },
            ],
            vec![Interdependence { parent: 1, child: 2, alpha: -1.0, beta: 0.0 }],
        )
        .unwrap();
        let v = validate(&i);
        assert!(v
            .iter()
            .any(|x| matches!(x, Violation::NegativeLinkBound { value, .. } if *value == -10.0)));
    }

    #[test]
    fn parse_header_and_records() {
        let text = "c tiny\np mcnfli 2 1 0\nn 1 4\nn 2 -4\na 1 1 2 inf 3\n";
        let i = parse(text).unwrap();
        assert_eq!(i.node_count(), 2);
        assert_eq!(i.arc_count(), 1);
        assert_eq!(i.capacity(0), f64::INFINITY);
        assert_eq!(i.kind(), ModelKind::Lidm);
    }

    #[test]
    fn parse_interdependence_line() {
        let text = "p bidm 3 7 1\n\
                    a 1 1 2 1 1\na 2 1 2 1 1\na 3 1 2 1 1\na 4 1 2 1 1\n\
                    a 5 2 3 1 1\na 6 2 3 1 1\na 7 2 3 1 1\n\
                    i 3 7 0.5 1.0\n";
        let i = parse(text).unwrap();
        assert_eq!(
            i.interdeps()[0],
            Interdependence { parent: 3, child: 7, alpha: 0.5, beta: 1.0 }
        );
        assert_eq!(i.kind(), ModelKind::Bidm);
        assert_eq!(i.role(2), ArcRole::Parent(0));
        assert_eq!(i.role(6), ArcRole::Child(0));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse("p mcnfli 2 1 0\nn 1 1\nn 2 -1\na 1 1 2 x 3\n").unwrap_err();
        assert_eq!(
            err,
            InstanceError::Parse { line: 4, message: "invalid capacity 'x'".into() }
        );
        let err = parse("p mcnfli 2 2 0\na 1 1 2 1 1\na 1 2 1 1 1\n").unwrap_err();
        assert_eq!(err, InstanceError::DuplicateArc(1));
        let err = parse("p mcnfli 2 1 0\nn 1 1\nn 1 -1\na 1 1 2 1 1\n").unwrap_err();
        assert_eq!(err, InstanceError::DuplicateNode(1));
        assert!(matches!(parse("q\n"), Err(InstanceError::Parse { line: 1, .. })));
    }

    #[test]
    fn merge_counts_nodes_and_arcs() {
        let a = two_node();
        let merged = merge_networks(
            &[a.clone(), a.clone()],
            &[Bridge { from: (0, 2), to: (1, 1), capacity: 10.0, cost: 1000.0 }],
        )
        .unwrap();
        assert_eq!(merged.node_count(), 4);
        assert_eq!(merged.arc_count(), 3);
        assert_eq!(merged.arcs()[2].tail, 2);
        assert_eq!(merged.arcs()[2].head, 3);
        let single = merge_networks(&[a.clone()], &[]).unwrap();
        assert_eq!(single, a);
    }

    #[test]
    fn merge_rejects_dangling_bridge() {
        let a = two_node();
        let err = merge_networks(
            &[a],
            &[Bridge { from: (0, 1), to: (3, 1), capacity: 1.0, cost: 1.0 }],
        )
        .unwrap_err();
        assert!(matches!(err, InstanceError::DanglingBridge { instance: 3, .. }));
    }

    #[test]
    fn transform_single_demand_node() {
        let (t, map) = structured_transform(&two_node(), &[2], 20.0).unwrap();
        // original 2 nodes + sink + hub
        assert_eq!(t.node_count(), 4);
        assert_eq!(map.len(), 1);
        let parent = t.arc_index(map[0].1).unwrap();
        assert_eq!(t.capacity(parent), 3.0);
        let shortfall = t.arcs().last().unwrap();
        assert_eq!(shortfall.capacity, 3.0);
        assert_eq!(shortfall.cost, 20.0);
        assert!(validate(&t).is_empty());
    }

    #[test]
    fn transform_empty_list_is_identity() {
        let (t, map) = structured_transform(&two_node(), &[], 20.0).unwrap();
        assert_eq!(t, two_node());
        assert!(map.is_empty());
    }

    #[test]
    fn transform_rejects_supply_node() {
        let err = structured_transform(&two_node(), &[1], 20.0).unwrap_err();
        assert!(matches!(err, InstanceError::NotDemandNode { node: 1, .. }));
    }
}
