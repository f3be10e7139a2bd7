//! Basis representation for the side-constrained network: the partition of
//! variables into basic / at-lower / at-upper, the spanning forest formed by
//! the basic independent arcs, and the small certificate matrices that decide
//! whether the basic columns have full rank.
//!
//! Variables are indexed densely: flow variables `0..n` (one per arc) followed
//! by slack variables `n..n+p` (one per interdependence).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{ArcRole, Instance, TOLERANCE};
use crate::linalg::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum VariableRef {
    /// Flow on the arc at this dense position.
    Flow(usize),
    /// Slack of the interdependence at this position.
    Slack(usize),
}

impl VariableRef {
    pub fn index(self, arc_count: usize) -> usize {
        match self {
            VariableRef::Flow(a) => a,
            VariableRef::Slack(t) => arc_count + t,
        }
    }

    pub fn from_index(v: usize, arc_count: usize) -> Self {
        if v < arc_count {
            VariableRef::Flow(v)
        } else {
            VariableRef::Slack(v - arc_count)
        }
    }

    /// Interdependent variables are slacks and arcs that are a parent or a
    /// child of some interdependence.
    pub fn is_interdependent(self, instance: &Instance) -> bool {
        match self {
            VariableRef::Flow(a) => instance.role(a) != ArcRole::Independent,
            VariableRef::Slack(_) => true,
        }
    }

    /// Interdependence this variable is linked to, if any.
    pub fn link(self, instance: &Instance) -> Option<usize> {
        match self {
            VariableRef::Flow(a) => match instance.role(a) {
                ArcRole::Independent => None,
                ArcRole::Parent(t) | ArcRole::Child(t) => Some(t),
            },
            VariableRef::Slack(t) => Some(t),
        }
    }

    pub fn upper_bound(self, instance: &Instance) -> f64 {
        match self {
            VariableRef::Flow(a) => instance.capacity(a),
            VariableRef::Slack(_) => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VarStatus {
    Basic,
    Lower,
    Upper,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BasisError {
    #[error("basis has {found} variables, expected {expected}")]
    WrongSize { found: usize, expected: usize },
    #[error("variable {0:?} listed twice")]
    Duplicate(VariableRef),
    #[error("variable {0:?} is out of range")]
    OutOfRange(VariableRef),
    #[error("variable {0:?} cannot sit at an infinite upper bound")]
    InfiniteUpper(VariableRef),
    #[error("basic independent arcs contain a cycle through arc {0}")]
    Cycle(usize),
    #[error("no arc with id {0}")]
    UnknownArc(u32),
    #[error("forest has {found} components, expected {expected}")]
    ComponentCount { found: usize, expected: usize },
}

const NO_NODE: usize = usize::MAX;

/// Spanning forest of the basic independent arcs. Trees are numbered by
/// their smallest node index, and each tree is rooted at that node.
#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    tree_of: Vec<usize>,
    parent: Vec<usize>,
    parent_arc: Vec<usize>,
    depth: Vec<usize>,
    roots: Vec<usize>,
    order: Vec<Vec<usize>>,
}

impl Forest {
    /// Builds the forest over all nodes of `instance` from the given arcs.
    pub fn build(instance: &Instance, arcs: &[usize]) -> Result<Self, BasisError> {
        let m = instance.node_count();
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); m];
        let mut uf: Vec<usize> = (0..m).collect();
        fn find(uf: &mut [usize], mut x: usize) -> usize {
            while uf[x] != x {
                uf[x] = uf[uf[x]];
                x = uf[x];
            }
            x
        }
        for &a in arcs {
            let (t, h) = (instance.tail(a), instance.head(a));
            let (rt, rh) = (find(&mut uf, t), find(&mut uf, h));
            if rt == rh {
                return Err(BasisError::Cycle(a));
            }
            uf[rt] = rh;
            adj[t].push((h, a));
            adj[h].push((t, a));
        }
        let mut tree_of = vec![NO_NODE; m];
        let mut parent = vec![NO_NODE; m];
        let mut parent_arc = vec![NO_NODE; m];
        let mut depth = vec![0; m];
        let mut roots = Vec::new();
        let mut order = Vec::new();
        for root in 0..m {
            if tree_of[root] != NO_NODE {
                continue;
            }
            let h = roots.len();
            roots.push(root);
            tree_of[root] = h;
            let mut seq = vec![root];
            let mut head = 0;
            while head < seq.len() {
                let u = seq[head];
                head += 1;
                for &(v, a) in &adj[u] {
                    if tree_of[v] == NO_NODE {
                        tree_of[v] = h;
                        parent[v] = u;
                        parent_arc[v] = a;
                        depth[v] = depth[u] + 1;
                        seq.push(v);
                    }
                }
            }
            order.push(seq);
        }
        Ok(Self {
            tree_of,
            parent,
            parent_arc,
            depth,
            roots,
            order,
        })
    }

    pub fn tree_count(&self) -> usize {
        self.roots.len()
    }

    pub fn tree_of(&self, node: usize) -> usize {
        self.tree_of[node]
    }

    pub fn root(&self, tree: usize) -> usize {
        self.roots[tree]
    }

    /// Nodes of a tree in root-to-leaf order.
    pub fn members(&self, tree: usize) -> &[usize] {
        &self.order[tree]
    }

    /// `(parent node, arc to parent)` for a non-root node.
    pub fn parent(&self, node: usize) -> Option<(usize, usize)> {
        (self.parent[node] != NO_NODE).then(|| (self.parent[node], self.parent_arc[node]))
    }

    pub fn depth(&self, node: usize) -> usize {
        self.depth[node]
    }
}

/// Sign of arc `arc` with respect to tree `tree`: +1 if it leaves the tree,
/// -1 if it enters it, 0 otherwise.
pub fn delta(instance: &Instance, arc: usize, tree: usize, forest: &Forest) -> i8 {
    let inside_tail = forest.tree_of(instance.tail(arc)) == tree;
    let inside_head = forest.tree_of(instance.head(arc)) == tree;
    match (inside_tail, inside_head) {
        (true, false) => 1,
        (false, true) => -1,
        _ => 0,
    }
}

/// File form of a basis: arc ids, 1-based interdependence numbers for slacks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct BasisSpec {
    pub basic_arcs: Vec<u32>,
    #[serde(default)]
    pub basic_slacks: Vec<usize>,
    #[serde(default)]
    pub upper_arcs: Vec<u32>,
}

impl BasisSpec {
    pub fn to_state(&self, instance: &Instance) -> Result<BasisState, BasisError> {
        let arc = |id: &u32| {
            instance
                .arc_index(*id)
                .map(VariableRef::Flow)
                .ok_or(BasisError::UnknownArc(*id))
        };
        let mut basic = self.basic_arcs.iter().map(arc).collect::<Result<Vec<_>, _>>()?;
        for &t in &self.basic_slacks {
            if t == 0 || t > instance.interdep_count() {
                return Err(BasisError::OutOfRange(VariableRef::Slack(t.wrapping_sub(1))));
            }
            basic.push(VariableRef::Slack(t - 1));
        }
        let upper = self.upper_arcs.iter().map(arc).collect::<Result<Vec<_>, _>>()?;
        BasisState::new(instance, &basic, &upper)
    }

    /// Slacks at their upper bound cannot be expressed and are dropped.
    pub fn from_state(state: &BasisState, instance: &Instance) -> Self {
        let id = |v: VariableRef| match v {
            VariableRef::Flow(a) => Some(instance.arcs()[a].id),
            VariableRef::Slack(_) => None,
        };
        Self {
            basic_arcs: state.basic().iter().filter_map(|&v| id(v)).collect(),
            basic_slacks: state
                .basic()
                .iter()
                .filter_map(|v| match v {
                    VariableRef::Slack(t) => Some(t + 1),
                    _ => None,
                })
                .collect(),
            upper_arcs: state.upper().filter_map(id).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BasisState {
    arc_count: usize,
    status: Vec<VarStatus>,
    basic: Vec<VariableRef>,
    forest: Forest,
    r: usize,
}

impl BasisState {
    /// Builds a basis from its basic variables and the nonbasic variables at
    /// their upper bound; every other variable is at its lower bound.
    pub fn new(
        instance: &Instance,
        basic: &[VariableRef],
        upper: &[VariableRef],
    ) -> Result<Self, BasisError> {
        let n = instance.arc_count();
        let total = n + instance.interdep_count();
        let expected = instance.node_count() + instance.interdep_count() - 1;
        if basic.len() != expected {
            return Err(BasisError::WrongSize {
                found: basic.len(),
                expected,
            });
        }
        let mut status = vec![VarStatus::Lower; total];
        for &v in basic {
            let i = v.index(n);
            if i >= total || matches!(v, VariableRef::Flow(a) if a >= n) {
                return Err(BasisError::OutOfRange(v));
            }
            if status[i] == VarStatus::Basic {
                return Err(BasisError::Duplicate(v));
            }
            status[i] = VarStatus::Basic;
        }
        for &v in upper {
            let i = v.index(n);
            if i >= total || matches!(v, VariableRef::Flow(a) if a >= n) {
                return Err(BasisError::OutOfRange(v));
            }
            if status[i] != VarStatus::Lower {
                return Err(BasisError::Duplicate(v));
            }
            if !v.upper_bound(instance).is_finite() {
                return Err(BasisError::InfiniteUpper(v));
            }
            status[i] = VarStatus::Upper;
        }
        Self::from_status(instance, status)
    }

    pub fn from_status(instance: &Instance, status: Vec<VarStatus>) -> Result<Self, BasisError> {
        let n = instance.arc_count();
        let basic: Vec<VariableRef> = status
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == VarStatus::Basic)
            .map(|(i, _)| VariableRef::from_index(i, n))
            .collect();
        let independent: Vec<usize> = basic
            .iter()
            .filter_map(|v| match *v {
                VariableRef::Flow(a) if instance.role(a) == ArcRole::Independent => Some(a),
                _ => None,
            })
            .collect();
        let forest = Forest::build(instance, &independent)?;
        let r = basic.len() - independent.len();
        let p = instance.interdep_count();
        if r + 1 < p || forest.tree_count() != r + 1 - p {
            return Err(BasisError::ComponentCount {
                found: forest.tree_count(),
                expected: (r + 1).saturating_sub(p),
            });
        }
        Ok(Self {
            arc_count: n,
            status,
            basic,
            forest,
            r,
        })
    }

    pub fn status(&self, v: VariableRef) -> VarStatus {
        self.status[v.index(self.arc_count)]
    }

    pub fn statuses(&self) -> &[VarStatus] {
        &self.status
    }

    /// Basic variables in increasing variable index.
    pub fn basic(&self) -> &[VariableRef] {
        &self.basic
    }

    pub fn nonbasic(&self) -> impl Iterator<Item = VariableRef> + '_ {
        self.status
            .iter()
            .enumerate()
            .filter(|(_, s)| **s != VarStatus::Basic)
            .map(|(i, _)| VariableRef::from_index(i, self.arc_count))
    }

    pub fn lower(&self) -> impl Iterator<Item = VariableRef> + '_ {
        self.with_status(VarStatus::Lower)
    }

    pub fn upper(&self) -> impl Iterator<Item = VariableRef> + '_ {
        self.with_status(VarStatus::Upper)
    }

    fn with_status(&self, s: VarStatus) -> impl Iterator<Item = VariableRef> + '_ {
        self.status
            .iter()
            .enumerate()
            .filter(move |(_, x)| **x == s)
            .map(|(i, _)| VariableRef::from_index(i, self.arc_count))
    }

    pub fn forest(&self) -> &Forest {
        &self.forest
    }

    /// Number of basic interdependent variables (arcs and slacks).
    pub fn r(&self) -> usize {
        self.r
    }

    /// Basic interdependent variables in certificate column order: linked
    /// arcs by interdependence (parent before child), then basic slacks.
    pub fn certificate_columns(&self, instance: &Instance) -> Vec<VariableRef> {
        let mut cols = Vec::with_capacity(self.r);
        for t in 0..instance.interdep_count() {
            let (p, c) = instance.link(t);
            for a in [p, c] {
                if self.status[a] == VarStatus::Basic {
                    cols.push(VariableRef::Flow(a));
                }
            }
        }
        for t in 0..instance.interdep_count() {
            if self.status[self.arc_count + t] == VarStatus::Basic {
                cols.push(VariableRef::Slack(t));
            }
        }
        cols
    }

    /// Moves `entering` into the basis and `leaving` out to `leaving_to`,
    /// then rebuilds the forest. When `leaving` is `None` the entering
    /// variable only switches bound.
    pub fn exchange(
        &mut self,
        instance: &Instance,
        entering: VariableRef,
        leaving: Option<(VariableRef, VarStatus)>,
    ) -> Result<(), BasisError> {
        let n = self.arc_count;
        let e = entering.index(n);
        match leaving {
            None => {
                self.status[e] = match self.status[e] {
                    VarStatus::Lower => VarStatus::Upper,
                    VarStatus::Upper => VarStatus::Lower,
                    VarStatus::Basic => VarStatus::Basic,
                };
                Ok(())
            }
            Some((out, to)) => {
                let mut status = std::mem::take(&mut self.status);
                status[e] = VarStatus::Basic;
                status[out.index(n)] = to;
                *self = Self::from_status(instance, status)?;
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Tightness {
    /// The linked slack is nonbasic.
    Tight,
    /// The linked slack is basic.
    Loose,
}

/// Which row of the certificate a row index refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RowTag {
    Tree(usize),
    Interdependence(usize),
}

/// The certificate matrix `D` of a basis, with its reduced form `D̂`.
#[derive(Debug, Clone)]
pub struct CertMatrix {
    pub d: DenseMatrix,
    pub column_vars: Vec<VariableRef>,
    pub row_tags: Vec<RowTag>,
    pub dhat: DenseMatrix,
    /// Positions in `column_vars` kept in `dhat`.
    pub dhat_columns: Vec<usize>,
    /// Positions in `row_tags` kept in `dhat`.
    pub dhat_rows: Vec<usize>,
    /// Classification of every basic interdependent arc.
    pub tightness: Vec<(VariableRef, Tightness)>,
}

impl CertMatrix {
    pub fn r(&self) -> usize {
        self.column_vars.len()
    }
}

fn cert_column(instance: &Instance, basis: &BasisState, v: VariableRef, trees: usize, out: &mut [f64]) {
    let p = instance.interdep_count();
    let (tree_rows, link_rows) = out.split_at_mut(trees);
    debug_assert_eq!(link_rows.len(), p);
    match v {
        VariableRef::Flow(a) => {
            let forest = basis.forest();
            for (h, slot) in tree_rows.iter_mut().enumerate() {
                *slot = f64::from(delta(instance, a, h, forest));
            }
            if let Some(t) = v.link(instance) {
                link_rows[t] = instance.link_coefficient(a);
            }
        }
        VariableRef::Slack(t) => link_rows[t] = 1.0,
    }
}

/// Builds `D` (tree rows for all but the last tree, then one row per
/// interdependence) and the reduced `D̂` that drops basic-slack columns and
/// the rows of interdependences whose slack is basic.
pub fn build_cert(basis: &BasisState, instance: &Instance) -> Result<CertMatrix, BasisError> {
    let p = instance.interdep_count();
    let r = basis.r();
    if r < p || basis.forest().tree_count() != r + 1 - p {
        return Err(BasisError::ComponentCount {
            found: basis.forest().tree_count(),
            expected: (r + 1).saturating_sub(p),
        });
    }
    let trees = r - p;
    let column_vars = basis.certificate_columns(instance);
    debug_assert_eq!(column_vars.len(), r);
    let mut d = DenseMatrix::zeros(r, r);
    let mut col = vec![0.0; r];
    for (j, &v) in column_vars.iter().enumerate() {
        col.iter_mut().for_each(|x| *x = 0.0);
        cert_column(instance, basis, v, trees, &mut col);
        for (i, &x) in col.iter().enumerate() {
            d[(i, j)] = x;
        }
    }
    let row_tags: Vec<RowTag> = (0..trees)
        .map(RowTag::Tree)
        .chain((0..p).map(RowTag::Interdependence))
        .collect();
    let n = instance.arc_count();
    let slack_basic = |t: usize| basis.statuses()[n + t] == VarStatus::Basic;
    let dhat_columns: Vec<usize> = column_vars
        .iter()
        .enumerate()
        .filter(|(_, v)| matches!(v, VariableRef::Flow(_)))
        .map(|(j, _)| j)
        .collect();
    let dhat_rows: Vec<usize> = row_tags
        .iter()
        .enumerate()
        .filter(|(_, tag)| match tag {
            RowTag::Tree(_) => true,
            RowTag::Interdependence(t) => !slack_basic(*t),
        })
        .map(|(i, _)| i)
        .collect();
    let tightness = column_vars
        .iter()
        .filter(|v| matches!(v, VariableRef::Flow(_)))
        .map(|&v| {
            let t = v.link(instance).expect("interdependent arc");
            (v, if slack_basic(t) { Tightness::Loose } else { Tightness::Tight })
        })
        .collect();
    let dhat = d.select(&dhat_rows, &dhat_columns);
    Ok(CertMatrix {
        d,
        column_vars,
        row_tags,
        dhat,
        dhat_columns,
        dhat_rows,
        tightness,
    })
}

/// The `(r+1) x r` matrix before the redundant last tree row is dropped.
/// Its tree rows sum to zero in every column.
pub fn undropped_matrix(basis: &BasisState, instance: &Instance) -> DenseMatrix {
    let p = instance.interdep_count();
    let r = basis.r();
    let trees = basis.forest().tree_count();
    let cols = basis.certificate_columns(instance);
    let mut m = DenseMatrix::zeros(trees + p, r);
    let mut col = vec![0.0; trees + p];
    for (j, &v) in cols.iter().enumerate() {
        col.iter_mut().for_each(|x| *x = 0.0);
        cert_column(instance, basis, v, trees, &mut col);
        for (i, &x) in col.iter().enumerate() {
            m[(i, j)] = x;
        }
    }
    m
}

/// Whether the certificate has full rank, i.e. the basis is good.
pub fn is_good(cert: &CertMatrix) -> bool {
    let r = cert.r();
    let full = cert.d.rank(TOLERANCE) == r;
    debug_assert_eq!(
        full,
        dhat_is_full_rank(cert),
        "D and D-hat disagree on rank"
    );
    full
}

/// Rank test on the reduced matrix alone. A 0x0 matrix counts as full rank.
pub fn dhat_is_full_rank(cert: &CertMatrix) -> bool {
    let k = cert.dhat_columns.len();
    cert.dhat_rows.len() == k && cert.dhat.rank(TOLERANCE) == k
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{ArcRecord, Interdependence, ModelKind, NodeRecord};

    fn path_instance() -> Instance {
        // 1 -> 2 -> 3 with one extra arc 1 -> 3; arcs 2 and 3 linked.
        Instance::new(
            ModelKind::Lidm,
            vec![
                NodeRecord { id: 1, supply: 2.0 },
                NodeRecord { id: 2, supply: 0.0 },
                NodeRecord { id: 3, supply: -2.0 },
            ],
            vec![
                ArcRecord { id: 1, tail: 1, head: 2, capacity: 5.0, cost: 1.0 },
                ArcRecord { id: 2, tail: 2, head: 3, capacity: 5.0, cost: 1.0 },
                ArcRecord { id: 3, tail: 1, head: 3, capacity: 5.0, cost: 3.0 },
            ],
            vec![Interdependence { parent: 2, child: 3, alpha: 1.0, beta: 0.0 }],
        )
        .unwrap()
    }

    #[test]
    fn delta_signs() {
        let inst = path_instance();
        let forest = Forest::build(&inst, &[0]).unwrap();
        // trees: {1,2} and {3}
        assert_eq!(forest.tree_count(), 2);
        assert_eq!(delta(&inst, 1, 0, &forest), 1);
        assert_eq!(delta(&inst, 1, 1, &forest), -1);
        assert_eq!(delta(&inst, 0, 0, &forest), 0);
        let single = Forest::build(&inst, &[0, 2]).unwrap();
        for a in 0..3 {
            assert_eq!(delta(&inst, a, 0, &single), 0);
        }
    }

    #[test]
    fn forest_rejects_cycles() {
        let inst = path_instance();
        assert_eq!(Forest::build(&inst, &[0, 1, 2]), Err(BasisError::Cycle(2)));
    }

    #[test]
    fn parent_arc_bridging_two_trees_is_good() {
        let inst = path_instance();
        let basis = BasisState::new(
            &inst,
            &[VariableRef::Flow(0), VariableRef::Flow(1), VariableRef::Slack(0)],
            &[],
        )
        .unwrap();
        assert_eq!(basis.r(), 2);
        let cert = build_cert(&basis, &inst).unwrap();
        assert_eq!(cert.d.to_rows(), vec![vec![1.0, 0.0], vec![-1.0, 1.0]]);
        assert!(is_good(&cert));
    }

    #[test]
    fn identity_case_has_empty_dhat() {
        // Two parallel-free arcs forming a tree, one interdependence between
        // two extra arcs, all slacks basic.
        let inst = Instance::new(
            ModelKind::Lidm,
            vec![NodeRecord { id: 1, supply: 0.0 }, NodeRecord { id: 2, supply: 0.0 }],
            vec![
                ArcRecord { id: 1, tail: 1, head: 2, capacity: 5.0, cost: 1.0 },
                ArcRecord { id: 2, tail: 1, head: 2, capacity: 5.0, cost: 1.0 },
                ArcRecord { id: 3, tail: 2, head: 1, capacity: 5.0, cost: 1.0 },
            ],
            vec![Interdependence { parent: 2, child: 3, alpha: 1.0, beta: 0.0 }],
        )
        .unwrap();
        let basis =
            BasisState::new(&inst, &[VariableRef::Flow(0), VariableRef::Slack(0)], &[]).unwrap();
        let cert = build_cert(&basis, &inst).unwrap();
        assert_eq!(cert.d, DenseMatrix::identity(1));
        assert_eq!(cert.dhat.rows(), 0);
        assert_eq!(cert.dhat.cols(), 0);
        assert!(is_good(&cert));
        assert!(dhat_is_full_rank(&cert));
    }

    #[test]
    fn wrong_size_and_infinite_upper_are_rejected() {
        let inst = path_instance();
        assert!(matches!(
            BasisState::new(&inst, &[VariableRef::Flow(0)], &[]),
            Err(BasisError::WrongSize { found: 1, expected: 3 })
        ));
        let err = BasisState::new(
            &inst,
            &[VariableRef::Flow(0), VariableRef::Flow(1), VariableRef::Flow(2)],
            &[VariableRef::Slack(0)],
        )
        .unwrap_err();
        assert_eq!(err, BasisError::InfiniteUpper(VariableRef::Slack(0)));
    }
}
