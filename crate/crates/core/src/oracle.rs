//! Independent reference solvers: a dense bounded-variable tableau simplex over
//! the block system `[Â 0; Q̂ I] (x; s) = (b; β)` and exhaustive enumeration of
//! the binary linking variables. Shares no linear algebra with [`crate::simplex`].

use nalgebra::DMatrix;
use thiserror::Error;

use crate::instance::{Instance, ModelKind};
use crate::simplex::{SolveResult, SolveStatus};

const PIVOT_EPS: f64 = 1e-9;
const COST_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("dense simplex exceeded {0} iterations")]
    IterationLimit(usize),
    #[error("brute force supports at most 20 interdependencies, got {0}")]
    TooManyInterdeps(usize),
    #[error("brute force needs a binary-kind instance")]
    NotBinary,
}

/// Dense LP in block form. Columns are the arc flows followed by one slack per
/// interdependence; rows are node balances followed by linking rows.
#[derive(Debug, Clone)]
pub struct DenseLP {
    pub a: DMatrix<f64>,
    pub rhs: Vec<f64>,
    pub upper: Vec<f64>,
    pub cost: Vec<f64>,
    /// Constant added to the objective (from fixed columns).
    pub offset: f64,
    pub arcs: usize,
}

impl DenseLP {
    pub fn assemble(instance: &Instance) -> Self {
        let m = instance.node_count();
        let n = instance.arc_count();
        let p = instance.interdep_count();
        let mut a = DMatrix::zeros(m + p, n + p);
        let index_of = |id: u32| instance.nodes().iter().position(|x| x.id == id).unwrap();
        let arc_of = |id: u32| instance.arcs().iter().position(|x| x.id == id).unwrap();
        for (j, arc) in instance.arcs().iter().enumerate() {
            a[(index_of(arc.tail), j)] = 1.0;
            a[(index_of(arc.head), j)] = -1.0;
        }
        for (t, d) in instance.interdeps().iter().enumerate() {
            a[(m + t, arc_of(d.parent))] = -d.alpha;
            a[(m + t, arc_of(d.child))] = 1.0;
            a[(m + t, n + t)] = 1.0;
        }
        let rhs = instance
            .nodes()
            .iter()
            .map(|x| x.supply)
            .chain(instance.interdeps().iter().map(|d| d.beta))
            .collect();
        let upper = instance
            .arcs()
            .iter()
            .map(|x| x.capacity)
            .chain(std::iter::repeat(f64::INFINITY).take(p))
            .collect();
        let cost = instance
            .arcs()
            .iter()
            .map(|x| x.cost)
            .chain(std::iter::repeat(0.0).take(p))
            .collect();
        Self {
            a,
            rhs,
            upper,
            cost,
            offset: 0.0,
            arcs: n,
        }
    }

    pub fn rank(&self) -> usize {
        self.a.rank(1e-9)
    }

    /// Rank of the submatrix formed by the given columns.
    pub fn column_rank(&self, cols: &[usize]) -> usize {
        if cols.is_empty() {
            return 0;
        }
        self.a.select_columns(cols).rank(1e-9)
    }

    /// Pins column `j` at `value` by moving it into the right-hand side.
    pub fn fix(&mut self, j: usize, value: f64) {
        if value != 0.0 {
            for i in 0..self.a.nrows() {
                self.rhs[i] -= self.a[(i, j)] * value;
            }
            self.offset += self.cost[j] * value;
        }
        self.upper[j] = 0.0;
        for i in 0..self.a.nrows() {
            self.a[(i, j)] = 0.0;
        }
    }
}

struct Tableau {
    t: DMatrix<f64>,
    basis: Vec<usize>,
    beta: Vec<f64>,
    at_upper: Vec<bool>,
    upper: Vec<f64>,
}

impl Tableau {
    fn value(&self, j: usize) -> f64 {
        if let Some(i) = self.basis.iter().position(|&b| b == j) {
            self.beta[i]
        } else if self.at_upper[j] {
            self.upper[j]
        } else {
            0.0
        }
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let piv = self.t[(r, j)];
        let cols = self.t.ncols();
        for k in 0..cols {
            self.t[(r, k)] /= piv;
        }
        for i in 0..self.t.nrows() {
            if i != r {
                let f = self.t[(i, j)];
                if f != 0.0 {
                    for k in 0..cols {
                        let v = self.t[(r, k)];
                        self.t[(i, k)] -= f * v;
                    }
                }
            }
        }
        self.basis[r] = j;
    }

    /// Bland-rule bounded-variable simplex on the given costs. Returns false
    /// on an unbounded ray.
    fn optimize(
        &mut self,
        cost: &[f64],
        eligible: &dyn Fn(usize) -> bool,
        iterations: &mut usize,
        limit: usize,
    ) -> Result<bool, OracleError> {
        let rows = self.t.nrows();
        let cols = self.t.ncols();
        loop {
            let mut entering = None;
            for j in 0..cols {
                if !eligible(j) || self.basis.contains(&j) {
                    continue;
                }
                let d = cost[j] - (0..rows).map(|i| cost[self.basis[i]] * self.t[(i, j)]).sum::<f64>();
                if (!self.at_upper[j] && d < -COST_EPS) || (self.at_upper[j] && d > COST_EPS) {
                    entering = Some(j);
                    break;
                }
            }
            let Some(j) = entering else { return Ok(true) };
            *iterations += 1;
            if *iterations > limit {
                return Err(OracleError::IterationLimit(limit));
            }
            let dir = if self.at_upper[j] { -1.0 } else { 1.0 };
            let mut best = self.upper[j];
            let mut leave: Option<(usize, bool)> = None;
            for i in 0..rows {
                let g = self.t[(i, j)] * dir;
                let b = self.basis[i];
                let (ratio, to_upper) = if g > PIVOT_EPS {
                    (self.beta[i].max(0.0) / g, false)
                } else if g < -PIVOT_EPS && self.upper[b].is_finite() {
                    ((self.upper[b] - self.beta[i]).max(0.0) / -g, true)
                } else {
                    continue;
                };
                let holder = leave.map_or(j, |(k, _)| self.basis[k]);
                let tie = best.is_finite() && (ratio - best).abs() <= 1e-12;
                if (ratio < best && !tie) || (tie && b < holder) {
                    best = ratio;
                    leave = Some((i, to_upper));
                }
            }
            if !best.is_finite() {
                return Ok(false);
            }
            let entering_value = self.value(j) + dir * best;
            for i in 0..rows {
                self.beta[i] -= self.t[(i, j)] * dir * best;
            }
            match leave {
                None => self.at_upper[j] = !self.at_upper[j],
                Some((r, to_upper)) => {
                    let out = self.basis[r];
                    self.at_upper[out] = to_upper;
                    self.at_upper[j] = false;
                    self.pivot(r, j);
                    self.beta[r] = entering_value;
                }
            }
        }
    }
}

/// Two-phase dense simplex with Bland's rule. Phase 1 uses one artificial per
/// row, so rank-deficient systems need no special handling.
pub fn solve_dense(lp: &DenseLP) -> Result<SolveResult, OracleError> {
    let rows = lp.a.nrows();
    let nv = lp.a.ncols();
    let mut t = DMatrix::zeros(rows, nv + rows);
    let mut beta = vec![0.0; rows];
    for i in 0..rows {
        let sign = if lp.rhs[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..nv {
            t[(i, j)] = sign * lp.a[(i, j)];
        }
        t[(i, nv + i)] = 1.0;
        beta[i] = sign * lp.rhs[i];
    }
    let mut upper = lp.upper.clone();
    upper.extend(std::iter::repeat(f64::INFINITY).take(rows));
    let mut tab = Tableau {
        t,
        basis: (nv..nv + rows).collect(),
        beta,
        at_upper: vec![false; nv + rows],
        upper,
    };
    let limit = 200 * (rows + nv + 1);
    let mut iterations = 0;
    let mut phase1_cost = vec![0.0; nv + rows];
    for c in &mut phase1_cost[nv..] {
        *c = 1.0;
    }
    tab.optimize(&phase1_cost, &|_| true, &mut iterations, limit)?;
    let phase1_iterations = iterations;
    let artificial: f64 = (nv..nv + rows).map(|j| tab.value(j)).sum();
    let scale = 1.0 + lp.rhs.iter().map(|x| x.abs()).sum::<f64>();
    let extract = |tab: &Tableau| -> Vec<f64> { (0..nv).map(|j| tab.value(j)).collect() };
    if artificial > 1e-9 * scale {
        let x = extract(&tab);
        return Ok(SolveResult {
            status: SolveStatus::Infeasible,
            flows: x[..lp.arcs].to_vec(),
            slacks: x[lp.arcs..].to_vec(),
            objective: f64::INFINITY,
            iterations,
            phase1_iterations,
            trace: Vec::new(),
        });
    }
    for j in nv..nv + rows {
        tab.upper[j] = 0.0;
    }
    for b in tab.beta.iter_mut().zip(&tab.basis).filter(|(_, &j)| j >= nv).map(|(b, _)| b) {
        *b = 0.0;
    }
    let mut cost = lp.cost.clone();
    cost.extend(std::iter::repeat(0.0).take(rows));
    let bounded = tab.optimize(&cost, &|j| j < nv, &mut iterations, limit)?;
    let x = extract(&tab);
    let objective = if bounded {
        lp.offset + x.iter().zip(&lp.cost).map(|(a, b)| a * b).sum::<f64>()
    } else {
        f64::NEG_INFINITY
    };
    Ok(SolveResult {
        status: if bounded { SolveStatus::Optimal } else { SolveStatus::Unbounded },
        flows: x[..lp.arcs].to_vec(),
        slacks: x[lp.arcs..].to_vec(),
        objective,
        iterations,
        phase1_iterations,
        trace: Vec::new(),
    })
}

/// Exact binary-model optimum by enumerating every linking vector. A parent
/// with `y = 1` is pinned at capacity; a child with `y = 0` is pinned at zero.
/// Returns the best result and its vector, or an infeasible result with an
/// empty vector.
pub fn brute_force_bidm(instance: &Instance) -> Result<(SolveResult, Vec<bool>), OracleError> {
    if instance.kind() != ModelKind::Bidm {
        return Err(OracleError::NotBinary);
    }
    let p = instance.interdep_count();
    if p > 20 {
        return Err(OracleError::TooManyInterdeps(p));
    }
    let plain = instance
        .with_interdeps(ModelKind::Lidm, Vec::new())
        .expect("dropping interdependencies keeps the instance valid");
    let base = DenseLP::assemble(&plain);
    let arc_of = |id: u32| instance.arcs().iter().position(|x| x.id == id).unwrap();
    let mut best: Option<(SolveResult, Vec<bool>)> = None;
    let mut last = None;
    for mask in 0u32..(1u32 << p) {
        let y: Vec<bool> = (0..p).map(|t| mask >> t & 1 == 1).collect();
        let mut lp = base.clone();
        for (t, d) in instance.interdeps().iter().enumerate() {
            if y[t] {
                let j = arc_of(d.parent);
                lp.fix(j, instance.arcs()[j].capacity);
            } else {
                lp.fix(arc_of(d.child), 0.0);
            }
        }
        let r = solve_dense(&lp)?;
        if r.status == SolveStatus::Optimal
            && best.as_ref().map_or(true, |(b, _)| r.objective < b.objective - 1e-12)
        {
            best = Some((r, y));
        } else {
            last = Some(r);
        }
    }
    Ok(best.unwrap_or_else(|| (last.expect("at least one assignment"), Vec::new())))
}
