//! The network simplex and the dense oracle agree on the worked example.

use mcnfli::oracle::{solve_dense, DenseLP};
use mcnfli::{parse, solve, SolveOptions, SolveStatus};

#[test]
fn worked_example_dense() {
    let inst = parse(include_str!("../../../data/worked_example.dimacs")).unwrap();
    let lp = DenseLP::assemble(&inst);
    assert_eq!(lp.rank(), 14);
    let r = solve_dense(&lp).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    assert!((r.objective - 189.25).abs() < 1e-9);
    let s = solve(&inst, &SolveOptions::default()).unwrap();
    assert!((s.objective - r.objective).abs() < 1e-9);
}
