//! Golden checks on the 11-node worked example, stepping the simplex by hand
//! through its three iterations from the published starting basis.

use mcnfli::basis::{BasisSpec, BasisState, VarStatus, VariableRef};
use mcnfli::simplex::{
    basic_values, compute_potentials, net_requirements, pivot_plan, price, reduced_cost, CertSystem,
    PivotCase, PricingRule, SolveOptions, SolveStatus, TraceLevel,
};
use mcnfli::{parse, solve, solve_from_basis, validate, Instance};

const INSTANCE: &str = include_str!("../../../data/worked_example.dimacs");
const BASIS: &str = include_str!("../../../data/worked_example_basis.json");

fn fixture() -> (Instance, BasisState) {
    let inst = parse(INSTANCE).unwrap();
    assert!(validate(&inst).is_empty());
    let spec: BasisSpec = serde_json::from_str(BASIS).unwrap();
    let basis = spec.to_state(&inst).unwrap();
    (inst, basis)
}

fn arc(inst: &Instance, tail: u32, head: u32) -> VariableRef {
    let a = inst
        .arcs()
        .iter()
        .position(|r| r.tail == tail && r.head == head)
        .unwrap_or_else(|| panic!("no arc ({tail},{head})"));
    VariableRef::Flow(a)
}

fn slack(t: usize) -> VariableRef {
    VariableRef::Slack(t - 1)
}

fn close(a: &[f64], b: &[f64]) {
    assert_eq!(a.len(), b.len(), "{a:?} vs {b:?}");
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() < 1e-9, "{a:?} vs {b:?}");
    }
}

fn check_values(inst: &Instance, values: &[f64], expected: &[(VariableRef, f64)]) {
    let n = inst.arc_count();
    for &(v, x) in expected {
        let got = values[v.index(n)];
        assert!((got - x).abs() < 1e-9, "{v:?}: {got} vs {x}");
    }
}

fn check_deltas(inst: &Instance, deltas: &[(VariableRef, f64)], expected: &[(VariableRef, f64)]) {
    let mut got: Vec<_> = deltas.to_vec();
    got.sort_by_key(|(v, _)| v.index(inst.arc_count()));
    let mut want = expected.to_vec();
    want.sort_by_key(|(v, _)| v.index(inst.arc_count()));
    assert_eq!(got.len(), want.len(), "{got:?} vs {want:?}");
    for ((gv, gd), (wv, wd)) in got.iter().zip(&want) {
        assert_eq!(gv, wv);
        assert!((gd - wd).abs() < 1e-9, "{gv:?}: {gd} vs {wd}");
    }
}

fn d_iter1() -> Vec<Vec<f64>> {
    vec![
        vec![1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
        vec![0.0, 1.0, -1.0, -1.0, 0.0, 0.0, 0.0],
        vec![0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0],
        vec![-0.5, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        vec![0.0, -1.0, 1.0, 0.0, 0.0, 0.0, 0.0],
        vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0],
    ]
}

fn d_iter2() -> Vec<Vec<f64>> {
    vec![
        vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0],
        vec![0.0, -1.0, -1.0, 0.0, 0.0, 0.0],
        vec![-0.5, 0.0, 0.0, 1.0, 0.0, 0.0],
        vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
        vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0],
    ]
}

#[test]
fn initial_basis_state() {
    let (inst, basis) = fixture();
    assert_eq!(basis.forest().tree_count(), 4);
    let sys = CertSystem::new(&basis, &inst, false).unwrap();
    assert_eq!(sys.cert.d.to_rows(), d_iter1());
    close(&net_requirements(&basis, &inst), &[10.0, -6.0, 0.0, 1.0, 2.0, 0.5, 7.5]);
    let values = basic_values(&basis, &inst, &sys);
    check_values(
        &inst,
        &values,
        &[
            (arc(&inst, 1, 2), 6.0),
            (arc(&inst, 1, 4), 8.0),
            (arc(&inst, 2, 6), 6.0),
            (arc(&inst, 3, 5), 5.5),
            (arc(&inst, 3, 6), 0.5),
            (arc(&inst, 4, 8), 4.0),
            (arc(&inst, 5, 10), 5.5),
            (arc(&inst, 6, 10), 6.5),
            (arc(&inst, 7, 6), 0.0),
            (arc(&inst, 7, 11), 0.0),
            (arc(&inst, 8, 9), 1.0),
            (arc(&inst, 2, 5), 15.0),
            (arc(&inst, 5, 9), 15.0),
            (slack(1), 3.0),
            (slack(2), 2.0),
            (slack(4), 2.0),
        ],
    );
}

#[test]
fn three_iterations_match_published_steps() {
    let (inst, mut basis) = fixture();

    // Iteration 1.
    for use_dhat in [false, true] {
        let sys = CertSystem::new(&basis, &inst, use_dhat).unwrap();
        let pots = compute_potentials(&basis, &inst, &sys, None);
        close(&pots.correction, &[13.0, -2.0, -2.5, 0.0, 0.0, -10.0, 0.0]);
        close(
            &pots.stacked(),
            &[13.0, -2.0, -2.5, 5.0, -2.5, -3.0, 2.0, 0.0, -4.0, -3.5, -2.0, 0.0, 0.0, -10.0, 0.0],
        );
    }
    let sys = CertSystem::new(&basis, &inst, false).unwrap();
    let pots = compute_potentials(&basis, &inst, &sys, None);
    for &v in basis.basic() {
        assert!(reduced_cost(v, &pots, &inst).abs() < 1e-9);
    }
    let e15 = arc(&inst, 1, 5);
    assert!((reduced_cost(e15, &pots, &inst) + 3.5).abs() < 1e-12);
    let values = basic_values(&basis, &inst, &sys);
    let plan = pivot_plan(e15, &basis, &inst, &sys, &values);
    assert_eq!(plan.case, PivotCase::Case2);
    assert!((plan.theta_star - 5.5).abs() < 1e-12);
    assert_eq!(plan.blocking, Some((arc(&inst, 3, 5), VarStatus::Lower)));
    check_deltas(
        &inst,
        &plan.deltas,
        &[
            (e15, 1.0),
            (arc(&inst, 3, 5), -1.0),
            (arc(&inst, 1, 2), -1.0),
            (arc(&inst, 2, 6), -1.0),
            (arc(&inst, 3, 6), 1.0),
        ],
    );
    basis.exchange(&inst, e15, Some((arc(&inst, 3, 5), VarStatus::Lower))).unwrap();

    // Iteration 2.
    assert_eq!(basis.forest().tree_count(), 3);
    let sys = CertSystem::new(&basis, &inst, false).unwrap();
    assert_eq!(sys.cert.d.to_rows(), d_iter2());
    let values = basic_values(&basis, &inst, &sys);
    check_values(
        &inst,
        &values,
        &[
            (arc(&inst, 1, 2), 0.5),
            (arc(&inst, 1, 4), 8.0),
            (arc(&inst, 2, 6), 0.5),
            (e15, 5.5),
            (arc(&inst, 3, 6), 6.0),
            (arc(&inst, 4, 8), 4.0),
            (arc(&inst, 5, 10), 5.5),
            (arc(&inst, 6, 10), 6.5),
            (arc(&inst, 8, 9), 1.0),
            (slack(1), 3.0),
            (slack(2), 2.0),
            (slack(4), 2.0),
        ],
    );
    close(&net_requirements(&basis, &inst), &[10.0, -6.0, 1.0, 2.0, 0.5, 7.5]);
    let pots = compute_potentials(&basis, &inst, &sys, None);
    close(
        &pots.stacked(),
        &[13.0, 1.5, 1.0, 5.0, 1.0, 0.5, 5.5, 0.0, -4.0, 0.0, 1.5, 0.0, 0.0, -6.5, 0.0],
    );
    let e109 = arc(&inst, 10, 9);
    assert!((reduced_cost(e109, &pots, &inst) + 2.0).abs() < 1e-12);
    let plan = pivot_plan(e109, &basis, &inst, &sys, &values);
    assert_eq!(plan.case, PivotCase::Case2);
    assert!((plan.theta_star - 1.0).abs() < 1e-12);
    assert_eq!(plan.blocking, Some((arc(&inst, 8, 9), VarStatus::Lower)));
    check_deltas(
        &inst,
        &plan.deltas,
        &[
            (e109, 1.0),
            (arc(&inst, 4, 8), -1.0),
            (arc(&inst, 5, 10), 1.0),
            (slack(1), -0.5),
            (slack(4), -1.0),
            (arc(&inst, 1, 4), -1.0),
            (e15, 1.0),
            (arc(&inst, 8, 9), -1.0),
        ],
    );
    basis.exchange(&inst, e109, Some((arc(&inst, 8, 9), VarStatus::Lower))).unwrap();

    // Iteration 3: same D, optimal.
    let sys = CertSystem::new(&basis, &inst, false).unwrap();
    assert_eq!(sys.cert.d.to_rows(), d_iter2());
    let values = basic_values(&basis, &inst, &sys);
    check_values(
        &inst,
        &values,
        &[
            (arc(&inst, 1, 4), 7.0),
            (e15, 6.5),
            (arc(&inst, 4, 8), 3.0),
            (arc(&inst, 5, 10), 6.5),
            (e109, 1.0),
            (slack(1), 2.5),
            (slack(2), 2.0),
            (slack(4), 1.0),
        ],
    );
    let pots = compute_potentials(&basis, &inst, &sys, None);
    // -13/2 for the third interdependence is forced by the zero reduced cost
    // of its basic child arc (1,2).
    close(
        &pots.stacked(),
        &[13.0, 1.5, 1.0, 5.0, 1.0, 0.5, 5.5, 0.0, -2.0, 0.0, 1.5, 0.0, 0.0, -6.5, 0.0],
    );
    assert_eq!(price(&basis, &pots, &inst, PricingRule::Dantzig, |_| true), None);
    let flows = &values[..inst.arc_count()];
    assert!((inst.objective(flows) - 189.25).abs() < 1e-9);
}

#[test]
fn incremental_potentials_price_the_same() {
    let (inst, mut basis) = fixture();
    let sys = CertSystem::new(&basis, &inst, false).unwrap();
    let first = compute_potentials(&basis, &inst, &sys, None);
    let e15 = arc(&inst, 1, 5);
    basis.exchange(&inst, e15, Some((arc(&inst, 3, 5), VarStatus::Lower))).unwrap();
    let sys = CertSystem::new(&basis, &inst, false).unwrap();
    let fresh = compute_potentials(&basis, &inst, &sys, None);
    let incr = compute_potentials(&basis, &inst, &sys, Some(&first));
    for v in (0..inst.arc_count() + inst.interdep_count()).map(|i| VariableRef::from_index(i, inst.arc_count())) {
        let a = reduced_cost(v, &fresh, &inst);
        let b = reduced_cost(v, &incr, &inst);
        assert!((a - b).abs() < 1e-9, "{v:?}: {a} vs {b}");
    }
}

#[test]
fn full_solve_reaches_published_optimum() {
    let (inst, basis) = fixture();
    for rule in [PricingRule::Dantzig, PricingRule::Bland] {
        for use_dhat in [false, true] {
            let opts = SolveOptions {
                rule,
                use_dhat,
                check_invariants: true,
                ..Default::default()
            };
            let r = solve(&inst, &opts).unwrap();
            assert_eq!(r.status, SolveStatus::Optimal);
            assert!((r.objective - 189.25).abs() < 1e-9, "{rule:?} {use_dhat}: {}", r.objective);
            let r = solve_from_basis(&inst, basis.clone(), &opts).unwrap();
            assert_eq!(r.status, SolveStatus::Optimal);
            assert!((r.objective - 189.25).abs() < 1e-9);
        }
    }
}

#[test]
fn detailed_trace_starts_at_published_state() {
    let (inst, basis) = fixture();
    let opts = SolveOptions {
        trace: TraceLevel::Detailed,
        ..Default::default()
    };
    let r = solve_from_basis(&inst, basis, &opts).unwrap();
    let first = r.trace[0].detail.as_ref().unwrap();
    assert_eq!(first.d, d_iter1());
    close(&first.net_requirements, &[10.0, -6.0, 0.0, 1.0, 2.0, 0.5, 7.5]);
    close(
        &first.potentials,
        &[13.0, -2.0, -2.5, 5.0, -2.5, -3.0, 2.0, 0.0, -4.0, -3.5, -2.0, 0.0, 0.0, -10.0, 0.0],
    );
    assert_eq!(first.trees.len(), 4);
    let last = r.trace.last().unwrap();
    assert!(last.entering.is_none());
    assert!((last.objective - 189.25).abs() < 1e-9);
}
