use super::*;
use crate::automata::{Action, Distribution, ProbAutomaton, TransitionId};
use crate::format::{parse_distribution, parse_pa, parse_partition};
use crate::harness::{gen_pa, GenConfig};
use crate::network::build_network;
use crate::test_support::{example_e, q};
use proptest::prelude::*;

fn example(allowed: &[usize], target: &str) -> (ProbAutomaton, FlowNetwork) {
    let e = example_e();
    let mu = parse_distribution(target, &e).unwrap();
    let part = parse_partition("{sbar,t,u,v | g | b | r}", &e).unwrap();
    let a = e.action_by_name("a").unwrap();
    let allowed: Vec<TransitionId> = allowed.iter().map(|i| TransitionId(*i)).collect();
    let net = build_network(&e, e.start(), a, &mu, &allowed, &part).unwrap();
    (e, net)
}

const MU: &str = "g:1/16, b:5/16, r:10/16";
const GAMMA: &str = "g:1/4, b:1/4, r:1/2";

fn var(net: &FlowNetwork, e: &ProbAutomaton, from: &str, to: &str) -> usize {
    (0..net.num_arcs())
        .find(|i| net.arc_label(e, *i) == format!("{from} -> {to}"))
        .unwrap_or_else(|| panic!("no arc {from} -> {to}"))
}

fn has_row(lp: &LinearProgram, coeffs: &[(usize, &str)], rhs: &str) -> bool {
    let want: BTreeMap<usize, Rational> = coeffs.iter().map(|(j, c)| (*j, q(c))).collect();
    lp.constraints
        .iter()
        .any(|c| c.coeffs == want && c.rhs == q(rhs) && c.relation == Relation::Eq)
}

#[test]
fn example_rows() {
    let (e, net) = example(&[0, 1, 2, 3, 4], MU);
    let lp = build_lp(&net);
    assert_eq!(lp.num_vars(), 30);
    assert!(lp.nonneg.iter().all(|b| *b));
    let v = |a: &str, b: &str| var(&net, &e, a, b);
    assert!(has_row(&lp, &[(v("src", "S(sbar)"), "1")], "1"));
    assert!(has_row(&lp, &[(v("C(#1)", "snk"), "1")], "1/16"));
    assert!(has_row(&lp, &[(v("C(#2)", "snk"), "1")], "5/16"));
    assert!(has_row(&lp, &[(v("C(#3)", "snk"), "1")], "10/16"));
    assert!(has_row(&lp, &[(v("C(#0)", "snk"), "1")], "0"));
    assert!(has_row(
        &lp,
        &[
            (v("T(sbar,#0)", "S(t)"), "1"),
            (v("S(sbar)", "T(sbar,#0)"), "-1/4")
        ],
        "0"
    ));
    // Conservation at sbar: inflow from the source and from t's loop back.
    assert!(has_row(
        &lp,
        &[
            (v("src", "S(sbar)"), "1"),
            (v("T(t,#4)", "S(sbar)"), "1"),
            (v("S(sbar)", "T(sbar,#0)"), "-1"),
        ],
        "0"
    ));
    // Crossing balancing for t -a-> g.
    assert!(has_row(
        &lp,
        &[(v("Ta(t,#1)", "Sa(g)"), "1"), (v("S(t)", "Ta(t,#1)"), "-1")],
        "0"
    ));
    let count = |k: fn(&RowKind) -> bool| lp.constraints.iter().filter(|c| k(&c.kind)).count();
    assert_eq!(count(|k| matches!(k, RowKind::Source)), 1);
    assert_eq!(count(|k| matches!(k, RowKind::ClassMass(_))), 4);
    // 30 vertices, minus source, sink and six isolated ones.
    assert_eq!(count(|k| matches!(k, RowKind::Conservation(_))), 22);
    // tr0 and tr4 in both copies (3 + 1 exits each), plus three crossings.
    assert_eq!(count(|k| matches!(k, RowKind::Balancing(_))), 2 * 4 + 3);
}

#[test]
fn smallest_tau_program() {
    let pa = parse_pa("pa One\nstates: s\nstart: s\nexternal:\ntransitions:\n").unwrap();
    let s = StateId(0);
    let net = build_network(
        &pa,
        s,
        Action::Tau,
        &Distribution::dirac(s),
        &[],
        &Partition::discrete(1),
    )
    .unwrap();
    let lp = build_lp(&net);
    assert_eq!(lp.num_vars(), 3);
    assert_eq!(lp.constraints.len(), 4);
    assert_eq!(lp.num_rows(), 7);
    assert!(has_row(&lp, &[(0, "1")], "1"));
    // Arcs in order: src -> S(s), S(s) -> C(#0), C(#0) -> snk.
    assert!(has_row(&lp, &[(2, "1")], "1"));
    assert!(has_row(&lp, &[(0, "1"), (1, "-1")], "0"));
    assert!(has_row(&lp, &[(1, "1"), (2, "-1")], "0"));
    let opt = apply_optimizations(&lp, &net);
    // Only the class drain loses its sign row; there are no transition vertices.
    assert_eq!(opt.constraints, lp.constraints);
    assert_eq!(opt.num_rows(), lp.num_rows() - 1);
    let sol = solve(&lp, SolveMode::MinimizeObjective).unwrap();
    assert_eq!(sol.assignment, vec![q("1"); 3]);
}

#[test]
fn example_optimizations() {
    let (e, net) = example(&[0, 1, 2, 3, 4], MU);
    let lp = build_lp(&net);
    let opt = apply_optimizations(&lp, &net);
    let removed: Vec<String> = lp
        .constraints
        .iter()
        .filter(|c| !opt.constraints.contains(c))
        .map(|c| match c.kind {
            RowKind::Conservation(v) => net.vertex_label(&e, net.vertices()[v]),
            other => panic!("unexpected removal {other:?}"),
        })
        .collect();
    assert_eq!(
        removed,
        [
            "T(sbar,#0)",
            "T(t,#4)",
            "Ta(sbar,#0)",
            "Ta(t,#1)",
            "Ta(t,#4)",
            "Ta(u,#2)",
            "Ta(v,#3)"
        ]
    );
    // Sign rows dropped: 11 gadget exits plus 4 class drains.
    assert_eq!(lp.num_rows() - opt.num_rows(), 7 + 11 + 4);
    let a = solve(&lp, SolveMode::MinimizeObjective).unwrap();
    let b = solve(&opt, SolveMode::MinimizeObjective).unwrap();
    assert_eq!(a.objective_value, b.objective_value);
}

#[test]
fn example_optimum_matches_worked_solution() {
    let (e, net) = example(&[0, 1, 2, 3, 4], MU);
    let lp = build_lp(&net);
    let sol = solve(&lp, SolveMode::MinimizeObjective).unwrap();
    assert_eq!(sol.status, Status::OptimalFound);
    let expected = [
        ("src", "S(sbar)", "16/16"),
        ("C(#1)", "snk", "1/16"),
        ("C(#2)", "snk", "5/16"),
        ("C(#3)", "snk", "10/16"),
        ("S(sbar)", "T(sbar,#0)", "20/16"),
        ("T(sbar,#0)", "S(t)", "5/16"),
        ("T(sbar,#0)", "S(u)", "5/16"),
        ("T(sbar,#0)", "S(v)", "10/16"),
        ("S(t)", "Ta(t,#1)", "1/16"),
        ("S(t)", "T(t,#4)", "4/16"),
        ("S(u)", "Ta(u,#2)", "5/16"),
        ("S(v)", "Ta(v,#3)", "10/16"),
        ("Ta(t,#1)", "Sa(g)", "1/16"),
        ("T(t,#4)", "S(sbar)", "4/16"),
        ("Ta(u,#2)", "Sa(b)", "5/16"),
        ("Ta(v,#3)", "Sa(r)", "10/16"),
        ("Sa(g)", "C(#1)", "1/16"),
        ("Sa(b)", "C(#2)", "5/16"),
        ("Sa(r)", "C(#3)", "10/16"),
    ];
    let mut nonzero = vec![false; lp.num_vars()];
    for (from, to, value) in expected {
        let j = var(&net, &e, from, to);
        assert_eq!(sol.assignment[j], q(value), "{from} -> {to}");
        nonzero[j] = true;
    }
    for (j, x) in sol.assignment.iter().enumerate() {
        if !nonzero[j] {
            assert!(x.is_zero(), "{} = {x}", lp.var_names[j]);
        }
    }
    // 16 + 16 + 40 + 20 + 20 + 16 sixteenths.
    assert_eq!(sol.objective_value, Some(q("8")));
}

#[test]
fn allowed_restriction_decides_example() {
    let (_, net) = example(&[0, 1, 2, 3], MU);
    let sol = solve(&build_lp(&net), SolveMode::FeasibilityOnly).unwrap();
    assert_eq!(sol.status, Status::Infeasible);
    let (_, net) = example(&[0, 1, 2, 3], GAMMA);
    let sol = solve(&build_lp(&net), SolveMode::FeasibilityOnly).unwrap();
    assert_eq!(sol.status, Status::Feasible);
}

#[test]
fn joint_program_example() {
    let (_, full) = example(&[0, 1, 2, 3, 4], MU);
    let (_, restricted) = example(&[0, 1, 2, 3], MU);
    let e = example_e();
    let part = parse_partition("{sbar,t,u,v | g | b | r}", &e).unwrap();
    let lp1 = build_lp(&full);
    let lp2 = build_lp(&restricted);
    let joint = build_joint_lp(&lp1, &lp2, &part).unwrap();
    assert_eq!(joint.num_vars(), lp1.num_vars() + lp2.num_vars() + 4);
    assert!(joint.num_rows() <= lp1.num_rows() + lp2.num_rows() + 2 * 4 + 1);
    let sol = solve(&joint, SolveMode::MinimizeObjective).unwrap();
    let p0 = lp1.num_vars() + lp2.num_vars();
    assert_eq!(sol.assignment[p0..], [q("0"), q("1/4"), q("1/4"), q("1/2")]);

    let other = Partition::discrete(7);
    assert!(matches!(
        build_joint_lp(&lp1, &lp2, &other),
        Err(Error::Domain(_))
    ));
}

#[test]
fn self_loop_carries_no_flow_at_the_optimum() {
    let pa = parse_pa(
        "pa L\nstates: s t\nstart: s\nexternal: a\ntransitions:\n  s tau -> s:1\n  s a -> t:1\n",
    )
    .unwrap();
    let a = pa.action_by_name("a").unwrap();
    let net = build_network(
        &pa,
        StateId(0),
        a,
        &Distribution::dirac(StateId(1)),
        &pa.all_transition_ids(),
        &Partition::discrete(2),
    )
    .unwrap();
    let lp = build_lp(&net);
    let sol = solve(&lp, SolveMode::MinimizeObjective).unwrap();
    let loop_gadget = net
        .gadgets()
        .iter()
        .find(|g| g.transition == TransitionId(0) && g.kind == GadgetKind::Internal)
        .unwrap();
    assert!(sol.assignment[loop_gadget.entry].is_zero());
    assert!(sol.assignment[loop_gadget.exits[0].2].is_zero());
    assert_eq!(sol.objective_value, Some(q("5")));
}

#[test]
fn ge_rows_and_free_variables() {
    // min x + y  s.t.  x - y = -2, x + y >= 4, x >= 0, y free.
    let lp = LinearProgram {
        var_names: vec!["x".into(), "y".into()],
        nonneg: vec![true, false],
        constraints: vec![
            Constraint {
                coeffs: BTreeMap::from([(0, q("1")), (1, q("-1"))]),
                relation: Relation::Eq,
                rhs: q("-2"),
                kind: RowKind::Other,
            },
            Constraint {
                coeffs: BTreeMap::from([(0, q("1")), (1, q("1"))]),
                relation: Relation::Ge,
                rhs: q("4"),
                kind: RowKind::Other,
            },
        ],
        objective: BTreeMap::from([(0, q("1")), (1, q("1"))]),
        classes: Vec::new(),
    };
    let sol = solve(&lp, SolveMode::MinimizeObjective).unwrap();
    assert_eq!(sol.assignment, vec![q("1"), q("3")]);
    assert!(lp.dump().starts_with("min: +1*x +1*y\n+1*x -1*y = -2\n"));
}

/// Independent oracle: enumerate every set of linearly independent columns,
/// solve for the basic solution and keep the cheapest non-negative one.
fn brute_force(a: &[Vec<Rational>], b: &[Rational], c: &[Rational]) -> Option<Rational> {
    let n = c.len();
    let mut best: Option<Rational> = None;
    for mask in 0u32..(1 << n) {
        let cols: Vec<usize> = (0..n).filter(|j| mask & (1 << j) != 0).collect();
        if cols.len() > a.len() {
            continue;
        }
        // Gauss-Jordan on [A_cols | b].
        let mut m: Vec<Vec<Rational>> = a
            .iter()
            .zip(b)
            .map(|(row, bi)| {
                let mut r: Vec<Rational> = cols.iter().map(|j| row[*j].clone()).collect();
                r.push(bi.clone());
                r
            })
            .collect();
        let k = cols.len();
        let mut pivot_row = 0;
        let mut independent = true;
        for col in 0..k {
            let Some(p) = (pivot_row..m.len()).find(|r| !m[*r][col].is_zero()) else {
                independent = false;
                break;
            };
            m.swap(pivot_row, p);
            let inv = m[pivot_row][col].recip().unwrap();
            for x in m[pivot_row].iter_mut() {
                *x = &*x * &inv;
            }
            let pivot = m[pivot_row].clone();
            for (r, row) in m.iter_mut().enumerate() {
                if r != pivot_row && !row[col].is_zero() {
                    let f = row[col].clone();
                    for (x, p) in row.iter_mut().zip(&pivot) {
                        *x -= &f * p;
                    }
                }
            }
            pivot_row += 1;
        }
        if !independent || m[pivot_row..].iter().any(|r| !r[k].is_zero()) {
            continue;
        }
        let x: Vec<Rational> = (0..k).map(|i| m[i][k].clone()).collect();
        if x.iter().any(|v| v.is_negative()) {
            continue;
        }
        let value: Rational = cols.iter().zip(&x).map(|(j, v)| &c[*j] * v).sum();
        if best.as_ref().is_none_or(|b| value < *b) {
            best = Some(value);
        }
    }
    best
}

fn arb_small_lp() -> impl Strategy<Value = (Vec<Vec<i64>>, Vec<i64>, Vec<i64>)> {
    (1usize..4, 1usize..6).prop_flat_map(|(m, n)| {
        (
            proptest::collection::vec(proptest::collection::vec(-3i64..4, n), m),
            proptest::collection::vec(-4i64..5, m),
            proptest::collection::vec(0i64..4, n),
        )
    })
}

proptest! {
    #[test]
    fn simplex_agrees_with_basis_enumeration((a, b, c) in arb_small_lp()) {
        let a: Vec<Vec<Rational>> = a.iter().map(|r| r.iter().map(|x| Rational::from(*x)).collect()).collect();
        let b: Vec<Rational> = b.iter().map(|x| Rational::from(*x)).collect();
        let c: Vec<Rational> = c.iter().map(|x| Rational::from(*x)).collect();
        let n = c.len();
        let lp = LinearProgram {
            var_names: (0..n).map(|j| format!("x{j}")).collect(),
            nonneg: vec![true; n],
            constraints: a.iter().zip(&b).map(|(row, bi)| Constraint {
                coeffs: row.iter().enumerate().filter(|(_, v)| !v.is_zero()).map(|(j, v)| (j, v.clone())).collect(),
                relation: Relation::Eq,
                rhs: bi.clone(),
                kind: RowKind::Other,
            }).collect(),
            objective: c.iter().enumerate().map(|(j, v)| (j, v.clone())).collect(),
            classes: Vec::new(),
        };
        let oracle = brute_force(&a, &b, &c);
        let feas = solve(&lp, SolveMode::FeasibilityOnly).unwrap();
        prop_assert_eq!(feas.is_feasible(), oracle.is_some());
        let opt = solve(&lp, SolveMode::MinimizeObjective).unwrap();
        prop_assert_eq!(&opt.objective_value, &oracle);
        if opt.is_feasible() {
            prop_assert!(lp.is_satisfied_by(&opt.assignment));
        }
    }

    #[test]
    fn optimizations_preserve_answers(seed in 0u64..200, pick in 0usize..1000) {
        let pa = gen_pa(&GenConfig { seed, ..GenConfig::default() });
        let n = pa.num_states();
        let t = StateId(pick % n);
        let (a, mu) = match pa.transitions().get(pick % pa.num_transitions().max(1)) {
            Some(tr) => (tr.action, tr.target.clone()),
            None => (Action::Tau, Distribution::dirac(t)),
        };
        let part = Partition::new(
            (0..n).fold(vec![Vec::new(), Vec::new()], |mut acc, s| {
                acc[(s * 7 + pick) % 2].push(StateId(s));
                acc
            }).into_iter().filter(|b| !b.is_empty()).collect(),
            n,
        ).unwrap();
        let net = build_network(&pa, t, a, &mu, &pa.all_transition_ids(), &part).unwrap();
        let lp = build_lp(&net);
        let opt = apply_optimizations(&lp, &net);
        let x = solve(&lp, SolveMode::MinimizeObjective).unwrap();
        let y = solve(&opt, SolveMode::MinimizeObjective).unwrap();
        prop_assert_eq!(x.status, y.status);
        prop_assert_eq!(&x.objective_value, &y.objective_value);
        if y.is_feasible() {
            // The relaxed program's optimum is feasible for the original one.
            prop_assert!(lp.is_satisfied_by(&y.assignment));
        }
        let na = pa.num_transitions();
        prop_assert!(lp.num_rows() <= net.num_arcs() + 1 + n + 3 * n * na + net.num_vertices() - 2);
        prop_assert!(lp.num_rows() - opt.num_rows() <= 2 * n * (1 + na) + 2 * na);

        // Reversing the row order never changes the verdict.
        let mut reversed = lp.clone();
        reversed.constraints.reverse();
        let z = solve(&reversed, SolveMode::FeasibilityOnly).unwrap();
        prop_assert_eq!(z.is_feasible(), x.is_feasible());
    }
}
