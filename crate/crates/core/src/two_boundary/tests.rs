use super::*;
use crate::factorization::solve_plus_factor;
use crate::presets::{model_d2, model_m2, model_s1, model_s2, model_zero};

fn solve(model: &Model, s: f64, t: f64, n: usize) -> TwoBoundarySolution {
    let f = solve_plus_factor(model, s, 1e-12).unwrap();
    solve_bt(model, &f, t, n, &SolveOptions::default()).unwrap()
}

fn sup_diff(a: &[RealMatrix], b: &[RealMatrix]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| linalg::max_abs(&(x - y)))
        .fold(0.0, f64::max)
}

#[test]
fn scalar_upward_exit_closed_form() {
    let model = model_s1();
    for (s, t) in [(1.0, 2.0), (0.3, 5.0)] {
        let sol = solve(&model, s, t, 64);
        for (x, v) in sol.x_grid.iter().zip(sol.bt.iter()) {
            let exact = 2.0 / (s + 2.0) * (-s * x / (s + 2.0)).exp();
            assert!((v[(0, 0)] - exact).abs() < 1e-10, "x={x}");
        }
        // upward paths never leave through the lower barrier
        for low in &sol.bt_low[2..sol.n()] {
            assert!(low[(0, 0)].abs() < 1e-10);
        }
        // at x = h the piece above 0 is one cell wide and integrated by the
        // trapezoid rule; its density is a multiple of e^{-R y}
        let h = t / sol.n() as f64;
        let law = KilledLaw::from_reversed(&sol.occupation, &sol.pi, 1, &sol.bt[1]);
        let r = sol.frame.r_star[(0, 0)];
        let top = law.upper.iter().map(|d| d[(0, 0)].abs()).fold(0.0, f64::max);
        let bound = h.powi(3) / 12.0 * r * r * top;
        assert!(sol.bt_low[1][(0, 0)].abs() <= bound, "{} > {bound}", sol.bt_low[1]);
    }
}

#[test]
fn boundary_conventions() {
    let sol = solve(&model_m2(), 1.0, 2.0, 32);
    assert_eq!(sol.bt_at(2.0).unwrap(), RealMatrix::zeros(2, 2));
    assert_eq!(sol.bt_at(3.5).unwrap(), RealMatrix::zeros(2, 2));
    assert_eq!(sol.bt_at(-0.1).unwrap(), linalg::identity(2));
    assert!(sol.bt_at(0.01).is_err());
}

#[test]
fn never_moving_process_never_exits() {
    let model = model_zero();
    let oracle = volterra_oracle_bt(&model, 1.0, 2.0, 64).unwrap();
    assert!(oracle.iter().all(|b| linalg::max_abs(b) < 1e-15));
    let sol = solve(&model, 1.0, 2.0, 16);
    assert!(sol.bt.iter().all(|b| linalg::max_abs(b) < 1e-12));
    let law = sol.killed_law(1.0).unwrap();
    let (b, low) = exit_split(&sol, &law).unwrap();
    assert!(linalg::max_abs(&b) < 1e-12 && linalg::max_abs(&low) < 1e-12);
}

#[test]
fn scalar_oracle_is_second_order() {
    let model = model_s1();
    let s = 1.0;
    let mut errs = Vec::new();
    for n in [64, 128, 256] {
        let o = volterra_oracle_bt(&model, s, 2.0, n).unwrap();
        let e = o
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let x = 2.0 * i as f64 / n as f64;
                (v[(0, 0)] - 2.0 / 3.0 * (-x / 3.0).exp()).abs()
            })
            .fold(0.0, f64::max);
        errs.push(e);
    }
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((1.7..2.3).contains(&order), "order {order}: {errs:?}");
    }
}

#[test]
fn two_solvers_agree() {
    for model in [model_s2(), model_m2()] {
        let sol = solve(&model, 1.0, 2.0, 256);
        let o = volterra_oracle_bt(&model, 1.0, 2.0, 256).unwrap();
        let d = sup_diff(&sol.bt, &o);
        assert!(d < 1e-4, "difference {d}");
    }
}

#[test]
fn lower_exit_agrees_with_its_renewal_equation() {
    // both discretizations are second order; compare on a matched pair of grids
    for model in [model_s2(), model_m2(), model_d2()] {
        let n = 256;
        let sol = solve(&model, 1.0, 2.0, n);
        let o = volterra_oracle_bt_low(&model, 1.0, 2.0, n).unwrap();
        let d = sup_diff(&sol.bt_low[1..n], &o[1..n]);
        assert!(d < 1e-4, "difference {d}");
    }
}

#[test]
fn solution_invariants() {
    for model in [model_s2(), model_m2(), model_d2()] {
        let sol = solve(&model, 1.0, 2.0, 64);
        assert!(sol.fixed_point_residual < 1e-10);
        for i in 0..=sol.n() {
            for v in [&sol.bt[i], &sol.b[i], &sol.bt_low[i]] {
                assert!(v.iter().all(|x| (-1e-10..=1.0 + 1e-10).contains(x)), "{v}");
            }
            assert!(linalg::max_abs(&(&sol.b[i] - &sol.bt[i] - &sol.bt_low[i])) < 1e-8);
        }
    }
}

#[test]
fn upward_exit_decreases_in_s() {
    for model in [model_s2(), model_m2()] {
        let sols: Vec<_> = [0.5, 1.0, 2.0, 4.0].iter().map(|&s| solve(&model, s, 2.0, 32)).collect();
        for w in sols.windows(2) {
            for (a, b) in w[0].bt.iter().zip(w[1].bt.iter()) {
                assert!(a.iter().zip(b.iter()).all(|(p, q)| *q <= *p + 1e-10));
            }
        }
    }
}

#[test]
fn killed_law_consistency() {
    let s = 1.0;
    for model in [model_s2(), model_m2()] {
        let sol = solve(&model, s, 2.0, 256);
        let law = sol.killed_law(1.0).unwrap();
        assert!(law.min_density() >= -1e-8);
        let atom = model.no_jump_resolvent(s).unwrap();
        assert!(linalg::max_abs(&(&law.atom_at_zero - &atom)) < 1e-10);
        // integral of the density plus the atom is the non-exit probability
        let m = model.m;
        let mass = law.integrate(|_| linalg::identity(m));
        assert!(linalg::max_abs(&(&mass - &law.non_exit)) < 1e-12);
        let (b, low) = exit_split(&sol, &law).unwrap();
        let i = sol.node(1.0).unwrap();
        assert!(linalg::max_abs(&(&b - &sol.b[i])) < 1e-12);
        assert!(linalg::max_abs(&(&b - &sol.bt[i] - &low)) < 1e-12);
        let (v_up, _) = overshoot_transform(&sol, 1.0, 0.0).unwrap();
        assert!(linalg::max_abs_c(&(v_up - linalg::to_complex(&sol.bt[i]))) < 1e-10);
    }
}

#[test]
fn scalar_killed_law() {
    let s = 0.7;
    let model = model_s1();
    let sol = solve(&model, s, 2.0, 64);
    let law = sol.killed_law(0.5).unwrap();
    assert!((law.atom_at_zero[(0, 0)] - s / (s + 2.0)).abs() < 1e-12);
    // the process sits at 0 until its first (upward) jump; density only above 0
    assert!(law.lower.iter().all(|d| d[(0, 0)].abs() < 1e-12));
    let (b, low) = exit_split(&sol, &law).unwrap();
    assert!((b[(0, 0)] - sol.bt_at(0.5).unwrap()[(0, 0)]).abs() < 1e-8);
    assert!(low[(0, 0)].abs() < 1e-8);
}

#[test]
fn scalar_overshoot_is_memoryless() {
    let sol = solve(&model_s1(), 1.0, 2.0, 16);
    let bt = sol.bt_at(1.0).unwrap()[(0, 0)];
    for a in [-2.0, 0.5, 3.0] {
        let (v, lvl) = overshoot_transform(&sol, 1.0, a).unwrap();
        let exact = bt * 1.0 / Complex64::new(1.0, -a);
        assert!((v[(0, 0)] - exact).norm() < 1e-14);
        assert!((lvl[(0, 0)] - exact * Complex64::new(0.0, a).exp()).norm() < 1e-14);
    }
}

#[test]
fn pecherskii_identity() {
    let alphas: Vec<f64> = (-10..=10).map(|j| j as f64).collect();
    for model in [model_s2(), model_m2(), model_d2()] {
        let sol = solve(&model, 1.0, 2.0, 512);
        let law = sol.killed_law(1.0).unwrap();
        let r = pecherskii_residual(&model, &sol, &law, &alphas).unwrap();
        assert!(r <= 1e-6, "residual {r}");
    }
}

#[test]
fn upper_tail_meets_exit_transform() {
    let s = 1.0;
    for model in [model_s2(), model_m2()] {
        let sol = solve(&model, s, 2.0, 256);
        let law = sol.killed_law(1.0).unwrap();
        let near = bratiichuk_tails(&model, &law, 1.0 + 1e-9).unwrap();
        let bt = sol.bt_at(1.0).unwrap() * s;
        assert!(linalg::max_abs(&(near - bt)) < 1e-5);
        assert!(bratiichuk_tails(&model, &law, 0.5).is_err());
        assert!(linalg::max_abs(&bratiichuk_tails(&model, &law, -200.0).unwrap()) < 1e-12);
    }
}

#[test]
fn lower_tail_matches_lower_exit_transform_mass() {
    // s E[e^{-s tau-}; A_-] is the lower tail just below x - T
    let s = 1.0;
    let model = model_m2();
    let sol = solve(&model, s, 2.0, 256);
    let law = sol.killed_law(1.0).unwrap();
    let i = sol.node(1.0).unwrap();
    let tail = bratiichuk_tails(&model, &law, -1.0 - 1e-9).unwrap();
    assert!(linalg::max_abs(&(tail - &sol.bt_low[i] * s)) < 1e-5);
}

#[test]
fn limits_on_scalar_upward_model() {
    // monotone upward paths leave through the top with probability one
    let lb = limit_bt(&model_s1(), 2.0, 32, &LimitOptions::default()).unwrap();
    for v in &lb.direct[1..] {
        assert!((v[(0, 0)] - 1.0).abs() < 1e-8);
    }
    assert!(limit_bt(&model_zero(), 2.0, 16, &LimitOptions::default()).is_err());
}

#[test]
fn limit_measure_moment_identity() {
    let model = model_d2();
    let lm = limit_m(&model, 2.0, 64, &LimitOptions::for_model(&model)).unwrap();
    assert_eq!(lm.transform_checks.len(), 3);
    for (r, rel) in &lm.transform_checks {
        assert!(*rel <= 1e-3, "r={r}: {rel}");
    }
}

#[test]
fn limit_exit_and_density_cross_checks() {
    let model = model_d2();
    let opts = LimitOptions::for_model(&model);
    let lb = limit_bt(&model, 2.0, 64, &opts).unwrap();
    assert!(lb.difference < 1e-3);
    let ld = limit_density(&model, 2.0, 1.0, 64, &opts).unwrap();
    assert!(ld.difference < 1e-3);
    assert_eq!(ld.y_grid.len(), ld.direct.len());
}
