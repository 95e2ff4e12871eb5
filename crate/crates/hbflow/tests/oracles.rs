mod common;

use common::*;
use hbflow::counterterms::{
    enumerate_compositions, gamma_closed_sigma0, gamma_closed_sigma1, gamma_closed_sigma1_finite, gamma_total,
    structure, CounterTermConfig, CtMode,
};
use hbflow::diagnostics::{directional_smoothness, discretization_error, estimate_order, OrderFamily};
use hbflow::discrete::{gd_step, hb_step, run_discrete, DiscreteState, Optimizer};
use hbflow::flows::{flow_rhs, run_flow, FlowConfig, Integrator};
use hbflow::implicit_bias::{
    dln_grads, gamma_w_over_w, kappa_trajectory, kkt_residual, phi_closed_form, phi_closed_form_interpolating,
    potential_gf, run_dln_flow, solve_constrained_potential, DlnFlowConfig, DlnModel, SolverOptions,
};
use hbflow::problems::{omega1, omega2, DiagonalNet, Problem, QuadraticProblem, RegressionData};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn finite_vec(d: usize, r: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-r..r, d)
}

// ---------------------------------------------------------------------------
// Problems

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn hessian_is_symmetric(seed in 0u64..10_000, u in finite_vec(6, 2.0), v in finite_vec(6, 2.0)) {
        let mut r = rng(seed);
        for (p, beta) in problem_zoo(&mut r) {
            let d = p.dim();
            let (u, v) = (&u[..d], &v[..d]);
            let lhs = dot(u, &p.hvp(&beta, v));
            let rhs = dot(v, &p.hvp(&beta, u));
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + norm(u) * norm(v)), "{}: {lhs} vs {rhs}", p.label());
        }
    }

    #[test]
    fn analytic_derivatives_match_finite_differences(seed in 0u64..10_000, u in finite_vec(6, 1.0), v in finite_vec(6, 1.0)) {
        let mut r = rng(seed);
        for (p, beta) in problem_zoo(&mut r) {
            let d = p.dim();
            let (u, v) = (&u[..d], &v[..d]);
            let g = p.grad(&beta);
            let fd_g = fd_gradient(|x| p.value(x), &beta, 1e-5);
            prop_assert!(rel_err(&g, &fd_g, 1e-3) <= 1e-5, "{} grad", p.label());
            let fd_h = fd_jvp(|x| p.grad(x), &beta, v, 1e-4);
            prop_assert!(rel_err(&p.hvp(&beta, v), &fd_h, 1e-3) <= 1e-5, "{} hvp", p.label());
            let fd_t = fd_jvp(|x| p.hvp(x, v), &beta, u, 1e-4);
            prop_assert!(rel_err(&p.t3(&beta, u, v), &fd_t, 1e-3) <= 1e-4, "{} t3", p.label());
        }
    }

    /// `ω₁ + ω₂ = ∇(gᵀHg)`, checked by differentiating the scalar map.
    #[test]
    fn omega_sum_is_gradient_of_curvature_along_gradient(seed in 0u64..10_000) {
        let mut r = rng(seed);
        for (p, beta) in problem_zoo(&mut r) {
            let f = |x: &[f64]| {
                let g = p.grad(x);
                dot(&g, &p.hvp(x, &g))
            };
            let oracle = fd_gradient(f, &beta, 1e-5);
            let sum: Vec<f64> = omega1(p.as_ref(), &beta).unwrap().iter()
                .zip(&omega2(p.as_ref(), &beta).unwrap()).map(|(a, b)| a + b).collect();
            prop_assert!(rel_err(&sum, &oracle, 1e-2) <= 1e-5, "{}", p.label());
        }
    }

    #[test]
    fn dln_gradient_antisymmetry(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let data = random_regression(&mut r, 6, 4);
        let m = DlnModel::new(uniform_vec(&mut r, 4, -2.0, 2.0), uniform_vec(&mut r, 4, -2.0, 2.0), data).unwrap();
        let g = dln_grads(&m);
        for j in 0..4 {
            let a = m.w_minus[j] * g.plus[j];
            let b = m.w_plus[j] * g.minus[j];
            prop_assert!((a + b).abs() <= 1e-14 * (1.0 + a.abs()));
        }
    }
}

#[test]
fn hand_derived_two_d_values() {
    let p = two_d();
    // H = [[a₂², 2a₁a₂ − y], [·, a₁²]] at x = 1
    let h = p.hvp(&BETA0, &[1.0, 0.0]);
    assert!(rel_err(&h, &[12.25, 19.0], 1.0) < 1e-12);
    // ∂³L/∂a₁³ = 0, ∂³L/∂a₁²∂a₂ = 2a₂
    let t = p.t3(&BETA0, &[1.0, 0.0], &[1.0, 0.0]);
    assert!(rel_err(&t, &[0.0, 7.0], 1.0) < 1e-12);
    assert!(rel_err(&p.grad(&BETA0), &[32.2, 25.76], 1.0) < 1e-12);
}

// ---------------------------------------------------------------------------
// Discrete optimizers

proptest! {
    #[test]
    fn hb_without_momentum_is_gd_bitwise(seed in 0u64..10_000, eta in 1e-3..0.2f64) {
        let mut r = rng(seed);
        for (p, beta) in problem_zoo(&mut r) {
            let a = run_discrete(Optimizer::Hb, p.as_ref(), &beta, eta, 0.0, 20);
            let b = run_discrete(Optimizer::Gd, p.as_ref(), &beta, eta, 0.0, 20);
            if let (Ok(a), Ok(b)) = (a, b) {
                prop_assert_eq!(a.points, b.points);
            }
        }
    }

    #[test]
    fn first_heavy_ball_step_is_a_gradient_step(seed in 0u64..10_000, eta in 1e-6..1e-2f64, mu in 0.0..0.99f64) {
        let mut r = rng(seed);
        for (p, beta) in problem_zoo(&mut r) {
            let s = DiscreteState::new(beta.clone(), eta, mu).unwrap();
            let hb = hb_step(&s, p.as_ref()).unwrap();
            let g = p.grad(&beta);
            let expect: Vec<f64> = beta.iter().zip(&g).map(|(b, gi)| b - eta * gi).collect();
            prop_assert_eq!(&hb.beta, &expect);
            prop_assert_eq!(hb.beta, gd_step(&s, p.as_ref()).unwrap().beta);
        }
    }

    #[test]
    fn heavy_ball_matches_reference_recurrence(seed in 0u64..10_000, mu in 0.0..0.95f64) {
        let mut r = rng(seed);
        let q = random_quadratic(&mut r, 3);
        let beta0 = uniform_vec(&mut r, 3, -1.0, 1.0);
        let t = run_discrete(Optimizer::Hb, &q, &beta0, 0.05, mu, 50).unwrap();
        let reference = reference_hb(|x| q.grad(x), &beta0, 0.05, mu, 50);
        for (a, b) in t.points.iter().zip(&reference) {
            prop_assert!(rel_err(a, b, 1.0) < 1e-13);
        }
    }
}

#[test]
fn scalar_heavy_ball_by_hand() {
    let q = QuadraticProblem::diagonal(&[1.0]);
    let t = run_discrete(Optimizer::Hb, &q, &[1.0], 0.1, 0.9, 2).unwrap();
    assert!((t.points[1][0] - 0.9).abs() < 1e-15);
    assert!((t.points[2][0] - 0.72).abs() < 1e-15);
}

// ---------------------------------------------------------------------------
// Counter terms

#[test]
fn composition_sets_follow_stars_and_bars() {
    for sigma in 0..=4 {
        for m in 1..=sigma + 2 {
            let sets = enumerate_compositions(m, sigma);
            assert_eq!(sets.len(), binomial(sigma + 1, m - 1), "m={m}, sigma={sigma}");
            let mut seen = std::collections::HashSet::new();
            for c in &sets {
                assert_eq!(c.0.len(), m);
                assert_eq!(c.0.iter().sum::<usize>(), sigma + 2 - m);
                assert!(seen.insert(c.0.clone()));
            }
        }
        assert!(enumerate_compositions(sigma + 3, sigma).is_empty());
    }
    let s4 = structure(6, 4);
    assert_eq!(s4.families.len(), 5);
    assert_eq!(s4.families.iter().map(|f| f.m).collect::<Vec<_>>(), vec![2, 3, 4, 5, 6]);
    let s0 = structure(2, 0);
    assert_eq!(s0.families.len(), 1);
    assert_eq!(s0.families[0].terms.len(), 1);
    assert_eq!(s0.families[0].terms[0].parts, vec![0, 0]);
}

/// Independent evaluation of the finite-`k` order-0 coefficient,
/// `Σ_{j=0}^{k} μ^{k−j} [(1−μ^{j+1})² + μ(1−μ^j)²] / (2(1−μ)²)`, written out as
/// a double loop over the geometric sums instead of closed powers.
fn curvature_coefficient(k: usize, mu: f64) -> f64 {
    let geo = |j: usize| (0..j).map(|i| mu.powi(i as i32)).sum::<f64>();
    (0..=k)
        .map(|j| mu.powi((k - j) as i32) * (geo(j + 1).powi(2) + mu * geo(j).powi(2)) / 2.0)
        .sum()
}

#[test]
fn finite_order0_approaches_limit_with_geometric_linear_envelope() {
    let p = two_d();
    let beta = [1.3, 0.8];
    let mu: f64 = 0.7;
    let asym = gamma_closed_sigma0(&p, &beta, 0, mu, CtMode::Asymptotic).unwrap();
    let g = p.grad(&beta);
    let hg = p.hvp(&beta, &g);
    let diff = |k: usize| {
        let fin = gamma_closed_sigma0(&p, &beta, k as i64, mu, CtMode::FiniteK).unwrap();
        let want: Vec<f64> = hg.iter().map(|v| v * curvature_coefficient(k, mu)).collect();
        assert!(rel_err(&fin, &want, 1e-9) < 1e-12, "k={k}");
        norm(&fin.iter().zip(&asym).map(|(a, b)| a - b).collect::<Vec<_>>())
    };
    let c = diff(0);
    // below μ^k ≈ 1e-15 the difference is round-off in the limit value
    let floor = 1e-14 * norm(&asym);
    for k in 0..=200 {
        assert!(diff(k) <= c * mu.powi(k as i32) * (k + 1) as f64 + floor, "k={k}");
    }
}

#[test]
fn momentum_free_counter_terms_match_gradient_descent() {
    let mut r = rng(3);
    for (p, beta) in problem_zoo(&mut r) {
        let p = p.as_ref();
        let g = p.grad(&beta);
        let half_hg: Vec<f64> = p.hvp(&beta, &g).iter().map(|v| v / 2.0).collect();
        for mode in [CtMode::FiniteK, CtMode::Asymptotic] {
            for k in [0, 5, 50] {
                let got = gamma_closed_sigma0(p, &beta, k, 0.0, mode).unwrap();
                assert!(rel_err(&got, &half_hg, 1e-12) <= 1e-12);
            }
        }
        let w1 = omega1(p, &beta).unwrap();
        let w2 = omega2(p, &beta).unwrap();
        let igr3: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| a / 4.0 + b / 12.0).collect();
        assert!(rel_err(&gamma_closed_sigma1(p, &beta, 0.0).unwrap(), &igr3, 1e-12) <= 1e-12);
        for k in [0, 7] {
            assert!(rel_err(&gamma_closed_sigma1_finite(p, &beta, k, 0.0).unwrap(), &igr3, 1e-12) <= 1e-12);
        }
    }
}

#[test]
fn quadratic_order1_coefficient_collapses() {
    let q = QuadraticProblem::diagonal(&[2.0, 1.0]);
    let beta = [0.7, -1.1];
    let mu: f64 = 0.6;
    let g = q.grad(&beta);
    let h2g = q.hvp(&beta, &q.hvp(&beta, &g));
    let lead = (1.0 + mu).powi(2) / (4.0 * (1.0 - mu).powi(5));
    let c = lead * (1.0 + (1.0 + 10.0 * mu + mu * mu) / (3.0 * (1.0 + mu).powi(2)));
    let want: Vec<f64> = h2g.iter().map(|v| c * v).collect();
    assert!(rel_err(&gamma_closed_sigma1(&q, &beta, mu).unwrap(), &want, 1e-12) < 1e-12);
}

#[test]
fn counter_terms_vanish_at_stationary_points() {
    let q = QuadraticProblem::diagonal(&[2.0, 1.0]);
    for alpha in 1..=4 {
        let mut cfg = CounterTermConfig::new(alpha, 0.5, CtMode::FiniteK);
        cfg.sigma_max_generic = 2;
        let g = gamma_total(&q, &[0.0, 0.0], 12, 0.01, &cfg).unwrap();
        assert!(norm(&g) < 1e-12, "alpha={alpha}");
    }
}

// ---------------------------------------------------------------------------
// Flows

#[test]
fn momentum_free_hbf2_is_implicit_gradient_regularization() {
    let mut r = rng(5);
    for (p, beta) in problem_zoo(&mut r) {
        let eta = 0.01;
        let rhs = flow_rhs(p.as_ref(), &beta, 9, &FlowConfig::hbf(2, 0.0, eta)).unwrap();
        let g = p.grad(&beta);
        let hg = p.hvp(&beta, &g);
        let want: Vec<f64> = g.iter().zip(&hg).map(|(a, b)| -a - eta * b / 2.0).collect();
        assert!(rel_err(&rhs, &want, 1e-12) <= 1e-12);
    }
}

fn endpoint(p: &dyn Problem, beta0: &[f64], cfg: FlowConfig, n: usize) -> Vec<f64> {
    run_flow(p, beta0, &cfg, n).unwrap().last().to_vec()
}

#[test]
fn substep_refinement_orders() {
    let p = two_d();
    let beta0 = [1.2, 0.9];
    let (eta, steps) = (0.05, 4);
    for (integrator, nominal, ns) in [(Integrator::Euler, 1.0, [8usize, 16, 32, 64]), (Integrator::Rk4, 4.0, [1, 2, 4, 8])] {
        let base = FlowConfig::hbf(2, 0.5, eta);
        let reference = endpoint(&p, &beta0, base.clone().with_integrator(Integrator::Rk4, 256), steps);
        let errs: Vec<f64> = ns
            .iter()
            .map(|&n| {
                let e = endpoint(&p, &beta0, base.clone().with_integrator(integrator, n), steps);
                norm(&e.iter().zip(&reference).map(|(a, b)| a - b).collect::<Vec<_>>())
            })
            .collect();
        let lx: Vec<f64> = ns.iter().map(|&n| (1.0 / n as f64).ln()).collect();
        let ly: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
        let (slope, _) = hbflow::linalg::fit_line(&lx, &ly);
        assert!((slope - nominal).abs() <= 0.4, "{integrator:?}: slope {slope}, errors {errs:?}");
    }
}

#[test]
fn rescaled_flow_is_time_rescaled_gradient_flow() {
    let q = QuadraticProblem::diagonal(&[1.0, 3.0]);
    let beta0 = [1.0, -0.5];
    let (mu, eta, n) = (0.6, 0.01, 200);
    let rgf = run_flow(&q, &beta0, &FlowConfig::rgf(mu, eta).with_integrator(Integrator::Rk4, 10), n).unwrap();
    let gf = run_flow(&q, &beta0, &FlowConfig::gf(eta / (1.0 - mu)).with_integrator(Integrator::Rk4, 10), n).unwrap();
    for (a, b) in rgf.points.iter().zip(&gf.points) {
        assert!(rel_err(a, b, 1e-3) < 1e-9);
    }
}

#[test]
fn every_pairing_starts_with_zero_error() {
    let p = two_d();
    for opt in [Optimizer::Gd, Optimizer::Hb] {
        let d = run_discrete(opt, &p, &BETA0, 5e-3, 0.7, 5).unwrap();
        for cfg in [FlowConfig::gf(5e-3), FlowConfig::rgf(0.7, 5e-3), FlowConfig::hbf(3, 0.7, 5e-3)] {
            let f = run_flow(&p, &BETA0, &cfg, 5).unwrap();
            assert_eq!(discretization_error(&d, &f).unwrap().eps_norm[0], 0.0);
        }
    }
}

// ---------------------------------------------------------------------------
// Diagnostics

#[test]
fn euler_gradient_flow_against_gradient_descent_is_first_order() {
    let q = QuadraticProblem::diagonal(&[1.0, 4.0]);
    let family = OrderFamily {
        reference: Optimizer::Gd,
        mu: 0.0,
        flow: FlowConfig::gf(1.0).with_integrator(Integrator::Euler, 50),
    };
    let fit = estimate_order(&q, &[1.0, 1.0], &family, &[0.004, 0.01, 0.02, 0.04], 1.0).unwrap();
    assert!((fit.slope - 1.0).abs() <= 0.3, "slope {}", fit.slope);
}

proptest! {
    #[test]
    fn smoothness_of_a_quadratic_is_its_curvature(lambda in 0.01..50.0f64, b in -10.0..10.0f64, eta in 1e-4..1.0f64) {
        prop_assume!(b.abs() > 1e-6);
        let q = QuadraticProblem::diagonal(&[lambda]);
        let d = directional_smoothness(&q, &[b], eta).unwrap();
        prop_assert!((d - lambda).abs() <= 1e-9 * lambda);
    }
}

// ---------------------------------------------------------------------------
// Implicit bias

/// `γ^{w±}` from finite-difference block Hessians, divided by `w±`.
fn block_ratio_oracle(m: &DlnModel, mu: f64) -> (Vec<f64>, Vec<f64>) {
    let d = m.data.d();
    let net = DiagonalNet::new(m.data.clone());
    let full: Vec<f64> = m.w_plus.iter().chain(&m.w_minus).cloned().collect();
    let coef = (1.0 + mu) / (2.0 * (1.0 - mu).powi(3));
    let block = |offset: usize| {
        let grad_block = |b: &[f64]| {
            let mut x = full.clone();
            x[offset..offset + d].copy_from_slice(b);
            net.grad(&x)[offset..offset + d].to_vec()
        };
        let w = &full[offset..offset + d];
        let h = fd_hessian(grad_block, w, 1e-5);
        let g = DVector::from_vec(grad_block(w));
        (h * g).iter().zip(w).map(|(v, wi)| coef * v / wi).collect::<Vec<f64>>()
    };
    (block(0), block(d))
}

#[test]
fn correction_ratios_match_block_hessian_oracle() {
    let x = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
    let data = RegressionData::new(x, DVector::from_vec(vec![1.0])).unwrap();
    let one = DlnModel::new(vec![1.0, 1.0], vec![0.5, 0.5], data).unwrap();
    let mut r = rng(17);
    let random = DlnModel::new(
        uniform_vec(&mut r, 5, 0.2, 1.5),
        uniform_vec(&mut r, 5, 0.2, 1.5),
        random_regression(&mut r, 3, 5),
    )
    .unwrap();
    for m in [one, random] {
        for mu in [0.0, 0.7] {
            let (p, n) = gamma_w_over_w(&m, mu).unwrap();
            let (op, on) = block_ratio_oracle(&m, mu);
            assert!(rel_err(&p, &op, 1e-6) < 1e-6, "plus {p:?} vs {op:?}");
            assert!(rel_err(&n, &on, 1e-6) < 1e-6, "minus {n:?} vs {on:?}");
        }
    }
}

fn small_run(mu: f64, correction: bool) -> hbflow::implicit_bias::DlnRun {
    let inst = hbflow::implicit_bias::sparse_regression(8, 16, 2, 4).unwrap();
    let (wp, wm) = hbflow::implicit_bias::scaled_init(0.1, 1.3, 16);
    let cfg = DlnFlowConfig {
        mu,
        eta: 1e-2,
        substeps: 4,
        correction,
        max_time: 5.0,
        record_every: 1,
        ..DlnFlowConfig::default()
    };
    run_dln_flow(&inst.data, &wp, &wm, &cfg).unwrap()
}

#[test]
fn uncorrected_flow_preserves_kappa() {
    let run = small_run(0.5, false);
    let ks = kappa_trajectory(&run).unwrap();
    for (f, p) in ks.formula.iter().zip(&ks.product) {
        assert_eq!(f, &run.kappa0);
        assert!(rel_err(p, &run.kappa0, 1e-12) < 1e-9);
    }
    assert_eq!(ks.formula[0], run.kappa0);
}

#[test]
fn flow_snapshots_satisfy_magnitude_and_kappa_identities() {
    let run = small_run(0.5, true);
    let ks = kappa_trajectory(&run).unwrap();
    for (i, s) in run.snapshots.iter().enumerate() {
        for j in 0..s.w_plus.len() {
            let (a, b) = (s.w_plus[j], s.w_minus[j]);
            let (w, v, k) = (a * a - b * b, a * a + b * b, a * b);
            assert!((v * v - w * w - 4.0 * k * k).abs() <= 1e-12 * v * v);
            let gap = (ks.formula[i][j] - ks.product[i][j]).abs();
            assert!(gap <= 10.0 * ks.error_estimate[i][j] + 1e-12 * run.kappa0[j], "t={} j={j}", s.t);
        }
    }
}

#[test]
fn effective_weights_follow_the_reduced_dynamics() {
    let mu = 0.5;
    let run = small_run(mu, true);
    let eta = run.config.eta;
    let snaps = &run.snapshots;
    for i in 1..snaps.len() - 1 {
        let w = |s: &hbflow::implicit_bias::DlnSnapshot| -> Vec<f64> {
            s.w_plus.iter().zip(&s.w_minus).map(|(a, b)| a * a - b * b).collect()
        };
        let dt = snaps[i + 1].t - snaps[i - 1].t;
        let fd: Vec<f64> = w(&snaps[i + 1]).iter().zip(&w(&snaps[i - 1])).map(|(a, b)| (a - b) / dt).collect();
        let s = &snaps[i];
        let m = DlnModel::new(s.w_plus.clone(), s.w_minus.clone(), run.data.clone()).unwrap();
        let g = dln_grads(&m);
        let (rp, rm) = gamma_w_over_w(&m, mu).unwrap();
        let rhs: Vec<f64> = (0..g.w.len())
            .map(|j| {
                let (a, b) = (s.w_plus[j], s.w_minus[j]);
                let gamma_w = 2.0 * (rp[j] * a * a - rm[j] * b * b);
                -4.0 * (a * a + b * b) * g.w[j] / (1.0 - mu) - eta * gamma_w
            })
            .collect();
        assert!(rel_err(&fd, &rhs, 1e-6) < 1e-3, "t={}", s.t);
    }
}

#[test]
fn potential_reference_values() {
    let v = potential_gf(&[1.0], &[0.5]).unwrap().total;
    let expect = 0.25 * ((1.0f64 + 2f64.sqrt()).ln() - 2f64.sqrt() + 1.0);
    assert!((v - expect).abs() < 1e-15);
    assert!((v - 0.116_790_006).abs() < 1e-9);
    assert_eq!(potential_gf(&[0.0, 0.0], &[0.5, 3.0]).unwrap().total, 0.0);
    // large κ: Λ ≈ w²/(16κ) − w⁴/(768κ³)
    let kappa = 100.0;
    for w in [1e-2, 1e-1, 1.0] {
        let v = potential_gf(&[w], &[kappa]).unwrap().total;
        let lead = w * w / (16.0 * kappa);
        assert!((v - lead).abs() <= w.powi(4) / (700.0 * kappa.powi(3)), "w={w}");
    }
    // convexity via second differences
    for w in [-3.0, -0.1, 0.0, 0.4, 5.0] {
        let f = |x: f64| potential_gf(&[x], &[0.3]).unwrap().total;
        assert!(f(w + 1e-3) + f(w - 1e-3) - 2.0 * f(w) > 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn solver_output_interpolates_and_is_stationary(seed in 0u64..10_000, log_kappa in -2.0..2.0f64) {
        let mut r = rng(seed);
        let data = random_regression(&mut r, 3, 6);
        let kappa = vec![10f64.powf(log_kappa); 6];
        let phi = uniform_vec(&mut r, 6, -0.05, 0.05);
        let w = solve_constrained_potential(&data.x, &data.y, &kappa, &phi, SolverOptions::default()).unwrap();
        let res = data.apply(&w) - &data.y;
        prop_assert!(res.amax() <= 1e-10);
        prop_assert!(kkt_residual(&w, &kappa, &phi, &data.x).unwrap() <= 1e-8);
    }
}

#[test]
fn phi_closed_form_at_interpolation_uses_initial_gradient() {
    let mut r = rng(21);
    let data = random_regression(&mut r, 3, 7);
    let w = solve_constrained_potential(&data.x, &data.y, &[0.5; 7], &[0.0; 7], SolverOptions::default()).unwrap();
    let (eta, mu) = (1e-2, 0.8);
    let a = phi_closed_form(&data, &w, eta, mu);
    let b = phi_closed_form_interpolating(&data, eta, mu);
    assert!(rel_err(&a, &b, 1e-12) <= 1e-10);
    // independent: ∂_w L at w = 0 is −Xᵀy/n
    let g0 = -(data.x.transpose() * &data.y) / data.n() as f64;
    let c = eta * (1.0 + mu) / (4.0 * (1.0 - mu).powi(2));
    let want: Vec<f64> = g0.iter().map(|v| c * v).collect();
    assert!(rel_err(&b, &want, 1e-12) <= 1e-12);
}
