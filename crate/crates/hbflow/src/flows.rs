//! Piece-wise continuous models of GD/HB integrated on the grid `t_k = kη`.

use serde::{Deserialize, Serialize};

use crate::counterterms::{gamma_total, CoefficientSchedule, Coefficients, CounterTermConfig, CtMode};
use crate::discrete::{guard, Trajectory, DEFAULT_DIVERGENCE_BOUND};
use crate::error::{check_len, check_mu, Error, Result};
use crate::linalg::{all_finite, axpy, scale};
use crate::problems::Problem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowKind {
    /// `β̇ = −∇L`
    Gf,
    /// `β̇ = −∇L / (1 − μ)`
    Rgf,
    /// `β̇ = −G_k − η γ_k`
    Hbf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    Euler,
    Rk4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub kind: FlowKind,
    pub eta: f64,
    pub substeps: usize,
    pub integrator: Integrator,
    /// Order, momentum and coefficient mode.
    pub ct: CounterTermConfig,
    pub divergence_bound: f64,
}

impl FlowConfig {
    pub fn new(kind: FlowKind, alpha: usize, mu: f64, eta: f64) -> Self {
        let mu = if kind == FlowKind::Gf { 0.0 } else { mu };
        Self {
            kind,
            eta,
            substeps: 10,
            integrator: Integrator::Euler,
            ct: CounterTermConfig::new(alpha, mu, CtMode::FiniteK),
            divergence_bound: DEFAULT_DIVERGENCE_BOUND,
        }
    }

    pub fn gf(eta: f64) -> Self {
        Self::new(FlowKind::Gf, 1, 0.0, eta)
    }

    pub fn rgf(mu: f64, eta: f64) -> Self {
        Self::new(FlowKind::Rgf, 1, mu, eta)
    }

    pub fn hbf(alpha: usize, mu: f64, eta: f64) -> Self {
        Self::new(FlowKind::Hbf, alpha, mu, eta)
    }

    pub fn with_integrator(mut self, integrator: Integrator, substeps: usize) -> Self {
        self.integrator = integrator;
        self.substeps = substeps;
        self
    }

    pub fn with_mode(mut self, mode: CtMode) -> Self {
        self.ct.mode = mode;
        self
    }

    pub fn mu(&self) -> f64 {
        if self.kind == FlowKind::Gf {
            0.0
        } else {
            self.ct.mu
        }
    }

    pub fn label(&self) -> String {
        match self.kind {
            FlowKind::Gf => "gf".into(),
            FlowKind::Rgf => "rgf".into(),
            FlowKind::Hbf => format!("hbf{}", self.ct.alpha),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Invalid(format!("step size must be positive, got {}", self.eta)));
        }
        if self.substeps == 0 {
            return Err(Error::Invalid("substeps must be at least 1".into()));
        }
        check_mu(self.mu())?;
        self.ct.validate()
    }
}

/// Integration state inside segment `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub beta: Vec<f64>,
    pub k: usize,
    pub t: f64,
}

impl FlowState {
    pub fn start(beta0: Vec<f64>) -> Self {
        Self {
            beta: beta0,
            k: 0,
            t: 0.0,
        }
    }
}

/// Right-hand side of the chosen flow at `β` on segment `k`.
pub fn flow_rhs(problem: &dyn Problem, beta: &[f64], k: usize, config: &FlowConfig) -> Result<Vec<f64>> {
    config.validate()?;
    check_len("beta", problem.dim(), beta.len())?;
    let g = problem.grad(beta);
    Ok(match config.kind {
        FlowKind::Gf => scale(&g, -1.0),
        FlowKind::Rgf => scale(&g, -1.0 / (1.0 - config.ct.mu)),
        FlowKind::Hbf => {
            let c = crate::counterterms::gradient_scale(k as i64, config.ct.mu, config.ct.mode);
            let mut out = scale(&g, -c);
            let gamma = gamma_total(problem, beta, k as i64, config.eta, &config.ct)?;
            axpy(&mut out, -config.eta, &gamma);
            out
        }
    })
}

/// Segment right-hand side with its coefficients precomputed.
pub(crate) struct SegmentField<'a> {
    problem: &'a dyn Problem,
    config: &'a FlowConfig,
    k: usize,
    coef: Coefficients,
}

impl<'a> SegmentField<'a> {
    pub(crate) fn new(problem: &'a dyn Problem, config: &'a FlowConfig, k: usize, coef: Coefficients) -> Self {
        Self {
            problem,
            config,
            k,
            coef,
        }
    }

    pub(crate) fn eval(&self, beta: &[f64]) -> Result<Vec<f64>> {
        let p = self.problem;
        let eta = self.config.eta;
        let alpha = self.config.ct.alpha;
        let g = p.grad(beta);
        match self.config.kind {
            FlowKind::Gf => return Ok(scale(&g, -1.0)),
            FlowKind::Rgf => return Ok(scale(&g, -1.0 / (1.0 - self.config.ct.mu))),
            FlowKind::Hbf if alpha > 3 => return flow_rhs(p, beta, self.k, self.config),
            FlowKind::Hbf => {}
        }
        let c = self.coef;
        let mut out = scale(&g, -c.gradient);
        if alpha >= 2 {
            let hg = p.hvp(beta, &g);
            axpy(&mut out, -eta * c.curvature, &hg);
            if alpha >= 3 {
                let w1 = p.hvp(beta, &hg);
                let mut w2 = w1.clone();
                axpy(&mut w2, 1.0, &p.t3(beta, &g, &g));
                let e2 = eta * eta;
                axpy(&mut out, -e2 * c.mixed, &w1);
                axpy(&mut out, -e2 * (c.mixed + c.third), &w2);
            }
        }
        Ok(out)
    }
}

/// Advances `beta` by `n` fixed steps of size `h`.
pub fn integrate<F>(mut rhs: F, beta: &mut [f64], h: f64, n: usize, integrator: Integrator) -> Result<()>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    for _ in 0..n {
        step(&mut rhs, beta, h, integrator)?;
    }
    Ok(())
}

/// One fixed step of the integrator.
pub fn step<F>(rhs: &mut F, beta: &mut [f64], h: f64, integrator: Integrator) -> Result<()>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    match integrator {
        Integrator::Euler => {
            let f = rhs(beta)?;
            axpy(beta, h, &f);
        }
        Integrator::Rk4 => {
            let k1 = rhs(beta)?;
            let mut tmp = beta.to_vec();
            axpy(&mut tmp, h / 2.0, &k1);
            let k2 = rhs(&tmp)?;
            tmp.copy_from_slice(beta);
            axpy(&mut tmp, h / 2.0, &k2);
            let k3 = rhs(&tmp)?;
            tmp.copy_from_slice(beta);
            axpy(&mut tmp, h, &k3);
            let k4 = rhs(&tmp)?;
            for i in 0..beta.len() {
                beta[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
    }
    if !all_finite(beta) {
        return Err(Error::NonFinite { k: 0 });
    }
    Ok(())
}

fn advance(problem: &dyn Problem, state: &FlowState, config: &FlowConfig, coef: Coefficients) -> Result<FlowState> {
    let field = SegmentField::new(problem, config, state.k, coef);
    let mut beta = state.beta.clone();
    let h = config.eta / config.substeps as f64;
    integrate(|b| field.eval(b), &mut beta, h, config.substeps, config.integrator)
        .map_err(|e| match e {
            Error::NonFinite { .. } => Error::NonFinite { k: state.k },
            other => other,
        })?;
    Ok(FlowState {
        beta,
        k: state.k + 1,
        t: (state.k + 1) as f64 * config.eta,
    })
}

/// Integrates segment `k` from `t_k` to `t_{k+1}` with `k` frozen.
pub fn integrate_segment(problem: &dyn Problem, state: &FlowState, config: &FlowConfig) -> Result<FlowState> {
    config.validate()?;
    check_len("beta", problem.dim(), state.beta.len())?;
    let coef = Coefficients::for_mode(state.k, config.mu(), config.ct.mode);
    advance(problem, state, config, coef)
}

/// States at every substep node, for analyses that need more than the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOutput {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
}

/// Flow trajectory sampled at `t_0, …, t_n`.
pub fn run_flow(problem: &dyn Problem, beta0: &[f64], config: &FlowConfig, n: usize) -> Result<Trajectory> {
    run(problem, beta0, config, n, false).map(|(t, _)| t)
}

/// Like [`run_flow`], also returning every substep state.
pub fn run_flow_dense(
    problem: &dyn Problem,
    beta0: &[f64],
    config: &FlowConfig,
    n: usize,
) -> Result<(Trajectory, DenseOutput)> {
    run(problem, beta0, config, n, true).map(|(t, d)| (t, d.expect("dense output requested")))
}

fn run(
    problem: &dyn Problem,
    beta0: &[f64],
    config: &FlowConfig,
    n: usize,
    dense: bool,
) -> Result<(Trajectory, Option<DenseOutput>)> {
    config.validate()?;
    check_len("beta0", problem.dim(), beta0.len())?;
    let mut traj = Trajectory::new(config.eta, beta0.to_vec(), config.label());
    let mut dense_out = dense.then(|| DenseOutput {
        times: vec![0.0],
        points: vec![beta0.to_vec()],
    });
    let mut schedule = CoefficientSchedule::new(config.mu());
    let asym = Coefficients::asymptotic(config.mu());
    let h = config.eta / config.substeps as f64;
    let mut beta = beta0.to_vec();
    for k in 0..n {
        let finite = schedule.next().expect("schedule is infinite");
        let coef = match config.ct.mode {
            CtMode::FiniteK => finite,
            CtMode::Asymptotic => asym,
        };
        let field = SegmentField::new(problem, config, k, coef);
        for s in 0..config.substeps {
            step(&mut |b: &[f64]| field.eval(b), &mut beta, h, config.integrator)
                .map_err(|e| match e {
                    Error::NonFinite { .. } => Error::NonFinite { k },
                    other => other,
                })?;
            if let Some(d) = dense_out.as_mut() {
                d.times.push(k as f64 * config.eta + (s + 1) as f64 * h);
                d.points.push(beta.clone());
            }
        }
        guard(&beta, k + 1, config.divergence_bound)?;
        traj.push(beta.clone());
    }
    Ok((traj, dense_out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{QuadraticProblem, TwoDModel};

    #[test]
    fn euler_single_substep_on_scalar_gf() {
        let q = QuadraticProblem::diagonal(&[1.0]);
        let cfg = FlowConfig::gf(0.1).with_integrator(Integrator::Euler, 1);
        let t = run_flow(&q, &[1.0], &cfg, 3).unwrap();
        let mut expect = 1.0;
        for p in &t.points[1..] {
            expect *= 1.0 - 0.1;
            assert!((p[0] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn hbf_order_one_is_scaled_gradient() {
        let p = TwoDModel::new(1.0, 0.6);
        let b = [2.8, 3.5];
        let mu: f64 = 0.7;
        let cfg = FlowConfig::hbf(1, mu, 0.01);
        for k in [0usize, 3, 40] {
            let rhs = flow_rhs(&p, &b, k, &cfg).unwrap();
            let c = (1.0 - mu.powi(k as i32 + 1)) / (1.0 - mu);
            let g = p.grad(&b);
            assert!((rhs[0] + c * g[0]).abs() < 1e-12 * g[0].abs() * c);
        }
        let asym = cfg.clone().with_mode(CtMode::Asymptotic);
        let rgf = FlowConfig::rgf(mu, 0.01);
        assert_eq!(flow_rhs(&p, &b, 5, &asym).unwrap(), flow_rhs(&p, &b, 5, &rgf).unwrap());
    }

    #[test]
    fn segment_field_matches_flow_rhs() {
        let p = TwoDModel::new(1.0, 0.6);
        let b = [1.3, -0.4];
        for mode in [CtMode::FiniteK, CtMode::Asymptotic] {
            let cfg = FlowConfig::hbf(3, 0.6, 0.02).with_mode(mode);
            for k in [0usize, 1, 7] {
                let coef = Coefficients::for_mode(k, 0.6, mode);
                let fast = SegmentField::new(&p, &cfg, k, coef).eval(&b).unwrap();
                let slow = flow_rhs(&p, &b, k, &cfg).unwrap();
                for (a, s) in fast.iter().zip(&slow) {
                    assert!((a - s).abs() <= 1e-12 * s.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn zero_rhs_leaves_state_unchanged() {
        let q = QuadraticProblem::diagonal(&[2.0, 1.0]);
        let cfg = FlowConfig::hbf(3, 0.5, 0.1).with_integrator(Integrator::Rk4, 4);
        let s = integrate_segment(&q, &FlowState::start(vec![0.0, 0.0]), &cfg).unwrap();
        assert_eq!(s.beta, vec![0.0, 0.0]);
        assert_eq!(s.k, 1);
    }

    #[test]
    fn zero_segments_gives_start_only() {
        let q = QuadraticProblem::diagonal(&[2.0]);
        let t = run_flow(&q, &[1.0], &FlowConfig::gf(0.1), 0).unwrap();
        assert_eq!(t.points, vec![vec![1.0]]);
    }

    #[test]
    fn segment_by_segment_equals_full_run() {
        let p = TwoDModel::new(1.0, 0.6);
        let cfg = FlowConfig::hbf(3, 0.7, 5e-3).with_integrator(Integrator::Rk4, 5);
        let full = run_flow(&p, &[2.8, 3.5], &cfg, 6).unwrap();
        let mut s = FlowState::start(vec![2.8, 3.5]);
        for k in 0..6 {
            s = integrate_segment(&p, &s, &cfg).unwrap();
            let d = crate::linalg::distance(&s.beta, &full.points[k + 1]);
            assert!(d < 1e-13, "segment {k}: {d}");
        }
    }

    #[test]
    fn dense_output_has_every_substep() {
        let q = QuadraticProblem::diagonal(&[1.0]);
        let cfg = FlowConfig::gf(0.1).with_integrator(Integrator::Euler, 4);
        let (grid, dense) = run_flow_dense(&q, &[1.0], &cfg, 3).unwrap();
        assert_eq!(dense.points.len(), 13);
        assert_eq!(dense.points[12], grid.points[3]);
    }
}
