//! Diagonal linear networks `w = w₊⊙w₊ − w₋⊙w₋`: correction fields of the
//! order-2 heavy-ball flow, the evolution of `κ = w₊⊙w₋`, the hyperbolic
//! potential and its constrained minimizer.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::discrete::{hb_step, DiscreteState};
use crate::error::{check_len, check_mu, Error, Result};
use crate::flows::{step, Integrator};
use crate::linalg::{distance, norm};
use crate::problems::{DiagonalNet, Problem, RegressionData};

#[derive(Debug, Clone)]
pub struct DlnModel {
    pub w_plus: Vec<f64>,
    pub w_minus: Vec<f64>,
    pub data: RegressionData,
}

impl DlnModel {
    pub fn new(w_plus: Vec<f64>, w_minus: Vec<f64>, data: RegressionData) -> Result<Self> {
        check_len("w_plus", data.d(), w_plus.len())?;
        check_len("w_minus", data.d(), w_minus.len())?;
        Ok(Self {
            w_plus,
            w_minus,
            data,
        })
    }

    pub fn effective(&self) -> Vec<f64> {
        effective(&self.w_plus, &self.w_minus)
    }

    pub fn residual(&self) -> DVector<f64> {
        self.data.apply(&self.effective()) - &self.data.y
    }

    pub fn loss(&self) -> f64 {
        self.residual().norm_squared() / (2.0 * self.data.n() as f64)
    }

    pub fn kappa(&self) -> Vec<f64> {
        self.w_plus.iter().zip(&self.w_minus).map(|(a, b)| a * b).collect()
    }

    /// `w₊⊙w₊ + w₋⊙w₋`.
    pub fn magnitude(&self) -> Vec<f64> {
        self.w_plus.iter().zip(&self.w_minus).map(|(a, b)| a * a + b * b).collect()
    }
}

fn effective(p: &[f64], m: &[f64]) -> Vec<f64> {
    p.iter().zip(m).map(|(a, b)| a * a - b * b).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DlnGrads {
    pub w: Vec<f64>,
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
}

/// `∇_w L = Xᵀr/n` and `∇_{w±}L = ±2 w± ⊙ ∇_w L`.
pub fn dln_grads(model: &DlnModel) -> DlnGrads {
    let n = model.data.n() as f64;
    let gw: Vec<f64> = (model.data.apply_t(&model.residual()) / n).as_slice().to_vec();
    let plus = model.w_plus.iter().zip(&gw).map(|(a, g)| 2.0 * a * g).collect();
    let minus = model.w_minus.iter().zip(&gw).map(|(a, g)| -2.0 * a * g).collect();
    DlnGrads { w: gw, plus, minus }
}

fn zero_components(p: &[f64], m: &[f64]) -> Vec<usize> {
    p.iter()
        .zip(m)
        .enumerate()
        .filter(|(_, (a, b))| **a == 0.0 || **b == 0.0)
        .map(|(j, _)| j)
        .collect()
}

fn ratios_unchecked(data: &RegressionData, p: &[f64], m: &[f64], r: &DVector<f64>, mu: f64) -> (Vec<f64>, Vec<f64>) {
    let n = data.n() as f64;
    let v = data.apply_t(r);
    let coef = 2.0 * (1.0 + mu) / ((1.0 - mu).powi(3) * n * n);
    let cross = |w: &[f64]| -> DVector<f64> {
        let weighted: Vec<f64> = w.iter().zip(v.iter()).map(|(wi, vi)| wi * wi * vi).collect();
        data.apply_t(&data.apply(&weighted))
    };
    let cp = cross(p);
    let cm = cross(m);
    let plus = (0..p.len()).map(|j| coef * (v[j] * v[j] + 2.0 * cp[j])).collect();
    let minus = (0..p.len()).map(|j| coef * (v[j] * v[j] - 2.0 * cm[j])).collect();
    (plus, minus)
}

/// Componentwise `γ^{w±}/w±` for the order-2 correction of each block,
/// `2(1+μ)/((1−μ)³n²) [(Xᵀr)² ± 2 XᵀX((w±⊙w±)⊙Xᵀr)]`.
pub fn gamma_w_over_w(model: &DlnModel, mu: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    check_mu(mu)?;
    let zeros = zero_components(&model.w_plus, &model.w_minus);
    if !zeros.is_empty() {
        return Err(Error::SingularComponents(zeros));
    }
    Ok(ratios_unchecked(&model.data, &model.w_plus, &model.w_minus, &model.residual(), mu))
}

// ---------------------------------------------------------------------------
// Data and initialization

#[derive(Debug, Clone)]
pub struct SparseInstance {
    pub data: RegressionData,
    pub w_star: Vec<f64>,
}

/// Gaussian design, `nonzeros` entries of `w*` set to ±1, `y = Xw*`.
pub fn sparse_regression(n: usize, d: usize, nonzeros: usize, seed: u64) -> Result<SparseInstance> {
    if nonzeros > d || n == 0 || d == 0 {
        return Err(Error::Invalid(format!("bad sparse instance shape n={n}, d={d}, nonzeros={nonzeros}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut w_star = vec![0.0; d];
    for j in rand::seq::index::sample(&mut rng, d, nonzeros) {
        w_star[j] = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    }
    let y = &x * DVector::from_column_slice(&w_star);
    Ok(SparseInstance {
        data: RegressionData::new(x, y)?,
        w_star,
    })
}

/// `w₊ = ϑ s 1`, `w₋ = s/ϑ 1`, so that `κ(0) = s² 1`. `ϑ = 1` is the symmetric start.
pub fn scaled_init(s: f64, theta: f64, d: usize) -> (Vec<f64>, Vec<f64>) {
    (vec![theta * s; d], vec![s / theta; d])
}

// ---------------------------------------------------------------------------
// Flow with running integrals

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DlnFlowConfig {
    pub mu: f64,
    pub eta: f64,
    /// Integrator steps per segment of length `η`; must be even.
    pub substeps: usize,
    pub integrator: Integrator,
    /// Include the `η γ` correction; without it the flow is the rescaled GF.
    pub correction: bool,
    pub max_time: f64,
    /// Stop once `L ≤ loss_rtol · L(0)`.
    pub loss_rtol: f64,
    /// Keep a snapshot every this many segments.
    pub record_every: usize,
}

impl Default for DlnFlowConfig {
    fn default() -> Self {
        Self {
            mu: 0.0,
            eta: 1e-2,
            substeps: 10,
            integrator: Integrator::Rk4,
            correction: true,
            max_time: 1e3,
            loss_rtol: 1e-10,
            record_every: 100,
        }
    }
}

impl DlnFlowConfig {
    pub fn validate(&self) -> Result<()> {
        check_mu(self.mu)?;
        if !(self.eta > 0.0) {
            return Err(Error::Invalid("eta must be positive".into()));
        }
        if self.substeps < 2 || !self.substeps.is_multiple_of(2) {
            return Err(Error::Invalid(format!("substeps must be even and ≥ 2, got {}", self.substeps)));
        }
        if self.record_every == 0 {
            return Err(Error::Invalid("record_every must be ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DlnSnapshot {
    pub t: f64,
    pub w_plus: Vec<f64>,
    pub w_minus: Vec<f64>,
    pub loss: f64,
    /// `∫ (γ⁺/w₊ + γ⁻/w₋)`, trapezoid on the substep grid.
    pub eps: Vec<f64>,
    /// Richardson estimate of the trapezoid error in `eps`.
    pub eps_error: Vec<f64>,
    /// `∫ (γ⁺/w₊ − γ⁻/w₋)`.
    pub split: Vec<f64>,
    /// `∫ (∂_w L)²`.
    pub grad_sq: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DlnRun {
    pub data: RegressionData,
    pub config: DlnFlowConfig,
    pub kappa0: Vec<f64>,
    pub initial_loss: f64,
    pub snapshots: Vec<DlnSnapshot>,
    pub converged: bool,
}

impl DlnRun {
    pub fn last(&self) -> &DlnSnapshot {
        self.snapshots.last().expect("runs always record the start")
    }

    pub fn final_model(&self) -> DlnModel {
        let s = self.last();
        DlnModel {
            w_plus: s.w_plus.clone(),
            w_minus: s.w_minus.clone(),
            data: self.data.clone(),
        }
    }

    pub fn final_w(&self) -> Vec<f64> {
        effective(&self.last().w_plus, &self.last().w_minus)
    }
}

struct Integrands {
    sum: Vec<f64>,
    split: Vec<f64>,
    grad_sq: Vec<f64>,
}

struct Accumulator {
    fine: [Vec<f64>; 3],
    coarse: Vec<f64>,
    last: Integrands,
    last_even: Vec<f64>,
    nodes: usize,
    h: f64,
}

impl Accumulator {
    fn new(first: Integrands, h: f64) -> Self {
        let d = first.sum.len();
        Self {
            fine: [vec![0.0; d], vec![0.0; d], vec![0.0; d]],
            coarse: vec![0.0; d],
            last_even: first.sum.clone(),
            last: first,
            nodes: 0,
            h,
        }
    }

    fn push(&mut self, cur: Integrands) {
        let h = self.h;
        let pairs = [(&self.last.sum, &cur.sum), (&self.last.split, &cur.split), (&self.last.grad_sq, &cur.grad_sq)];
        for (acc, (a, b)) in self.fine.iter_mut().zip(pairs) {
            for j in 0..acc.len() {
                acc[j] += 0.5 * h * (a[j] + b[j]);
            }
        }
        self.nodes += 1;
        if self.nodes.is_multiple_of(2) {
            for j in 0..self.coarse.len() {
                self.coarse[j] += h * (self.last_even[j] + cur.sum[j]);
            }
            self.last_even = cur.sum.clone();
        }
        self.last = cur;
    }
}

fn integrands(data: &RegressionData, p: &[f64], m: &[f64], cfg: &DlnFlowConfig) -> (Integrands, DVector<f64>) {
    let r = data.apply(&effective(p, m)) - &data.y;
    let n = data.n() as f64;
    let gw = data.apply_t(&r) / n;
    let grad_sq = gw.iter().map(|g| g * g).collect();
    let d = p.len();
    let (sum, split) = if cfg.correction {
        let (a, b) = ratios_unchecked(data, p, m, &r, cfg.mu);
        (
            (0..d).map(|j| a[j] + b[j]).collect(),
            (0..d).map(|j| a[j] - b[j]).collect(),
        )
    } else {
        (vec![0.0; d], vec![0.0; d])
    };
    (Integrands { sum, split, grad_sq }, r)
}

/// Integrates `ẇ± = ∓2w±⊙∇_wL/(1−μ) − η γ^{w±}` with the order-2 correction
/// from [`gamma_w_over_w`], accumulating the integrals needed for `κ`, `Φ`
/// and `φ` on the substep grid.
pub fn run_dln_flow(
    data: &RegressionData,
    w_plus0: &[f64],
    w_minus0: &[f64],
    cfg: &DlnFlowConfig,
) -> Result<DlnRun> {
    cfg.validate()?;
    let d = data.d();
    check_len("w_plus", d, w_plus0.len())?;
    check_len("w_minus", d, w_minus0.len())?;
    let zeros = zero_components(w_plus0, w_minus0);
    if !zeros.is_empty() {
        return Err(Error::SingularComponents(zeros));
    }
    let h = cfg.eta / cfg.substeps as f64;
    let scale_grad = 2.0 / (1.0 - cfg.mu);
    let rhs = |b: &[f64]| -> Result<Vec<f64>> {
        let (p, m) = b.split_at(d);
        let r = data.apply(&effective(p, m)) - &data.y;
        let gw = data.apply_t(&r) / data.n() as f64;
        let mut out = vec![0.0; 2 * d];
        for j in 0..d {
            out[j] = -scale_grad * p[j] * gw[j];
            out[d + j] = scale_grad * m[j] * gw[j];
        }
        if cfg.correction {
            let (a, c) = ratios_unchecked(data, p, m, &r, cfg.mu);
            for j in 0..d {
                out[j] -= cfg.eta * a[j] * p[j];
                out[d + j] -= cfg.eta * c[j] * m[j];
            }
        }
        Ok(out)
    };

    let mut beta: Vec<f64> = w_plus0.iter().chain(w_minus0).cloned().collect();
    let (first, r0) = integrands(data, w_plus0, w_minus0, cfg);
    let initial_loss = r0.norm_squared() / (2.0 * data.n() as f64);
    let mut acc = Accumulator::new(first, h);
    let snapshot = |t: f64, beta: &[f64], loss: f64, acc: &Accumulator| {
        let (p, m) = beta.split_at(d);
        DlnSnapshot {
            t,
            w_plus: p.to_vec(),
            w_minus: m.to_vec(),
            loss,
            eps: acc.fine[0].clone(),
            eps_error: acc.fine[0]
                .iter()
                .zip(&acc.coarse)
                .map(|(f, c)| (f - c).abs() / 3.0)
                .collect(),
            split: acc.fine[1].clone(),
            grad_sq: acc.fine[2].clone(),
        }
    };
    let mut snapshots = vec![snapshot(0.0, &beta, initial_loss, &acc)];
    let segments = (cfg.max_time / cfg.eta).ceil() as usize;
    let mut converged = initial_loss == 0.0;
    let mut rhs = rhs;
    for k in 0..segments {
        if converged {
            break;
        }
        let mut loss = 0.0;
        for _ in 0..cfg.substeps {
            step(&mut rhs, &mut beta, h, cfg.integrator).map_err(|e| match e {
                Error::NonFinite { .. } => Error::NonFinite { k },
                other => other,
            })?;
            let (p, m) = beta.split_at(d);
            let crossed: Vec<usize> = p
                .iter()
                .zip(m)
                .enumerate()
                .filter(|(_, (a, b))| **a <= 0.0 || **b <= 0.0)
                .map(|(j, _)| j)
                .collect();
            if !crossed.is_empty() {
                return Err(Error::SingularComponents(crossed));
            }
            let (cur, r) = integrands(data, p, m, cfg);
            loss = r.norm_squared() / (2.0 * data.n() as f64);
            acc.push(cur);
        }
        let t = (k + 1) as f64 * cfg.eta;
        converged = loss <= cfg.loss_rtol * initial_loss;
        if converged || (k + 1) % cfg.record_every == 0 || k + 1 == segments {
            snapshots.push(snapshot(t, &beta, loss, &acc));
        }
    }
    Ok(DlnRun {
        data: data.clone(),
        config: cfg.clone(),
        kappa0: w_plus0.iter().zip(w_minus0).map(|(a, b)| a * b).collect(),
        initial_loss,
        snapshots,
        converged,
    })
}

// ---------------------------------------------------------------------------
// κ, Φ, q, φ

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaSeries {
    pub t: Vec<f64>,
    /// `κ(0) ⊙ exp(−η ε(t))`.
    pub formula: Vec<Vec<f64>>,
    /// `w₊(t) ⊙ w₋(t)`.
    pub product: Vec<Vec<f64>>,
    /// Trapezoid error estimate propagated to `κ`.
    pub error_estimate: Vec<Vec<f64>>,
}

pub fn kappa_trajectory(run: &DlnRun) -> Result<KappaSeries> {
    let eta = run.config.eta;
    let mut out = KappaSeries {
        t: Vec::new(),
        formula: Vec::new(),
        product: Vec::new(),
        error_estimate: Vec::new(),
    };
    for s in &run.snapshots {
        let zeros = zero_components(&s.w_plus, &s.w_minus);
        if !zeros.is_empty() {
            return Err(Error::SingularComponents(zeros));
        }
        let formula: Vec<f64> = run.kappa0.iter().zip(&s.eps).map(|(k0, e)| k0 * (-eta * e).exp()).collect();
        out.error_estimate
            .push(formula.iter().zip(&s.eps_error).map(|(k, e)| k * eta * e).collect());
        out.formula.push(formula);
        out.product.push(s.w_plus.iter().zip(&s.w_minus).map(|(a, b)| a * b).collect());
        out.t.push(s.t);
    }
    Ok(out)
}

/// `q = √(w² + 4κ(0)²) − 2κ(0)`, componentwise and nonnegative.
pub fn q_of(w: &[f64], kappa0: &[f64]) -> Vec<f64> {
    w.iter()
        .zip(kappa0)
        .map(|(wi, k)| {
            let s = (wi * wi + 4.0 * k * k).sqrt();
            // difference form avoids cancellation for |w| ≪ κ
            wi * wi / (s + 2.0 * k)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corollary {
    /// `Φ = 4 ∫ (∂_w L)²`.
    pub big_phi: Vec<f64>,
    pub q: Vec<f64>,
    /// `κ(0) exp[η(1+μ)/(1−μ)² (−Φ/(1−μ) + XᵀXq/n)]`.
    pub kappa_inf: Vec<f64>,
}

fn gram(data: &RegressionData, v: &[f64]) -> Vec<f64> {
    let n = data.n() as f64;
    (data.apply_t(&data.apply(v)) / n).as_slice().to_vec()
}

pub fn corollary_quantities(run: &DlnRun) -> Result<Corollary> {
    if !run.converged {
        return Err(Error::NotConverged(format!(
            "final loss {:e} (initial {:e})",
            run.last().loss,
            run.initial_loss
        )));
    }
    let mu = run.config.mu;
    let eta = run.config.eta;
    let big_phi: Vec<f64> = run.last().grad_sq.iter().map(|g| 4.0 * g).collect();
    let q = q_of(&run.final_w(), &run.kappa0);
    let xq = gram(&run.data, &q);
    let c = eta * (1.0 + mu) / (1.0 - mu).powi(2);
    let kappa_inf = (0..q.len())
        .map(|j| run.kappa0[j] * (c * (-big_phi[j] / (1.0 - mu) + xq[j])).exp())
        .collect();
    Ok(Corollary { big_phi, q, kappa_inf })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiCorrection {
    /// `(η/4) ∫ (γ⁺/w₊ − γ⁻/w₋)`.
    pub integral: Vec<f64>,
    /// `−η(1+μ)/(4(1−μ)²n) (XᵀXw)`.
    pub closed_form: Vec<f64>,
    /// `η(1+μ)/(4(1−μ)²) ∂_w L(0)`; equals `closed_form` when `Xw = y`.
    pub closed_form_interpolating: Vec<f64>,
}

pub fn phi_correction(run: &DlnRun) -> Result<PhiCorrection> {
    let zeros = zero_components(&run.last().w_plus, &run.last().w_minus);
    if !zeros.is_empty() {
        return Err(Error::SingularComponents(zeros));
    }
    let eta = run.config.eta;
    let integral = run.last().split.iter().map(|s| eta / 4.0 * s).collect();
    Ok(PhiCorrection {
        integral,
        closed_form: phi_closed_form(&run.data, &run.final_w(), eta, run.config.mu),
        closed_form_interpolating: phi_closed_form_interpolating(&run.data, eta, run.config.mu),
    })
}

pub fn phi_closed_form(data: &RegressionData, w: &[f64], eta: f64, mu: f64) -> Vec<f64> {
    let c = eta * (1.0 + mu) / (4.0 * (1.0 - mu).powi(2));
    gram(data, w).iter().map(|v| -c * v).collect()
}

pub fn phi_closed_form_interpolating(data: &RegressionData, eta: f64, mu: f64) -> Vec<f64> {
    let c = eta * (1.0 + mu) / (4.0 * (1.0 - mu).powi(2));
    let n = data.n() as f64;
    let grad0 = data.apply_t(&(-&data.y)) / n;
    grad0.iter().map(|g| c * g).collect()
}

// ---------------------------------------------------------------------------
// Potential

#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    pub total: f64,
    pub components: Vec<f64>,
}

fn check_kappa(kappa: &[f64]) -> Result<()> {
    let bad: Vec<usize> = kappa.iter().enumerate().filter(|(_, k)| !(**k > 0.0)).map(|(j, _)| j).collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::Invalid(format!("kappa must be positive; offending indices {bad:?}")))
    }
}

/// `Λ_j = ¼[w_j asinh(w_j/2κ_j) − √(4κ_j² + w_j²) + 2κ_j]`.
pub fn potential_gf(w: &[f64], kappa: &[f64]) -> Result<Potential> {
    check_len("kappa", w.len(), kappa.len())?;
    check_kappa(kappa)?;
    let components: Vec<f64> = w
        .iter()
        .zip(kappa)
        .map(|(wi, k)| {
            let s = (4.0 * k * k + wi * wi).sqrt();
            // −√(4κ²+w²) + 2κ = −w²/(√(4κ²+w²) + 2κ), stable for small w
            0.25 * (wi * (wi / (2.0 * k)).asinh() - wi * wi / (s + 2.0 * k))
        })
        .collect();
    Ok(Potential {
        total: components.iter().sum(),
        components,
    })
}

/// `Λ(w) = Λ^GF(w; κ) + φ·w`.
pub fn potential_value(w: &[f64], kappa: &[f64], phi: &[f64]) -> Result<f64> {
    check_len("phi", w.len(), phi.len())?;
    Ok(potential_gf(w, kappa)?.total + crate::linalg::dot(phi, w))
}

/// `∇Λ = ¼ asinh(w/2κ) + φ`.
pub fn potential_grad(w: &[f64], kappa: &[f64], phi: &[f64]) -> Result<Vec<f64>> {
    check_len("kappa", w.len(), kappa.len())?;
    check_len("phi", w.len(), phi.len())?;
    check_kappa(kappa)?;
    Ok(w.iter()
        .zip(kappa)
        .zip(phi)
        .map(|((wi, k), p)| 0.25 * (wi / (2.0 * k)).asinh() + p)
        .collect())
}

fn check_design(x: &DMatrix<f64>) -> Result<()> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::Degenerate("design matrix has no rows".into()));
    }
    if let Some(i) = x.row_iter().position(|r| r.iter().all(|v| *v == 0.0)) {
        return Err(Error::Degenerate(format!("row {i} is zero")));
    }
    Ok(())
}

/// Relative size of `∇Λ(w; κ)` outside the row space of `X`:
/// `‖g − Xᵀc*‖ / ‖g‖` with `c*` the least-squares coefficients.
pub fn kkt_residual(w: &[f64], kappa: &[f64], phi: &[f64], x: &DMatrix<f64>) -> Result<f64> {
    check_design(x)?;
    check_len("w", x.ncols(), w.len())?;
    let g = DVector::from_vec(potential_grad(w, kappa, phi)?);
    let gn = g.norm();
    if gn == 0.0 {
        return Ok(0.0);
    }
    let xt = x.transpose();
    let svd = xt.clone().svd(true, true);
    let c = svd
        .solve(&g, 1e-12 * svd.singular_values.max())
        .map_err(|e| Error::Degenerate(e.to_string()))?;
    Ok((g - xt * c).norm() / gn)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iter: usize,
    pub step_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            step_tol: 1e-10,
        }
    }
}

/// `argmin_w Λ(w; κ) + φ·w` subject to `Xw = y`, by Newton steps projected
/// onto the null space of `X` with backtracking line search.
pub fn solve_constrained_potential(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    kappa: &[f64],
    phi: &[f64],
    opts: SolverOptions,
) -> Result<Vec<f64>> {
    check_design(x)?;
    check_len("y", x.nrows(), y.len())?;
    check_len("kappa", x.ncols(), kappa.len())?;
    check_len("phi", x.ncols(), phi.len())?;
    check_kappa(kappa)?;
    let (n, d) = x.shape();
    if n > d {
        return Err(Error::Degenerate(format!("need n ≤ d, got n={n}, d={d}")));
    }
    let sv = x.clone().svd(false, false).singular_values;
    if sv.min() <= 1e-12 * sv.max() {
        return Err(Error::Degenerate("X does not have full row rank".into()));
    }
    let xxt = (x * x.transpose())
        .cholesky()
        .ok_or_else(|| Error::Degenerate("X Xᵀ is not positive definite".into()))?;
    let project = |w: &mut DVector<f64>| {
        let fix = x.transpose() * xxt.solve(&(x * &*w - y));
        *w -= fix;
    };
    let mut w = x.transpose() * xxt.solve(y);
    let value = |w: &DVector<f64>| potential_value(w.as_slice(), kappa, phi);
    let mut last_step = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let g = DVector::from_vec(potential_grad(w.as_slice(), kappa, phi)?);
        let dinv = DVector::from_iterator(d, w.iter().zip(kappa).map(|(wi, k)| 4.0 * (wi * wi + 4.0 * k * k).sqrt()));
        let xd = DMatrix::from_fn(n, d, |i, j| x[(i, j)] * dinv[j]);
        let schur = (&xd * x.transpose())
            .cholesky()
            .ok_or_else(|| Error::Degenerate("reduced system is singular".into()))?;
        let lambda = schur.solve(&(&xd * &g));
        let dir = -(g.clone() - x.transpose() * lambda).component_mul(&dinv);
        let slope = g.dot(&dir);
        let f0 = value(&w)?;
        let mut t = 1.0;
        loop {
            let trial = &w + &dir * t;
            let ft = value(&trial)?;
            if ft <= f0 + 1e-4 * t * slope || slope.abs() <= 1e-13 * (1.0 + f0.abs()) || t < 1e-12 {
                break;
            }
            t *= 0.5;
        }
        w += &dir * t;
        project(&mut w);
        last_step = t * dir.norm();
        if last_step < opts.step_tol {
            return Ok(w.as_slice().to_vec());
        }
    }
    Err(Error::NotConverged(format!(
        "constrained potential: last step {last_step:e} after {} iterations",
        opts.max_iter
    )))
}

// ---------------------------------------------------------------------------
// Reports and discrete training

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub kappa0: Vec<f64>,
    /// `κ(0) exp(−η ε(∞))`.
    pub kappa_inf: Vec<f64>,
    pub kappa_inf_corollary: Vec<f64>,
    #[serde(rename = "Phi")]
    pub big_phi: Vec<f64>,
    pub q: Vec<f64>,
    pub phi: Vec<f64>,
    pub phi_closed_form: Vec<f64>,
    pub kkt_residual: f64,
    pub w_inf: Vec<f64>,
    pub generalization: f64,
    pub final_loss: f64,
}

pub fn bias_report(run: &DlnRun, w_star: &[f64]) -> Result<BiasReport> {
    let cor = corollary_quantities(run)?;
    let kappa = kappa_trajectory(run)?;
    let kappa_inf = kappa.formula.last().expect("non-empty").clone();
    let phi = phi_correction(run)?;
    let w_inf = run.final_w();
    let kkt = kkt_residual(&w_inf, &kappa_inf, &phi.integral, &run.data.x)?;
    Ok(BiasReport {
        kappa0: run.kappa0.clone(),
        kappa_inf,
        kappa_inf_corollary: cor.kappa_inf,
        big_phi: cor.big_phi,
        q: cor.q,
        phi: phi.integral,
        phi_closed_form: phi.closed_form,
        kkt_residual: kkt,
        generalization: distance(&w_inf, w_star),
        w_inf,
        final_loss: run.last().loss,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteFit {
    pub w: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub final_loss: f64,
}

/// Runs GD (`μ = 0`) or HB on the network until `L ≤ loss_rtol · L(0)`.
pub fn train_discrete(
    data: &RegressionData,
    w_plus0: &[f64],
    w_minus0: &[f64],
    eta: f64,
    mu: f64,
    max_iter: usize,
    loss_rtol: f64,
) -> Result<DiscreteFit> {
    let net = DiagonalNet::new(data.clone());
    let beta0: Vec<f64> = w_plus0.iter().chain(w_minus0).cloned().collect();
    check_len("beta0", net.dim(), beta0.len())?;
    let l0 = net.value(&beta0);
    let mut state = DiscreteState::new(beta0, eta, mu)?;
    let mut loss = l0;
    let mut converged = loss <= loss_rtol * l0;
    while !converged && state.k < max_iter {
        state = hb_step(&state, &net)?;
        loss = net.value(&state.beta);
        if !loss.is_finite() || norm(&state.beta) > crate::discrete::DEFAULT_DIVERGENCE_BOUND {
            return Err(Error::Diverged {
                k: state.k,
                norm: norm(&state.beta),
                bound: crate::discrete::DEFAULT_DIVERGENCE_BOUND,
            });
        }
        converged = loss <= loss_rtol * l0;
    }
    Ok(DiscreteFit {
        w: net.effective(&state.beta),
        iterations: state.k,
        converged,
        final_loss: loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_sample() -> DlnModel {
        let data = RegressionData::new(DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), DVector::from_vec(vec![1.0])).unwrap();
        DlnModel::new(vec![1.0, 1.0], vec![0.5, 0.5], data).unwrap()
    }

    #[test]
    fn one_sample_gradients() {
        let g = dln_grads(&one_sample());
        // w = (0.75, 0.75), r = 0.75 − 1 = −0.25, n = 1
        assert_eq!(g.w, vec![-0.25, 0.0]);
        assert_eq!(g.plus, vec![-0.5, 0.0]);
        assert_eq!(g.minus, vec![0.25, 0.0]);
    }

    #[test]
    fn zero_predictor_has_zero_gradients() {
        let data = RegressionData::new(DMatrix::from_element(2, 3, 0.7), DVector::zeros(2)).unwrap();
        let m = DlnModel::new(vec![0.2; 3], vec![0.2; 3], data).unwrap();
        let g = dln_grads(&m);
        assert!(g.w.iter().chain(&g.plus).chain(&g.minus).all(|v| *v == 0.0));
        let (a, b) = gamma_w_over_w(&m, 0.5).unwrap();
        assert!(a.iter().chain(&b).all(|v| *v == 0.0));
    }

    #[test]
    fn singular_components_listed() {
        let mut m = one_sample();
        m.w_minus[1] = 0.0;
        match gamma_w_over_w(&m, 0.5) {
            Err(Error::SingularComponents(ix)) => assert_eq!(ix, vec![1]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn potential_values() {
        let p = potential_gf(&[0.0, 0.0], &[0.5, 2.0]).unwrap();
        assert_eq!(p.total, 0.0);
        let v = potential_gf(&[1.0], &[0.5]).unwrap().total;
        let direct = 0.25 * (1.0f64.asinh() - 2.0f64.sqrt() + 1.0);
        assert!((v - direct).abs() < 1e-15);
        assert!(potential_gf(&[1.0], &[0.0]).is_err());
    }

    #[test]
    fn symmetric_constrained_minimizer() {
        let x = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let y = DVector::from_vec(vec![1.0]);
        let w = solve_constrained_potential(&x, &y, &[0.3, 0.3], &[0.0, 0.0], SolverOptions::default()).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-10 && (w[1] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn kkt_trivial_cases() {
        let mut x = DMatrix::zeros(1, 3);
        x[(0, 0)] = 1.0;
        assert_eq!(kkt_residual(&[0.0; 3], &[0.1; 3], &[0.0; 3], &x).unwrap(), 0.0);
        let zero_row = DMatrix::zeros(1, 3);
        assert!(kkt_residual(&[0.0; 3], &[0.1; 3], &[0.0; 3], &zero_row).is_err());
    }

    #[test]
    fn rank_deficient_design_rejected() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        let y = DVector::from_vec(vec![1.0, 2.0]);
        let err = solve_constrained_potential(&x, &y, &[1.0; 3], &[0.0; 3], SolverOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }

    #[test]
    fn q_is_nonnegative_and_zero_at_origin() {
        let q = q_of(&[0.0, -1e-9, 3.0], &[1e-4, 0.5, 0.01]);
        assert_eq!(q[0], 0.0);
        assert!(q.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn sparse_instance_is_reproducible() {
        let a = sparse_regression(5, 8, 2, 3).unwrap();
        let b = sparse_regression(5, 8, 2, 3).unwrap();
        assert_eq!(a.data.x, b.data.x);
        assert_eq!(a.w_star.iter().filter(|v| **v != 0.0).count(), 2);
    }
}
