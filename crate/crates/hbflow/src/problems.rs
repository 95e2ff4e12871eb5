//! Objectives with contraction-based derivative oracles.
//!
//! Every problem exposes the loss, its gradient, Hessian-vector products and
//! the third-order bilinear contraction `t3(β, u, v)_j = Σ ∂_j∂_i∂_l L u_i v_l`.
//! Problems without analytic higher derivatives fall back to central
//! differences of the next lower oracle.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::linalg::{axpy, norm, norm_inf};

pub trait Problem: Send + Sync {
    fn dim(&self) -> usize;
    fn label(&self) -> &str;
    fn value(&self, beta: &[f64]) -> f64;
    fn grad(&self, beta: &[f64]) -> Vec<f64>;

    fn hvp(&self, beta: &[f64], v: &[f64]) -> Vec<f64> {
        directional_fd(|x| self.grad(x), beta, v, default_step(beta))
    }

    fn t3(&self, beta: &[f64], u: &[f64], v: &[f64]) -> Vec<f64> {
        directional_fd(|x| self.hvp(x, v), beta, u, default_step(beta))
    }
}

/// Default finite-difference step `1e-5 (1 + |β|∞)`.
pub fn default_step(beta: &[f64]) -> f64 {
    1e-5 * (1.0 + norm_inf(beta))
}

/// Central difference of `field` along `dir`, taken along the unit direction
/// with step `h` and rescaled by `|dir|`.
pub(crate) fn directional_fd<F>(field: F, beta: &[f64], dir: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let len = norm(dir);
    if len == 0.0 {
        return vec![0.0; field(beta).len()];
    }
    let mut plus = beta.to_vec();
    let mut minus = beta.to_vec();
    axpy(&mut plus, h / len, dir);
    axpy(&mut minus, -h / len, dir);
    let fp = field(&plus);
    let fm = field(&minus);
    fp.iter()
        .zip(&fm)
        .map(|(a, b)| (a - b) / (2.0 * h) * len)
        .collect()
}

pub fn eval_loss(problem: &dyn Problem, beta: &[f64]) -> Result<f64> {
    check_len("beta", problem.dim(), beta.len())?;
    Ok(problem.value(beta))
}

pub fn grad(problem: &dyn Problem, beta: &[f64]) -> Result<Vec<f64>> {
    check_len("beta", problem.dim(), beta.len())?;
    Ok(problem.grad(beta))
}

pub fn hvp(problem: &dyn Problem, beta: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    check_len("beta", problem.dim(), beta.len())?;
    check_len("direction", problem.dim(), v.len())?;
    Ok(problem.hvp(beta, v))
}

pub fn t3(problem: &dyn Problem, beta: &[f64], u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    check_len("beta", problem.dim(), beta.len())?;
    check_len("direction", problem.dim(), u.len())?;
    check_len("direction", problem.dim(), v.len())?;
    Ok(problem.t3(beta, u, v))
}

/// `H (H g)` with `g = ∇L`, `H = ∇²L`.
pub fn omega1(problem: &dyn Problem, beta: &[f64]) -> Result<Vec<f64>> {
    let g = grad(problem, beta)?;
    let hg = problem.hvp(beta, &g);
    Ok(problem.hvp(beta, &hg))
}

/// `H (H g) + T[g, g]`, the gradient of `gᵀHg` minus `H(Hg)`.
pub fn omega2(problem: &dyn Problem, beta: &[f64]) -> Result<Vec<f64>> {
    let g = grad(problem, beta)?;
    let hg = problem.hvp(beta, &g);
    let mut out = problem.hvp(beta, &hg);
    axpy(&mut out, 1.0, &problem.t3(beta, &g, &g));
    Ok(out)
}

// ---------------------------------------------------------------------------
// Finite-difference oracle

/// Which derivative the finite-difference oracle approximates.
pub enum FdKind<'a> {
    /// Gradient from loss values.
    Grad,
    /// Hessian-vector product from gradients.
    Hvp(&'a [f64]),
    /// Third-order contraction `T[u, v]` from Hessian-vector products.
    T3(&'a [f64], &'a [f64]),
    /// Jacobian of an arbitrary vector field applied to a direction.
    FieldJvp(&'a dyn Fn(&[f64]) -> Vec<f64>, &'a [f64]),
}

#[derive(Debug, Clone, PartialEq)]
pub enum FdWarning {
    /// Step is small enough that round-off dominates truncation error.
    Cancellation { step: f64, relative_step: f64 },
}

#[derive(Debug, Clone)]
pub struct FdEstimate {
    pub value: Vec<f64>,
    pub warnings: Vec<FdWarning>,
}

/// Relative steps below this lose more to cancellation than they gain.
pub const MIN_RELATIVE_STEP: f64 = 1e-8;

pub fn fd_oracle(
    problem: &dyn Problem,
    beta: &[f64],
    kind: FdKind<'_>,
    h: f64,
) -> Result<FdEstimate> {
    check_len("beta", problem.dim(), beta.len())?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Invalid(format!("finite-difference step must be positive, got {h}")));
    }
    let mut warnings = Vec::new();
    let relative_step = h / (1.0 + norm_inf(beta));
    if relative_step < MIN_RELATIVE_STEP {
        log::warn!("finite-difference step {h:e} is in the cancellation regime");
        warnings.push(FdWarning::Cancellation {
            step: h,
            relative_step,
        });
    }
    let d = problem.dim();
    let value = match kind {
        FdKind::Grad => (0..d)
            .map(|i| {
                let mut p = beta.to_vec();
                let mut m = beta.to_vec();
                p[i] += h;
                m[i] -= h;
                (problem.value(&p) - problem.value(&m)) / (2.0 * h)
            })
            .collect(),
        FdKind::Hvp(v) => {
            check_len("direction", d, v.len())?;
            directional_fd(|x| problem.grad(x), beta, v, h)
        }
        FdKind::T3(u, v) => {
            check_len("direction", d, u.len())?;
            check_len("direction", d, v.len())?;
            directional_fd(|x| problem.hvp(x, v), beta, u, h)
        }
        FdKind::FieldJvp(field, dir) => {
            check_len("direction", d, dir.len())?;
            directional_fd(field, beta, dir, h)
        }
    };
    Ok(FdEstimate { value, warnings })
}

// ---------------------------------------------------------------------------
// Two-parameter scalar model

/// `L(a₁, a₂) = (a₁ a₂ x − y)² / 2`.
#[derive(Debug, Clone)]
pub struct TwoDModel {
    pub x: f64,
    pub y: f64,
}

impl TwoDModel {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    fn residual(&self, b: &[f64]) -> f64 {
        b[0] * b[1] * self.x - self.y
    }
}

impl Problem for TwoDModel {
    fn dim(&self) -> usize {
        2
    }

    fn label(&self) -> &str {
        "two_d"
    }

    fn value(&self, b: &[f64]) -> f64 {
        let r = self.residual(b);
        0.5 * r * r
    }

    fn grad(&self, b: &[f64]) -> Vec<f64> {
        let r = self.residual(b);
        vec![r * b[1] * self.x, r * b[0] * self.x]
    }

    fn hvp(&self, b: &[f64], v: &[f64]) -> Vec<f64> {
        let x = self.x;
        let r = self.residual(b);
        let h00 = b[1] * b[1] * x * x;
        let h11 = b[0] * b[0] * x * x;
        let h01 = (r + b[0] * b[1] * x) * x;
        vec![h00 * v[0] + h01 * v[1], h01 * v[0] + h11 * v[1]]
    }

    fn t3(&self, b: &[f64], u: &[f64], v: &[f64]) -> Vec<f64> {
        // Only ∂₀₀₁ = 2a₂x² and ∂₀₁₁ = 2a₁x² (with permutations) are nonzero.
        let xx = self.x * self.x;
        let p = 2.0 * b[1] * xx;
        let q = 2.0 * b[0] * xx;
        let cross = u[0] * v[1] + u[1] * v[0];
        vec![p * cross + q * u[1] * v[1], p * u[0] * v[0] + q * cross]
    }
}

// ---------------------------------------------------------------------------
// Quadratic

/// `L(β) = ½ βᵀAβ − bᵀβ` with symmetric `A`.
#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl QuadraticProblem {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Invalid("quadratic matrix must be square".into()));
        }
        check_len("linear term", a.nrows(), b.len())?;
        let asym = (&a - a.transpose()).abs().max();
        if asym > 1e-12 * (1.0 + a.abs().max()) {
            return Err(Error::Invalid(format!("quadratic matrix is not symmetric (|A - Aᵀ| = {asym:e})")));
        }
        Ok(Self { a, b })
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let d = diag.len();
        Self {
            a: DMatrix::from_diagonal(&DVector::from_column_slice(diag)),
            b: DVector::zeros(d),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        (&self.a * DVector::from_column_slice(v)).as_slice().to_vec()
    }
}

impl Problem for QuadraticProblem {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn label(&self) -> &str {
        "quadratic"
    }

    fn value(&self, beta: &[f64]) -> f64 {
        let bv = DVector::from_column_slice(beta);
        0.5 * bv.dot(&(&self.a * &bv)) - self.b.dot(&bv)
    }

    fn grad(&self, beta: &[f64]) -> Vec<f64> {
        let mut g = self.apply(beta);
        axpy(&mut g, -1.0, self.b.as_slice());
        g
    }

    fn hvp(&self, _beta: &[f64], v: &[f64]) -> Vec<f64> {
        self.apply(v)
    }

    fn t3(&self, beta: &[f64], _u: &[f64], _v: &[f64]) -> Vec<f64> {
        vec![0.0; beta.len()]
    }
}

// ---------------------------------------------------------------------------
// Diagonal linear network

/// Regression data set: `n × d` design matrix and `n` targets.
#[derive(Debug, Clone)]
pub struct RegressionData {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl RegressionData {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        check_len("targets", x.nrows(), y.len())?;
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::Degenerate("empty design matrix".into()));
        }
        Ok(Self { x, y })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    /// Loads rows `x_1, …, x_d, y` from a CSV file with a header line.
    pub fn from_csv(path: &std::path::Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for record in reader.records() {
            let record = record?;
            let row = record
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Invalid(format!("{}: bad number `{s}`: {e}", path.display())))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        let cols = rows.first().map_or(0, |r| r.len());
        if cols < 2 {
            return Err(Error::Invalid(format!("{}: need at least one feature column and y", path.display())));
        }
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(Error::Invalid(format!("{}: row {} has the wrong width", path.display(), bad + 1)));
        }
        let n = rows.len();
        let x = DMatrix::from_fn(n, cols - 1, |i, j| rows[i][j]);
        let y = DVector::from_fn(n, |i, _| rows[i][cols - 1]);
        Self::new(x, y)
    }

    /// `X w`.
    pub fn apply(&self, w: &[f64]) -> DVector<f64> {
        &self.x * DVector::from_column_slice(w)
    }

    /// `Xᵀ r`.
    pub fn apply_t(&self, r: &DVector<f64>) -> DVector<f64> {
        self.x.tr_mul(r)
    }
}

/// Diagonal linear network `f(x) = xᵀ(w₊⊙w₊ − w₋⊙w₋)` with loss
/// `‖Xw − y‖² / (2n)`, parameterized by `β = (w₊, w₋)`.
#[derive(Debug, Clone)]
pub struct DiagonalNet {
    pub data: RegressionData,
}

impl DiagonalNet {
    pub fn new(data: RegressionData) -> Self {
        Self { data }
    }

    fn split<'a>(&self, beta: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        beta.split_at(self.data.d())
    }

    pub fn effective(&self, beta: &[f64]) -> Vec<f64> {
        let (p, m) = self.split(beta);
        p.iter().zip(m).map(|(a, b)| a * a - b * b).collect()
    }

    fn residual(&self, w: &[f64]) -> DVector<f64> {
        self.data.apply(w) - &self.data.y
    }

    /// `M v` with `M = XᵀX / n`.
    fn gram(&self, v: &[f64]) -> Vec<f64> {
        let n = self.data.n() as f64;
        (self.data.apply_t(&self.data.apply(v)) / n).as_slice().to_vec()
    }

    /// `∇_w L = Xᵀr / n`.
    fn grad_w(&self, w: &[f64]) -> Vec<f64> {
        let n = self.data.n() as f64;
        (self.data.apply_t(&self.residual(w)) / n).as_slice().to_vec()
    }

    /// Differential of the effective predictor, `2(w₊⊙u₊ − w₋⊙u₋)`.
    fn tangent(&self, beta: &[f64], u: &[f64]) -> Vec<f64> {
        let (p, m) = self.split(beta);
        let (up, um) = self.split(u);
        (0..p.len()).map(|j| 2.0 * (p[j] * up[j] - m[j] * um[j])).collect()
    }
}

impl Problem for DiagonalNet {
    fn dim(&self) -> usize {
        2 * self.data.d()
    }

    fn label(&self) -> &str {
        "dln"
    }

    fn value(&self, beta: &[f64]) -> f64 {
        let r = self.residual(&self.effective(beta));
        r.norm_squared() / (2.0 * self.data.n() as f64)
    }

    fn grad(&self, beta: &[f64]) -> Vec<f64> {
        let (p, m) = self.split(beta);
        let gw = self.grad_w(&self.effective(beta));
        let mut out: Vec<f64> = p.iter().zip(&gw).map(|(a, g)| 2.0 * a * g).collect();
        out.extend(m.iter().zip(&gw).map(|(a, g)| -2.0 * a * g));
        out
    }

    fn hvp(&self, beta: &[f64], v: &[f64]) -> Vec<f64> {
        let d = self.data.d();
        let (p, m) = self.split(beta);
        let (vp, vm) = self.split(v);
        let gw = self.grad_w(&self.effective(beta));
        let mb = self.gram(&self.tangent(beta, v));
        let mut out = vec![0.0; 2 * d];
        for j in 0..d {
            out[j] = 2.0 * p[j] * mb[j] + 2.0 * gw[j] * vp[j];
            out[d + j] = -2.0 * m[j] * mb[j] - 2.0 * gw[j] * vm[j];
        }
        out
    }

    fn t3(&self, beta: &[f64], u: &[f64], v: &[f64]) -> Vec<f64> {
        let d = self.data.d();
        let (p, m) = self.split(beta);
        let (up, um) = self.split(u);
        let (vp, vm) = self.split(v);
        let ma = self.gram(&self.tangent(beta, u));
        let mb = self.gram(&self.tangent(beta, v));
        let c: Vec<f64> = (0..d).map(|j| 2.0 * (up[j] * vp[j] - um[j] * vm[j])).collect();
        let mc = self.gram(&c);
        let mut out = vec![0.0; 2 * d];
        for j in 0..d {
            out[j] = 2.0 * (up[j] * mb[j] + vp[j] * ma[j] + p[j] * mc[j]);
            out[d + j] = -2.0 * (um[j] * mb[j] + vm[j] * ma[j] + m[j] * mc[j]);
        }
        out
    }
}

// ---------------------------------------------------------------------------
// One-hidden-layer tanh network

/// Scalar regression MLP `ŷ = w₂ᵀ tanh(W₁x + b₁) + b₂` with loss
/// `mean (ŷ − y)² / 2`. Parameters are packed as `[W₁ (row-major), b₁, w₂, b₂]`.
/// Only the gradient is analytic.
#[derive(Debug, Clone)]
pub struct MlpProblem {
    pub inputs: DMatrix<f64>,
    pub targets: DVector<f64>,
    pub hidden: usize,
}

impl MlpProblem {
    pub fn new(inputs: DMatrix<f64>, targets: DVector<f64>, hidden: usize) -> Result<Self> {
        check_len("targets", inputs.nrows(), targets.len())?;
        if hidden == 0 || hidden > 64 {
            return Err(Error::Invalid(format!("hidden width must be in 1..=64, got {hidden}")));
        }
        Ok(Self {
            inputs,
            targets,
            hidden,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    fn unpack<'a>(&self, p: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64], f64) {
        let h = self.hidden;
        let din = self.input_dim();
        let (w1, rest) = p.split_at(h * din);
        let (b1, rest) = rest.split_at(h);
        let (w2, rest) = rest.split_at(h);
        (w1, b1, w2, rest[0])
    }

    /// Hidden activations (`n × h`) and outputs.
    fn forward(&self, p: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
        let (w1, b1, w2, b2) = self.unpack(p);
        let h = self.hidden;
        let din = self.input_dim();
        let w1 = DMatrix::from_row_slice(h, din, w1);
        let mut z = &self.inputs * w1.transpose();
        for mut row in z.row_iter_mut() {
            for (k, zk) in row.iter_mut().enumerate() {
                *zk = (*zk + b1[k]).tanh();
            }
        }
        let out = &z * DVector::from_column_slice(w2) + DVector::from_element(self.inputs.nrows(), b2);
        (z, out)
    }
}

impl Problem for MlpProblem {
    fn dim(&self) -> usize {
        self.hidden * (self.input_dim() + 2) + 1
    }

    fn label(&self) -> &str {
        "mlp"
    }

    fn value(&self, p: &[f64]) -> f64 {
        let (_, out) = self.forward(p);
        (out - &self.targets).norm_squared() / (2.0 * self.inputs.nrows() as f64)
    }

    fn grad(&self, p: &[f64]) -> Vec<f64> {
        let (_, _, w2, _) = self.unpack(p);
        let h = self.hidden;
        let n = self.inputs.nrows() as f64;
        let (a, out) = self.forward(p);
        let r = (out - &self.targets) / n;
        let g_w2 = a.tr_mul(&r);
        let g_b2 = r.sum();
        // back-propagate through tanh: dZ = (r w₂ᵀ) ⊙ (1 − A²)
        let mut dz = &r * DVector::from_column_slice(w2).transpose();
        dz.zip_apply(&a, |g, act| *g *= 1.0 - act * act);
        let g_w1 = dz.tr_mul(&self.inputs);
        let g_b1 = dz.row_sum();
        let mut out = Vec::with_capacity(self.dim());
        for k in 0..h {
            out.extend(g_w1.row(k).iter());
        }
        out.extend(g_b1.iter());
        out.extend(g_w2.iter());
        out.push(g_b2);
        out
    }
}
