//! Counter terms of the heavy-ball flow.
//!
//! On segment `k` the flow is `β̇ = −G_k(β) − η γ_k(β)` with
//! `G_k = c_k ∇L`, `c_k = (1 − μ^{k+1})/(1 − μ)` and
//! `γ_k = Σ_{σ=0}^{α−2} η^σ γ_k^{(σ)}`. Each order obeys
//! `γ_k^{(σ)} = μ γ_{k−1}^{(σ)} + χ_k^{(σ)}`, where `χ` collects nested
//! directional derivatives ("Lie operators") over integer compositions.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, check_mu, Error, Result};
use crate::linalg::{axpy, norm, norm_inf, scale};
use crate::problems::{omega1, omega2, Problem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CtMode {
    /// Exact iteration-dependent coefficients.
    #[default]
    FiniteK,
    /// Limits of the coefficients as `k → ∞`.
    Asymptotic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CounterTermConfig {
    pub alpha: usize,
    pub mu: f64,
    pub mode: CtMode,
    pub sigma_max_generic: usize,
    pub fd_step: f64,
}

impl Default for CounterTermConfig {
    fn default() -> Self {
        Self {
            alpha: 2,
            mu: 0.0,
            mode: CtMode::FiniteK,
            sigma_max_generic: 1,
            fd_step: 1e-4,
        }
    }
}

impl CounterTermConfig {
    pub fn new(alpha: usize, mu: f64, mode: CtMode) -> Self {
        Self {
            alpha,
            mu,
            mode,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha < 1 {
            return Err(Error::Invalid("alpha must be at least 1".into()));
        }
        check_mu(self.mu)?;
        if !(self.fd_step > 0.0) {
            return Err(Error::Invalid(format!("fd_step must be positive, got {}", self.fd_step)));
        }
        Ok(())
    }
}

/// Scale `c_k` in `G_k = c_k ∇L`; zero for `k < 0`.
pub fn gradient_scale(k: i64, mu: f64, mode: CtMode) -> f64 {
    if k < 0 {
        return 0.0;
    }
    match mode {
        CtMode::Asymptotic => 1.0 / (1.0 - mu),
        CtMode::FiniteK => (1.0 - mu.powi((k + 1) as i32)) / (1.0 - mu),
    }
}

/// `G_k(β)`.
pub fn g_k(problem: &dyn Problem, beta: &[f64], k: i64, mu: f64, mode: CtMode) -> Result<Vec<f64>> {
    check_len("beta", problem.dim(), beta.len())?;
    check_mu(mu)?;
    Ok(scale(&problem.grad(beta), gradient_scale(k, mu, mode)))
}

/// Scalar coefficients of the first two counter-term orders on one segment:
/// `G_k = gradient · g`, `γ^{(0)} = curvature · Hg`,
/// `γ^{(1)} = mixed · (ω₁ + ω₂) + third · ω₂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub gradient: f64,
    pub curvature: f64,
    pub mixed: f64,
    pub third: f64,
}

impl Coefficients {
    pub fn asymptotic(mu: f64) -> Self {
        let s = 1.0 - mu;
        Self {
            gradient: 1.0 / s,
            curvature: (1.0 + mu) / (2.0 * s.powi(3)),
            mixed: (1.0 + mu).powi(2) / (4.0 * s.powi(5)),
            third: -1.0 / (6.0 * s.powi(3)),
        }
    }

    pub fn finite(k: usize, mu: f64) -> Self {
        CoefficientSchedule::new(mu)
            .nth(k)
            .expect("schedule is infinite")
    }

    pub fn for_mode(k: usize, mu: f64, mode: CtMode) -> Self {
        match mode {
            CtMode::FiniteK => Self::finite(k, mu),
            CtMode::Asymptotic => Self::asymptotic(mu),
        }
    }
}

/// Yields the finite-`k` coefficients for `k = 0, 1, 2, …` in O(1) per step.
#[derive(Debug, Clone)]
pub struct CoefficientSchedule {
    mu: f64,
    c: f64,
    p: f64,
    a: f64,
}

impl CoefficientSchedule {
    pub fn new(mu: f64) -> Self {
        Self {
            mu,
            c: 0.0,
            p: 0.0,
            a: 0.0,
        }
    }
}

impl Iterator for CoefficientSchedule {
    type Item = Coefficients;

    fn next(&mut self) -> Option<Coefficients> {
        let mu = self.mu;
        let c = 1.0 + mu * self.c;
        let p = mu * self.p + 0.5 * (c * c + mu * self.c * self.c);
        let a = mu * self.a + 0.5 * (c * p + mu * self.c * self.p);
        self.c = c;
        self.p = p;
        self.a = a;
        Some(Coefficients {
            gradient: c,
            curvature: p,
            mixed: a,
            third: -c * c * c / 6.0,
        })
    }
}

/// Ordered tuple of naturals indexing one nested-operator term.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Composition(pub Vec<usize>);

/// All ordered `m`-tuples of naturals with sum `σ − m + 2`; empty when
/// `m > σ + 2` or `m == 0`.
pub fn enumerate_compositions(m: usize, sigma: usize) -> Vec<Composition> {
    if m == 0 || m > sigma + 2 {
        return Vec::new();
    }
    let total = sigma + 2 - m;
    let mut out = Vec::new();
    let mut parts = Vec::with_capacity(m);
    fill(m, total, &mut parts, &mut out);
    out
}

fn fill(slots: usize, remaining: usize, parts: &mut Vec<usize>, out: &mut Vec<Composition>) {
    if slots == 1 {
        parts.push(remaining);
        out.push(Composition(parts.clone()));
        parts.pop();
        return;
    }
    for first in (0..=remaining).rev() {
        parts.push(first);
        fill(slots - 1, remaining - first, parts, out);
        parts.pop();
    }
}

fn factorial(m: usize) -> f64 {
    (1..=m).map(|i| i as f64).product()
}

/// `γ_k^{(0)}`: finite-`k` sum or its large-`k` limit, times `∇²L ∇L`.
pub fn gamma_closed_sigma0(
    problem: &dyn Problem,
    beta: &[f64],
    k: i64,
    mu: f64,
    mode: CtMode,
) -> Result<Vec<f64>> {
    check_len("beta", problem.dim(), beta.len())?;
    check_mu(mu)?;
    let coef = match mode {
        CtMode::Asymptotic => Coefficients::asymptotic(mu).curvature,
        CtMode::FiniteK => {
            if k < 0 {
                0.0
            } else {
                let s: f64 = (0..=k)
                    .map(|j| {
                        let a = 1.0 - mu.powi((j + 1) as i32);
                        let b = 1.0 - mu.powi(j as i32);
                        mu.powi((k - j) as i32) * (a * a + mu * b * b)
                    })
                    .sum();
                s / (2.0 * (1.0 - mu).powi(2))
            }
        }
    };
    let g = problem.grad(beta);
    Ok(scale(&problem.hvp(beta, &g), coef))
}

/// Large-`k` `γ^{(1)} = (1+μ)²/(4(1−μ)⁵) [ω₁ + (1+10μ+μ²)/(3(1+μ)²) ω₂]`.
pub fn gamma_closed_sigma1(problem: &dyn Problem, beta: &[f64], mu: f64) -> Result<Vec<f64>> {
    check_mu(mu)?;
    let w1 = omega1(problem, beta)?;
    let w2 = omega2(problem, beta)?;
    let lead = (1.0 + mu).powi(2) / (4.0 * (1.0 - mu).powi(5));
    let ratio = (1.0 + 10.0 * mu + mu * mu) / (3.0 * (1.0 + mu).powi(2));
    Ok(w1
        .iter()
        .zip(&w2)
        .map(|(a, b)| lead * (a + ratio * b))
        .collect())
}

/// Finite-`k` `γ_k^{(1)} = A_k (ω₁ + ω₂) + B_k ω₂`.
pub fn gamma_closed_sigma1_finite(
    problem: &dyn Problem,
    beta: &[f64],
    k: usize,
    mu: f64,
) -> Result<Vec<f64>> {
    check_mu(mu)?;
    let c = Coefficients::finite(k, mu);
    let w1 = omega1(problem, beta)?;
    let w2 = omega2(problem, beta)?;
    Ok(w1
        .iter()
        .zip(&w2)
        .map(|(a, b)| c.mixed * (a + b) + c.third * b)
        .collect())
}

/// Evaluates `γ_k^{(σ)}(β)` by the general recursion. Directional derivatives
/// of `G` use Hessian-vector products; all other fields use central
/// differences with step `fd_step (1 + |β|∞)`.
pub fn gamma_generic(
    problem: &dyn Problem,
    beta: &[f64],
    k: i64,
    sigma: usize,
    mu: f64,
    config: &CounterTermConfig,
) -> Result<Vec<f64>> {
    check_len("beta", problem.dim(), beta.len())?;
    check_mu(mu)?;
    if sigma > config.sigma_max_generic {
        return Err(Error::UnsupportedOrder {
            sigma,
            cap: config.sigma_max_generic,
        });
    }
    let mut rec = Recursion {
        problem,
        mu,
        fd_step: config.fd_step,
        memo: HashMap::new(),
        terms: term_table(sigma),
    };
    Ok(rec.gamma(k, sigma as i64, beta))
}

/// One nested term of `χ^{(σ)}`: operator orders outermost first, then the
/// order of the base field (`−1` means `G`).
struct Term {
    ops: Vec<i64>,
    base: i64,
    weight: f64,
    sign: f64,
}

fn term_table(sigma_max: usize) -> Vec<Vec<Term>> {
    (0..=sigma_max)
        .map(|sigma| {
            let mut terms = Vec::new();
            for m in 2..=sigma + 2 {
                let weight = 1.0 / factorial(m);
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                for comp in enumerate_compositions(m, sigma) {
                    let parts = comp.0;
                    terms.push(Term {
                        ops: parts[..m - 1].iter().map(|&p| p as i64).collect(),
                        base: parts[m - 1] as i64 - 1,
                        weight,
                        sign,
                    });
                }
            }
            terms
        })
        .collect()
}

type MemoKey = (i64, i64, Vec<u64>);

struct Recursion<'a> {
    problem: &'a dyn Problem,
    mu: f64,
    fd_step: f64,
    memo: HashMap<MemoKey, Vec<f64>>,
    terms: Vec<Vec<Term>>,
}

impl Recursion<'_> {
    fn key(j: i64, s: i64, beta: &[f64]) -> MemoKey {
        (j, s, beta.iter().map(|x| x.to_bits()).collect())
    }

    /// `γ_j^{(s)}(β)`, with `γ_j^{(−1)} = G_j` and `γ_{−1} = 0`.
    fn gamma(&mut self, j: i64, s: i64, beta: &[f64]) -> Vec<f64> {
        if j < 0 {
            return vec![0.0; beta.len()];
        }
        if s < 0 {
            let c = gradient_scale(j, self.mu, CtMode::FiniteK);
            return scale(&self.problem.grad(beta), c);
        }
        if let Some(v) = self.memo.get(&Self::key(j, s, beta)) {
            return v.clone();
        }
        // fill forward from the last cached index to avoid deep recursion
        let mut start = 0;
        for i in (0..j).rev() {
            if self.memo.contains_key(&Self::key(i, s, beta)) {
                start = i + 1;
                break;
            }
        }
        let mut prev = if start == 0 {
            vec![0.0; beta.len()]
        } else {
            self.memo[&Self::key(start - 1, s, beta)].clone()
        };
        for i in start..=j {
            let mut cur = self.chi(i, s as usize, beta);
            axpy(&mut cur, self.mu, &prev);
            self.memo.insert(Self::key(i, s, beta), cur.clone());
            prev = cur;
        }
        prev
    }

    fn chi(&mut self, j: i64, sigma: usize, beta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; beta.len()];
        for t in 0..self.terms[sigma].len() {
            let (ops, base, weight, sign) = {
                let term = &self.terms[sigma][t];
                (term.ops.clone(), term.base, term.weight, term.sign)
            };
            let here = self.chain(j, &ops, base, beta);
            axpy(&mut out, sign * weight, &here);
            if j >= 1 && self.mu != 0.0 {
                let before = self.chain(j - 1, &ops, base, beta);
                axpy(&mut out, self.mu * weight, &before);
            }
        }
        out
    }

    /// `L^{(j,ops[0])} ⋯ L^{(j,ops[last])} γ_j^{(base)}` at `β`.
    fn chain(&mut self, j: i64, ops: &[i64], base: i64, beta: &[f64]) -> Vec<f64> {
        let Some((&outer, inner)) = ops.split_first() else {
            return self.gamma(j, base, beta);
        };
        let dir = self.gamma(j, outer - 1, beta);
        if inner.is_empty() && base == -1 {
            let c = gradient_scale(j, self.mu, CtMode::FiniteK);
            return scale(&self.problem.hvp(beta, &dir), c);
        }
        let len = norm(&dir);
        if len == 0.0 {
            return vec![0.0; beta.len()];
        }
        let h = self.fd_step * (1.0 + norm_inf(beta));
        let mut plus = beta.to_vec();
        let mut minus = beta.to_vec();
        axpy(&mut plus, h / len, &dir);
        axpy(&mut minus, -h / len, &dir);
        let fp = self.chain(j, inner, base, &plus);
        let fm = self.chain(j, inner, base, &minus);
        fp.iter()
            .zip(&fm)
            .map(|(a, b)| (a - b) / (2.0 * h) * len)
            .collect()
    }
}

/// `Σ_{σ=0}^{α−2} η^σ γ_k^{(σ)}`; zero when `α ≤ 1`. Orders 0 and 1 use the
/// closed forms of the configured mode; higher orders use the generic
/// recursion, which exists only in finite-`k` mode.
pub fn gamma_total(
    problem: &dyn Problem,
    beta: &[f64],
    k: i64,
    eta: f64,
    config: &CounterTermConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    check_len("beta", problem.dim(), beta.len())?;
    let mut out = vec![0.0; beta.len()];
    if config.alpha < 2 {
        return Ok(out);
    }
    let mu = config.mu;
    for sigma in 0..=(config.alpha - 2) {
        let term = match (sigma, config.mode) {
            (0, mode) => gamma_closed_sigma0(problem, beta, k, mu, mode)?,
            (1, CtMode::Asymptotic) => gamma_closed_sigma1(problem, beta, mu)?,
            (1, CtMode::FiniteK) if k < 0 => vec![0.0; beta.len()],
            (1, CtMode::FiniteK) => gamma_closed_sigma1_finite(problem, beta, k as usize, mu)?,
            (_, CtMode::FiniteK) => gamma_generic(problem, beta, k, sigma, mu, config)?,
            (_, CtMode::Asymptotic) => {
                return Err(Error::Invalid(format!(
                    "order {sigma} counter terms are available only in finite_k mode"
                )))
            }
        };
        axpy(&mut out, eta.powi(sigma as i32), &term);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Structure dump

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Operator {
    /// Lie-operator order `τ`; it differentiates along `direction`.
    pub order: usize,
    pub direction: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TermStructure {
    pub parts: Vec<usize>,
    /// Outermost operator first.
    pub operators: Vec<Operator>,
    pub base_field: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Family {
    pub m: usize,
    pub operator_arity: usize,
    pub coefficient: f64,
    pub sign: i32,
    /// Weight of the same term evaluated at the previous segment.
    pub previous_segment_weight: String,
    pub terms: Vec<TermStructure>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CtStructure {
    pub alpha: usize,
    pub sigma: usize,
    pub in_truncation: bool,
    pub families: Vec<Family>,
    pub term_count: usize,
}

fn field_name(order: i64) -> String {
    if order < 0 {
        "G".to_string()
    } else {
        format!("gamma^({order})")
    }
}

/// Symbolic layout of `χ^{(σ)}`.
pub fn structure(alpha: usize, sigma: usize) -> CtStructure {
    let families: Vec<Family> = (2..=sigma + 2)
        .map(|m| {
            let coefficient = 1.0 / factorial(m);
            let terms = enumerate_compositions(m, sigma)
                .into_iter()
                .map(|c| {
                    let parts = c.0;
                    TermStructure {
                        operators: parts[..m - 1]
                            .iter()
                            .map(|&p| Operator {
                                order: p,
                                direction: field_name(p as i64 - 1),
                            })
                            .collect(),
                        base_field: field_name(parts[m - 1] as i64 - 1),
                        parts,
                    }
                })
                .collect();
            Family {
                m,
                operator_arity: m - 1,
                coefficient,
                sign: if m % 2 == 0 { 1 } else { -1 },
                previous_segment_weight: format!("+mu/{}", factorial(m) as u64),
                terms,
            }
        })
        .collect();
    let term_count = families.iter().map(|f| f.terms.len()).sum();
    CtStructure {
        alpha,
        sigma,
        in_truncation: sigma + 2 <= alpha,
        families,
        term_count,
    }
}
