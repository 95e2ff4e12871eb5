//! Discretization error, empirical order fits and directional smoothness.

use serde::{Deserialize, Serialize};

use crate::discrete::{run_discrete, Optimizer, Trajectory};
use crate::error::{Error, Result};
use crate::flows::{run_flow, FlowConfig};
use crate::linalg::{distance, dot, fit_line, norm, sub};
use crate::problems::Problem;

/// `‖β(t_k) − β_k‖₂` for each grid index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSeries {
    pub k: Vec<usize>,
    pub t: Vec<f64>,
    pub eps_norm: Vec<f64>,
    pub reference: String,
    pub model: String,
}

impl ErrorSeries {
    /// Index of the first point past the momentum transient,
    /// `max(5, ⌈1/(1−μ)⌉)`.
    pub fn transient_cutoff(mu: f64) -> usize {
        5usize.max((1.0 / (1.0 - mu) - 1e-9).ceil() as usize)
    }

    /// Values with the transient dropped.
    pub fn after_transient(&self, mu: f64) -> &[f64] {
        let start = Self::transient_cutoff(mu).min(self.eps_norm.len());
        &self.eps_norm[start..]
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["k", "t", "eps"])?;
        for i in 0..self.k.len() {
            w.write_record([
                self.k[i].to_string(),
                crate::discrete::format_num(self.t[i]),
                crate::discrete::format_num(self.eps_norm[i]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Pointwise error between a discrete run and a flow on the same grid.
pub fn discretization_error(discrete: &Trajectory, flow: &Trajectory) -> Result<ErrorSeries> {
    if discrete.len() != flow.len() {
        return Err(Error::GridMismatch(format!(
            "lengths differ ({} vs {})",
            discrete.len(),
            flow.len()
        )));
    }
    if discrete.eta != flow.eta {
        return Err(Error::GridMismatch(format!(
            "step sizes differ ({} vs {})",
            discrete.eta, flow.eta
        )));
    }
    for (a, b) in discrete.times.iter().zip(&flow.times) {
        if (a - b).abs() > 1e-12 * a.abs().max(1.0) {
            return Err(Error::GridMismatch(format!("grid times differ ({a} vs {b})")));
        }
    }
    if discrete.points.first() != flow.points.first() {
        return Err(Error::GridMismatch("runs start from different points".into()));
    }
    let eps_norm = discrete
        .points
        .iter()
        .zip(&flow.points)
        .map(|(a, b)| distance(a, b))
        .collect();
    Ok(ErrorSeries {
        k: (0..discrete.len()).collect(),
        t: discrete.times.clone(),
        eps_norm,
        reference: discrete.meta.label.clone(),
        model: flow.meta.label.clone(),
    })
}

/// Discrete reference plus continuous model swept over step sizes.
#[derive(Debug, Clone)]
pub struct OrderFamily {
    pub reference: Optimizer,
    pub mu: f64,
    /// Template; its `eta` is overwritten per grid point.
    pub flow: FlowConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderPoint {
    pub eta: f64,
    pub steps: usize,
    pub eps_final: f64,
    pub log_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderFit {
    pub slope: f64,
    pub intercept: f64,
    pub points: Vec<OrderPoint>,
    /// Step sizes whose runs diverged, with the reason.
    pub excluded: Vec<(f64, String)>,
    pub warnings: Vec<String>,
}

impl OrderFit {
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["eta", "steps", "eps_N", "log_residual", "fitted_slope"])?;
        for p in &self.points {
            w.write_record([
                crate::discrete::format_num(p.eta),
                p.steps.to_string(),
                crate::discrete::format_num(p.eps_final),
                crate::discrete::format_num(p.log_residual),
                crate::discrete::format_num(self.slope),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Error of a single (reference, flow) pair at the fixed horizon `t_total`.
pub fn endpoint_error(
    problem: &dyn Problem,
    beta0: &[f64],
    family: &OrderFamily,
    eta: f64,
    t_total: f64,
) -> Result<(usize, f64)> {
    let steps = (t_total / eta).round() as usize;
    let disc = run_discrete(family.reference, problem, beta0, eta, family.mu, steps)?;
    let mut cfg = family.flow.clone();
    cfg.eta = eta;
    let flow = run_flow(problem, beta0, &cfg, steps)?;
    let series = discretization_error(&disc, &flow)?;
    Ok((steps, *series.eps_norm.last().expect("non-empty series")))
}

/// Least-squares slope of `log ε_N` against `log η` at fixed horizon,
/// with `N = round(T/η)`.
pub fn estimate_order(
    problem: &dyn Problem,
    beta0: &[f64],
    family: &OrderFamily,
    eta_grid: &[f64],
    t_total: f64,
) -> Result<OrderFit> {
    let results: Vec<(f64, Result<(usize, f64)>)> = eta_grid
        .iter()
        .map(|&eta| (eta, endpoint_error(problem, beta0, family, eta, t_total)))
        .collect();
    fit_order(eta_grid, results)
}

/// Fits an order from precomputed `(η, result)` pairs; diverged or
/// non-finite runs are excluded with a warning.
pub fn fit_order(eta_grid: &[f64], results: Vec<(f64, Result<(usize, f64)>)>) -> Result<OrderFit> {
    if eta_grid.len() < 4 {
        return Err(Error::Invalid(format!(
            "order fits need at least 4 step sizes, got {}",
            eta_grid.len()
        )));
    }
    let mut warnings = Vec::new();
    let lo = eta_grid.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eta_grid.iter().cloned().fold(0.0, f64::max);
    if hi / lo < 10.0 {
        let msg = format!("step-size grid spans only a factor {:.3} (< one decade)", hi / lo);
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let mut points = Vec::new();
    let mut excluded = Vec::new();
    for (eta, res) in results {
        match res {
            Ok((steps, eps)) if eps.is_finite() && eps > 0.0 => points.push(OrderPoint {
                eta,
                steps,
                eps_final: eps,
                log_residual: 0.0,
            }),
            Ok((_, eps)) => {
                let msg = format!("eta {eta}: unusable error {eps}");
                log::warn!("{msg}");
                excluded.push((eta, msg));
            }
            Err(e @ (Error::Diverged { .. } | Error::NonFinite { .. })) => {
                log::warn!("eta {eta} excluded: {e}");
                excluded.push((eta, e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    if points.len() < 3 {
        return Err(Error::TooFewPoints(points.len()));
    }
    let lx: Vec<f64> = points.iter().map(|p| p.eta.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.eps_final.ln()).collect();
    let (slope, intercept) = fit_line(&lx, &ly);
    for (p, (x, y)) in points.iter_mut().zip(lx.iter().zip(&ly)) {
        p.log_residual = y - (slope * x + intercept);
    }
    Ok(OrderFit {
        slope,
        intercept,
        points,
        excluded,
        warnings,
    })
}

/// `𝒟 = g·(g − ∇L(β − ηg)) / (η‖g‖²)`.
pub fn directional_smoothness(problem: &dyn Problem, beta: &[f64], eta: f64) -> Result<f64> {
    let g = crate::problems::grad(problem, beta)?;
    let gn = norm(&g);
    if gn < 1e-12 {
        return Err(Error::VanishingGradient(gn));
    }
    let shifted: Vec<f64> = beta.iter().zip(&g).map(|(b, gi)| b - eta * gi).collect();
    let g2 = problem.grad(&shifted);
    Ok(dot(&g, &sub(&g, &g2)) / (eta * gn * gn))
}
