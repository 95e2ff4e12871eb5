//! Discrete gradient descent and heavy-ball updates.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, check_mu, Error, Result};
use crate::linalg::{all_finite, norm};
use crate::problems::Problem;

pub const DEFAULT_DIVERGENCE_BOUND: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Gd,
    Hb,
}

/// Current and previous iterate of a momentum run. At `k = 0` the previous
/// iterate equals the current one, so the first heavy-ball step is a plain
/// gradient step.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteState {
    pub beta: Vec<f64>,
    pub beta_prev: Vec<f64>,
    pub k: usize,
    pub eta: f64,
    pub mu: f64,
}

impl DiscreteState {
    pub fn new(beta0: Vec<f64>, eta: f64, mu: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::Invalid(format!("step size must be positive, got {eta}")));
        }
        check_mu(mu)?;
        Ok(Self {
            beta_prev: beta0.clone(),
            beta: beta0,
            k: 0,
            eta,
            mu,
        })
    }
}

fn checked_grad(state: &DiscreteState, problem: &dyn Problem) -> Result<Vec<f64>> {
    check_len("beta", problem.dim(), state.beta.len())?;
    let g = problem.grad(&state.beta);
    if !all_finite(&g) {
        return Err(Error::NonFinite { k: state.k });
    }
    Ok(g)
}

/// `β_{k+1} = β_k − η∇L(β_k) + μ(β_k − β_{k−1})`.
pub fn hb_step(state: &DiscreteState, problem: &dyn Problem) -> Result<DiscreteState> {
    let g = checked_grad(state, problem)?;
    let next = state
        .beta
        .iter()
        .zip(&state.beta_prev)
        .zip(&g)
        .map(|((b, bp), gi)| b - state.eta * gi + state.mu * (b - bp))
        .collect();
    Ok(DiscreteState {
        beta: next,
        beta_prev: state.beta.clone(),
        k: state.k + 1,
        eta: state.eta,
        mu: state.mu,
    })
}

/// `β_{k+1} = β_k − η∇L(β_k)`.
pub fn gd_step(state: &DiscreteState, problem: &dyn Problem) -> Result<DiscreteState> {
    let g = checked_grad(state, problem)?;
    let next = state
        .beta
        .iter()
        .zip(&g)
        .map(|(b, gi)| b - state.eta * gi)
        .collect();
    Ok(DiscreteState {
        beta: next,
        beta_prev: state.beta.clone(),
        k: state.k + 1,
        eta: state.eta,
        mu: state.mu,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub label: String,
    pub config_hash: String,
}

/// Parameter vectors at the grid times `t_k = kη`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub eta: f64,
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn new(eta: f64, beta0: Vec<f64>, label: impl Into<String>) -> Self {
        Self {
            eta,
            times: vec![0.0],
            points: vec![beta0],
            meta: TrajectoryMeta {
                label: label.into(),
                config_hash: String::new(),
            },
        }
    }

    pub(crate) fn push(&mut self, beta: Vec<f64>) {
        let k = self.points.len();
        self.times.push(k as f64 * self.eta);
        self.points.push(beta);
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last(&self) -> &[f64] {
        self.points.last().expect("trajectory always has a start point")
    }

    /// CSV with columns `k, t, beta_0, …, beta_{d−1}`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let d = self.points.first().map_or(0, |p| p.len());
        let mut header = vec!["k".to_string(), "t".to_string()];
        header.extend((0..d).map(|i| format!("beta_{i}")));
        w.write_record(&header)?;
        for (k, (t, p)) in self.times.iter().zip(&self.points).enumerate() {
            let mut row = vec![k.to_string(), format_num(*t)];
            row.extend(p.iter().map(|x| format_num(*x)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, eta: f64, label: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut traj: Option<Trajectory> = None;
        for record in r.records() {
            let record = record?;
            let vals: Vec<f64> = record
                .iter()
                .skip(2)
                .map(|s| s.parse::<f64>().map_err(|e| Error::Invalid(format!("bad number `{s}`: {e}"))))
                .collect::<Result<_>>()?;
            match traj.as_mut() {
                None => traj = Some(Trajectory::new(eta, vals, label)),
                Some(t) => t.push(vals),
            }
        }
        traj.ok_or_else(|| Error::Invalid("empty trajectory file".into()))
    }
}

/// Shortest representation that round-trips exactly.
pub(crate) fn format_num(x: f64) -> String {
    format!("{x:?}")
}

/// Runs `n` steps of the chosen optimizer from `beta0`.
pub fn run_discrete(
    optimizer: Optimizer,
    problem: &dyn Problem,
    beta0: &[f64],
    eta: f64,
    mu: f64,
    n: usize,
) -> Result<Trajectory> {
    run_discrete_bounded(optimizer, problem, beta0, eta, mu, n, DEFAULT_DIVERGENCE_BOUND)
}

pub fn run_discrete_bounded(
    optimizer: Optimizer,
    problem: &dyn Problem,
    beta0: &[f64],
    eta: f64,
    mu: f64,
    n: usize,
    bound: f64,
) -> Result<Trajectory> {
    check_len("beta0", problem.dim(), beta0.len())?;
    let mu = match optimizer {
        Optimizer::Gd => 0.0,
        Optimizer::Hb => mu,
    };
    let mut state = DiscreteState::new(beta0.to_vec(), eta, mu)?;
    let label = match optimizer {
        Optimizer::Gd => "gd".to_string(),
        Optimizer::Hb => format!("hb_mu{mu}"),
    };
    let mut traj = Trajectory::new(eta, beta0.to_vec(), label);
    for _ in 0..n {
        state = match optimizer {
            Optimizer::Gd => gd_step(&state, problem)?,
            Optimizer::Hb => hb_step(&state, problem)?,
        };
        guard(&state.beta, state.k, bound)?;
        traj.push(state.beta.clone());
    }
    Ok(traj)
}

pub(crate) fn guard(beta: &[f64], k: usize, bound: f64) -> Result<()> {
    if !all_finite(beta) {
        return Err(Error::NonFinite { k });
    }
    let size = norm(beta);
    if size > bound {
        return Err(Error::Diverged { k, norm: size, bound });
    }
    Ok(())
}
