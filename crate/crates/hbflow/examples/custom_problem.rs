//! Plugging a user-defined loss into the flows. Only value and gradient are
//! required; Hessian-vector and third-order products fall back to finite
//! differences.

use hbflow::diagnostics::discretization_error;
use hbflow::discrete::{run_discrete, Optimizer};
use hbflow::flows::{run_flow, FlowConfig, Integrator};
use hbflow::problems::Problem;

/// Rosenbrock valley.
struct Rosenbrock;

impl Problem for Rosenbrock {
    fn dim(&self) -> usize {
        2
    }
    fn label(&self) -> &str {
        "rosenbrock"
    }
    fn value(&self, b: &[f64]) -> f64 {
        (1.0 - b[0]).powi(2) + 10.0 * (b[1] - b[0] * b[0]).powi(2)
    }
    fn grad(&self, b: &[f64]) -> Vec<f64> {
        let t = b[1] - b[0] * b[0];
        vec![-2.0 * (1.0 - b[0]) - 40.0 * b[0] * t, 20.0 * t]
    }
}

fn main() -> hbflow::Result<()> {
    let beta0 = [-0.5, 0.5];
    let (eta, mu, n) = (2e-3, 0.5, 500);
    let hb = run_discrete(Optimizer::Hb, &Rosenbrock, &beta0, eta, mu, n)?;
    for cfg in [FlowConfig::rgf(mu, eta), FlowConfig::hbf(2, mu, eta), FlowConfig::hbf(3, mu, eta)] {
        let flow = run_flow(&Rosenbrock, &beta0, &cfg.with_integrator(Integrator::Rk4, 5), n)?;
        let e = discretization_error(&hb, &flow)?;
        println!("{:<5} max error {:.3e}", flow.meta.label, e.eps_norm.iter().cloned().fold(0.0, f64::max));
    }
    Ok(())
}
