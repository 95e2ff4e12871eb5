//! Continuous models of heavy-ball and their discretization error.

use hbflow::counterterms::CtMode;
use hbflow::diagnostics::discretization_error;
use hbflow::discrete::{run_discrete, Optimizer};
use hbflow::flows::{run_flow, FlowConfig, Integrator};
use hbflow::problems::TwoDModel;

fn main() -> hbflow::Result<()> {
    let model = TwoDModel::new(1.0, 0.6);
    let beta0 = [2.8, 3.5];
    let (eta, mu, n) = (5e-3, 0.7, 400);
    let hb = run_discrete(Optimizer::Hb, &model, &beta0, eta, mu, n)?;
    let configs = [
        FlowConfig::rgf(mu, eta),
        FlowConfig::hbf(2, mu, eta),
        FlowConfig::hbf(3, mu, eta),
        FlowConfig::hbf(3, mu, eta).with_mode(CtMode::Asymptotic),
    ];
    for cfg in configs {
        let cfg = cfg.with_integrator(Integrator::Rk4, 10);
        let flow = run_flow(&model, &beta0, &cfg, n)?;
        let err = discretization_error(&hb, &flow)?;
        println!(
            "{:<6} {:?}: eps_20 = {:.3e}, eps_N = {:.3e}",
            cfg.label(),
            cfg.ct.mode,
            err.eps_norm[20],
            err.eps_norm[n]
        );
    }
    Ok(())
}
