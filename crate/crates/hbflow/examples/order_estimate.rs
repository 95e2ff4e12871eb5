//! Empirical order of the flows at a fixed horizon.

use hbflow::diagnostics::{estimate_order, OrderFamily};
use hbflow::discrete::Optimizer;
use hbflow::flows::{FlowConfig, Integrator};
use hbflow::problems::TwoDModel;

fn main() -> hbflow::Result<()> {
    let model = TwoDModel::new(1.0, 0.6);
    let beta0 = [2.8, 3.5];
    let mu = 0.7;
    let grid = [6.25e-5, 1.25e-4, 2.5e-4, 5e-4];
    for alpha in 1..=3 {
        let flow = if alpha == 1 { FlowConfig::rgf(mu, 1.0) } else { FlowConfig::hbf(alpha, mu, 1.0) };
        let family = OrderFamily {
            reference: Optimizer::Hb,
            mu,
            flow: flow.with_integrator(Integrator::Rk4, 4),
        };
        let fit = estimate_order(&model, &beta0, &family, &grid, 0.05)?;
        println!("alpha={alpha}: slope {:.3}", fit.slope);
    }
    Ok(())
}
