//! Implicit bias of the heavy-ball flow on a diagonal linear network.

use hbflow::implicit_bias::{bias_report, run_dln_flow, scaled_init, sparse_regression, DlnFlowConfig};

fn main() -> hbflow::Result<()> {
    let inst = sparse_regression(40, 100, 5, 11)?;
    for s in [0.03, 1.0] {
        let (wp, wm) = scaled_init(s, 1.0, inst.data.d());
        let cfg = DlnFlowConfig {
            mu: 0.5,
            eta: 1e-2,
            substeps: 4,
            max_time: 3000.0,
            ..DlnFlowConfig::default()
        };
        let run = run_dln_flow(&inst.data, &wp, &wm, &cfg)?;
        let report = bias_report(&run, &inst.w_star)?;
        println!(
            "s={s}: ||w - w*|| = {:.4}, KKT residual = {:.2e}, final loss = {:.2e}",
            report.generalization, report.kkt_residual, report.final_loss
        );
    }
    Ok(())
}
