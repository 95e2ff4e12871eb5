//! Directional smoothness along GD and heavy-ball on a small MLP.

use hbflow::experiments::{late_mean, smoothness_trace, synthetic_mlp};

fn main() -> hbflow::Result<()> {
    let (mlp, init) = synthetic_mlp(256, 8, 16, 2.0, 3.0, 1)?;
    let eta = 0.1;
    for mu in [0.0, 0.9] {
        let trace = smoothness_trace(&mlp, &init, eta, mu, 2000)?;
        println!("mu={mu}: late mean D = {:?} (2/eta = {})", late_mean(&trace, 500), 2.0 / eta);
    }
    Ok(())
}
