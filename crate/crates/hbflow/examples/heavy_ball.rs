//! Discrete gradient descent and heavy-ball on the 2-D model.

use hbflow::discrete::{run_discrete, Optimizer};
use hbflow::linalg::distance;
use hbflow::problems::TwoDModel;

fn main() -> hbflow::Result<()> {
    let model = TwoDModel::new(1.0, 0.6);
    let beta0 = [2.8, 3.5];
    let gd = run_discrete(Optimizer::Gd, &model, &beta0, 5e-3, 0.0, 4000)?;
    let hb = run_discrete(Optimizer::Hb, &model, &beta0, 5e-3, 0.7, 4000)?;
    println!("GD endpoint {:?}", gd.last());
    println!("HB endpoint {:?}", hb.last());
    println!("separation  {:.4}", distance(gd.last(), hb.last()));
    for k in (0..=4000).step_by(500) {
        println!("t={:>5.2}  gd {:.4?}  hb {:.4?}", hb.times[k], gd.points[k], hb.points[k]);
    }
    Ok(())
}
