//! Minimizing the hyperbolic-entropy potential over the interpolating set.
//! Small kappa approaches min-l1, large kappa approaches min-l2.

use hbflow::implicit_bias::{solve_constrained_potential, SolverOptions};
use nalgebra::{DMatrix, DVector};

fn main() -> hbflow::Result<()> {
    let x = DMatrix::from_row_slice(2, 4, &[1.0, 0.5, -0.3, 0.2, 0.1, 1.0, 0.4, -0.7]);
    let y = DVector::from_vec(vec![1.0, -0.5]);
    let min_l2 = x.transpose() * (&x * x.transpose()).try_inverse().expect("full rank") * &y;
    for kappa in [1e-4, 1e-1, 1e2] {
        let w = solve_constrained_potential(&x, &y, &[kappa; 4], &[0.0; 4], SolverOptions::default())?;
        let l1: f64 = w.iter().map(|v| v.abs()).sum();
        println!("kappa={kappa:>6}: w = {w:.4?}, |w|_1 = {l1:.4}");
    }
    println!("min-l2 solution: {:.4?}", min_l2.as_slice());
    Ok(())
}
