//! Losses, analytic derivatives and the finite-difference oracle.

use hbflow::problems::{eval_loss, fd_oracle, grad, hvp, omega1, omega2, t3, FdKind, QuadraticProblem, TwoDModel};

fn main() -> hbflow::Result<()> {
    let model = TwoDModel::new(1.0, 0.6);
    let beta = [2.8, 3.5];
    println!("L(beta)         = {}", eval_loss(&model, &beta)?);
    println!("grad            = {:?}", grad(&model, &beta)?);
    let g = grad(&model, &beta)?;
    println!("H grad          = {:?}", hvp(&model, &beta, &g)?);
    println!("T[g, g]         = {:?}", t3(&model, &beta, &g, &g)?);
    println!("omega1, omega2  = {:?}, {:?}", omega1(&model, &beta)?, omega2(&model, &beta)?);

    let fd = fd_oracle(&model, &beta, FdKind::Hvp(&g), 1e-5)?;
    println!("fd H grad       = {:?}", fd.value);
    let tiny = fd_oracle(&model, &beta, FdKind::Grad, 1e-12)?;
    println!("warnings at h=1e-12: {:?}", tiny.warnings);

    let q = QuadraticProblem::diagonal(&[1.0, 10.0]);
    println!("quadratic grad at (1,1) = {:?}", grad(&q, &[1.0, 1.0])?);
    Ok(())
}
