//! Counter-term coefficients, closed forms, the generic recursion and the
//! structure dump.

use hbflow::counterterms::{
    enumerate_compositions, gamma_closed_sigma0, gamma_closed_sigma1, gamma_generic, structure, CoefficientSchedule,
    Coefficients, CounterTermConfig, CtMode,
};
use hbflow::problems::TwoDModel;

fn main() -> hbflow::Result<()> {
    let mu = 0.7;
    for (k, c) in CoefficientSchedule::new(mu).take(4).enumerate() {
        println!("k={k}: {c:?}");
    }
    println!("limit: {:?}", Coefficients::asymptotic(mu));

    for m in 2..=4 {
        let sets: Vec<_> = enumerate_compositions(m, 2).into_iter().map(|c| c.0).collect();
        println!("compositions m={m}, sigma=2: {sets:?}");
    }

    let model = TwoDModel::new(1.0, 0.6);
    let beta = [1.2, 0.9];
    let cfg = CounterTermConfig::new(3, mu, CtMode::FiniteK);
    println!("gamma0 closed  {:?}", gamma_closed_sigma0(&model, &beta, 10, mu, CtMode::FiniteK)?);
    println!("gamma0 generic {:?}", gamma_generic(&model, &beta, 10, 0, mu, &cfg)?);
    println!("gamma1 limit   {:?}", gamma_closed_sigma1(&model, &beta, mu)?);
    println!("gamma1 generic {:?}", gamma_generic(&model, &beta, 200, 1, mu, &cfg)?);

    let s = structure(3, 1);
    println!("alpha=3, sigma=1: {} terms in {} families", s.term_count, s.families.len());
    Ok(())
}
