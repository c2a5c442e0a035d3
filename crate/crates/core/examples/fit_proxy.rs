//! Fit a proxy Dirichlet to a two-member ensemble with both estimators.
//!
//!     cargo run --example fit_proxy

use dirdistill::proxy::fit_proxy_detailed;
use dirdistill::{EnsembleSlice, Estimator, ProxyConfig};

fn main() -> dirdistill::Result<()> {
    let slice = EnsembleSlice::new(vec![vec![0.8, 0.2], vec![0.6, 0.4]])?;
    for est in [Estimator::MklBased, Estimator::EpklBased] {
        for plus_one in [true, false] {
            let cfg = ProxyConfig::default()
                .with_estimator(est)
                .with_plus_one(plus_one);
            let fit = fit_proxy_detailed(&slice, &cfg)?;
            println!(
                "{est:?} plus_one={plus_one:<5} precision {:.3}  beta {:?}  capped {}",
                fit.precision,
                fit.beta.concentrations(),
                fit.capped
            );
        }
    }
    // Identical members carry no spread, so the precision is capped.
    let same = EnsembleSlice::new(vec![vec![0.7, 0.3]; 4])?;
    let fit = fit_proxy_detailed(&same, &ProxyConfig::default())?;
    println!(
        "identical members: precision {:.1}, capped {}",
        fit.precision, fit.capped
    );
    Ok(())
}
