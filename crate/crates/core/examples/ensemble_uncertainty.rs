//! Uncertainty of an ensemble's predictions for one input: agreeing versus
//! disagreeing members.
//!
//!     cargo run --example ensemble_uncertainty

use dirdistill::EnsembleSlice;

fn main() -> dirdistill::Result<()> {
    let agree = EnsembleSlice::new(vec![vec![0.34, 0.33, 0.33]; 5])?;
    let disagree = EnsembleSlice::new(vec![
        vec![0.9, 0.05, 0.05],
        vec![0.05, 0.9, 0.05],
        vec![0.05, 0.05, 0.9],
        vec![0.8, 0.1, 0.1],
        vec![0.1, 0.1, 0.8],
    ])?;
    for (name, s) in [("agreeing", &agree), ("disagreeing", &disagree)] {
        let r = s.report()?;
        println!(
            "{name:<12} total {:.4}  MI {:.4}  EPKL {:.4}  RMI {:.4}  MKL {:.4}",
            r.total_uncertainty,
            r.mutual_info,
            r.epkl,
            r.rmi,
            s.mkl()
        );
    }
    Ok(())
}
