//! Uncertainty decomposition for a few Dirichlets: sharp, flat and
//! in between. Total = data + knowledge, and MI + RMI = EPKL.
//!
//!     cargo run --example dirichlet_uncertainty

use dirdistill::DirichletParams;

fn main() -> dirdistill::Result<()> {
    let cases = [
        ("confident", vec![100.0, 1.0, 1.0]),
        ("data noise", vec![50.0, 50.0, 50.0]),
        ("unfamiliar", vec![1.0, 1.0, 1.0]),
        ("sparse", vec![0.1, 0.1, 0.1]),
    ];
    println!(
        "{:<12} {:>8} {:>8} {:>8} {:>8} {:>8}",
        "", "total", "data", "MI", "EPKL", "RMI"
    );
    for (name, alpha) in cases {
        let d = DirichletParams::new(alpha)?;
        let r = d.report();
        println!(
            "{name:<12} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            r.total_uncertainty, r.expected_data_uncertainty, r.mutual_info, r.epkl, r.rmi
        );
    }
    let p = DirichletParams::new(vec![2.0, 3.0, 5.0])?;
    let q = DirichletParams::new(vec![1.0, 1.0, 1.0])?;
    println!("KL(p||q) = {:.6}  KL(q||p) = {:.6}", p.kl(&q)?, q.kl(&p)?);
    Ok(())
}
