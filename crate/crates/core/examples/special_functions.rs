//! Print lnΓ, ψ and ψ′ over a log-spaced grid and check the recurrences.
//!
//!     cargo run --example special_functions

use dirdistill::special::{digamma, lgamma, trigamma};

fn main() {
    println!(
        "{:>10} {:>22} {:>22} {:>22}",
        "x", "lgamma", "digamma", "trigamma"
    );
    for e in -3..=4 {
        let x = 10f64.powi(e);
        println!(
            "{x:>10.0e} {:>22.15e} {:>22.15e} {:>22.15e}",
            lgamma(x),
            digamma(x),
            trigamma(x)
        );
    }
    let worst = (0..=100)
        .map(|i| 10f64.powf(-4.0 + i as f64 * 0.08))
        .map(|x| (digamma(x + 1.0) - digamma(x) - 1.0 / x).abs() / digamma(x).abs().max(1.0))
        .fold(0.0, f64::max);
    println!("worst relative digamma recurrence error: {worst:.2e}");
}
