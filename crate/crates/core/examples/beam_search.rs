//! Beam search against greedy decoding on a small hand-written model in
//! which the greedy first step leads to a worse sequence.
//!
//!     cargo run --example beam_search

use dirdistill::sequence::{beam_search, greedy};

const EOS: usize = 2;

fn step(prefix: &[usize]) -> dirdistill::Result<Vec<f64>> {
    Ok(match prefix {
        [] => vec![0.55, 0.45, 0.0],
        [0] => vec![0.34, 0.33, 0.33],
        [1] => vec![0.0, 0.05, 0.95],
        _ => vec![0.1, 0.1, 0.8],
    })
}

fn main() -> dirdistill::Result<()> {
    let g = greedy(step, 4, EOS)?;
    println!("greedy   {:?}  log p {:.4}", g.tokens, g.log_prob);
    for b in [1, 2, 4] {
        for (rank, h) in beam_search(step, b, 4, EOS)?.iter().enumerate() {
            println!("beam {b} #{rank} {:?}  log p {:.4}", h.tokens, h.log_prob);
        }
    }
    Ok(())
}
