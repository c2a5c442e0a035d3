//! Gradient ratio of the true-class logit against the rest, for every loss,
//! as the number of classes grows.
//!
//!     cargo run --release --example gradient_ratio

use dirdistill::grad_ratio::{sweep, RatioLoss, ScenarioKind, SweepParams};

fn main() -> dirdistill::Result<()> {
    let ks = [10, 100, 1000, 10000];
    let table = sweep(
        &RatioLoss::ALL,
        &ks,
        &ScenarioKind::ALL,
        &SweepParams::default(),
        false,
    )?;
    for scenario in ScenarioKind::ALL {
        println!("{}", scenario.name());
        for loss in RatioLoss::ALL {
            let cells: Vec<String> = ks
                .iter()
                .map(|&k| {
                    table
                        .get(scenario, loss, k)
                        .map_or("-".into(), |r| format!("{r:>12.4e}"))
                })
                .collect();
            println!("  {:<6} {}", loss.name(), cells.join(" "));
        }
    }
    Ok(())
}
