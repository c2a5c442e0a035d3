//! Evaluate every distillation loss at one logit vector and compare its
//! analytic gradient with finite differences.
//!
//!     cargo run --example loss_gradients

use dirdistill::gradcheck::{numeric_gradient, vector_relative_error, FD_FLOOR, FD_STEP};
use dirdistill::losses::{self, Divergence, LossValueGrad};
use dirdistill::{DirichletParams, EnsembleSlice, ProbVector, Result};

fn model(z: &[f64]) -> Result<DirichletParams> {
    DirichletParams::new(z.iter().map(|v| v.exp()).collect())
}

fn main() -> Result<()> {
    let z = vec![1.2, 0.3, -0.5, 0.8];
    let members = EnsembleSlice::new(vec![
        vec![0.6, 0.2, 0.1, 0.1],
        vec![0.5, 0.3, 0.1, 0.1],
        vec![0.7, 0.1, 0.1, 0.1],
    ])?;
    let mean = members.mean();
    let proxy = dirdistill::fit_proxy(&members, &Default::default())?;
    let target = ProbVector::new(mean.as_slice().to_vec())?;

    type Loss<'a> = Box<dyn Fn(&DirichletParams) -> Result<LossValueGrad> + 'a>;
    let all: Vec<(&str, Loss)> = vec![
        ("soft CE", Box::new(|m| losses::soft_ce(m, &target))),
        ("NLL", Box::new(|m| losses::dirichlet_nll(m, &members))),
        ("KL", Box::new(|m| losses::kl_forward(m, &proxy))),
        ("RKL", Box::new(|m| losses::kl_reverse(m, &proxy))),
        (
            "RKL+1",
            Box::new(|m| losses::with_plus_one(Divergence::Reverse, m, &proxy)),
        ),
        (
            "KL, T=2",
            Box::new(|m| losses::grad_temperature(m, &proxy, 2.0, false)),
        ),
    ];
    let idx: Vec<usize> = (0..z.len()).collect();
    for (name, f) in &all {
        let l = f(&model(&z)?)?;
        let num = numeric_gradient(
            |x| model(x).and_then(|m| f(&m)).map_or(f64::NAN, |l| l.value),
            &z,
            &idx,
            FD_STEP,
        );
        println!(
            "{name:<8} value {:>10.5}  grad {:?}  fd error {:.1e}",
            l.value,
            l.grad_z
                .iter()
                .map(|g| (g * 1e4).round() / 1e4)
                .collect::<Vec<_>>(),
            vector_relative_error(&l.grad_z, &num, FD_FLOOR)
        );
    }
    Ok(())
}
