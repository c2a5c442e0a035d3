//! Monte-Carlo sequence-level uncertainty for an autoregressive Dirichlet
//! student.
//!
//! S sequences are sampled from the student's expected next-token
//! distribution. Along each, the per-step closed forms are averaged over
//! that sequence's own length, then over the S samples:
//!
//! * `h`: entropy of the expected categorical (total uncertainty)
//! * `i`: mutual information
//! * `k`: expected pairwise KL, (K − 1)/α₀
//! * `m`: reverse mutual information
//!
//! Per step `i + m = k`, so the same holds for the averages.

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::model::StepDirichlet;
use crate::error::{Error, Result};
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeqUncertainty {
    pub h: f64,
    pub i: f64,
    pub k: f64,
    pub m: f64,
    pub samples: usize,
}

fn sample_token<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (t, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return t;
        }
    }
    probs.len() - 1
}

/// Sample `s` draws its RNG from stream `s` of `seed`, so results do not
/// depend on how samples are spread over threads.
pub fn seq_uncertainty_mc<M: StepDirichlet + Sync>(
    student: &M,
    code: &[f64],
    samples: usize,
    max_len: usize,
    eos: usize,
    seed: u64,
) -> Result<SeqUncertainty> {
    if samples == 0 {
        return Err(Error::InvalidArgument(
            "need at least one Monte-Carlo sample".into(),
        ));
    }
    let per_sample: Vec<[f64; 4]> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = stream(seed, s as u64);
            let mut tokens = Vec::with_capacity(max_len);
            let mut sums = [0.0; 4];
            while tokens.len() < max_len && tokens.last() != Some(&eos) {
                let d = student.step_dirichlet(code, &tokens)?;
                let mean = d.mean();
                sums[0] += mean.entropy();
                sums[1] += d.mutual_info();
                sums[2] += d.epkl();
                sums[3] += d.rmi();
                tokens.push(sample_token(mean.as_slice(), &mut rng));
            }
            let len = tokens.len() as f64;
            Ok(sums.map(|v| v / len))
        })
        .collect::<Result<_>>()?;
    let mut acc = [0.0; 4];
    for row in &per_sample {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    let n = samples as f64;
    let out = SeqUncertainty {
        h: acc[0] / n,
        i: acc[1] / n,
        k: acc[2] / n,
        m: acc[3] / n,
        samples,
    };
    if [out.h, out.i, out.k, out.m].iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite sequence uncertainty {out:?}"
        )));
    }
    Ok(out)
}

/// CSV with columns `input_id,H,I,K,M,S`.
pub fn uncertainty_csv(rows: &[(usize, SeqUncertainty)]) -> String {
    let mut out = format!("# {}\ninput_id,H,I,K,M,S\n", crate::BUILD_ID);
    for (id, u) in rows {
        let f = crate::fmt_float;
        let _ = writeln!(
            out,
            "{id},{},{},{},{},{}",
            f(u.h),
            f(u.i),
            f(u.k),
            f(u.m),
            u.samples
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dirichlet::DirichletParams;
    use crate::sequence::model::ConstantDirichlet;

    #[test]
    fn constant_student_matches_closed_forms() {
        let d = DirichletParams::new(vec![2.0, 0.5, 1.5, 4.0]).unwrap();
        let student = ConstantDirichlet(d.clone());
        for s in [1, 7, 64] {
            let u = seq_uncertainty_mc(&student, &[], s, 12, 3, 5).unwrap();
            assert!((u.h - d.mean().entropy()).abs() < 1e-12);
            assert!((u.i - d.mutual_info()).abs() < 1e-12);
            assert!((u.k - 3.0 / d.alpha0()).abs() < 1e-12);
            assert!((u.m - d.rmi()).abs() < 1e-12);
            assert!((u.i + u.m - u.k).abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let student = ConstantDirichlet(DirichletParams::new(vec![1.0, 2.0, 3.0]).unwrap());
        let a = seq_uncertainty_mc(&student, &[], 10, 5, 2, 1).unwrap();
        let b = seq_uncertainty_mc(&student, &[], 10, 5, 2, 1).unwrap();
        assert_eq!(a, b);
        assert!(seq_uncertainty_mc(&student, &[], 0, 5, 2, 1).is_err());
    }

    #[test]
    fn csv_header() {
        let u = SeqUncertainty {
            h: 1.0,
            i: 0.1,
            k: 0.3,
            m: 0.2,
            samples: 4,
        };
        let csv = uncertainty_csv(&[(3, u)]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[1], "input_id,H,I,K,M,S");
        assert!(lines[2].starts_with("3,1.0000000000000000e0,"));
    }
}
