//! A quick invariant suite runnable from an installed binary.
//!
//! Every check is seeded and serial, so the report is byte-identical
//! between runs and thread counts.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::dirichlet::{DirichletParams, ProbVector};
use crate::ensemble::EnsembleSlice;
use crate::error::Result;
use crate::grad_ratio::{sweep, RatioLoss, ScenarioKind, SweepParams};
use crate::gradcheck::{
    numeric_gradient, relative_error, vector_relative_error, FD_FLOOR, FD_STEP,
};
use crate::losses::{self, Divergence, LossValueGrad};
use crate::proxy::{fit_proxy, ProxyConfig};
use crate::rng::stream;
use crate::sequence::beam::{beam_search, greedy};
use crate::sequence::mc::seq_uncertainty_mc;
use crate::sequence::model::ConstantDirichlet;
use crate::special::{digamma, lgamma, trigamma};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    /// Largest error seen, in the check's own metric.
    pub error: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.error <= self.tolerance
    }
}

fn check(name: &'static str, errors: impl IntoIterator<Item = f64>, tolerance: f64) -> Check {
    // NaN counts as a failure.
    let error = errors.into_iter().fold(0.0, |m: f64, e| {
        if e.is_nan() || m.is_nan() {
            f64::NAN
        } else {
            m.max(e)
        }
    });
    Check {
        name,
        error: if error.is_nan() { f64::INFINITY } else { error },
        tolerance,
    }
}

fn random_dirichlet<R: Rng>(k: usize, rng: &mut R) -> DirichletParams {
    let alpha = (0..k)
        .map(|_| (rng.random::<f64>() * 6.0 - 3.0).exp())
        .collect();
    DirichletParams::new(alpha).expect("positive concentrations")
}

fn random_probs<R: Rng>(k: usize, rng: &mut R) -> Vec<f64> {
    let g = Gamma::new(1.0, 1.0).expect("valid gamma");
    let v: Vec<f64> = (0..k).map(|_| g.sample(rng) + 1e-3).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

/// Norm-wise relative error between analytic logit gradients and finite
/// differences for a loss of the standard-head logits.
fn fd_error<F>(z: &[f64], f: F) -> Result<f64>
where
    F: Fn(&DirichletParams) -> Result<LossValueGrad>,
{
    let alpha = |z: &[f64]| DirichletParams::new(z.iter().map(|v| v.exp()).collect());
    let g = f(&alpha(z)?)?.grad_z;
    let value = |z: &[f64]| alpha(z).and_then(|a| f(&a)).map_or(f64::NAN, |l| l.value);
    let indices: Vec<usize> = (0..z.len()).collect();
    let num = numeric_gradient(value, z, &indices, FD_STEP);
    Ok(vector_relative_error(&g, &num, FD_FLOOR))
}

pub fn run_selftest(seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    out.push(check(
        "special_values",
        [
            (digamma(1.0) + EULER_GAMMA).abs(),
            (trigamma(1.0) - std::f64::consts::PI.powi(2) / 6.0).abs(),
            lgamma(1.0).abs(),
            lgamma(2.0).abs(),
        ],
        1e-12,
    ));
    let grid: Vec<f64> = (0..=120)
        .map(|i| 10f64.powf(-6.0 + i as f64 * 0.1))
        .collect();
    out.push(check(
        "special_recurrences",
        grid.iter().flat_map(|&x| {
            [
                (digamma(x + 1.0) - digamma(x) - 1.0 / x).abs() / digamma(x).abs().max(1.0),
                (trigamma(x) - trigamma(x + 1.0) - 1.0 / (x * x)).abs() / trigamma(x).max(1.0),
                (lgamma(x + 1.0) - lgamma(x) - x.ln()).abs() / lgamma(x + 1.0).abs().max(1.0),
            ]
        }),
        1e-10,
    ));

    let mut rng = stream(seed, 0);
    let mut identity = Vec::new();
    let mut self_kl = Vec::new();
    for i in 0..200 {
        let d = random_dirichlet(2 + i % 20, &mut rng);
        let epkl = (d.k() as f64 - 1.0) / d.alpha0();
        identity.push(relative_error(d.mutual_info() + d.rmi(), epkl, 1e-300));
        identity.push(relative_error(d.epkl(), epkl, 1e-300));
        self_kl.push(d.kl(&d)?.abs());
    }
    out.push(check("mi_plus_rmi_equals_epkl", identity, 1e-9));
    out.push(check("dirichlet_kl_self_zero", self_kl, 1e-12));

    let mut rng = stream(seed, 1);
    let mut fd = Vec::new();
    for i in 0..40 {
        let k = [2, 3, 10][i % 3];
        let z: Vec<f64> = (0..k).map(|_| rng.random::<f64>() * 4.0 - 1.0).collect();
        let proxy = random_dirichlet(k, &mut rng);
        let target = ProbVector::new(random_probs(k, &mut rng))?;
        let slice = EnsembleSlice::new((0..4).map(|_| random_probs(k, &mut rng)).collect())?;
        fd.push(fd_error(&z, |m| losses::soft_ce(m, &target))?);
        fd.push(fd_error(&z, |m| losses::dirichlet_nll(m, &slice))?);
        fd.push(fd_error(&z, |m| losses::kl_forward(m, &proxy))?);
        fd.push(fd_error(&z, |m| losses::kl_reverse(m, &proxy))?);
        fd.push(fd_error(&z, |m| {
            losses::with_plus_one(Divergence::Reverse, m, &proxy)
        })?);
        for t in [0.5, 2.0] {
            fd.push(fd_error(&z, |m| {
                losses::grad_temperature(m, &proxy, t, false)
            })?);
        }
    }
    out.push(check("loss_gradients_match_finite_differences", fd, 1e-6));

    let slice = EnsembleSlice::new(vec![vec![0.8, 0.2], vec![0.6, 0.4]])?;
    let beta = fit_proxy(&slice, &ProxyConfig::default())?;
    let b = beta.concentrations();
    out.push(check(
        "proxy_worked_example",
        [(b[0] - 15.07).abs(), (b[1] - 7.03).abs()],
        0.01,
    ));

    let table = sweep(
        &[RatioLoss::Nll, RatioLoss::Kl],
        &[10, 100, 1000, 10000],
        &[ScenarioKind::Initialization],
        &SweepParams::default(),
        false,
    )?;
    let mut increases = Vec::new();
    for loss in [RatioLoss::Nll, RatioLoss::Kl] {
        let rhos: Vec<f64> = table
            .rows
            .iter()
            .filter(|r| r.loss == loss)
            .map(|r| r.rho)
            .collect();
        increases.extend(rhos.windows(2).map(|w| (w[1] - w[0]).max(0.0)));
    }
    out.push(check("grad_ratio_non_increasing", increases, 0.0));

    let mut rng = stream(seed, 2);
    let mut beam_gap = Vec::new();
    for _ in 0..20 {
        let tables: Vec<Vec<f64>> = (0..16).map(|_| random_probs(4, &mut rng)).collect();
        let step = |prefix: &[usize]| Ok(tables[prefix.iter().sum::<usize>() % 16].clone());
        let g = greedy(step, 6, 3)?;
        let b = beam_search(step, 1, 6, 3)?;
        beam_gap.push(if b[0].tokens == g.tokens {
            (b[0].log_prob - g.log_prob).abs()
        } else {
            f64::INFINITY
        });
    }
    out.push(check("beam_width_one_is_greedy", beam_gap, 1e-12));

    let d = DirichletParams::new(vec![2.0, 0.5, 1.5, 4.0])?;
    let student = ConstantDirichlet(d.clone());
    let mut mc = Vec::new();
    for s in [1, 5, 17] {
        let u = seq_uncertainty_mc(&student, &[], s, 10, 3, seed)?;
        mc.extend([
            (u.h - d.mean().entropy()).abs(),
            (u.i - d.mutual_info()).abs(),
            (u.k - 3.0 / d.alpha0()).abs(),
            (u.m - d.rmi()).abs(),
        ]);
    }
    out.push(check("constant_student_mc_matches_closed_forms", mc, 1e-12));
    Ok(out)
}

/// `name,passed,error,tolerance` lines under the build header.
pub fn report_csv(checks: &[Check]) -> String {
    let mut out = format!("# {}\nname,passed,error,tolerance\n", crate::BUILD_ID);
    for c in checks {
        let f = crate::fmt_float;
        let _ = writeln!(
            out,
            "{},{},{},{}",
            c.name,
            c.passed(),
            f(c.error),
            f(c.tolerance)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        let checks = run_selftest(0).unwrap();
        for c in &checks {
            assert!(c.passed(), "{c:?}");
        }
        assert_eq!(report_csv(&checks), report_csv(&run_selftest(0).unwrap()));
    }
}
