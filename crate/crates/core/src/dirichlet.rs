//! The Dirichlet distribution over the probability simplex and its
//! closed-form uncertainty measures.
//!
//! Every product of Gamma functions is evaluated in the log domain, so
//! concentrations in the 10⁵–10⁶ range are handled without overflow.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{digamma, lgamma, ln_minus_digamma, ln_minus_digamma_succ};

/// Sums within this distance of 1 are silently renormalised.
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

/// A categorical distribution: a point on the (K−1)-simplex.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    /// Validates and renormalises `probs`. Entries must be finite and
    /// non-negative, K ≥ 2, and the sum within [`SIMPLEX_TOLERANCE`] of 1.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a probability vector needs at least 2 entries, got {}",
                probs.len()
            )));
        }
        if let Some((i, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return Err(Error::InvalidArgument(format!(
                "probability entry {i} is {p}"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "probabilities sum to {sum}, not 1"
            )));
        }
        let mut probs = probs;
        if sum != 1.0 {
            probs.iter_mut().for_each(|p| *p /= sum);
        }
        Ok(Self(probs))
    }

    /// Uniform distribution over `k` classes.
    pub fn uniform(k: usize) -> Result<Self> {
        Self::new(vec![1.0 / k as f64; k])
    }

    /// Floors every entry at `floor` and renormalises.
    pub fn clamped(&self, floor: f64) -> Self {
        let mut probs: Vec<f64> = self.0.iter().map(|p| p.max(floor)).collect();
        let sum: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= sum);
        Self(probs)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the most probable class (first on ties).
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Shannon entropy in nats, with 0·ln 0 = 0.
    pub fn entropy(&self) -> f64 {
        entropy(&self.0)
    }

    /// Categorical KL(self ‖ other). Entries of `other` must be positive
    /// wherever `self` is.
    pub fn kl(&self, other: &ProbVector) -> Result<f64> {
        check_dims(self.len(), other.len())?;
        Ok(categorical_kl(&self.0, &other.0))
    }

    /// Total-variation distance ½ Σ |p − q|.
    pub fn total_variation(&self, other: &ProbVector) -> Result<f64> {
        check_dims(self.len(), other.len())?;
        Ok(0.5
            * self
                .0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>())
    }
}

impl std::ops::Index<usize> for ProbVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl<'de> Deserialize<'de> for ProbVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        ProbVector::new(v).map_err(serde::de::Error::custom)
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

pub(crate) fn categorical_kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, b)| a * (a.ln() - b.ln()))
        .sum()
}

pub(crate) fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// Concentration parameters α of a Dirichlet, with the precision α₀ cached.
///
/// The same type carries a model's output α and a proxy target β.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirichletParams {
    alpha: Vec<f64>,
    alpha0: f64,
}

impl DirichletParams {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a Dirichlet needs at least 2 concentrations, got {}",
                alpha.len()
            )));
        }
        if let Some((i, a)) = alpha
            .iter()
            .enumerate()
            .find(|(_, a)| !(a.is_finite() && **a > 0.0))
        {
            return Err(Error::InvalidArgument(format!(
                "concentration {i} is {a}, must be > 0"
            )));
        }
        let alpha0 = alpha.iter().sum();
        Ok(Self { alpha, alpha0 })
    }

    /// Dir(π̂ · α₀).
    pub fn from_mean_precision(mean: &ProbVector, precision: f64) -> Result<Self> {
        Self::new(mean.as_slice().iter().map(|p| p * precision).collect())
    }

    pub fn concentrations(&self) -> &[f64] {
        &self.alpha
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    pub fn k(&self) -> usize {
        self.alpha.len()
    }

    /// Adds `c` to every concentration.
    pub fn shifted(&self, c: f64) -> Result<Self> {
        Self::new(self.alpha.iter().map(|a| a + c).collect())
    }

    /// Multiplies every concentration by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.alpha.iter().map(|a| a * c).collect())
    }

    /// ln C(α) = ln Γ(α₀) − Σ ln Γ(α_k).
    pub fn log_normalizer(&self) -> f64 {
        lgamma(self.alpha0) - self.alpha.iter().map(|&a| lgamma(a)).sum::<f64>()
    }

    /// Log density at an interior point of the simplex.
    pub fn log_pdf(&self, pi: &ProbVector) -> Result<f64> {
        check_dims(self.k(), pi.len())?;
        if let Some((i, p)) = pi.as_slice().iter().enumerate().find(|(_, p)| **p <= 0.0) {
            return Err(Error::Domain(format!(
                "Dirichlet density needs interior points; entry {i} is {p}"
            )));
        }
        Ok(self.log_normalizer()
            + self
                .alpha
                .iter()
                .zip(pi.as_slice())
                .map(|(a, p)| (a - 1.0) * p.ln())
                .sum::<f64>())
    }

    /// Expected categorical π̂_k = α_k / α₀.
    pub fn mean(&self) -> ProbVector {
        ProbVector(self.alpha.iter().map(|a| a / self.alpha0).collect())
    }

    /// One draw π ~ Dir(α), by normalising independent Gamma(α_k, 1)
    /// variates. Very small concentrations can produce exact zeros.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ProbVector {
        let mut g: Vec<f64> = self
            .alpha
            .iter()
            .map(|&a| Gamma::new(a, 1.0).expect("positive shape").sample(rng))
            .collect();
        let total: f64 = g.iter().sum();
        if total > 0.0 {
            g.iter_mut().for_each(|v| *v /= total);
        } else {
            // Every variate underflowed; fall back to the largest concentration.
            let k = self
                .alpha
                .iter()
                .enumerate()
                .fold(0, |b, (i, a)| if *a > self.alpha[b] { i } else { b });
            g.iter_mut()
                .enumerate()
                .for_each(|(i, v)| *v = if i == k { 1.0 } else { 0.0 });
        }
        ProbVector(g)
    }

    /// Differential entropy of the Dirichlet density.
    pub fn diff_entropy(&self) -> f64 {
        let psi0 = digamma(self.alpha0);
        -self.log_normalizer()
            - self
                .alpha
                .iter()
                .map(|&a| (a - 1.0) * (digamma(a) - psi0))
                .sum::<f64>()
    }

    /// Entropy of the expected categorical (total uncertainty).
    pub fn total_uncertainty(&self) -> f64 {
        self.mean().entropy()
    }

    /// E_{π∼Dir}[H[π]], the expected data uncertainty.
    pub fn expected_data_uncertainty(&self) -> f64 {
        self.total_uncertainty() - self.mutual_info()
    }

    /// Mutual information between the label and π (knowledge uncertainty):
    /// −Σ (α_k/α₀)(ln(α_k/α₀) − ψ(α_k+1) + ψ(α₀+1)).
    pub fn mutual_info(&self) -> f64 {
        let tail0 = ln_minus_digamma_succ(self.alpha0);
        -self
            .alpha
            .iter()
            .map(|&a| a / self.alpha0 * (ln_minus_digamma_succ(a) - tail0))
            .sum::<f64>()
    }

    /// Expected pairwise KL between categoricals drawn from the Dirichlet:
    /// (K − 1)/α₀.
    pub fn epkl(&self) -> f64 {
        (self.k() as f64 - 1.0) / self.alpha0
    }

    /// Reverse mutual information E[KL(π̂ ‖ π)]:
    /// Σ (α_k/α₀)(ln(α_k/α₀) − ψ(α_k) + ψ(α₀)).
    pub fn rmi(&self) -> f64 {
        let tail0 = ln_minus_digamma(self.alpha0);
        self.alpha
            .iter()
            .map(|&a| a / self.alpha0 * (ln_minus_digamma(a) - tail0))
            .sum::<f64>()
            .max(0.0)
    }

    /// KL[Dir(self) ‖ Dir(other)].
    pub fn kl(&self, other: &DirichletParams) -> Result<f64> {
        check_dims(self.k(), other.k())?;
        Ok(dirichlet_kl(&self.alpha, self.alpha0, &other.alpha, other.alpha0).max(0.0))
    }

    /// All closed-form measures for this Dirichlet.
    pub fn report(&self) -> UncertaintyReport {
        let mean = self.mean();
        let total = mean.entropy();
        let mi = self.mutual_info();
        UncertaintyReport {
            total_uncertainty: total,
            expected_data_uncertainty: total - mi,
            mutual_info: mi,
            epkl: self.epkl(),
            rmi: self.rmi(),
            score_max_logprob: Some(mean.max().ln()),
        }
    }
}

impl<'de> Deserialize<'de> for DirichletParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            alpha: Vec<f64>,
        }
        let raw = Raw::deserialize(d)?;
        DirichletParams::new(raw.alpha).map_err(serde::de::Error::custom)
    }
}

/// KL between two Dirichlets given raw concentrations and their sums. May be
/// a rounding-level negative number when the arguments nearly coincide.
pub(crate) fn dirichlet_kl(p: &[f64], p0: f64, q: &[f64], q0: f64) -> f64 {
    let psi_p0 = digamma(p0);
    let mut value = lgamma(p0) - lgamma(q0);
    for (&a, &b) in p.iter().zip(q) {
        value += lgamma(b) - lgamma(a) + (a - b) * (digamma(a) - psi_p0);
    }
    value
}

/// Named uncertainty measures for one prediction, all in nats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    pub total_uncertainty: f64,
    pub expected_data_uncertainty: f64,
    pub mutual_info: f64,
    pub epkl: f64,
    pub rmi: f64,
    /// ln of the largest predictive probability.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub score_max_logprob: Option<f64>,
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;

    fn dir(a: &[f64]) -> DirichletParams {
        DirichletParams::new(a.to_vec()).unwrap()
    }

    fn pv(p: &[f64]) -> ProbVector {
        ProbVector::new(p.to_vec()).unwrap()
    }

    #[test]
    fn prob_vector_validation() {
        assert!(ProbVector::new(vec![1.0]).is_err());
        assert!(ProbVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbVector::new(vec![-0.1, 1.1]).is_err());
        assert!(ProbVector::new(vec![f64::NAN, 1.0]).is_err());
        let p = ProbVector::new(vec![0.3, 0.7 + 5e-7]).unwrap();
        assert!((p.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn params_validation() {
        assert!(DirichletParams::new(vec![1.0]).is_err());
        assert!(DirichletParams::new(vec![1.0, 0.0]).is_err());
        assert!(DirichletParams::new(vec![1.0, f64::INFINITY]).is_err());
        let d = dir(&[1.0, 2.0, 3.5]);
        assert_eq!(d.alpha0(), 6.5);
    }

    #[test]
    fn sample_mean_matches() {
        let d = dir(&[2.0, 5.0, 3.0]);
        let mut rng = crate::rng::stream(3, 0);
        let n = 20_000;
        let mut acc = [0.0; 3];
        for _ in 0..n {
            let p = d.sample(&mut rng);
            assert!((p.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            acc.iter_mut()
                .zip(p.as_slice())
                .for_each(|(a, v)| *a += v / n as f64);
        }
        // Standard error of each component is below 0.001.
        for (a, m) in acc.iter().zip(d.mean().as_slice()) {
            assert!((a - m).abs() < 0.005, "{a} vs {m}");
        }
    }

    #[test]
    fn log_pdf_values() {
        assert!(dir(&[1.0, 1.0]).log_pdf(&pv(&[0.3, 0.7])).unwrap().abs() < 1e-14);
        let v = dir(&[1.0, 1.0, 1.0])
            .log_pdf(&pv(&[0.2, 0.5, 0.3]))
            .unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-13);
        // ln Γ(5) − ln Γ(2) − ln Γ(3) + ln 0.4 + 2 ln 0.6
        let v = dir(&[2.0, 3.0]).log_pdf(&pv(&[0.4, 0.6])).unwrap();
        assert!((v - 0.54696467038186387864).abs() < 1e-12);
        assert!(dir(&[2.0, 3.0]).log_pdf(&pv(&[0.0, 1.0])).is_err());
        assert!(dir(&[2.0, 3.0]).log_pdf(&pv(&[0.2, 0.3, 0.5])).is_err());
    }

    #[test]
    fn mean_values() {
        assert_eq!(dir(&[2.0, 2.0, 4.0]).mean().as_slice(), &[0.25, 0.25, 0.5]);
        assert_eq!(dir(&[1.0, 1.0]).mean().as_slice(), &[0.5, 0.5]);
        assert_eq!(dir(&[90.0, 10.0]).mean().as_slice(), &[0.9, 0.1]);
    }

    #[test]
    fn entropy_values() {
        assert!(dir(&[1.0, 1.0]).diff_entropy().abs() < 1e-13);
        assert!((dir(&[1.0, 1.0, 1.0]).diff_entropy() + 2f64.ln()).abs() < 1e-13);
        assert!((dir(&[5.0, 5.0]).diff_entropy() + 0.48064045430621329255).abs() < 1e-12);
        assert!((dir(&[1.0, 1.0]).total_uncertainty() - 2f64.ln()).abs() < 1e-15);
        assert!(dir(&[1000.0, 1e-6]).total_uncertainty() < 1e-7);
        let h = -(0.2f64 * 0.2f64.ln() + 0.3 * 0.3f64.ln() + 0.5 * 0.5f64.ln());
        assert!((dir(&[2.0, 3.0, 5.0]).total_uncertainty() - h).abs() < 1e-14);
    }

    #[test]
    fn information_measures() {
        assert!((dir(&[1.0, 1.0]).mutual_info() - (2f64.ln() - 0.5)).abs() < 1e-13);
        assert!((dir(&[1.0, 1.0, 1.0]).mutual_info() - 0.26527895533477635806).abs() < 1e-13);
        assert!(dir(&[1e6, 1e6]).mutual_info() <= 1e-5);
        assert!(dir(&[1e6, 1e6]).rmi() <= 1e-5);
        assert!((dir(&[1.0, 1.0, 1.0]).epkl() - 2.0 / 3.0).abs() < 1e-15);
        assert!((dir(&[150.0, 50.0]).epkl() - 0.005).abs() < 1e-15);
        let d = dir(&[3.0, 4.0, 5.0]);
        assert!((d.rmi() - 0.088154351143877352326).abs() < 1e-13);
        assert!((d.mutual_info() - 0.078512315522789314341).abs() < 1e-13);
        assert!((d.rmi() - (d.epkl() - d.mutual_info())).abs() < 1e-10);
        let c = 7.5;
        assert!((d.scaled(c).unwrap().epkl() - d.epkl() / c).abs() < 1e-15);
    }

    #[test]
    fn kl_values() {
        let p = dir(&[1.0, 5.0]);
        assert_eq!(p.kl(&p).unwrap(), 0.0);
        assert!(
            (dir(&[1.0, 1.0]).kl(&dir(&[2.0, 2.0])).unwrap() - 0.20824053077194499919).abs()
                < 1e-12
        );
        // Swapping both arguments' class labels leaves KL unchanged, so
        // asymmetry needs a pair that is not a relabelling of itself.
        let q = dir(&[2.0, 2.0]);
        let forward = p.kl(&q).unwrap();
        let backward = q.kl(&p).unwrap();
        assert!((forward - backward).abs() > 1e-3);
        assert!(p.kl(&dir(&[1.0, 1.0, 1.0])).is_err());
    }

    #[test]
    fn report_invariants() {
        let r = dir(&[0.3, 2.0, 7.0, 0.05]).report();
        assert!(
            (r.mutual_info - (r.total_uncertainty - r.expected_data_uncertainty)).abs() < 1e-10
        );
        assert!(r.mutual_info >= -1e-10);
        assert!(r.epkl >= r.mutual_info - 1e-10);
    }
}
