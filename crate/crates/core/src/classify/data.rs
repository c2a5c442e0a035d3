use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;

/// Centres of the in-distribution blobs lie on a circle of this radius.
pub const BLOB_RADIUS: f64 = 3.0;
/// OOD points have norm drawn uniformly from this range.
pub const OOD_RADIUS: (f64, f64) = (8.0, 10.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub classes: usize,
    pub n_per_class: usize,
    pub dim: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            classes: 3,
            n_per_class: 500,
            dim: 2,
        }
    }
}

/// Gaussian blobs with a held-out test split and a far-away OOD ring.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub classes: usize,
    pub dim: usize,
    pub seed: u64,
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub test_inputs: Vec<Vec<f64>>,
    pub test_labels: Vec<usize>,
    pub ood_inputs: Vec<Vec<f64>>,
}

fn blob_centre(k: usize, classes: usize, dim: usize) -> Vec<f64> {
    let angle = std::f64::consts::TAU * k as f64 / classes as f64;
    let mut c = vec![0.0; dim];
    c[0] = BLOB_RADIUS * angle.cos();
    c[1] = BLOB_RADIUS * angle.sin();
    c
}

fn blobs<R: Rng>(classes: usize, n: usize, dim: usize, rng: &mut R) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut inputs = Vec::with_capacity(classes * n);
    let mut labels = Vec::with_capacity(classes * n);
    for k in 0..classes {
        let centre = blob_centre(k, classes, dim);
        for _ in 0..n {
            let x = centre
                .iter()
                .map(|c| {
                    let z: f64 = StandardNormal.sample(rng);
                    c + z
                })
                .collect::<Vec<f64>>();
            inputs.push(x);
            labels.push(k);
        }
    }
    (inputs, labels)
}

/// Train and test sets hold `n_per_class` points per class each. The OOD
/// set has as many points as the test set, spread uniformly in direction.
pub fn gen_synthetic(
    classes: usize,
    n_per_class: usize,
    dim: usize,
    seed: u64,
) -> Result<SyntheticDataset> {
    if classes < 2 || dim < 2 || n_per_class == 0 {
        return Err(Error::InvalidArgument(format!(
            "need K >= 2, D >= 2 and at least one point per class, got K={classes} D={dim} n={n_per_class}"
        )));
    }
    let (inputs, labels) = blobs(classes, n_per_class, dim, &mut stream(seed, 0));
    let (test_inputs, test_labels) = blobs(classes, n_per_class, dim, &mut stream(seed, 1));
    let mut rng = stream(seed, 2);
    let ood_inputs = (0..classes * n_per_class)
        .map(|_| {
            let dir: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            let r = rng.random_range(OOD_RADIUS.0..OOD_RADIUS.1);
            dir.into_iter().map(|v| v * r / norm).collect()
        })
        .collect();
    Ok(SyntheticDataset {
        classes,
        dim,
        seed,
        inputs,
        labels,
        test_inputs,
        test_labels,
        ood_inputs,
    })
}

impl SyntheticDataset {
    pub fn from_config(cfg: &DataConfig, seed: u64) -> Result<Self> {
        gen_synthetic(cfg.classes, cfg.n_per_class, cfg.dim, seed)
    }
}
