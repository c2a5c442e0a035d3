use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;

/// Largest number of chain states a task may allocate.
const MAX_STATES: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeqTaskConfig {
    /// Content tokens; EOS and BOS are added on top.
    pub content_tokens: usize,
    /// Markov order of every chain.
    pub order: usize,
    pub max_len: usize,
    /// In-distribution conditioning tags, each with its own chain.
    pub tags: usize,
    /// Held-out tags whose chains are relabelled copies of training chains.
    pub ood_tags: usize,
    pub code_dim: usize,
    pub train_per_tag: usize,
    pub test_per_tag: usize,
    /// Probability of EOS after any content token.
    pub eos_prob: f64,
    /// Dirichlet concentration of each transition row; small is peaky.
    pub row_concentration: f64,
}

impl Default for SeqTaskConfig {
    fn default() -> Self {
        Self {
            content_tokens: 20,
            order: 1,
            max_len: 20,
            tags: 4,
            ood_tags: 4,
            code_dim: 4,
            train_per_tag: 150,
            test_per_tag: 25,
            eos_prob: 0.1,
            row_concentration: 0.3,
        }
    }
}

impl SeqTaskConfig {
    pub fn eos(&self) -> usize {
        self.content_tokens
    }

    pub fn bos(&self) -> usize {
        self.content_tokens + 1
    }

    /// Output vocabulary: content tokens plus EOS.
    pub fn output_classes(&self) -> usize {
        self.content_tokens + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.content_tokens + 2 < 4 {
            return Err(Error::InvalidArgument(
                "the vocabulary needs at least 4 tokens including BOS/EOS".into(),
            ));
        }
        if self.order == 0 || self.max_len == 0 || self.tags == 0 || self.code_dim == 0 {
            return Err(Error::InvalidArgument(
                "order, max_len, tags and code_dim must be positive".into(),
            ));
        }
        let states = (self.content_tokens + 1).checked_pow(self.order as u32);
        if states.is_none_or(|s| s > MAX_STATES) {
            return Err(Error::InvalidArgument(format!(
                "order {} gives too many chain states",
                self.order
            )));
        }
        if !(self.eos_prob > 0.0 && self.eos_prob < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "eos_prob must lie in (0,1), got {}",
                self.eos_prob
            )));
        }
        if self.row_concentration.is_nan() || self.row_concentration <= 0.0 {
            return Err(Error::InvalidArgument(
                "row_concentration must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// An order-n chain over content tokens with an EOS exit. State symbols are
/// the content tokens plus a start symbol (index `content_tokens`).
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain {
    content_tokens: usize,
    order: usize,
    /// One row of `content_tokens + 1` output probabilities per state.
    rows: Vec<f64>,
}

impl MarkovChain {
    fn random<R: Rng>(cfg: &SeqTaskConfig, rng: &mut R) -> Result<Self> {
        let kc = cfg.content_tokens;
        let states = (kc + 1).pow(cfg.order as u32);
        let gamma = Gamma::new(cfg.row_concentration, 1.0)
            .map_err(|e| Error::InvalidArgument(format!("row concentration: {e}")))?;
        let mut rows = Vec::with_capacity(states * (kc + 1));
        for state in 0..states {
            let mut w: Vec<f64> = (0..kc).map(|_| gamma.sample(rng).max(1e-300)).collect();
            let total: f64 = w.iter().sum();
            // The all-start state opens a sequence and never emits EOS.
            let eos = if state == states - 1 {
                0.0
            } else {
                cfg.eos_prob
            };
            w.iter_mut().for_each(|v| *v *= (1.0 - eos) / total);
            w.push(eos);
            rows.extend(w);
        }
        Ok(Self {
            content_tokens: kc,
            order: cfg.order,
            rows,
        })
    }

    /// The same chain with content tokens relabelled by `perm`.
    fn permuted(&self, perm: &[usize]) -> Self {
        let kc = self.content_tokens;
        let width = kc + 1;
        let states = self.rows.len() / width;
        let mut rows = vec![0.0; self.rows.len()];
        let map_symbol = |s: usize| if s < kc { perm[s] } else { s };
        for state in 0..states {
            let mut mapped = 0;
            let mut rest = state;
            let mut scale = 1;
            for _ in 0..self.order {
                mapped += map_symbol(rest % (kc + 1)) * scale;
                rest /= kc + 1;
                scale *= kc + 1;
            }
            for t in 0..width {
                rows[mapped * width + map_symbol(t)] = self.rows[state * width + t];
            }
        }
        Self {
            content_tokens: kc,
            order: self.order,
            rows,
        }
    }

    fn state_index(&self, prefix: &[usize]) -> usize {
        let kc = self.content_tokens;
        let mut idx = 0;
        let mut scale = 1;
        for j in 1..=self.order {
            let sym = if prefix.len() >= j {
                prefix[prefix.len() - j]
            } else {
                kc
            };
            idx += sym * scale;
            scale *= kc + 1;
        }
        idx
    }

    /// Next-token distribution over content tokens and EOS.
    pub fn transition(&self, prefix: &[usize]) -> &[f64] {
        let w = self.content_tokens + 1;
        let s = self.state_index(prefix);
        &self.rows[s * w..(s + 1) * w]
    }

    fn sample<R: Rng>(&self, max_len: usize, rng: &mut R) -> Vec<usize> {
        let eos = self.content_tokens;
        let mut tokens = Vec::new();
        while tokens.len() < max_len {
            let row = self.transition(&tokens);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut next = row.len() - 1;
            for (t, p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    next = t;
                    break;
                }
            }
            tokens.push(next);
            if next == eos {
                break;
            }
        }
        tokens
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeqExample {
    pub tag: usize,
    /// Output tokens, ending in EOS unless the length cap was hit.
    pub tokens: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeqTask {
    pub cfg: SeqTaskConfig,
    /// Code vector for every tag, held-out tags last.
    pub codes: Vec<Vec<f64>>,
    pub chains: Vec<MarkovChain>,
    pub train: Vec<SeqExample>,
    pub test: Vec<SeqExample>,
    pub ood: Vec<SeqExample>,
}

impl SeqTask {
    pub fn code(&self, tag: usize) -> &[f64] {
        &self.codes[tag]
    }

    pub fn is_ood_tag(&self, tag: usize) -> bool {
        tag >= self.cfg.tags
    }

    /// Draws `n` sequences from one tag's chain on stream `stream_id`.
    pub fn sample_tag(&self, tag: usize, n: usize, seed: u64, stream_id: u64) -> Vec<SeqExample> {
        let mut rng = stream(seed, stream_id);
        (0..n)
            .map(|_| SeqExample {
                tag,
                tokens: self.chains[tag].sample(self.cfg.max_len, &mut rng),
            })
            .collect()
    }
}

/// Tags `0..tags` are in-distribution; each held-out tag reuses chain
/// `tag mod tags` under a random relabelling of the content tokens.
pub fn gen_toy_seq_task(cfg: &SeqTaskConfig, seed: u64) -> Result<SeqTask> {
    cfg.validate()?;
    let mut rng = stream(seed, 0);
    let total_tags = cfg.tags + cfg.ood_tags;
    let codes: Vec<Vec<f64>> = (0..total_tags)
        .map(|_| {
            (0..cfg.code_dim)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect()
        })
        .collect();
    let mut chains = (0..cfg.tags)
        .map(|_| MarkovChain::random(cfg, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    for t in 0..cfg.ood_tags {
        let mut perm: Vec<usize> = (0..cfg.content_tokens).collect();
        perm.shuffle(&mut rng);
        chains.push(chains[t % cfg.tags].permuted(&perm));
    }
    let mut task = SeqTask {
        cfg: *cfg,
        codes,
        chains,
        train: vec![],
        test: vec![],
        ood: vec![],
    };
    for tag in 0..cfg.tags {
        task.train
            .extend(task.sample_tag(tag, cfg.train_per_tag, seed, 1 + tag as u64));
        task.test
            .extend(task.sample_tag(tag, cfg.test_per_tag, seed, 1_000 + tag as u64));
    }
    for tag in cfg.tags..total_tags {
        task.ood
            .extend(task.sample_tag(tag, cfg.test_per_tag, seed, 1_000 + tag as u64));
    }
    Ok(task)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_are_distributions() {
        let task = gen_toy_seq_task(
            &SeqTaskConfig {
                order: 2,
                content_tokens: 5,
                ..Default::default()
            },
            3,
        )
        .unwrap();
        for chain in &task.chains {
            for row in chain.rows.chunks(6) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sequences_terminate() {
        let task = gen_toy_seq_task(&SeqTaskConfig::default(), 1).unwrap();
        let eos = task.cfg.eos();
        for ex in task.train.iter().chain(&task.test).chain(&task.ood) {
            assert!(!ex.tokens.is_empty());
            assert!(ex.tokens.last() == Some(&eos) || ex.tokens.len() == task.cfg.max_len);
            assert!(ex.tokens[..ex.tokens.len() - 1].iter().all(|&t| t < eos));
        }
    }

    #[test]
    fn permutation_relabels_transitions() {
        let cfg = SeqTaskConfig {
            content_tokens: 4,
            tags: 1,
            ood_tags: 1,
            ..Default::default()
        };
        let task = gen_toy_seq_task(&cfg, 9).unwrap();
        let (a, b) = (&task.chains[0], &task.chains[1]);
        let mut row_a: Vec<f64> = a.transition(&[2]).to_vec();
        // Some state of b carries the same multiset of probabilities.
        row_a.sort_by(f64::total_cmp);
        let found = (0..4).any(|s| {
            let mut r = b.transition(&[s]).to_vec();
            r.sort_by(f64::total_cmp);
            r.iter().zip(&row_a).all(|(x, y)| (x - y).abs() < 1e-15)
        });
        assert!(found);
    }

    #[test]
    fn invalid_configs() {
        assert!(gen_toy_seq_task(
            &SeqTaskConfig {
                content_tokens: 1,
                ..Default::default()
            },
            0
        )
        .is_err());
        assert!(gen_toy_seq_task(
            &SeqTaskConfig {
                order: 9,
                ..Default::default()
            },
            0
        )
        .is_err());
        assert!(gen_toy_seq_task(
            &SeqTaskConfig {
                eos_prob: 1.0,
                ..Default::default()
            },
            0
        )
        .is_err());
    }
}
