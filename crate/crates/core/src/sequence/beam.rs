//! Length-unnormalised beam search.
//!
//! Each step expands every live hypothesis by every token and keeps the B
//! best candidates overall. Candidates ending in EOS, or reaching the length
//! cap, are moved to a finished pool and no longer expanded. Search stops
//! once nothing is live, or once B hypotheses have finished and none of the
//! live ones can still beat the B-th best of them.
//!
//! Ordering is total: higher score first, then the lexicographically
//! smaller token sequence, then the lower parent hypothesis index.

use std::cmp::Ordering;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hypothesis {
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    /// ln P of each emitted token; these sum to `log_prob`.
    pub step_log_probs: Vec<f64>,
}

fn rank(a: &(Hypothesis, usize), b: &(Hypothesis, usize)) -> Ordering {
    b.0.log_prob
        .total_cmp(&a.0.log_prob)
        .then_with(|| a.0.tokens.cmp(&b.0.tokens))
        .then_with(|| a.1.cmp(&b.1))
}

/// Returns up to `beam` finished hypotheses, best first. `step(prefix)`
/// returns next-token probabilities over the output vocabulary, in which
/// `eos` is a valid index.
pub fn beam_search<F>(
    mut step: F,
    beam: usize,
    max_len: usize,
    eos: usize,
) -> Result<Vec<Hypothesis>>
where
    F: FnMut(&[usize]) -> Result<Vec<f64>>,
{
    if beam == 0 || max_len == 0 {
        return Err(Error::InvalidArgument(
            "beam width and max_len must be positive".into(),
        ));
    }
    let mut live = vec![Hypothesis {
        tokens: vec![],
        log_prob: 0.0,
        step_log_probs: vec![],
    }];
    let mut finished: Vec<(Hypothesis, usize)> = Vec::new();
    while !live.is_empty() {
        let mut candidates: Vec<(Hypothesis, usize)> = Vec::new();
        for (parent, hyp) in live.iter().enumerate() {
            let probs = step(&hyp.tokens)?;
            if eos >= probs.len() {
                return Err(Error::InvalidArgument(format!(
                    "eos {eos} outside vocabulary of {}",
                    probs.len()
                )));
            }
            for (t, &p) in probs.iter().enumerate() {
                if p <= 0.0 {
                    continue;
                }
                let lp = p.ln();
                let mut tokens = hyp.tokens.clone();
                tokens.push(t);
                let mut steps = hyp.step_log_probs.clone();
                steps.push(lp);
                candidates.push((
                    Hypothesis {
                        tokens,
                        log_prob: hyp.log_prob + lp,
                        step_log_probs: steps,
                    },
                    parent,
                ));
            }
        }
        candidates.sort_by(rank);
        candidates.truncate(beam);
        live = Vec::with_capacity(beam);
        for (hyp, parent) in candidates {
            let done = hyp.tokens.last() == Some(&eos) || hyp.tokens.len() >= max_len;
            if done {
                finished.push((hyp, parent));
            } else {
                live.push(hyp);
            }
        }
        finished.sort_by(rank);
        if finished.len() >= beam {
            finished.truncate(beam);
            let worst_kept = finished[beam - 1].0.log_prob;
            // Scores only fall as hypotheses grow.
            if live.iter().all(|h| h.log_prob <= worst_kept) {
                break;
            }
        }
    }
    Ok(finished.into_iter().map(|(h, _)| h).collect())
}

/// Argmax decoding, lowest token id on ties.
pub fn greedy<F>(mut step: F, max_len: usize, eos: usize) -> Result<Hypothesis>
where
    F: FnMut(&[usize]) -> Result<Vec<f64>>,
{
    let mut hyp = Hypothesis {
        tokens: vec![],
        log_prob: 0.0,
        step_log_probs: vec![],
    };
    while hyp.tokens.len() < max_len && hyp.tokens.last() != Some(&eos) {
        let probs = step(&hyp.tokens)?;
        let (t, p) = probs
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &p)| {
                if p > best.1 {
                    (i, p)
                } else {
                    best
                }
            });
        hyp.tokens.push(t);
        hyp.step_log_probs.push(p.ln());
        hyp.log_prob += p.ln();
    }
    Ok(hyp)
}
