//! Transfer sets: one record per (input, prefix) with every teacher's
//! next-token distribution.

use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::beam::beam_search;
use super::model::{combine_product_of_expectations, ArModel};
use super::task::SeqExample;
use crate::ensemble::EnsembleSlice;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TransferSource {
    /// Gold prefixes of the training sequences.
    Reference,
    /// Prefixes of the combined teacher's B best beam hypotheses.
    BeamBbest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferRecord {
    /// Index of the source example.
    pub input_id: usize,
    pub context: Vec<usize>,
    pub members: EnsembleSlice,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferSet {
    pub source: TransferSource,
    pub beam_width: usize,
    pub records: Vec<TransferRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransferHeader {
    build: String,
    source: TransferSource,
    beam_width: usize,
}

fn member_slice(teachers: &[ArModel], code: &[f64], prefix: &[usize]) -> Result<EnsembleSlice> {
    let rows = teachers
        .iter()
        .map(|t| t.step_probs(code, prefix).map(|p| p.into_vec()))
        .collect::<Result<Vec<_>>>()?;
    EnsembleSlice::new(rows)
}

fn records_for(
    teachers: &[ArModel],
    input_id: usize,
    code: &[f64],
    seq: &[usize],
) -> Result<Vec<TransferRecord>> {
    (0..seq.len())
        .map(|l| {
            Ok(TransferRecord {
                input_id,
                context: seq[..l].to_vec(),
                members: member_slice(teachers, code, &seq[..l])?,
            })
        })
        .collect()
}

/// `codes[tag]` is the conditioning vector of each example's tag.
pub fn build_transfer_set(
    teachers: &[ArModel],
    examples: &[SeqExample],
    codes: &[Vec<f64>],
    source: TransferSource,
    beam_width: usize,
    max_len: usize,
) -> Result<TransferSet> {
    let first = teachers
        .first()
        .ok_or_else(|| Error::InvalidArgument("transfer set needs at least one teacher".into()))?;
    let eos = first.shape.content_tokens;
    let per_example: Vec<Vec<TransferRecord>> = examples
        .par_iter()
        .enumerate()
        .map(|(id, ex)| {
            let code = &codes[ex.tag];
            match source {
                TransferSource::Reference => records_for(teachers, id, code, &ex.tokens),
                TransferSource::BeamBbest => {
                    let hyps = beam_search(
                        |prefix| {
                            combine_product_of_expectations(teachers, code, prefix)
                                .map(|p| p.into_vec())
                        },
                        beam_width,
                        max_len,
                        eos,
                    )?;
                    let mut out = Vec::new();
                    for h in hyps {
                        out.extend(records_for(teachers, id, code, &h.tokens)?);
                    }
                    Ok(out)
                }
            }
        })
        .collect::<Result<_>>()?;
    Ok(TransferSet {
        source,
        beam_width,
        records: per_example.into_iter().flatten().collect(),
    })
}

impl TransferSet {
    /// Newline-delimited JSON: a header object, then one record per line.
    pub fn write_ndjson<W: Write>(&self, mut w: W) -> Result<()> {
        let header = TransferHeader {
            build: crate::BUILD_ID.into(),
            source: self.source,
            beam_width: self.beam_width,
        };
        serde_json::to_writer(&mut w, &header)?;
        writeln!(w)?;
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_ndjson<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| Error::InvalidArgument("empty transfer-set file".into()))??;
        let header: TransferHeader = serde_json::from_str(&header_line)?;
        let mut records = Vec::new();
        for line in lines {
            let line = line?;
            if !line.trim().is_empty() {
                records.push(serde_json::from_str(&line)?);
            }
        }
        Ok(Self {
            source: header.source,
            beam_width: header.beam_width,
            records,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Head;
    use crate::rng::stream;
    use crate::sequence::model::ArShape;

    fn teachers() -> Vec<ArModel> {
        let shape = ArShape {
            content_tokens: 3,
            context: 2,
            code_dim: 2,
        };
        let mut rng = stream(8, 0);
        (0..3)
            .map(|_| ArModel::new(shape, 5, Head::Softmax, &mut rng))
            .collect()
    }

    #[test]
    fn reference_has_one_record_per_token() {
        let t = teachers();
        let ex = vec![
            SeqExample {
                tag: 0,
                tokens: vec![0, 2, 3],
            },
            SeqExample {
                tag: 1,
                tokens: vec![1, 3],
            },
        ];
        let codes = vec![vec![0.5, 0.5], vec![-1.0, 0.0]];
        let set = build_transfer_set(&t, &ex, &codes, TransferSource::Reference, 1, 5).unwrap();
        assert_eq!(set.records.len(), 5);
        assert_eq!(set.records[2].context, vec![0, 2]);
        assert!(set.records.iter().all(|r| r.members.members() == 3));
        for r in &set.records {
            for row in r.members.rows() {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn beam_records_are_hypothesis_prefixes() {
        let t = teachers();
        let ex = vec![SeqExample {
            tag: 0,
            tokens: vec![0, 3],
        }];
        let codes = vec![vec![0.2, -0.3]];
        let set = build_transfer_set(&t, &ex, &codes, TransferSource::BeamBbest, 2, 4).unwrap();
        assert!(!set.records.is_empty());
        assert!(set.records.iter().all(|r| r.context.len() < 4));
    }

    #[test]
    fn ndjson_round_trip() {
        let t = teachers();
        let ex = vec![SeqExample {
            tag: 0,
            tokens: vec![2, 3],
        }];
        let set = build_transfer_set(&t, &ex, &[vec![0.0, 1.0]], TransferSource::Reference, 1, 4)
            .unwrap();
        let mut buf = Vec::new();
        set.write_ndjson(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text
            .lines()
            .nth(1)
            .unwrap()
            .starts_with(r#"{"input_id":0,"context":[],"members":[["#));
        let back = TransferSet::read_ndjson(buf.as_slice()).unwrap();
        assert_eq!(back.records.len(), set.records.len());
        assert_eq!(back.source, TransferSource::Reference);
    }
}
