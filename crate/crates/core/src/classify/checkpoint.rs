//! Flat binary checkpoints.
//!
//! Layout: the magic bytes `DDML1`, a little-endian `u32` header length, a
//! UTF-8 JSON header, then every model's parameters as little-endian `f64`
//! in header order. Each model's parameters are stored as the arrays
//! `w1` (H×D), `b1` (H), `w2` (O×H) and `b2` (O).

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Head, Mlp};

pub const MAGIC: &[u8; 5] = b"DDML1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayShape {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelHeader {
    pub label: String,
    pub head: Head,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub classes: usize,
    pub arrays: Vec<ArrayShape>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub build: String,
    pub models: Vec<ModelHeader>,
}

fn shapes(m: &Mlp) -> Vec<ArrayShape> {
    let (d, h, o) = (m.input_dim, m.hidden_dim, m.output_width());
    [
        ("w1", vec![h, d]),
        ("b1", vec![h]),
        ("w2", vec![o, h]),
        ("b2", vec![o]),
    ]
    .into_iter()
    .map(|(name, shape)| ArrayShape {
        name: name.into(),
        shape,
    })
    .collect()
}

pub fn write_checkpoint<W: Write>(mut w: W, models: &[(String, &Mlp)]) -> Result<()> {
    let header = CheckpointHeader {
        build: crate::BUILD_ID.into(),
        models: models
            .iter()
            .map(|(label, m)| ModelHeader {
                label: label.clone(),
                head: m.head,
                input_dim: m.input_dim,
                hidden_dim: m.hidden_dim,
                classes: m.classes,
                arrays: shapes(m),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let len =
        u32::try_from(json.len()).map_err(|_| Error::Checkpoint("header too large".into()))?;
    w.write_all(MAGIC)?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(&json)?;
    for (_, m) in models {
        for p in &m.params {
            w.write_all(&p.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Vec<(String, Mlp)>> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut json)?;
    let header: CheckpointHeader =
        serde_json::from_slice(&json).map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
    let mut out = Vec::with_capacity(header.models.len());
    for mh in header.models {
        let expected = Mlp::param_count(
            mh.input_dim,
            mh.hidden_dim,
            mh.head.output_width(mh.classes),
        );
        let declared: usize = mh
            .arrays
            .iter()
            .map(|a| a.shape.iter().product::<usize>())
            .sum();
        if declared != expected {
            return Err(Error::Checkpoint(format!(
                "model `{}` declares {declared} values, its shape needs {expected}",
                mh.label
            )));
        }
        let mut params = Vec::with_capacity(expected);
        let mut buf = [0u8; 8];
        for _ in 0..expected {
            r.read_exact(&mut buf)?;
            params.push(f64::from_le_bytes(buf));
        }
        let mlp = Mlp::from_params(mh.input_dim, mh.hidden_dim, mh.classes, mh.head, params)?;
        out.push((mh.label, mlp));
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", rest.len())));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn round_trip() {
        let mut rng = stream(1, 0);
        let a = Mlp::new(2, 4, 3, Head::Softmax, &mut rng);
        let b = Mlp::new(2, 4, 3, Head::DirichletMeanPrecision, &mut rng);
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &[("a".into(), &a), ("b".into(), &b)]).unwrap();
        assert_eq!(&bytes[..5], b"DDML1");
        let back = read_checkpoint(bytes.as_slice()).unwrap();
        assert_eq!(back[0], ("a".to_string(), a));
        assert_eq!(back[1], ("b".to_string(), b));
    }

    #[test]
    fn corrupt_input() {
        assert!(read_checkpoint(&b"DDML2\0\0\0\0"[..]).is_err());
        let mut rng = stream(1, 0);
        let a = Mlp::new(2, 2, 2, Head::Softmax, &mut rng);
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &[("a".into(), &a)]).unwrap();
        bytes.pop();
        assert!(read_checkpoint(bytes.as_slice()).is_err());
    }
}
