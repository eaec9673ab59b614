//! On-disk formats: the parameter snapshot and the embedding exports.
//!
//! All integers and floats are little-endian.
//!
//! `params.bin`
//! ```text
//! magic        8  b"AFPGPRM1"
//! kind         1  0 = attention, 1 = mean
//! frozen       1  0 | 1
//! reserved     2  zero
//! layers       4  u32
//! adaptive w  24  3 × f64
//! per layer:
//!   in_dim, out_dim, heads    3 × u32   (heads = 1 for mean layers)
//!   prelu_slope               f64
//!   leaky_slope               f64       (attention only)
//!   per head: W (in_dim × out_dim, row-major) then a (2 · out_dim)
//!             (mean layers: W only)
//! disc dim     4  u32
//! disc W          dim × dim f64
//! checksum    32  SHA-256 of every preceding byte
//! ```
//!
//! Embedding binary
//! ```text
//! magic  8  b"AFPGEMB1"
//! rows   8  u64
//! cols   8  u64
//! data      rows × cols f64, row-major
//! ```
//!
//! Embedding TSV: one line per node, `node_id` then the values with 17
//! significant digits, tab separated, no header.

use std::fmt::Write as _;
use std::io::BufRead;

use sha2::{Digest, Sha256};

use crate::adaptive::AdaptiveFeatureParams;
use crate::encoder::{AttentionHeadParams, EncoderParams, GatLayerParams, MeanLayerParams};
use crate::error::{Error, Result};
use crate::infomax::DiscriminatorParams;
use crate::model::ModelParams;
use crate::numerics::DenseMatrix;

pub const PARAMS_MAGIC: &[u8; 8] = b"AFPGPRM1";
pub const EMBEDDINGS_MAGIC: &[u8; 8] = b"AFPGEMB1";
pub const EMBEDDINGS_HEADER_LEN: usize = 24;

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn encode_params(p: &ModelParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(PARAMS_MAGIC);
    let (kind, layers) = match &p.encoder {
        EncoderParams::Attention(l) => (0u8, l.len()),
        EncoderParams::Mean(l) => (1u8, l.len()),
    };
    out.push(kind);
    out.push(p.adaptive.frozen as u8);
    out.extend_from_slice(&[0, 0]);
    put_u32(&mut out, layers);
    put_f64s(&mut out, &p.adaptive.w);
    match &p.encoder {
        EncoderParams::Attention(layers) => {
            for l in layers {
                put_u32(&mut out, l.in_dim());
                put_u32(&mut out, l.out_dim());
                put_u32(&mut out, l.heads.len());
                put_f64s(&mut out, &[l.prelu_slope, l.leaky_slope]);
                for h in &l.heads {
                    put_f64s(&mut out, h.w.as_slice());
                    put_f64s(&mut out, &h.a);
                }
            }
        }
        EncoderParams::Mean(layers) => {
            for l in layers {
                put_u32(&mut out, l.w.rows());
                put_u32(&mut out, l.w.cols());
                put_u32(&mut out, 1);
                put_f64s(&mut out, &[l.prelu_slope]);
                put_f64s(&mut out, l.w.as_slice());
            }
        }
    }
    put_u32(&mut out, p.disc.dim());
    put_f64s(&mut out, p.disc.w.as_slice());
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format(format!(
                "truncated at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// Reads `rows × cols` floats, checking the size against what is left
    /// before allocating.
    fn matrix(&mut self, rows: usize, cols: usize) -> Result<DenseMatrix> {
        let n = rows
            .checked_mul(cols)
            .filter(|n| {
                n.checked_mul(8)
                    .is_some_and(|b| b <= self.buf.len() - self.pos)
            })
            .ok_or_else(|| {
                Error::Format(format!("matrix {rows}x{cols} exceeds remaining input"))
            })?;
        let data = (0..n).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        DenseMatrix::from_vec(rows, cols, data)
    }

    fn vec(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self.matrix(1, n)?.into_vec())
    }
}

pub fn decode_params(bytes: &[u8]) -> Result<ModelParams> {
    if bytes.len() < PARAMS_MAGIC.len() + 32 {
        return Err(Error::Format("parameter file too short".into()));
    }
    if &bytes[..8] != PARAMS_MAGIC {
        return Err(Error::Format("not a parameter snapshot (bad magic)".into()));
    }
    let (body, checksum) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != checksum {
        return Err(Error::Format("parameter snapshot checksum mismatch".into()));
    }
    let mut r = Reader { buf: body, pos: 8 };
    let kind = r.u8()?;
    let frozen = match r.u8()? {
        0 => false,
        1 => true,
        v => return Err(Error::Format(format!("bad frozen flag {v}"))),
    };
    if r.take(2)? != [0, 0] {
        return Err(Error::Format("reserved bytes must be zero".into()));
    }
    let layers = r.u32()?;
    if layers == 0 {
        return Err(Error::Format("encoder has no layers".into()));
    }
    let adaptive = AdaptiveFeatureParams {
        w: [r.f64()?, r.f64()?, r.f64()?],
        frozen,
    };

    let mut prev_out: Option<usize> = None;
    let mut dims = |r: &mut Reader| -> Result<(usize, usize, usize)> {
        let (i, o, h) = (r.u32()?, r.u32()?, r.u32()?);
        if i == 0 || o == 0 || h == 0 {
            return Err(Error::Format("zero layer dimension".into()));
        }
        if prev_out.is_some_and(|p| p != i) {
            return Err(Error::Format("layer dimensions do not chain".into()));
        }
        prev_out = Some(o);
        Ok((i, o, h))
    };
    let encoder = match kind {
        0 => {
            let mut out = Vec::new();
            for _ in 0..layers {
                let (i, o, h) = dims(&mut r)?;
                let prelu_slope = r.f64()?;
                let leaky_slope = r.f64()?;
                let mut heads = Vec::new();
                for _ in 0..h {
                    let w = r.matrix(i, o)?;
                    let a = r.vec(2 * o)?;
                    heads.push(AttentionHeadParams { w, a });
                }
                out.push(GatLayerParams {
                    heads,
                    prelu_slope,
                    leaky_slope,
                });
            }
            EncoderParams::Attention(out)
        }
        1 => {
            let mut out = Vec::new();
            for _ in 0..layers {
                let (i, o, h) = dims(&mut r)?;
                if h != 1 {
                    return Err(Error::Format(
                        "mean layer must have exactly one head".into(),
                    ));
                }
                let prelu_slope = r.f64()?;
                out.push(MeanLayerParams {
                    w: r.matrix(i, o)?,
                    prelu_slope,
                });
            }
            EncoderParams::Mean(out)
        }
        k => return Err(Error::Format(format!("unknown encoder kind {k}"))),
    };
    let dim = r.u32()?;
    if dim != encoder.out_dim() {
        return Err(Error::Format(format!(
            "discriminator dimension {dim} does not match embedding dimension {}",
            encoder.out_dim()
        )));
    }
    let disc = DiscriminatorParams {
        w: r.matrix(dim, dim)?,
    };
    if r.pos != body.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes",
            body.len() - r.pos
        )));
    }
    Ok(ModelParams {
        adaptive,
        encoder,
        disc,
    })
}

pub fn encode_embeddings_bin(z: &DenseMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(EMBEDDINGS_HEADER_LEN + 8 * z.as_slice().len());
    out.extend_from_slice(EMBEDDINGS_MAGIC);
    out.extend_from_slice(&(z.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(z.cols() as u64).to_le_bytes());
    put_f64s(&mut out, z.as_slice());
    out
}

pub fn decode_embeddings_bin(bytes: &[u8]) -> Result<DenseMatrix> {
    if bytes.len() < EMBEDDINGS_HEADER_LEN || &bytes[..8] != EMBEDDINGS_MAGIC {
        return Err(Error::Format("not an embedding file (bad header)".into()));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let body = &bytes[EMBEDDINGS_HEADER_LEN..];
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::Format("embedding dimensions overflow".into()))?;
    if expected != body.len() as u64 {
        return Err(Error::Format(format!(
            "embedding body is {} bytes, header implies {expected}",
            body.len()
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    DenseMatrix::from_vec(rows as usize, cols as usize, data)
}

pub fn encode_embeddings_tsv(ids: &[String], z: &DenseMatrix) -> Result<String> {
    if ids.len() != z.rows() {
        return Err(Error::shape("embedding ids", z.rows(), ids.len()));
    }
    let mut out = String::new();
    for (id, r) in ids.iter().zip(0..z.rows()) {
        if id.is_empty() || id.contains(|c: char| c.is_whitespace()) {
            return Err(Error::Format(format!(
                "node id {id:?} cannot be written as TSV"
            )));
        }
        out.push_str(id);
        for v in z.row(r) {
            write!(out, "\t{v:.16e}").unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn decode_embeddings_tsv<R: BufRead>(
    reader: R,
    source: &str,
) -> Result<(Vec<String>, DenseMatrix)> {
    let mut ids = Vec::new();
    let mut data = Vec::new();
    let mut cols: Option<usize> = None;
    for (idx, line) in reader.lines().enumerate() {
        let err = |message: String| Error::Parse {
            path: source.to_string(),
            line: idx + 1,
            message,
        };
        let line = line.map_err(|e| err(format!("read failed: {e}")))?;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let id = fields.next().unwrap_or_default();
        if id.is_empty() || id.contains(|c: char| c.is_whitespace()) {
            return Err(err(format!("bad node id {id:?}")));
        }
        let values = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| err(format!("not a number: {f:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        match cols {
            None => cols = Some(values.len()),
            Some(c) if c != values.len() => {
                return Err(err(format!("expected {c} values, got {}", values.len())))
            }
            Some(_) => {}
        }
        ids.push(id.to_string());
        data.extend(values);
    }
    let z = DenseMatrix::from_vec(ids.len(), cols.unwrap_or(0), data)?;
    Ok((ids, z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Components, ModelConfig};
    use crate::numerics::Rng;

    #[test]
    fn params_round_trip_both_kinds() {
        for components in [Components::FULL, "adaptive".parse().unwrap()] {
            let cfg = ModelConfig {
                components,
                ..Default::default()
            };
            let p = ModelParams::init(&cfg, 9, &mut Rng::new(3)).unwrap();
            let bytes = encode_params(&p);
            assert_eq!(decode_params(&bytes).unwrap(), p);
        }
    }

    #[test]
    fn params_reject_corruption() {
        let p = ModelParams::init(&ModelConfig::default(), 4, &mut Rng::new(0)).unwrap();
        let mut bytes = encode_params(&p);
        bytes[20] ^= 1;
        assert!(decode_params(&bytes).is_err());
        assert!(decode_params(&bytes[..10]).is_err());
        assert!(decode_params(b"").is_err());
    }

    #[test]
    fn embedding_binary_layout() {
        let z = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, -4.5]]).unwrap();
        let b = encode_embeddings_bin(&z);
        assert_eq!(b.len(), EMBEDDINGS_HEADER_LEN + 32);
        assert_eq!(decode_embeddings_bin(&b).unwrap(), z);
        assert!(decode_embeddings_bin(&b[..b.len() - 1]).is_err());
    }

    #[test]
    fn tsv_round_trip_is_exact() {
        let mut rng = Rng::new(9);
        let z = DenseMatrix::from_fn(5, 3, |_, _| rng.uniform_range(-1e3, 1e3) * 1e-7);
        let ids: Vec<String> = (0..5).map(|i| format!("p{i}")).collect();
        let text = encode_embeddings_tsv(&ids, &z).unwrap();
        assert_eq!(text.lines().count(), 5);
        let (ids2, z2) = decode_embeddings_tsv(text.as_bytes(), "t").unwrap();
        assert_eq!(ids2, ids);
        assert_eq!(z2, z);
    }

    #[test]
    fn tsv_rejects_ids_it_cannot_write() {
        for text in ["\u{b}\t1.0\n", "\t1.0\n", "a b\t1.0\n"] {
            assert!(
                decode_embeddings_tsv(text.as_bytes(), "t").is_err(),
                "{text:?}"
            );
        }
    }
}
