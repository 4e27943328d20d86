//! Binary checkpoint format (`.edrs`).
//!
//! All integers and floats are little-endian. Layout:
//!
//! ```text
//! "EDRS"                     magic
//! u16                        format version (1)
//! u32                        generation
//! u32 u32 u32                input channels, height, width
//! u32 u32                    conv layer count, fc layer count
//! per conv: u32 x4           filters, in_channels, kh, kw
//! per fc:   u32 x2           in_dim, out_dim
//! per conv: bits(filters)    filter alive flags
//!           bits(n)          synapse mask, n = filters * in_channels * kh * kw
//!           f32 x n          weights, [filter][channel][ky][kx]
//!           f32 x filters    biases
//! per fc:   bits(in_dim)     input alive flags
//!           f32 x out*in     weights, [out][in]
//!           f32 x out        biases
//! u32                        CRC-32 (IEEE) of every preceding byte
//! ```
//!
//! `bits(k)` is `ceil(k / 8)` bytes, least significant bit first.

use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{ConvLayer, FcLayer, InputSpec, SequencerNet};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"EDRS";
pub const FORMAT_VERSION: u16 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_bits(out: &mut Vec<u8>, bits: &[bool]) {
    for chunk in bits.chunks(8) {
        let byte = chunk
            .iter()
            .enumerate()
            .fold(0u8, |acc, (i, &b)| acc | ((b as u8) << i));
        out.push(byte);
    }
}

fn put_f32s<T: Scalar>(out: &mut Vec<u8>, values: &[T]) {
    for v in values {
        out.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
    }
}

/// Serializes a network; parameters are stored at 32-bit precision.
pub fn encode<T: Scalar>(net: &SequencerNet<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    put_u32(&mut out, net.generation as usize);
    put_u32(&mut out, net.input.channels);
    put_u32(&mut out, net.input.height);
    put_u32(&mut out, net.input.width);
    put_u32(&mut out, net.conv.len());
    put_u32(&mut out, net.fc.len());
    for c in &net.conv {
        put_u32(&mut out, c.filters);
        put_u32(&mut out, c.in_channels);
        put_u32(&mut out, c.kernel.0);
        put_u32(&mut out, c.kernel.1);
    }
    for f in &net.fc {
        put_u32(&mut out, f.in_dim);
        put_u32(&mut out, f.out_dim);
    }
    for c in &net.conv {
        put_bits(&mut out, &c.filter_alive);
        put_bits(&mut out, &c.mask);
        put_f32s(&mut out, c.weights.data());
        put_f32s(&mut out, &c.biases);
    }
    for f in &net.fc {
        put_bits(&mut out, &f.input_alive);
        put_f32s(&mut out, f.weights.data());
        put_f32s(&mut out, &f.biases);
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<usize, String> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn bits(&mut self, n: usize) -> std::result::Result<Vec<bool>, String> {
        let bytes = self.take(n.div_ceil(8))?;
        Ok((0..n).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect())
    }

    fn f32s(&mut self, n: usize) -> std::result::Result<Vec<f32>, String> {
        let bytes = self.take(n.checked_mul(4).ok_or("size overflow")?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect())
    }
}

/// Parses a checkpoint produced by [`encode`].
pub fn decode(bytes: &[u8], path: &Path) -> Result<SequencerNet<f32>> {
    let malformed = |reason: String| Error::MalformedCheckpoint {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < 4 {
        return Err(malformed("file shorter than magic".into()));
    }
    let mut found = [0u8; 4];
    found.copy_from_slice(&bytes[..4]);
    if found != MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            found,
        });
    }
    if bytes.len() < 10 {
        return Err(malformed("file shorter than header".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            path: path.to_path_buf(),
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let (body, footer) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes([footer[0], footer[1], footer[2], footer[3]]);
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum {
            path: path.to_path_buf(),
            stored,
            computed,
        });
    }

    let mut r = Reader { buf: body, pos: 6 };
    let parse = |r: &mut Reader<'_>| -> std::result::Result<SequencerNet<f32>, String> {
        let generation = r.u32()? as u32;
        let input = InputSpec {
            channels: r.u32()?,
            height: r.u32()?,
            width: r.u32()?,
        };
        let n_conv = r.u32()?;
        let n_fc = r.u32()?;
        if n_conv > 64 || n_fc > 64 {
            return Err(format!("implausible layer counts {n_conv}/{n_fc}"));
        }
        let conv_dims = (0..n_conv)
            .map(|_| Ok((r.u32()?, r.u32()?, r.u32()?, r.u32()?)))
            .collect::<std::result::Result<Vec<_>, String>>()?;
        let fc_dims = (0..n_fc)
            .map(|_| Ok((r.u32()?, r.u32()?)))
            .collect::<std::result::Result<Vec<_>, String>>()?;
        let mut conv = Vec::with_capacity(n_conv);
        for (filters, in_channels, kh, kw) in conv_dims {
            let n = filters * in_channels * kh * kw;
            let filter_alive = r.bits(filters)?;
            let mask = r.bits(n)?;
            let weights = Tensor::from_vec(&[filters, in_channels, kh, kw], r.f32s(n)?)
                .map_err(|e| e.to_string())?;
            let biases = r.f32s(filters)?;
            conv.push(ConvLayer {
                filters,
                in_channels,
                kernel: (kh, kw),
                weights,
                biases,
                mask,
                filter_alive,
            });
        }
        let mut fc = Vec::with_capacity(n_fc);
        for (in_dim, out_dim) in fc_dims {
            let input_alive = r.bits(in_dim)?;
            let weights = Tensor::from_vec(&[out_dim, in_dim], r.f32s(out_dim * in_dim)?)
                .map_err(|e| e.to_string())?;
            let biases = r.f32s(out_dim)?;
            fc.push(FcLayer {
                in_dim,
                out_dim,
                weights,
                biases,
                input_alive,
            });
        }
        if r.pos != r.buf.len() {
            return Err(format!("{} trailing bytes", r.buf.len() - r.pos));
        }
        Ok(SequencerNet {
            input,
            conv,
            fc,
            generation,
        })
    };
    let net = parse(&mut r).map_err(malformed)?;
    net.validate()
        .map_err(|e| malformed(format!("inconsistent network: {e}")))?;
    Ok(net)
}

pub fn save_checkpoint<T: Scalar>(net: &SequencerNet<T>, path: &Path) -> Result<()> {
    std::fs::write(path, encode(net)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<SequencerNet<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequencer::build_initial;

    fn sample() -> SequencerNet<f32> {
        let mut net = build_initial::<f32>(4);
        net.generation = 7;
        net.conv[2].filter_alive[5] = false;
        let per = net.conv[2].synapses_per_filter();
        net.conv[2].mask[5 * per..6 * per].fill(false);
        net.conv[1].mask[17] = false;
        net.fc[0].input_alive[80..96].fill(false);
        net.zero_pruned();
        net
    }

    #[test]
    fn round_trip_is_exact() {
        let net = sample();
        let back = decode(&encode(&net), Path::new("mem")).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn flipped_body_byte_is_a_checksum_error() {
        let mut bytes = encode(&sample());
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        assert!(matches!(
            decode(&bytes, Path::new("mem")),
            Err(Error::Checksum { .. })
        ));
    }

    #[test]
    fn bad_magic_and_version_are_distinct() {
        let mut bytes = encode(&sample());
        bytes[..4].copy_from_slice(b"XXXX");
        let err = decode(&bytes, Path::new("x.edrs")).unwrap_err();
        assert!(matches!(err, Error::BadMagic { found, .. } if &found == b"XXXX"));

        let mut bytes = encode(&sample());
        bytes[4] = 9;
        assert!(matches!(
            decode(&bytes, Path::new("x.edrs")),
            Err(Error::VersionMismatch { found: 9, .. })
        ));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let bytes = encode(&sample());
        assert!(decode(&bytes[..bytes.len() - 100], Path::new("t")).is_err());
        assert!(decode(&bytes[..2], Path::new("t")).is_err());
    }
}
