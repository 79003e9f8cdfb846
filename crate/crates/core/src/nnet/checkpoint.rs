//! `MGCK` model checkpoints.
//!
//! ```text
//! "MGCK" | version u16 | variant u8 | H u32 | D u32 | T u32
//! tensors as f64, in Model::tensors order
//! CRC-32 (IEEE) u32 of every byte between the magic and the checksum
//! ```
//!
//! All integers and reals are little-endian. `T` records the glimpse
//! sequence length the model was trained on.

use std::path::Path;

use super::model::{Model, Variant};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MGCK";
pub const CHECKPOINT_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 1 + 4 + 4 + 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub steps: usize,
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let m = &ckpt.model;
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.num_params() + 4);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.push(m.variant().tag());
    out.extend_from_slice(&(m.hidden() as u32).to_le_bytes());
    out.extend_from_slice(&(m.feature_dim() as u32).to_le_bytes());
    out.extend_from_slice(&(ckpt.steps as u32).to_le_bytes());
    for t in m.tensors() {
        for x in t {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out[4..]);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 4 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::format(0, "bad checkpoint magic"));
    }
    if bytes.len() < HEADER_LEN + 4 {
        return Err(Error::format(bytes.len() as u64, "truncated checkpoint header"));
    }
    let le32 = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(4, format!("unsupported checkpoint version {version}")));
    }
    let variant =
        Variant::from_tag(bytes[6]).ok_or_else(|| Error::format(6, format!("unknown variant tag {}", bytes[6])))?;
    let (hidden, dim, steps) = (le32(7), le32(11), le32(15));
    if hidden == 0 || dim == 0 {
        return Err(Error::format(7, format!("empty shape H={hidden} D={dim}")));
    }
    let expected = HEADER_LEN as u128 + 8 * param_count(variant, dim as u128, hidden as u128) + 4;
    if bytes.len() as u128 != expected {
        return Err(Error::format(
            (bytes.len() as u128).min(expected) as u64,
            format!("checkpoint is {} bytes, shape needs {expected}", bytes.len()),
        ));
    }
    let mut model = Model::zeros(variant, dim, hidden);
    let body_end = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[body_end..].try_into().unwrap());
    let actual = crc32fast::hash(&bytes[4..body_end]);
    if stored != actual {
        return Err(Error::format(
            body_end as u64,
            format!("checksum mismatch: stored {stored:08x}, computed {actual:08x}"),
        ));
    }
    let mut values = bytes[HEADER_LEN..body_end].chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap()));
    for t in model.tensors_mut() {
        for (dst, src) in t.iter_mut().zip(values.by_ref()) {
            *dst = src;
        }
    }
    Ok(Checkpoint { model, steps })
}

fn param_count(variant: Variant, dim: u128, hidden: u128) -> u128 {
    let chain = |input: u128| 4 * hidden * (input + hidden) + 4 * hidden;
    let head = hidden + 1;
    match variant {
        Variant::Concat => chain(2 * dim) + head,
        Variant::Fusion => 2 * chain(dim) + chain(2 * hidden) + head,
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    crate::pipeline::write_atomic(path, &encode_checkpoint(ckpt))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::from(e).in_file(path))?;
    decode_checkpoint(&bytes).map_err(|e| e.in_file(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use proptest::prelude::*;

    fn sample(variant: Variant, seed: u64) -> Checkpoint {
        let mut rng = SplitMix64::new(seed);
        Checkpoint { model: Model::init(variant, 3, 4, &mut rng), steps: 9 }
    }

    #[test]
    fn round_trip_both_variants() {
        for v in [Variant::Concat, Variant::Fusion] {
            let c = sample(v, 1);
            assert_eq!(decode_checkpoint(&encode_checkpoint(&c)).unwrap(), c);
        }
    }

    #[test]
    fn flipped_payload_bit_fails_checksum() {
        let mut bytes = encode_checkpoint(&sample(Variant::Concat, 2));
        bytes[HEADER_LEN + 5] ^= 0x10;
        let err = decode_checkpoint(&bytes).unwrap_err();
        assert!(err.to_string().contains("checksum"), "{err}");
    }

    #[test]
    fn count_matches_model() {
        for v in [Variant::Concat, Variant::Fusion] {
            assert_eq!(param_count(v, 3, 4) as usize, sample(v, 0).model.num_params());
        }
    }

    #[test]
    fn corrupted_magic() {
        let mut bytes = encode_checkpoint(&sample(Variant::Fusion, 3));
        bytes[1] = b'X';
        assert!(matches!(decode_checkpoint(&bytes), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn truncated() {
        let bytes = encode_checkpoint(&sample(Variant::Fusion, 4));
        assert!(matches!(decode_checkpoint(&bytes[..bytes.len() - 9]), Err(Error::Format { .. })));
        assert!(matches!(decode_checkpoint(&bytes[..10]), Err(Error::Format { .. })));
    }

    proptest! {
        #[test]
        fn bitwise_round_trip(seed: u64, fusion: bool) {
            let v = if fusion { Variant::Fusion } else { Variant::Concat };
            let bytes = encode_checkpoint(&sample(v, seed));
            prop_assert_eq!(encode_checkpoint(&decode_checkpoint(&bytes).unwrap()), bytes);
        }

        #[test]
        fn garbage_never_panics(mut bytes in proptest::collection::vec(any::<u8>(), 0..120)) {
            if bytes.len() >= 4 {
                bytes[..4].copy_from_slice(CHECKPOINT_MAGIC);
            }
            let _ = decode_checkpoint(&bytes);
        }
    }
}
