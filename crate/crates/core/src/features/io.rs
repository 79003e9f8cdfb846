//! `MGFT` feature container.
//!
//! Little-endian throughout:
//!
//! ```text
//! "MGFT" | version u16 | count u32 | T u16 | D u32
//! count x ( image u32 | proposal u32 | label u8 | color T*D f32 | depth T*D f32 )
//! ```
//!
//! Labels are 0, 1, or 255 for unlabeled.

use std::path::Path;

use super::{FeatureSequence, ProposalId};
use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"MGFT";
pub const FEATURE_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 2 + 4;
const UNLABELED: u8 = 255;

pub fn encode_features(records: &[FeatureSequence]) -> Result<Vec<u8>> {
    let (steps, dim) = records.first().map_or((0, 0), |r| (r.steps(), r.dim()));
    if steps > u16::MAX as usize || dim > u32::MAX as usize {
        return Err(Error::Shape(format!("feature shape {steps}x{dim} does not fit the header")));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + records.len() * (9 + 8 * steps * dim));
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    out.extend_from_slice(&(steps as u16).to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    for (i, r) in records.iter().enumerate() {
        if r.steps() != steps || r.dim() != dim {
            return Err(Error::Shape(format!("record {i} is {}x{}, container is {steps}x{dim}", r.steps(), r.dim())));
        }
        out.extend_from_slice(&r.id.image.to_le_bytes());
        out.extend_from_slice(&r.id.proposal.to_le_bytes());
        out.push(match r.label {
            Some(true) => 1,
            Some(false) => 0,
            None => UNLABELED,
        });
        for x in r.color().iter().chain(r.depth()) {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(self.bytes.len() as u64, format!("truncated while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode_features(bytes: &[u8]) -> Result<Vec<FeatureSequence>> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != FEATURE_MAGIC {
        return Err(Error::format(0, format!("bad feature magic {:?}", String::from_utf8_lossy(magic))));
    }
    let version = r.u16("version")?;
    if version != FEATURE_VERSION {
        return Err(Error::format(4, format!("unsupported feature version {version}")));
    }
    let count = r.u32("record count")? as usize;
    let steps = r.u16("T")? as usize;
    let dim = r.u32("D")? as usize;
    let values = steps.checked_mul(dim).ok_or_else(|| Error::format(10, "T*D overflows"))?;
    let record_len = 9 + 8 * values;
    if (bytes.len() - HEADER_LEN) / record_len.max(1) < count {
        return Err(Error::format(bytes.len() as u64, format!("truncated: header promises {count} records")));
    }
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let at = r.pos as u64;
        let image = r.u32("image index")?;
        let proposal = r.u32("proposal index")?;
        let label = match r.u8("label")? {
            0 => Some(false),
            1 => Some(true),
            UNLABELED => None,
            other => return Err(Error::format(at + 8, format!("record {i} has label byte {other}"))),
        };
        let raw = r.take(8 * values, "feature values")?;
        let mut floats = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()));
        let color: Vec<f32> = floats.by_ref().take(values).collect();
        let depth: Vec<f32> = floats.collect();
        out.push(FeatureSequence::new(ProposalId { image, proposal }, label, steps, dim, color, depth)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::format(r.pos as u64, "trailing bytes after last record"));
    }
    Ok(out)
}

pub fn save_features(path: &Path, records: &[FeatureSequence]) -> Result<()> {
    let bytes = encode_features(records)?;
    crate::pipeline::write_atomic(path, &bytes)
}

pub fn load_features(path: &Path) -> Result<Vec<FeatureSequence>> {
    let bytes = std::fs::read(path).map_err(|e| Error::from(e).in_file(path))?;
    decode_features(&bytes).map_err(|e| e.in_file(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use proptest::prelude::*;

    fn random_batch(n: usize, steps: usize, dim: usize, seed: u64) -> Vec<FeatureSequence> {
        let mut rng = SplitMix64::new(seed);
        (0..n)
            .map(|i| {
                let mut vals = || (0..steps * dim).map(|_| rng.normal() as f32).collect::<Vec<_>>();
                let (c, d) = (vals(), vals());
                let label = [None, Some(false), Some(true)][i % 3];
                FeatureSequence::new(
                    ProposalId { image: i as u32 / 4, proposal: i as u32 % 4 },
                    label,
                    steps,
                    dim,
                    c,
                    d,
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn round_trip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.mgft");
        let batch = random_batch(7, 3, 5, 1);
        save_features(&path, &batch).unwrap();
        assert_eq!(load_features(&path).unwrap(), batch);
    }

    #[test]
    fn wrong_magic() {
        let mut bytes = encode_features(&random_batch(2, 2, 2, 2)).unwrap();
        bytes[0] = b'X';
        assert!(matches!(decode_features(&bytes), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn mixed_shapes_are_rejected() {
        let mut batch = random_batch(2, 2, 2, 3);
        batch.extend(random_batch(1, 3, 2, 4));
        assert!(encode_features(&batch).is_err());
    }

    #[test]
    fn truncation_is_a_format_error() {
        let bytes = encode_features(&random_batch(3, 2, 2, 5)).unwrap();
        for cut in [0, 3, 10, HEADER_LEN, bytes.len() - 1] {
            assert!(matches!(decode_features(&bytes[..cut]), Err(Error::Format { .. })), "cut {cut}");
        }
    }

    #[test]
    fn empty_container() {
        let bytes = encode_features(&[]).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN);
        assert!(decode_features(&bytes).unwrap().is_empty());
    }

    proptest! {
        #[test]
        fn round_trip_is_bitwise(n in 0usize..6, steps in 1usize..5, dim in 1usize..6, seed: u64) {
            let batch = random_batch(n, steps, dim, seed);
            let bytes = encode_features(&batch).unwrap();
            let back = decode_features(&bytes).unwrap();
            prop_assert_eq!(encode_features(&back).unwrap(), bytes);
        }

        #[test]
        fn garbage_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..80)) {
            let _ = decode_features(&bytes);
        }
    }
}
