//! Binary netpbm: 16-bit big-endian P5 for depth, 8-bit P6 for color.

use std::path::Path;

use super::{ColorImage, DepthMap};
use crate::error::{Error, Result};

struct Header {
    width: usize,
    height: usize,
    maxval: u32,
    /// Offset of the first payload byte.
    data_start: usize,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c => self.pos += 1,
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u64> {
        self.skip_space_and_comments();
        let start = self.pos;
        let mut value: u64 = 0;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            value = value
                .checked_mul(10)
                .and_then(|v| v.checked_add(u64::from(self.bytes[self.pos] - b'0')))
                .ok_or_else(|| Error::format(start as u64, format!("{what} overflows")))?;
            self.pos += 1;
        }
        if self.pos == start {
            return Err(Error::format(start as u64, format!("expected {what}")));
        }
        Ok(value)
    }
}

fn parse_header(bytes: &[u8], magic: &[u8; 2]) -> Result<Header> {
    if bytes.len() < 2 {
        return Err(Error::format(0, "file too short for a netpbm magic"));
    }
    if &bytes[..2] != magic {
        return Err(Error::format(
            0,
            format!(
                "expected magic {:?}, found {:?}",
                String::from_utf8_lossy(magic),
                String::from_utf8_lossy(&bytes[..2])
            ),
        ));
    }
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::format(2, format!("zero image dimension {width}x{height}")));
    }
    if width > u32::MAX as u64 || height > u32::MAX as u64 {
        return Err(Error::format(2, "image dimension too large"));
    }
    // Exactly one whitespace byte separates the header from the samples.
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(Error::format(cur.pos as u64, "expected a single whitespace byte after maxval")),
    }
    if maxval == 0 || maxval > u32::MAX as u64 {
        return Err(Error::format(maxval_at as u64, format!("bad maxval {maxval}")));
    }
    Ok(Header { width: width as usize, height: height as usize, maxval: maxval as u32, data_start: cur.pos })
}

fn payload<'a>(bytes: &'a [u8], header: &Header, sample_bytes: usize) -> Result<&'a [u8]> {
    let need = header
        .width
        .checked_mul(header.height)
        .and_then(|n| n.checked_mul(sample_bytes))
        .ok_or_else(|| Error::format(2, "image dimensions overflow"))?;
    let have = bytes.len() - header.data_start;
    if have < need {
        return Err(Error::format(bytes.len() as u64, format!("truncated payload: {have} of {need} bytes")));
    }
    if have > need {
        return Err(Error::format(
            (header.data_start + need) as u64,
            format!("{} trailing bytes after payload", have - need),
        ));
    }
    Ok(&bytes[header.data_start..])
}

pub fn decode_depth_pgm(bytes: &[u8]) -> Result<DepthMap> {
    let header = parse_header(bytes, b"P5")?;
    if header.maxval != 65535 {
        return Err(Error::format(2, format!("depth PGM needs maxval 65535, found {}", header.maxval)));
    }
    let raw = payload(bytes, &header, 2)?;
    let data = raw.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]])).collect();
    DepthMap::new(header.width, header.height, data)
}

pub fn encode_depth_pgm(map: &DepthMap) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", map.width(), map.height()).into_bytes();
    out.reserve(map.data().len() * 2);
    for d in map.data() {
        out.extend_from_slice(&d.to_be_bytes());
    }
    out
}

pub fn decode_color_ppm(bytes: &[u8]) -> Result<ColorImage> {
    let header = parse_header(bytes, b"P6")?;
    if header.maxval != 255 {
        return Err(Error::format(2, format!("color PPM needs maxval 255, found {}", header.maxval)));
    }
    let raw = payload(bytes, &header, 3)?;
    ColorImage::new(header.width, header.height, raw.to_vec())
}

pub fn encode_color_ppm(image: &ColorImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend_from_slice(image.data());
    out
}

pub fn load_depth_pgm(path: &Path) -> Result<DepthMap> {
    let bytes = std::fs::read(path).map_err(|e| Error::from(e).in_file(path))?;
    decode_depth_pgm(&bytes).map_err(|e| e.in_file(path))
}

pub fn save_depth_pgm(map: &DepthMap, path: &Path) -> Result<()> {
    std::fs::write(path, encode_depth_pgm(map)).map_err(|e| Error::from(e).in_file(path))
}

pub fn load_color_ppm(path: &Path) -> Result<ColorImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::from(e).in_file(path))?;
    decode_color_ppm(&bytes).map_err(|e| e.in_file(path))
}

pub fn save_color_ppm(image: &ColorImage, path: &Path) -> Result<()> {
    std::fs::write(path, encode_color_ppm(image)).map_err(|e| Error::from(e).in_file(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use proptest::prelude::*;

    fn random_depth(w: usize, h: usize, seed: u64) -> DepthMap {
        let mut rng = SplitMix64::new(seed);
        let data = (0..w * h).map(|_| rng.next_u64() as u16).collect();
        DepthMap::new(w, h, data).unwrap()
    }

    #[test]
    fn depth_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.pgm");
        let map = random_depth(8, 6, 1);
        save_depth_pgm(&map, &path).unwrap();
        assert_eq!(load_depth_pgm(&path).unwrap(), map);
    }

    #[test]
    fn color_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ppm");
        let mut rng = SplitMix64::new(2);
        let img = ColorImage::new(8, 6, (0..144).map(|_| rng.next_u64() as u8).collect()).unwrap();
        save_color_ppm(&img, &path).unwrap();
        assert_eq!(load_color_ppm(&path).unwrap(), img);
    }

    #[test]
    fn rejects_8bit_depth() {
        let mut bytes = b"P5\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2]);
        let err = decode_depth_pgm(&bytes).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{err}");
    }

    #[test]
    fn rejects_empty_file() {
        assert!(matches!(decode_depth_pgm(&[]), Err(Error::Format { offset: 0, .. })));
        assert!(matches!(decode_color_ppm(&[]), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn rejects_wrong_magic_for_color() {
        let pgm = encode_depth_pgm(&random_depth(2, 2, 3));
        assert!(matches!(decode_color_ppm(&pgm), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn rejects_zero_dimensions() {
        let err = decode_color_ppm(b"P6\n0 0\n255\n").unwrap_err();
        assert!(err.to_string().contains("zero image dimension"), "{err}");
    }

    #[test]
    fn rejects_truncation_with_offset() {
        let mut bytes = encode_depth_pgm(&random_depth(4, 4, 5));
        bytes.truncate(bytes.len() - 3);
        match decode_depth_pgm(&bytes) {
            Err(Error::Format { offset, msg }) => {
                assert_eq!(offset, bytes.len() as u64);
                assert!(msg.contains("truncated"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P5 # written by hand\n2 # w\n1\n65535\n".to_vec();
        bytes.extend_from_slice(&[0x01, 0x02, 0xff, 0xfe]);
        let map = decode_depth_pgm(&bytes).unwrap();
        assert_eq!(map.data(), &[0x0102, 0xfffe]);
    }

    proptest! {
        #[test]
        fn depth_round_trip_is_exact(w in 1usize..20, h in 1usize..20, seed: u64) {
            let map = random_depth(w, h, seed);
            prop_assert_eq!(decode_depth_pgm(&encode_depth_pgm(&map)).unwrap(), map);
        }

        #[test]
        fn garbage_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            let _ = decode_depth_pgm(&bytes);
            let _ = decode_color_ppm(&bytes);
        }
    }
}
