//! Little-endian tensor container used for activation dumps and weights.
//!
//! ```text
//! magic      [u8; 4]   "CNTA" (activations) or "CNTW" (weights)
//! version    u32       1
//! points     u32
//! per point:
//!   id_len   u16
//!   id       utf-8 bytes
//!   batches  u32
//!   per batch:
//!     rows   u64
//!     cols   u64
//!     data   rows × cols f64, row-major
//! ```
//!
//! Weight files hold exactly one matrix per id.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numkit::Matrix;

use super::ActivationBatch;

pub const ACTIVATION_MAGIC: [u8; 4] = *b"CNTA";
pub const WEIGHT_MAGIC: [u8; 4] = *b"CNTW";
pub const FORMAT_VERSION: u32 = 1;

/// One id with its list of matrices, as laid out on disk.
pub type Entry = (String, Vec<Matrix>);

pub fn encode(magic: [u8; 4], entries: &[Entry]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(&magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&count_u32(entries.len(), "point count")?.to_le_bytes());
    for (id, mats) in entries {
        let id_len = u16::try_from(id.len())
            .map_err(|_| Error::InvalidArgument(format!("id longer than 65535 bytes: {id}")))?;
        out.extend_from_slice(&id_len.to_le_bytes());
        out.extend_from_slice(id.as_bytes());
        out.extend_from_slice(&count_u32(mats.len(), "batch count")?.to_le_bytes());
        for m in mats {
            out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
            out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
            for v in m.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn decode(magic: [u8; 4], bytes: &[u8]) -> Result<Vec<Entry>> {
    let mut r = Reader { bytes, pos: 0 };
    let found: [u8; 4] = r.take(4, "magic")?.try_into().expect("4 bytes");
    if found != magic {
        return Err(Error::BadMagic {
            expected: magic,
            found,
        });
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            expected: FORMAT_VERSION,
            found: version,
        });
    }
    let points = r.u32("point count")?;
    let mut entries = Vec::new();
    for _ in 0..points {
        let id_len = r.u16("id length")? as usize;
        let id = std::str::from_utf8(r.take(id_len, "id")?)
            .map_err(|e| Error::Malformed(format!("point id is not utf-8: {e}")))?
            .to_owned();
        let batches = r.u32("batch count")?;
        let mut mats = Vec::new();
        for _ in 0..batches {
            let rows = r.u64("rows")?;
            let cols = r.u64("cols")?;
            let len = rows
                .checked_mul(cols)
                .and_then(|n| n.checked_mul(8))
                .filter(|&n| n <= (r.remaining() as u64))
                .ok_or(Error::TruncatedFile("matrix data"))? as usize;
            let data = r
                .take(len, "matrix data")?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            mats.push(Matrix::new(rows as usize, cols as usize, data)?);
        }
        entries.push((id, mats));
    }
    if r.remaining() != 0 {
        return Err(Error::Malformed(format!(
            "{} trailing bytes after last point",
            r.remaining()
        )));
    }
    Ok(entries)
}

/// Groups batches by point (first-appearance order, then `batch_index`).
///
/// Reading assigns `batch_index` from position within a point, so lists whose
/// indices run `0..n` per point round-trip exactly.
pub fn encode_dump(batches: &[ActivationBatch]) -> Result<Vec<u8>> {
    let mut entries: Vec<(String, Vec<&ActivationBatch>)> = Vec::new();
    for b in batches {
        match entries.iter_mut().find(|(id, _)| *id == b.point_id) {
            Some((_, list)) => list.push(b),
            None => entries.push((b.point_id.clone(), vec![b])),
        }
    }
    let entries: Vec<Entry> = entries
        .into_iter()
        .map(|(id, mut list)| {
            list.sort_by_key(|b| b.batch_index);
            (id, list.into_iter().map(|b| b.x.clone()).collect())
        })
        .collect();
    encode(ACTIVATION_MAGIC, &entries)
}

pub fn decode_dump(bytes: &[u8]) -> Result<Vec<ActivationBatch>> {
    Ok(decode(ACTIVATION_MAGIC, bytes)?
        .into_iter()
        .flat_map(|(id, mats)| {
            mats.into_iter()
                .enumerate()
                .map(move |(batch_index, x)| ActivationBatch {
                    point_id: id.clone(),
                    x,
                    batch_index,
                })
        })
        .collect())
}

pub fn write_dump(path: impl AsRef<Path>, batches: &[ActivationBatch]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_dump(batches)?).map_err(|e| Error::io(path, e))
}

pub fn read_dump(path: impl AsRef<Path>) -> Result<Vec<ActivationBatch>> {
    let path = path.as_ref();
    decode_dump(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn write_weights(path: impl AsRef<Path>, weights: &[(String, Matrix)]) -> Result<()> {
    let path = path.as_ref();
    let entries: Vec<Entry> = weights
        .iter()
        .map(|(id, m)| (id.clone(), vec![m.clone()]))
        .collect();
    fs::write(path, encode(WEIGHT_MAGIC, &entries)?).map_err(|e| Error::io(path, e))
}

pub fn read_weights(path: impl AsRef<Path>) -> Result<Vec<(String, Matrix)>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(WEIGHT_MAGIC, &bytes)?
        .into_iter()
        .map(|(id, mut mats)| {
            if mats.len() != 1 {
                return Err(Error::Malformed(format!(
                    "weight id {id} holds {} matrices, expected 1",
                    mats.len()
                )));
            }
            Ok((id, mats.pop().expect("one matrix")))
        })
        .collect()
}

fn count_u32(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::InvalidArgument(format!("{what} {n} exceeds u32")))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::TruncatedFile(what));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &'static str) -> Result<u16> {
        Ok(u16::from_le_bytes(
            self.take(2, what)?.try_into().expect("2"),
        ))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4"),
        ))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8, what)?.try_into().expect("8"),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(id: &str, idx: usize, m: Matrix) -> ActivationBatch {
        ActivationBatch {
            point_id: id.into(),
            x: m,
            batch_index: idx,
        }
    }

    #[test]
    fn empty_dump_is_header_only() {
        let bytes = encode_dump(&[]).unwrap();
        assert_eq!(bytes, b"CNTA\x01\x00\x00\x00\x00\x00\x00\x00");
        assert!(decode_dump(&bytes).unwrap().is_empty());
    }

    #[test]
    fn layout_is_bit_exact() {
        let bytes = encode_dump(&[batch("ab", 0, Matrix::from_rows(&[[1.5]]))]).unwrap();
        let mut expected = b"CNTA".to_vec();
        expected.extend(1u32.to_le_bytes());
        expected.extend(1u32.to_le_bytes());
        expected.extend(2u16.to_le_bytes());
        expected.extend(b"ab");
        expected.extend(1u32.to_le_bytes());
        expected.extend(1u64.to_le_bytes());
        expected.extend(1u64.to_le_bytes());
        expected.extend(1.5f64.to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn round_trip_groups_by_point() {
        let a0 = batch("a", 0, Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]));
        let a1 = batch("a", 1, Matrix::from_rows(&[[-0.0], [1e-300]]));
        let b0 = batch("b", 0, Matrix::zeros(3, 0));
        let list = vec![a0, a1, b0];
        assert_eq!(decode_dump(&encode_dump(&list).unwrap()).unwrap(), list);
    }

    #[test]
    fn wrong_magic_version_and_truncation() {
        let good = encode_dump(&[batch("a", 0, Matrix::identity(2))]).unwrap();

        let mut bad = good.clone();
        bad[..4].copy_from_slice(b"CNTW");
        assert!(matches!(decode_dump(&bad), Err(Error::BadMagic { .. })));

        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(
            decode_dump(&bad),
            Err(Error::VersionMismatch { found: 2, .. })
        ));

        for cut in [0, 3, 7, 11, 13, good.len() - 1] {
            assert!(
                matches!(decode_dump(&good[..cut]), Err(Error::TruncatedFile(_))),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn oversized_dimensions_do_not_allocate() {
        let mut bytes = b"CNTA".to_vec();
        bytes.extend(1u32.to_le_bytes());
        bytes.extend(1u32.to_le_bytes());
        bytes.extend(1u16.to_le_bytes());
        bytes.push(b'x');
        bytes.extend(1u32.to_le_bytes());
        bytes.extend(u64::MAX.to_le_bytes());
        bytes.extend(u64::MAX.to_le_bytes());
        assert!(matches!(decode_dump(&bytes), Err(Error::TruncatedFile(_))));
    }

    #[test]
    fn weight_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.cntw");
        let weights = vec![
            ("p.B".to_string(), Matrix::from_rows(&[[1.0], [2.0]])),
            ("p.A".to_string(), Matrix::from_rows(&[[3.0, 4.0]])),
        ];
        write_weights(&path, &weights).unwrap();
        assert_eq!(read_weights(&path).unwrap(), weights);
        assert!(matches!(read_dump(&path), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn missing_file_names_path() {
        let err = read_dump("/definitely/not/here.cnta").unwrap_err();
        assert!(err.to_string().contains("/definitely/not/here.cnta"));
    }
}
