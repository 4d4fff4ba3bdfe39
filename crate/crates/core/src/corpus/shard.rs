use std::path::Path;

use crate::error::{Error, Result};

/// Fixed-length rows of token ids with a mask marking real (non-pad) tokens.
///
/// On disk: `seq_len: u32 LE`, `rows: u32 LE`, then `rows * seq_len` ids as
/// `u32 LE`, then the mask bit-packed LSB-first (1 = real token).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shard {
    pub seq_len: usize,
    pub ids: Vec<u32>,
    pub mask: Vec<bool>,
}

impl Shard {
    pub fn rows(&self) -> usize {
        self.ids.len().checked_div(self.seq_len).unwrap_or(0)
    }

    pub fn row(&self, r: usize) -> (&[u32], &[bool]) {
        let span = r * self.seq_len..(r + 1) * self.seq_len;
        (&self.ids[span.clone()], &self.mask[span])
    }

    pub fn real_tokens(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.ids.len() * 4 + self.mask.len().div_ceil(8));
        out.extend_from_slice(&(self.seq_len as u32).to_le_bytes());
        out.extend_from_slice(&(self.rows() as u32).to_le_bytes());
        for id in &self.ids {
            out.extend_from_slice(&id.to_le_bytes());
        }
        let mut bits = vec![0u8; self.mask.len().div_ceil(8)];
        for (i, &m) in self.mask.iter().enumerate() {
            if m {
                bits[i / 8] |= 1 << (i % 8);
            }
        }
        out.extend_from_slice(&bits);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |detail: String| Error::format("shard", detail);
        if bytes.len() < 8 {
            return Err(bad("truncated header".into()));
        }
        let seq_len = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
        let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let n = seq_len
            .checked_mul(rows)
            .ok_or_else(|| bad("row count overflows".into()))?;
        let want = 8 + n * 4 + n.div_ceil(8);
        if bytes.len() != want {
            return Err(bad(format!(
                "expected {want} bytes for {rows}x{seq_len}, found {}",
                bytes.len()
            )));
        }
        let ids = bytes[8..8 + n * 4]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let bits = &bytes[8 + n * 4..];
        let mask = (0..n).map(|i| bits[i / 8] >> (i % 8) & 1 == 1).collect();
        Ok(Shard { seq_len, ids, mask })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Concatenates documents, each followed by `eos_id`, and cuts the stream
/// into rows of `seq_len`. The last row is padded with `pad_id`.
pub fn pack<D: AsRef<[u32]>>(docs: &[D], seq_len: usize, eos_id: u32, pad_id: u32) -> Result<Shard> {
    if seq_len < 2 {
        return Err(Error::ConfigInvalid(format!(
            "seq_len must be at least 2, got {seq_len}"
        )));
    }
    let mut ids = Vec::new();
    for d in docs {
        ids.extend_from_slice(d.as_ref());
        ids.push(eos_id);
    }
    let real = ids.len();
    let padded = real.div_ceil(seq_len) * seq_len;
    ids.resize(padded, pad_id);
    let mut mask = vec![true; real];
    mask.resize(padded, false);
    Ok(Shard { seq_len, ids, mask })
}

/// All rows from a directory of `*.shard` files, in file-name order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardSet {
    pub seq_len: usize,
    pub rows: Vec<(Vec<u32>, Vec<bool>)>,
}

impl ShardSet {
    pub fn from_shards(shards: &[Shard]) -> Result<Self> {
        let seq_len = shards.first().map(|s| s.seq_len).unwrap_or(0);
        let mut rows = Vec::new();
        for s in shards {
            if s.seq_len != seq_len {
                return Err(Error::CorpusMismatch(format!(
                    "shards disagree on seq_len: {} vs {}",
                    seq_len, s.seq_len
                )));
            }
            for r in 0..s.rows() {
                let (ids, mask) = s.row(r);
                if mask.iter().filter(|&&m| m).count() >= 2 {
                    rows.push((ids.to_vec(), mask.to_vec()));
                }
            }
        }
        if rows.is_empty() {
            return Err(Error::TrainingDataEmpty);
        }
        Ok(ShardSet { seq_len, rows })
    }

    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut files: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "shard"))
            .collect();
        files.sort();
        let shards = files.iter().map(|f| Shard::load(f)).collect::<Result<Vec<_>>>()?;
        Self::from_shards(&shards)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eos_spills_into_padded_row() {
        let s = pack(&[vec![10, 11, 12], vec![20, 21, 22, 23]], 8, 3, 0).unwrap();
        assert_eq!(s.rows(), 2);
        assert_eq!(s.row(0).0, &[10, 11, 12, 3, 20, 21, 22, 23]);
        assert_eq!(s.row(1).0, &[3, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(s.row(1).1, &[true, false, false, false, false, false, false, false]);
    }

    #[test]
    fn bytes_roundtrip() {
        let s = pack(&[vec![5u32; 13]], 4, 3, 0).unwrap();
        let b = s.to_bytes();
        assert_eq!(b.len(), 8 + 16 * 4 + 2);
        assert_eq!(Shard::from_bytes(&b).unwrap(), s);
        assert!(Shard::from_bytes(&b[..b.len() - 1]).is_err());
    }

    #[test]
    fn empty_input_gives_no_rows() {
        let s = pack::<Vec<u32>>(&[], 8, 3, 0).unwrap();
        assert_eq!(s.rows(), 0);
        assert!(pack(&[vec![1u32]], 1, 3, 0).is_err());
        assert!(matches!(ShardSet::from_shards(&[s]), Err(Error::TrainingDataEmpty)));
    }
}
