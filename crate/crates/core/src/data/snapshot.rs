//! Binary dataset snapshot. All integers little-endian.
//!
//! ```text
//! magic        8 bytes  "CDSNAP\0\0"
//! version      u32      = 1
//! flags        u32      bit 0: test section present
//! num_users    u64
//! num_items    u64
//! nnz          u64
//! offsets      (num_users + 1) x u64
//! items        nnz x u32          sorted ascending within each user
//! timestamps   nnz x i64
//! user ids     num_users x (u32 byte length, UTF-8 bytes)
//! item ids     num_items x (u32 byte length, UTF-8 bytes)
//! test         num_users x u32    (only if flag bit 0; u32::MAX = none)
//! ```

use std::fs;
use std::path::Path;

use super::{InteractionDataset, SplitDataset};
use crate::error::{Error, Result};

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"CDSNAP\0\0";
pub const SNAPSHOT_VERSION: u32 = 1;
const FLAG_TEST: u32 = 1;

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

pub(crate) fn encode(train: &InteractionDataset, test: Option<&[Option<usize>]>) -> Vec<u8> {
    let (offsets, items, timestamps) = train.raw_parts();
    let mut out = Vec::with_capacity(40 + offsets.len() * 8 + items.len() * 12);
    out.extend_from_slice(SNAPSHOT_MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    out.extend_from_slice(&(if test.is_some() { FLAG_TEST } else { 0 }).to_le_bytes());
    out.extend_from_slice(&(train.num_users() as u64).to_le_bytes());
    out.extend_from_slice(&(train.num_items() as u64).to_le_bytes());
    out.extend_from_slice(&(items.len() as u64).to_le_bytes());
    for &o in offsets {
        out.extend_from_slice(&(o as u64).to_le_bytes());
    }
    for &i in items {
        out.extend_from_slice(&(i as u32).to_le_bytes());
    }
    for &t in timestamps {
        out.extend_from_slice(&t.to_le_bytes());
    }
    for s in train.user_ids() {
        put_str(&mut out, s);
    }
    for s in train.item_ids() {
        put_str(&mut out, s);
    }
    if let Some(test) = test {
        for t in test {
            out.extend_from_slice(&t.map_or(u32::MAX, |t| t as u32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Format("snapshot truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| Error::Format("count overflows usize".into()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Format("id is not UTF-8".into()))
    }
}

pub(crate) fn decode(buf: &[u8]) -> Result<(InteractionDataset, Option<Vec<Option<usize>>>)> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8)? != SNAPSHOT_MAGIC {
        return Err(Error::Format("not a dataset snapshot (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != SNAPSHOT_VERSION {
        return Err(Error::Format(format!("unsupported snapshot version {version}")));
    }
    let flags = r.u32()?;
    let num_users = r.len()?;
    let num_items = r.len()?;
    let nnz = r.len()?;
    // cheap sanity bound before allocating
    if num_users.saturating_add(nnz) > buf.len() {
        return Err(Error::Format("snapshot counts exceed file size".into()));
    }
    let offsets = (0..=num_users).map(|_| r.len()).collect::<Result<Vec<_>>>()?;
    let items = (0..nnz).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    let timestamps = (0..nnz).map(|_| r.u64().map(|v| v as i64)).collect::<Result<Vec<_>>>()?;
    let user_ids = (0..num_users).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
    let item_ids = (0..num_items).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
    let test = if flags & FLAG_TEST != 0 {
        Some(
            (0..num_users)
                .map(|_| r.u32().map(|t| (t != u32::MAX).then_some(t as usize)))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    if r.pos != buf.len() {
        return Err(Error::Format("trailing bytes after snapshot".into()));
    }
    let ds = InteractionDataset::from_parts(num_items, offsets, items, timestamps, user_ids, item_ids)?;
    Ok((ds, test))
}

/// Writes a split (train adjacency plus test map) snapshot.
pub fn write_snapshot(path: &Path, split: &SplitDataset) -> Result<()> {
    fs::write(path, encode(&split.train, Some(split.test_items()))).map_err(|e| Error::io(path, e))
}

/// Reads a snapshot written by [`write_snapshot`]. A snapshot without a
/// test section yields a split with no held-out items.
pub fn read_snapshot(path: &Path) -> Result<SplitDataset> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (train, test) = decode(&buf)?;
    let test = test.unwrap_or_else(|| vec![None; train.num_users()]);
    SplitDataset::new(train, test)
}
