//! TEXMEX vector files and the binary index format.
//!
//! A vector file is a sequence of records `dim: i32 | dim elements`, all
//! little-endian, where the element type is `f32` (fvecs), `i32` (ivecs) or
//! `u8` (bvecs). Every record in a file has the same `dim`.
//!
//! An index file (all integers little-endian):
//!
//! ```text
//! offset  size      field
//! 0       4         magic "PXGI"
//! 4       4         version (u32, currently 1)
//! 8       4         kind (u32, 0 = flat, 1 = layered)
//! 12      8         n (u64)
//! 20      4         d (u32)
//! 24      4         M (u32)
//! 28      4         entry point id (u32)
//! 32      4         number of layers (u32, 1 for flat)
//! 36      n         level of every node (u8, layered only)
//! then for each layer, bottom first:
//!         8(n+1)    adjacency offsets (u64, first is 0)
//!         4n        connect-edge count per node (u32)
//!         4*total   neighbor ids (u32), concatenated
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::{LayeredGraph, ProximityGraph};

/// Element type of a vector file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElemKind {
    F32,
    I32,
    U8,
}

impl ElemKind {
    pub fn size(self) -> usize {
        match self {
            ElemKind::F32 | ElemKind::I32 => 4,
            ElemKind::U8 => 1,
        }
    }

    /// Guesses the kind from a `.fvecs`, `.ivecs` or `.bvecs` extension.
    pub fn from_path(path: impl AsRef<Path>) -> Option<Self> {
        match path.as_ref().extension()?.to_str()? {
            "fvecs" => Some(ElemKind::F32),
            "ivecs" => Some(ElemKind::I32),
            "bvecs" => Some(ElemKind::U8),
            _ => None,
        }
    }
}

fn le_u32(b: &[u8]) -> u32 {
    u32::from_le_bytes(b[..4].try_into().unwrap())
}

// Walks the records of a vector file, checking every header before touching
// the payload behind it.
fn records(bytes: &[u8], kind: ElemKind) -> Result<(usize, Vec<&[u8]>)> {
    if bytes.is_empty() {
        return Err(Error::format(0, "empty file"));
    }
    let mut dim = None;
    let mut out = Vec::new();
    let mut pos = 0usize;
    while pos < bytes.len() {
        if bytes.len() - pos < 4 {
            return Err(Error::format(pos as u64, "truncated record header"));
        }
        let d = le_u32(&bytes[pos..]) as i32;
        if d <= 0 {
            return Err(Error::format(
                pos as u64,
                format!("non-positive dimension {d}"),
            ));
        }
        let d = d as usize;
        match dim {
            None => dim = Some(d),
            Some(first) if first != d => {
                return Err(Error::format(
                    pos as u64,
                    format!("record claims dimension {d}, file started with {first}"),
                ));
            }
            Some(_) => {}
        }
        let len = d * kind.size();
        if bytes.len() - pos - 4 < len {
            return Err(Error::format(pos as u64, "truncated record payload"));
        }
        out.push(&bytes[pos + 4..pos + 4 + len]);
        pos += 4 + len;
    }
    Ok((dim.unwrap(), out))
}

/// Parses a vector file held in memory. ivecs and bvecs values are widened to `f32`.
pub fn parse_vecs(bytes: &[u8], kind: ElemKind) -> Result<Dataset> {
    let (dim, recs) = records(bytes, kind)?;
    let mut data = Vec::with_capacity(dim * recs.len());
    for r in recs {
        match kind {
            ElemKind::F32 => data.extend(
                r.chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap())),
            ),
            ElemKind::I32 => data.extend(
                r.chunks_exact(4)
                    .map(|c| i32::from_le_bytes(c.try_into().unwrap()) as f32),
            ),
            ElemKind::U8 => data.extend(r.iter().map(|&b| b as f32)),
        }
    }
    Dataset::new(dim, data)
}

pub fn load_vecs(path: impl AsRef<Path>, kind: ElemKind) -> Result<Dataset> {
    parse_vecs(&fs::read(path)?, kind)
}

/// Serializes a dataset. ivecs and bvecs require every value to be an integer
/// within the element range.
pub fn encode_vecs(ds: &Dataset, kind: ElemKind) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(ds.len() * (4 + ds.dim() * kind.size()));
    for row in ds.rows() {
        out.extend_from_slice(&(ds.dim() as i32).to_le_bytes());
        for &x in row {
            match kind {
                ElemKind::F32 => out.extend_from_slice(&x.to_le_bytes()),
                ElemKind::I32 => {
                    if x.fract() != 0.0 || !(-2_147_483_648.0..2_147_483_648.0).contains(&x) {
                        return Err(Error::arg(format!("{x} is not representable as i32")));
                    }
                    out.extend_from_slice(&(x as i32).to_le_bytes());
                }
                ElemKind::U8 => {
                    if x.fract() != 0.0 || !(0.0..=255.0).contains(&x) {
                        return Err(Error::arg(format!("{x} is not representable as u8")));
                    }
                    out.push(x as u8);
                }
            }
        }
    }
    Ok(out)
}

pub fn save_vecs(path: impl AsRef<Path>, ds: &Dataset, kind: ElemKind) -> Result<()> {
    fs::write(path, encode_vecs(ds, kind)?)?;
    Ok(())
}

/// Parses an ivecs table of ids, e.g. a ground-truth file. Rows must share
/// one length and ids must be non-negative.
pub fn parse_ivecs_table(bytes: &[u8]) -> Result<Vec<Vec<u32>>> {
    let (dim, recs) = records(bytes, ElemKind::I32)?;
    let mut out = Vec::with_capacity(recs.len());
    for (i, r) in recs.iter().enumerate() {
        let base = (i * (4 + 4 * dim) + 4) as u64;
        let mut row = Vec::with_capacity(dim);
        for (j, c) in r.chunks_exact(4).enumerate() {
            let v = i32::from_le_bytes(c.try_into().unwrap());
            if v < 0 {
                return Err(Error::format(
                    base + 4 * j as u64,
                    format!("negative id {v}"),
                ));
            }
            row.push(v as u32);
        }
        out.push(row);
    }
    Ok(out)
}

pub fn load_ivecs_table(path: impl AsRef<Path>) -> Result<Vec<Vec<u32>>> {
    parse_ivecs_table(&fs::read(path)?)
}

pub fn encode_ivecs_table(rows: &[Vec<u32>]) -> Result<Vec<u8>> {
    let dim = rows.first().map_or(0, Vec::len);
    if dim == 0 || rows.iter().any(|r| r.len() != dim) {
        return Err(Error::arg(
            "ivecs rows must be non-empty and of equal length",
        ));
    }
    let mut out = Vec::with_capacity(rows.len() * 4 * (dim + 1));
    for r in rows {
        out.extend_from_slice(&(dim as i32).to_le_bytes());
        for &v in r {
            let v = i32::try_from(v).map_err(|_| Error::arg(format!("id {v} exceeds i32")))?;
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn save_ivecs_table(path: impl AsRef<Path>, rows: &[Vec<u32>]) -> Result<()> {
    fs::write(path, encode_ivecs_table(rows)?)?;
    Ok(())
}

const MAGIC: &[u8; 4] = b"PXGI";
const VERSION: u32 = 1;

/// A stored graph index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Index {
    Flat(ProximityGraph),
    Layered(LayeredGraph),
}

/// An index together with the dimensionality of the data it was built on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SavedIndex {
    pub dim: usize,
    pub index: Index,
}

fn encode_layer(out: &mut Vec<u8>, g: &ProximityGraph) {
    let mut off = 0u64;
    out.extend_from_slice(&off.to_le_bytes());
    for list in g.lists() {
        off += list.len() as u64;
        out.extend_from_slice(&off.to_le_bytes());
    }
    for u in 0..g.len() as u32 {
        out.extend_from_slice(&(g.connect_edges(u) as u32).to_le_bytes());
    }
    for list in g.lists() {
        for &v in list {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

pub fn encode_index(index: &Index, dim: usize) -> Result<Vec<u8>> {
    let (kind, n, m, entry, layers, levels): (
        u32,
        usize,
        usize,
        u32,
        &[ProximityGraph],
        Option<&[u8]>,
    ) = match index {
        Index::Flat(g) => (
            0,
            g.len(),
            g.max_degree(),
            g.entry(),
            std::slice::from_ref(g),
            None,
        ),
        Index::Layered(lg) => (
            1,
            lg.len(),
            lg.layer(0).max_degree(),
            lg.entry(),
            lg.layers(),
            Some(lg.levels()),
        ),
    };
    let dim = u32::try_from(dim).map_err(|_| Error::arg("dimension exceeds u32"))?;
    let m = u32::try_from(m).map_err(|_| Error::arg("degree cap exceeds u32"))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    for v in [VERSION, kind] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for v in [dim, m, entry, layers.len() as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(levels) = levels {
        out.extend_from_slice(levels);
    }
    for g in layers {
        encode_layer(&mut out, g);
    }
    Ok(out)
}

pub fn save_index(path: impl AsRef<Path>, index: &Index, dim: usize) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&encode_index(index, dim)?)?;
    w.flush()?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < len {
            return Err(Error::corrupt(format!(
                "truncated {what} at byte {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(le_u32(self.take(4, what)?))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    // Length in elements of `size` bytes, checked against what remains.
    fn count(&mut self, n: u64, size: usize, what: &str) -> Result<usize> {
        let left = (self.bytes.len() - self.pos) / size;
        if n > left as u64 {
            return Err(Error::corrupt(format!(
                "{what} at byte {} claims {n} entries",
                self.pos
            )));
        }
        Ok(n as usize)
    }
}

fn decode_layer(r: &mut Reader, n: usize, m: usize, entry: u32) -> Result<ProximityGraph> {
    r.count(n as u64 + 1, 8, "offset table")?;
    let mut offsets = Vec::with_capacity(n + 1);
    for _ in 0..=n {
        offsets.push(r.u64("offset table")?);
    }
    if offsets[0] != 0 || offsets.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::corrupt(
            "adjacency offsets are not non-decreasing from 0",
        ));
    }
    r.count(n as u64, 4, "connect-edge table")?;
    let extra = (0..n)
        .map(|_| r.u32("connect-edge table"))
        .collect::<Result<Vec<_>>>()?;
    let total = r.count(offsets[n], 4, "neighbor ids")?;
    let ids = r.take(total * 4, "neighbor ids")?;
    let adjacency = offsets
        .windows(2)
        .map(|w| {
            ids[w[0] as usize * 4..w[1] as usize * 4]
                .chunks_exact(4)
                .map(le_u32)
                .collect()
        })
        .collect();
    let g = ProximityGraph::from_parts(adjacency, extra, m, entry);
    g.validate()?;
    Ok(g)
}

/// Decodes an index, rejecting anything that does not describe a valid graph.
pub fn decode_index(bytes: &[u8]) -> Result<SavedIndex> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::corrupt("bad magic"));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::corrupt(format!("unsupported version {version}")));
    }
    let kind = r.u32("kind")?;
    let n = r.u64("node count")?;
    let dim = r.u32("dimension")? as usize;
    let m = r.u32("degree cap")? as usize;
    let entry = r.u32("entry point")?;
    let num_layers = r.u32("layer count")? as usize;
    if n > u32::MAX as u64 {
        return Err(Error::corrupt(format!("node count {n} exceeds id range")));
    }
    // every layer needs at least 8(n+1) + 4n bytes
    let n = r.count(n, 12, "node count")?;
    let index = match kind {
        0 => {
            if num_layers != 1 {
                return Err(Error::corrupt(format!(
                    "flat index with {num_layers} layers"
                )));
            }
            Index::Flat(decode_layer(&mut r, n, m, entry)?)
        }
        1 => {
            if num_layers == 0 || num_layers > 256 {
                return Err(Error::corrupt(format!("{num_layers} layers")));
            }
            let levels = r.take(n, "levels")?.to_vec();
            let layers = (0..num_layers)
                .map(|_| decode_layer(&mut r, n, m, entry))
                .collect::<Result<Vec<_>>>()?;
            Index::Layered(LayeredGraph::new(levels, layers, entry)?)
        }
        k => return Err(Error::corrupt(format!("unknown index kind {k}"))),
    };
    if r.pos != bytes.len() {
        return Err(Error::corrupt(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok(SavedIndex { dim, index })
}

pub fn load_index(path: impl AsRef<Path>) -> Result<SavedIndex> {
    decode_index(&fs::read(path)?)
}
