//! Binary cache of effective tensor tables, keyed by a scenario hash.
//!
//! Layout (little-endian): magic, version, hash, `n`, grid length, entry and
//! point counts, micro metadata, then per entry the position, coefficient
//! bounds and row-major `M^H`, `R^H`, `G^H(t_m)`, `J^H(t_m)`, then the point
//! index. A SHA-256 of everything before it closes the file.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::effective::{CorrectorNorms, EffectiveTensorTable, MicroMeta, TensorEntry};
use crate::error::{Error, Result};
use crate::materials::CoefficientBounds;

const MAGIC: &[u8; 8] = b"FEHMMTT\0";
const VERSION: u32 = 1;

/// SHA-256 of the JSON form of `key`.
pub fn scenario_hash(key: &impl Serialize) -> [u8; 32] {
    let json = serde_json::to_vec(key).expect("hash key serialises");
    Sha256::digest(&json).into()
}

pub fn hex(hash: &[u8; 32]) -> String {
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

struct Writer(Vec<u8>);

impl Writer {
    fn u64(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u64).to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn mat(&mut self, a: &DMatrix<f64>) {
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                self.f64(a[(i, j)]);
            }
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, k: usize) -> Option<&[u8]> {
        let s = self.buf.get(self.pos..self.pos.checked_add(k)?)?;
        self.pos += k;
        Some(s)
    }
    fn u64(&mut self) -> Option<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().ok()?);
        usize::try_from(v).ok()
    }
    fn f64(&mut self) -> Option<f64> {
        Some(f64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
    fn mat(&mut self, n: usize) -> Option<DMatrix<f64>> {
        let mut v = Vec::with_capacity(n * n);
        for _ in 0..n * n {
            v.push(self.f64()?);
        }
        Some(DMatrix::from_row_slice(n, n, &v))
    }
}

pub fn encode(t: &EffectiveTensorTable) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.0.extend_from_slice(&VERSION.to_le_bytes());
    w.0.extend_from_slice(&t.hash);
    w.u64(t.n);
    w.u64(t.grid_len());
    w.u64(t.entries.len());
    w.u64(t.point_index.len());
    w.u64(t.meta.order);
    for c in t.meta.cells {
        w.u64(c);
    }
    w.f64(t.meta.h);
    w.f64(t.meta.tau);
    for e in &t.entries {
        for v in e.x {
            w.f64(v);
        }
        w.f64(e.bounds.alpha);
        w.f64(e.bounds.c_m);
        w.f64(e.bounds.c_r);
        w.mat(&e.m_h);
        w.mat(&e.r_h);
        e.g_h.iter().for_each(|g| w.mat(g));
        e.j_h.iter().for_each(|g| w.mat(g));
    }
    for &p in &t.point_index {
        w.u64(p);
    }
    let digest: [u8; 32] = Sha256::digest(&w.0).into();
    w.0.extend_from_slice(&digest);
    w.0
}

pub fn decode(buf: &[u8]) -> Result<EffectiveTensorTable> {
    let bad = |what: &str| Error::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, what.to_string()));
    if buf.len() < 8 + 4 + 32 + 32 {
        return Err(bad("cache file truncated"));
    }
    let (body, digest) = buf.split_at(buf.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(bad("cache checksum mismatch"));
    }
    let mut r = Reader { buf: body, pos: 0 };
    if r.take(8) != Some(MAGIC.as_slice()) {
        return Err(bad("not a tensor cache file"));
    }
    let version = u32::from_le_bytes(r.take(4).unwrap().try_into().unwrap());
    if version != VERSION {
        return Err(bad("unsupported cache version"));
    }
    let parse = |r: &mut Reader| -> Option<EffectiveTensorTable> {
        let hash: [u8; 32] = r.take(32)?.try_into().ok()?;
        let n = r.u64()?;
        let grid = r.u64()?;
        let n_entries = r.u64()?;
        let n_points = r.u64()?;
        if grid == 0 || n > 1024 || n_entries > n_points.max(1) {
            return None;
        }
        let order = r.u64()?;
        let cells = [r.u64()?, r.u64()?, r.u64()?];
        let h = r.f64()?;
        let tau = r.f64()?;
        let mut entries = Vec::with_capacity(n_entries);
        for _ in 0..n_entries {
            let x = [r.f64()?, r.f64()?, r.f64()?];
            let bounds = CoefficientBounds {
                alpha: r.f64()?,
                c_m: r.f64()?,
                c_r: r.f64()?,
            };
            let m_h = r.mat(n)?;
            let r_h = r.mat(n)?;
            let g_h = (0..grid).map(|_| r.mat(n)).collect::<Option<Vec<_>>>()?;
            let j_h = (0..grid).map(|_| r.mat(n)).collect::<Option<Vec<_>>>()?;
            entries.push(TensorEntry {
                x,
                bounds,
                m_h,
                r_h,
                g_h,
                j_h,
                norms: CorrectorNorms::default(),
            });
        }
        let point_index = (0..n_points).map(|_| r.u64()).collect::<Option<Vec<_>>>()?;
        if point_index.iter().any(|&p| p >= n_entries) || r.pos != r.buf.len() {
            return None;
        }
        Some(EffectiveTensorTable {
            n,
            hash,
            meta: MicroMeta {
                order,
                cells,
                h,
                tau,
                steps: grid - 1,
            },
            entries,
            point_index,
        })
    };
    parse(&mut r).ok_or_else(|| bad("malformed cache payload"))
}

/// Directory of cache files named by the hex scenario hash.
#[derive(Debug, Clone)]
pub struct TensorCache {
    pub dir: PathBuf,
}

#[derive(Debug, Clone)]
pub struct CacheFileInfo {
    pub path: PathBuf,
    pub bytes: u64,
}

impl TensorCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        TensorCache { dir: dir.into() }
    }

    pub fn path(&self, hash: &[u8; 32]) -> PathBuf {
        self.dir.join(format!("{}.tensors", hex(hash)))
    }

    pub fn put(&self, table: &EffectiveTensorTable) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.dir)?;
        let path = self.path(&table.hash);
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, encode(table))?;
        std::fs::rename(&tmp, &path)?;
        Ok(path)
    }

    /// Loads the table for `hash`. Missing, corrupt or stale files are misses;
    /// corrupt ones are logged.
    pub fn get(&self, hash: &[u8; 32]) -> Option<EffectiveTensorTable> {
        let path = self.path(hash);
        let buf = std::fs::read(&path).ok()?;
        match decode(&buf) {
            Ok(t) if &t.hash == hash => Some(t),
            Ok(_) => {
                log::warn!("cache file {} has a different scenario hash; ignoring", path.display());
                None
            }
            Err(e) => {
                log::warn!("cache file {} is unreadable ({e}); recomputing", path.display());
                None
            }
        }
    }

    pub fn list(&self) -> Result<Vec<CacheFileInfo>> {
        let mut out = Vec::new();
        if !self.dir.exists() {
            return Ok(out);
        }
        for e in std::fs::read_dir(&self.dir)? {
            let e = e?;
            let p = e.path();
            if is_cache_file(&p) {
                out.push(CacheFileInfo {
                    bytes: e.metadata()?.len(),
                    path: p,
                });
            }
        }
        out.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(out)
    }

    /// Removes all cache files; returns how many were deleted.
    pub fn clear(&self) -> Result<usize> {
        let files = self.list()?;
        for f in &files {
            std::fs::remove_file(&f.path)?;
        }
        Ok(files.len())
    }
}

pub fn is_cache_file(p: &Path) -> bool {
    p.extension().and_then(|s| s.to_str()) == Some("tensors")
}
