//! Binary and text formats: coefficient tensors, snapshot bundles, dense
//! matrices (raw and MatrixMarket), and the on-disk convolution-table cache.
//!
//! All binary formats are little-endian and start with a 4-byte magic and the
//! multi-index ordering version.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::hermite::{CoeffTensor, ORDERING_VERSION};
use crate::kernel::{ConvolutionTables, Potential, SubordinationRule};
use crate::operators::{default_points, LandauOperators, OperatorError};
use crate::solver::Snapshot;

const TENSOR_MAGIC: &[u8; 4] = b"LHCT";
const BUNDLE_MAGIC: &[u8; 4] = b"LHSS";
const MATRIX_MAGIC: &[u8; 4] = b"LHMX";
const TABLE_MAGIC: &[u8; 4] = b"LHTB";

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic: expected {expected}")]
    BadMagic { expected: String },
    #[error("ordering version {0} is not supported (expected {ORDERING_VERSION})")]
    Version(u32),
    #[error("truncated or oversized data: {0}")]
    Length(String),
    #[error("MatrixMarket parse error: {0}")]
    MatrixMarket(String),
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], IoError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len());
        let end = end.ok_or_else(|| IoError::Length(format!("need {n} bytes at offset {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn magic(&mut self, m: &[u8; 4]) -> Result<(), IoError> {
        if self.take(4)? != m {
            return Err(IoError::BadMagic {
                expected: String::from_utf8_lossy(m).into_owned(),
            });
        }
        Ok(())
    }

    fn u32(&mut self) -> Result<u32, IoError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, IoError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, IoError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, IoError> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| IoError::Length("count overflow".into()))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn version(&mut self) -> Result<(), IoError> {
        let v = self.u32()?;
        if v != ORDERING_VERSION {
            return Err(IoError::Version(v));
        }
        Ok(())
    }

    fn finish(&self) -> Result<(), IoError> {
        if self.pos != self.buf.len() {
            return Err(IoError::Length(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

fn push_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

/// `LHCT | u32 ordering version | u32 degree | f64 × num_modes`.
pub fn tensor_to_bytes(g: &CoeffTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * g.values().len());
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&ORDERING_VERSION.to_le_bytes());
    out.extend_from_slice(&(g.degree() as u32).to_le_bytes());
    push_f64s(&mut out, g.values());
    out
}

fn read_tensor_record(r: &mut Reader<'_>) -> Result<CoeffTensor, IoError> {
    r.magic(TENSOR_MAGIC)?;
    r.version()?;
    let degree = r.u32()? as usize;
    let n = crate::hermite::level_offset(degree + 1);
    let values = r.f64s(n)?;
    CoeffTensor::from_values(degree, values).map_err(|e| IoError::Length(e.to_string()))
}

pub fn tensor_from_bytes(buf: &[u8]) -> Result<CoeffTensor, IoError> {
    let mut r = Reader::new(buf);
    let g = read_tensor_record(&mut r)?;
    r.finish()?;
    Ok(g)
}

pub fn write_tensor(path: &Path, g: &CoeffTensor) -> Result<(), IoError> {
    atomic_write(path, &tensor_to_bytes(g))
}

pub fn read_tensor(path: &Path) -> Result<CoeffTensor, IoError> {
    tensor_from_bytes(&fs::read(path).map_err(io_err(path))?)
}

/// `LHSS | u32 ordering version | u64 count | (f64 t, tensor record) × count`.
pub fn snapshots_to_bytes(snaps: &[Snapshot]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(BUNDLE_MAGIC);
    out.extend_from_slice(&ORDERING_VERSION.to_le_bytes());
    out.extend_from_slice(&(snaps.len() as u64).to_le_bytes());
    for s in snaps {
        out.extend_from_slice(&s.t.to_le_bytes());
        out.extend_from_slice(&tensor_to_bytes(&s.state));
    }
    out
}

pub fn snapshots_from_bytes(buf: &[u8]) -> Result<Vec<Snapshot>, IoError> {
    let mut r = Reader::new(buf);
    r.magic(BUNDLE_MAGIC)?;
    r.version()?;
    let n = r.u64()? as usize;
    let mut out = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        let t = r.f64()?;
        out.push(Snapshot {
            t,
            state: read_tensor_record(&mut r)?,
        });
    }
    r.finish()?;
    Ok(out)
}

pub fn write_snapshots(path: &Path, snaps: &[Snapshot]) -> Result<(), IoError> {
    atomic_write(path, &snapshots_to_bytes(snaps))
}

pub fn read_snapshots(path: &Path) -> Result<Vec<Snapshot>, IoError> {
    snapshots_from_bytes(&fs::read(path).map_err(io_err(path))?)
}

/// `LHMX | u32 ordering version | u64 rows | u64 cols | f64 × rows·cols` (row-major).
pub fn matrix_to_bytes(m: &DMatrix<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 8 * m.len());
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&ORDERING_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    out
}

pub fn matrix_from_bytes(buf: &[u8]) -> Result<DMatrix<f64>, IoError> {
    let mut r = Reader::new(buf);
    r.magic(MATRIX_MAGIC)?;
    r.version()?;
    let rows = r.u64()? as usize;
    let cols = r.u64()? as usize;
    let n = rows.checked_mul(cols).ok_or_else(|| IoError::Length("matrix size overflow".into()))?;
    let vals = r.f64s(n)?;
    r.finish()?;
    Ok(DMatrix::from_row_slice(rows, cols, &vals))
}

/// Dense MatrixMarket `array real general` (column-major entries).
pub fn matrix_market(m: &DMatrix<f64>) -> String {
    let mut s = String::from("%%MatrixMarket matrix array real general\n");
    s.push_str(&format!("{} {}\n", m.nrows(), m.ncols()));
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            s.push_str(&format!("{:.17e}\n", m[(i, j)]));
        }
    }
    s
}

pub fn parse_matrix_market(text: &str) -> Result<DMatrix<f64>, IoError> {
    let bad = |m: &str| IoError::MatrixMarket(m.to_string());
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| bad("empty input"))?;
    if !header.starts_with("%%MatrixMarket matrix array real general") {
        return Err(bad("only 'matrix array real general' is supported"));
    }
    let mut lines = lines.filter(|l| !l.starts_with('%'));
    let dims = lines.next().ok_or_else(|| bad("missing size line"))?;
    let dims: Vec<usize> = dims
        .split_whitespace()
        .map(|x| x.parse().map_err(|_| bad("bad size line")))
        .collect::<Result<_, _>>()?;
    if dims.len() != 2 {
        return Err(bad("size line needs two integers"));
    }
    let vals: Vec<f64> = lines
        .map(|l| l.trim().parse().map_err(|_| bad(&format!("bad entry '{l}'"))))
        .collect::<Result<_, _>>()?;
    if vals.len() != dims[0] * dims[1] {
        return Err(bad("entry count does not match size"));
    }
    Ok(DMatrix::from_column_slice(dims[0], dims[1], &vals))
}

/// Writes via a temporary file in the same directory and a rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let res = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if res.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    res.map_err(io_err(path))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Everything the convolution tables depend on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableKey {
    pub gamma: f64,
    pub degree: usize,
    pub points: usize,
    pub nodes_per_half: usize,
}

impl TableKey {
    pub fn for_operators(pot: Potential, degree: usize, points: Option<usize>) -> Self {
        TableKey {
            gamma: pot.gamma,
            degree,
            points: points.unwrap_or_else(|| default_points(degree)),
            nodes_per_half: SubordinationRule::default().nodes_per_half,
        }
    }

    pub fn hash(&self) -> String {
        let text = format!(
            "landau-tables v{} ordering {} gamma {:016x} degree {} points {} subordination {}",
            env!("CARGO_PKG_VERSION"),
            ORDERING_VERSION,
            self.gamma.to_bits(),
            self.degree,
            self.points,
            self.nodes_per_half
        );
        sha256_hex(text.as_bytes())
    }

    pub fn file_name(&self) -> String {
        format!("tables-{}.bin", &self.hash()[..16])
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CacheStatus {
    Disabled,
    Hit,
    Miss,
    /// A cache file existed but was unusable; it was rebuilt and overwritten.
    Mismatch(String),
}

fn tables_to_bytes(key_hash: &str, t: &ConvolutionTables) -> Vec<u8> {
    let mut out = Vec::with_capacity(80 + 8 * t.raw().len());
    out.extend_from_slice(TABLE_MAGIC);
    out.extend_from_slice(&ORDERING_VERSION.to_le_bytes());
    out.extend_from_slice(&hex::decode(key_hash).expect("hash is hex"));
    out.extend_from_slice(&t.gamma.to_le_bytes());
    out.extend_from_slice(&(t.degree as u64).to_le_bytes());
    out.extend_from_slice(&(t.stored_degree as u64).to_le_bytes());
    out.extend_from_slice(&(t.num_points() as u64).to_le_bytes());
    push_f64s(&mut out, t.raw());
    out
}

fn tables_from_bytes(key_hash: &str, buf: &[u8]) -> Result<ConvolutionTables, String> {
    let mut r = Reader::new(buf);
    let inner = |r: &mut Reader<'_>| -> Result<ConvolutionTables, IoError> {
        r.magic(TABLE_MAGIC)?;
        r.version()?;
        let stored_hash = hex::encode(r.take(32)?);
        if stored_hash != key_hash {
            return Err(IoError::Length(format!("key hash {stored_hash} does not match {key_hash}")));
        }
        let gamma = r.f64()?;
        let degree = r.u64()? as usize;
        let stored = r.u64()? as usize;
        let npts = r.u64()? as usize;
        let n = 6 * crate::hermite::level_offset(stored + 1) * npts;
        let data = r.f64s(n)?;
        r.finish()?;
        ConvolutionTables::from_raw(gamma, degree, stored, npts, data)
            .ok_or_else(|| IoError::Length("table size mismatch".into()))
    };
    inner(&mut r).map_err(|e| e.to_string())
}

/// Builds the operators, reading and writing convolution tables under `cache_dir` when given.
pub fn load_or_build_operators(
    cache_dir: Option<&Path>,
    pot: Potential,
    degree: usize,
    points: Option<usize>,
) -> Result<(LandauOperators, CacheStatus), IoError> {
    let Some(dir) = cache_dir else {
        return Ok((LandauOperators::new(pot, degree, points)?, CacheStatus::Disabled));
    };
    let key = TableKey::for_operators(pot, degree, points);
    let hash = key.hash();
    let path = dir.join(key.file_name());
    let grid = LandauOperators::grid_for(degree, key.points);
    let mut status = CacheStatus::Miss;
    if let Ok(buf) = fs::read(&path) {
        match tables_from_bytes(&hash, &buf) {
            Ok(t) => match LandauOperators::from_parts(pot, degree, grid.clone(), t) {
                Ok(ops) => return Ok((ops, CacheStatus::Hit)),
                Err(e) => status = CacheStatus::Mismatch(e.to_string()),
            },
            Err(e) => status = CacheStatus::Mismatch(e),
        }
    }
    let tables = ConvolutionTables::build(pot, &grid, degree + 1, SubordinationRule::default());
    atomic_write(&path, &tables_to_bytes(&hash, &tables))?;
    Ok((LandauOperators::from_parts(pot, degree, grid, tables)?, status))
}
