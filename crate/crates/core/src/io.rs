//! Plain-text and binary persistence for matrices, cohorts and run outputs.
//!
//! Count matrix: a first line holding `K`, then `K` rows of `K`
//! comma-separated integers. Real-valued images use any of comma, tab or
//! space as delimiter. Lines starting with `#` are metadata or comments.
//!
//! Binary surfaces: ASCII magic `HRGSURF1`, `u64` metadata length `m`, `m`
//! bytes of UTF-8 `key=value` lines, `u64` rows, `u64` columns, then
//! row-major `f64` values; all integers and floats little-endian.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::cluster::{Dendrogram, Partition};
use crate::error::{Error, Result};
use crate::glcm::{BinSpec, CountMatrix, GrayImage};
use crate::lattice::LatticeMode;
use crate::sampler::ChainTrace;

pub const SURFACE_MAGIC: &[u8; 8] = b"HRGSURF1";

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn fields(line: &str) -> impl Iterator<Item = &str> {
    line.split([',', '\t', ' ', ';']).map(str::trim).filter(|f| !f.is_empty())
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// `key=value` pairs from `#key=value` metadata lines.
pub fn metadata(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.trim().strip_prefix('#'))
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

pub fn parse_count_matrix(text: &str, path: &Path) -> Result<CountMatrix> {
    let mut lines = content_lines(text);
    let (_, head) = lines.next().ok_or_else(|| Error::parse(path, "empty count-matrix file"))?;
    let k: usize = head
        .trim()
        .parse()
        .map_err(|_| Error::parse(path, format!("first line must be K, got {head:?}")))?;
    let mut counts = Vec::with_capacity(k * k);
    let mut rows = 0;
    for (no, line) in lines {
        let before = counts.len();
        for f in fields(line) {
            counts.push(
                f.parse::<u64>()
                    .map_err(|_| Error::parse(path, format!("line {no}: {f:?} is not a non-negative integer")))?,
            );
        }
        if counts.len() - before != k {
            return Err(Error::parse(path, format!("line {no}: expected {k} entries, found {}", counts.len() - before)));
        }
        rows += 1;
    }
    if rows != k {
        return Err(Error::parse(path, format!("expected {k} rows, found {rows}")));
    }
    CountMatrix::from_counts(k, counts)
}

pub fn format_count_matrix(m: &CountMatrix) -> String {
    let k = m.levels();
    let mut out = format!("{k}\n");
    for l in 0..k {
        let row: Vec<String> = m.row(l).iter().map(u64::to_string).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn read_count_matrix(path: &Path) -> Result<CountMatrix> {
    parse_count_matrix(&read_text(path)?, path)
}

pub fn write_count_matrix(path: &Path, m: &CountMatrix) -> Result<()> {
    write_text(path, &format_count_matrix(m))
}

/// Rectangular real matrix as `(rows, cols, row-major values)`.
pub fn read_real_matrix(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let text = read_text(path)?;
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (no, line) in content_lines(&text) {
        let before = values.len();
        for f in fields(line) {
            values.push(
                f.parse::<f64>()
                    .map_err(|_| Error::parse(path, format!("line {no}: {f:?} is not a number")))?,
            );
        }
        let width = values.len() - before;
        if *cols.get_or_insert(width) != width {
            return Err(Error::parse(path, format!("line {no}: ragged row of {width} values")));
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::parse(path, "no data rows"));
    }
    Ok((rows, cols.unwrap_or(0), values))
}

/// Image plus optional same-shape 0/1 mask.
pub fn read_image(path: &Path, mask: Option<&Path>) -> Result<GrayImage> {
    let (rows, cols, pixels) = read_real_matrix(path)?;
    let image = GrayImage::new(rows, cols, pixels)?;
    let Some(mask_path) = mask else {
        return Ok(image);
    };
    let (mr, mc, mv) = read_real_matrix(mask_path)?;
    if (mr, mc) != (rows, cols) {
        return Err(Error::DimensionMismatch(format!(
            "mask {} is {mr}x{mc}, image is {rows}x{cols}",
            mask_path.display()
        )));
    }
    let bits = mv
        .iter()
        .map(|&v| match v {
            0.0 => Ok(false),
            1.0 => Ok(true),
            other => Err(Error::parse(mask_path, format!("mask entries must be 0 or 1, found {other}"))),
        })
        .collect::<Result<Vec<bool>>>()?;
    image.with_mask(bits)
}

/// Gray-level cut values: `#lo_q=`, `#hi_q=` lines, then one interior edge
/// per line.
pub fn format_bins(bins: &BinSpec, meta: &[(&str, String)]) -> String {
    let (lo, hi) = bins.clip_quantiles();
    let mut out = header_lines(meta);
    let _ = writeln!(out, "#lo_q={lo}\n#hi_q={hi}");
    for e in bins.interior_edges() {
        let _ = writeln!(out, "{e}");
    }
    out
}

pub fn read_bins(path: &Path) -> Result<BinSpec> {
    let text = read_text(path)?;
    let meta = metadata(&text);
    let q = |key: &str, default: f64| -> Result<f64> {
        match meta.iter().find(|(k, _)| k == key) {
            Some((_, v)) => v.parse().map_err(|_| Error::parse(path, format!("bad {key} {v:?}"))),
            None => Ok(default),
        }
    };
    let edges = content_lines(&text)
        .map(|(no, l)| l.parse::<f64>().map_err(|_| Error::parse(path, format!("line {no}: bad edge {l:?}"))))
        .collect::<Result<Vec<f64>>>()?;
    BinSpec::from_interior_edges(&edges, q("lo_q", 0.0)?, q("hi_q", 1.0)?).map_err(|e| Error::parse(path, e.to_string()))
}

/// One row of an image list: `id,image,mask,label` with mask and label
/// optional.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageEntry {
    pub id: String,
    pub image: PathBuf,
    pub mask: Option<PathBuf>,
    pub label: Option<usize>,
}

/// Reads an image list; relative paths resolve against its directory.
pub fn read_image_list(path: &Path) -> Result<Vec<ImageEntry>> {
    let text = read_text(path)?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut lines = content_lines(&text);
    match lines.next() {
        Some((_, h)) if h.to_ascii_lowercase().starts_with("id,image") => {}
        _ => return Err(Error::parse(path, "expected header id,image,mask,label")),
    }
    let mut out: Vec<ImageEntry> = Vec::new();
    for (no, line) in lines {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() < 2 || cells[0].is_empty() || cells[1].is_empty() {
            return Err(Error::parse(path, format!("line {no}: need at least id and image")));
        }
        if out.iter().any(|e| e.id == cells[0]) {
            return Err(Error::parse(path, format!("line {no}: duplicate id {:?}", cells[0])));
        }
        let mask = cells.get(2).filter(|m| !m.is_empty()).map(|m| base.join(m));
        let label = match cells.get(3).copied().unwrap_or("") {
            "" => None,
            l => Some(l.parse().map_err(|_| Error::parse(path, format!("line {no}: bad label {l:?}")))?),
        };
        out.push(ImageEntry { id: cells[0].to_string(), image: base.join(cells[1]), mask, label });
    }
    if out.is_empty() {
        return Err(Error::parse(path, "image list is empty"));
    }
    Ok(out)
}

/// One subject row of a cohort manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    /// Relative paths resolve against the manifest's directory.
    pub path: PathBuf,
    pub label: Option<usize>,
    pub covariates: Vec<f64>,
}

/// Cohort manifest:
///
/// ```text
/// #k=16
/// #lattice=full_grid
/// id,path,label,covariates
/// s001,s001.csv,1,
/// s002,s002.csv,2,0.5;1.2
/// ```
///
/// Label and covariates may be empty; covariates are `;`-separated and,
/// when present for one subject, must be present for all.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortManifest {
    pub k: usize,
    pub lattice: LatticeMode,
    pub entries: Vec<ManifestEntry>,
    /// Extra `#key=value` lines, kept verbatim.
    pub extra: Vec<(String, String)>,
}

impl CohortManifest {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut k = None;
        let mut lattice = LatticeMode::FullGrid;
        let mut extra = Vec::new();
        for (key, value) in metadata(text) {
            match key.as_str() {
                "k" => k = Some(value.parse().map_err(|_| Error::parse(path, format!("bad K {value:?}")))?),
                "lattice" => lattice = value.parse().map_err(|_| Error::parse(path, format!("bad lattice {value:?}")))?,
                _ => extra.push((key, value)),
            }
        }
        let k = k.ok_or_else(|| Error::parse(path, "missing #k= line"))?;
        let mut lines = content_lines(text);
        match lines.next() {
            Some((_, header)) if header.to_ascii_lowercase().starts_with("id,path") => {}
            _ => return Err(Error::parse(path, "expected header id,path,label,covariates")),
        }
        let base = path.parent().unwrap_or(Path::new(""));
        let mut entries: Vec<ManifestEntry> = Vec::new();
        for (no, line) in lines {
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() < 2 || cells[0].is_empty() || cells[1].is_empty() {
                return Err(Error::parse(path, format!("line {no}: need at least id and path")));
            }
            let label = match cells.get(2).copied().unwrap_or("") {
                "" => None,
                l => Some(l.parse().map_err(|_| Error::parse(path, format!("line {no}: bad label {l:?}")))?),
            };
            let covariates = cells
                .get(3)
                .copied()
                .unwrap_or("")
                .split(';')
                .filter(|c| !c.trim().is_empty())
                .map(|c| {
                    c.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::parse(path, format!("line {no}: bad covariate {c:?}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if entries.iter().any(|e| e.id == cells[0]) {
                return Err(Error::parse(path, format!("line {no}: duplicate subject id {:?}", cells[0])));
            }
            entries.push(ManifestEntry {
                id: cells[0].to_string(),
                path: base.join(cells[1]),
                label,
                covariates,
            });
        }
        if entries.is_empty() {
            return Err(Error::parse(path, "manifest lists no subjects"));
        }
        let width = entries[0].covariates.len();
        if entries.iter().any(|e| e.covariates.len() != width) {
            return Err(Error::DimensionMismatch("subjects disagree on covariate count".into()));
        }
        Ok(Self {
            k,
            lattice,
            entries,
            extra,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?, path)
    }

    /// Paths are written relative to `dir` when they live under it.
    pub fn format(&self, dir: &Path) -> String {
        let mut out = format!("#k={}\n#lattice={}\n", self.k, self.lattice);
        for (k, v) in &self.extra {
            let _ = writeln!(out, "#{k}={v}");
        }
        out.push_str("id,path,label,covariates\n");
        for e in &self.entries {
            let rel = e.path.strip_prefix(dir).unwrap_or(&e.path);
            let label = e.label.map(|l| l.to_string()).unwrap_or_default();
            let cov: Vec<String> = e.covariates.iter().map(f64::to_string).collect();
            let _ = writeln!(out, "{},{},{},{}", e.id, rel.display(), label, cov.join(";"));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.format(path.parent().unwrap_or(Path::new(""))))
    }

    pub fn true_labels(&self) -> Option<Vec<usize>> {
        self.entries.iter().map(|e| e.label).collect()
    }

    pub fn ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.id.clone()).collect()
    }
}

fn header_lines(meta: &[(&str, String)]) -> String {
    meta.iter().map(|(k, v)| format!("#{k}={v}\n")).collect()
}

/// Per-iteration scalar trace as CSV preceded by `#key=value` lines.
pub fn format_trace(trace: &ChainTrace, meta: &[(&str, String)]) -> String {
    let names = trace.series_names();
    let columns: Vec<Vec<f64>> = names.iter().map(|n| trace.series(n).unwrap_or_default()).collect();
    let mut out = header_lines(meta);
    out.push_str("iteration,");
    out.push_str(&names.join(","));
    out.push('\n');
    for (r, rec) in trace.records.iter().enumerate() {
        let _ = write!(out, "{}", rec.iteration);
        for col in &columns {
            let _ = write!(out, ",{}", col[r]);
        }
        out.push('\n');
    }
    out
}

/// Per-iteration cluster labels, one row per retained iteration.
pub fn format_assignments(trace: &ChainTrace, ids: &[String], meta: &[(&str, String)]) -> String {
    let mut out = header_lines(meta);
    out.push_str("iteration,");
    out.push_str(&ids.join(","));
    out.push('\n');
    for rec in &trace.records {
        let labels: Vec<String> = rec.labels.iter().map(usize::to_string).collect();
        let _ = writeln!(out, "{},{}", rec.iteration, labels.join(","));
    }
    out
}

/// Rows of `surfaces` as CSV keyed by subject id.
pub fn format_surfaces_csv(ids: &[String], surfaces: &DMatrix<f64>, meta: &[(&str, String)]) -> String {
    let mut out = header_lines(meta);
    out.push_str("id");
    for i in 0..surfaces.ncols() {
        let _ = write!(out, ",site{i}");
    }
    out.push('\n');
    for (t, id) in ids.iter().enumerate() {
        out.push_str(id);
        for v in surfaces.row(t).iter() {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_surfaces_csv(text: &str, path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut lines = content_lines(text);
    lines.next().ok_or_else(|| Error::parse(path, "missing header"))?;
    let mut ids = Vec::new();
    let mut values = Vec::new();
    let mut width = None;
    for (no, line) in lines {
        let mut cells = line.split(',');
        ids.push(cells.next().unwrap_or("").to_string());
        let before = values.len();
        for c in cells {
            values.push(c.trim().parse::<f64>().map_err(|_| Error::parse(path, format!("line {no}: bad value {c:?}")))?);
        }
        if *width.get_or_insert(values.len() - before) != values.len() - before {
            return Err(Error::parse(path, format!("line {no}: ragged row")));
        }
    }
    Ok((ids.clone(), DMatrix::from_row_slice(ids.len(), width.unwrap_or(0), &values)))
}

pub fn encode_surfaces_binary(surfaces: &DMatrix<f64>, meta: &[(&str, String)]) -> Vec<u8> {
    let header: String = meta.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    let mut out = Vec::with_capacity(32 + header.len() + 8 * surfaces.len());
    out.extend_from_slice(SURFACE_MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&(surfaces.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(surfaces.ncols() as u64).to_le_bytes());
    for row in surfaces.row_iter() {
        for v in row.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Inverse of [`encode_surfaces_binary`]: metadata pairs and the matrix.
pub fn decode_surfaces_binary(bytes: &[u8], path: &Path) -> Result<(Vec<(String, String)>, DMatrix<f64>)> {
    let bad = |m: &str| Error::parse(path, m.to_string());
    if bytes.len() < 16 || &bytes[..8] != SURFACE_MAGIC {
        return Err(bad("not a binary surface file"));
    }
    let word = |at: usize| -> Result<usize> {
        let b = bytes.get(at..at + 8).ok_or_else(|| bad("truncated binary surface file"))?;
        usize::try_from(u64::from_le_bytes(b.try_into().expect("8 bytes"))).map_err(|_| bad("size overflow"))
    };
    let meta_len = word(8)?;
    let meta_end = 16usize.checked_add(meta_len).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated metadata"))?;
    let header = std::str::from_utf8(&bytes[16..meta_end]).map_err(|_| bad("metadata is not UTF-8"))?;
    let meta = header
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    let (rows, cols) = (word(meta_end)?, word(meta_end + 8)?);
    let data = meta_end + 16;
    if rows.checked_mul(cols).and_then(|c| c.checked_mul(8)) != Some(bytes.len().saturating_sub(data)) || bytes.len() < data {
        return Err(bad("truncated binary surface file"));
    }
    let values: Vec<f64> = bytes[data..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((meta, DMatrix::from_row_slice(rows, cols, &values)))
}

/// On-disk encoding of posterior-mean surfaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceFormat {
    Csv,
    Binary,
}

impl SurfaceFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Binary => "binary",
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            Self::Csv => "surfaces.csv",
            Self::Binary => "surfaces.bin",
        }
    }
}

impl std::str::FromStr for SurfaceFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "binary" | "bin" => Ok(Self::Binary),
            other => Err(crate::error::invalid(format!("unknown surface format {other:?}"))),
        }
    }
}

/// Surfaces with their subject ids and metadata, in either encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceFile {
    pub ids: Vec<String>,
    pub surfaces: DMatrix<f64>,
    pub meta: Vec<(String, String)>,
}

/// Writes surfaces; the binary form keeps ids as a `;`-joined `ids` entry.
pub fn write_surfaces(path: &Path, format: SurfaceFormat, ids: &[String], surfaces: &DMatrix<f64>, meta: &[(&str, String)]) -> Result<()> {
    match format {
        SurfaceFormat::Csv => write_text(path, &format_surfaces_csv(ids, surfaces, meta)),
        SurfaceFormat::Binary => {
            let mut all = meta.to_vec();
            all.push(("ids", ids.join(";")));
            write_bytes(path, &encode_surfaces_binary(surfaces, &all))
        }
    }
}

/// Reads either encoding, detected from the leading magic bytes.
pub fn read_surfaces(path: &Path) -> Result<SurfaceFile> {
    let bytes = read_bytes(path)?;
    if bytes.starts_with(SURFACE_MAGIC) {
        let (mut meta, surfaces): (Vec<(String, String)>, _) = decode_surfaces_binary(&bytes, path)?;
        let ids: Vec<String> = match meta.iter().position(|(k, _)| k == "ids") {
            Some(i) => meta.remove(i).1.split(';').map(String::from).collect(),
            None => (1..=surfaces.nrows()).map(|t| format!("subject{t}")).collect(),
        };
        if ids.len() != surfaces.nrows() {
            return Err(Error::parse(path, "id count does not match surface rows"));
        }
        return Ok(SurfaceFile { ids, surfaces, meta });
    }
    let text = String::from_utf8(bytes).map_err(|_| Error::parse(path, "neither binary nor UTF-8 text"))?;
    let (ids, surfaces) = parse_surfaces_csv(&text, path)?;
    Ok(SurfaceFile { ids, surfaces, meta: metadata(&text) })
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// `id,cluster` rows.
pub fn format_partition(ids: &[String], partition: &Partition, meta: &[(&str, String)]) -> String {
    let mut out = header_lines(meta);
    out.push_str("id,cluster\n");
    for (id, l) in ids.iter().zip(partition.labels()) {
        let _ = writeln!(out, "{id},{l}");
    }
    out
}

/// Reads any two-column `id,label` file with a header row.
pub fn read_labels(path: &Path) -> Result<(Vec<String>, Vec<usize>)> {
    let text = read_text(path)?;
    let mut lines = content_lines(&text);
    lines.next().ok_or_else(|| Error::parse(path, "missing header"))?;
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    for (no, line) in lines {
        let (id, label) = line
            .split_once(',')
            .ok_or_else(|| Error::parse(path, format!("line {no}: expected id,label")))?;
        ids.push(id.trim().to_string());
        labels.push(
            label
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, format!("line {no}: bad label {label:?}")))?,
        );
    }
    Ok((ids, labels))
}

/// Merge list: `step,a,b,height,size`, nodes numbered as in [`Dendrogram`].
pub fn format_dendrogram(dend: &Dendrogram, meta: &[(&str, String)]) -> String {
    let mut out = header_lines(meta);
    let _ = writeln!(out, "#leaves={}", dend.leaves());
    out.push_str("step,a,b,height,size\n");
    for (s, m) in dend.merges().iter().enumerate() {
        let _ = writeln!(out, "{s},{},{},{},{}", m.a, m.b, m.height, m.size);
    }
    out
}

/// Ordered `key=value` lines.
pub fn format_key_values(pairs: &[(String, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

pub fn parse_key_values(text: &str, path: &Path) -> Result<Vec<(String, String)>> {
    content_lines(text)
        .map(|(no, line)| {
            line.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::parse(path, format!("line {no}: expected key=value")))
        })
        .collect()
}
