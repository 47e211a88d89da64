//! The BXM1 matrix container and its CSV alternative.
//!
//! A BXM1 file is the bytes `BXM1\n`, one JSON header line
//! `{"rows":…,"cols":…,"dtype":"f64"|"f32","meta":{…}}\n`, then
//! `rows × cols` little-endian values in row-major order. Files are always
//! written as `f64`; `f32` payloads are widened on read.
//!
//! The CSV alternative has an optional first line `# meta: <JSON>` followed
//! by one comma-separated row per line.

use std::fs;
use std::path::Path;

use repstab_core::{Matrix, RepMeta, RepresentationSet, ScanSeries, SimilarityMatrix};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 5] = b"BXM1\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F64,
    F32,
}

impl Dtype {
    fn width(self) -> usize {
        match self {
            Dtype::F64 => 8,
            Dtype::F32 => 4,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    rows: usize,
    cols: usize,
    dtype: Dtype,
    meta: Value,
}

/// A decoded container: values plus the free-form `meta` object.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub values: Matrix,
    pub meta: Value,
}

impl Container {
    pub fn kind(&self) -> Option<&str> {
        self.meta.get("kind").and_then(Value::as_str)
    }
}

pub fn encode(values: &Matrix, meta: &Value) -> Result<Vec<u8>> {
    let header = Header { rows: values.rows(), cols: values.cols(), dtype: Dtype::F64, meta: meta.clone() };
    let mut out = Vec::with_capacity(64 + values.as_slice().len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(serde_json::to_string(&header)?.as_bytes());
    out.push(b'\n');
    for v in values.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Container> {
    let rest = bytes.strip_prefix(MAGIC.as_slice()).ok_or_else(|| Error::Format("missing BXM1 magic".into()))?;
    let nl = rest.iter().position(|&b| b == b'\n').ok_or_else(|| Error::Format("unterminated header line".into()))?;
    let header: Header = serde_json::from_slice(&rest[..nl]).map_err(|e| Error::Format(format!("bad header: {e}")))?;
    if !header.meta.is_object() {
        return Err(Error::Format("header meta must be a JSON object".into()));
    }
    let payload = &rest[nl + 1..];
    let w = header.dtype.width();
    let expected = header.rows.checked_mul(header.cols).ok_or_else(|| Error::Format("dimensions overflow".into()))?;
    if payload.len() < expected * w {
        return Err(Error::Truncated { expected, found: payload.len() / w });
    }
    if payload.len() > expected * w {
        return Err(Error::Format(format!("{} trailing bytes after the payload", payload.len() - expected * w)));
    }
    let data: Vec<f64> = match header.dtype {
        Dtype::F64 => payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
        Dtype::F32 => payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect(),
    };
    Ok(Container { values: Matrix::new(header.rows, header.cols, data)?, meta: header.meta })
}

/// Encodes an `f32` payload; used for fixtures from 32-bit producers.
pub fn encode_f32(values: &Matrix, meta: &Value) -> Result<Vec<u8>> {
    let header = Header { rows: values.rows(), cols: values.cols(), dtype: Dtype::F32, meta: meta.clone() };
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(serde_json::to_string(&header)?.as_bytes());
    out.push(b'\n');
    for v in values.as_slice() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn encode_csv(values: &Matrix, meta: &Value) -> Result<String> {
    let mut s = String::new();
    if meta.as_object().is_some_and(|m| !m.is_empty()) {
        s.push_str("# meta: ");
        s.push_str(&serde_json::to_string(meta)?);
        s.push('\n');
    }
    for row in values.row_iter() {
        let cells: Vec<String> = row.iter().map(f64::to_string).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    Ok(s)
}

pub fn decode_csv(text: &str) -> Result<Container> {
    let mut meta = json!({});
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if let Some(m) = line.strip_prefix("# meta:") {
            if n != 0 {
                return Err(Error::Format(format!("meta line must be first, found on line {}", n + 1)));
            }
            meta = serde_json::from_str(m.trim()).map_err(|e| Error::Format(format!("bad meta line: {e}")))?;
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|c| c.trim().parse::<f64>().map_err(|e| Error::Format(format!("line {}: {c:?}: {e}", n + 1))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(Container { values: Matrix::from_rows(&rows)?, meta })
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads either format, sniffing the BXM1 magic.
pub fn read_container(path: &Path) -> Result<Container> {
    let bytes = read_bytes(path)?;
    if bytes.starts_with(MAGIC) {
        decode(&bytes)
    } else {
        let text = String::from_utf8(bytes).map_err(|_| Error::Format(format!("{} is neither BXM1 nor UTF-8 CSV", path.display())))?;
        decode_csv(&text)
    }
}

fn rep_meta_json(meta: &RepMeta) -> Value {
    let mut v = serde_json::to_value(meta).expect("RepMeta serializes");
    v["kind"] = json!("reps");
    v
}

fn rep_meta_from(meta: &Value, rows: usize) -> Result<RepMeta> {
    let mut m = RepMeta::numbered("", "s", rows);
    let obj = meta.as_object().cloned().unwrap_or_default();
    if let Some(v) = obj.get("model_name") {
        m.model_name = v.as_str().ok_or_else(|| Error::Format("model_name must be a string".into()))?.into();
    }
    if let Some(v) = obj.get("layer") {
        m.layer = v.as_i64().ok_or_else(|| Error::Format("layer must be an integer".into()))?;
    }
    if let Some(v) = obj.get("context_length") {
        m.context_length = v
            .as_u64()
            .and_then(|c| u32::try_from(c).ok())
            .ok_or_else(|| Error::Format("context_length must be a non-negative integer".into()))?;
    }
    if let Some(v) = obj.get("block_id") {
        m.block_id = if v.is_null() { None } else { Some(v.as_i64().ok_or_else(|| Error::Format("block_id must be an integer".into()))?) };
    }
    if let Some(v) = obj.get("stimulus_ids") {
        m.stimulus_ids = serde_json::from_value(v.clone()).map_err(|e| Error::Format(format!("stimulus_ids: {e}")))?;
    }
    Ok(m)
}

pub fn reps_container(reps: &RepresentationSet) -> (Matrix, Value) {
    (reps.values().clone(), rep_meta_json(reps.meta()))
}

pub fn reps_from_container(c: Container) -> Result<RepresentationSet> {
    if let Some(k) = c.kind() {
        if k != "reps" {
            return Err(Error::Format(format!("expected a representation set, found kind {k:?}")));
        }
    }
    let meta = rep_meta_from(&c.meta, c.values.rows())?;
    Ok(RepresentationSet::new(c.values, meta)?)
}

pub fn save_matrix(path: &Path, reps: &RepresentationSet) -> Result<()> {
    let (m, meta) = reps_container(reps);
    write_bytes(path, &encode(&m, &meta)?)
}

pub fn save_matrix_csv(path: &Path, reps: &RepresentationSet) -> Result<()> {
    let (m, meta) = reps_container(reps);
    write_bytes(path, encode_csv(&m, &meta)?.as_bytes())
}

/// Loads a representation set from BXM1 or CSV.
pub fn load_matrix(path: &Path) -> Result<RepresentationSet> {
    reps_from_container(read_container(path)?)
}

pub fn scan_container(s: &ScanSeries) -> (Matrix, Value) {
    let meta = json!({
        "kind": "scan",
        "subject_id": s.subject_id,
        "block_id": s.block_id,
        "scan_period_s": s.scan_period_s,
        "region_of_voxel": s.region_of_voxel(),
    });
    (s.values().clone(), meta)
}

pub fn save_scan_series(path: &Path, s: &ScanSeries) -> Result<()> {
    let (m, meta) = scan_container(s);
    write_bytes(path, &encode(&m, &meta)?)
}

pub fn scan_from_container(c: Container) -> Result<ScanSeries> {
    let field = |k: &str| c.meta.get(k).ok_or_else(|| Error::Format(format!("scan series meta lacks {k:?}")));
    let subject_id = field("subject_id")?.as_str().ok_or_else(|| Error::Format("subject_id must be a string".into()))?.to_string();
    let block_id = field("block_id")?.as_i64().ok_or_else(|| Error::Format("block_id must be an integer".into()))?;
    let period = field("scan_period_s")?.as_f64().ok_or_else(|| Error::Format("scan_period_s must be a number".into()))?;
    let regions: Vec<String> = serde_json::from_value(field("region_of_voxel")?.clone())
        .map_err(|e| Error::Format(format!("region_of_voxel: {e}")))?;
    Ok(ScanSeries::new(c.values, regions, subject_id, block_id, period)?)
}

pub fn load_scan_series(path: &Path) -> Result<ScanSeries> {
    let c = read_container(path)?;
    if c.kind().is_some_and(|k| k != "scan") {
        return Err(Error::Format(format!("{} is not a scan series", path.display())));
    }
    scan_from_container(c)
}

pub fn simmat_container(s: &SimilarityMatrix) -> (Matrix, Value) {
    let meta = json!({
        "kind": "simmat",
        "stimulus_ids": s.stimulus_ids(),
        "source": s.source_meta(),
        "masks": s.masks(),
    });
    (s.values().clone(), meta)
}

pub fn simmat_from_container(c: Container) -> Result<SimilarityMatrix> {
    let ids: Vec<String> = match c.meta.get("stimulus_ids") {
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::Format(format!("stimulus_ids: {e}")))?,
        None => (0..c.values.rows()).map(|i| format!("s{i}")).collect(),
    };
    let source = match c.meta.get("source") {
        Some(v) => rep_meta_from(v, 0)?,
        None => RepMeta::default(),
    };
    let masks: Vec<String> = match c.meta.get("masks") {
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::Format(format!("masks: {e}")))?,
        None => Vec::new(),
    };
    Ok(SimilarityMatrix::from_parts(c.values, ids, source, masks)?)
}

pub fn save_simmat(path: &Path, s: &SimilarityMatrix) -> Result<()> {
    let (m, meta) = simmat_container(s);
    write_bytes(path, &encode(&m, &meta)?)
}

pub fn load_simmat(path: &Path) -> Result<SimilarityMatrix> {
    simmat_from_container(read_container(path)?)
}

/// A file holding either raw representations or a similarity matrix.
pub enum SpaceFile {
    Reps(RepresentationSet),
    Sim(SimilarityMatrix),
}

impl SpaceFile {
    pub fn load(path: &Path) -> Result<Self> {
        let c = read_container(path)?;
        match c.kind() {
            Some("simmat") => Ok(SpaceFile::Sim(simmat_from_container(c)?)),
            Some("scan") => {
                let s = scan_from_container(c)?;
                Ok(SpaceFile::Reps(repstab_core::brainprep::scans_as_reps(&s)?))
            }
            _ => Ok(SpaceFile::Reps(reps_from_container(c)?)),
        }
    }

    pub fn stimulus_ids(&self) -> &[String] {
        match self {
            SpaceFile::Reps(r) => r.stimulus_ids(),
            SpaceFile::Sim(s) => s.stimulus_ids(),
        }
    }

    /// Similarity matrix of the space, computing it in parallel if needed.
    pub fn into_simmat(self) -> Result<SimilarityMatrix> {
        match self {
            SpaceFile::Reps(r) => crate::par::cosine_similarity_matrix(&r),
            SpaceFile::Sim(s) => Ok(s),
        }
    }
}
