//! On-disk formats: ROI time series, atlas and connectivity matrices as CSV,
//! everything else as pretty-printed JSON.
//!
//! Floats are written with the shortest representation that parses back to
//! the same value, so write, read, write reproduces the file byte for byte.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use starformer_core::centrality::{AtlasPartition, Network};
use starformer_core::connectivity::EffectiveConnectivity;
use starformer_core::TimeSeriesMatrix;

use crate::error::{Error, Result};

const ATLAS_HEADER: [&str; 3] = ["roi_id", "roi_name", "network"];

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Fails unless `dir` is absent or empty, then creates it.
pub fn prepare_output_dir(dir: &Path) -> Result<()> {
    match fs::read_dir(dir) {
        Ok(mut it) => {
            if it.next().is_some() {
                return Err(Error::OutputExists { path: dir.to_path_buf() });
            }
            Ok(())
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        Err(e) => Err(Error::io(dir, e)),
    }
}

pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Vec<u8> {
    w.into_inner().expect("writing to memory cannot fail")
}

fn csv_records(bytes: &[u8], path: &Path) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(bytes);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        out.push((line, rec));
    }
    Ok(out)
}

/// Header `t,<roi ids>`, then one row per time point.
pub fn encode_series(ts: &TimeSeriesMatrix) -> Vec<u8> {
    let mut w = csv_writer();
    let header = std::iter::once("t").chain(ts.roi_ids().iter().map(String::as_str));
    w.write_record(header).expect("in-memory write");
    let (n, m) = (ts.n(), ts.m());
    let mut row = Vec::with_capacity(n + 1);
    for t in 0..m {
        row.clear();
        row.push(t.to_string());
        row.extend((0..n).map(|r| format_f64(ts.row(r)[t])));
        w.write_record(&row).expect("in-memory write");
    }
    finish(w)
}

/// Parses a series file. The `t` column must be present but its values are
/// not interpreted.
pub fn decode_series(bytes: &[u8], path: &Path, subject: &str) -> Result<TimeSeriesMatrix> {
    let records = csv_records(bytes, path)?;
    let Some(((_, header), rows)) = records.split_first() else {
        return Err(Error::parse(path, 1, "empty time series file"));
    };
    if header.get(0) != Some("t") {
        return Err(Error::parse(path, 1, "header must start with column `t`"));
    }
    let ids: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let n = ids.len();
    if n == 0 {
        return Err(Error::parse(path, 1, "no ROI columns"));
    }
    if rows.is_empty() {
        return Err(Error::parse(path, 2, "no time points"));
    }
    let m = rows.len();
    let mut values = vec![0.0; n * m];
    for (t, (line, rec)) in rows.iter().enumerate() {
        if rec.len() != n + 1 {
            return Err(Error::parse(path, *line, format!("{} fields, expected {}", rec.len(), n + 1)));
        }
        for (r, cell) in rec.iter().skip(1).enumerate() {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, *line, format!("cannot parse {cell:?} as a number (ROI {})", ids[r])))?;
            if !v.is_finite() {
                return Err(Error::NonFiniteCell {
                    path: path.to_path_buf(),
                    subject: subject.to_owned(),
                    line: *line,
                    time: t,
                    roi: ids[r].clone(),
                    value: cell.to_owned(),
                });
            }
            values[r * m + t] = v;
        }
    }
    Ok(TimeSeriesMatrix::new(values, n, m, ids)?)
}

pub fn write_series(path: &Path, ts: &TimeSeriesMatrix) -> Result<()> {
    write_bytes(path, &encode_series(ts))
}

pub fn read_series(path: &Path, subject: &str) -> Result<TimeSeriesMatrix> {
    decode_series(&read_bytes(path)?, path, subject)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AtlasEntry {
    pub roi_id: String,
    pub roi_name: String,
    pub network: Network,
}

/// ROI metadata in file order; that order defines ROI indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Atlas {
    pub entries: Vec<AtlasEntry>,
}

impl Atlas {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn roi_ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.roi_id.clone()).collect()
    }

    pub fn partition(&self) -> Result<AtlasPartition> {
        Ok(AtlasPartition::new(
            self.roi_ids(),
            self.entries.iter().map(|e| e.network).collect(),
        )?)
    }
}

pub fn encode_atlas(atlas: &Atlas) -> Vec<u8> {
    let mut w = csv_writer();
    w.write_record(ATLAS_HEADER).expect("in-memory write");
    for e in &atlas.entries {
        w.write_record([e.roi_id.as_str(), e.roi_name.as_str(), e.network.label()])
            .expect("in-memory write");
    }
    finish(w)
}

pub fn decode_atlas(bytes: &[u8], path: &Path) -> Result<Atlas> {
    let records = csv_records(bytes, path)?;
    let Some(((_, header), rows)) = records.split_first() else {
        return Err(Error::parse(path, 1, "empty atlas file"));
    };
    if header.iter().map(str::trim).ne(ATLAS_HEADER) {
        return Err(Error::parse(path, 1, format!("header must be {}", ATLAS_HEADER.join(","))));
    }
    let mut entries: Vec<AtlasEntry> = Vec::with_capacity(rows.len());
    for (line, rec) in rows {
        if rec.len() != 3 {
            return Err(Error::parse(path, *line, format!("{} fields, expected 3", rec.len())));
        }
        let label = rec[2].trim();
        let network = label.parse::<Network>().map_err(|_| Error::BadNetwork {
            path: path.to_path_buf(),
            line: *line,
            label: label.to_owned(),
            accepted: Network::CANONICAL_ORDER.map(Network::label).join("|"),
        })?;
        let roi_id = rec[0].trim().to_owned();
        if roi_id.is_empty() {
            return Err(Error::parse(path, *line, "empty roi_id"));
        }
        if entries.iter().any(|e| e.roi_id == roi_id) {
            return Err(Error::parse(path, *line, format!("duplicate roi_id {roi_id:?}")));
        }
        entries.push(AtlasEntry {
            roi_id,
            roi_name: rec[1].trim().to_owned(),
            network,
        });
    }
    if entries.is_empty() {
        return Err(Error::parse(path, 2, "atlas lists no ROIs"));
    }
    Ok(Atlas { entries })
}

pub fn write_atlas(path: &Path, atlas: &Atlas) -> Result<()> {
    write_bytes(path, &encode_atlas(atlas))
}

pub fn read_atlas(path: &Path) -> Result<Atlas> {
    decode_atlas(&read_bytes(path)?, path)
}

/// Header `roi_id,<ids>`; row `i` lists `g[i][j]`, so a 1 in row `i`,
/// column `j` means ROI `i` Granger-causes ROI `j`.
pub fn encode_connectivity(g: &EffectiveConnectivity, roi_ids: &[String]) -> Vec<u8> {
    let n = g.n();
    let mut w = csv_writer();
    w.write_record(std::iter::once("roi_id").chain(roi_ids.iter().map(String::as_str)))
        .expect("in-memory write");
    for i in 0..n {
        let row = std::iter::once(roi_ids[i].clone()).chain((0..n).map(|j| g.get(i, j).to_string()));
        w.write_record(row).expect("in-memory write");
    }
    finish(w)
}

/// Returns the matrix and the ROI ids from its header.
pub fn decode_connectivity(bytes: &[u8], path: &Path, alpha: f64, lag: usize) -> Result<(EffectiveConnectivity, Vec<String>)> {
    let records = csv_records(bytes, path)?;
    let Some(((_, header), rows)) = records.split_first() else {
        return Err(Error::parse(path, 1, "empty connectivity file"));
    };
    if header.get(0) != Some("roi_id") {
        return Err(Error::parse(path, 1, "header must start with column `roi_id`"));
    }
    let ids: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let n = ids.len();
    if rows.len() != n {
        return Err(Error::parse(path, 1, format!("{} rows for {n} columns", rows.len())));
    }
    let mut g = vec![0u8; n * n];
    for (i, (line, rec)) in rows.iter().enumerate() {
        if rec.len() != n + 1 || rec[0] != ids[i] {
            return Err(Error::parse(path, *line, format!("row must start with {:?} and hold {n} entries", ids[i])));
        }
        for (j, cell) in rec.iter().skip(1).enumerate() {
            g[i * n + j] = match cell.trim() {
                "0" => 0,
                "1" => 1,
                other => return Err(Error::parse(path, *line, format!("entry {other:?} is not 0 or 1"))),
            };
        }
    }
    let ec = EffectiveConnectivity::from_matrix(n, g, alpha, lag).map_err(|e| Error::parse(path, 2, e.to_string()))?;
    Ok((ec, ids))
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(value).expect("serialisable value");
    s.push(b'\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_bytes(path, &to_json_bytes(value))
}

/// JSON input data; syntax or schema problems are data errors.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::parse(path, e.line() as u64, e.to_string()))
}

/// JSON the user wrote by hand; problems are configuration errors.
pub fn read_config_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::ConfigFile {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

/// Summary written next to per-subject connectivity matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectivityIndex {
    pub lag: usize,
    pub alpha: f64,
    pub roi_ids: Vec<String>,
    pub subjects: Vec<ConnectivityEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectivityEntry {
    pub id: String,
    pub label: u8,
    pub file: String,
    pub edges: usize,
    pub singular_pairs: usize,
}

pub const CONNECTIVITY_INDEX: &str = "index.json";

/// Quotes a CSV field when it needs it.
pub fn csv_field(s: &str) -> std::borrow::Cow<'_, str> {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\"")).into()
    } else {
        s.into()
    }
}
