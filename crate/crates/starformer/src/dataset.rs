use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use starformer_core::centrality::AtlasPartition;
use starformer_core::TimeSeriesMatrix;

use crate::error::{Error, Result};
use crate::formats::{read_atlas, read_json, read_series, Atlas};

/// Dataset description. Paths are relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub profile: String,
    pub n: usize,
    pub atlas_path: String,
    /// Seed the data was generated from, when synthetic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub subjects: Vec<SubjectEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectEntry {
    pub id: String,
    /// 1 marks a patient.
    pub label: i64,
    pub timeseries_path: String,
}

#[derive(Clone, Debug)]
pub struct Subject {
    pub id: String,
    pub label: usize,
    pub series: TimeSeriesMatrix,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub atlas: Atlas,
    pub partition: AtlasPartition,
    pub subjects: Vec<Subject>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.manifest.n
    }

    pub fn labels(&self) -> Vec<usize> {
        self.subjects.iter().map(|s| s.label).collect()
    }
}

fn resolve(root: &Path, rel: &str) -> PathBuf {
    root.join(rel)
}

/// Reads and validates the manifest, the atlas and every subject's series.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let manifest: DatasetManifest = read_json(manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new(""));
    let atlas_path = resolve(root, &manifest.atlas_path);
    let atlas = read_atlas(&atlas_path)?;
    if atlas.len() != manifest.n {
        return Err(Error::RoiCountMismatch {
            path: atlas_path,
            subject: "atlas".into(),
            expected: manifest.n,
            found: atlas.len(),
        });
    }
    let partition = atlas.partition()?;
    let roi_ids = atlas.roi_ids();

    let mut seen = BTreeSet::new();
    let mut subjects = Vec::with_capacity(manifest.subjects.len());
    for entry in &manifest.subjects {
        if !seen.insert(entry.id.as_str()) {
            return Err(Error::parse(manifest_path, 0, format!("duplicate subject id {:?}", entry.id)));
        }
        let label = match entry.label {
            0 => 0,
            1 => 1,
            other => {
                return Err(Error::BadLabel {
                    path: manifest_path.to_path_buf(),
                    subject: entry.id.clone(),
                    label: other,
                })
            }
        };
        let path = resolve(root, &entry.timeseries_path);
        let series = read_series(&path, &entry.id)?;
        if series.n() != manifest.n {
            return Err(Error::RoiCountMismatch {
                path,
                subject: entry.id.clone(),
                expected: manifest.n,
                found: series.n(),
            });
        }
        if let Some(col) = (0..roi_ids.len()).find(|&i| series.roi_ids()[i] != roi_ids[i]) {
            return Err(Error::RoiIdMismatch {
                path,
                subject: entry.id.clone(),
                column: col + 1,
                expected: roi_ids[col].clone(),
                found: series.roi_ids()[col].clone(),
            });
        }
        subjects.push(Subject {
            id: entry.id.clone(),
            label,
            series,
        });
    }
    if subjects.is_empty() {
        return Err(Error::parse(manifest_path, 0, "manifest lists no subjects"));
    }
    Ok(Dataset {
        manifest,
        atlas,
        partition,
        subjects,
    })
}
