//! Two-class synthetic cohorts drawn from stationary VAR(1) processes.
//!
//! Both classes share a coefficient matrix with `ar_coefficient` on the
//! diagonal and `coupling` on every base edge; class 1 additionally carries
//! the class-difference edges. `x[t] = A x[t-1] + noise`, started from zero
//! with the first `burn_in` steps discarded.

use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use starformer_core::centrality::Network;
use starformer_core::TimeSeriesMatrix;

use crate::dataset::{DatasetManifest, SubjectEntry};
use crate::error::{Error, Result};
use crate::formats::{self, prepare_output_dir, Atlas, AtlasEntry};

pub const DEFAULT_BURN_IN: usize = 200;

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n: usize,
    pub m: usize,
    pub subjects_per_class: usize,
    pub ar_coefficient: f64,
    /// Coefficient on every base and class-difference edge.
    pub coupling: f64,
    /// Directed `[source, target]` pairs present in both classes.
    #[serde(default)]
    pub base_edges: Vec<[usize; 2]>,
    /// Directed `[source, target]` pairs present only in class 1.
    pub class_edges: Vec<[usize; 2]>,
    pub noise_sigma: f64,
    pub seed: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    /// Network label per ROI; by default ROIs are split into seven
    /// contiguous blocks in canonical network order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub networks: Option<Vec<String>>,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |detail: String| Err(Error::Core(starformer_core::Error::Config(detail)));
        if self.n == 0 || self.m == 0 || self.subjects_per_class == 0 {
            return bad("n, m and subjects_per_class must be positive".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma {} must be finite and non-negative", self.noise_sigma));
        }
        if !self.ar_coefficient.is_finite() || !self.coupling.is_finite() {
            return bad("coefficients must be finite".into());
        }
        for (what, edges) in [("base", &self.base_edges), ("class", &self.class_edges)] {
            for (k, &[s, t]) in edges.iter().enumerate() {
                if s >= self.n || t >= self.n || s == t {
                    return bad(format!("{what} edge {k} [{s}, {t}] is not an off-diagonal pair of {} ROIs", self.n));
                }
                if edges[..k].contains(&[s, t]) {
                    return bad(format!("{what} edge [{s}, {t}] is listed twice"));
                }
            }
        }
        if let Some(labels) = &self.networks {
            if labels.len() != self.n {
                return bad(format!("{} network labels for {} ROIs", labels.len(), self.n));
            }
        }
        self.networks()?;
        for class in 0..2 {
            let rho = spectral_radius(&self.coefficients(class), self.n);
            if !(rho < 1.0) {
                return bad(format!("class {class} coefficient matrix has spectral radius {rho:.6} >= 1"));
            }
        }
        Ok(())
    }

    /// Row-major `A` with `A[target][source]` set for each edge.
    pub fn coefficients(&self, class: usize) -> Vec<f64> {
        let n = self.n;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = self.ar_coefficient;
        }
        let class_edges: &[[usize; 2]] = if class == 1 { &self.class_edges } else { &[] };
        for &[s, t] in self.base_edges.iter().chain(class_edges) {
            a[t * n + s] += self.coupling;
        }
        a
    }

    pub fn networks(&self) -> Result<Vec<Network>> {
        match &self.networks {
            Some(labels) => labels
                .iter()
                .map(|l| l.parse::<Network>().map_err(Error::Core))
                .collect(),
            None => Ok((0..self.n)
                .map(|i| Network::CANONICAL_ORDER[i * Network::CANONICAL_ORDER.len() / self.n])
                .collect()),
        }
    }

    pub fn roi_ids(&self) -> Vec<String> {
        (0..self.n).map(|i| format!("roi{:03}", i + 1)).collect()
    }

    pub fn subject_count(&self) -> usize {
        2 * self.subjects_per_class
    }

    /// Subjects alternate between classes: even indices are controls.
    pub fn label_of(&self, subject: usize) -> usize {
        subject % 2
    }

    pub fn subject_id(&self, subject: usize) -> String {
        format!("sub-{:04}", subject + 1)
    }
}

pub fn spectral_radius(a: &[f64], n: usize) -> f64 {
    DMatrix::from_row_slice(n, n, a)
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Simulates subject `subject` on its own ChaCha stream of the spec seed.
pub fn simulate_subject(spec: &SyntheticSpec, subject: usize) -> Result<TimeSeriesMatrix> {
    let n = spec.n;
    let a = spec.coefficients(spec.label_of(subject));
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(subject as u64);
    let mut x = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut values = vec![0.0; n * spec.m];
    for step in 0..spec.burn_in + spec.m {
        for (i, v) in next.iter_mut().enumerate() {
            let eps: f64 = StandardNormal.sample(&mut rng);
            *v = a[i * n..(i + 1) * n].iter().zip(&x).map(|(c, xj)| c * xj).sum::<f64>() + spec.noise_sigma * eps;
        }
        std::mem::swap(&mut x, &mut next);
        if let Some(t) = step.checked_sub(spec.burn_in) {
            for i in 0..n {
                values[i * spec.m + t] = x[i];
            }
        }
    }
    Ok(TimeSeriesMatrix::new(values, n, spec.m, spec.roi_ids())?)
}

pub fn synthetic_atlas(spec: &SyntheticSpec) -> Result<Atlas> {
    let networks = spec.networks()?;
    let mut counts = [0usize; 7];
    let entries = spec
        .roi_ids()
        .into_iter()
        .zip(networks)
        .map(|(roi_id, network)| {
            counts[network.rank()] += 1;
            AtlasEntry {
                roi_id,
                roi_name: format!("{}_{}", network.label(), counts[network.rank()]),
                network,
            }
        })
        .collect();
    Ok(Atlas { entries })
}

/// Writes `manifest.json`, `atlas.csv`, `spec.json` and one series file per
/// subject under `subjects/`.
pub fn generate_synthetic(spec: &SyntheticSpec, out: &Path) -> Result<DatasetManifest> {
    spec.validate()?;
    prepare_output_dir(out)?;
    formats::write_atlas(&out.join("atlas.csv"), &synthetic_atlas(spec)?)?;
    formats::write_json(&out.join("spec.json"), spec)?;
    let mut subjects = Vec::with_capacity(spec.subject_count());
    for s in 0..spec.subject_count() {
        let id = spec.subject_id(s);
        let rel = format!("subjects/{id}.csv");
        formats::write_series(&out.join(&rel), &simulate_subject(spec, s)?)?;
        subjects.push(SubjectEntry {
            id,
            label: spec.label_of(s) as i64,
            timeseries_path: rel,
        });
    }
    let manifest = DatasetManifest {
        profile: "synthetic".into(),
        n: spec.n,
        atlas_path: "atlas.csv".into(),
        seed: Some(spec.seed),
        subjects,
    };
    formats::write_json(&out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}
