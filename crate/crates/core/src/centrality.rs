//! Eigenvector centrality of effective-connectivity graphs and the
//! network-grouped ROI ordering derived from it.

use core::fmt;
use core::str::FromStr;

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::connectivity::EffectiveConnectivity;
use crate::error::{Error, Result};
use crate::series::TimeSeriesMatrix;

/// Weight of the all-ones term mixed into the adjacency matrix (relative to
/// its largest entry) so the dominant eigenvector is unique and positive.
pub const TELEPORTATION: f64 = 1e-6;
pub const CONVERGENCE_TOL: f64 = 1e-12;
pub const MAX_ITERATIONS: usize = 10_000;
// Iterating on A + sI leaves the eigenvectors alone but breaks the modulus
// ties that periodic digraphs produce.
const SPECTRAL_SHIFT: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CentralityVector {
    /// Nonnegative scores summing to one.
    pub p: Vec<f64>,
    /// Dominant eigenvalue with the teleportation contribution `tau * n`
    /// subtracted.
    pub eigenvalue: f64,
    /// Dominant eigenvalue of the regularised matrix itself.
    pub raw_eigenvalue: f64,
    pub iterations: usize,
}

pub fn eigenvector_centrality(g: &EffectiveConnectivity) -> Result<CentralityVector> {
    eigenvector_centrality_weighted(&g.to_f64(), g.n())
}

/// Dominant right eigenvector of `W + tau * max(W) * J` for a nonnegative
/// `n x n` row-major matrix `W`, found by power iteration from the uniform
/// vector and L1-normalised.
pub fn eigenvector_centrality_weighted(w: &[f64], n: usize) -> Result<CentralityVector> {
    if n == 0 || w.len() != n * n {
        return Err(Error::dim("eigenvector_centrality", format!("{} entries for n = {n}", w.len())));
    }
    if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::Data("adjacency entries must be finite and nonnegative".into()));
    }
    let scale = w.iter().copied().fold(0.0, f64::max);
    let tau = TELEPORTATION * if scale > 0.0 { scale } else { 1.0 };

    let apply = |p: &[f64], out: &mut [f64]| {
        let total: f64 = p.iter().sum();
        for (i, o) in out.iter_mut().enumerate() {
            let row = &w[i * n..(i + 1) * n];
            *o = row.iter().zip(p).map(|(a, b)| a * b).sum::<f64>() + tau * total;
        }
    };

    let mut p = alloc::vec![1.0 / n as f64; n];
    let mut ap = alloc::vec![0.0; n];
    let mut next = alloc::vec![0.0; n];
    let mut delta = f64::INFINITY;
    for it in 1..=MAX_ITERATIONS {
        apply(&p, &mut ap);
        for i in 0..n {
            next[i] = ap[i] + SPECTRAL_SHIFT * p[i];
        }
        let norm: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= norm);
        delta = next.iter().zip(&p).map(|(a, b)| (a - b).abs()).sum();
        core::mem::swap(&mut p, &mut next);
        if delta <= CONVERGENCE_TOL {
            apply(&p, &mut ap);
            let raw: f64 = ap.iter().sum::<f64>() / p.iter().sum::<f64>();
            return Ok(CentralityVector {
                p,
                eigenvalue: raw - tau * n as f64,
                raw_eigenvalue: raw,
                iterations: it,
            });
        }
    }
    Err(Error::Convergence {
        iterations: MAX_ITERATIONS,
        last_delta: delta,
        last: p,
    })
}

/// Elementwise mean of per-subject vectors, renormalised to sum one.
pub fn average_centrality(per_subject: &[CentralityVector]) -> Result<CentralityVector> {
    let first = per_subject
        .first()
        .ok_or_else(|| Error::Contract("cannot average an empty list of centrality vectors".into()))?;
    let n = first.p.len();
    if per_subject.iter().any(|c| c.p.len() != n) {
        return Err(Error::Contract("centrality vectors differ in length".into()));
    }
    let k = per_subject.len() as f64;
    let mut p = alloc::vec![0.0; n];
    for c in per_subject {
        for (acc, v) in p.iter_mut().zip(&c.p) {
            *acc += v;
        }
    }
    p.iter_mut().for_each(|v| *v /= k);
    let total: f64 = p.iter().sum();
    if total > 0.0 {
        p.iter_mut().for_each(|v| *v /= total);
    }
    Ok(CentralityVector {
        p,
        eigenvalue: per_subject.iter().map(|c| c.eigenvalue).sum::<f64>() / k,
        raw_eigenvalue: per_subject.iter().map(|c| c.raw_eigenvalue).sum::<f64>() / k,
        iterations: per_subject.iter().map(|c| c.iterations).max().unwrap_or(0),
    })
}

/// The seven intrinsic functional networks, in canonical concatenation order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Network {
    Visual,
    Somatomotor,
    DorsalAttention,
    VentralAttention,
    Limbic,
    Frontoparietal,
    Default,
}

impl Network {
    pub const CANONICAL_ORDER: [Network; 7] = [
        Network::Visual,
        Network::Somatomotor,
        Network::DorsalAttention,
        Network::VentralAttention,
        Network::Limbic,
        Network::Frontoparietal,
        Network::Default,
    ];

    pub fn rank(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Network::Visual => "visual",
            Network::Somatomotor => "somatomotor",
            Network::DorsalAttention => "dorsal_attention",
            Network::VentralAttention => "ventral_attention",
            Network::Limbic => "limbic",
            Network::Frontoparietal => "frontoparietal",
            Network::Default => "default",
        }
    }
}

impl fmt::Display for Network {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Network {
    type Err = Error;

    /// Accepts the snake_case labels plus common spellings ("Vis",
    /// "SomMot", "DorsAttn", "SalVentAttn", "Cont", "Default Mode", ...).
    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        Ok(match key.as_str() {
            "visual" | "vis" => Network::Visual,
            "somatomotor" | "sommot" | "sensorimotor" => Network::Somatomotor,
            "dorsalattention" | "dorsattn" | "dan" => Network::DorsalAttention,
            "ventralattention" | "salventattn" | "ventattn" | "van" | "salience" => Network::VentralAttention,
            "limbic" => Network::Limbic,
            "frontoparietal" | "cont" | "control" | "fpn" => Network::Frontoparietal,
            "default" | "defaultmode" | "dmn" => Network::Default,
            _ => return Err(Error::Atlas(format!("unknown network label {s:?}"))),
        })
    }
}

/// Assignment of every ROI to one functional network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtlasPartition {
    roi_ids: Vec<String>,
    networks: Vec<Network>,
}

impl AtlasPartition {
    pub fn new(roi_ids: Vec<String>, networks: Vec<Network>) -> Result<Self> {
        if roi_ids.len() != networks.len() || roi_ids.is_empty() {
            return Err(Error::Atlas(format!(
                "{} roi ids with {} network labels",
                roi_ids.len(),
                networks.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for id in &roi_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Atlas(format!("duplicate roi id {id:?}")));
            }
        }
        Ok(AtlasPartition { roi_ids, networks })
    }

    pub fn len(&self) -> usize {
        self.roi_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roi_ids.is_empty()
    }

    pub fn roi_ids(&self) -> &[String] {
        &self.roi_ids
    }

    pub fn network_of(&self, roi: usize) -> Network {
        self.networks[roi]
    }

    pub fn networks(&self) -> &[Network] {
        &self.networks
    }

    /// Networks with at least one ROI, in canonical order.
    pub fn used_networks(&self) -> Vec<Network> {
        let used: BTreeSet<Network> = self.networks.iter().copied().collect();
        used.into_iter().collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    EcSorted,
    Random,
    Identity,
}

/// A permutation of ROI indices: position `i` of the reordered data holds
/// original ROI `perm[i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoiOrdering {
    perm: Vec<usize>,
    pub provenance: Provenance,
}

impl RoiOrdering {
    pub fn new(perm: Vec<usize>, provenance: Provenance) -> Result<Self> {
        let n = perm.len();
        let mut seen = alloc::vec![false; n];
        for &p in &perm {
            if p >= n || core::mem::replace(&mut seen[p], true) {
                return Err(Error::Contract(format!("{perm:?} is not a permutation")));
            }
        }
        Ok(RoiOrdering { perm, provenance })
    }

    pub fn identity(n: usize) -> Self {
        RoiOrdering {
            perm: (0..n).collect(),
            provenance: Provenance::Identity,
        }
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        RoiOrdering {
            perm,
            provenance: Provenance::Random,
        }
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn inverse(&self) -> RoiOrdering {
        let mut inv = alloc::vec![0; self.perm.len()];
        for (i, &p) in self.perm.iter().enumerate() {
            inv[p] = i;
        }
        RoiOrdering {
            perm: inv,
            provenance: self.provenance,
        }
    }
}

/// Groups ROIs by network in canonical order and sorts each group by
/// descending score, ties broken by ascending atlas index.
pub fn reorder_within_networks(pbar: &CentralityVector, atlas: &AtlasPartition) -> Result<RoiOrdering> {
    if pbar.p.len() != atlas.len() {
        return Err(Error::Contract(format!(
            "{} centrality scores for an atlas of {} ROIs",
            pbar.p.len(),
            atlas.len()
        )));
    }
    let mut perm: Vec<usize> = (0..atlas.len()).collect();
    perm.sort_by(|&a, &b| {
        atlas
            .network_of(a)
            .rank()
            .cmp(&atlas.network_of(b).rank())
            .then_with(|| pbar.p[b].total_cmp(&pbar.p[a]))
            .then_with(|| a.cmp(&b))
    });
    Ok(RoiOrdering {
        perm,
        provenance: Provenance::EcSorted,
    })
}

/// Row `i` of the output is row `perm[i]` of the input.
pub fn apply_ordering(ts: &TimeSeriesMatrix, ord: &RoiOrdering) -> Result<TimeSeriesMatrix> {
    ts.permute_rows(ord.perm())
}

/// Simple random sample of `ceil(fraction * len)` items (at least one).
pub fn sample_fraction<R: Rng + ?Sized>(items: &[usize], fraction: f64, rng: &mut R) -> Result<Vec<usize>> {
    if items.is_empty() {
        return Err(Error::Contract("nothing to sample from".into()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("sample fraction {fraction} outside (0, 1]")));
    }
    let k = (crate::math::ceil(fraction * items.len() as f64 - 1e-9) as usize).clamp(1, items.len());
    let mut picked: Vec<usize> = items.choose_multiple(rng, k).copied().collect();
    picked.sort_unstable();
    Ok(picked)
}

/// Per-subject centrality from the given graphs, averaged and turned into a
/// network-grouped ordering. Subjects whose power iteration hits the
/// iteration cap contribute their last iterate; the count is returned.
pub fn ec_ordering(graphs: &[&EffectiveConnectivity], atlas: &AtlasPartition) -> Result<(RoiOrdering, CentralityVector, usize)> {
    let mut vectors = Vec::with_capacity(graphs.len());
    let mut unconverged = 0;
    for g in graphs {
        match eigenvector_centrality(g) {
            Ok(c) => vectors.push(c),
            Err(Error::Convergence { last, .. }) => {
                unconverged += 1;
                vectors.push(CentralityVector {
                    p: last,
                    eigenvalue: f64::NAN,
                    raw_eigenvalue: f64::NAN,
                    iterations: MAX_ITERATIONS,
                });
            }
            Err(e) => return Err(e),
        }
    }
    let pbar = average_centrality(&vectors)?;
    let ord = reorder_within_networks(&pbar, atlas)?;
    Ok((ord, pbar, unconverged))
}
