#![allow(dead_code)]

use std::path::{Path, PathBuf};

use starformer::synthetic::{generate_synthetic, SyntheticSpec};

pub fn small_spec(n: usize, m: usize, per_class: usize, seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        n,
        m,
        subjects_per_class: per_class,
        ar_coefficient: 0.3,
        coupling: 0.9,
        base_edges: vec![[0, 1]],
        class_edges: vec![[2, 3], [4, 5]],
        noise_sigma: 1.0,
        seed,
        burn_in: 50,
        networks: None,
    }
}

/// Generates a small cohort under `dir/data` and returns the manifest path.
pub fn small_cohort(dir: &Path) -> PathBuf {
    let data = dir.join("data");
    generate_synthetic(&small_spec(8, 128, 6, 3), &data).unwrap();
    data.join("manifest.json")
}

pub fn bundled_spec() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/synthetic.json")
}
