mod common;

use std::collections::HashSet;

use common::bundled_spec;
use starformer::config::{OrderingMode, Profile, RunConfig};
use starformer::dataset::{load_dataset, Dataset};
use starformer::formats::read_json;
use starformer::pipeline::{cross_validate, OrderingPlan};
use starformer::synthetic::generate_synthetic;

fn bundled(dir: &std::path::Path) -> Dataset {
    generate_synthetic(&read_json(&bundled_spec()).unwrap(), &dir.join("data")).unwrap();
    load_dataset(&dir.join("data/manifest.json")).unwrap()
}

#[test]
fn first_fold_learns_with_smoothly_falling_loss() {
    let dir = tempfile::tempdir().unwrap();
    let ds = bundled(dir.path());
    let cfg = RunConfig::profile(Profile::Synthetic);
    let plan = OrderingPlan::PerFold {
        mode: OrderingMode::Ec,
        graphs: None,
    };
    let cv = cross_validate(&ds, &cfg, &plan, Some(1)).unwrap();
    let fold = &cv.folds[0];
    assert!((fold.first_batch_loss - 2f64.ln()).abs() < 0.1, "{}", fold.first_batch_loss);

    // Five-epoch trailing mean never rises by more than 5%.
    let loss: Vec<f64> = fold.curve.iter().map(|r| r.train_loss).collect();
    let trailing = |e: usize| loss[e - 4..=e].iter().sum::<f64>() / 5.0;
    for e in 5..loss.len() {
        assert!(trailing(e) <= 1.05 * trailing(e - 1), "epoch {e}: {loss:?}");
    }
    assert!(loss.last().unwrap() < &loss[0]);
    assert!(fold.metrics.acc >= 0.9, "{:?}", fold.metrics);

    // The ordering is built from training patients only.
    let split = &cv.plan.folds[0];
    let train: HashSet<&str> = split.train.iter().map(|&i| ds.subjects[i].id.as_str()).collect();
    let patients = split.train.iter().filter(|&&i| ds.subjects[i].label == 1).count();
    assert!(!fold.centrality_subjects.is_empty() && fold.centrality_subjects.len() <= patients.div_ceil(10));
    for id in &fold.centrality_subjects {
        assert!(train.contains(id.as_str()));
        assert_eq!(ds.subjects.iter().find(|s| &s.id == id).unwrap().label, 1);
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let ds = bundled(dir.path());
    let mut cfg = RunConfig::profile(Profile::Synthetic);
    cfg.train.epochs = 2;
    cfg.seed = 9;
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let plan = OrderingPlan::PerFold {
            mode: OrderingMode::Random,
            graphs: None,
        };
        let cv = pool.install(|| cross_validate(&ds, &cfg, &plan, Some(3))).unwrap();
        cv.folds
            .iter()
            .flat_map(|f| f.test_scores.iter().map(|s| s.to_bits()).chain(f.ordering.perm().iter().map(|&i| i as u64)))
            .collect::<Vec<u64>>()
    };
    assert_eq!(run(1), run(3));
}
