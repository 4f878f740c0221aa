mod nn_support;

use nn_support::*;
use starformer_core::block::{
    attention_sublayer, transformer_block, BlockContext, BlockParams, InitScheme, ParamRegistry,
};
use starformer_core::kernel::{Tape, Tensor};
use starformer_core::temporal::{
    audit_complexity, concat_windows, partition_windows, run_merge_segment, BranchOptions, ExtendedWindowSet,
    Extension, TemporalParams, WindowSchedule,
};
use starformer_core::ErrorKind;

fn block_params(d: usize, ff: usize, seed: u64) -> (BlockParams, Vec<Tensor>) {
    let mut reg = ParamRegistry::new();
    let p = BlockParams::register(&mut reg, "b", d, ff);
    let params = reg.initialize(InitScheme::Dense, &mut rng(seed));
    (p, params)
}

fn weights<'a>(p: &BlockParams, params: &'a [Tensor]) -> AttnWeights<'a> {
    AttnWeights {
        wq: &params[p.q_weight],
        bq: &params[p.q_bias],
        wk: &params[p.k_weight],
        bk: &params[p.k_bias],
        wv: &params[p.v_weight],
        bv: &params[p.v_bias],
        wo: &params[p.out_weight],
        bo: &params[p.out_bias],
    }
}

fn ctx<'a>(heads: usize, windows: Option<&'a ExtendedWindowSet>) -> BlockContext<'a> {
    BlockContext {
        heads,
        dropout: 0.0,
        windows: windows.map(|w| &w.keys),
        bias: None,
        pad_fill: None,
    }
}

#[test]
fn partition_default_crop_into_sixteen_windows() {
    let seq = random_tensor(128, 4, &mut rng(1));
    let windows = partition_windows(&seq, 16).unwrap();
    assert_eq!(windows.len(), 16);
    assert!(windows.iter().all(|w| w.shape() == [8, 4]));
    assert_eq!(concat_windows(&windows).unwrap(), seq);

    let one = partition_windows(&seq, 1).unwrap();
    assert_eq!(one, vec![seq.clone()]);
    assert_eq!(partition_windows(&seq, 3).unwrap_err().kind(), ErrorKind::Config);
}

#[test]
fn extended_windows_slice_and_pad() {
    let m = 32;
    let seq = Tensor::new(vec![m, 1], (0..m).map(|t| t as f64 + 1.0).collect()).unwrap();
    let set = ExtendedWindowSet::new(m, 4, Extension::Half).unwrap();
    let (w, k) = (set.window_len(), set.extended_len());
    assert_eq!((w, k), (8, 16));
    let ext = set.materialize(&seq).unwrap();
    let mask = set.mask();

    // Interior window 2 covers [16 - 4, 16 + 12).
    let interior: Vec<f64> = ext.data()[2 * k..3 * k].to_vec();
    assert_eq!(interior, (12..28).map(|t| t as f64 + 1.0).collect::<Vec<_>>());
    assert!(mask[2 * k..3 * k].iter().all(|&v| v));

    // First window: leading w/2 are padding with zero values.
    assert!(mask[..4].iter().all(|&v| !v));
    assert!(ext.data()[..4].iter().all(|&v| v == 0.0));
    assert!(mask[4..k].iter().all(|&v| v));
    // Last window: trailing w/2 padded.
    assert!(mask[4 * k - 4..].iter().all(|&v| !v));
}

#[test]
fn extension_must_divide_window() {
    assert_eq!(ExtendedWindowSet::new(12, 4, Extension::Half).unwrap_err().kind(), ErrorKind::Config);
    assert!(ExtendedWindowSet::new(16, 4, Extension::Quarter).is_ok());
    assert_eq!(ExtendedWindowSet::new(16, 4, Extension::Full).unwrap().extended_len(), 12);
    assert_eq!("w/4".parse::<Extension>().unwrap(), Extension::Quarter);
    assert!("w/3".parse::<Extension>().is_err());
}

#[test]
fn schedules_are_validated() {
    let ok = WindowSchedule::new(vec![16, 8, 4, 4, 8, 16], 128).unwrap();
    assert_eq!(ok.layers(), 6);
    assert_eq!(ok.window_len(0), 8);
    assert_eq!(ok.skip_source(3), Some(2));
    assert_eq!(ok.skip_source(5), Some(0));
    assert_eq!(ok.skip_source(2), None);
    for bad in [
        vec![16, 8, 4, 8, 16, 4],
        vec![16, 8, 4, 8, 16],
        vec![],
        vec![16, 4, 4, 16],
        vec![16, 8, 0, 0, 8, 16],
    ] {
        assert_eq!(WindowSchedule::new(bad.clone(), 128).unwrap_err().kind(), ErrorKind::Config, "{bad:?}");
    }
    assert!(WindowSchedule::new(vec![16, 8, 4, 4, 8, 16], 100).is_err());
}

#[test]
fn identical_keys_give_value_mean() {
    let (p, mut params) = block_params(8, 16, 2);
    params[p.k_weight] = Tensor::zeros(&[8, 8]);
    let mut r = rng(3);
    let x = random_tensor(6, 8, &mut r);
    let mut tape = Tape::new(&params);
    let h = tape.leaf(x.clone(), false).unwrap();
    let (out, _) = attention_sublayer(&mut tape, &p, h, h, &ctx(2, None)).unwrap();

    let v = affine(&rows_of(&x), &params[p.v_weight], &params[p.v_bias]);
    let mean: Vec<f64> = (0..8).map(|c| v.iter().map(|r| r[c]).sum::<f64>() / 6.0).collect();
    let expected = affine(&[mean], &params[p.out_weight], &params[p.out_bias]);
    for r in 0..6 {
        for c in 0..8 {
            assert!((tape.value(out).at(r, c) - expected[0][c]).abs() < 1e-12);
        }
    }
}

#[test]
fn single_window_equals_full_attention() {
    for seed in 0..5 {
        let (p, params) = block_params(8, 16, seed);
        let mut r = rng(100 + seed);
        let x = random_tensor(12, 8, &mut r);
        let set = ExtendedWindowSet::new(12, 1, Extension::Half).unwrap();
        let mut tape = Tape::new(&params);
        let h = tape.leaf(x.clone(), false).unwrap();
        let (out, _) = attention_sublayer(&mut tape, &p, h, h, &ctx(2, Some(&set))).unwrap();
        let oracle = naive_attention(&rows_of(&x), &rows_of(&x), &weights(&p, &params), 2);
        assert!(max_abs_diff(&rows_of(tape.value(out)), &oracle) <= 1e-12);
    }
}

#[test]
fn masked_key_matches_deleted_column() {
    let (p, params) = block_params(8, 16, 9);
    let mut r = rng(10);
    let x = random_tensor(4, 8, &mut r);
    let keys = random_tensor(6, 8, &mut r);
    let mut tape = Tape::new(&params);
    let hq = tape.leaf(x.clone(), false).unwrap();
    let hk = tape.leaf(keys.clone(), false).unwrap();
    let kw = starformer_core::block::KeyWindows {
        windows: 1,
        query_len: 4,
        key_len: 6,
        index: vec![Some(0), Some(1), None, Some(3), Some(4), Some(5)],
    };
    let c = BlockContext {
        heads: 2,
        dropout: 0.0,
        windows: Some(&kw),
        bias: None,
        pad_fill: None,
    };
    let (out, _) = attention_sublayer(&mut tape, &p, hq, hk, &c).unwrap();
    let mut kept = rows_of(&keys);
    kept.remove(2);
    let oracle = naive_attention(&rows_of(&x), &kept, &weights(&p, &params), 2);
    assert!(max_abs_diff(&rows_of(tape.value(out)), &oracle) <= 1e-12);
}

#[test]
fn zero_output_layers_make_block_identity() {
    let (p, mut params) = block_params(8, 16, 4);
    params[p.out_weight] = Tensor::zeros(&[8, 8]);
    params[p.out_bias] = Tensor::zeros(&[8]);
    params[p.ff_out_weight] = Tensor::zeros(&[16, 8]);
    params[p.ff_out_bias] = Tensor::zeros(&[8]);
    let x = random_tensor(16, 8, &mut rng(5));
    let set = ExtendedWindowSet::new(16, 4, Extension::Half).unwrap();
    let mut tape = Tape::new(&params);
    let xn = tape.leaf(x.clone(), false).unwrap();
    let out = transformer_block(&mut tape, &p, xn, &ctx(2, Some(&set)), &mut rng(0)).unwrap();
    assert_eq!(tape.value(out.out), &x);
}

#[test]
fn block_input_gradient_matches_finite_differences() {
    let (p, params) = block_params(8, 16, 6);
    let x = random_tensor(16, 8, &mut rng(7));
    let set = ExtendedWindowSet::new(16, 2, Extension::Half).unwrap();
    let weights_out = random_tensor(16, 8, &mut rng(8));
    let objective = |input: &Tensor, grad: bool| {
        let mut tape = Tape::new(&params);
        let xn = tape.leaf(input.clone(), grad).unwrap();
        let out = transformer_block(&mut tape, &p, xn, &ctx(2, Some(&set)), &mut rng(0)).unwrap();
        let w = tape.leaf(weights_out.clone(), false).unwrap();
        let prod = tape.mul(out.out, w).unwrap();
        let loss = tape.sum(prod).unwrap();
        let value = tape.value(loss).data()[0];
        let g = grad.then(|| tape.backward(loss).unwrap().wrt(xn).unwrap().to_vec());
        (value, g)
    };
    let (_, g) = objective(&x, true);
    let g = g.unwrap();
    let eps = 1e-6;
    for i in 0..x.numel() {
        let mut plus = x.clone();
        plus.data_mut()[i] += eps;
        let mut minus = x.clone();
        minus.data_mut()[i] -= eps;
        let numeric = (objective(&plus, false).0 - objective(&minus, false).0) / (2.0 * eps);
        assert!(rel_err(g[i], numeric) <= 1e-4, "entry {i}: {} vs {numeric}", g[i]);
    }
}

#[test]
fn single_layer_is_window_local() {
    let (p, params) = block_params(8, 16, 11);
    let m = 32;
    let set = ExtendedWindowSet::new(m, 4, Extension::Half).unwrap();
    let run = |x: &Tensor| {
        let mut tape = Tape::new(&params);
        let xn = tape.leaf(x.clone(), false).unwrap();
        let out = transformer_block(&mut tape, &p, xn, &ctx(2, Some(&set)), &mut rng(0)).unwrap();
        tape.value(out.out).clone()
    };
    let x = random_tensor(m, 8, &mut rng(12));
    let base = run(&x);
    let (w, e) = (set.window_len(), set.extension);
    for t in [0, 5, 13, 31] {
        let mut y = x.clone();
        for c in 0..8 {
            y.data_mut()[t * 8 + c] += 0.1 * (c as f64 + 1.0);
        }
        let out = run(&y);
        for q in 0..m {
            let win = q / w;
            let lo = (win * w) as isize - e as isize;
            let hi = ((win + 1) * w + e) as isize;
            let covered = (t as isize) >= lo && (t as isize) < hi;
            let changed = base.row(q) != out.row(q);
            assert_eq!(changed, covered, "t {t}, q {q}");
        }
    }
}

fn temporal_params(m: usize, d: usize, heads: usize, schedule: &[usize], scheme: InitScheme) -> (TemporalParams, Vec<Tensor>) {
    let schedule = WindowSchedule::new(schedule.to_vec(), m).unwrap();
    let mut reg = ParamRegistry::new();
    let tp = TemporalParams::register(&mut reg, 4, d, heads, 2 * d, &schedule, Extension::Half).unwrap();
    let params = reg.initialize(scheme, &mut rng(21));
    (tp, params)
}

#[test]
fn default_schedule_walks_window_counts_and_keeps_length() {
    let (tp, params) = temporal_params(128, 8, 2, &[16, 8, 4, 4, 8, 16], InitScheme::Dense);
    let x = random_tensor(128, 8, &mut rng(22));
    let mut tape = Tape::new(&params);
    let xn = tape.leaf(x, false).unwrap();
    let opts = BranchOptions { heads: 2, dropout: 0.0, pad_fill: None };
    let out = run_merge_segment(&mut tape, &tp, xn, &opts, &mut rng(0)).unwrap();
    assert_eq!(out.window_counts, vec![16, 8, 4, 4, 8, 16]);
    assert_eq!(tape.value(out.out).shape(), [128, 8]);
    for (l, &a) in out.attention.iter().enumerate() {
        let (_, layout) = tape.attention_probs(a).unwrap();
        assert_eq!(layout.windows, tp.schedule().windows(l));
    }
}

#[test]
fn identity_blocks_accumulate_skip_paths() {
    let schedule = [16, 8, 4, 4, 8, 16];
    let (tp, params) = temporal_params(128, 8, 2, &schedule, InitScheme::Standard);
    let x = random_tensor(128, 8, &mut rng(23));
    let mut tape = Tape::new(&params);
    let xn = tape.leaf(x.clone(), false).unwrap();
    let opts = BranchOptions { heads: 2, dropout: 0.0, pad_fill: None };
    let out = run_merge_segment(&mut tape, &tp, xn, &opts, &mut rng(0)).unwrap();

    // Symbolic trace with 1-based layers: S^l = S^{l-1} (identity block),
    // plus S^{L+1-l} when l > L/2. Coefficients are multiples of x.
    let big_l = schedule.len();
    let mut coef = vec![0.0; big_l + 1];
    coef[0] = 1.0;
    for l in 1..=big_l {
        coef[l] = coef[l - 1];
        if l > big_l / 2 {
            coef[l] += coef[big_l + 1 - l];
        }
    }
    assert_eq!(coef[big_l], 4.0);
    for (l, node) in out.layer_outputs.iter().enumerate() {
        let expect: Vec<f64> = x.data().iter().map(|v| v * coef[l + 1]).collect();
        assert_eq!(tape.value(*node).data(), expect.as_slice(), "layer {}", l + 1);
    }
}

#[test]
fn skip_layers_add_recorded_merge_outputs_exactly() {
    let (tp, params) = temporal_params(32, 8, 2, &[4, 2, 2, 4], InitScheme::Dense);
    let x = random_tensor(32, 8, &mut rng(24));
    let mut tape = Tape::new(&params);
    let xn = tape.leaf(x, false).unwrap();
    let opts = BranchOptions { heads: 2, dropout: 0.0, pad_fill: None };
    let out = run_merge_segment(&mut tape, &tp, xn, &opts, &mut rng(0)).unwrap();
    for l in 2..4 {
        let input = tape.value(out.layer_outputs[l - 1]).clone();
        let skip = tape.value(out.layer_outputs[3 - l]).clone();
        let mut fresh = Tape::new(&params);
        let inode = fresh.leaf(input, false).unwrap();
        let bias = fresh.param(tp.layers[l].bias);
        let c = BlockContext {
            heads: 2,
            dropout: 0.0,
            windows: Some(&tp.window_set(l).keys),
            bias: Some(bias),
            pad_fill: None,
        };
        let f = transformer_block(&mut fresh, &tp.layers[l].block, inode, &c, &mut rng(0)).unwrap();
        let expect: Vec<f64> = fresh.value(f.out).data().iter().zip(skip.data()).map(|(a, b)| a + b).collect();
        assert_eq!(tape.value(out.layer_outputs[l]).data(), expect.as_slice());
    }
}

#[test]
fn padded_values_never_reach_outputs() {
    let (tp, params) = temporal_params(32, 8, 2, &[4, 2, 2, 4], InitScheme::Dense);
    let x = random_tensor(32, 8, &mut rng(25));
    let run = |fill: Option<&Tensor>| {
        let mut tape = Tape::new(&params);
        let xn = tape.leaf(x.clone(), false).unwrap();
        let opts = BranchOptions { heads: 2, dropout: 0.0, pad_fill: fill };
        let out = run_merge_segment(&mut tape, &tp, xn, &opts, &mut rng(0)).unwrap();
        tape.value(out.out).clone()
    };
    let base = run(None);
    for seed in 0..3 {
        let fill = random_tensor(32, 8, &mut rng(300 + seed));
        assert_eq!(run(Some(&fill)), base);
    }
}

#[test]
fn windowed_attention_cuts_cost_by_at_least_a_quarter_of_g() {
    for g in [4, 8, 16] {
        let schedule = WindowSchedule::new(vec![g, g], 128).unwrap();
        let audit = audit_complexity(&schedule, 128, 8, Extension::Half).unwrap();
        for layer in &audit.layers {
            assert_eq!(layer.full_macs, 2 * 128 * 128 * 128);
            assert!(layer.reduction_factor >= g as f64 / 4.0, "g {g}: {}", layer.reduction_factor);
        }
    }
    let default = WindowSchedule::new(WindowSchedule::DEFAULT.to_vec(), 128).unwrap();
    let audit = audit_complexity(&default, 128, 8, Extension::Half).unwrap();
    assert_eq!(audit.layers.len(), 6);
    assert!(audit.layers[0].reduction_factor >= 4.0);
}
