//! Variable-window temporal branch.
//!
//! Time points are tokens. Layer `l` splits the `m` tokens into `g_l`
//! windows of `w = m / g_l`; each window's queries attend to keys drawn from
//! the window extended on both sides, with out-of-range positions masked.
//! The first half of the schedule halves the window count layer by layer
//! (adjacent windows merge), the second half mirrors it back, and each
//! second-half layer adds the output of the first-half layer with the same
//! window count.

use core::fmt;
use core::str::FromStr;

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::block::{transformer_block, BlockContext, BlockParams, Init, KeyWindows, ParamRegistry};
use crate::error::{Error, Result};
use crate::kernel::{AttentionLayout, NodeId, Tape, Tensor};

/// Window counts per layer over a sequence of fixed length.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSchedule {
    tokens_per_layer: Vec<usize>,
    seq_len: usize,
}

impl WindowSchedule {
    pub const DEFAULT: [usize; 6] = [16, 8, 4, 4, 8, 16];

    /// Accepts non-empty, even-length palindromes whose first half halves
    /// the window count at every step and whose counts all divide `seq_len`.
    pub fn new(tokens_per_layer: Vec<usize>, seq_len: usize) -> Result<Self> {
        let g = &tokens_per_layer;
        if g.is_empty() || g.len() % 2 != 0 {
            return Err(Error::Config(format!("window schedule {g:?} must have an even, nonzero number of layers")));
        }
        if g.contains(&0) {
            return Err(Error::Config(format!("window schedule {g:?} has a zero window count")));
        }
        if g.iter().ne(g.iter().rev()) {
            return Err(Error::Config(format!("window schedule {g:?} is not a palindrome")));
        }
        let half = g.len() / 2;
        for l in 1..half {
            if g[l - 1] != 2 * g[l] {
                return Err(Error::Config(format!(
                    "window schedule {g:?}: layer {} has {} windows, expected half of {}",
                    l + 1,
                    g[l],
                    g[l - 1]
                )));
            }
        }
        if let Some(&bad) = g.iter().find(|&&x| seq_len % x != 0) {
            return Err(Error::Config(format!("sequence length {seq_len} is not divisible by {bad} windows")));
        }
        Ok(WindowSchedule {
            tokens_per_layer,
            seq_len,
        })
    }

    pub fn tokens_per_layer(&self) -> &[usize] {
        &self.tokens_per_layer
    }

    pub fn layers(&self) -> usize {
        self.tokens_per_layer.len()
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn windows(&self, layer: usize) -> usize {
        self.tokens_per_layer[layer]
    }

    pub fn window_len(&self, layer: usize) -> usize {
        self.seq_len / self.tokens_per_layer[layer]
    }

    /// The earlier layer whose output is added after `layer`, if any.
    pub fn skip_source(&self, layer: usize) -> Option<usize> {
        let n = self.layers();
        (layer >= n / 2 && layer < n).then(|| n - 1 - layer)
    }
}

/// Extra context on each side of a window, as a fraction of its length.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Extension {
    #[serde(rename = "w/4")]
    Quarter,
    #[default]
    #[serde(rename = "w/2")]
    Half,
    #[serde(rename = "w")]
    Full,
}

impl Extension {
    /// Context length on each side of a window of length `w`.
    pub fn len(self, w: usize) -> Result<usize> {
        let div = match self {
            Extension::Quarter => 4,
            Extension::Half => 2,
            Extension::Full => 1,
        };
        if w % div != 0 {
            return Err(Error::Config(format!("window length {w} cannot be extended by {self}")));
        }
        Ok(w / div)
    }
}

impl fmt::Display for Extension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Extension::Quarter => "w/4",
            Extension::Half => "w/2",
            Extension::Full => "w",
        })
    }
}

impl FromStr for Extension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "w/4" => Ok(Extension::Quarter),
            "w/2" => Ok(Extension::Half),
            "w" => Ok(Extension::Full),
            other => Err(Error::Config(format!("unknown window extension {other:?}; expected w/4, w/2 or w"))),
        }
    }
}

/// Splits `seq` (`[m, d]`) into `g` consecutive windows of `m / g` rows.
pub fn partition_windows(seq: &Tensor, g: usize) -> Result<Vec<Tensor>> {
    let m = seq.rows();
    if g == 0 || m % g != 0 {
        return Err(Error::Config(format!("{m} tokens cannot be split into {g} windows")));
    }
    let (w, d) = (m / g, seq.cols());
    (0..g)
        .map(|i| Tensor::new(alloc::vec![w, d], seq.data()[i * w * d..(i + 1) * w * d].to_vec()))
        .collect()
}

/// Stacks windows back into one `[m, d]` sequence.
pub fn concat_windows(windows: &[Tensor]) -> Result<Tensor> {
    let d = windows.first().map_or(0, Tensor::cols);
    if windows.iter().any(|w| w.shape().len() != 2 || w.cols() != d) {
        return Err(Error::dim("concat_windows", "windows differ in width"));
    }
    let data: Vec<f64> = windows.iter().flat_map(|w| w.data().iter().copied()).collect();
    let rows = data.len() / d.max(1);
    Tensor::new(alloc::vec![rows, d], data)
}

/// Extended key windows for `g` windows over `m` tokens: window `i` spans
/// `[i*w - e, (i+1)*w + e)`, positions outside `[0, m)` padded and masked.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtendedWindowSet {
    pub keys: KeyWindows,
    pub extension: usize,
}

impl ExtendedWindowSet {
    pub fn new(m: usize, g: usize, extension: Extension) -> Result<Self> {
        if g == 0 || m % g != 0 {
            return Err(Error::Config(format!("{m} tokens cannot be split into {g} windows")));
        }
        let w = m / g;
        let e = extension.len(w)?;
        let key_len = w + 2 * e;
        let mut index = Vec::with_capacity(g * key_len);
        for i in 0..g {
            let start = (i * w) as isize - e as isize;
            for t in start..start + key_len as isize {
                index.push((t >= 0 && (t as usize) < m).then_some(t as usize));
            }
        }
        Ok(ExtendedWindowSet {
            keys: KeyWindows {
                windows: g,
                query_len: w,
                key_len,
                index,
            },
            extension: e,
        })
    }

    pub fn windows(&self) -> usize {
        self.keys.windows
    }

    pub fn window_len(&self) -> usize {
        self.keys.query_len
    }

    pub fn extended_len(&self) -> usize {
        self.keys.key_len
    }

    /// Source row of each extended position, window by window.
    pub fn index(&self) -> &[Option<usize>] {
        &self.keys.index
    }

    pub fn mask(&self) -> Vec<bool> {
        self.keys.mask()
    }

    /// The extended windows of `seq` as `[g * key_len, d]`, zeros at padding.
    pub fn materialize(&self, seq: &Tensor) -> Result<Tensor> {
        let d = seq.cols();
        let mut data = Vec::with_capacity(self.keys.index.len() * d);
        for ix in &self.keys.index {
            match *ix {
                Some(r) if r < seq.rows() => data.extend_from_slice(seq.row(r)),
                Some(r) => return Err(Error::dim("extended windows", format!("row {r} of {}", seq.rows()))),
                None => data.extend(core::iter::repeat(0.0).take(d)),
            }
        }
        Tensor::new(alloc::vec![self.keys.index.len(), d], data)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TemporalLayer {
    pub block: BlockParams,
    /// Positional bias table `[heads, w, key_len]`, shared by all windows.
    pub bias: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TemporalParams {
    pub embed_weight: usize,
    pub embed_bias: usize,
    pub layers: Vec<TemporalLayer>,
    window_sets: Vec<ExtendedWindowSet>,
    schedule: WindowSchedule,
}

impl TemporalParams {
    /// Registers an `n -> d` time-point embedding and one block plus bias
    /// table per scheduled layer.
    pub fn register(
        reg: &mut ParamRegistry,
        n_rois: usize,
        d: usize,
        heads: usize,
        ff_hidden: usize,
        schedule: &WindowSchedule,
        extension: Extension,
    ) -> Result<Self> {
        let embed_weight = reg.add("temporal.embed.weight", &[n_rois, d], Init::FanIn(n_rois));
        let embed_bias = reg.add("temporal.embed.bias", &[d], Init::Zeros);
        let mut layers = Vec::with_capacity(schedule.layers());
        let mut window_sets = Vec::with_capacity(schedule.layers());
        for l in 0..schedule.layers() {
            let set = ExtendedWindowSet::new(schedule.seq_len(), schedule.windows(l), extension)?;
            let block = BlockParams::register(reg, &format!("temporal.layer{l}"), d, ff_hidden);
            let bias = reg.add(
                format!("temporal.layer{l}.position_bias"),
                &[heads, set.window_len(), set.extended_len()],
                Init::Zeros,
            );
            layers.push(TemporalLayer { block, bias });
            window_sets.push(set);
        }
        Ok(TemporalParams {
            embed_weight,
            embed_bias,
            layers,
            window_sets,
            schedule: schedule.clone(),
        })
    }

    pub fn schedule(&self) -> &WindowSchedule {
        &self.schedule
    }

    pub fn window_set(&self, layer: usize) -> &ExtendedWindowSet {
        &self.window_sets[layer]
    }
}

#[derive(Clone, Debug)]
pub struct TemporalOutput {
    /// `[m, d]` after the last layer.
    pub out: NodeId,
    /// Input tokens after the embedding.
    pub embedded: NodeId,
    /// Output of every layer, skip additions included.
    pub layer_outputs: Vec<NodeId>,
    /// Attention node of every layer.
    pub attention: Vec<NodeId>,
    pub window_counts: Vec<usize>,
}

/// Runtime switches shared by both branches.
#[derive(Clone, Copy, Debug, Default)]
pub struct BranchOptions<'a> {
    pub heads: usize,
    pub dropout: f64,
    /// Values written into padded key/value rows (must have at least as
    /// many rows as the largest padding and width `d`).
    pub pad_fill: Option<&'a Tensor>,
}

/// Runs the scheduled layers over already-embedded tokens `x` (`[m, d]`).
pub fn run_merge_segment<R: Rng + ?Sized>(
    tape: &mut Tape<'_>,
    params: &TemporalParams,
    x: NodeId,
    opts: &BranchOptions<'_>,
    rng: &mut R,
) -> Result<TemporalOutput> {
    let schedule = &params.schedule;
    let m = tape.value(x).rows();
    if m != schedule.seq_len() || params.layers.len() != schedule.layers() {
        return Err(Error::Config(format!(
            "{m} tokens and {} layer parameter sets for schedule {:?} over {} tokens",
            params.layers.len(),
            schedule.tokens_per_layer(),
            schedule.seq_len()
        )));
    }
    let mut outputs: Vec<NodeId> = Vec::with_capacity(schedule.layers());
    let mut attention = Vec::with_capacity(schedule.layers());
    let mut cur = x;
    for (l, layer) in params.layers.iter().enumerate() {
        let bias = tape.param(layer.bias);
        let ctx = BlockContext {
            heads: opts.heads,
            dropout: opts.dropout,
            windows: Some(&params.window_sets[l].keys),
            bias: Some(bias),
            pad_fill: opts.pad_fill,
        };
        let block = transformer_block(tape, &layer.block, cur, &ctx, rng)?;
        let mut out = block.out;
        if let Some(src) = schedule.skip_source(l) {
            out = tape.add(out, outputs[src])?;
        }
        outputs.push(out);
        attention.push(block.attention);
        cur = out;
    }
    Ok(TemporalOutput {
        out: cur,
        embedded: x,
        layer_outputs: outputs,
        attention,
        window_counts: schedule.tokens_per_layer().to_vec(),
    })
}

/// Embeds time-major input (`[m, n]`) and runs the scheduled layers.
pub fn temporal_forward<R: Rng + ?Sized>(
    tape: &mut Tape<'_>,
    params: &TemporalParams,
    input: NodeId,
    opts: &BranchOptions<'_>,
    rng: &mut R,
) -> Result<TemporalOutput> {
    let (w, b) = (tape.param(params.embed_weight), tape.param(params.embed_bias));
    let x = tape.linear(input, w, Some(b))?;
    run_merge_segment(tape, params, x, opts, rng)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerAudit {
    pub windows: usize,
    pub window_len: usize,
    pub key_len: usize,
    pub windowed_macs: u64,
    pub full_macs: u64,
    pub reduction_factor: f64,
    /// Lower bound `g / 4` the reduction is expected to meet.
    pub expected_min: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityAudit {
    pub seq_len: usize,
    pub d_model: usize,
    pub heads: usize,
    pub extension: Extension,
    pub layers: Vec<LayerAudit>,
    pub windowed_total: u64,
    pub full_total: u64,
    pub reduction_factor: f64,
}

/// Counts attention multiply-accumulates for every scheduled layer by
/// running the windowed kernel and a single-window full attention over the
/// same `m` tokens of width `d`.
pub fn audit_complexity(schedule: &WindowSchedule, d: usize, heads: usize, extension: Extension) -> Result<ComplexityAudit> {
    let m = schedule.seq_len();
    let tokens = Tensor::new(
        alloc::vec![m, d],
        (0..m * d).map(|i| ((i * 7919) % 101) as f64 / 101.0 - 0.5).collect(),
    )?;
    let full_macs = {
        let mut tape = Tape::detached();
        let x = tape.leaf(tokens.clone(), false)?;
        tape.attention(x, x, x, None, AttentionLayout::full(m, heads))?;
        tape.attention_macs()
    };
    let mut layers = Vec::with_capacity(schedule.layers());
    for l in 0..schedule.layers() {
        let set = ExtendedWindowSet::new(m, schedule.windows(l), extension)?;
        let mut tape = Tape::detached();
        let x = tape.leaf(tokens.clone(), false)?;
        let kv = tape.gather_rows(x, set.index().to_vec(), None)?;
        tape.attention(x, kv, kv, None, set.keys.layout(heads))?;
        let windowed_macs = tape.attention_macs();
        layers.push(LayerAudit {
            windows: set.windows(),
            window_len: set.window_len(),
            key_len: set.extended_len(),
            windowed_macs,
            full_macs,
            reduction_factor: full_macs as f64 / windowed_macs as f64,
            expected_min: set.windows() as f64 / 4.0,
        });
    }
    let windowed_total: u64 = layers.iter().map(|l| l.windowed_macs).sum();
    let full_total = full_macs * layers.len() as u64;
    Ok(ComplexityAudit {
        seq_len: m,
        d_model: d,
        heads,
        extension,
        layers,
        windowed_total,
        full_total,
        reduction_factor: full_total as f64 / windowed_total as f64,
    })
}
