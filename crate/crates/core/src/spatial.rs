//! Spatial branch: ROIs are tokens. Each ROI's series is embedded, a
//! learnable position (its slot in the ROI ordering) is added, and standard
//! self-attention blocks follow.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::block::{transformer_block, BlockContext, BlockParams, Init, ParamRegistry};
use crate::error::{Error, Result};
use crate::kernel::{NodeId, Tape};
use crate::temporal::BranchOptions;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpatialParams {
    pub embed_weight: usize,
    pub embed_bias: usize,
    /// `[max_rois, d]`; row `i` is added to the token in ordered slot `i`.
    pub positions: usize,
    pub blocks: Vec<BlockParams>,
    pub max_rois: usize,
}

impl SpatialParams {
    pub fn register(
        reg: &mut ParamRegistry,
        seq_len: usize,
        d: usize,
        ff_hidden: usize,
        max_rois: usize,
        depth: usize,
    ) -> Self {
        let embed_weight = reg.add("spatial.embed.weight", &[seq_len, d], Init::FanIn(seq_len));
        let embed_bias = reg.add("spatial.embed.bias", &[d], Init::Zeros);
        let positions = reg.add("spatial.positions", &[max_rois, d], Init::Uniform(0.1));
        let blocks = (0..depth)
            .map(|b| BlockParams::register(reg, &format!("spatial.block{b}"), d, ff_hidden))
            .collect();
        SpatialParams {
            embed_weight,
            embed_bias,
            positions,
            blocks,
            max_rois,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SpatialOutput {
    /// `[n, d]` after the last block.
    pub out: NodeId,
    /// Embedded tokens with positions added.
    pub embedded: NodeId,
    pub attention: Vec<NodeId>,
}

/// `input` is ROI-major (`[n, m]`), rows already in the chosen ROI order.
pub fn spatial_forward<R: Rng + ?Sized>(
    tape: &mut Tape<'_>,
    params: &SpatialParams,
    input: NodeId,
    opts: &BranchOptions<'_>,
    rng: &mut R,
) -> Result<SpatialOutput> {
    let n = tape.value(input).rows();
    if n > params.max_rois {
        return Err(Error::Config(format!(
            "{n} ROIs exceed the positional table of {}",
            params.max_rois
        )));
    }
    let (w, b) = (tape.param(params.embed_weight), tape.param(params.embed_bias));
    let tokens = tape.linear(input, w, Some(b))?;
    let table = tape.param(params.positions);
    let pos = tape.slice_rows(table, 0, n)?;
    let embedded = tape.add(tokens, pos)?;

    let ctx = BlockContext {
        heads: opts.heads,
        dropout: opts.dropout,
        windows: None,
        bias: None,
        pad_fill: None,
    };
    let mut cur = embedded;
    let mut attention = Vec::with_capacity(params.blocks.len());
    for block in &params.blocks {
        let out = transformer_block(tape, block, cur, &ctx, rng)?;
        attention.push(out.attention);
        cur = out.out;
    }
    Ok(SpatialOutput {
        out: cur,
        embedded,
        attention,
    })
}
