//! Parameter registry and the pre-norm transformer block shared by the
//! temporal and spatial branches.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{Activation, AttentionLayout, NodeId, Tape, Tensor};
use crate::math;

/// How a registered parameter is filled at initialisation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    FanIn(usize),
    /// Layer whose output is added to a residual stream or read out as
    /// logits. Zero under [`InitScheme::Standard`], fan-in uniform otherwise.
    Output(usize),
    /// `U(-a, a)`.
    Uniform(f64),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// Output layers zeroed so every block starts as the identity and the
    /// classifier starts at uniform predictions.
    #[default]
    Standard,
    /// Every tensor random, including biases and norm gains. Used where
    /// every parameter must receive gradient from the first step.
    Dense,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

/// Ordered list of named parameter shapes; a parameter's index here is its
/// index in the flat parameter vector handed to [`Tape::new`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamRegistry {
    specs: Vec<ParamSpec>,
}

impl ParamRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], init: Init) -> usize {
        self.specs.push(ParamSpec {
            name: name.into(),
            shape: shape.to_vec(),
            init,
        });
        self.specs.len() - 1
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.specs.iter().map(|s| s.shape.iter().product::<usize>()).sum()
    }

    pub fn initialize<R: Rng + ?Sized>(&self, scheme: InitScheme, rng: &mut R) -> Vec<Tensor> {
        self.specs
            .iter()
            .map(|spec| {
                let numel = spec.shape.iter().product();
                let uniform = |a: f64, rng: &mut R| -> Vec<f64> {
                    let dist = Uniform::new_inclusive(-a, a).expect("finite bound");
                    (0..numel).map(|_| dist.sample(rng)).collect()
                };
                let fan_in = |f: usize| 1.0 / math::sqrt(f.max(1) as f64);
                let data = match (spec.init, scheme) {
                    (Init::Zeros, InitScheme::Standard) => alloc::vec![0.0; numel],
                    (Init::Zeros, InitScheme::Dense) => uniform(0.05, rng),
                    (Init::Ones, InitScheme::Standard) => alloc::vec![1.0; numel],
                    (Init::Ones, InitScheme::Dense) => uniform(0.1, rng).into_iter().map(|v| 1.0 + v).collect(),
                    (Init::Output(_), InitScheme::Standard) => alloc::vec![0.0; numel],
                    (Init::FanIn(f) | Init::Output(f), _) => uniform(fan_in(f), rng),
                    (Init::Uniform(a), _) => uniform(a, rng),
                };
                Tensor::new(spec.shape.clone(), data).expect("registered shape")
            })
            .collect()
    }

    /// Checks that `params` has exactly the registered shapes.
    pub fn check(&self, params: &[Tensor]) -> Result<()> {
        if params.len() != self.specs.len() {
            return Err(Error::Config(format!(
                "{} parameter tensors for a layout of {}",
                params.len(),
                self.specs.len()
            )));
        }
        for (spec, t) in self.specs.iter().zip(params) {
            if t.shape() != spec.shape.as_slice() {
                return Err(Error::Config(format!(
                    "parameter {} has shape {:?}, expected {:?}",
                    spec.name,
                    t.shape(),
                    spec.shape
                )));
            }
        }
        Ok(())
    }
}

/// Indices of one block's parameters in a [`ParamRegistry`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockParams {
    pub norm1_gain: usize,
    pub norm1_bias: usize,
    pub q_weight: usize,
    pub q_bias: usize,
    pub k_weight: usize,
    pub k_bias: usize,
    pub v_weight: usize,
    pub v_bias: usize,
    pub out_weight: usize,
    pub out_bias: usize,
    pub norm2_gain: usize,
    pub norm2_bias: usize,
    pub ff_in_weight: usize,
    pub ff_in_bias: usize,
    pub ff_out_weight: usize,
    pub ff_out_bias: usize,
}

impl BlockParams {
    pub fn register(reg: &mut ParamRegistry, prefix: &str, d: usize, ff_hidden: usize) -> Self {
        let mut add = |name: &str, shape: &[usize], init| reg.add(format!("{prefix}.{name}"), shape, init);
        BlockParams {
            norm1_gain: add("norm1.gain", &[d], Init::Ones),
            norm1_bias: add("norm1.bias", &[d], Init::Zeros),
            q_weight: add("q.weight", &[d, d], Init::FanIn(d)),
            q_bias: add("q.bias", &[d], Init::Zeros),
            k_weight: add("k.weight", &[d, d], Init::FanIn(d)),
            k_bias: add("k.bias", &[d], Init::Zeros),
            v_weight: add("v.weight", &[d, d], Init::FanIn(d)),
            v_bias: add("v.bias", &[d], Init::Zeros),
            out_weight: add("out.weight", &[d, d], Init::Output(d)),
            out_bias: add("out.bias", &[d], Init::Zeros),
            norm2_gain: add("norm2.gain", &[d], Init::Ones),
            norm2_bias: add("norm2.bias", &[d], Init::Zeros),
            ff_in_weight: add("ff_in.weight", &[d, ff_hidden], Init::FanIn(d)),
            ff_in_bias: add("ff_in.bias", &[ff_hidden], Init::Zeros),
            ff_out_weight: add("ff_out.weight", &[ff_hidden, d], Init::Output(ff_hidden)),
            ff_out_bias: add("ff_out.bias", &[d], Init::Zeros),
        }
    }
}

/// Key/value row selection for windowed attention: query window `i` covers
/// rows `[i*w, (i+1)*w)` and attends to `index` rows `[i*k, (i+1)*k)`.
/// `None` entries are padding and are masked out.
#[derive(Clone, Debug, PartialEq)]
pub struct KeyWindows {
    pub windows: usize,
    pub query_len: usize,
    pub key_len: usize,
    pub index: Vec<Option<usize>>,
}

impl KeyWindows {
    pub fn mask(&self) -> Vec<bool> {
        self.index.iter().map(Option::is_some).collect()
    }

    pub fn pad_count(&self) -> usize {
        self.index.iter().filter(|i| i.is_none()).count()
    }

    pub fn layout(&self, heads: usize) -> AttentionLayout {
        AttentionLayout {
            windows: self.windows,
            query_len: self.query_len,
            key_len: self.key_len,
            heads,
            key_mask: Some(self.mask()),
        }
    }
}

/// Everything a block needs besides its parameters and input.
#[derive(Clone, Copy, Debug)]
pub struct BlockContext<'a> {
    pub heads: usize,
    /// Zero disables dropout.
    pub dropout: f64,
    /// `None` means plain self-attention over all rows.
    pub windows: Option<&'a KeyWindows>,
    /// Additive attention bias `[heads, query_len, key_len]`.
    pub bias: Option<NodeId>,
    /// Values placed in padded key/value rows instead of zeros.
    pub pad_fill: Option<&'a Tensor>,
}

#[derive(Clone, Copy, Debug)]
pub struct BlockOutput {
    pub out: NodeId,
    /// The attention node, for reading recorded weights.
    pub attention: NodeId,
}

/// Multi-head attention with queries from `h_query` and keys/values from
/// `h_key` (gathered into extended windows when `ctx.windows` is set),
/// followed by the output projection.
pub fn attention_sublayer(
    tape: &mut Tape<'_>,
    p: &BlockParams,
    h_query: NodeId,
    h_key: NodeId,
    ctx: &BlockContext<'_>,
) -> Result<(NodeId, NodeId)> {
    let (wq, bq) = (tape.param(p.q_weight), tape.param(p.q_bias));
    let (wk, bk) = (tape.param(p.k_weight), tape.param(p.k_bias));
    let (wv, bv) = (tape.param(p.v_weight), tape.param(p.v_bias));
    let q = tape.linear(h_query, wq, Some(bq))?;
    let mut k = tape.linear(h_key, wk, Some(bk))?;
    let mut v = tape.linear(h_key, wv, Some(bv))?;
    let layout = match ctx.windows {
        Some(kw) => {
            k = tape.gather_rows(k, kw.index.clone(), ctx.pad_fill)?;
            v = tape.gather_rows(v, kw.index.clone(), ctx.pad_fill)?;
            kw.layout(ctx.heads)
        }
        None => AttentionLayout {
            windows: 1,
            query_len: tape.value(q).rows(),
            key_len: tape.value(k).rows(),
            heads: ctx.heads,
            key_mask: None,
        },
    };
    let attn = tape.attention(q, k, v, ctx.bias, layout)?;
    let (wo, bo) = (tape.param(p.out_weight), tape.param(p.out_bias));
    let out = tape.linear(attn, wo, Some(bo))?;
    Ok((out, attn))
}

/// `r = x + Drop(Attn(LN1(x)))`, `out = r + FF(LN2(r))` with
/// `FF = Linear -> GELU -> Drop -> Linear`.
pub fn transformer_block<R: Rng + ?Sized>(
    tape: &mut Tape<'_>,
    p: &BlockParams,
    x: NodeId,
    ctx: &BlockContext<'_>,
    rng: &mut R,
) -> Result<BlockOutput> {
    let (g1, b1) = (tape.param(p.norm1_gain), tape.param(p.norm1_bias));
    let h = tape.layer_norm(x, g1, b1)?;
    let (attn_out, attention) = attention_sublayer(tape, p, h, h, ctx)?;
    let attn_out = tape.dropout(attn_out, ctx.dropout, rng)?;
    let r = tape.add(x, attn_out)?;

    let (g2, b2) = (tape.param(p.norm2_gain), tape.param(p.norm2_bias));
    let f = tape.layer_norm(r, g2, b2)?;
    let (w1, c1) = (tape.param(p.ff_in_weight), tape.param(p.ff_in_bias));
    let f = tape.linear(f, w1, Some(c1))?;
    let f = tape.activation(f, Activation::Gelu)?;
    let f = tape.dropout(f, ctx.dropout, rng)?;
    let (w2, c2) = (tape.param(p.ff_out_weight), tape.param(p.ff_out_bias));
    let f = tape.linear(f, w2, Some(c2))?;
    let out = tape.add(r, f)?;
    Ok(BlockOutput { out, attention })
}
