//! Reusable network pieces: linear layers, affine layer norm, multi-head
//! attention, and the feed-forward block. Connector and fusion blocks are
//! assembled from these.

use crate::error::Result;
use crate::tensor::{Graph, ParamId, ParamSet, Var};

/// Layer-norm epsilon used everywhere a norm or standardization appears.
pub const LN_EPS: f64 = 1e-5;

/// Look up the bound graph leaf for a parameter.
pub fn pv(vars: &[Var], id: ParamId) -> Var {
    vars[id.index()]
}

/// Weight + bias pair.
#[derive(Debug, Clone)]
pub struct LinearParams {
    pub w: ParamId,
    pub b: ParamId,
}

impl LinearParams {
    pub fn add(set: &mut ParamSet, w_name: &str, b_name: &str, d_in: usize, d_out: usize) -> Self {
        LinearParams {
            w: set.add_uniform(w_name, d_in, d_out, d_in),
            b: set.add_uniform(b_name, 1, d_out, d_in),
        }
    }

    /// `x·W + b` with the bias broadcast over rows.
    pub fn apply(&self, g: &mut Graph, vars: &[Var], x: Var) -> Result<Var> {
        let y = g.matmul(x, pv(vars, self.w))?;
        g.row_broadcast_add(y, pv(vars, self.b))
    }
}

/// Layer norm with learnable gain and bias.
#[derive(Debug, Clone)]
pub struct LayerNormParams {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNormParams {
    pub fn add(set: &mut ParamSet, prefix: &str, dim: usize) -> Self {
        LayerNormParams {
            gain: set.add_const(&format!("{prefix}.gain"), 1, dim, 1.0),
            bias: set.add_zeros(&format!("{prefix}.bias"), 1, dim),
        }
    }

    pub fn apply(&self, g: &mut Graph, vars: &[Var], x: Var) -> Result<Var> {
        let normed = g.layer_norm(x, 1, LN_EPS)?;
        let scaled = g.row_broadcast_mul(normed, pv(vars, self.gain))?;
        g.row_broadcast_add(scaled, pv(vars, self.bias))
    }
}

/// Projections for one attention sublayer.
#[derive(Debug, Clone)]
pub struct AttnParams {
    pub wq: ParamId,
    pub bq: ParamId,
    pub wk: ParamId,
    pub bk: ParamId,
    pub wv: ParamId,
    pub bv: ParamId,
    pub wo: ParamId,
    pub bo: ParamId,
}

impl AttnParams {
    /// `d_q_in`: query-side input dim, `d_kv_in`: key/value-side input dim,
    /// `d_model`: attention width (must be divisible by the head count).
    pub fn add(set: &mut ParamSet, prefix: &str, d_q_in: usize, d_kv_in: usize, d_model: usize) -> Self {
        AttnParams {
            wq: set.add_uniform(&format!("{prefix}.wq"), d_q_in, d_model, d_q_in),
            bq: set.add_uniform(&format!("{prefix}.bq"), 1, d_model, d_q_in),
            wk: set.add_uniform(&format!("{prefix}.wk"), d_kv_in, d_model, d_kv_in),
            bk: set.add_uniform(&format!("{prefix}.bk"), 1, d_model, d_kv_in),
            wv: set.add_uniform(&format!("{prefix}.wv"), d_kv_in, d_model, d_kv_in),
            bv: set.add_uniform(&format!("{prefix}.bv"), 1, d_model, d_kv_in),
            wo: set.add_uniform(&format!("{prefix}.wo"), d_model, d_model, d_model),
            bo: set.add_uniform(&format!("{prefix}.bo"), 1, d_model, d_model),
        }
    }
}

/// Multi-head attention from `queries` onto `keys_values`.
///
/// Returns the projected output and one T_q×T_k attention-probability map
/// per head (softmax rows).
pub fn multi_head_attention(
    g: &mut Graph,
    vars: &[Var],
    queries: Var,
    keys_values: Var,
    p: &AttnParams,
    n_heads: usize,
) -> Result<(Var, Vec<Var>)> {
    let q = g.matmul(queries, pv(vars, p.wq))?;
    let q = g.row_broadcast_add(q, pv(vars, p.bq))?;
    let k = g.matmul(keys_values, pv(vars, p.wk))?;
    let k = g.row_broadcast_add(k, pv(vars, p.bk))?;
    let v = g.matmul(keys_values, pv(vars, p.wv))?;
    let v = g.row_broadcast_add(v, pv(vars, p.bv))?;

    let d_model = g.value(q).cols();
    assert_eq!(d_model % n_heads, 0, "head count must divide attention width");
    let dh = d_model / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let mut contexts = Vec::with_capacity(n_heads);
    let mut probs = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let qh = g.slice_cols(q, h * dh, dh)?;
        let kh = g.slice_cols(k, h * dh, dh)?;
        let vh = g.slice_cols(v, h * dh, dh)?;
        let kh_t = g.transpose(kh);
        let scores = g.matmul(qh, kh_t)?;
        let scores = g.scale(scores, scale);
        let attn = g.softmax(scores, 1)?;
        probs.push(attn);
        contexts.push(g.matmul(attn, vh)?);
    }
    let ctx = g.concat(&contexts, 1)?;
    let out = g.matmul(ctx, pv(vars, p.wo))?;
    let out = g.row_broadcast_add(out, pv(vars, p.bo))?;
    Ok((out, probs))
}

/// Two-layer GELU feed-forward.
#[derive(Debug, Clone)]
pub struct FfnParams {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

impl FfnParams {
    pub fn add(set: &mut ParamSet, prefix: &str, dim: usize, hidden: usize) -> Self {
        FfnParams {
            w1: set.add_uniform(&format!("{prefix}.w1"), dim, hidden, dim),
            b1: set.add_uniform(&format!("{prefix}.b1"), 1, hidden, dim),
            w2: set.add_uniform(&format!("{prefix}.w2"), hidden, dim, hidden),
            b2: set.add_uniform(&format!("{prefix}.b2"), 1, dim, hidden),
        }
    }

    pub fn apply(&self, g: &mut Graph, vars: &[Var], x: Var) -> Result<Var> {
        let h = g.matmul(x, pv(vars, self.w1))?;
        let h = g.row_broadcast_add(h, pv(vars, self.b1))?;
        let h = g.gelu(h);
        let y = g.matmul(h, pv(vars, self.w2))?;
        g.row_broadcast_add(y, pv(vars, self.b2))
    }
}

/// Sinusoidal position rows (T×d), the usual interleaved sin/cos table.
pub fn sinusoidal_positions(len: usize, dim: usize) -> crate::tensor::Tensor {
    let mut data = vec![0.0; len * dim];
    for pos in 0..len {
        for i in 0..dim {
            let pair = (i / 2) as f64;
            let rate = 1.0 / 10000f64.powf(2.0 * pair / dim as f64);
            let angle = pos as f64 * rate;
            data[pos * dim + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    crate::tensor::Tensor::matrix(len, dim, data).expect("position table")
}
