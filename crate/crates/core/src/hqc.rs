//! Hybrid-query connector: metadata-anchored semantic queries (conv-downsampled
//! text tokens), item-independent exploratory queries, and a stack of
//! {query self-attention, query→image cross-attention, feed-forward} blocks
//! with pre-norm residuals, followed by a shared output projection into the
//! fusion embedding width.

use crate::error::{Error, Result};
use crate::nn::{multi_head_attention, AttnParams, FfnParams, LayerNormParams, LinearParams};
use crate::tensor::{Graph, ParamId, ParamSet, Tensor, Var};

#[derive(Debug, Clone)]
pub struct HqcConfig {
    /// Conv1D kernel over the text-token axis.
    pub kernel: usize,
    /// Conv1D stride; the semantic slot count is ⌈L_t/stride⌉.
    pub stride: usize,
    /// Exploratory query count (T_r).
    pub exploratory_queries: usize,
    /// Query width (d_q).
    pub query_dim: usize,
    /// Output width shared with the fusion backbone (d_llm).
    pub llm_dim: usize,
    /// Connector depth.
    pub layers: usize,
    pub heads: usize,
}

impl Default for HqcConfig {
    fn default() -> Self {
        HqcConfig {
            kernel: 5,
            stride: 5,
            exploratory_queries: 3,
            query_dim: 768,
            llm_dim: 1024,
            layers: 6,
            heads: 8,
        }
    }
}

impl HqcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kernel < 1 || self.stride < 1 {
            return Err(Error::Config(format!(
                "hqc kernel/stride must be >= 1, got {}/{}",
                self.kernel, self.stride
            )));
        }
        if self.query_dim == 0 || self.query_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "query_dim {} must be a positive multiple of heads {}",
                self.query_dim, self.heads
            )));
        }
        if self.layers == 0 {
            return Err(Error::Config("hqc needs at least one layer".into()));
        }
        Ok(())
    }
}

/// Semantic slot count for a text length: ⌈L_t/stride⌉.
pub fn query_slots(text_len: usize, stride: usize) -> usize {
    text_len.div_ceil(stride)
}

/// Parameters of the metadata-anchored query path.
#[derive(Debug, Clone)]
pub struct SemanticQueryParams {
    pub conv_w: ParamId,
    pub conv_b: ParamId,
    pub w_q: ParamId,
}

#[derive(Debug, Clone)]
pub struct HqcBlockParams {
    pub self_ln: LayerNormParams,
    pub self_attn: AttnParams,
    pub cross_ln: LayerNormParams,
    pub cross_attn: AttnParams,
    pub ffn_ln: LayerNormParams,
    pub ffn: FfnParams,
}

/// All connector parameters. `semantic`/`exploratory` are `None` when the
/// ablation variant removes that query stream.
#[derive(Debug, Clone)]
pub struct HqcParams {
    pub semantic: Option<SemanticQueryParams>,
    pub exploratory: Option<ParamId>,
    pub blocks: Vec<HqcBlockParams>,
    pub out_proj: LinearParams,
}

impl HqcParams {
    pub fn add(set: &mut ParamSet, cfg: &HqcConfig, d_v: usize, semantic: bool, exploratory: bool) -> Result<Self> {
        cfg.validate()?;
        if !semantic && !exploratory {
            return Err(Error::Config("connector needs at least one query stream".into()));
        }
        let semantic = semantic.then(|| SemanticQueryParams {
            conv_w: set.add_uniform("hqc.downsample.w", d_v, d_v * cfg.kernel, d_v * cfg.kernel),
            conv_b: set.add_uniform("hqc.downsample.b", 1, d_v, d_v * cfg.kernel),
            w_q: set.add_uniform("hqc.w_q", d_v, cfg.query_dim, d_v),
        });
        let exploratory = exploratory
            .then(|| set.add_uniform("hqc.q_rnd", cfg.exploratory_queries, cfg.query_dim, cfg.query_dim));
        let blocks = (0..cfg.layers)
            .map(|l| HqcBlockParams {
                self_ln: LayerNormParams::add(set, &format!("hqc.layer{l}.self_ln"), cfg.query_dim),
                self_attn: AttnParams::add(set, &format!("hqc.layer{l}.self_attn"), cfg.query_dim, cfg.query_dim, cfg.query_dim),
                cross_ln: LayerNormParams::add(set, &format!("hqc.layer{l}.cross_ln"), cfg.query_dim),
                cross_attn: AttnParams::add(set, &format!("hqc.layer{l}.cross_attn"), cfg.query_dim, d_v, cfg.query_dim),
                ffn_ln: LayerNormParams::add(set, &format!("hqc.layer{l}.ffn_ln"), cfg.query_dim),
                ffn: FfnParams::add(set, &format!("hqc.layer{l}.ffn"), cfg.query_dim, 4 * cfg.query_dim),
            })
            .collect();
        let out_proj = LinearParams::add(set, "hqc.out_proj.w", "hqc.out_proj.b", cfg.query_dim, cfg.llm_dim);
        Ok(HqcParams { semantic, exploratory, blocks, out_proj })
    }
}

/// Conv-downsample text tokens into ⌈L_t/s⌉ slots.
pub fn downsample_text(
    g: &mut Graph,
    vars: &[Var],
    p: &SemanticQueryParams,
    text_tokens: Var,
    cfg: &HqcConfig,
) -> Result<Var> {
    g.conv1d(
        text_tokens,
        crate::nn::pv(vars, p.conv_w),
        crate::nn::pv(vars, p.conv_b),
        cfg.kernel,
        cfg.stride,
    )
}

/// Project compressed text slots into query space (no bias, bare product).
pub fn project_semantic_queries(g: &mut Graph, vars: &[Var], p: &SemanticQueryParams, compressed: Var) -> Result<Var> {
    g.matmul(compressed, crate::nn::pv(vars, p.w_q))
}

/// Connector output streams plus attention snapshots.
pub struct HqcForward {
    /// Metadata-anchored stream, T_g × d_llm.
    pub semantic_stream: Option<Var>,
    /// Exploratory stream, T_r × d_llm.
    pub exploratory_stream: Option<Var>,
    pub t_g: usize,
    pub t_r: usize,
    /// `cross_attention[layer][head]` is a (T_g+T_r) × L_v softmax map;
    /// empty unless attention recording was requested.
    pub cross_attention: Vec<Vec<Var>>,
}

/// Run the connector. `text_tokens` is `None` for the exploratory-only
/// variant. Emits a numeric error naming the block if values go non-finite.
pub fn hqc_forward(
    g: &mut Graph,
    vars: &[Var],
    params: &HqcParams,
    cfg: &HqcConfig,
    text_tokens: Option<&Tensor>,
    visual_tokens: &Tensor,
    record_attention: bool,
) -> Result<HqcForward> {
    let mut parts = Vec::new();
    let mut t_g = 0;
    if let Some(sem) = &params.semantic {
        let text = text_tokens
            .ok_or_else(|| Error::Contract("semantic queries need text tokens".into()))?;
        let text = g.leaf(text.clone(), false);
        let compressed = downsample_text(g, vars, sem, text, cfg)?;
        let queries = project_semantic_queries(g, vars, sem, compressed)?;
        t_g = g.value(queries).rows();
        parts.push(queries);
    }
    let mut t_r = 0;
    if let Some(q_rnd) = params.exploratory {
        let queries = crate::nn::pv(vars, q_rnd);
        t_r = g.value(queries).rows();
        parts.push(queries);
    }
    // [semantic; exploratory] row order is the contract
    let mut h = if parts.len() == 1 { parts[0] } else { g.concat(&parts, 0)? };
    let images = g.leaf(visual_tokens.clone(), false);

    let mut cross_attention = Vec::new();
    for (l, block) in params.blocks.iter().enumerate() {
        let normed = block.self_ln.apply(g, vars, h)?;
        let (sa, _) = multi_head_attention(g, vars, normed, normed, &block.self_attn, cfg.heads)?;
        h = g.add(h, sa)?;

        let normed = block.cross_ln.apply(g, vars, h)?;
        let (ca, probs) = multi_head_attention(g, vars, normed, images, &block.cross_attn, cfg.heads)?;
        h = g.add(h, ca)?;
        if record_attention {
            cross_attention.push(probs);
        }

        let normed = block.ffn_ln.apply(g, vars, h)?;
        let ff = block.ffn.apply(g, vars, normed)?;
        h = g.add(h, ff)?;
        g.check_finite(h, &format!("hqc.layer{l}"))?;
    }

    let out = params.out_proj.apply(g, vars, h)?;
    let semantic_stream = if t_g > 0 { Some(g.slice_rows(out, 0, t_g)?) } else { None };
    let exploratory_stream = if t_r > 0 { Some(g.slice_rows(out, t_g, t_r)?) } else { None };
    Ok(HqcForward { semantic_stream, exploratory_stream, t_g, t_r, cross_attention })
}

/// Attention artifacts for one item: raw per-layer per-head maps plus the
/// last layer's head average, the semantic block additionally averaged over
/// its queries and each exploratory query kept separate.
pub struct AttentionExport {
    /// `[layer][head]`, each (T_g+T_r) × L_v.
    pub per_layer: Vec<Vec<Tensor>>,
    /// Last layer, averaged over heads: (T_g+T_r) × L_v.
    pub last_head_avg: Tensor,
    /// Head-and-query average of the semantic block, 1 × L_v.
    pub semantic_avg: Option<Tensor>,
    /// One 1 × L_v map per exploratory query.
    pub exploratory: Vec<Tensor>,
}

impl AttentionExport {
    pub fn from_forward(g: &Graph, fwd: &HqcForward) -> Result<Self> {
        if fwd.cross_attention.is_empty() {
            return Err(Error::State("attention export requested before a recording forward pass".into()));
        }
        let per_layer: Vec<Vec<Tensor>> = fwd
            .cross_attention
            .iter()
            .map(|heads| heads.iter().map(|&v| g.value(v).clone()).collect())
            .collect();
        let last = per_layer.last().expect("non-empty");
        let (rows, cols) = (last[0].rows(), last[0].cols());
        let mut avg = vec![0.0; rows * cols];
        for head in last {
            for (a, v) in avg.iter_mut().zip(head.data()) {
                *a += v / last.len() as f64;
            }
        }
        let last_head_avg = Tensor::matrix(rows, cols, avg)?;
        let semantic_avg = if fwd.t_g > 0 {
            let mut m = vec![0.0; cols];
            for r in 0..fwd.t_g {
                for (j, v) in m.iter_mut().enumerate() {
                    *v += last_head_avg.at(r, j) / fwd.t_g as f64;
                }
            }
            Some(Tensor::row(m))
        } else {
            None
        };
        let exploratory = (0..fwd.t_r)
            .map(|r| {
                let row: Vec<f64> = (0..cols).map(|j| last_head_avg.at(fwd.t_g + r, j)).collect();
                Tensor::row(row)
            })
            .collect();
        Ok(AttentionExport { per_layer, last_head_avg, semantic_avg, exploratory })
    }
}
