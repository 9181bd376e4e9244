use crate::autodiff::{Graph, Var};
use crate::error::{dim_err, Error, Result};
use crate::tensor::Tensor;
use crate::window::WindowLayout;

use super::weights::{BlockWeights, EmbedWeights};
use super::TokenGrid;

/// Attention heads per block.
pub const HEADS: usize = 6;

/// Layer-norm epsilon used throughout the encoder.
pub const LN_EPS: f64 = 1e-6;

/// Post-softmax attention matrices of one block, indexed `[window][head]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionScores {
    pub per_window: Vec<Vec<Tensor>>,
}

impl AttentionScores {
    pub fn num_heads(&self) -> usize {
        self.per_window.first().map_or(0, Vec::len)
    }

    /// Score matrices of head `h` across windows.
    pub fn head(&self, h: usize) -> impl Iterator<Item = &Tensor> + '_ {
        self.per_window.iter().map(move |w| &w[h])
    }
}

/// Graph handles for one block's parameters.
#[derive(Clone, Copy, Debug)]
pub(crate) struct BlockVars {
    pub ln1_gamma: Var,
    pub ln1_beta: Var,
    pub qkv_weight: Var,
    pub qkv_bias: Var,
    pub proj_weight: Var,
    pub proj_bias: Var,
    pub ln2_gamma: Var,
    pub ln2_beta: Var,
    pub ffn1_weight: Var,
    pub ffn1_bias: Var,
    pub ffn2_weight: Var,
    pub ffn2_bias: Var,
}

impl BlockVars {
    /// Handles in [`BlockWeights::FIELDS`] order.
    pub fn from_array(v: [Var; 12]) -> Self {
        let [a, b, c, d, e, f, h, i, j, k, l, m] = v;
        Self {
            ln1_gamma: a,
            ln1_beta: b,
            qkv_weight: c,
            qkv_bias: d,
            proj_weight: e,
            proj_bias: f,
            ln2_gamma: h,
            ln2_beta: i,
            ffn1_weight: j,
            ffn1_bias: k,
            ffn2_weight: l,
            ffn2_bias: m,
        }
    }

    pub fn leaves(g: &mut Graph, w: &BlockWeights) -> Self {
        Self::from_array(w.tensors().map(|t| g.leaf(t.clone())))
    }
}

pub(crate) fn linear(g: &mut Graph, x: Var, weight: Var, bias: Var) -> Result<Var> {
    let y = g.matmul(x, weight)?;
    g.add_bias(y, bias)
}

fn check_heads(d: usize, heads: usize) -> Result<usize> {
    if heads == 0 || !d.is_multiple_of(heads) {
        return Err(Error::Config(format!(
            "hidden size {d} is not divisible by {heads} heads"
        )));
    }
    Ok(d / heads)
}

/// Multi-head self-attention applied independently inside each window.
///
/// `x` is `n×d`; `windows` lists the row indices of every window and must
/// cover each row exactly once. Returns the `n×d` output and the score
/// nodes as `[window][head]`.
pub(crate) fn mhsa_graph(
    g: &mut Graph,
    x: Var,
    w: &BlockVars,
    windows: &[Vec<usize>],
    heads: usize,
) -> Result<(Var, Vec<Vec<Var>>)> {
    let (n, d) = match g.dims(x) {
        &[n, d] => (n, d),
        dims => {
            return Err(dim_err(format!(
                "attention input must be n×d, got {dims:?}"
            )))
        }
    };
    let dh = check_heads(d, heads)?;
    let mut slot = vec![usize::MAX; n];
    let mut offset = 0;
    for idx in windows {
        for &t in idx {
            if t >= n || slot[t] != usize::MAX {
                return Err(dim_err(format!("windows do not partition {n} tokens")));
            }
            slot[t] = offset;
            offset += 1;
        }
    }
    if offset != n {
        return Err(dim_err(format!("windows cover {offset} of {n} tokens")));
    }

    let qkv = linear(g, x, w.qkv_weight, w.qkv_bias)?;
    let scale = 1.0 / (dh as f64).sqrt();
    let stride = 3 * d;
    let mut window_outputs = Vec::with_capacity(windows.len());
    let mut scores = Vec::with_capacity(windows.len());
    for idx in windows {
        let m = idx.len();
        let mut head_outputs = Vec::with_capacity(heads);
        let mut head_scores = Vec::with_capacity(heads);
        for h in 0..heads {
            let col = h * dh;
            let mut q_idx = Vec::with_capacity(m * dh);
            let mut v_idx = Vec::with_capacity(m * dh);
            for &t in idx {
                for c in 0..dh {
                    q_idx.push(t * stride + col + c);
                    v_idx.push(t * stride + 2 * d + col + c);
                }
            }
            let mut kt_idx = Vec::with_capacity(m * dh);
            for c in 0..dh {
                for &t in idx {
                    kt_idx.push(t * stride + d + col + c);
                }
            }
            let q = g.gather(qkv, q_idx, &[m, dh])?;
            let kt = g.gather(qkv, kt_idx, &[dh, m])?;
            let v = g.gather(qkv, v_idx, &[m, dh])?;
            let logits = g.matmul(q, kt)?;
            let logits = g.scale(logits, scale);
            let s = g.softmax_rows(logits)?;
            head_outputs.push(g.matmul(s, v)?);
            head_scores.push(s);
        }
        // [heads, m, dh] -> [m, d]
        let stacked = g.concat(&head_outputs, &[heads * m * dh])?;
        let mut idx_out = Vec::with_capacity(m * d);
        for r in 0..m {
            for h in 0..heads {
                for c in 0..dh {
                    idx_out.push(h * m * dh + r * dh + c);
                }
            }
        }
        window_outputs.push(g.gather(stacked, idx_out, &[m, d])?);
        scores.push(head_scores);
    }

    let merged = if windows.len() == 1 && windows[0].iter().enumerate().all(|(i, &t)| i == t) {
        window_outputs[0]
    } else {
        let stacked = g.concat(&window_outputs, &[n * d])?;
        let index = (0..n * d).map(|i| slot[i / d] * d + i % d).collect();
        g.gather(stacked, index, &[n, d])?
    };
    let out = linear(g, merged, w.proj_weight, w.proj_bias)?;
    Ok((out, scores))
}

/// Pre-norm block: `x + mhsa(ln1 x)`, then `x + ffn2(gelu(ffn1(ln2 x)))`.
pub(crate) fn block_graph(
    g: &mut Graph,
    x: Var,
    w: &BlockVars,
    windows: &[Vec<usize>],
    heads: usize,
) -> Result<(Var, Vec<Vec<Var>>)> {
    let h = g.layernorm(x, w.ln1_gamma, w.ln1_beta, LN_EPS)?;
    let (attn, scores) = mhsa_graph(g, h, w, windows, heads)?;
    let x = g.add(x, attn)?;
    let h = g.layernorm(x, w.ln2_gamma, w.ln2_beta, LN_EPS)?;
    let h = linear(g, h, w.ffn1_weight, w.ffn1_bias)?;
    let h = g.gelu(h);
    let h = linear(g, h, w.ffn2_weight, w.ffn2_bias)?;
    Ok((g.add(x, h)?, scores))
}

/// Row indices of non-overlapping `p×p×3` patches of an `H×W×3` image,
/// flattened `(y, x, channel)`.
pub(crate) fn patch_index(
    height: usize,
    width: usize,
    p: usize,
) -> Result<(usize, usize, Vec<usize>)> {
    if p == 0 || !height.is_multiple_of(p) || !width.is_multiple_of(p) {
        return Err(dim_err(format!(
            "image {height}x{width} is not divisible by patch size {p}"
        )));
    }
    let (gh, gw) = (height / p, width / p);
    let mut index = Vec::with_capacity(height * width * 3);
    for py in 0..gh {
        for px in 0..gw {
            for y in 0..p {
                for x in 0..p {
                    let base = ((py * p + y) * width + px * p + x) * 3;
                    index.extend([base, base + 1, base + 2]);
                }
            }
        }
    }
    Ok((gh, gw, index))
}

/// Patch projection plus position embedding; returns `(g_h·g_w)×d` rows.
pub(crate) fn patch_embed_graph(
    g: &mut Graph,
    image: Var,
    kernel: Var,
    bias: Var,
    pos: Var,
    p: usize,
) -> Result<(usize, usize, Var)> {
    let (height, width) = match g.dims(image) {
        &[h, w, 3] => (h, w),
        dims => return Err(dim_err(format!("image must be H×W×3, got {dims:?}"))),
    };
    let d = *g.dims(kernel).last().expect("kernel rank");
    if g.dims(kernel) != [p, p, 3, d] {
        return Err(dim_err(format!(
            "patch kernel {:?} does not match patch size {p}",
            g.dims(kernel)
        )));
    }
    let (gh, gw, index) = patch_index(height, width, p)?;
    if g.dims(pos) != [gh, gw, d] {
        return Err(Error::Config(format!(
            "position table {:?} does not match token grid {gh}x{gw}x{d}",
            g.dims(pos)
        )));
    }
    let patches = g.gather(image, index, &[gh * gw, p * p * 3])?;
    let k = g.reshape(kernel, &[p * p * 3, d])?;
    let tokens = linear(g, patches, k, bias)?;
    let pos = g.reshape(pos, &[gh * gw, d])?;
    Ok((gh, gw, g.add(tokens, pos)?))
}

/// Embeds an `H×W×3` image into an `(H/p)×(W/p)×d` token grid.
pub fn patch_embed(image: &Tensor, ew: &EmbedWeights, p: usize) -> Result<TokenGrid> {
    let mut g = Graph::new();
    let img = g.leaf(image.clone());
    let kernel = g.leaf(ew.kernel.clone());
    let bias = g.leaf(ew.bias.clone());
    let pos = g.leaf(ew.pos.clone());
    let (gh, gw, rows) = patch_embed_graph(&mut g, img, kernel, bias, pos, p)?;
    TokenGrid::from_rows(gh, gw, g.value(rows).clone())
}

fn layout_windows(tokens: &TokenGrid, layout: &WindowLayout) -> Result<Vec<Vec<usize>>> {
    let tiles = layout.grid_h.is_multiple_of(layout.window_h.max(1))
        && layout.grid_w.is_multiple_of(layout.window_w.max(1));
    if (tokens.h(), tokens.w()) != (layout.grid_h, layout.grid_w) || !tiles {
        return Err(dim_err(format!(
            "layout {}x{} / window {}x{} does not fit tokens {}x{}",
            layout.grid_h,
            layout.grid_w,
            layout.window_h,
            layout.window_w,
            tokens.h(),
            tokens.w()
        )));
    }
    Ok(layout.window_indices())
}

/// Windowed multi-head self-attention over a token grid.
pub fn mhsa(
    tokens: &TokenGrid,
    w: &BlockWeights,
    layout: &WindowLayout,
) -> Result<(TokenGrid, AttentionScores)> {
    w.validate()?;
    check_heads(tokens.d(), HEADS)?;
    let windows = layout_windows(tokens, layout)?;
    let mut g = Graph::new();
    let x = g.leaf(tokens.rows());
    let vars = BlockVars::leaves(&mut g, w);
    let (out, scores) = mhsa_graph(&mut g, x, &vars, &windows, HEADS)?;
    let grid = TokenGrid::from_rows(tokens.h(), tokens.w(), g.value(out).clone())?;
    let per_window = scores
        .iter()
        .map(|heads| heads.iter().map(|&s| g.value(s).clone()).collect())
        .collect();
    Ok((grid, AttentionScores { per_window }))
}

/// One pre-norm encoder block over a token grid.
pub fn encoder_block(
    tokens: &TokenGrid,
    w: &BlockWeights,
    layout: &WindowLayout,
) -> Result<TokenGrid> {
    w.validate()?;
    check_heads(tokens.d(), HEADS)?;
    let windows = layout_windows(tokens, layout)?;
    let mut g = Graph::new();
    let x = g.leaf(tokens.rows());
    let vars = BlockVars::leaves(&mut g, w);
    let (out, _) = block_graph(&mut g, x, &vars, &windows, HEADS)?;
    TokenGrid::from_rows(tokens.h(), tokens.w(), g.value(out).clone())
}
