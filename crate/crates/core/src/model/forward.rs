use std::collections::BTreeMap;

use crate::arch::{check_weights, ArchConfig, Mode, Transition};
use crate::autodiff::{Graph, Var};
use crate::error::{dim_err, Error, Result};
use crate::tensor::Tensor;
use crate::window::plan_windows;

use super::blocks::{block_graph, linear, patch_embed_graph, AttentionScores, BlockVars, LN_EPS};
use super::weights::{BlockWeights, WeightSet};
use super::TokenGrid;

/// A dense feature map at `1/scale` of the input side.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    pub scale: u32,
    pub grid: TokenGrid,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FeatureOutput {
    /// One map, or three when multi-scale taps are enabled.
    Dense(Vec<FeatureMap>),
    Logits(Tensor),
}

impl FeatureOutput {
    /// Output tensors with a short label each.
    pub fn tensors(&self) -> Vec<(String, &Tensor)> {
        match self {
            FeatureOutput::Dense(maps) => maps
                .iter()
                .map(|m| (format!("features_1/{}", m.scale), m.grid.values()))
                .collect(),
            FeatureOutput::Logits(t) => vec![("logits".to_string(), t)],
        }
    }
}

/// Graph nodes produced by [`forward_graph`].
#[derive(Debug)]
pub struct GraphOutputs {
    /// `(scale, grid side, node of (side·side)×d)` per feature tap.
    pub taps: Vec<(u32, usize, Var)>,
    pub logits: Option<Var>,
    /// `[block][window][head]` post-softmax scores.
    pub scores: Vec<Vec<Vec<Var>>>,
    /// Leaf node of every parameter.
    pub params: BTreeMap<String, Var>,
}

/// Output plus the attention scores of every block.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub output: FeatureOutput,
    pub attention: Vec<AttentionScores>,
}

/// Rows of a `side×side` grid grouped as 2×2 patches, `(dy, dx, channel)`
/// within each group.
fn merge_2x2_index(side: usize, d: usize) -> Vec<usize> {
    let half = side / 2;
    let mut index = Vec::with_capacity(side * side * d);
    for y in 0..half {
        for x in 0..half {
            for dy in 0..2 {
                for dx in 0..2 {
                    let t = (2 * y + dy) * side + 2 * x + dx;
                    index.extend(t * d..(t + 1) * d);
                }
            }
        }
    }
    index
}

/// Records the full backbone on `g`. Parameters become leaves.
pub fn forward_graph(
    g: &mut Graph,
    cfg: &ArchConfig,
    ws: &WeightSet,
    image: Var,
) -> Result<GraphOutputs> {
    let input = match g.dims(image) {
        &[h, w, 3] if h == w => h,
        dims => return Err(dim_err(format!("image must be square H×W×3, got {dims:?}"))),
    };
    if input != cfg.input {
        return Err(Error::Config(format!(
            "image side {input} does not match config input {}",
            cfg.input
        )));
    }
    cfg.validate_input(input)?;
    check_weights(cfg, ws)?;

    let mut params = BTreeMap::new();
    let mut param = |g: &mut Graph, name: &str| -> Result<Var> {
        let v = g.leaf(ws.require(name)?.clone());
        params.insert(name.to_string(), v);
        Ok(v)
    };

    let kernel = param(g, "embed.kernel")?;
    let bias = param(g, "embed.bias")?;
    let pos = param(g, "embed.pos")?;
    let (gh, _, mut x) = patch_embed_graph(g, image, kernel, bias, pos, cfg.patch)?;
    let mut side = gh;
    let classification = cfg.mode == Mode::Classification;
    if classification {
        let cls = param(g, "embed.cls")?;
        let cls_pos = param(g, "embed.cls_pos")?;
        let token = g.add(cls, cls_pos)?;
        let n = side * side + 1;
        let d = cfg.stages[0].hidden;
        x = g.concat(&[token, x], &[n, d])?;
    }

    let mut taps = Vec::new();
    let mut scores = Vec::new();
    let mut logits = None;
    let last = cfg.stages.len() - 1;
    for (s, stage) in cfg.stages.iter().enumerate() {
        let d = stage.hidden;
        let layouts: Vec<Vec<Vec<usize>>> = match &stage.windows {
            Some(strategy) => strategy
                .block_scales()
                .map(|scale| {
                    if classification {
                        Ok(vec![(0..side * side + 1).collect()])
                    } else {
                        plan_windows(side, side, scale).map(|l| l.window_indices())
                    }
                })
                .collect::<Result<_>>()?,
            None => Vec::new(),
        };
        for (b, windows) in layouts.iter().enumerate() {
            let prefix = format!("stage{s}.block{b}");
            let mut vars = Vec::with_capacity(12);
            for field in BlockWeights::FIELDS {
                vars.push(param(g, &format!("{prefix}.{field}"))?);
            }
            let block = BlockVars::from_array(vars.try_into().expect("twelve block fields"));
            let (out, block_scores) = block_graph(g, x, &block, windows, cfg.heads)?;
            x = out;
            scores.push(block_scores);
        }

        if classification && s == last {
            let gamma = param(g, &format!("tap{s}.norm.gamma"))?;
            let beta = param(g, &format!("tap{s}.norm.beta"))?;
            let normed = g.layernorm(x, gamma, beta, LN_EPS)?;
            let cls = g.gather(normed, (0..d).collect(), &[1, d])?;
            let w = param(g, "head.weight")?;
            let b = param(g, "head.bias")?;
            let out = linear(g, cls, w, b)?;
            logits = Some(g.reshape(out, &[cfg.num_classes])?);
        }

        if let Some(tap_scale) = stage.output_scale {
            let gamma = param(g, &format!("tap{s}.norm.gamma"))?;
            let beta = param(g, &format!("tap{s}.norm.beta"))?;
            let mut tap = g.layernorm(x, gamma, beta, LN_EPS)?;
            let tap_side = input / tap_scale as usize;
            if tap_side != side {
                let grid = g.reshape(tap, &[side, side, d])?;
                let resized = g.bilinear_resize(grid, tap_side, tap_side)?;
                tap = g.reshape(resized, &[tap_side * tap_side, d])?;
            }
            taps.push((tap_scale, tap_side, tap));
        }

        if let Some(next) = cfg.stages.get(s + 1) {
            match cfg.transition() {
                Transition::BilinearMerge => {
                    let grid = g.reshape(x, &[side, side, d])?;
                    let merged = g.bilinear_resize(grid, side / 2, side / 2)?;
                    side /= 2;
                    x = g.reshape(merged, &[side * side, d])?;
                }
                Transition::StridedProjection => {
                    let grouped =
                        g.gather(x, merge_2x2_index(side, d), &[side * side / 4, 4 * d])?;
                    side /= 2;
                    let w = param(g, &format!("transition{s}.weight"))?;
                    let b = param(g, &format!("transition{s}.bias"))?;
                    x = linear(g, grouped, w, b)?;
                }
                Transition::WidthProjection => {
                    let w = param(g, &format!("transition{s}.weight"))?;
                    let b = param(g, &format!("transition{s}.bias"))?;
                    x = linear(g, x, w, b)?;
                }
                Transition::None => {}
            }
            debug_assert_eq!(g.dims(x), &[side * side, next.hidden]);
        }
    }

    Ok(GraphOutputs {
        taps,
        logits,
        scores,
        params,
    })
}

fn run(cfg: &ArchConfig, ws: &WeightSet, image: &Tensor) -> Result<(Graph, GraphOutputs)> {
    let mut g = Graph::new();
    let img = g.leaf(image.clone());
    let out = forward_graph(&mut g, cfg, ws, img)?;
    Ok((g, out))
}

fn collect_output(g: &Graph, out: &GraphOutputs) -> Result<FeatureOutput> {
    if let Some(l) = out.logits {
        return Ok(FeatureOutput::Logits(g.value(l).clone()));
    }
    let maps = out
        .taps
        .iter()
        .map(|&(scale, side, v)| {
            Ok(FeatureMap {
                scale,
                grid: TokenGrid::from_rows(side, side, g.value(v).clone())?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(FeatureOutput::Dense(maps))
}

/// Runs the backbone on an `input×input×3` image.
pub fn forward(cfg: &ArchConfig, ws: &WeightSet, image: &Tensor) -> Result<FeatureOutput> {
    let (g, out) = run(cfg, ws, image)?;
    collect_output(&g, &out)
}

/// Like [`forward`], also returning every block's attention scores.
pub fn forward_traced(cfg: &ArchConfig, ws: &WeightSet, image: &Tensor) -> Result<ForwardTrace> {
    let (g, out) = run(cfg, ws, image)?;
    let attention = out
        .scores
        .iter()
        .map(|block| AttentionScores {
            per_window: block
                .iter()
                .map(|heads| heads.iter().map(|&s| g.value(s).clone()).collect())
                .collect(),
        })
        .collect();
    Ok(ForwardTrace {
        output: collect_output(&g, &out)?,
        attention,
    })
}
