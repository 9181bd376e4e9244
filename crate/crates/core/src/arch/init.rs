use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::{BlockWeights, WeightSet};
use crate::tensor::Tensor;

use super::{ArchConfig, Mode, Transition};

const INIT_STD: f64 = 0.02;

struct TruncNormal {
    rng: ChaCha8Rng,
    dist: Normal<f64>,
}

impl TruncNormal {
    fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            dist: Normal::new(0.0, INIT_STD).expect("valid std"),
        }
    }

    /// Samples redrawn until they fall within two standard deviations.
    fn tensor(&mut self, dims: &[usize]) -> Tensor {
        Tensor::from_fn(dims, |_| loop {
            let v = self.dist.sample(&mut self.rng);
            if v.abs() <= 2.0 * INIT_STD {
                break v;
            }
        })
    }
}

/// How a parameter is initialized.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum InitKind {
    TruncNormal,
    Zeros,
    Ones,
}

/// Name, dims and initializer of every parameter `cfg` needs, in
/// initialization order.
pub(crate) fn parameter_layout(cfg: &ArchConfig) -> Vec<(String, Vec<usize>, InitKind)> {
    use InitKind::*;
    let mut out = Vec::new();
    let mut add = |name: String, dims: Vec<usize>, kind: InitKind| out.push((name, dims, kind));
    let p = cfg.patch;
    let d0 = cfg.stages[0].hidden;
    let grid = cfg.stage_grid(0, cfg.input);

    add("embed.kernel".into(), vec![p, p, 3, d0], TruncNormal);
    add("embed.bias".into(), vec![d0], Zeros);
    add("embed.pos".into(), vec![grid, grid, d0], TruncNormal);
    if cfg.mode == Mode::Classification {
        add("embed.cls".into(), vec![d0], TruncNormal);
        add("embed.cls_pos".into(), vec![d0], TruncNormal);
    }

    let last = cfg.stages.len() - 1;
    for (s, stage) in cfg.stages.iter().enumerate() {
        let d = stage.hidden;
        for b in 0..stage.depth {
            for (field, dims) in BlockWeights::FIELDS.iter().zip(BlockWeights::shapes(d)) {
                let kind = if field.ends_with("weight") {
                    TruncNormal
                } else if field.ends_with("gamma") {
                    Ones
                } else {
                    Zeros
                };
                add(format!("stage{s}.block{b}.{field}"), dims, kind);
            }
        }
        if let Some(next) = cfg.stages.get(s + 1) {
            let fan_in = match cfg.transition() {
                Transition::StridedProjection => Some(4 * d),
                Transition::WidthProjection => Some(d),
                Transition::BilinearMerge | Transition::None => None,
            };
            if let Some(fan_in) = fan_in {
                add(
                    format!("transition{s}.weight"),
                    vec![fan_in, next.hidden],
                    TruncNormal,
                );
                add(format!("transition{s}.bias"), vec![next.hidden], Zeros);
            }
        }
        if stage.output_scale.is_some() || (cfg.mode == Mode::Classification && s == last) {
            add(format!("tap{s}.norm.gamma"), vec![d], Ones);
            add(format!("tap{s}.norm.beta"), vec![d], Zeros);
        }
    }

    if cfg.mode == Mode::Classification {
        let d = cfg.stages[last].hidden;
        add("head.weight".into(), vec![d, cfg.num_classes], TruncNormal);
        add("head.bias".into(), vec![cfg.num_classes], Zeros);
    }
    out
}

/// Deterministic parameters for `cfg`: truncated normal (σ = 0.02) for
/// projections and embeddings, zeros for biases and betas, ones for gammas.
pub fn init_weights(cfg: &ArchConfig, seed: u64) -> Result<WeightSet> {
    cfg.validate_input(cfg.input)?;
    let mut rng = TruncNormal::new(seed);
    let mut set = WeightSet::new();
    for (name, dims, kind) in parameter_layout(cfg) {
        let t = match kind {
            InitKind::TruncNormal => rng.tensor(&dims),
            InitKind::Zeros => Tensor::zeros(&dims),
            InitKind::Ones => Tensor::full(&dims, 1.0),
        };
        set.insert(name, t);
    }
    Ok(set)
}

/// Seeded `side×side×3` image with pixels uniform in `[-1, 1)`.
///
/// Uses a stream separate from [`init_weights`] so the same seed can drive
/// both.
pub fn synthetic_image(side: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    Tensor::from_fn(&[side, side, 3], |_| rng.random_range(-1.0..1.0))
}

/// Checks that `ws` holds exactly the parameters `cfg` needs.
pub(crate) fn check_weights(cfg: &ArchConfig, ws: &WeightSet) -> Result<()> {
    let layout = parameter_layout(cfg);
    for (name, dims, _) in &layout {
        let t = ws.get(name).ok_or_else(|| {
            Error::Config(format!("weights lack '{name}' required by {}", cfg.name))
        })?;
        if t.dims() != dims.as_slice() {
            return Err(Error::Config(format!(
                "weight '{name}' has dims {:?}, config {} needs {dims:?}",
                t.dims(),
                cfg.name
            )));
        }
    }
    if ws.len() != layout.len() {
        let extra = ws
            .names()
            .find(|n| !layout.iter().any(|(name, _, _)| name == n))
            .unwrap_or("?");
        return Err(Error::Config(format!(
            "unexpected weight '{extra}' for {}",
            cfg.name
        )));
    }
    Ok(())
}
