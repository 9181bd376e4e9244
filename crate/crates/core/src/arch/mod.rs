//! Architecture descriptions: presets, the SD/MF/2× ablation families,
//! the compound-scaling grid and deterministic weight initialization.

mod ablation;
mod init;
mod presets;
pub mod reference;

pub use ablation::{ablation_config, enumerate_scaling, AblationSpec};
pub(crate) use init::check_weights;
pub use init::{init_weights, synthetic_image};
pub use presets::{preset, preset_by_name, ModelSize, PRESET_NAMES};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::window::{plan_windows, WindowStrategy};

/// Whether the backbone ends in a classifier or emits dense feature maps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Classification,
    Dense,
}

/// The three multi-stage design techniques.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Flags {
    /// Spatial downsampling between stages.
    #[serde(default)]
    pub sd: bool,
    /// Multi-scale feature taps.
    #[serde(default)]
    pub mf: bool,
    /// Doubled channels between stages.
    #[serde(default)]
    pub doubled: bool,
}

impl Flags {
    pub const NONE: Flags = Flags {
        sd: false,
        mf: false,
        doubled: false,
    };

    pub fn any(self) -> bool {
        self.sd || self.mf || self.doubled
    }

    /// All eight combinations, in `(sd, mf, doubled)` binary order.
    pub fn all() -> [Flags; 8] {
        std::array::from_fn(|i| Flags {
            sd: i & 4 != 0,
            mf: i & 2 != 0,
            doubled: i & 1 != 0,
        })
    }

    /// Short label such as `SD+MF` or `none`.
    pub fn label(self) -> String {
        let parts: Vec<&str> = [(self.sd, "SD"), (self.mf, "MF"), (self.doubled, "2x")]
            .into_iter()
            .filter_map(|(on, name)| on.then_some(name))
            .collect();
        if parts.is_empty() {
            "none".into()
        } else {
            parts.join("+")
        }
    }

    /// How tokens move from one stage to the next.
    pub fn transition(self) -> Transition {
        match (self.sd, self.doubled) {
            (true, true) => Transition::StridedProjection,
            (true, false) => Transition::BilinearMerge,
            (false, true) => Transition::WidthProjection,
            (false, false) => Transition::None,
        }
    }
}

/// Inter-stage token transform.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transition {
    /// 2×2 stride-2 learned projection (`4·d_in → d_out`).
    StridedProjection,
    /// Parameter-free bilinear downsampling by 2.
    BilinearMerge,
    /// Per-token linear `d_in → d_out`.
    WidthProjection,
    None,
}

/// One stage of blocks sharing resolution and width.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSpec {
    pub depth: usize,
    pub hidden: usize,
    /// Token grid is `1/input_scale` of the image side.
    pub input_scale: u32,
    /// Absent only for empty stages.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub windows: Option<WindowStrategy>,
    /// Feature tap at `1/output_scale` of the image side, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_scale: Option<u32>,
}

/// Complete backbone description.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub name: String,
    pub mode: Mode,
    pub patch: usize,
    /// Square input side length in pixels.
    pub input: usize,
    #[serde(default)]
    pub flags: Flags,
    #[serde(default = "default_heads")]
    pub heads: usize,
    #[serde(default = "default_ffn_ratio")]
    pub ffn_ratio: usize,
    #[serde(default = "default_classes")]
    pub num_classes: usize,
    pub stages: Vec<StageSpec>,
}

fn default_heads() -> usize {
    6
}

fn default_ffn_ratio() -> usize {
    4
}

fn default_classes() -> usize {
    1000
}

impl ArchConfig {
    pub fn depth(&self) -> usize {
        self.stages.iter().map(|s| s.depth).sum()
    }

    pub fn transition(&self) -> Transition {
        self.flags.transition()
    }

    /// Token grid side of stage `s` for a square `input`.
    pub fn stage_grid(&self, s: usize, input: usize) -> usize {
        input / self.stages[s].input_scale as usize
    }

    /// Replaces the input size.
    pub fn with_input(mut self, input: usize) -> Self {
        self.input = input;
        self
    }

    /// Strategy text of a single-stage config, or per-stage strategies joined by `|`.
    pub fn strategy_label(&self) -> String {
        self.stages
            .iter()
            .map(|s| {
                s.windows
                    .as_ref()
                    .map_or_else(String::new, |w| w.to_string())
            })
            .collect::<Vec<_>>()
            .join(" | ")
    }

    /// Structural checks independent of the input size.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(format!("{}: {msg}", self.name)));
        if self.heads == 0 {
            return fail("heads must be >= 1".into());
        }
        if self.ffn_ratio != 4 {
            return fail(format!("ffn ratio must be 4, got {}", self.ffn_ratio));
        }
        if self.patch == 0 {
            return fail("patch size must be >= 1".into());
        }
        let want_stages = if self.flags.any() { 3 } else { 1 };
        if self.stages.len() != want_stages {
            return fail(format!(
                "flags {} need {want_stages} stage(s), got {}",
                self.flags.label(),
                self.stages.len()
            ));
        }
        if self.mode == Mode::Classification && self.flags.any() {
            return fail("classification mode supports only single-stage configs".into());
        }
        for (i, st) in self.stages.iter().enumerate() {
            if st.hidden == 0 || st.hidden % self.heads != 0 {
                return fail(format!(
                    "stage {i} hidden {} is not divisible by {} heads",
                    st.hidden, self.heads
                ));
            }
            match &st.windows {
                Some(ws) if ws.depth() != st.depth => {
                    return fail(format!(
                        "stage {i} strategy '{ws}' covers {} blocks, stage depth is {}",
                        ws.depth(),
                        st.depth
                    ))
                }
                None if st.depth > 0 => {
                    return fail(format!("stage {i} has blocks but no window strategy"))
                }
                Some(ws)
                    if self.mode == Mode::Classification
                        && ws.phases().iter().any(|p| p.scale.denominator() != 1) =>
                {
                    return fail("classification mode attends globally; windows must be [1]".into())
                }
                _ => {}
            }
            let factor = 1u32 << i.min(31);
            let expect_scale = self.patch as u32 * if self.flags.sd { factor } else { 1 };
            if st.input_scale != expect_scale {
                return fail(format!(
                    "stage {i} input scale 1/{} should be 1/{expect_scale}",
                    st.input_scale
                ));
            }
            if i > 0 {
                let prev = self.stages[i - 1].hidden;
                let expect = if self.flags.doubled { prev * 2 } else { prev };
                if st.hidden != expect {
                    return fail(format!("stage {i} hidden {} should be {expect}", st.hidden));
                }
            }
            let last = i + 1 == self.stages.len();
            let expect_tap = if self.flags.mf {
                Some(self.patch as u32 * factor)
            } else if last {
                Some(st.input_scale)
            } else {
                None
            };
            if self.mode == Mode::Dense && st.output_scale != expect_tap {
                return fail(format!(
                    "stage {i} output tap {:?} should be {expect_tap:?}",
                    st.output_scale
                ));
            }
        }
        Ok(())
    }

    /// Checks that `input` is compatible with the patch size, stage
    /// resolutions and every window scale.
    pub fn validate_input(&self, input: usize) -> Result<()> {
        self.validate()?;
        for (i, st) in self.stages.iter().enumerate() {
            let k = st.input_scale as usize;
            if !input.is_multiple_of(k) || input < k {
                return Err(Error::Divisibility(format!(
                    "input {input} is not divisible by stage {i} scale 1/{k}"
                )));
            }
            let grid = input / k;
            if let Some(ws) = &st.windows {
                for phase in ws.phases() {
                    plan_windows(grid, grid, phase.scale)?;
                }
            }
            if let Some(tap) = st.output_scale {
                if !input.is_multiple_of(tap as usize) {
                    return Err(Error::Divisibility(format!(
                        "input {input} is not divisible by tap scale 1/{tap}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ArchConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}
