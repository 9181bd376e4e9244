use crate::error::{Error, Result};
use crate::window::{Scale, WindowStrategy};

use super::{ArchConfig, Flags, Mode, StageSpec};

/// Inputs for one SD/MF/2× ablation model.
///
/// `hidden` and `windows` may hold one value (expanded across stages, with
/// doubling under 2×) or one value per stage.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationSpec {
    pub flags: Flags,
    pub depths: Vec<usize>,
    pub hidden: Vec<usize>,
    pub windows: Vec<Scale>,
    pub input: usize,
    pub patch: usize,
}

impl AblationSpec {
    /// Dense, patch 8 at 640×640.
    pub fn new(flags: Flags, depths: &[usize], hidden: &[usize], windows: &[Scale]) -> Self {
        Self {
            flags,
            depths: depths.to_vec(),
            hidden: hidden.to_vec(),
            windows: windows.to_vec(),
            input: 640,
            patch: 8,
        }
    }
}

fn per_stage<T: Copy>(
    values: &[T],
    stages: usize,
    what: &str,
    expand: impl Fn(T, usize) -> T,
) -> Result<Vec<T>> {
    match values.len() {
        1 => Ok((0..stages).map(|i| expand(values[0], i)).collect()),
        n if n == stages => Ok(values.to_vec()),
        n => Err(Error::Config(format!(
            "{what}: expected 1 or {stages} values, got {n}"
        ))),
    }
}

/// Builds the dense config for an ablation family member.
pub fn ablation_config(spec: &AblationSpec) -> Result<ArchConfig> {
    let flags = spec.flags;
    let stages = if flags.any() { 3 } else { 1 };
    if spec.depths.len() != stages {
        return Err(Error::Config(format!(
            "flags {} need a {stages}-way depth split, got {:?}",
            flags.label(),
            spec.depths
        )));
    }
    let hidden = per_stage(&spec.hidden, stages, "hidden", |h, i| {
        if flags.doubled {
            h << i
        } else {
            h
        }
    })?;
    // Some family widths (128, 152, ...) are not multiples of six.
    let heads = if hidden.iter().all(|h| h % 6 == 0) {
        6
    } else {
        8
    };
    let windows = per_stage(&spec.windows, stages, "windows", |w, _| w)?;
    let patch = spec.patch as u32;

    let specs = (0..stages)
        .map(|i| {
            let factor = 1u32 << i;
            let input_scale = if flags.sd { patch * factor } else { patch };
            let last = i + 1 == stages;
            let output_scale = if flags.mf {
                Some(patch * factor)
            } else if last {
                Some(input_scale)
            } else {
                None
            };
            let depth = spec.depths[i];
            let windows = (depth > 0)
                .then(|| WindowStrategy::constant(windows[i], depth))
                .transpose()?;
            Ok(StageSpec {
                depth,
                hidden: hidden[i],
                input_scale,
                windows,
                output_scale,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let depths: Vec<String> = spec.depths.iter().map(ToString::to_string).collect();
    let cfg = ArchConfig {
        name: format!(
            "ablation-{}-d{}-w{}-h{}",
            flags.label().to_lowercase(),
            depths.join("."),
            windows
                .iter()
                .map(|w| w.denominator().to_string())
                .collect::<Vec<_>>()
                .join("."),
            hidden[0]
        ),
        mode: Mode::Dense,
        patch: spec.patch,
        input: spec.input,
        flags,
        heads,
        ffn_ratio: 4,
        num_classes: 1000,
        stages: specs,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Single-stage dense configs over the Cartesian product of input sizes,
/// depths and widths, all with `1/2`-scale windows and patch 8.
/// Ordered by input, then depth, then width.
pub fn enumerate_scaling(
    depths: &[usize],
    inputs: &[usize],
    widths: &[usize],
) -> Result<Vec<ArchConfig>> {
    if let Some(w) = widths.iter().find(|&&w| w == 0 || w % 6 != 0) {
        return Err(Error::Config(format!(
            "width {w} is not divisible by 6 heads"
        )));
    }
    let mut out = Vec::with_capacity(depths.len() * inputs.len() * widths.len());
    for &input in inputs {
        for &depth in depths {
            for &width in widths {
                let cfg = ArchConfig {
                    name: format!("scaling-{input}-d{depth}-w{width}"),
                    mode: Mode::Dense,
                    patch: 8,
                    input,
                    flags: Flags::NONE,
                    heads: 6,
                    ffn_ratio: 4,
                    num_classes: 1000,
                    stages: vec![StageSpec {
                        depth,
                        hidden: width,
                        input_scale: 8,
                        windows: (depth > 0)
                            .then(|| WindowStrategy::constant(Scale::HALF, depth))
                            .transpose()?,
                        output_scale: Some(8),
                    }],
                };
                cfg.validate()?;
                out.push(cfg);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::Transition;

    fn s(k: u32) -> Scale {
        Scale::reciprocal(k).unwrap()
    }

    #[test]
    fn sd_family() {
        let flags = Flags {
            sd: true,
            ..Flags::NONE
        };
        let cfg = ablation_config(&AblationSpec::new(flags, &[6, 6, 6], &[384], &[s(1)])).unwrap();
        let scales: Vec<_> = cfg.stages.iter().map(|st| st.input_scale).collect();
        assert_eq!(scales, vec![8, 16, 32]);
        assert!(cfg.stages.iter().all(|st| st.hidden == 384));
        assert_eq!(cfg.transition(), Transition::BilinearMerge);
        assert_eq!(cfg.stages[2].output_scale, Some(32));
        assert_eq!(cfg.stages[0].output_scale, None);
    }

    #[test]
    fn doubled_family() {
        let flags = Flags {
            doubled: true,
            ..Flags::NONE
        };
        let cfg = ablation_config(&AblationSpec::new(
            flags,
            &[6, 6, 6],
            &[152, 304, 608],
            &[s(16)],
        ))
        .unwrap();
        assert!(cfg.stages.iter().all(|st| st.input_scale == 8));
        assert_eq!(cfg.transition(), Transition::WidthProjection);
        let expanded =
            ablation_config(&AblationSpec::new(flags, &[6, 6, 6], &[152], &[s(16)])).unwrap();
        assert_eq!(expanded.stages, cfg.stages);
        assert!(ablation_config(&AblationSpec::new(
            flags,
            &[6, 6, 6],
            &[152, 152, 152],
            &[s(16)]
        ))
        .is_err());
    }

    #[test]
    fn vanilla_family() {
        let cfg = ablation_config(&AblationSpec::new(Flags::NONE, &[18], &[384], &[s(4)])).unwrap();
        assert_eq!(cfg.stages.len(), 1);
        assert_eq!(cfg.stages[0].output_scale, Some(8));
        assert!(
            ablation_config(&AblationSpec::new(Flags::NONE, &[6, 6, 6], &[384], &[s(4)])).is_err()
        );
        let mf = Flags {
            mf: true,
            ..Flags::NONE
        };
        assert!(ablation_config(&AblationSpec::new(mf, &[18], &[384], &[s(4)])).is_err());
    }

    #[test]
    fn scaling_grid() {
        let cfgs = enumerate_scaling(&[18], &[896], &[222, 288, 384]).unwrap();
        assert_eq!(cfgs.len(), 3);
        assert_eq!(
            cfgs[2].stages[0].windows.as_ref().unwrap().to_string(),
            "[2^-1]x18"
        );
        let row = enumerate_scaling(&[12], &[896], &[276]).unwrap();
        assert_eq!(
            (row[0].input, row[0].depth(), row[0].stages[0].hidden),
            (896, 12, 276)
        );
        assert!(matches!(
            enumerate_scaling(&[18], &[896], &[100]),
            Err(Error::Config(_))
        ));
        assert_eq!(
            enumerate_scaling(&[12, 18], &[640, 768, 896], &[96, 192])
                .unwrap()
                .len(),
            12
        );
    }
}
