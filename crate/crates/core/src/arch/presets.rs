use crate::error::{Error, Result};
use crate::window::{parse_strategy, Scale, WindowStrategy};

use super::{ArchConfig, Flags, Mode, StageSpec};

/// UViT variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelSize {
    Tiny,
    Small,
    Base,
}

impl ModelSize {
    pub fn hidden(self) -> usize {
        match self {
            ModelSize::Tiny => 222,
            ModelSize::Small => 288,
            ModelSize::Base => 384,
        }
    }

    pub fn letter(self) -> char {
        match self {
            ModelSize::Tiny => 't',
            ModelSize::Small => 's',
            ModelSize::Base => 'b',
        }
    }
}

pub const PRESET_DEPTH: usize = 18;
pub const PROGRESSIVE_STRATEGY: &str = "[4^-1]x14 -> [2^-1]x2 -> [1]x2";

/// Names accepted by [`preset_by_name`].
pub const PRESET_NAMES: [&str; 9] = [
    "uvit-t-cls",
    "uvit-s-cls",
    "uvit-b-cls",
    "uvit-t-dense",
    "uvit-s-dense",
    "uvit-b-dense",
    "uvit-t-dense-plus",
    "uvit-s-dense-plus",
    "uvit-b-dense-plus",
];

/// Built-in configuration.
///
/// Classification: patch 16 at 224 with global attention and a 1000-way
/// head. Dense: patch 8 at 896 with `[2^-1]x18` windows, or the
/// progressive strategy when `progressive` is set.
pub fn preset(size: ModelSize, mode: Mode, progressive: bool) -> ArchConfig {
    let hidden = size.hidden();
    let (patch, input, windows, name) = match mode {
        Mode::Classification => (
            16,
            224,
            WindowStrategy::constant(Scale::GLOBAL, PRESET_DEPTH),
            format!("uvit-{}-cls", size.letter()),
        ),
        Mode::Dense if progressive => (
            8,
            896,
            parse_strategy(PROGRESSIVE_STRATEGY),
            format!("uvit-{}-dense-plus", size.letter()),
        ),
        Mode::Dense => (
            8,
            896,
            WindowStrategy::constant(Scale::HALF, PRESET_DEPTH),
            format!("uvit-{}-dense", size.letter()),
        ),
    };
    ArchConfig {
        name,
        mode,
        patch,
        input,
        flags: Flags::NONE,
        heads: 6,
        ffn_ratio: 4,
        num_classes: 1000,
        stages: vec![StageSpec {
            depth: PRESET_DEPTH,
            hidden,
            input_scale: patch as u32,
            windows: Some(windows.expect("built-in strategy parses")),
            output_scale: (mode == Mode::Dense).then_some(patch as u32),
        }],
    }
}

/// Looks up a preset such as `uvit-b-cls`, `UViT-T+ dense` or `uvit-s-dense-plus`.
pub fn preset_by_name(name: &str) -> Result<ArchConfig> {
    let norm: String = name
        .to_ascii_lowercase()
        .replace('+', "-plus")
        .replace([' ', '_'], "-")
        .replace("classification", "cls")
        .split('-')
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join("-");
    let unknown = || {
        Error::Config(format!(
            "unknown preset '{name}'; expected one of {}",
            PRESET_NAMES.join(", ")
        ))
    };
    let parts: Vec<&str> = norm.split('-').collect();
    let (size, rest) = match parts.as_slice() {
        ["uvit", s, rest @ ..] => (*s, rest),
        _ => return Err(unknown()),
    };
    let size = match size {
        "t" => ModelSize::Tiny,
        "s" => ModelSize::Small,
        "b" => ModelSize::Base,
        _ => return Err(unknown()),
    };
    let mut rest: Vec<&str> = rest.to_vec();
    let plus = rest.contains(&"plus");
    rest.retain(|s| *s != "plus");
    match rest.as_slice() {
        ["cls"] if !plus => Ok(preset(size, Mode::Classification, false)),
        ["dense"] => Ok(preset(size, Mode::Dense, plus)),
        _ => Err(unknown()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_values() {
        let b = preset(ModelSize::Base, Mode::Classification, false);
        assert_eq!(
            (b.depth(), b.stages[0].hidden, b.patch, b.input),
            (18, 384, 16, 224)
        );
        assert_eq!(
            preset(ModelSize::Small, Mode::Dense, false).stages[0].hidden,
            288
        );
        let t = preset(ModelSize::Tiny, Mode::Dense, true);
        let phases: Vec<_> = t.stages[0]
            .windows
            .as_ref()
            .unwrap()
            .phases()
            .iter()
            .map(|p| (p.scale.denominator(), p.count))
            .collect();
        assert_eq!(phases, vec![(4, 14), (2, 2), (1, 2)]);
        assert_eq!(t.stage_grid(0, t.input), 112);
        for name in PRESET_NAMES {
            let cfg = preset_by_name(name).unwrap();
            assert_eq!(cfg.name, name);
            cfg.validate_input(cfg.input).unwrap();
        }
    }

    #[test]
    fn lenient_names() {
        assert_eq!(
            preset_by_name("UViT-T+ dense").unwrap().name,
            "uvit-t-dense-plus"
        );
        assert_eq!(
            preset_by_name("UViT-B classification").unwrap().name,
            "uvit-b-cls"
        );
        assert!(preset_by_name("uvit-x-cls").is_err());
        assert!(preset_by_name("uvit-b").is_err());
        assert!(preset_by_name("resnet50").is_err());
    }
}
