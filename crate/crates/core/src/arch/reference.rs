//! Published reference numbers for the built-in architecture families.
//!
//! Detection rows (window ablation, ablation families, scaling grid) are
//! end-to-end totals that include a Cascade Mask R-CNN / FPN head, so only
//! differences between rows are comparable with backbone-only counts.

use crate::error::Result;
use crate::window::Scale;

use super::{ablation_config, enumerate_scaling, AblationSpec, ArchConfig, Flags};

/// Classification variants: (name, depth, hidden, params in M, GFLOPs at 224).
pub const VARIANTS: [(&str, usize, usize, f64, f64); 3] = [
    ("uvit-t-cls", 18, 222, 13.5, 2.5),
    ("uvit-s-cls", 18, 288, 21.7, 4.0),
    ("uvit-b-cls", 18, 384, 32.8, 6.9),
];

/// Window strategies for UViT-B at 896 with end-to-end detector GFLOPs.
pub const WINDOW_ABLATION: [(&str, f64); 6] = [
    ("[1]x18", 2961.9),
    ("[2^-1]x18", 1298.7),
    (
        "[16^-1]x4 -> [8^-1]x4 -> [4^-1]x4 -> [2^-1]x4 -> [1]x2",
        1154.3,
    ),
    ("[8^-1]x9 -> [4^-1]x4 -> [2^-1]x3 -> [1]x2", 1131.2),
    ("[4^-1]x14 -> [2^-1]x2 -> [1]x2", 1160.1),
    ("[4^-1]x6 -> [2^-1]x12", 1160.1),
];

/// Strategy used for the depth-32 model in the semantic segmentation study.
pub const DEEP_STRATEGY: &str = "[2^-1]x28 -> [1]x4";

/// One ablation-family row.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub flags: Flags,
    pub depths: Vec<usize>,
    /// Stage-1 hidden size.
    pub hidden: usize,
    /// Same window scale in every stage.
    pub window: u32,
    pub params_m: f64,
    pub gflops: f64,
}

impl AblationRow {
    pub fn config(&self) -> Result<ArchConfig> {
        ablation_config(&AblationSpec::new(
            self.flags,
            &self.depths,
            &[self.hidden],
            &[Scale::reciprocal(self.window)?],
        ))
    }
}

/// All ablation-family rows (640×640 input, patch 8).
pub fn ablation_rows() -> Vec<AblationRow> {
    let f = |sd, mf, doubled| Flags { sd, mf, doubled };
    let mut rows = Vec::new();
    let mut push =
        |flags: Flags, depths: &[usize], hidden: usize, window: u32, params_m: f64, gflops: f64| {
            rows.push(AblationRow {
                flags,
                depths: depths.to_vec(),
                hidden,
                window,
                params_m,
                gflops,
            })
        };

    for (w, g) in [(16, 534.1), (8, 540.9), (4, 567.9), (2, 676.2), (1, 1109.1)] {
        push(Flags::NONE, &[18], 384, w, 72.1, g);
    }
    for (d, g) in [
        ([6, 6, 6], 607.1),
        ([8, 5, 5], 688.28),
        ([10, 4, 4], 769.47),
        ([12, 3, 3], 850.68),
        ([14, 2, 2], 931.88),
    ] {
        push(f(true, false, false), &d, 384, 1, 72.1, g);
    }
    for (w, g) in [
        (16, 534.3),
        (8, 541.03),
        (4, 568.09),
        (2, 676.33),
        (1, 1109.3),
    ] {
        push(f(false, true, false), &[6, 6, 6], 384, w, 72.1, g);
    }
    for (w, g) in [(16, 558.4), (8, 561.5), (4, 587.7), (2, 692.2), (1, 1110.2)] {
        push(f(false, false, true), &[6, 6, 6], 152, w, 73.8, g);
    }
    for (d, g) in [
        ([2, 8, 8], 459.7),
        ([4, 7, 7], 540.9),
        ([6, 6, 6], 622.1),
        ([8, 5, 5], 703.3),
        ([10, 4, 4], 784.5),
        ([12, 3, 3], 865.7),
        ([15, 2, 1], 989.5),
    ] {
        push(f(true, true, false), &d, 384, 1, 72.1, g);
    }
    for (d, h, p, g) in [
        ([16, 1, 9], 128, 70.2, 529.1),
        ([16, 1, 5], 160, 69.3, 581.7),
        ([16, 1, 3], 192, 69.3, 637.4),
        ([16, 1, 2], 224, 71.4, 696.6),
        ([16, 1, 1], 256, 69.2, 756.5),
    ] {
        push(f(true, false, true), &d, h, 1, p, g);
    }
    for (w, g) in [(16, 566.3), (8, 569.5), (4, 595.6), (2, 700.1)] {
        push(f(false, true, true), &[6, 6, 6], 152, w, 73.8, g);
    }
    for (d, h, p, g) in [
        ([16, 1, 9], 128, 73.3, 552.1),
        ([16, 1, 5], 160, 72.4, 604.9),
        ([16, 1, 3], 192, 72.4, 660.7),
        ([16, 1, 2], 224, 74.5, 719.9),
        ([16, 1, 1], 256, 72.4, 779.9),
        ([28, 1, 1], 224, 72.1, 992.3),
    ] {
        push(f(true, true, true), &d, h, 1, p, g);
    }
    rows
}

/// Compound-scaling grid: (input, depth, width, params in M, GFLOPs).
pub const SCALING_ROWS: [(usize, usize, usize, f64, f64); 45] = [
    (640, 18, 384, 72.1, 676.2),
    (640, 18, 432, 80.9, 748.3),
    (640, 18, 462, 86.9, 796.6),
    (640, 18, 492, 93.3, 847.4),
    (640, 18, 564, 110.2, 979.4),
    (768, 18, 288, 58.2, 725.9),
    (768, 18, 306, 60.7, 761.1),
    (768, 18, 330, 64.3, 810.0),
    (768, 18, 384, 73.1, 928.5),
    (768, 18, 432, 82.1, 1043.5),
    (768, 18, 462, 88.2, 1120.1),
    (896, 18, 186, 47.4, 710.2),
    (896, 18, 222, 51.0, 801.4),
    (896, 18, 246, 53.8, 866.1),
    (896, 18, 288, 59.2, 986.8),
    (896, 18, 330, 65.4, 1117.1),
    (896, 18, 384, 74.4, 1298.7),
    (1024, 18, 120, 42.6, 710.3),
    (1024, 18, 132, 43.5, 750.1),
    (1024, 18, 144, 44.4, 791.0),
    (1024, 18, 162, 45.8, 854.3),
    (1024, 18, 198, 49.3, 987.6),
    (1024, 18, 246, 54.7, 1179.7),
    (1024, 18, 288, 60.3, 1361.2),
    (896, 12, 276, 52.1, 748.4),
    (896, 12, 300, 54.4, 796.2),
    (896, 12, 324, 56.9, 846.2),
    (896, 12, 360, 60.9, 925.0),
    (896, 12, 390, 64.5, 994.2),
    (896, 24, 156, 46.5, 739.0),
    (896, 24, 180, 49.2, 813.8),
    (896, 24, 192, 50.6, 852.7),
    (896, 24, 258, 60.1, 1085.4),
    (896, 24, 294, 66.3, 1225.7),
    (896, 32, 120, 44.6, 732.5),
    (896, 32, 132, 45.9, 777.4),
    (896, 32, 144, 47.3, 823.8),
    (896, 32, 180, 52.3, 971.1),
    (896, 32, 240, 62.8, 1244.4),
    (896, 40, 96, 43.2, 723.2),
    (896, 40, 102, 43.8, 749.3),
    (896, 40, 114, 45.2, 802.9),
    (896, 40, 126, 46.8, 858.2),
    (896, 40, 150, 50.3, 974.0),
    (896, 40, 156, 51.2, 1004.0),
];

/// Configs for [`SCALING_ROWS`], in row order.
pub fn scaling_configs() -> Result<Vec<ArchConfig>> {
    SCALING_ROWS
        .iter()
        .map(|&(input, depth, width, _, _)| {
            enumerate_scaling(&[depth], &[input], &[width]).map(|mut v| v.remove(0))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::window::parse_strategy;

    #[test]
    fn every_ablation_row_builds() {
        let rows = ablation_rows();
        assert_eq!(rows.len(), 5 + 5 + 5 + 5 + 7 + 5 + 4 + 6);
        for row in &rows {
            let cfg = row.config().unwrap();
            cfg.validate_input(640).unwrap();
        }
    }

    #[test]
    fn scaling_rows_build() {
        let cfgs = scaling_configs().unwrap();
        assert_eq!(cfgs.len(), SCALING_ROWS.len());
        for c in &cfgs {
            c.validate_input(c.input).unwrap();
        }
    }

    #[test]
    fn window_strategies_cover_eighteen_blocks() {
        for (s, _) in WINDOW_ABLATION {
            assert_eq!(parse_strategy(s).unwrap().depth(), 18);
        }
    }
}
