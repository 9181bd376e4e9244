//! Analytic parameter and multiply-accumulate counts.
//!
//! One multiply-accumulate counts as one FLOP. Softmax, layer norm, GELU and
//! bias additions are not counted.

use std::io::Write;

use serde::Serialize;

use crate::arch::{ArchConfig, Mode, Transition};
use crate::error::{Error, Result};
use crate::window::plan_windows;

/// Counts split by component.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Breakdown {
    /// Patch projection, position table and class token.
    pub embedding: u64,
    /// Block projections and FFNs (and block norms, for parameters).
    pub block_linear: u64,
    /// Score and weighted-sum products inside attention windows.
    pub block_attention: u64,
    pub transitions: u64,
    /// Output norms and the classifier.
    pub head: u64,
}

impl Breakdown {
    pub fn total(&self) -> u64 {
        self.embedding + self.block_linear + self.block_attention + self.transitions + self.head
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CostBreakdown {
    pub params: Breakdown,
    pub macs: Breakdown,
}

/// Parameter and MAC totals with their breakdown.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CostReport {
    pub params: u64,
    pub macs: u64,
    pub breakdown: CostBreakdown,
}

impl CostReport {
    fn from_parts(params: Breakdown, macs: Breakdown) -> Self {
        Self {
            params: params.total(),
            macs: macs.total(),
            breakdown: CostBreakdown { params, macs },
        }
    }

    pub fn gmacs(&self) -> f64 {
        self.macs as f64 / 1e9
    }

    pub fn params_m(&self) -> f64 {
        self.params as f64 / 1e6
    }
}

fn param_breakdown(cfg: &ArchConfig) -> Breakdown {
    let mut b = Breakdown::default();
    let p = cfg.patch as u64;
    let d0 = cfg.stages[0].hidden as u64;
    let grid = cfg.stage_grid(0, cfg.input) as u64;
    let classification = cfg.mode == Mode::Classification;

    b.embedding = p * p * 3 * d0 + d0 + grid * grid * d0;
    if classification {
        b.embedding += 2 * d0;
    }
    let last = cfg.stages.len() - 1;
    for (s, stage) in cfg.stages.iter().enumerate() {
        let d = stage.hidden as u64;
        b.block_linear += stage.depth as u64 * (12 * d * d + 13 * d);
        if let Some(next) = cfg.stages.get(s + 1) {
            let out = next.hidden as u64;
            b.transitions += match cfg.transition() {
                Transition::StridedProjection => 4 * d * out + out,
                Transition::WidthProjection => d * out + out,
                Transition::BilinearMerge | Transition::None => 0,
            };
        }
        if stage.output_scale.is_some() || (classification && s == last) {
            b.head += 2 * d;
        }
    }
    if classification {
        let d = cfg.stages[last].hidden as u64;
        let c = cfg.num_classes as u64;
        b.head += d * c + c;
    }
    b
}

/// Parameter count. The MAC fields of the report are zero.
pub fn count_params(cfg: &ArchConfig) -> CostReport {
    CostReport::from_parts(param_breakdown(cfg), Breakdown::default())
}

/// Parameter and MAC counts for a square `input`.
pub fn count_flops(cfg: &ArchConfig, input: usize) -> Result<CostReport> {
    cfg.validate_input(input)?;
    let mut b = Breakdown::default();
    let classification = cfg.mode == Mode::Classification;
    let p = cfg.patch as u64;
    let extra = u64::from(classification);

    let grid0 = cfg.stage_grid(0, input);
    let patches = (grid0 * grid0) as u64;
    b.embedding = patches * p * p * 3 * cfg.stages[0].hidden as u64;

    for (s, stage) in cfg.stages.iter().enumerate() {
        let d = stage.hidden as u64;
        let side = cfg.stage_grid(s, input);
        let n = (side * side) as u64 + extra;
        if let Some(ws) = &stage.windows {
            for scale in ws.block_scales() {
                b.block_linear += n * 12 * d * d;
                let sq: u64 = if classification {
                    n * n
                } else {
                    let layout = plan_windows(side, side, scale)?;
                    layout.num_windows() as u64 * (layout.window_tokens() as u64).pow(2)
                };
                b.block_attention += 2 * d * sq;
            }
        }
        if let Some(next) = cfg.stages.get(s + 1) {
            let out = next.hidden as u64;
            b.transitions += match cfg.transition() {
                Transition::StridedProjection => (n / 4) * 4 * d * out,
                Transition::WidthProjection => n * d * out,
                Transition::BilinearMerge | Transition::None => 0,
            };
        }
    }
    if classification {
        b.head = cfg.stages.last().expect("validated").hidden as u64 * cfg.num_classes as u64;
    }
    Ok(CostReport::from_parts(param_breakdown(cfg), b))
}

/// Constant head cost reconciling backbone counts with end-to-end totals.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OffsetFit {
    /// GMACs added to every row.
    pub offset: f64,
    /// `(backbone + offset - total) / total` per row.
    pub residuals: Vec<f64>,
}

impl OffsetFit {
    pub fn max_abs_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// Least-squares constant offset (clamped at zero) over `(config, input,
/// total GMACs)` rows.
pub fn fit_head_offset(rows: &[(ArchConfig, usize, f64)]) -> Result<OffsetFit> {
    if rows.is_empty() {
        return Err(Error::Contract("offset fit needs at least one row".into()));
    }
    let backbone = rows
        .iter()
        .map(|(cfg, input, _)| count_flops(cfg, *input).map(|r| r.gmacs()))
        .collect::<Result<Vec<_>>>()?;
    let gap: f64 = rows.iter().zip(&backbone).map(|((_, _, t), b)| t - b).sum();
    let offset = (gap / rows.len() as f64).max(0.0);
    let residuals = rows
        .iter()
        .zip(&backbone)
        .map(|((_, _, total), b)| (b + offset - total) / total)
        .collect();
    Ok(OffsetFit { offset, residuals })
}

/// One CSV row of a cost table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostRow {
    pub name: String,
    pub depth: usize,
    /// Stage-1 width.
    pub width: usize,
    pub input: usize,
    pub strategy: String,
    pub params: u64,
    pub gmacs: f64,
    pub embedding: u64,
    pub block_linear: u64,
    pub block_attention: u64,
    pub transitions: u64,
    pub head: u64,
}

impl CostRow {
    pub fn new(cfg: &ArchConfig, input: usize, report: &CostReport) -> Self {
        let m = report.breakdown.macs;
        Self {
            name: cfg.name.clone(),
            depth: cfg.depth(),
            width: cfg.stages[0].hidden,
            input,
            strategy: cfg.strategy_label(),
            params: report.params,
            gmacs: report.gmacs(),
            embedding: m.embedding,
            block_linear: m.block_linear,
            block_attention: m.block_attention,
            transitions: m.transitions,
            head: m.head,
        }
    }
}

/// Writes rows with a header line; breakdown columns are MACs.
pub fn write_cost_csv<W: Write>(out: W, rows: &[CostRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
