//! Relative receptive field of attention maps.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::AttentionScores;
use crate::tensor::Tensor;

/// Row sums must be within this of one.
pub const ROW_SUM_TOL: f64 = 1e-6;

/// Score-weighted mean token distance, normalized per query by
/// `max(i, L - i)` with 1-based `i`, then averaged over queries.
///
/// Tokens of a 2-D grid are taken in row-major order.
pub fn relative_receptive_field(scores: &Tensor) -> Result<f64> {
    let l = match scores.dims() {
        &[a, b] if a == b => a,
        dims => {
            return Err(Error::Contract(format!(
                "scores must be square L×L, got {dims:?}"
            )))
        }
    };
    let mut total = 0.0;
    for (i0, row) in scores.data().chunks(l).enumerate() {
        let sum: f64 = row.iter().sum();
        if sum.is_nan() || (sum - 1.0).abs() > ROW_SUM_TOL || row.iter().any(|&s| s < 0.0) {
            return Err(Error::Contract(format!(
                "row {i0} is not stochastic (sum {sum})"
            )));
        }
        let i = i0 + 1;
        let spread: f64 = row
            .iter()
            .enumerate()
            .map(|(j0, s)| s * (j0 + 1).abs_diff(i) as f64)
            .sum();
        total += spread / i.max(l - i) as f64;
    }
    Ok(total / l as f64)
}

/// Per-layer statistics across heads.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LayerRF {
    pub layer: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    /// `r` of each head, averaged over its windows.
    pub heads: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RRFSummary {
    pub layers: Vec<LayerRF>,
    /// Set when any layer had more than one window; the metric is then an
    /// average of per-window values.
    pub windowed: bool,
}

/// `r` per head for one layer, computing each window separately and
/// averaging over windows.
pub fn head_receptive_fields(scores: &AttentionScores) -> Result<Vec<f64>> {
    let heads = scores.num_heads();
    if heads == 0 {
        return Err(Error::Contract("layer has no attention heads".into()));
    }
    if let Some(w) = scores.per_window.iter().position(|w| w.len() != heads) {
        return Err(Error::Contract(format!(
            "window {w} has {} heads, expected {heads}",
            scores.per_window[w].len()
        )));
    }
    (0..heads)
        .map(|h| {
            let rs = scores
                .head(h)
                .map(relative_receptive_field)
                .collect::<Result<Vec<_>>>()?;
            Ok(rs.iter().sum::<f64>() / rs.len() as f64)
        })
        .collect()
}

/// Mean and population standard deviation of `r` across heads, per layer.
pub fn layer_rf_summary(records: &[AttentionScores]) -> Result<RRFSummary> {
    let expected = records.first().map(AttentionScores::num_heads);
    let mut layers = Vec::with_capacity(records.len());
    for (layer, rec) in records.iter().enumerate() {
        if Some(rec.num_heads()) != expected {
            return Err(Error::Contract(format!(
                "layer {layer} has {} heads, layer 0 has {}",
                rec.num_heads(),
                expected.unwrap_or(0)
            )));
        }
        let heads = head_receptive_fields(rec)?;
        let (mean, std) = mean_std(&heads);
        layers.push(LayerRF {
            layer,
            mean,
            std,
            heads,
        });
    }
    Ok(RRFSummary {
        layers,
        windowed: records.iter().any(|r| r.per_window.len() > 1),
    })
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Serialize)]
struct HeadRow {
    layer: usize,
    head: usize,
    r: f64,
}

#[derive(Serialize)]
struct SummaryRow {
    layer: usize,
    mean: f64,
    std: f64,
}

/// Long form: `layer,head,r`.
pub fn write_rf_long_csv<W: Write>(out: W, summary: &RRFSummary) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for l in &summary.layers {
        for (head, &r) in l.heads.iter().enumerate() {
            w.serialize(HeadRow {
                layer: l.layer,
                head,
                r,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Summary form: `layer,mean,std`.
pub fn write_rf_summary_csv<W: Write>(out: W, summary: &RRFSummary) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for l in &summary.layers {
        w.serialize(SummaryRow {
            layer: l.layer,
            mean: l.mean,
            std: l.std,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// One score entry; the CSV columns of [`write_scores_csv`].
#[derive(Debug, Serialize, Deserialize)]
struct ScoreRow {
    layer: usize,
    window: usize,
    head: usize,
    row: usize,
    col: usize,
    score: f64,
}

/// Writes attention scores as `layer,window,head,row,col,score`.
pub fn write_scores_csv<W: Write>(out: W, layers: &[AttentionScores]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (layer, rec) in layers.iter().enumerate() {
        for (window, heads) in rec.per_window.iter().enumerate() {
            for (head, t) in heads.iter().enumerate() {
                let l = t.last_dim();
                for (k, &score) in t.data().iter().enumerate() {
                    w.serialize(ScoreRow {
                        layer,
                        window,
                        head,
                        row: k / l,
                        col: k % l,
                        score,
                    })?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads the format of [`write_scores_csv`]. Rows may come in any order,
/// but layer, window and head indices must be dense and every matrix
/// complete.
pub fn read_scores_csv<R: Read>(input: R) -> Result<Vec<AttentionScores>> {
    // (layer, window, head) -> (row, col) -> score
    let mut cells: BTreeMap<_, BTreeMap<(usize, usize), f64>> = BTreeMap::new();
    for rec in csv::Reader::from_reader(input).deserialize() {
        let r: ScoreRow = rec?;
        if cells
            .entry((r.layer, r.window, r.head))
            .or_default()
            .insert((r.row, r.col), r.score)
            .is_some()
        {
            return Err(Error::Contract(format!(
                "duplicate score at layer {} window {} head {} ({}, {})",
                r.layer, r.window, r.head, r.row, r.col
            )));
        }
    }
    if cells.is_empty() {
        return Err(Error::Contract("no attention scores".into()));
    }
    let mut layers: Vec<AttentionScores> = Vec::new();
    for ((layer, window, head), entries) in cells {
        let l = (entries.len() as f64).sqrt() as usize;
        let complete = l * l == entries.len() && entries.keys().all(|&(i, j)| i < l && j < l);
        if !complete {
            return Err(Error::Contract(format!(
                "layer {layer} window {window} head {head} is not a complete square matrix"
            )));
        }
        let t = Tensor::new(vec![l, l], entries.into_values().collect())?;
        // Keys arrive sorted, so each must extend the previous one by one step.
        let heads_so_far = layers
            .last()
            .and_then(|r| r.per_window.last())
            .map_or(0, Vec::len);
        let windows_so_far = layers.last().map_or(0, |r| r.per_window.len());
        if (layer, window, head) == (layers.len(), 0, 0) {
            layers.push(AttentionScores {
                per_window: vec![vec![t]],
            });
        } else if layer + 1 == layers.len() && (window, head) == (windows_so_far, 0) {
            layers[layer].per_window.push(vec![t]);
        } else if layer + 1 == layers.len() && window + 1 == windows_so_far && head == heads_so_far
        {
            layers[layer].per_window[window].push(t);
        } else {
            return Err(Error::Contract(format!(
                "score indices are not contiguous at layer {layer} window {window} head {head}"
            )));
        }
    }
    Ok(layers)
}
