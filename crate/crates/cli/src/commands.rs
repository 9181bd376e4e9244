use std::fs;
use std::path::Path;

use serde::Serialize;
use uvit_core::analysis::{
    layer_rf_summary, read_scores_csv, write_rf_long_csv, write_rf_summary_csv, write_scores_csv,
    LayerRF,
};
use uvit_core::arch::reference::{ablation_rows, scaling_configs, SCALING_ROWS, VARIANTS};
use uvit_core::arch::{init_weights, preset_by_name, synthetic_image, PRESET_NAMES};
use uvit_core::cost::{CostReport, CostRow};
use uvit_core::model::{forward_traced, WeightSet};
use uvit_core::window::{bind_strategy, format_strategy};
use uvit_core::{count_flops, parse_strategy, ArchConfig, Error};

use crate::output::{csv_rows, emit, json};
use crate::{CliError, ConfigSource, CostArgs, Format, ForwardArgs, OutArgs, RfArgs, WindowArgs};

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })
}

fn load_config(src: &ConfigSource) -> Result<ArchConfig, CliError> {
    match (&src.preset, &src.config) {
        (Some(name), None) => Ok(preset_by_name(name)?),
        (None, Some(path)) => {
            let text = String::from_utf8(read_file(path)?)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            Ok(ArchConfig::from_json(&text)?)
        }
        _ => Err(CliError::Usage(
            "give exactly one of --preset or --config".into(),
        )),
    }
}

fn table<T: Serialize>(out: &OutArgs, rows: &[T]) -> Result<(), CliError> {
    let bytes = match out.format {
        Format::Json => json(rows)?,
        Format::Csv => csv_rows(rows)?,
    };
    emit(out.out.as_deref(), &bytes)
}

#[derive(Serialize)]
struct PresetRow {
    name: String,
    mode: String,
    depth: usize,
    hidden: usize,
    heads: usize,
    patch: usize,
    input: usize,
    strategy: String,
    params: u64,
    params_m: f64,
    gmacs: f64,
    published_params_m: Option<f64>,
    published_gflops: Option<f64>,
}

pub fn presets(out: &OutArgs) -> Result<(), CliError> {
    let mut rows = Vec::new();
    for name in PRESET_NAMES {
        let cfg = preset_by_name(name)?;
        let r = count_flops(&cfg, cfg.input)?;
        let published = VARIANTS.iter().find(|v| v.0 == name);
        rows.push(PresetRow {
            name: cfg.name.clone(),
            mode: format!("{:?}", cfg.mode).to_lowercase(),
            depth: cfg.depth(),
            hidden: cfg.stages[0].hidden,
            heads: cfg.heads,
            patch: cfg.patch,
            input: cfg.input,
            strategy: cfg.strategy_label(),
            params: r.params,
            params_m: r.params_m(),
            gmacs: r.gmacs(),
            published_params_m: published.map(|v| v.3),
            published_gflops: published.map(|v| v.4),
        });
    }
    table(out, &rows)
}

#[derive(Serialize)]
struct CostOutput<'a> {
    config: &'a str,
    input: usize,
    params_m: f64,
    gmacs: f64,
    #[serde(flatten)]
    report: &'a CostReport,
}

pub fn cost(args: &CostArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.source)?;
    let input = args.input.unwrap_or(cfg.input);
    let report = count_flops(&cfg, input)?;
    let bytes = match args.out.format {
        Format::Json => json(&CostOutput {
            config: &cfg.name,
            input,
            params_m: report.params_m(),
            gmacs: report.gmacs(),
            report: &report,
        })?,
        Format::Csv => csv_rows(&[CostRow::new(&cfg, input, &report)])?,
    };
    emit(args.out.out.as_deref(), &bytes)
}

#[derive(Serialize)]
struct AblationOut {
    family: String,
    depths: String,
    hidden: usize,
    window: String,
    params: u64,
    params_m: f64,
    gmacs: f64,
    published_params_m: f64,
    published_gflops: f64,
}

pub fn ablation_table(out: &OutArgs) -> Result<(), CliError> {
    let mut rows = Vec::new();
    for row in ablation_rows() {
        let cfg = row.config()?;
        let r = count_flops(&cfg, cfg.input)?;
        rows.push(AblationOut {
            family: row.flags.label(),
            depths: row
                .depths
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("-"),
            hidden: row.hidden,
            window: if row.window == 1 {
                "1".into()
            } else {
                format!("1/{}", row.window)
            },
            params: r.params,
            params_m: r.params_m(),
            gmacs: r.gmacs(),
            published_params_m: row.params_m,
            published_gflops: row.gflops,
        });
    }
    table(out, &rows)
}

#[derive(Serialize)]
struct ScalingOut {
    input: usize,
    depth: usize,
    width: usize,
    params: u64,
    params_m: f64,
    gmacs: f64,
    published_params_m: f64,
    published_gflops: f64,
}

pub fn scaling_table(out: &OutArgs) -> Result<(), CliError> {
    let mut rows = Vec::new();
    for (cfg, (input, depth, width, p, g)) in scaling_configs()?.iter().zip(SCALING_ROWS) {
        let r = count_flops(cfg, input)?;
        rows.push(ScalingOut {
            input,
            depth,
            width,
            params: r.params,
            params_m: r.params_m(),
            gmacs: r.gmacs(),
            published_params_m: p,
            published_gflops: g,
        });
    }
    table(out, &rows)
}

#[derive(Serialize)]
struct PhaseOut {
    scale: String,
    count: usize,
}

#[derive(Serialize)]
struct LayoutOut {
    blocks: String,
    scale: String,
    windows: usize,
    window_h: usize,
    window_w: usize,
    tokens_per_window: usize,
}

#[derive(Serialize)]
struct WindowReport {
    canonical: String,
    depth: usize,
    phases: Vec<PhaseOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    layouts: Option<Vec<LayoutOut>>,
}

fn checked_strategy(args: &WindowArgs) -> Result<WindowReport, CliError> {
    let ws = parse_strategy(&args.strategy)?;
    if let Some(depth) = args.depth {
        if depth != ws.depth() {
            return Err(Error::Binding(format!(
                "strategy covers {} blocks but depth is {depth}",
                ws.depth()
            ))
            .into());
        }
    }
    let layouts = match args.grid {
        Some(grid) => {
            let bound = bind_strategy(&ws, ws.depth(), grid.h, grid.w)?;
            let mut first = 0;
            let mut out = Vec::new();
            for phase in ws.phases() {
                let l = bound[first];
                out.push(LayoutOut {
                    blocks: format!("{}-{}", first, first + phase.count - 1),
                    scale: phase.scale.to_string(),
                    windows: l.num_windows(),
                    window_h: l.window_h,
                    window_w: l.window_w,
                    tokens_per_window: l.window_tokens(),
                });
                first += phase.count;
            }
            Some(out)
        }
        None => None,
    };
    Ok(WindowReport {
        canonical: format_strategy(&ws),
        depth: ws.depth(),
        phases: ws
            .phases()
            .iter()
            .map(|p| PhaseOut {
                scale: p.scale.to_string(),
                count: p.count,
            })
            .collect(),
        layouts,
    })
}

pub fn window_validate(args: &WindowArgs) -> Result<(), CliError> {
    let report = checked_strategy(args)?;
    emit(args.out.as_deref(), &json(&report)?)
}

pub fn window_canonicalize(args: &WindowArgs) -> Result<(), CliError> {
    let report = checked_strategy(args)?;
    emit(
        args.out.as_deref(),
        format!("{}\n", report.canonical).as_bytes(),
    )
}

#[derive(Serialize)]
struct TensorSummary {
    name: String,
    shape: Vec<usize>,
    sum: f64,
    sha256: String,
}

#[derive(Serialize)]
struct ForwardReport {
    config: String,
    input: usize,
    seed: u64,
    weights: String,
    image_sha256: String,
    outputs: Vec<TensorSummary>,
}

pub fn forward(args: &ForwardArgs) -> Result<(), CliError> {
    let base = load_config(&args.source)?;
    let input = args.input.unwrap_or(base.input);
    let cfg = base.with_input(input);
    cfg.validate_input(input)?;
    let (ws, weights) = match &args.weights {
        Some(path) => (
            WeightSet::read_from(read_file(path)?.as_slice())?,
            path.display().to_string(),
        ),
        None => (
            init_weights(&cfg, args.seed)?,
            format!("init:{}", args.seed),
        ),
    };
    let image = synthetic_image(input, args.seed);
    let trace = forward_traced(&cfg, &ws, &image)?;
    let outputs = trace
        .output
        .tensors()
        .into_iter()
        .map(|(name, t)| TensorSummary {
            name,
            shape: t.dims().to_vec(),
            sum: t.sum(),
            sha256: t.sha256(),
        })
        .collect();
    let report = json(&ForwardReport {
        config: cfg.name.clone(),
        input,
        seed: args.seed,
        weights,
        image_sha256: image.sha256(),
        outputs,
    })?;
    let scores = match &args.scores_out {
        Some(_) => {
            let mut buf = Vec::new();
            write_scores_csv(&mut buf, &trace.attention)?;
            Some(buf)
        }
        None => None,
    };
    emit(args.out.as_deref(), &report)?;
    if let (Some(path), Some(buf)) = (&args.scores_out, scores) {
        emit(Some(path), &buf)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct RfReport<'a> {
    layers: &'a [LayerRF],
    windowed: bool,
    /// How windowed layers were reduced.
    note: &'static str,
}

pub fn rf(args: &RfArgs) -> Result<(), CliError> {
    let layers = read_scores_csv(read_file(&args.scores)?.as_slice())?;
    let summary = layer_rf_summary(&layers)?;
    let bytes = match args.out.format {
        Format::Json => json(&RfReport {
            layers: &summary.layers,
            windowed: summary.windowed,
            note: if summary.windowed {
                "r computed per window (L = window tokens) and averaged over windows"
            } else {
                "r over the full row-major token sequence"
            },
        })?,
        Format::Csv => {
            let mut buf = Vec::new();
            if args.long {
                write_rf_long_csv(&mut buf, &summary)?;
            } else {
                write_rf_summary_csv(&mut buf, &summary)?;
            }
            buf
        }
    };
    emit(args.out.out.as_deref(), &bytes)
}
