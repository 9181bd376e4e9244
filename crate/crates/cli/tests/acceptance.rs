//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;

use common::{
    attention_oracle, encoder_grad_check, grad_check, random, random_block, random_stochastic, rng,
    rrf_oracle, rrf_uniform, tiny_encoder, vit_cls_params,
};
use uvit_core::analysis::relative_receptive_field;
use uvit_core::arch::reference::{ablation_rows, DEEP_STRATEGY, WINDOW_ABLATION};
use uvit_core::arch::{ablation_config, init_weights, preset_by_name, AblationSpec};
use uvit_core::autodiff::{Graph, Var};
use uvit_core::cost::fit_head_offset;
use uvit_core::model::{
    adapt_patch_kernel, adapt_pos_embedding, mhsa, PosEmbedding, TokenGrid, HEADS,
};
use uvit_core::window::{
    format_strategy, plan_windows, window_merge, window_partition, WindowLayout,
};
use uvit_core::{
    count_flops, count_params, parse_strategy, ArchConfig, Error, Flags, Scale, Tensor, Transition,
};

type Outcome = Result<String, String>;
type Build = Box<dyn Fn(&mut Graph, &[Var]) -> uvit_core::Result<Var>>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn b_dense(strategy: &str) -> ArchConfig {
    let mut cfg = preset_by_name("uvit-b-dense").unwrap();
    cfg.stages[0].windows = Some(parse_strategy(strategy).unwrap());
    cfg
}

fn params_golden() -> Outcome {
    let b = count_params(&preset_by_name("uvit-b-cls").unwrap()).params as f64 / 1e6;
    ensure(rel(b, 32.8) < 0.02, || format!("UViT-B {b:.3}M vs 32.8M"))?;
    let mut notes = vec![format!("B {b:.2}M")];
    for (name, d) in [("uvit-t-cls", 222), ("uvit-s-cls", 288)] {
        let ours = count_params(&preset_by_name(name).unwrap()).params as f64;
        let oracle = vit_cls_params(18, d, 16, 224, 1000) as f64;
        ensure(rel(ours, oracle) < 0.01, || {
            format!("{name} {ours} vs oracle {oracle}")
        })?;
        notes.push(format!("{} {:.2}M", name[5..6].to_uppercase(), ours / 1e6));
    }
    Ok(format!(
        "{} (published T/S 13.5M/21.7M: known deviation)",
        notes.join(", ")
    ))
}

fn flops_golden() -> Outcome {
    let mut notes = Vec::new();
    for (name, want) in [
        ("uvit-t-cls", 2.5),
        ("uvit-s-cls", 4.0),
        ("uvit-b-cls", 6.9),
    ] {
        let g = count_flops(&preset_by_name(name).unwrap(), 224)
            .map_err(|e| e.to_string())?
            .gmacs();
        ensure(rel(g, want) < 0.05, || {
            format!("{name} {g:.3} G vs {want} G")
        })?;
        notes.push(format!("{g:.2}"));
    }
    Ok(format!("{} GMACs", notes.join("/")))
}

fn window_ablation() -> Outcome {
    let ours: Vec<f64> = WINDOW_ABLATION
        .iter()
        .map(|(s, _)| count_flops(&b_dense(s), 896).unwrap().gmacs())
        .collect();
    let mut worst = 0.0f64;
    for i in 0..ours.len() {
        for j in i + 1..ours.len() {
            let published = WINDOW_ABLATION[i].1 - WINDOW_ABLATION[j].1;
            let delta = ours[i] - ours[j];
            ensure((delta - published).abs() <= 0.05 * published.abs(), || {
                format!("rows {i},{j}: delta {delta:.1} vs {published:.1}")
            })?;
            if published != 0.0 {
                worst = worst.max(rel(delta, published));
            }
        }
    }
    let rows: Vec<_> = WINDOW_ABLATION
        .iter()
        .map(|&(s, t)| (b_dense(s), 896, t))
        .collect();
    let fit = fit_head_offset(&rows).map_err(|e| e.to_string())?;
    ensure(fit.max_abs_residual() < 0.015, || {
        format!("offset fit residuals {:?}", fit.residuals)
    })?;
    Ok(format!(
        "worst delta error {:.2}%, head offset {:.1} G, max residual {:.2}%",
        worst * 100.0,
        fit.offset,
        fit.max_abs_residual() * 100.0
    ))
}

fn window_equivalence() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let tokens = TokenGrid::new(random(&[6, 6, 12], &mut rng(seed), 1.0)).unwrap();
        let w = random_block(12, &mut rng(seed + 50));
        let (out, _) = mhsa(&tokens, &w, &WindowLayout::global(6, 6)).map_err(|e| e.to_string())?;
        worst = worst.max(
            out.rows()
                .max_abs_diff(&attention_oracle(&tokens.rows(), &w, HEADS)),
        );
    }
    ensure(worst < 1e-12, || {
        format!("global mhsa differs by {worst:e}")
    })?;
    for (side, k) in [(6, 2), (6, 3), (12, 4), (16, 8), (16, 16)] {
        let tokens = TokenGrid::new(random(&[side, side, 5], &mut rng(k as u64), 1.0)).unwrap();
        let layout = plan_windows(side, side, Scale::reciprocal(k).unwrap()).unwrap();
        let back = window_merge(&window_partition(&tokens, &layout).unwrap(), &layout).unwrap();
        ensure(back == tokens, || {
            format!("round trip failed for {side}x{side} at 1/{k}")
        })?;
    }
    let global = count_flops(&b_dense("[1]x18"), 896)
        .unwrap()
        .breakdown
        .macs
        .block_attention;
    for k in [2u64, 4, 8, 16] {
        let s = count_flops(&b_dense(&format!("[{k}^-1]x18")), 896)
            .unwrap()
            .breakdown
            .macs
            .block_attention;
        ensure(s * k * k == global, || {
            format!("attention at 1/{k}: {s} * {} != {global}", k * k)
        })?;
    }
    Ok(format!(
        "max |diff| {worst:.1e}; round trips exact; s^2 law exact"
    ))
}

fn gradient_suite() -> Outcome {
    let mut r = rng(1);
    let mut t = |dims: &[usize]| random(dims, &mut r, 1.0);
    let cases: Vec<(&str, Vec<Tensor>, Build)> = vec![
        (
            "matmul",
            vec![t(&[3, 4]), t(&[4, 5])],
            Box::new(|g, v| g.matmul(v[0], v[1])),
        ),
        (
            "add",
            vec![t(&[3, 4]), t(&[3, 4])],
            Box::new(|g, v| g.add(v[0], v[1])),
        ),
        (
            "mul",
            vec![t(&[3, 4]), t(&[3, 4])],
            Box::new(|g, v| g.mul(v[0], v[1])),
        ),
        (
            "add_bias",
            vec![t(&[3, 4]), t(&[4])],
            Box::new(|g, v| g.add_bias(v[0], v[1])),
        ),
        (
            "scale",
            vec![t(&[2, 3])],
            Box::new(|g, v| Ok(g.scale(v[0], 0.7))),
        ),
        (
            "softmax",
            vec![t(&[4, 5])],
            Box::new(|g, v| {
                let x = g.scale(v[0], 3.0);
                g.softmax_rows(x)
            }),
        ),
        (
            "layernorm",
            vec![t(&[3, 6]), t(&[6]), t(&[6])],
            Box::new(|g, v| g.layernorm(v[0], v[1], v[2], 1e-6)),
        ),
        (
            "gelu",
            vec![t(&[4, 4])],
            Box::new(|g, v| {
                let x = g.scale(v[0], 3.0);
                Ok(g.gelu(x))
            }),
        ),
        (
            "reshape",
            vec![t(&[2, 6])],
            Box::new(|g, v| g.reshape(v[0], &[4, 3])),
        ),
        (
            "transpose",
            vec![t(&[2, 5])],
            Box::new(|g, v| g.transpose(v[0])),
        ),
        (
            "gather",
            vec![t(&[3, 3])],
            Box::new(|g, v| g.gather(v[0], vec![8, 0, 0, 4, 2, 8], &[2, 3])),
        ),
        (
            "concat",
            vec![t(&[2, 2]), t(&[3])],
            Box::new(|g, v| g.concat(&[v[0], v[1]], &[7])),
        ),
        (
            "bilinear",
            vec![t(&[3, 3, 2])],
            Box::new(|g, v| g.bilinear_resize(v[0], 5, 4)),
        ),
        ("sum", vec![t(&[3, 2])], Box::new(|g, v| Ok(g.sum(v[0])))),
        ("mean", vec![t(&[3, 2])], Box::new(|g, v| Ok(g.mean(v[0])))),
    ];
    let mut worst = 0.0f64;
    for (name, inputs, build) in &cases {
        let err = grad_check(inputs, |g, v| build(g, v));
        ensure(err < 1e-4, || format!("{name}: relative error {err:e}"))?;
        worst = worst.max(err);
    }
    let enc = encoder_grad_check(&tiny_encoder("[2^-1]x1 -> [1]x1"), 3);
    ensure(enc < 1e-4, || format!("encoder: relative error {enc:e}"))?;
    Ok(format!(
        "{} primitives worst {worst:.1e}; encoder {enc:.1e}",
        cases.len()
    ))
}

fn rrf_metric() -> Outcome {
    ensure(
        relative_receptive_field(&Tensor::eye(7)).unwrap() == 0.0,
        || "identity != 0".into(),
    )?;
    for l in [2usize, 4, 8, 16] {
        let r = relative_receptive_field(&Tensor::full(&[l, l], 1.0 / l as f64)).unwrap();
        ensure((r - rrf_uniform(l)).abs() < 1e-12, || {
            format!("uniform L={l}: {r}")
        })?;
    }
    ensure((rrf_uniform(2) - 0.375).abs() < 1e-15, || {
        "closed form L=2 != 0.375".into()
    })?;
    let mut g = rng(2024);
    for k in 0..1000 {
        let l = 1 + k % 32;
        let s = random_stochastic(l, &mut g);
        let r = relative_receptive_field(&s).map_err(|e| e.to_string())?;
        let rows: Vec<Vec<f64>> = s.data().chunks(l).map(<[f64]>::to_vec).collect();
        ensure((0.0..=1.0).contains(&r), || {
            format!("r = {r} outside [0, 1]")
        })?;
        ensure((r - rrf_oracle(&rows)).abs() < 1e-12, || {
            format!("matrix {k} disagrees with double sum")
        })?;
    }
    Ok("identity 0, uniform closed form, 1000 random in [0, 1]".into())
}

fn parser_suite() -> Outcome {
    for s in WINDOW_ABLATION.iter().map(|w| w.0).chain([DEEP_STRATEGY]) {
        let ws = parse_strategy(s).map_err(|e| format!("{s}: {e}"))?;
        ensure(format_strategy(&ws) == s, || {
            format!("{s} formats as {}", format_strategy(&ws))
        })?;
        ensure(parse_strategy(&format_strategy(&ws)).unwrap() == ws, || {
            format!("{s} does not round trip")
        })?;
    }
    for (bad, pos) in [
        ("[5^-1]x3", 1),
        ("[2^-1]x0", 7),
        ("[2^-1]x3 [1]x2", 9),
        ("2^-1]x3", 0),
        ("[2^-1]x3 ->", 11),
    ] {
        match parse_strategy(bad) {
            Err(Error::Parse { position, .. }) if position == pos => {}
            other => {
                return Err(format!(
                    "'{bad}': expected parse error at {pos}, got {other:?}"
                ))
            }
        }
    }
    Ok("7 strategies round trip; 5 malformed inputs rejected at the right byte".into())
}

fn ablation_factory() -> Outcome {
    for flags in Flags::all() {
        let depths: &[usize] = if flags.any() { &[6, 6, 6] } else { &[18] };
        let cfg = ablation_config(&AblationSpec::new(flags, depths, &[192], &[Scale::HALF]))
            .map_err(|e| format!("{}: {e}", flags.label()))?;
        let expect = match (flags.sd, flags.doubled) {
            (true, true) => Transition::StridedProjection,
            (true, false) => Transition::BilinearMerge,
            (false, true) => Transition::WidthProjection,
            (false, false) => Transition::None,
        };
        ensure(cfg.transition() == expect, || {
            format!("{}: {:?}", flags.label(), cfg.transition())
        })?;
        let ws = init_weights(&cfg.clone().with_input(64), 0).map_err(|e| e.to_string())?;
        let has_strided = ws
            .names()
            .any(|n| n.starts_with("transition0") && ws.get(n).unwrap().dims() == [4 * 192, 384]);
        ensure(
            has_strided == (expect == Transition::StridedProjection),
            || format!("{}: transition weights", flags.label()),
        )?;
    }
    for flags in Flags::all().into_iter().filter(|f| !f.sd) {
        let depths: &[usize] = if flags.any() { &[6, 6, 6] } else { &[18] };
        let hidden = if flags.doubled { 152 } else { 384 };
        let counts: Vec<u64> = [1, 2, 4, 8, 16]
            .iter()
            .map(|&k| {
                let spec =
                    AblationSpec::new(flags, depths, &[hidden], &[Scale::reciprocal(k).unwrap()]);
                count_params(&ablation_config(&spec).unwrap()).params
            })
            .collect();
        ensure(counts.iter().all(|&c| c == counts[0]), || {
            format!("{}: {counts:?}", flags.label())
        })?;
    }
    let rows = ablation_rows();
    for row in &rows {
        row.config().map_err(|e| e.to_string())?;
    }
    Ok(format!(
        "8 combinations; no-SD params window-independent; {} family rows build",
        rows.len()
    ))
}

fn checkpoint_adaptation() -> Outcome {
    let k = Tensor::full(&[16, 16, 3, 4], 0.3);
    for t in [8, 14, 16, 32] {
        let a = adapt_patch_kernel(&k, t).unwrap();
        ensure(a.data().iter().all(|&v| v == 0.3), || {
            format!("constant kernel changed at {t}")
        })?;
    }
    let ramp = Tensor::from_fn(&[16, 16, 3, 2], |i| {
        let (y, x, c) = (i / 96, (i / 6) % 16, i % 6);
        0.5 + 2.0 * y as f64 - 3.0 * x as f64 + c as f64
    });
    for t in [8usize, 4, 32] {
        let a = adapt_patch_kernel(&ramp, t).unwrap();
        let f = 15.0 / (t - 1) as f64;
        let mut worst = 0.0f64;
        for (i, &v) in a.data().iter().enumerate() {
            let (y, x, c) = (i / (t * 6), (i / 6) % t, i % 6);
            let want = 0.5 + 2.0 * y as f64 * f - 3.0 * x as f64 * f + c as f64;
            worst = worst.max((v - want).abs());
        }
        ensure(worst < 1e-10, || format!("ramp at {t}: {worst:e}"))?;
    }
    let table = Tensor::from_fn(&[1 + 14 * 14, 6], |i| {
        if i < 6 {
            9.0
        } else {
            -1.25 + (i % 6) as f64
        }
    });
    let pos = PosEmbedding::from_sequence(&table, 14, 14, true).unwrap();
    let big = adapt_pos_embedding(&pos, 112, 112).unwrap();
    ensure(big.grid.dims() == [112, 112, 6], || {
        format!("{:?}", big.grid.dims())
    })?;
    ensure(
        big.grid
            .data()
            .iter()
            .enumerate()
            .all(|(i, &v)| v == -1.25 + (i % 6) as f64),
        || "constant channels not preserved".into(),
    )?;
    ensure(big.class == pos.class, || "class entry changed".into())?;
    let varied =
        PosEmbedding::from_sequence(&random(&[49, 3], &mut rng(8), 1.0), 7, 7, false).unwrap();
    ensure(
        adapt_pos_embedding(&varied, 7, 7).unwrap() == varied,
        || "not identity at equal size".into(),
    )?;
    Ok("constants and ramps exact; 14->112 keeps constants; identity at equal size".into())
}

fn end_to_end_determinism() -> Outcome {
    let dir = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let mut reports = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("run{run}.json"));
        let o = Command::new(env!("CARGO_BIN_EXE_uvit"))
            .args([
                "forward",
                "--preset",
                "uvit-t-dense",
                "--input",
                "64",
                "--seed",
                "7",
                "--out",
            ])
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(o.status.success(), || {
            String::from_utf8_lossy(&o.stderr).into_owned()
        })?;
        let v: serde_json::Value =
            serde_json::from_slice(&std::fs::read(&out).unwrap()).map_err(|e| e.to_string())?;
        reports.push(v);
    }
    let sums = |v: &serde_json::Value| v["outputs"][0]["sha256"].as_str().map(str::to_owned);
    ensure(
        sums(&reports[0]).is_some() && sums(&reports[0]) == sums(&reports[1]),
        || "checksums differ".into(),
    )?;
    let shape = &reports[0]["outputs"][0]["shape"];
    ensure(*shape == serde_json::json!([8, 8, 222]), || {
        format!("shape {shape}")
    })?;
    Ok(format!(
        "sha256 {}..., shape 8x8x222",
        &sums(&reports[0]).unwrap()[..12]
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("params golden", params_golden),
        ("FLOPs golden", flops_golden),
        ("window-ablation deltas", window_ablation),
        ("window equivalence", window_equivalence),
        ("gradient suite", gradient_suite),
        ("receptive-field metric", rrf_metric),
        ("parser suite", parser_suite),
        ("ablation factory", ablation_factory),
        ("checkpoint adaptation", checkpoint_adaptation),
        ("end-to-end determinism", end_to_end_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
