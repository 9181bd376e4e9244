//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uvit_core::autodiff::{Graph, Var};
use uvit_core::model::BlockWeights;
use uvit_core::{Result, Tensor};

pub const FD_STEP: f64 = 1e-4;
/// Floor on the denominator of the relative gradient error.
pub const REL_FLOOR: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random(dims: &[usize], rng: &mut ChaCha8Rng, scale: f64) -> Tensor {
    Tensor::from_fn(dims, |_| rng.random_range(-scale..scale))
}

/// Random row-stochastic `l×l` matrix.
pub fn random_stochastic(l: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let mut t = Tensor::from_fn(&[l, l], |_| rng.random_range(0.0..1.0f64).powi(3));
    for row in t.data_mut().chunks_mut(l) {
        let s: f64 = row.iter().sum();
        if s == 0.0 {
            row.fill(1.0 / l as f64);
        } else {
            row.iter_mut().for_each(|x| *x /= s);
        }
    }
    t
}

pub fn random_block(d: usize, rng: &mut ChaCha8Rng) -> BlockWeights {
    let mut w = BlockWeights::identity_init(d);
    for t in w.tensors_mut() {
        *t = random(t.dims(), rng, 0.5);
    }
    w
}

/// Worst relative error of reverse-mode gradients against central
/// differences, over every input tensor.
///
/// `build` maps leaves to any-shaped output; it is reduced to a scalar by a
/// fixed random projection so every output element contributes.
pub fn grad_check<F>(inputs: &[Tensor], build: F) -> f64
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut probe: Option<Tensor> = None;
    let mut eval = |inputs: &[Tensor], want_grads: bool| -> (f64, Vec<Tensor>) {
        let mut g = Graph::new();
        let leaves: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
        let out = build(&mut g, &leaves).expect("graph builds");
        let dims = g.dims(out).to_vec();
        let r = probe
            .get_or_insert_with(|| {
                let mut rg = rng(99);
                random(&dims, &mut rg, 1.0)
            })
            .clone();
        let rv = g.leaf(r);
        let prod = g.mul(out, rv).expect("same dims");
        let loss = g.sum(prod);
        let value = g.value(loss).data()[0];
        if !want_grads {
            return (value, Vec::new());
        }
        let grads = g.backward(loss).expect("scalar loss");
        let gs = leaves
            .iter()
            .zip(inputs)
            .map(|(&v, t)| grads.get_or_zeros(v, t))
            .collect();
        (value, gs)
    };

    let (_, analytic) = eval(inputs, true);
    let mut worst = 0.0f64;
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (k, a) in analytic.iter().enumerate() {
        let mut numeric = Tensor::zeros(a.dims());
        for i in 0..work[k].len() {
            let x0 = work[k].data()[i];
            work[k].data_mut()[i] = x0 + FD_STEP;
            let (up, _) = eval(&work, false);
            work[k].data_mut()[i] = x0 - FD_STEP;
            let (down, _) = eval(&work, false);
            work[k].data_mut()[i] = x0;
            numeric.data_mut()[i] = (up - down) / (2.0 * FD_STEP);
        }
        worst = worst.max(relative_error(a, &numeric));
    }
    worst
}

/// `max|a - n| / max(max|a|, max|n|, REL_FLOOR)`.
pub fn relative_error(a: &Tensor, n: &Tensor) -> f64 {
    a.max_abs_diff(n) / a.max_abs().max(n.max_abs()).max(REL_FLOOR)
}

/// Eq.-style double sum over 1-based indices, written without shortcuts.
pub fn rrf_oracle(s: &[Vec<f64>]) -> f64 {
    let l = s.len();
    let mut acc = 0.0;
    for i in 1..=l {
        let mut num = 0.0;
        for j in 1..=l {
            num += s[i - 1][j - 1] * (i as f64 - j as f64).abs();
        }
        let den = if i > l - i { i } else { l - i } as f64;
        acc += num / den;
    }
    acc / l as f64
}

/// Closed form for uniform scores.
pub fn rrf_uniform(l: usize) -> f64 {
    let lf = l as f64;
    let mut acc = 0.0;
    for i in 1..=l {
        let dist: f64 = (1..=l).map(|j| (i as f64 - j as f64).abs()).sum();
        acc += dist / lf / (i.max(l - i) as f64);
    }
    acc / lf
}

/// Plain global multi-head attention on an `n×d` matrix using the
/// block's qkv and proj weights. No windows, no graph.
pub fn attention_oracle(x: &Tensor, w: &BlockWeights, heads: usize) -> Tensor {
    let (n, d) = (x.dims()[0], x.dims()[1]);
    let dh = d / heads;
    let xd = x.data();
    let lin = |wt: &Tensor, b: &Tensor, out: usize, row: &[f64]| -> Vec<f64> {
        (0..out)
            .map(|c| {
                b.data()[c]
                    + (0..row.len())
                        .map(|k| row[k] * wt.data()[k * out + c])
                        .sum::<f64>()
            })
            .collect::<Vec<f64>>()
    };
    let qkv: Vec<Vec<f64>> = (0..n)
        .map(|t| lin(&w.qkv_weight, &w.qkv_bias, 3 * d, &xd[t * d..(t + 1) * d]))
        .collect();
    let mut concat = vec![vec![0.0; d]; n];
    for h in 0..heads {
        for i in 0..n {
            let logits: Vec<f64> = (0..n)
                .map(|j| {
                    (0..dh)
                        .map(|c| qkv[i][h * dh + c] * qkv[j][d + h * dh + c])
                        .sum::<f64>()
                        / (dh as f64).sqrt()
                })
                .collect();
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
            let z: f64 = e.iter().sum();
            for c in 0..dh {
                concat[i][h * dh + c] = (0..n).map(|j| e[j] / z * qkv[j][2 * d + h * dh + c]).sum();
            }
        }
    }
    let data: Vec<f64> = concat
        .iter()
        .flat_map(|row| lin(&w.proj_weight, &w.proj_bias, d, row))
        .collect();
    Tensor::new(vec![n, d], data).unwrap()
}

/// Parameter count of a single-stage classification ViT, tensor by tensor.
pub fn vit_cls_params(depth: usize, d: usize, patch: usize, input: usize, classes: usize) -> u64 {
    let tokens = (input / patch) * (input / patch);
    let mut shapes: Vec<Vec<usize>> = vec![
        vec![patch, patch, 3, d], // patch kernel
        vec![d],                  // patch bias
        vec![tokens, d],          // position table
        vec![d],                  // class token
        vec![d],                  // class position
    ];
    for _ in 0..depth {
        shapes.extend([
            vec![d],
            vec![d],
            vec![d, 3 * d],
            vec![3 * d],
            vec![d, d],
            vec![d],
            vec![d],
            vec![d],
            vec![d, 4 * d],
            vec![4 * d],
            vec![4 * d, d],
            vec![d],
        ]);
    }
    shapes.extend([vec![d], vec![d], vec![d, classes], vec![classes]]);
    shapes
        .iter()
        .map(|s| s.iter().product::<usize>() as u64)
        .sum()
}

/// Dense depth-2, d=12 encoder on a 4×4 token grid (patch 1).
pub fn tiny_encoder(strategy: &str) -> uvit_core::ArchConfig {
    use uvit_core::arch::StageSpec;
    uvit_core::ArchConfig {
        name: "tiny".into(),
        mode: uvit_core::Mode::Dense,
        patch: 1,
        input: 4,
        flags: uvit_core::Flags::NONE,
        heads: 6,
        ffn_ratio: 4,
        num_classes: 1000,
        stages: vec![StageSpec {
            depth: 2,
            hidden: 12,
            input_scale: 1,
            windows: Some(uvit_core::parse_strategy(strategy).unwrap()),
            output_scale: Some(1),
        }],
    }
}

/// Worst per-tensor relative error of the full-model gradient (image and
/// every parameter) against central differences.
pub fn encoder_grad_check(cfg: &uvit_core::ArchConfig, seed: u64) -> f64 {
    use uvit_core::arch::init_weights;
    use uvit_core::model::{forward, forward_graph, FeatureOutput, WeightSet};

    let mut r = rng(seed);
    let template = init_weights(cfg, seed).unwrap();
    let mut ws = WeightSet::new();
    for (name, t) in template.iter() {
        let scale = if name.ends_with("gamma") { 0.0 } else { 0.5 };
        let mut v = random(t.dims(), &mut r, 0.5);
        if scale == 0.0 {
            v = v.map(|x| 1.0 + x);
        }
        ws.insert(name, v);
    }
    let image = random(&[cfg.input, cfg.input, 3], &mut r, 1.0);

    let loss_of = |out: &FeatureOutput, probe: &[Tensor]| -> f64 {
        out.tensors()
            .iter()
            .zip(probe)
            .map(|((_, t), p)| {
                t.data()
                    .iter()
                    .zip(p.data())
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
            })
            .sum()
    };
    let first = forward(cfg, &ws, &image).unwrap();
    let probe: Vec<Tensor> = first
        .tensors()
        .iter()
        .map(|(_, t)| random(t.dims(), &mut r, 1.0))
        .collect();

    // Analytic.
    let mut g = Graph::new();
    let img = g.leaf(image.clone());
    let outs = forward_graph(&mut g, cfg, &ws, img).unwrap();
    let mut loss = None;
    for (&(_, _, v), p) in outs.taps.iter().zip(&probe) {
        let pv = g.leaf(p.reshape(g.dims(v)).unwrap());
        let prod = g.mul(v, pv).unwrap();
        let s = g.sum(prod);
        loss = Some(match loss {
            None => s,
            Some(acc) => g.add(acc, s).unwrap(),
        });
    }
    let loss = loss.unwrap();
    let grads = g.backward(loss).unwrap();

    let numeric_for =
        |perturb: &dyn Fn(f64) -> f64| (perturb(FD_STEP) - perturb(-FD_STEP)) / (2.0 * FD_STEP);

    let mut worst = 0.0f64;
    let img_grad = grads.get_or_zeros(img, &image);
    let mut num = Tensor::zeros(image.dims());
    for i in 0..image.len() {
        num.data_mut()[i] = numeric_for(&|h| {
            let mut x = image.clone();
            x.data_mut()[i] += h;
            loss_of(&forward(cfg, &ws, &x).unwrap(), &probe)
        });
    }
    worst = worst.max(relative_error(&img_grad, &num));

    for (name, &v) in &outs.params {
        let t = ws.get(name).unwrap().clone();
        let analytic = grads.get_or_zeros(v, &t);
        let mut num = Tensor::zeros(t.dims());
        for i in 0..t.len() {
            num.data_mut()[i] = numeric_for(&|h| {
                let mut w2 = ws.clone();
                w2.get_mut(name).unwrap().data_mut()[i] += h;
                loss_of(&forward(cfg, &w2, &image).unwrap(), &probe)
            });
        }
        worst = worst.max(relative_error(&analytic, &num));
    }
    worst
}
