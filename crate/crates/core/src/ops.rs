//! Forward kernels on plain tensors.
//!
//! These are the reference implementations; the autodiff graph calls the
//! same functions for its forward values so both paths agree bit-for-bit.
//! All reductions run in index order.

use crate::error::{dim_err, Error, Result};
use crate::tensor::Tensor;

fn expect_matrix(t: &Tensor, what: &str) -> Result<(usize, usize)> {
    match t.dims() {
        &[r, c] => Ok((r, c)),
        dims => Err(dim_err(format!(
            "{what} must be a matrix, got dims {dims:?}"
        ))),
    }
}

/// `c[i,j] = Σ_t a[i,t]·b[t,j]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = expect_matrix(a, "matmul lhs")?;
    let (k2, n) = expect_matrix(b, "matmul rhs")?;
    if k != k2 {
        return Err(dim_err(format!(
            "matmul inner extents differ: {:?} x {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for t in 0..k {
            let av = ad[i * k + t];
            if av == 0.0 {
                continue;
            }
            let brow = &bd[t * n..(t + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

pub fn transpose(a: &Tensor) -> Result<Tensor> {
    let (r, c) = expect_matrix(a, "transpose input")?;
    let d = a.data();
    Ok(Tensor::from_fn(&[c, r], |i| {
        let (j, k) = (i / r, i % r);
        d[k * c + j]
    }))
}

/// Row-wise softmax over the last axis with max subtraction.
pub fn softmax_rows(m: &Tensor) -> Result<Tensor> {
    if m.data().iter().any(|x| x.is_nan()) {
        return Err(Error::Numeric("softmax input contains NaN".into()));
    }
    let c = m.last_dim();
    let mut out = m.data().to_vec();
    for row in out.chunks_mut(c) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Tensor::new(m.dims().to_vec(), out)
}

/// Layer normalization over the last axis (population variance, `eps`
/// inside the square root).
pub fn layernorm(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
    let d = x.last_dim();
    if gamma.len() != d || beta.len() != d {
        return Err(dim_err(format!(
            "layernorm width {d} vs gamma {:?}, beta {:?}",
            gamma.dims(),
            beta.dims()
        )));
    }
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::Contract(format!(
            "layernorm eps must be > 0, got {eps}"
        )));
    }
    let mut out = x.data().to_vec();
    for row in out.chunks_mut(d) {
        let (mean, inv_std) = row_stats(row, eps);
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - mean) * inv_std * gamma.data()[j] + beta.data()[j];
        }
    }
    Tensor::new(x.dims().to_vec(), out)
}

/// Mean and `1/sqrt(var + eps)` of one row.
pub(crate) fn row_stats(row: &[f64], eps: f64) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, 1.0 / (var + eps).sqrt())
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Exact GELU, `x·Φ(x)`.
pub fn gelu(x: &Tensor) -> Tensor {
    x.map(|v| v * normal_cdf(v))
}

/// One axis of an align-corners bilinear resample: for each target index,
/// the two source taps and the weight on the upper tap.
pub(crate) fn resample_taps(src: usize, tgt: usize) -> Vec<(usize, usize, f64)> {
    (0..tgt)
        .map(|t| {
            if tgt == 1 || src == 1 {
                return (0, 0, 0.0);
            }
            let pos = t as f64 * (src - 1) as f64 / (tgt - 1) as f64;
            let lo = (pos.floor() as usize).min(src - 1);
            let hi = (lo + 1).min(src - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}

/// Align-corners bilinear resize of an `h×w×c` grid to `th×tw×c`.
pub fn bilinear_resize(grid: &Tensor, th: usize, tw: usize) -> Result<Tensor> {
    let (h, w, c) = match grid.dims() {
        &[h, w, c] => (h, w, c),
        dims => {
            return Err(dim_err(format!(
                "bilinear_resize expects h×w×c, got {dims:?}"
            )))
        }
    };
    if th == 0 || tw == 0 {
        return Err(dim_err("bilinear_resize target extents must be >= 1"));
    }
    let rows = resample_taps(h, th);
    let cols = resample_taps(w, tw);
    let src = grid.data();
    let mut out = Vec::with_capacity(th * tw * c);
    for &(y0, y1, fy) in &rows {
        for &(x0, x1, fx) in &cols {
            let p00 = &src[(y0 * w + x0) * c..][..c];
            let p01 = &src[(y0 * w + x1) * c..][..c];
            let p10 = &src[(y1 * w + x0) * c..][..c];
            let p11 = &src[(y1 * w + x1) * c..][..c];
            for ch in 0..c {
                let top = p00[ch] + fx * (p01[ch] - p00[ch]);
                let bottom = p10[ch] + fx * (p11[ch] - p10[ch]);
                out.push(top + fy * (bottom - top));
            }
        }
    }
    Tensor::new(vec![th, tw, c], out)
}
