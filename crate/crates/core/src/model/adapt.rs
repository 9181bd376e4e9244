//! Resampling pretrained patch kernels and position tables to a new
//! patch size or token grid.

use crate::error::{dim_err, Result};
use crate::ops::bilinear_resize;
use crate::tensor::Tensor;

/// Resizes a `p×p×3×d` patch kernel to `target×target×3×d`, resampling
/// every (input channel, output channel) slice over the spatial axes.
pub fn adapt_patch_kernel(kernel: &Tensor, target: usize) -> Result<Tensor> {
    let (kh, kw, cin, d) = match kernel.dims() {
        &[kh, kw, cin, d] => (kh, kw, cin, d),
        dims => {
            return Err(dim_err(format!(
                "patch kernel must be p×p×c×d, got {dims:?}"
            )))
        }
    };
    let grid = kernel.reshape(&[kh, kw, cin * d])?;
    bilinear_resize(&grid, target, target)?.reshape(&[target, target, cin, d])
}

/// Learned position table split into its spatial grid and the optional
/// class-token entry.
#[derive(Clone, Debug, PartialEq)]
pub struct PosEmbedding {
    /// `g_h×g_w×d`.
    pub grid: Tensor,
    /// `d`, classification checkpoints only.
    pub class: Option<Tensor>,
}

impl PosEmbedding {
    /// Splits a `(cls? + g_h·g_w)×d` sequence table.
    pub fn from_sequence(table: &Tensor, g_h: usize, g_w: usize, has_class: bool) -> Result<Self> {
        let (n, d) = match table.dims() {
            &[n, d] => (n, d),
            dims => {
                return Err(dim_err(format!(
                    "position sequence must be n×d, got {dims:?}"
                )))
            }
        };
        let skip = usize::from(has_class);
        if n != g_h * g_w + skip {
            return Err(dim_err(format!(
                "{n} position rows for a {g_h}x{g_w} grid (class token: {has_class})"
            )));
        }
        let data = table.data();
        let class = has_class
            .then(|| Tensor::new(vec![d], data[..d].to_vec()))
            .transpose()?;
        let grid = Tensor::new(vec![g_h, g_w, d], data[skip * d..].to_vec())?;
        Ok(Self { grid, class })
    }
}

/// Resizes the spatial part of a position table to `th×tw`; the class
/// entry is carried through untouched.
pub fn adapt_pos_embedding(pos: &PosEmbedding, th: usize, tw: usize) -> Result<PosEmbedding> {
    Ok(PosEmbedding {
        grid: bilinear_resize(&pos.grid, th, tw)?,
        class: pos.class.clone(),
    })
}
