//! Attention-window strategies: the `[s]xN -> ...` notation, window
//! layouts over token grids, and partition/merge of token grids.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{dim_err, Error, Result};
use crate::model::TokenGrid;
use crate::tensor::Tensor;

/// Reciprocal window scales accepted in strategies.
pub const ALLOWED_DENOMINATORS: [u32; 6] = [1, 2, 3, 4, 8, 16];

/// A window scale `1/denominator` relative to the token grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Scale {
    denominator: u32,
}

impl Scale {
    pub const GLOBAL: Scale = Scale { denominator: 1 };
    pub const HALF: Scale = Scale { denominator: 2 };

    pub fn reciprocal(denominator: u32) -> Result<Self> {
        if ALLOWED_DENOMINATORS.contains(&denominator) {
            Ok(Self { denominator })
        } else {
            Err(Error::Contract(format!(
                "window scale 1/{denominator} not in {{1/16, 1/8, 1/4, 1/3, 1/2, 1}}"
            )))
        }
    }

    pub fn denominator(self) -> u32 {
        self.denominator
    }

    pub fn as_f64(self) -> f64 {
        1.0 / self.denominator as f64
    }

    /// Window extent along an axis of `extent` tokens.
    pub fn window_extent(self, extent: usize) -> Option<usize> {
        let k = self.denominator as usize;
        (extent.is_multiple_of(k) && extent >= k).then_some(extent / k)
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.denominator == 1 {
            write!(f, "1")
        } else {
            write!(f, "{}^-1", self.denominator)
        }
    }
}

/// One `[scale]xcount` segment of a strategy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Phase {
    pub scale: Scale,
    pub count: usize,
}

/// Ordered assignment of window scales to consecutive blocks.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct WindowStrategy {
    phases: Vec<Phase>,
}

impl WindowStrategy {
    pub fn new(phases: Vec<Phase>) -> Result<Self> {
        if phases.is_empty() {
            return Err(Error::Contract(
                "window strategy needs at least one phase".into(),
            ));
        }
        if let Some(p) = phases.iter().find(|p| p.count == 0) {
            return Err(Error::Contract(format!(
                "phase [{}] has zero count",
                p.scale
            )));
        }
        Ok(Self { phases })
    }

    /// A single phase covering `depth` blocks.
    pub fn constant(scale: Scale, depth: usize) -> Result<Self> {
        Self::new(vec![Phase {
            scale,
            count: depth,
        }])
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    pub fn depth(&self) -> usize {
        self.phases.iter().map(|p| p.count).sum()
    }

    /// Per-block scales in block order.
    pub fn block_scales(&self) -> impl Iterator<Item = Scale> + '_ {
        self.phases
            .iter()
            .flat_map(|p| std::iter::repeat_n(p.scale, p.count))
    }
}

impl fmt::Display for WindowStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, p) in self.phases.iter().enumerate() {
            if i > 0 {
                write!(f, " -> ")?;
            }
            write!(f, "[{}]x{}", p.scale, p.count)?;
        }
        Ok(())
    }
}

impl FromStr for WindowStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_strategy(s)
    }
}

impl Serialize for WindowStrategy {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for WindowStrategy {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_strategy(&text).map_err(serde::de::Error::custom)
    }
}

/// Canonical text form of a strategy.
pub fn format_strategy(ws: &WindowStrategy) -> String {
    ws.to_string()
}

/// Parses the window-strategy notation.
///
/// ```text
/// strategy := phase (arrow phase)*
/// phase    := "[" scale "]" times count
/// scale    := int | int inverse
/// arrow    := "->" | "→" | "\rightarrow" | "\shortrightarrow"
/// times    := "x" | "X" | "×" | "\times"
/// inverse  := "^-1" | "^{-1}" | "⁻¹"
/// ```
///
/// Whitespace is ignored between tokens.
pub fn parse_strategy(text: &str) -> Result<WindowStrategy> {
    let mut p = Parser { src: text, pos: 0 };
    let mut phases = vec![p.phase()?];
    loop {
        p.skip_ws();
        if p.at_end() {
            break;
        }
        if !p.eat_any(&["->", "→", "\\shortrightarrow", "\\rightarrow"]) {
            return Err(p.error("expected '->' between phases"));
        }
        phases.push(p.phase()?);
    }
    WindowStrategy::new(phases)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn rest(&self) -> &str {
        &self.src[self.pos..]
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn error(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            position: self.pos,
            message: message.into(),
        }
    }

    fn eat(&mut self, token: &str) -> bool {
        self.skip_ws();
        if self.rest().starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn eat_any(&mut self, tokens: &[&str]) -> bool {
        tokens.iter().any(|t| self.eat(t))
    }

    fn integer(&mut self) -> Result<(usize, usize)> {
        self.skip_ws();
        let start = self.pos;
        let digits = self.rest().bytes().take_while(u8::is_ascii_digit).count();
        if digits == 0 {
            return Err(self.error("expected an integer"));
        }
        self.pos += digits;
        self.src[start..self.pos]
            .parse()
            .map(|v| (v, start))
            .map_err(|_| Error::Parse {
                position: start,
                message: "integer out of range".into(),
            })
    }

    fn phase(&mut self) -> Result<Phase> {
        if !self.eat("[") {
            return Err(self.error("expected '[' to open a phase"));
        }
        let (k, k_pos) = self.integer()?;
        let inverted = self.eat_any(&["^-1", "^{-1}", "⁻¹"]);
        if !inverted && k != 1 {
            return Err(Error::Parse {
                position: k_pos,
                message: format!("scale must be 1 or K^-1, got {k}"),
            });
        }
        let scale = u32::try_from(k)
            .ok()
            .and_then(|k| Scale::reciprocal(k).ok())
            .ok_or_else(|| Error::Parse {
                position: k_pos,
                message: format!("window scale 1/{k} is not allowed"),
            })?;
        if !self.eat("]") {
            return Err(self.error("expected ']' to close the scale"));
        }
        if !self.eat_any(&["x", "X", "×", "\\times"]) {
            return Err(self.error("expected 'x' before the block count"));
        }
        let (count, count_pos) = self.integer()?;
        if count == 0 {
            return Err(Error::Parse {
                position: count_pos,
                message: "block count must be >= 1".into(),
            });
        }
        Ok(Phase { scale, count })
    }
}

/// Tiling of an `grid_h×grid_w` token grid by equal, non-overlapping windows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WindowLayout {
    pub grid_h: usize,
    pub grid_w: usize,
    pub window_h: usize,
    pub window_w: usize,
}

impl WindowLayout {
    /// Single window covering the whole grid.
    pub fn global(grid_h: usize, grid_w: usize) -> Self {
        Self {
            grid_h,
            grid_w,
            window_h: grid_h,
            window_w: grid_w,
        }
    }

    pub fn rows(&self) -> usize {
        self.grid_h / self.window_h
    }

    pub fn cols(&self) -> usize {
        self.grid_w / self.window_w
    }

    pub fn num_windows(&self) -> usize {
        self.rows() * self.cols()
    }

    pub fn window_tokens(&self) -> usize {
        self.window_h * self.window_w
    }

    pub fn num_tokens(&self) -> usize {
        self.grid_h * self.grid_w
    }

    fn validate(&self) -> Result<()> {
        let ok = self.window_h >= 1
            && self.window_w >= 1
            && self.grid_h.is_multiple_of(self.window_h)
            && self.grid_w.is_multiple_of(self.window_w);
        if ok {
            Ok(())
        } else {
            Err(dim_err(format!(
                "window {}x{} does not tile grid {}x{}",
                self.window_h, self.window_w, self.grid_h, self.grid_w
            )))
        }
    }

    /// Flat token indices (row-major over the grid) of every window.
    /// Windows are ordered row-major, tokens row-major within a window.
    pub fn window_indices(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::with_capacity(self.num_windows());
        for wr in 0..self.rows() {
            for wc in 0..self.cols() {
                let mut idx = Vec::with_capacity(self.window_tokens());
                for y in 0..self.window_h {
                    for x in 0..self.window_w {
                        idx.push((wr * self.window_h + y) * self.grid_w + wc * self.window_w + x);
                    }
                }
                out.push(idx);
            }
        }
        out
    }
}

/// Window layout for `scale` over a `grid_h×grid_w` grid.
pub fn plan_windows(grid_h: usize, grid_w: usize, scale: Scale) -> Result<WindowLayout> {
    match (scale.window_extent(grid_h), scale.window_extent(grid_w)) {
        (Some(window_h), Some(window_w)) => Ok(WindowLayout {
            grid_h,
            grid_w,
            window_h,
            window_w,
        }),
        _ => Err(Error::Divisibility(format!(
            "grid {grid_h}x{grid_w} is not divisible by window scale [{scale}]"
        ))),
    }
}

/// Splits a token grid into per-window `(tokens × d)` blocks.
pub fn window_partition(tokens: &TokenGrid, layout: &WindowLayout) -> Result<Vec<Tensor>> {
    layout.validate()?;
    if (tokens.h(), tokens.w()) != (layout.grid_h, layout.grid_w) {
        return Err(dim_err(format!(
            "layout grid {}x{} does not match tokens {}x{}",
            layout.grid_h,
            layout.grid_w,
            tokens.h(),
            tokens.w()
        )));
    }
    let d = tokens.d();
    let src = tokens.values().data();
    layout
        .window_indices()
        .into_iter()
        .map(|idx| {
            let mut data = Vec::with_capacity(idx.len() * d);
            for t in idx {
                data.extend_from_slice(&src[t * d..(t + 1) * d]);
            }
            Tensor::new(vec![layout.window_tokens(), d], data)
        })
        .collect()
}

/// Inverse of [`window_partition`].
pub fn window_merge(blocks: &[Tensor], layout: &WindowLayout) -> Result<TokenGrid> {
    layout.validate()?;
    if blocks.len() != layout.num_windows() {
        return Err(dim_err(format!(
            "expected {} window blocks, got {}",
            layout.num_windows(),
            blocks.len()
        )));
    }
    let d = blocks[0].last_dim();
    let mut data = vec![0.0; layout.num_tokens() * d];
    for (block, idx) in blocks.iter().zip(layout.window_indices()) {
        if block.dims() != [layout.window_tokens(), d] {
            return Err(dim_err(format!(
                "window block {:?} should be [{}, {d}]",
                block.dims(),
                layout.window_tokens()
            )));
        }
        for (row, t) in block.data().chunks(d).zip(idx) {
            data[t * d..(t + 1) * d].copy_from_slice(row);
        }
    }
    TokenGrid::new(Tensor::new(vec![layout.grid_h, layout.grid_w, d], data)?)
}

/// One layout per block for a `depth`-block encoder.
pub fn bind_strategy(
    ws: &WindowStrategy,
    depth: usize,
    grid_h: usize,
    grid_w: usize,
) -> Result<Vec<WindowLayout>> {
    if ws.depth() != depth {
        return Err(Error::Binding(format!(
            "strategy '{ws}' covers {} blocks but depth is {depth}",
            ws.depth()
        )));
    }
    let mut layouts = Vec::with_capacity(depth);
    for phase in ws.phases() {
        let layout =
            plan_windows(grid_h, grid_w, phase.scale).map_err(|e| Error::Binding(e.to_string()))?;
        layouts.extend(std::iter::repeat_n(layout, phase.count));
    }
    Ok(layouts)
}
