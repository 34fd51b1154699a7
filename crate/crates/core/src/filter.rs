//! Histogram Bayes filter over an `H×W` pixel grid.
//!
//! The belief is a dense row-major grid of `f64` probabilities. Prediction
//! convolves it with a 3×3 [`MotionKernel`] (zero padding, then
//! renormalization); correction multiplies it element-wise by a
//! [`LikelihoodMap`] and normalizes.

use std::io::{self, Read, Write};

use crate::error::FilterError;

/// Products whose total mass falls below this are treated as degenerate.
pub const DEGENERATE_MASS: f64 = 1e-12;

/// Grid position: `x` is the column, `y` the row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridState {
    pub x: usize,
    pub y: usize,
}

impl GridState {
    pub fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    pub fn index(self, width: usize) -> usize {
        self.y * width + self.x
    }

    pub fn from_index(index: usize, width: usize) -> Self {
        Self {
            x: index % width,
            y: index / width,
        }
    }

    pub fn in_bounds(self, height: usize, width: usize) -> bool {
        self.x < width && self.y < height
    }
}

/// `l1` distance between two states.
pub fn l1_error(s: GridState, s_hat: GridState) -> usize {
    s.x.abs_diff(s_hat.x) + s.y.abs_diff(s_hat.y)
}

/// One-pixel move. North decreases the row, East increases the column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ActionDir {
    North,
    South,
    East,
    West,
}

impl ActionDir {
    pub const ALL: [ActionDir; 4] = [ActionDir::North, ActionDir::South, ActionDir::East, ActionDir::West];

    /// `(dx, dy)` of the move.
    pub fn delta(self) -> (isize, isize) {
        match self {
            ActionDir::North => (0, -1),
            ActionDir::South => (0, 1),
            ActionDir::East => (1, 0),
            ActionDir::West => (-1, 0),
        }
    }

    pub fn index(self) -> usize {
        match self {
            ActionDir::North => 0,
            ActionDir::South => 1,
            ActionDir::East => 2,
            ActionDir::West => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ActionDir::North => "north",
            ActionDir::South => "south",
            ActionDir::East => "east",
            ActionDir::West => "west",
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            ActionDir::North => ActionDir::South,
            ActionDir::South => ActionDir::North,
            ActionDir::East => ActionDir::West,
            ActionDir::West => ActionDir::East,
        }
    }
}

/// 3×3 transition kernel. Entry `(dy + 1) * 3 + (dx + 1)` is the probability
/// of moving by `(dx, dy)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MotionKernel {
    weights: [f64; 9],
}

impl MotionKernel {
    pub fn new(weights: [f64; 9]) -> Result<Self, FilterError> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(FilterError::InvalidKernel(format!("negative or non-finite entry in {weights:?}")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-7 {
            return Err(FilterError::InvalidKernel(format!("entries sum to {sum}")));
        }
        Ok(Self { weights })
    }

    pub fn identity() -> Self {
        let mut w = [0.0; 9];
        w[4] = 1.0;
        Self { weights: w }
    }

    pub fn uniform() -> Self {
        Self { weights: [1.0 / 9.0; 9] }
    }

    /// Moves by `delta` with probability `1 − stay`, stays otherwise.
    pub fn shift(delta: (isize, isize), stay: f64) -> Self {
        let mut w = [0.0; 9];
        w[Self::offset_index(delta.0, delta.1)] += 1.0 - stay;
        w[4] += stay;
        Self { weights: w }
    }

    pub fn offset_index(dx: isize, dy: isize) -> usize {
        assert!((-1..=1).contains(&dx) && (-1..=1).contains(&dy), "offset out of kernel");
        ((dy + 1) * 3 + (dx + 1)) as usize
    }

    pub fn weights(&self) -> &[f64; 9] {
        &self.weights
    }

    pub fn at(&self, dx: isize, dy: isize) -> f64 {
        self.weights[Self::offset_index(dx, dy)]
    }
}

/// Per-pixel observation probabilities in `[0, 1]`, not normalized.
#[derive(Clone, Debug, PartialEq)]
pub struct LikelihoodMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl LikelihoodMap {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self, FilterError> {
        if height == 0 || width == 0 {
            return Err(FilterError::EmptyGrid { height, width });
        }
        if values.len() != height * width {
            return Err(FilterError::InvalidBelief(format!(
                "{} values for a {height}x{width} likelihood map",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(FilterError::InvalidBelief(format!("likelihood entry {v} outside [0, 1]")));
        }
        Ok(Self { height, width, values })
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            values: vec![value; height * width],
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, s: GridState) -> f64 {
        self.values[s.index(self.width)]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Belief {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl Belief {
    pub fn uniform(height: usize, width: usize) -> Result<Self, FilterError> {
        if height == 0 || width == 0 {
            return Err(FilterError::EmptyGrid { height, width });
        }
        let n = height * width;
        Ok(Self {
            height,
            width,
            values: vec![1.0 / n as f64; n],
        })
    }

    pub fn delta(height: usize, width: usize, s: GridState) -> Result<Self, FilterError> {
        if height == 0 || width == 0 {
            return Err(FilterError::EmptyGrid { height, width });
        }
        if !s.in_bounds(height, width) {
            return Err(FilterError::InvalidBelief(format!("{s:?} outside {height}x{width}")));
        }
        let mut values = vec![0.0; height * width];
        values[s.index(width)] = 1.0;
        Ok(Self { height, width, values })
    }

    /// Normalizes arbitrary non-negative weights into a belief.
    pub fn from_weights(height: usize, width: usize, values: Vec<f64>) -> Result<Self, FilterError> {
        if height == 0 || width == 0 {
            return Err(FilterError::EmptyGrid { height, width });
        }
        if values.len() != height * width {
            return Err(FilterError::InvalidBelief(format!(
                "{} values for a {height}x{width} grid",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(FilterError::InvalidBelief("negative or non-finite weight".into()));
        }
        let total: f64 = values.iter().sum();
        if total <= 0.0 {
            return Err(FilterError::InvalidBelief("weights sum to zero".into()));
        }
        Ok(Self {
            height,
            width,
            values: values.into_iter().map(|v| v / total).collect(),
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, s: GridState) -> f64 {
        self.values[s.index(self.width)]
    }

    /// Zero-padded 3×3 convolution with the kernel followed by
    /// renormalization. If no mass remains on the grid the result is uniform.
    pub fn predict(&self, kernel: &MotionKernel) -> Belief {
        let (h, w) = (self.height as isize, self.width as isize);
        let mut out = vec![0.0; self.values.len()];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for dy in -1..=1isize {
                    for dx in -1..=1isize {
                        let (sy, sx) = (y - dy, x - dx);
                        if sy < 0 || sy >= h || sx < 0 || sx >= w {
                            continue;
                        }
                        acc += kernel.at(dx, dy) * self.values[(sy * w + sx) as usize];
                    }
                }
                out[(y * w + x) as usize] = acc;
            }
        }
        let total: f64 = out.iter().sum();
        if total <= 0.0 {
            return Belief::uniform(self.height, self.width).expect("nonempty grid");
        }
        out.iter_mut().for_each(|v| *v /= total);
        Belief {
            height: self.height,
            width: self.width,
            values: out,
        }
    }

    /// `normalize(belief ⊙ likelihood)`.
    pub fn correct(&self, likelihood: &LikelihoodMap) -> Result<Belief, FilterError> {
        if likelihood.dims() != self.dims() {
            return Err(FilterError::ShapeMismatch {
                belief: self.dims(),
                likelihood: likelihood.dims(),
            });
        }
        let product: Vec<f64> = self.values.iter().zip(&likelihood.values).map(|(b, l)| b * l).collect();
        let mass: f64 = product.iter().sum();
        if !(mass >= DEGENERATE_MASS) {
            return Err(FilterError::Degenerate { mass });
        }
        Ok(Belief {
            height: self.height,
            width: self.width,
            values: product.into_iter().map(|v| v / mass).collect(),
        })
    }

    /// Like [`Belief::correct`], but a degenerate update resets to the
    /// uniform belief. The flag reports whether a reset happened.
    pub fn correct_or_reset(&self, likelihood: &LikelihoodMap) -> Result<(Belief, bool), FilterError> {
        match self.correct(likelihood) {
            Ok(b) => Ok((b, false)),
            Err(FilterError::Degenerate { .. }) => Ok((Belief::uniform(self.height, self.width)?, true)),
            Err(e) => Err(e),
        }
    }

    /// Argmax, ties to the lowest row-major index.
    pub fn infer_state(&self) -> GridState {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        GridState::from_index(best, self.width)
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self.values.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    }

    /// `u32` height, `u32` width, then row-major `f32` values, little-endian.
    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(&(self.height as u32).to_le_bytes())?;
        w.write_all(&(self.width as u32).to_le_bytes())?;
        for &v in &self.values {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> io::Result<Belief> {
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let height = u32::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let width = u32::from_le_bytes(word) as usize;
        let mut values = Vec::with_capacity(height * width);
        for _ in 0..height * width {
            r.read_exact(&mut word)?;
            values.push(f32::from_le_bytes(word) as f64);
        }
        Belief::from_weights(height, width, values).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }
}
