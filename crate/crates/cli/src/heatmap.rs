//! Belief heatmaps as binary PGM images.

use std::io::{self, Write};

use tactloc::filter::{Belief, GridState};

/// Brightest gray used for belief mass; the true state is drawn above it.
pub const BELIEF_LEVEL: u8 = 200;
pub const MARK_LEVEL: u8 = 255;

/// Gray levels `round(200 · b / max b)` per cell, with `mark` set to 255.
pub fn render(belief: &Belief, mark: Option<GridState>) -> Vec<u8> {
    let (_, w) = belief.dims();
    let max = belief.values().iter().copied().fold(0.0, f64::max);
    let mut px: Vec<u8> = belief
        .values()
        .iter()
        .map(|&b| {
            if max > 0.0 {
                (BELIEF_LEVEL as f64 * b / max).round() as u8
            } else {
                0
            }
        })
        .collect();
    if let Some(s) = mark {
        px[s.index(w)] = MARK_LEVEL;
    }
    px
}

/// Writes a P5 image, each cell drawn as a `scale × scale` block.
pub fn write_pgm<W: Write>(mut out: W, pixels: &[u8], height: usize, width: usize, scale: usize) -> io::Result<()> {
    let scale = scale.max(1);
    write!(out, "P5\n{} {}\n255\n", width * scale, height * scale)?;
    let mut row = Vec::with_capacity(width * scale);
    for y in 0..height {
        row.clear();
        for &p in &pixels[y * width..(y + 1) * width] {
            row.extend(std::iter::repeat_n(p, scale));
        }
        for _ in 0..scale {
            out.write_all(&row)?;
        }
    }
    Ok(())
}
