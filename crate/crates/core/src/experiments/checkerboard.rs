use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::SignalGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckerboardConfig {
    pub count: usize,
    pub size: usize,
    /// Tile edge in pixels.
    pub tile: usize,
    pub seed: u64,
}

impl Default for CheckerboardConfig {
    fn default() -> Self {
        CheckerboardConfig {
            count: 512,
            size: 64,
            tile: 8,
            seed: 0,
        }
    }
}

impl CheckerboardConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Config("checkerboard count must be at least 1".into()));
        }
        if self.tile == 0 {
            return Err(Error::Config("checkerboard tile must be at least 1".into()));
        }
        if self.size < 2 * self.tile {
            return Err(Error::Config(format!(
                "checkerboard size {} is smaller than two tiles of {}",
                self.size, self.tile
            )));
        }
        Ok(())
    }

    /// Cycles per image of the square wave along each axis.
    pub fn fundamental(&self) -> f64 {
        self.size as f64 / (2 * self.tile) as f64
    }

    /// Text echo in `key = value` form.
    pub fn echo(&self) -> String {
        format!(
            "count = {}\nsize = {}\ntile = {}\nseed = {}\n",
            self.count, self.size, self.tile, self.seed
        )
    }
}

/// Single image with the pattern offset by `(sy, sx)` pixels.
pub fn checkerboard_image(size: usize, tile: usize, sy: usize, sx: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let parity = ((y + sy) / tile + (x + sx) / tile) % 2;
            out.push(if parity == 0 { 1.0 } else { -1.0 });
        }
    }
    out
}

/// `count` shifted checkerboards in `{-1, +1}`, shape `[count, size, size]`.
pub fn gen_checkerboard(cfg: &CheckerboardConfig) -> Result<SignalGrid> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let period = 2 * cfg.tile;
    let mut data = Vec::with_capacity(cfg.count * cfg.size * cfg.size);
    for _ in 0..cfg.count {
        let sy = rng.random_range(0..period);
        let sx = rng.random_range(0..period);
        data.extend(checkerboard_image(cfg.size, cfg.tile, sy, sx));
    }
    SignalGrid::from_vec(vec![cfg.count, cfg.size, cfg.size], data)
}
