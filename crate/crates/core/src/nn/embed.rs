use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Sinusoidal conditioning on the diffusion time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeEmbedding {
    pub width: usize,
    pub base: f64,
}

/// What the network is conditioned on: a discrete step or a noise level.
/// Noise levels are embedded through `ln(sigma)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeCondition {
    Step(usize),
    Sigma(f64),
}

impl TimeCondition {
    fn scalar(self) -> Result<f64> {
        match self {
            TimeCondition::Step(t) => Ok(t as f64),
            TimeCondition::Sigma(s) if s > 0.0 && s.is_finite() => Ok(s.ln()),
            TimeCondition::Sigma(s) => Err(Error::Usage(format!("sigma must be positive, got {s}"))),
        }
    }
}

impl TimeEmbedding {
    pub fn new(width: usize, base: f64) -> Result<Self> {
        if width == 0 || width % 2 != 0 {
            return Err(Error::Config(format!("time embedding width must be even and positive, got {width}")));
        }
        if !(base > 0.0) {
            return Err(Error::Config(format!("time embedding base must be positive, got {base}")));
        }
        Ok(TimeEmbedding { width, base })
    }

    /// `[sin(t f_0), cos(t f_0), sin(t f_1), ...]` with `f_i = base^(-i / (width/2))`.
    pub fn embed(&self, cond: TimeCondition) -> Result<Vec<f64>> {
        let t = cond.scalar()?;
        let half = self.width / 2;
        let mut out = Vec::with_capacity(self.width);
        for i in 0..half {
            let freq = self.base.powf(-(i as f64) / half as f64);
            out.push((t * freq).sin());
            out.push((t * freq).cos());
        }
        Ok(out)
    }

    pub fn embed_batch(&self, conds: &[TimeCondition]) -> Result<Tensor> {
        let mut data = Vec::with_capacity(conds.len() * self.width);
        for &c in conds {
            data.extend(self.embed(c)?);
        }
        Tensor::new(vec![conds.len(), self.width], data)
    }
}
