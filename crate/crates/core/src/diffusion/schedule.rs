use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::SignalGrid;

/// Discrete DDPM variance schedule. Index `t` runs over `1..=T`; `alpha_bar(0)`
/// is defined as 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSchedule {
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl DiscreteSchedule {
    /// Validates `0 < beta < 1` and a non-decreasing sequence.
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::Config("noise schedule needs at least one step".into()));
        }
        for (i, &b) in betas.iter().enumerate() {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::Config(format!("beta_{} = {b} is outside (0, 1)", i + 1)));
            }
            if i > 0 && b < betas[i - 1] {
                return Err(Error::Config(format!("betas decrease at step {}", i + 1)));
            }
        }
        let mut alpha_bars = Vec::with_capacity(betas.len());
        let mut acc = 1.0;
        for &b in &betas {
            acc *= 1.0 - b;
            alpha_bars.push(acc);
        }
        Ok(DiscreteSchedule { betas, alpha_bars })
    }

    /// `T` betas evenly spaced from `beta_min` to `beta_max`.
    pub fn linear(steps: usize, beta_min: f64, beta_max: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Config("T must be at least 1".into()));
        }
        if beta_max < beta_min {
            return Err(Error::Config(format!("beta_max {beta_max} is below beta_min {beta_min}")));
        }
        let betas = (0..steps)
            .map(|i| {
                if steps == 1 {
                    beta_min
                } else {
                    beta_min + (beta_max - beta_min) * i as f64 / (steps - 1) as f64
                }
            })
            .collect();
        DiscreteSchedule::from_betas(betas)
    }

    /// A schedule over `taus` (ascending original indices) whose cumulative
    /// products match the original at those indices. Used for strided ancestral
    /// sampling.
    pub fn respaced(&self, taus: &[usize]) -> Result<Self> {
        let mut prev = 1.0;
        let mut betas = Vec::with_capacity(taus.len());
        let mut alpha_bars = Vec::with_capacity(taus.len());
        for &t in taus {
            let ab = self.alpha_bar(t)?;
            betas.push(1.0 - ab / prev);
            alpha_bars.push(ab);
            prev = ab;
        }
        Ok(DiscreteSchedule { betas, alpha_bars })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    fn check(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(Error::Usage(format!("t = {t} outside 1..={}", self.steps())));
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> Result<f64> {
        self.check(t)?;
        Ok(self.betas[t - 1])
    }

    pub fn alpha(&self, t: usize) -> Result<f64> {
        Ok(1.0 - self.beta(t)?)
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        if t == 0 {
            return Ok(1.0);
        }
        self.check(t)?;
        Ok(self.alpha_bars[t - 1])
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    /// Noise level of the equivalent additive corruption, `sqrt((1 - ab) / ab)`.
    pub fn equivalent_sigma(&self, t: usize) -> Result<f64> {
        let ab = self.alpha_bar(t)?;
        Ok(((1.0 - ab) / ab).sqrt())
    }
}

/// Continuous noise-level parameterization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdmSchedule {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub rho: f64,
    pub sigma_data: f64,
}

impl Default for EdmSchedule {
    fn default() -> Self {
        EdmSchedule {
            sigma_min: 0.002,
            sigma_max: 80.0,
            rho: 7.0,
            sigma_data: 0.5,
        }
    }
}

/// Mean and standard deviation of `ln sigma` during training.
pub const TRAIN_LOG_SIGMA_MEAN: f64 = -1.2;
pub const TRAIN_LOG_SIGMA_STD: f64 = 1.2;

impl EdmSchedule {
    pub fn new(sigma_min: f64, sigma_max: f64, rho: f64, sigma_data: f64) -> Result<Self> {
        if !(sigma_min > 0.0 && sigma_max > sigma_min && rho > 0.0 && sigma_data > 0.0) {
            return Err(Error::Config(format!(
                "invalid EDM parameters: sigma in [{sigma_min}, {sigma_max}], rho {rho}, sigma_data {sigma_data}"
            )));
        }
        Ok(EdmSchedule {
            sigma_min,
            sigma_max,
            rho,
            sigma_data,
        })
    }

    /// `n` decreasing noise levels from `sigma_max` to `sigma_min`.
    pub fn sigmas(&self, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![self.sigma_max];
        }
        let inv = 1.0 / self.rho;
        let (hi, lo) = (self.sigma_max.powf(inv), self.sigma_min.powf(inv));
        (0..n)
            .map(|i| (hi + i as f64 / (n - 1) as f64 * (lo - hi)).powf(self.rho))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSchedule {
    Discrete(DiscreteSchedule),
    Edm(EdmSchedule),
}

fn combine(a: &SignalGrid, b: &SignalGrid, ca: &[f64], cb: &[f64]) -> Result<SignalGrid> {
    a.require_same_shape(b, "noise combination")?;
    let per = a.sample_len();
    let data = a
        .data()
        .chunks(per)
        .zip(b.data().chunks(per))
        .zip(ca.iter().zip(cb))
        .flat_map(|((xa, xb), (&sa, &sb))| xa.iter().zip(xb).map(move |(u, v)| sa * u + sb * v))
        .collect();
    SignalGrid::from_vec(a.shape().to_vec(), data)
}

/// `x_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) eps`, with one `t` per sample.
pub fn forward_diffuse(x0: &SignalGrid, eps: &SignalGrid, ts: &[usize], schedule: &DiscreteSchedule) -> Result<SignalGrid> {
    if ts.len() != x0.batch() {
        return Err(Error::shape("forward_diffuse times", &[x0.batch()], &[ts.len()]));
    }
    let mut ca = Vec::with_capacity(ts.len());
    let mut cb = Vec::with_capacity(ts.len());
    for &t in ts {
        let ab = schedule.alpha_bar(t)?;
        if t == 0 {
            return Err(Error::Usage("forward_diffuse needs t >= 1".into()));
        }
        ca.push(ab.sqrt());
        cb.push((1.0 - ab).sqrt());
    }
    combine(x0, eps, &ca, &cb)
}

/// `x_sigma = x0 + sigma eps`, with one `sigma` per sample.
pub fn edm_noise(x0: &SignalGrid, eps: &SignalGrid, sigmas: &[f64]) -> Result<SignalGrid> {
    if sigmas.len() != x0.batch() {
        return Err(Error::shape("edm_noise sigmas", &[x0.batch()], &[sigmas.len()]));
    }
    if let Some(s) = sigmas.iter().find(|&&s| !(s > 0.0)) {
        return Err(Error::Usage(format!("sigma must be positive, got {s}")));
    }
    combine(x0, eps, &vec![1.0; sigmas.len()], sigmas)
}

/// Training noise level: `ln sigma ~ N(-1.2, 1.2^2)`, clamped to the schedule range.
pub fn sample_sigma_train<R: Rng + ?Sized>(rng: &mut R, edm: &EdmSchedule) -> f64 {
    let normal = Normal::new(TRAIN_LOG_SIGMA_MEAN, TRAIN_LOG_SIGMA_STD).expect("fixed valid parameters");
    normal.sample(rng).exp().clamp(edm.sigma_min, edm.sigma_max)
}
