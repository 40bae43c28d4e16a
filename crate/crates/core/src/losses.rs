//! Training objectives: denoising terms, spectral regularizers, and their
//! weighted combination.
//!
//! Every loss is an unnormalized per-sample sum reduced by a batch mean. The
//! `*_graph` builders record on a [`Tape`] and return per-sample values of
//! shape `[B]`; the plain functions evaluate the same graphs on constants.

use std::collections::HashMap;
use std::fmt;

use crate::diffusion::schedule::DiscreteSchedule;
use crate::error::{Error, Result};
use crate::nn::{Tape, Var};
use crate::tensor::SignalGrid;
use crate::transforms::wavelet::{band_layout, filter_bank, validate_levels, FilterBank, Orientation, WaveletKind};

/// Default data standard deviation for [`edm_weight`].
pub const DEFAULT_SIGMA_DATA: f64 = 0.5;

/// Per-band weights of the wavelet loss. Bands without an override use
/// `approx` or `detail`. A weight of zero switches a band off.
#[derive(Debug, Clone, PartialEq)]
pub struct BandWeights {
    pub approx: f64,
    pub detail: f64,
    pub overrides: HashMap<(usize, Orientation), f64>,
}

impl BandWeights {
    pub fn uniform(approx: f64, detail: f64) -> Self {
        BandWeights {
            approx,
            detail,
            overrides: HashMap::new(),
        }
    }

    pub fn gamma(&self, level: usize, orientation: Orientation) -> f64 {
        if let Some(&g) = self.overrides.get(&(level, orientation)) {
            return g;
        }
        if orientation == Orientation::Approx {
            self.approx
        } else {
            self.detail
        }
    }

    fn validate(&self) -> Result<()> {
        let all = [self.approx, self.detail].into_iter().chain(self.overrides.values().copied());
        for g in all {
            if !(g.is_finite() && g >= 0.0) {
                return Err(Error::Config(format!("wavelet band weight {g} must be finite and non-negative")));
            }
        }
        Ok(())
    }
}

impl Default for BandWeights {
    fn default() -> Self {
        BandWeights::uniform(1.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveletLossConfig {
    pub bank: FilterBank,
    pub levels: usize,
    pub weights: BandWeights,
}

impl WaveletLossConfig {
    pub fn new(kind: WaveletKind, levels: usize, weights: BandWeights) -> Result<Self> {
        if levels == 0 {
            return Err(Error::Config("wavelet level count must be at least 1".into()));
        }
        weights.validate()?;
        Ok(WaveletLossConfig {
            bank: filter_bank(kind)?,
            levels,
            weights,
        })
    }

    /// One weight per coefficient, in pyramid flattening order.
    pub fn coefficient_weights(&self, spatial: &[usize]) -> Result<Vec<f64>> {
        validate_levels(spatial, self.levels)?;
        self.weights.validate()?;
        let mut out = Vec::new();
        for (level, orientation, len) in band_layout(spatial, self.levels) {
            out.extend(std::iter::repeat_n(self.weights.gamma(level, orientation), len));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpectralLossKind {
    FourierAmplitude,
    FourierAmpPhase,
    Wavelet(WaveletLossConfig),
}

impl SpectralLossKind {
    pub fn name(&self) -> &'static str {
        match self {
            SpectralLossKind::FourierAmplitude => "fourier-amplitude",
            SpectralLossKind::FourierAmpPhase => "fourier-amp-phase",
            SpectralLossKind::Wavelet(_) => "wavelet",
        }
    }
}

impl fmt::Display for SpectralLossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Values of one evaluation of the combined objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub denoise: f64,
    pub spectral: f64,
    /// The scalar `lambda` with `total = denoise + lambda * spectral`. For
    /// per-sample weights this is the spectral-weighted mean of the weights.
    pub lambda: f64,
    pub total: f64,
}

fn check_pair(a: &SignalGrid, b: &SignalGrid, context: &'static str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Usage(format!(
            "{context}: operand shapes differ ({:?} vs {:?})",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn check_lambda(l: f64) -> Result<()> {
    if !(l.is_finite() && l >= 0.0) {
        return Err(Error::Config(format!("lambda must be finite and non-negative, got {l}")));
    }
    Ok(())
}

/// Per-sample `||a - b||^2`.
pub fn squared_error_graph(tape: &mut Tape, a: Var, b: Var) -> Var {
    let d = tape.sub(a, b);
    let sq = tape.square(d);
    tape.sum_rows(sq)
}

/// Per-sample `w_b ||eps_true - eps_pred||^2`.
pub fn edm_graph(tape: &mut Tape, eps_true: Var, eps_pred: Var, weights: &[f64]) -> Var {
    let per = squared_error_graph(tape, eps_true, eps_pred);
    tape.scale_rows(per, weights)
}

fn amplitude_and_phase(tape: &mut Tape, x: Var) -> (Var, Var) {
    let z = tape.dft(x);
    (tape.complex_abs(z), tape.complex_arg(z))
}

/// Per-sample `||A(x0) - A(xhat)||_1`.
pub fn fourier_amplitude_graph(tape: &mut Tape, x0: Var, xhat: Var) -> Var {
    let z0 = tape.dft(x0);
    let z1 = tape.dft(xhat);
    let a0 = tape.complex_abs(z0);
    let a1 = tape.complex_abs(z1);
    let d = tape.sub(a0, a1);
    let ad = tape.abs(d);
    tape.sum_rows(ad)
}

/// Per-sample `||A0 - A1||_1 * (1 + ||wrap(phi0 - phi1)||_1)`.
pub fn fourier_amp_phase_graph(tape: &mut Tape, x0: Var, xhat: Var) -> Var {
    let (a0, p0) = amplitude_and_phase(tape, x0);
    let (a1, p1) = amplitude_and_phase(tape, xhat);
    let da = tape.sub(a0, a1);
    let da = tape.abs(da);
    let amp = tape.sum_rows(da);
    let dp = tape.sub(p0, p1);
    let dp = tape.wrap_angle(dp);
    let dp = tape.abs(dp);
    let phase = tape.sum_rows(dp);
    let factor = tape.offset(phase, 1.0);
    tape.mul(amp, factor)
}

/// Per-sample `sum_bands gamma * ||W0 - W1||_1`, approximation band included.
pub fn wavelet_graph(tape: &mut Tape, x0: Var, xhat: Var, cfg: &WaveletLossConfig) -> Result<Var> {
    let spatial = tape.shape(x0)[1..].to_vec();
    let weights = cfg.coefficient_weights(&spatial)?;
    let w0 = tape.dwt(x0, &cfg.bank, cfg.levels)?;
    let w1 = tape.dwt(xhat, &cfg.bank, cfg.levels)?;
    let d = tape.sub(w0, w1);
    let d = tape.abs(d);
    let d = tape.mul_broadcast(d, &weights);
    Ok(tape.sum_rows(d))
}

pub fn spectral_graph(tape: &mut Tape, kind: &SpectralLossKind, x0: Var, xhat: Var) -> Result<Var> {
    Ok(match kind {
        SpectralLossKind::FourierAmplitude => fourier_amplitude_graph(tape, x0, xhat),
        SpectralLossKind::FourierAmpPhase => fourier_amp_phase_graph(tape, x0, xhat),
        SpectralLossKind::Wavelet(cfg) => wavelet_graph(tape, x0, xhat, cfg)?,
    })
}

/// `xhat = (x - a_b * eps) * c_b` per sample. With `a = sqrt(1 - ab)`,
/// `c = 1 / sqrt(ab)` this inverts the discrete forward process; with
/// `a = sigma`, `c = 1` it inverts additive corruption.
pub fn xhat0_graph(tape: &mut Tape, x: Var, eps_pred: Var, noise_coef: &[f64], scale: &[f64]) -> Var {
    let n = tape.scale_rows(eps_pred, noise_coef);
    let d = tape.sub(x, n);
    tape.scale_rows(d, scale)
}

/// `noise_coef` and `scale` for [`xhat0_graph`] under a discrete schedule.
pub fn supervision_coefficients(schedule: &DiscreteSchedule, ts: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut a = Vec::with_capacity(ts.len());
    let mut c = Vec::with_capacity(ts.len());
    for &t in ts {
        if t == 0 {
            return Err(Error::Usage("spectral supervision needs t >= 1".into()));
        }
        let ab = schedule.alpha_bar(t)?;
        if ab <= 0.0 {
            return Err(Error::SingularSchedule { t, alpha_bar: ab });
        }
        a.push((1.0 - ab).sqrt());
        c.push(1.0 / ab.sqrt());
    }
    Ok((a, c))
}

/// Clean-signal estimate `(x_t - sqrt(1 - ab_t) eps) / sqrt(ab_t)`, one `t`
/// per sample.
pub fn spectral_supervision_target(
    x_t: &SignalGrid,
    eps_pred: &SignalGrid,
    schedule: &DiscreteSchedule,
    ts: &[usize],
) -> Result<SignalGrid> {
    check_pair(x_t, eps_pred, "spectral_supervision_target")?;
    if ts.len() != x_t.batch() {
        return Err(Error::shape("spectral_supervision_target times", &[x_t.batch()], &[ts.len()]));
    }
    let (a, c) = supervision_coefficients(schedule, ts)?;
    let per = x_t.sample_len();
    let data = x_t
        .data()
        .chunks(per)
        .zip(eps_pred.data().chunks(per))
        .enumerate()
        .flat_map(|(b, (x, e))| {
            let (a, c) = (a[b], c[b]);
            x.iter().zip(e).map(move |(x, e)| (x - a * e) * c)
        })
        .collect();
    SignalGrid::from_vec(x_t.shape().to_vec(), data)
}

/// Evaluates a per-sample graph builder on two constant grids.
fn per_sample_values(
    a: &SignalGrid,
    b: &SignalGrid,
    context: &'static str,
    build: impl FnOnce(&mut Tape, Var, Var) -> Result<Var>,
) -> Result<Vec<f64>> {
    check_pair(a, b, context)?;
    let mut tape = Tape::new();
    let va = tape.constant(a.tensor());
    let vb = tape.constant(b.tensor());
    let out = build(&mut tape, va, vb)?;
    Ok(tape.value(out).to_vec())
}

fn batch_mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn ddpm_loss(eps_true: &SignalGrid, eps_pred: &SignalGrid) -> Result<f64> {
    let v = per_sample_values(eps_true, eps_pred, "ddpm_loss", |t, a, b| Ok(squared_error_graph(t, a, b)))?;
    Ok(batch_mean(&v))
}

/// `(sigma^2 + sigma_data^2) / (sigma * sigma_data)^2`.
pub fn edm_weight(sigma: f64, sigma_data: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma_data > 0.0) {
        return Err(Error::Usage(format!(
            "edm_weight needs positive sigma and sigma_data, got {sigma} and {sigma_data}"
        )));
    }
    Ok((sigma * sigma + sigma_data * sigma_data) / (sigma * sigma_data).powi(2))
}

pub fn edm_weights(sigmas: &[f64], sigma_data: f64) -> Result<Vec<f64>> {
    sigmas.iter().map(|&s| edm_weight(s, sigma_data)).collect()
}

pub fn edm_loss(eps_true: &SignalGrid, eps_pred: &SignalGrid, sigmas: &[f64], sigma_data: f64) -> Result<f64> {
    if sigmas.len() != eps_true.batch() {
        return Err(Error::shape("edm_loss sigmas", &[eps_true.batch()], &[sigmas.len()]));
    }
    let w = edm_weights(sigmas, sigma_data)?;
    let v = per_sample_values(eps_true, eps_pred, "edm_loss", |t, a, b| Ok(edm_graph(t, a, b, &w)))?;
    Ok(batch_mean(&v))
}

/// Per-sample spectral loss values.
pub fn spectral_loss_per_sample(kind: &SpectralLossKind, x0: &SignalGrid, xhat: &SignalGrid) -> Result<Vec<f64>> {
    per_sample_values(x0, xhat, "spectral loss", |t, a, b| spectral_graph(t, kind, a, b))
}

pub fn spectral_loss(kind: &SpectralLossKind, x0: &SignalGrid, xhat: &SignalGrid) -> Result<f64> {
    Ok(batch_mean(&spectral_loss_per_sample(kind, x0, xhat)?))
}

pub fn fourier_amplitude_loss(x0: &SignalGrid, xhat: &SignalGrid) -> Result<f64> {
    spectral_loss(&SpectralLossKind::FourierAmplitude, x0, xhat)
}

pub fn fourier_amp_phase_loss(x0: &SignalGrid, xhat: &SignalGrid) -> Result<f64> {
    spectral_loss(&SpectralLossKind::FourierAmpPhase, x0, xhat)
}

pub fn wavelet_loss(x0: &SignalGrid, xhat: &SignalGrid, cfg: &WaveletLossConfig) -> Result<f64> {
    spectral_loss(&SpectralLossKind::Wavelet(cfg.clone()), x0, xhat)
}

/// `total = denoise + lambda * spectral` with one scalar `lambda`.
pub fn total_loss(denoise: f64, spectral: f64, lambda: f64) -> Result<LossBreakdown> {
    check_lambda(lambda)?;
    Ok(LossBreakdown {
        denoise,
        spectral,
        lambda,
        total: denoise + lambda * spectral,
    })
}

/// Per-sample weighting: `total = denoise + mean_b(lambda_b * spectral_b)`.
/// The reported `spectral` is the batch mean and `lambda` the effective weight
/// `sum(lambda_b s_b) / sum(s_b)` (the mean weight when every `s_b` is zero).
pub fn total_loss_per_sample(denoise: f64, spectral: &[f64], lambdas: &[f64]) -> Result<LossBreakdown> {
    if spectral.len() != lambdas.len() || spectral.is_empty() {
        return Err(Error::shape("total_loss_per_sample", &[spectral.len()], &[lambdas.len()]));
    }
    for &l in lambdas {
        check_lambda(l)?;
    }
    let weighted: f64 = spectral.iter().zip(lambdas).map(|(s, l)| s * l).sum();
    let mass: f64 = spectral.iter().sum();
    let lambda = if mass != 0.0 { weighted / mass } else { batch_mean(lambdas) };
    Ok(LossBreakdown {
        denoise,
        spectral: mass / spectral.len() as f64,
        lambda,
        total: denoise + weighted / spectral.len() as f64,
    })
}

/// Scalar objective `mean_b(denoise_b + lambda_b * spectral_b)` on the tape.
pub fn combined_graph(tape: &mut Tape, denoise: Var, spectral: Option<(Var, &[f64])>) -> Var {
    let per = match spectral {
        Some((s, lambdas)) => {
            let ws = tape.scale_rows(s, lambdas);
            tape.add(denoise, ws)
        }
        None => denoise,
    };
    tape.mean(per)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn grid(shape: &[usize], data: Vec<f64>) -> SignalGrid {
        SignalGrid::from_vec(shape.to_vec(), data).unwrap()
    }

    fn random(shape: &[usize], seed: u64) -> SignalGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        grid(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    fn naive_dft(x: &[f64], h: usize, w: usize) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(h * w);
        for u in 0..h {
            for v in 0..w {
                let (mut re, mut im) = (0.0, 0.0);
                for y in 0..h {
                    for xx in 0..w {
                        let a = -2.0 * PI * ((u * y) as f64 / h as f64 + (v * xx) as f64 / w as f64);
                        re += x[y * w + xx] * a.cos();
                        im += x[y * w + xx] * a.sin();
                    }
                }
                out.push((re, im));
            }
        }
        out
    }

    fn wrap(mut a: f64) -> f64 {
        while a > PI {
            a -= 2.0 * PI;
        }
        while a <= -PI {
            a += 2.0 * PI;
        }
        a
    }

    fn amp_phase_oracle(x0: &[f64], x1: &[f64], h: usize, w: usize) -> (f64, f64) {
        let (f0, f1) = (naive_dft(x0, h, w), naive_dft(x1, h, w));
        let (mut amp, mut ph) = (0.0, 0.0);
        for ((r0, i0), (r1, i1)) in f0.into_iter().zip(f1) {
            amp += ((r0 * r0 + i0 * i0).sqrt() - (r1 * r1 + i1 * i1).sqrt()).abs();
            ph += wrap(i0.atan2(r0) - i1.atan2(r1)).abs();
        }
        (amp, amp * (1.0 + ph))
    }

    #[test]
    fn ddpm_cases() {
        let a = random(&[2, 4, 4], 1);
        assert_eq!(ddpm_loss(&a, &a).unwrap(), 0.0);
        let z = grid(&[1, 5], vec![0.0; 5]);
        let o = grid(&[1, 5], vec![1.0; 5]);
        assert_eq!(ddpm_loss(&z, &o).unwrap(), 5.0);
        let b = random(&[2, 4, 4], 2);
        let mut want = 0.0;
        for s in 0..2 {
            for i in 0..16 {
                want += (a.sample(s)[i] - b.sample(s)[i]).powi(2);
            }
        }
        assert!((ddpm_loss(&a, &b).unwrap() - want / 2.0).abs() < 1e-12);
        assert!(matches!(ddpm_loss(&a, &z), Err(Error::Usage(_))));
    }

    #[test]
    fn edm_weight_values() {
        assert_eq!(edm_weight(1.0, 1.0).unwrap(), 2.0);
        assert!((edm_weight(0.5, 0.5).unwrap() - 8.0).abs() < 1e-12);
        assert!((edm_weight(1e3, 0.5).unwrap() - 4.0).abs() / 4.0 < 1e-3);
        assert!(edm_weight(0.0, 0.5).is_err());
        assert!(edm_weight(1.0, -1.0).is_err());
    }

    #[test]
    fn edm_loss_cases() {
        let a = random(&[3, 4], 4);
        assert_eq!(edm_loss(&a, &a, &[0.1, 1.0, 10.0], 0.5).unwrap(), 0.0);
        let z = grid(&[1, 1], vec![0.0]);
        let o = grid(&[1, 1], vec![1.0]);
        assert_eq!(edm_loss(&z, &o, &[1.0], 1.0).unwrap(), 2.0);
        let b = random(&[3, 4], 5);
        let sig = [0.1, 1.0, 10.0];
        let mut want = 0.0;
        for s in 0..3 {
            let w = (sig[s] * sig[s] + 0.25) / (sig[s] * 0.5f64).powi(2);
            want += w * (0..4).map(|i| (a.sample(s)[i] - b.sample(s)[i]).powi(2)).sum::<f64>();
        }
        assert!((edm_loss(&a, &b, &sig, 0.5).unwrap() - want / 3.0).abs() < 1e-12 * want);
    }

    #[test]
    fn amplitude_cases() {
        let x = random(&[2, 8, 8], 7);
        assert_eq!(fourier_amplitude_loss(&x, &x).unwrap(), 0.0);
        let mut shifted = Vec::new();
        for s in 0..2 {
            for y in 0..8 {
                for c in 0..8 {
                    shifted.push(x.sample(s)[((y + 3) % 8) * 8 + (c + 5) % 8]);
                }
            }
        }
        let shifted = grid(&[2, 8, 8], shifted);
        assert!(fourier_amplitude_loss(&x, &shifted).unwrap() < 1e-9);
        let mut delta = vec![0.0; 16];
        delta[5] = 1.0;
        let delta = grid(&[1, 4, 4], delta);
        let zero = grid(&[1, 4, 4], vec![0.0; 16]);
        assert!((fourier_amplitude_loss(&delta, &zero).unwrap() - 16.0).abs() < 1e-12);
    }

    #[test]
    fn amp_phase_matches_oracle() {
        let a = random(&[1, 4, 4], 11);
        let b = random(&[1, 4, 4], 12);
        let (amp, want) = amp_phase_oracle(a.data(), b.data(), 4, 4);
        assert!((fourier_amplitude_loss(&a, &b).unwrap() - amp).abs() < 1e-12 * amp.max(1.0));
        assert!((fourier_amp_phase_loss(&a, &b).unwrap() - want).abs() < 1e-10 * want.max(1.0));
        assert_eq!(fourier_amp_phase_loss(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn amp_phase_zero_for_equal_amplitudes() {
        // A circular shift changes phases but not amplitudes.
        let data: Vec<f64> = (0..16).map(|i| ((i * 7) % 5) as f64).collect();
        let shifted: Vec<f64> = (0..16).map(|i| data[(i + 1) % 16]).collect();
        let a = grid(&[1, 16], data);
        let b = grid(&[1, 16], shifted);
        assert!(fourier_amp_phase_loss(&a, &b).unwrap() < 1e-9);
    }

    fn haar(levels: usize, approx: f64, detail: f64) -> WaveletLossConfig {
        WaveletLossConfig::new(WaveletKind::Haar, levels, BandWeights::uniform(approx, detail)).unwrap()
    }

    #[test]
    fn wavelet_on_constants() {
        let n = 16;
        let (c, c2) = (0.8, -0.3);
        let a = grid(&[1, n], vec![c; n]);
        let b = grid(&[1, n], vec![c2; n]);
        let cfg = haar(1, 1.7, 1.0);
        let want = 1.7 * (n as f64 / 2.0) * 2f64.sqrt() * (c - c2).abs();
        assert!((wavelet_loss(&a, &b, &cfg).unwrap() - want).abs() < 1e-12);
        assert_eq!(wavelet_loss(&a, &a, &cfg).unwrap(), 0.0);
    }

    fn haar_step(x: &[f64], h: usize, w: usize) -> [Vec<f64>; 4] {
        // Width filter first, then height; names are (width, height).
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let (h2, w2) = (h / 2, w / 2);
        let mut out = [vec![0.0; h2 * w2], vec![0.0; h2 * w2], vec![0.0; h2 * w2], vec![0.0; h2 * w2]];
        for i in 0..h2 {
            for j in 0..w2 {
                let p = |y: usize, c: usize| x[(2 * i + y) * w + 2 * j + c];
                let lo = |y| r * (p(y, 0) + p(y, 1));
                let hi = |y| r * (p(y, 0) - p(y, 1));
                out[0][i * w2 + j] = r * (lo(0) + lo(1));
                out[1][i * w2 + j] = r * (lo(0) - lo(1));
                out[2][i * w2 + j] = r * (hi(0) + hi(1));
                out[3][i * w2 + j] = r * (hi(0) - hi(1));
            }
        }
        out
    }

    #[test]
    fn wavelet_matches_band_oracle() {
        let a = random(&[1, 8, 8], 21);
        let b = random(&[1, 8, 8], 22);
        let mut want = 0.0;
        let (mut xa, mut xb) = (a.data().to_vec(), b.data().to_vec());
        let mut size = 8;
        for level in 0..2 {
            let (ba, bb) = (haar_step(&xa, size, size), haar_step(&xb, size, size));
            for k in 1..4 {
                want += ba[k].iter().zip(&bb[k]).map(|(u, v)| (u - v).abs()).sum::<f64>();
            }
            xa = ba[0].clone();
            xb = bb[0].clone();
            size /= 2;
            if level == 1 {
                want += xa.iter().zip(&xb).map(|(u, v)| (u - v).abs()).sum::<f64>();
            }
        }
        let got = wavelet_loss(&a, &b, &haar(2, 1.0, 1.0)).unwrap();
        assert!((got - want).abs() < 1e-12 * want, "{got} vs {want}");
    }

    #[test]
    fn wavelet_scale_targeting() {
        let a = random(&[2, 8, 8], 31);
        let b = random(&[2, 8, 8], 32);
        let cfg = haar(2, 1.0, 0.0);
        let bank = filter_bank(WaveletKind::Haar).unwrap();
        let mut want = 0.0;
        for s in 0..2 {
            let pa = crate::transforms::dwt(a.sample(s), &[8, 8], &bank, 2).unwrap();
            let pb = crate::transforms::dwt(b.sample(s), &[8, 8], &bank, 2).unwrap();
            want += pa.approx.coeffs.iter().zip(&pb.approx.coeffs).map(|(u, v)| (u - v).abs()).sum::<f64>();
        }
        assert!((wavelet_loss(&a, &b, &cfg).unwrap() - want / 2.0).abs() < 1e-12);
    }

    #[test]
    fn wavelet_config_errors() {
        assert!(matches!(
            WaveletLossConfig::new(WaveletKind::Haar, 0, BandWeights::default()),
            Err(Error::Config(_))
        ));
        assert!(WaveletLossConfig::new(WaveletKind::Haar, 1, BandWeights::uniform(-1.0, 1.0)).is_err());
        let a = random(&[1, 8, 8], 1);
        assert!(matches!(wavelet_loss(&a, &a, &haar(4, 1.0, 1.0)), Err(Error::Config(_))));
    }

    #[test]
    fn total_loss_cases() {
        let b = total_loss(2.0, 3.0, 0.0).unwrap();
        assert_eq!(b.total, 2.0);
        assert_eq!(total_loss(2.0, 3.0, 1.0).unwrap().total, 5.0);
        assert!((total_loss(2.0, 3.0, 1e-4).unwrap().total - 2.0003).abs() < 1e-15);
        assert!(matches!(total_loss(2.0, 3.0, -1.0), Err(Error::Config(_))));
        let p = total_loss_per_sample(1.0, &[1.0, 3.0], &[2.0, 4.0]).unwrap();
        assert_eq!(p.total, 1.0 + (2.0 + 12.0) / 2.0);
        assert!((p.total - (p.denoise + p.lambda * p.spectral)).abs() <= 1e-12 * p.total);
        let z = total_loss_per_sample(1.0, &[0.0, 0.0], &[2.0, 4.0]).unwrap();
        assert_eq!(z.lambda, 3.0);
    }

    #[test]
    fn supervision_target_cases() {
        let s = DiscreteSchedule::linear(10, 1e-3, 0.2).unwrap();
        let x0 = random(&[2, 6], 41);
        let eps = random(&[2, 6], 42);
        let xt = crate::diffusion::forward_diffuse(&x0, &eps, &[5, 9], &s).unwrap();
        let got = spectral_supervision_target(&xt, &eps, &s, &[5, 9]).unwrap();
        assert!(got.tensor().max_abs_diff(x0.tensor()) < 1e-12);
        for (b, t) in [(0, 5), (1, 9)] {
            let ab = s.alpha_bar(t).unwrap();
            for i in 0..6 {
                let w = (xt.sample(b)[i] - (1.0 - ab).sqrt() * eps.sample(b)[i]) / ab.sqrt();
                assert!((got.sample(b)[i] - w).abs() < 1e-12);
            }
        }
        let clean = DiscreteSchedule::from_betas(vec![1e-300]).unwrap();
        let zero = grid(&[2, 6], vec![0.0; 12]);
        assert_eq!(spectral_supervision_target(&xt, &zero, &clean, &[1, 1]).unwrap(), xt);
        assert!(spectral_supervision_target(&xt, &zero, &s, &[0, 1]).is_err());
    }

    fn pair(seed: u64) -> (SignalGrid, SignalGrid) {
        (random(&[1, 4, 4], seed), random(&[1, 4, 4], seed ^ 0xabcdef))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn spectral_losses_symmetric_and_nonnegative(seed in any::<u64>()) {
            let (a, b) = pair(seed);
            let kinds = [
                SpectralLossKind::FourierAmplitude,
                SpectralLossKind::FourierAmpPhase,
                SpectralLossKind::Wavelet(haar(2, 1.0, 1.0)),
            ];
            for k in &kinds {
                let ab = spectral_loss(k, &a, &b).unwrap();
                let ba = spectral_loss(k, &b, &a).unwrap();
                prop_assert!(ab >= 0.0);
                prop_assert!((ab - ba).abs() <= 1e-12 * ab.max(1.0));
            }
        }

        #[test]
        fn amp_phase_dominates_amplitude(seed in any::<u64>()) {
            let (a, b) = pair(seed);
            prop_assert!(fourier_amp_phase_loss(&a, &b).unwrap() >= fourier_amplitude_loss(&a, &b).unwrap());
        }
    }
}
