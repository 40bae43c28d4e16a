//! End-to-end property checks behind the `verify` command: Parseval,
//! perfect reconstruction, gradient checks, loss identities, and DDIM
//! consistency. Each check reports its worst deviation against a tolerance.

use std::f64::consts::PI;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::diffusion::{ddim_step, ddim_timesteps, forward_diffuse, DiscreteSchedule};
use crate::error::Result;
use crate::losses::{
    edm_graph, edm_weights, fourier_amp_phase_loss, fourier_amplitude_loss, spectral_graph, spectral_loss,
    spectral_supervision_target, squared_error_graph, xhat0_graph, BandWeights, SpectralLossKind, WaveletLossConfig,
};
use crate::nn::{grad_check, DenoiserConfig, DenoiserNet, GradCheckOptions, Tape, TimeCondition, TimeEmbedding};
use crate::tensor::SignalGrid;
use crate::transforms::fourier::dft_real;
use crate::transforms::wavelet::{dwt, filter_bank, idwt, WaveletKind};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub worst: f64,
    pub tolerance: f64,
    /// Checks with a yes/no outcome report `worst` as the failure count.
    pub passed: bool,
}

impl CheckResult {
    fn bound(name: &str, worst: f64, tolerance: f64) -> Self {
        CheckResult {
            name: name.to_string(),
            worst,
            tolerance,
            passed: worst <= tolerance,
        }
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<40} worst {:.3e}  tolerance {:.1e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.worst,
            self.tolerance
        )
    }
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn grid(rng: &mut ChaCha8Rng, shape: &[usize]) -> SignalGrid {
    SignalGrid::from_vec(shape.to_vec(), normals(rng, shape.iter().product())).expect("valid shape")
}

/// `max | ||x||^2 - ||X||^2 / N | / ||x||^2` over `trials` random signals per shape.
pub fn parseval(trials: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shapes: [&[usize]; 4] = [&[8], &[16], &[16, 16], &[12, 20]];
    let mut worst = 0.0f64;
    for i in 0..trials {
        let dims = shapes[i % shapes.len()];
        let n: usize = dims.iter().product();
        let x = normals(&mut rng, n);
        let e: f64 = x.iter().map(|v| v * v).sum();
        let ef: f64 = dft_real(&x, dims).iter().map(|c| c.norm_sqr()).sum::<f64>() / n as f64;
        worst = worst.max((e - ef).abs() / e);
    }
    CheckResult::bound("parseval identity (relative)", worst, 1e-9)
}

/// `max |idwt(dwt(x)) - x|` over random 1-D and 2-D signals, levels 1..=3.
pub fn reconstruction(kind: WaveletKind, trials: usize, seed: u64, tolerance: f64) -> Result<CheckResult> {
    let bank = filter_bank(kind)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shapes: [&[usize]; 4] = [&[32], &[64], &[16, 16], &[8, 24]];
    let mut worst = 0.0f64;
    for i in 0..trials {
        let dims = shapes[i % shapes.len()];
        let levels = 1 + i % 3;
        let x = normals(&mut rng, dims.iter().product());
        let back = idwt(&dwt(&x, dims, &bank, levels)?, &bank)?;
        for (a, b) in back.iter().zip(&x) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(CheckResult::bound(
        &format!("{} perfect reconstruction (abs)", kind.name()),
        worst,
        tolerance,
    ))
}

/// Small two-convolution network with every parameter randomized.
pub fn random_two_layer_net(signal: &[usize], seed: u64) -> Result<DenoiserNet> {
    let cfg = DenoiserConfig {
        channels: 3,
        blocks: 0,
        embedding: TimeEmbedding::new(4, 100.0)?,
        ..DenoiserConfig::new(signal.to_vec())
    };
    let mut net = DenoiserNet::init(cfg, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for p in net.params_mut() {
        for v in p.tensor.data_mut() {
            *v = rng.random_range(-0.5..0.5);
        }
    }
    Ok(net)
}

/// One gradient check per objective through a random two-layer network on
/// 8x8 inputs. Spectral losses act on the clean-signal estimate.
pub fn gradient_suite(seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch = 2;
    let shape = [batch, 8, 8];
    let net = random_two_layer_net(&[8, 8], seed)?;
    let x_t = grid(&mut rng, &shape);
    let eps = grid(&mut rng, &shape);
    let x0 = grid(&mut rng, &shape);
    let schedule = DiscreteSchedule::linear(20, 1e-3, 0.2)?;
    let ts = [6usize, 15];
    let (coef, scale) = crate::losses::supervision_coefficients(&schedule, &ts)?;
    let temb = net
        .config
        .embedding
        .embed_batch(&ts.map(TimeCondition::Step))?;
    let sigmas = [0.3, 2.0];
    let edm_w = edm_weights(&sigmas, 0.5)?;
    let opts = GradCheckOptions::default();
    let x_tensor = x_t.tensor().clone();

    let haar = WaveletLossConfig::new(WaveletKind::Haar, 2, BandWeights::default())?;
    let bior = WaveletLossConfig::new(WaveletKind::Bior13, 2, BandWeights::uniform(1.0, 0.5))?;
    let spectral: Vec<(&str, SpectralLossKind)> = vec![
        ("fourier amplitude", SpectralLossKind::FourierAmplitude),
        ("fourier amplitude-phase", SpectralLossKind::FourierAmpPhase),
        ("haar wavelet", SpectralLossKind::Wavelet(haar)),
        ("bior1.3 wavelet", SpectralLossKind::Wavelet(bior)),
    ];

    let mut out = Vec::new();
    let run = |name: &str, f: &crate::nn::gradcheck::LossFn<'_>| -> Result<CheckResult> {
        let report = grad_check(&net, &x_tensor, &temb, f, &opts)?;
        Ok(CheckResult::bound(&format!("gradient: {name}"), report.worst(), opts.tolerance))
    };
    out.push(run("ddpm denoising", &|tape: &mut Tape, pred| {
        let e = tape.constant(eps.tensor());
        let per = squared_error_graph(tape, e, pred);
        Ok(tape.mean(per))
    })?);
    out.push(run("edm denoising", &|tape: &mut Tape, pred| {
        let e = tape.constant(eps.tensor());
        let per = edm_graph(tape, e, pred, &edm_w);
        Ok(tape.mean(per))
    })?);
    for (name, kind) in &spectral {
        out.push(run(name, &|tape: &mut Tape, pred| {
            let xv = tape.constant(x_t.tensor());
            let xhat = xhat0_graph(tape, xv, pred, &coef, &scale);
            let target = tape.constant(x0.tensor());
            let per = spectral_graph(tape, kind, target, xhat)?;
            Ok(tape.mean(per))
        })?);
    }
    Ok(out)
}

fn circular_shift(x: &[f64], h: usize, w: usize, dy: usize, dx: usize) -> Vec<f64> {
    (0..h * w)
        .map(|i| x[((i / w + dy) % h) * w + (i % w + dx) % w])
        .collect()
}

/// Zero at equality, amplitude shift invariance, and amp-phase dominance.
pub fn loss_identities(pairs: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let haar = WaveletLossConfig::new(WaveletKind::Haar, 2, BandWeights::default())?;
    let bior = WaveletLossConfig::new(WaveletKind::Bior13, 2, BandWeights::default())?;
    let kinds = [
        SpectralLossKind::FourierAmplitude,
        SpectralLossKind::FourierAmpPhase,
        SpectralLossKind::Wavelet(haar),
        SpectralLossKind::Wavelet(bior),
    ];
    let (mut zero, mut shift, mut violations) = (0.0f64, 0.0f64, 0usize);
    for i in 0..pairs {
        let a = grid(&mut rng, &[1, 8, 8]);
        let b = grid(&mut rng, &[1, 8, 8]);
        if i < 50 {
            for k in &kinds {
                zero = zero.max(spectral_loss(k, &a, &a)?);
            }
            let s = SignalGrid::from_vec(vec![1, 8, 8], circular_shift(a.data(), 8, 8, i % 8, (3 * i) % 8))?;
            shift = shift.max(fourier_amplitude_loss(&a, &s)?);
        }
        if fourier_amp_phase_loss(&a, &b)? < fourier_amplitude_loss(&a, &b)? {
            violations += 1;
        }
    }
    Ok(vec![
        CheckResult::bound("spectral losses vanish at equality", zero, 1e-12),
        CheckResult::bound("amplitude loss shift invariance", shift, 1e-9),
        CheckResult {
            name: format!("amp-phase >= amplitude ({pairs} pairs)"),
            worst: violations as f64,
            tolerance: 0.0,
            passed: violations == 0,
        },
    ])
}

/// The clean-signal estimate along a perfect-predictor DDIM trajectory, and
/// inversion of the forward process.
pub fn ddim_consistency(seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schedule = DiscreteSchedule::linear(200, 5e-4, 0.1)?;
    let mut drift = 0.0f64;
    let mut inversion = 0.0f64;
    for trial in 0..20 {
        let x0 = grid(&mut rng, &[2, 8, 8]);
        let eps = grid(&mut rng, &[2, 8, 8]);
        let taus = ddim_timesteps(200, 10 + trial)?;
        let mut x = forward_diffuse(&x0, &eps, &[taus[0]; 2], &schedule)?;
        for (i, &t) in taus.iter().enumerate() {
            let xhat = spectral_supervision_target(&x, &eps, &schedule, &[t; 2])?;
            drift = drift.max(xhat.tensor().max_abs_diff(x0.tensor()));
            x = ddim_step(&x, &eps, t, taus.get(i + 1).copied().unwrap_or(0), &schedule)?;
        }
        let t = rng.random_range(1..=100);
        let xt = forward_diffuse(&x0, &eps, &[t; 2], &schedule)?;
        let back = spectral_supervision_target(&xt, &eps, &schedule, &[t; 2])?;
        inversion = inversion.max(back.tensor().max_abs_diff(x0.tensor()));
    }
    Ok(vec![
        CheckResult::bound("ddim perfect-predictor estimate drift", drift, 1e-10),
        CheckResult::bound("clean-signal estimate inverts corruption", inversion, 1e-12),
    ])
}

/// Largest deviation of the fast transform from the direct sum.
pub fn dft_oracle(seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shapes: [&[usize]; 6] = [&[7], &[16], &[12, 20], &[9, 9], &[8, 8], &[5, 6]];
    let mut worst = 0.0f64;
    for dims in shapes {
        let (h, w) = if dims.len() == 1 { (1, dims[0]) } else { (dims[0], dims[1]) };
        let x = normals(&mut rng, h * w);
        let fast = dft_real(&x, dims);
        for u in 0..h {
            for v in 0..w {
                let (mut re, mut im) = (0.0, 0.0);
                for y in 0..h {
                    for c in 0..w {
                        let a = -2.0 * PI * ((u * y) as f64 / h as f64 + (v * c) as f64 / w as f64);
                        re += x[y * w + c] * a.cos();
                        im += x[y * w + c] * a.sin();
                    }
                }
                let f = fast[u * w + v];
                worst = worst.max((f.re - re).abs().max((f.im - im).abs()));
            }
        }
    }
    CheckResult::bound("dft matches direct summation", worst, 1e-10)
}

/// Every check, in report order.
pub fn run_all(seed: u64) -> Result<Vec<CheckResult>> {
    let mut out = vec![parseval(1000, seed), dft_oracle(seed)];
    out.push(reconstruction(WaveletKind::Haar, 1000, seed, 1e-10)?);
    out.push(reconstruction(WaveletKind::Bior13, 1000, seed, 1e-9)?);
    out.extend(gradient_suite(seed)?);
    out.extend(loss_identities(1000, seed)?);
    out.extend(ddim_consistency(seed)?);
    Ok(out)
}
