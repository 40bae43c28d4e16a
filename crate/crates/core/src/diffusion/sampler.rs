use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::losses::spectral_supervision_target;
use crate::nn::{DenoiserNet, TimeCondition};
use crate::tensor::{SignalGrid, Tensor};

use super::schedule::{DiscreteSchedule, EdmSchedule, NoiseSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerKind {
    Ddpm,
    Ddim,
    EdmEuler,
}

impl SamplerKind {
    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Ddpm => "ddpm",
            SamplerKind::Ddim => "ddim",
            SamplerKind::EdmEuler => "edm-euler",
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ddpm" => Ok(SamplerKind::Ddpm),
            "ddim" => Ok(SamplerKind::Ddim),
            "edm-euler" | "edm" => Ok(SamplerKind::EdmEuler),
            other => Err(Error::Config(format!("unknown sampler `{other}` (expected ddpm, ddim or edm-euler)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerSpec {
    pub kind: SamplerKind,
    pub steps: usize,
    pub seed: u64,
}

/// Trajectories evaluated together in one network call.
const CHUNK: usize = 32;

fn grid_like(x: &SignalGrid, data: Vec<f64>) -> Result<SignalGrid> {
    SignalGrid::from_vec(x.shape().to_vec(), data)
}

/// Ancestral update. `z` is ignored at `t = 1`.
pub fn ddpm_step(
    x_t: &SignalGrid,
    eps_pred: &SignalGrid,
    t: usize,
    schedule: &DiscreteSchedule,
    z: Option<&SignalGrid>,
) -> Result<SignalGrid> {
    x_t.require_same_shape(eps_pred, "ddpm_step")?;
    let beta = schedule.beta(t)?;
    let alpha = 1.0 - beta;
    let ab = schedule.alpha_bar(t)?;
    let coef = beta / (1.0 - ab).sqrt();
    let inv = 1.0 / alpha.sqrt();
    let noise = if t > 1 { z } else { None };
    if let Some(z) = noise {
        x_t.require_same_shape(z, "ddpm_step noise")?;
    }
    let sd = beta.sqrt();
    let data = x_t
        .data()
        .iter()
        .zip(eps_pred.data())
        .enumerate()
        .map(|(i, (x, e))| {
            let mean = inv * (x - coef * e);
            match noise {
                Some(z) => mean + sd * z.data()[i],
                None => mean,
            }
        })
        .collect();
    grid_like(x_t, data)
}

/// Deterministic update from `t` to `t_prev < t`. `t_prev = 0` lands on the
/// clean-signal estimate.
pub fn ddim_step(
    x_t: &SignalGrid,
    eps_pred: &SignalGrid,
    t: usize,
    t_prev: usize,
    schedule: &DiscreteSchedule,
) -> Result<SignalGrid> {
    if t_prev >= t || t > schedule.steps() {
        return Err(Error::Usage(format!(
            "ddim_step needs t_prev < t <= {}, got t = {t}, t_prev = {t_prev}",
            schedule.steps()
        )));
    }
    let xhat = spectral_supervision_target(x_t, eps_pred, schedule, &vec![t; x_t.batch()])?;
    let ab = schedule.alpha_bar(t_prev)?;
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    let data = xhat.data().iter().zip(eps_pred.data()).map(|(x0, e)| a * x0 + b * e).collect();
    grid_like(x_t, data)
}

/// Probability-flow Euler step from `sigma` to `sigma_next <= sigma`.
pub fn edm_euler_step(x: &SignalGrid, eps_pred: &SignalGrid, sigma: f64, sigma_next: f64) -> Result<SignalGrid> {
    x.require_same_shape(eps_pred, "edm_euler_step")?;
    if !(sigma > 0.0 && sigma_next >= 0.0 && sigma_next <= sigma) {
        return Err(Error::Usage(format!(
            "edm_euler_step needs sigma > sigma_next >= 0, got {sigma} -> {sigma_next}"
        )));
    }
    let h = sigma_next - sigma;
    let data = x
        .data()
        .iter()
        .zip(eps_pred.data())
        .map(|(&x, &e)| {
            let x0 = x - sigma * e;
            x + h * (x - x0) / sigma
        })
        .collect();
    grid_like(x, data)
}

/// Evenly spaced descending indices from `T` down to 1.
pub fn ddim_timesteps(total: usize, steps: usize) -> Result<Vec<usize>> {
    if steps == 0 || steps > total {
        return Err(Error::Config(format!("sampler steps must be in 1..={total}, got {steps}")));
    }
    if steps == 1 {
        return Ok(vec![total]);
    }
    let span = (total - 1) as f64 / (steps - 1) as f64;
    Ok((0..steps).rev().map(|i| (1.0 + span * i as f64).round() as usize).collect())
}

/// Random stream of trajectory `index`.
pub fn trajectory_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(index as u64))
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> impl Iterator<Item = f64> + '_ {
    (0..n).map(move |_| rng.sample::<f64, _>(StandardNormal))
}

struct Chunk<'a> {
    net: &'a DenoiserNet,
    shape: Vec<usize>,
    rngs: Vec<ChaCha8Rng>,
}

impl Chunk<'_> {
    fn noise(&mut self, scale: f64) -> Result<SignalGrid> {
        let per: usize = self.shape[1..].iter().product();
        let mut data = Vec::with_capacity(per * self.rngs.len());
        for rng in &mut self.rngs {
            data.extend(normals(rng, per).map(|v| v * scale));
        }
        SignalGrid::from_vec(self.shape.clone(), data)
    }

    fn predict(&self, x: &SignalGrid, cond: TimeCondition) -> Result<SignalGrid> {
        let temb = self.net.config.embedding.embed_batch(&vec![cond; x.batch()])?;
        SignalGrid::new(self.net.predict(x.tensor(), &temb)?)
    }
}

fn run_discrete(chunk: &mut Chunk<'_>, schedule: &DiscreteSchedule, spec: &SamplerSpec) -> Result<SignalGrid> {
    let taus = ddim_timesteps(schedule.steps(), spec.steps)?;
    let mut x = chunk.noise(1.0)?;
    match spec.kind {
        SamplerKind::Ddim => {
            for (i, &t) in taus.iter().enumerate() {
                let t_prev = taus.get(i + 1).copied().unwrap_or(0);
                let eps = chunk.predict(&x, TimeCondition::Step(t))?;
                x = ddim_step(&x, &eps, t, t_prev, schedule)?;
            }
        }
        SamplerKind::Ddpm => {
            let ascending: Vec<usize> = taus.iter().rev().copied().collect();
            let respaced = schedule.respaced(&ascending)?;
            for (k, &t) in ascending.iter().enumerate().rev() {
                let eps = chunk.predict(&x, TimeCondition::Step(t))?;
                let step = k + 1;
                let z = if step > 1 { Some(chunk.noise(1.0)?) } else { None };
                x = ddpm_step(&x, &eps, step, &respaced, z.as_ref())?;
            }
        }
        SamplerKind::EdmEuler => unreachable!("checked by caller"),
    }
    Ok(x)
}

fn run_edm(chunk: &mut Chunk<'_>, edm: &EdmSchedule, spec: &SamplerSpec) -> Result<SignalGrid> {
    if spec.steps == 0 {
        return Err(Error::Config("sampler steps must be at least 1".into()));
    }
    let mut sigmas = edm.sigmas(spec.steps);
    sigmas.push(0.0);
    let mut x = chunk.noise(sigmas[0])?;
    for w in sigmas.windows(2) {
        let eps = chunk.predict(&x, TimeCondition::Sigma(w[0]))?;
        x = edm_euler_step(&x, &eps, w[0], w[1])?;
    }
    Ok(x)
}

/// Draws `n` samples. Trajectory `i` takes all of its randomness from
/// `seed + i`, so results do not depend on how trajectories are batched.
pub fn sample(net: &DenoiserNet, schedule: &NoiseSchedule, spec: &SamplerSpec, n: usize) -> Result<SignalGrid> {
    if n == 0 {
        return Err(Error::Usage("sample count must be at least 1".into()));
    }
    match (schedule, spec.kind) {
        (NoiseSchedule::Discrete(_), SamplerKind::EdmEuler) | (NoiseSchedule::Edm(_), SamplerKind::Ddpm | SamplerKind::Ddim) => {
            return Err(Error::Config(format!(
                "sampler {} does not match the model's noise schedule",
                spec.kind
            )));
        }
        _ => {}
    }
    let spatial = net.config.signal_shape.clone();
    let per: usize = spatial.iter().product();
    let mut out = Vec::with_capacity(n * per);
    let mut start = 0;
    while start < n {
        let len = CHUNK.min(n - start);
        let mut shape = vec![len];
        shape.extend_from_slice(&spatial);
        let mut chunk = Chunk {
            net,
            shape,
            rngs: (start..start + len).map(|i| trajectory_rng(spec.seed, i)).collect(),
        };
        let x = match schedule {
            NoiseSchedule::Discrete(s) => run_discrete(&mut chunk, s, spec)?,
            NoiseSchedule::Edm(e) => run_edm(&mut chunk, e, spec)?,
        };
        if x.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("sampler produced non-finite values".into()));
        }
        out.extend_from_slice(x.data());
        start += len;
    }
    let mut shape = vec![n];
    shape.extend_from_slice(&spatial);
    SignalGrid::new(Tensor::new(shape, out)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::forward_diffuse;
    use crate::nn::{DenoiserConfig, TimeEmbedding};

    fn g(data: Vec<f64>) -> SignalGrid {
        let n = data.len();
        SignalGrid::from_vec(vec![1, n], data).unwrap()
    }

    fn random(n: usize, seed: u64) -> SignalGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        g(normals(&mut rng, n).collect())
    }

    #[test]
    fn ddpm_step_cases() {
        let tiny = DiscreteSchedule::from_betas(vec![1e-12, 1e-12]).unwrap();
        let x = random(5, 1);
        let e = random(5, 2);
        let z = random(5, 3);
        let out = ddpm_step(&x, &e, 2, &tiny, Some(&z)).unwrap();
        assert!(out.tensor().max_abs_diff(x.tensor()) < 1e-5);

        let s = DiscreteSchedule::from_betas(vec![0.1, 0.3]).unwrap();
        let a = ddpm_step(&x, &e, 1, &s, Some(&z)).unwrap();
        let b = ddpm_step(&x, &e, 1, &s, None).unwrap();
        assert_eq!(a, b);

        let (xs, es, zs) = (g(vec![0.7]), g(vec![-0.2]), g(vec![0.5]));
        let got = ddpm_step(&xs, &es, 2, &s, Some(&zs)).unwrap().data()[0];
        let ab = 0.9 * 0.7;
        let want = (0.7 - 0.3 / (1.0f64 - ab).sqrt() * -0.2) / 0.7f64.sqrt() + 0.3f64.sqrt() * 0.5;
        assert!((got - want).abs() < 1e-12);
        assert!(ddpm_step(&xs, &es, 3, &s, None).is_err());
    }

    #[test]
    fn ddim_step_cases() {
        let s = DiscreteSchedule::linear(20, 1e-3, 0.1).unwrap();
        let x0 = random(6, 4);
        let eps = random(6, 5);
        let xt = forward_diffuse(&x0, &eps, &[15], &s).unwrap();
        let got = ddim_step(&xt, &eps, 15, 7, &s).unwrap();
        let want = forward_diffuse(&x0, &eps, &[7], &s).unwrap();
        assert!(got.tensor().max_abs_diff(want.tensor()) < 1e-12);
        let to_clean = ddim_step(&xt, &eps, 15, 0, &s).unwrap();
        assert!(to_clean.tensor().max_abs_diff(x0.tensor()) < 1e-12);
        assert_eq!(ddim_step(&xt, &eps, 15, 7, &s).unwrap(), got);
        assert!(ddim_step(&xt, &eps, 7, 7, &s).is_err());
        assert!(ddim_step(&xt, &eps, 21, 7, &s).is_err());
    }

    #[test]
    fn ddim_perfect_predictor_keeps_estimate() {
        let s = DiscreteSchedule::linear(50, 1e-3, 0.1).unwrap();
        let x0 = random(8, 6);
        let eps = random(8, 7);
        let taus = ddim_timesteps(50, 10).unwrap();
        let mut x = forward_diffuse(&x0, &eps, &[taus[0]], &s).unwrap();
        for (i, &t) in taus.iter().enumerate() {
            let xhat = spectral_supervision_target(&x, &eps, &s, &[t]).unwrap();
            assert!(xhat.tensor().max_abs_diff(x0.tensor()) < 1e-10);
            x = ddim_step(&x, &eps, t, taus.get(i + 1).copied().unwrap_or(0), &s).unwrap();
        }
    }

    #[test]
    fn euler_step_cases() {
        let x = random(4, 8);
        let e = random(4, 9);
        assert_eq!(edm_euler_step(&x, &e, 0.8, 0.8).unwrap(), x);
        let x0 = random(4, 10);
        let xs = crate::diffusion::edm_noise(&x0, &e, &[2.5]).unwrap();
        let back = edm_euler_step(&xs, &e, 2.5, 0.0).unwrap();
        assert!(back.tensor().max_abs_diff(x0.tensor()) < 1e-12);
        let got = edm_euler_step(&g(vec![1.5]), &g(vec![0.25]), 2.0, 0.5).unwrap().data()[0];
        assert!((got - (1.5 + (0.5 - 2.0) * 0.25)).abs() < 1e-15);
        assert!(edm_euler_step(&x, &e, 0.5, 0.8).is_err());
        assert!(edm_euler_step(&x, &e, 0.5, -0.1).is_err());
    }

    #[test]
    fn timestep_selection() {
        assert_eq!(ddim_timesteps(200, 1).unwrap(), vec![200]);
        assert_eq!(ddim_timesteps(10, 10).unwrap(), (1..=10).rev().collect::<Vec<_>>());
        let t = ddim_timesteps(200, 50).unwrap();
        assert_eq!((t[0], t[49], t.len()), (200, 1, 50));
        assert!(t.windows(2).all(|w| w[0] > w[1]));
        assert!(ddim_timesteps(10, 11).is_err());
        assert!(ddim_timesteps(10, 0).is_err());
    }

    #[test]
    fn respaced_ddpm_matches() {
        let s = DiscreteSchedule::linear(30, 1e-3, 0.1).unwrap();
        let r = s.respaced(&[3, 10, 30]).unwrap();
        assert!((r.alpha_bar(2).unwrap() - s.alpha_bar(10).unwrap()).abs() < 1e-15);
        assert!((r.alpha_bar(3).unwrap() - s.alpha_bar(30).unwrap()).abs() < 1e-15);
    }

    fn tiny_net(shape: Vec<usize>) -> DenoiserNet {
        let cfg = DenoiserConfig {
            channels: 4,
            blocks: 1,
            embedding: TimeEmbedding::new(8, 100.0).unwrap(),
            ..DenoiserConfig::new(shape)
        };
        DenoiserNet::init(cfg, 5).unwrap()
    }

    #[test]
    fn zero_net_ddim_scales_initial_noise() {
        let net = tiny_net(vec![4, 4]);
        let s = DiscreteSchedule::linear(40, 1e-3, 0.1).unwrap();
        let spec = SamplerSpec {
            kind: SamplerKind::Ddim,
            steps: 7,
            seed: 11,
        };
        let out = sample(&net, &NoiseSchedule::Discrete(s.clone()), &spec, 3).unwrap();
        let mut factor = 1.0;
        let taus = ddim_timesteps(40, 7).unwrap();
        for (i, &t) in taus.iter().enumerate() {
            let prev = taus.get(i + 1).copied().unwrap_or(0);
            factor *= s.alpha_bar(prev).unwrap().sqrt() / s.alpha_bar(t).unwrap().sqrt();
        }
        for i in 0..3 {
            let mut rng = trajectory_rng(11, i);
            let start: Vec<f64> = normals(&mut rng, 16).collect();
            for (o, x) in out.sample(i).iter().zip(&start) {
                assert!((o - factor * x).abs() < 1e-12 * factor.max(1.0));
            }
        }
    }

    #[test]
    fn samplers_are_deterministic() {
        let net = tiny_net(vec![8]);
        let s = NoiseSchedule::Discrete(DiscreteSchedule::linear(20, 1e-3, 0.2).unwrap());
        let e = NoiseSchedule::Edm(EdmSchedule::default());
        for (sched, kind) in [(&s, SamplerKind::Ddim), (&s, SamplerKind::Ddpm), (&e, SamplerKind::EdmEuler)] {
            let spec = SamplerSpec { kind, steps: 5, seed: 3 };
            let a = sample(&net, sched, &spec, 40).unwrap();
            let b = sample(&net, sched, &spec, 40).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.shape(), &[40, 8]);
            let head = sample(&net, sched, &spec, 2).unwrap();
            assert_eq!(head.data(), &a.data()[..16]);
        }
        let bad = SamplerSpec {
            kind: SamplerKind::EdmEuler,
            steps: 5,
            seed: 0,
        };
        assert!(matches!(sample(&net, &s, &bad, 1), Err(Error::Config(_))));
    }

    #[test]
    fn single_step_ddim_is_one_update() {
        let net = tiny_net(vec![4]);
        let s = DiscreteSchedule::linear(10, 1e-3, 0.3).unwrap();
        let spec = SamplerSpec {
            kind: SamplerKind::Ddim,
            steps: 1,
            seed: 2,
        };
        let out = sample(&net, &NoiseSchedule::Discrete(s.clone()), &spec, 1).unwrap();
        let mut rng = trajectory_rng(2, 0);
        let x: Vec<f64> = normals(&mut rng, 4).collect();
        let want = ddim_step(&g(x), &g(vec![0.0; 4]), 10, 0, &s).unwrap();
        assert!(out.tensor().max_abs_diff(want.tensor()) < 1e-15);
    }

    #[test]
    fn marginal_matches_composed_transitions() {
        let s = DiscreteSchedule::linear(8, 0.01, 0.05).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let (mut m1, mut v1, mut m2, mut v2) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let x0: f64 = 1.0 + rng.sample::<f64, _>(StandardNormal);
            let mut x = x0;
            for t in 1..=8 {
                let b = s.beta(t).unwrap();
                x = (1.0 - b).sqrt() * x + b.sqrt() * rng.sample::<f64, _>(StandardNormal);
            }
            let ab = s.alpha_bar(8).unwrap();
            let y = ab.sqrt() * x0 + (1.0 - ab).sqrt() * rng.sample::<f64, _>(StandardNormal);
            m1 += x;
            v1 += x * x;
            m2 += y;
            v2 += y * y;
        }
        let nf = n as f64;
        let (m1, m2) = (m1 / nf, m2 / nf);
        let (v1, v2) = (v1 / nf - m1 * m1, v2 / nf - m2 * m2);
        assert!((m1 - m2).abs() / m2.abs() < 0.02);
        assert!((v1 - v2).abs() / v2 < 0.02);
    }
}
