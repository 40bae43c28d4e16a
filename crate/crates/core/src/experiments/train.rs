//! The training loop: sample a batch, corrupt it, predict the noise, add the
//! spectral term on the clean-signal estimate, step Adam.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::diffusion::{edm_noise, forward_diffuse, sample_sigma_train, NoiseSchedule};
use crate::error::{Error, Result};
use crate::losses::{
    combined_graph, edm_graph, edm_weight, spectral_graph, spectral_loss_per_sample, squared_error_graph,
    supervision_coefficients, total_loss_per_sample, xhat0_graph, LossBreakdown, SpectralLossKind,
};
use crate::nn::{adam_step, AdamConfig, AdamState, DenoiserNet, Tape, TimeCondition};
use crate::tensor::SignalGrid;

use super::config::{Formulation, LambdaMode, TrainConfig};

/// One training minibatch with everything derived from the random draws.
#[derive(Debug, Clone)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub conds: Vec<TimeCondition>,
    pub x0: SignalGrid,
    pub eps: SignalGrid,
    pub noisy: SignalGrid,
    /// `xhat0 = (noisy - noise_coef * eps_pred) * scale`.
    pub noise_coef: Vec<f64>,
    pub scale: Vec<f64>,
    /// Noise level of each sample on the additive scale.
    pub sigmas: Vec<f64>,
}

/// Draws, in this order: example indices, times (or noise levels), noise.
pub fn draw_batch<R: Rng + ?Sized>(rng: &mut R, data: &SignalGrid, batch: usize, schedule: &NoiseSchedule) -> Result<Batch> {
    let indices: Vec<usize> = (0..batch).map(|_| rng.random_range(0..data.batch())).collect();
    let conds: Vec<TimeCondition> = match schedule {
        NoiseSchedule::Discrete(s) => (0..batch).map(|_| TimeCondition::Step(rng.random_range(1..=s.steps()))).collect(),
        NoiseSchedule::Edm(e) => (0..batch).map(|_| TimeCondition::Sigma(sample_sigma_train(rng, e))).collect(),
    };
    let samples: Vec<&[f64]> = indices.iter().map(|&i| data.sample(i)).collect();
    let x0 = SignalGrid::stack(data.spatial(), &samples)?;
    let eps_data: Vec<f64> = (0..x0.data().len()).map(|_| rng.sample(StandardNormal)).collect();
    let eps = SignalGrid::from_vec(x0.shape().to_vec(), eps_data)?;
    let (noisy, noise_coef, scale, sigmas) = match schedule {
        NoiseSchedule::Discrete(s) => {
            let ts: Vec<usize> = conds
                .iter()
                .map(|c| match c {
                    TimeCondition::Step(t) => *t,
                    TimeCondition::Sigma(_) => unreachable!("discrete schedule"),
                })
                .collect();
            let (a, c) = supervision_coefficients(s, &ts)?;
            let sig = ts.iter().map(|&t| s.equivalent_sigma(t)).collect::<Result<_>>()?;
            (forward_diffuse(&x0, &eps, &ts, s)?, a, c, sig)
        }
        NoiseSchedule::Edm(_) => {
            let sig: Vec<f64> = conds
                .iter()
                .map(|c| match c {
                    TimeCondition::Sigma(s) => *s,
                    TimeCondition::Step(_) => unreachable!("edm schedule"),
                })
                .collect();
            (edm_noise(&x0, &eps, &sig)?, sig.clone(), vec![1.0; batch], sig)
        }
    };
    Ok(Batch {
        indices,
        conds,
        x0,
        eps,
        noisy,
        noise_coef,
        scale,
        sigmas,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub loss: LossBreakdown,
}

pub fn log_header() -> &'static str {
    "step,loss_denoise,loss_spectral,lambda,loss_total"
}

pub fn log_csv(rows: &[LogRow]) -> String {
    let mut out = String::from(log_header());
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{:.12e},{:.12e},{:.12e},{:.12e}",
            r.step, r.loss.denoise, r.loss.spectral, r.loss.lambda, r.loss.total
        )
        .expect("writing to a String");
    }
    out
}

/// Stateful trainer; [`Trainer::step`] performs one optimizer update.
#[derive(Debug)]
pub struct Trainer {
    pub config: TrainConfig,
    pub net: DenoiserNet,
    schedule: NoiseSchedule,
    spectral: Option<SpectralLossKind>,
    adam: AdamState,
    adam_cfg: AdamConfig,
    rng: ChaCha8Rng,
    data: SignalGrid,
    steps_done: usize,
    pub log: Vec<LogRow>,
}

/// Stream of the batch generator; the network initializer uses stream 0.
const DATA_STREAM: u64 = 1;

impl Trainer {
    pub fn new(config: &TrainConfig, data: SignalGrid) -> Result<Self> {
        config.validate()?;
        if let Some(shape) = &config.signal_shape {
            if shape.as_slice() != data.spatial() {
                return Err(Error::Config(format!(
                    "signal_shape {:?} does not match data {:?}",
                    shape,
                    data.spatial()
                )));
            }
        }
        let mut config = config.clone();
        config.signal_shape = Some(data.spatial().to_vec());
        let schedule = config.schedule()?;
        let spectral = config.spectral_kind()?;
        if let Some(SpectralLossKind::Wavelet(w)) = &spectral {
            w.coefficient_weights(data.spatial())?;
        }
        let net = DenoiserNet::init(config.denoiser_config(data.spatial())?, config.seed)?;
        let adam = AdamState::new(net.params());
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(DATA_STREAM);
        Ok(Trainer {
            adam_cfg: AdamConfig {
                lr: config.lr,
                ..AdamConfig::default()
            },
            config,
            net,
            schedule,
            spectral,
            adam,
            rng,
            data,
            steps_done: 0,
            log: Vec::new(),
        })
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn steps_done(&self) -> usize {
        self.steps_done
    }

    fn lambdas(&self, batch: &Batch) -> Result<Vec<f64>> {
        batch
            .sigmas
            .iter()
            .map(|&s| {
                if s > self.config.spectral_sigma_max {
                    return Ok(0.0);
                }
                Ok(match self.config.lambda_mode {
                    LambdaMode::Scalar => self.config.lambda,
                    LambdaMode::EdmWeighted => self.config.lambda * edm_weight(s, self.config.sigma_data)?,
                })
            })
            .collect()
    }

    /// Records the objective for `batch` and returns it with its breakdown.
    pub fn objective(&self, tape: &mut Tape, batch: &Batch) -> Result<(crate::nn::Var, LossBreakdown)> {
        let x = tape.constant(batch.noisy.tensor());
        let temb = self.net.config.embedding.embed_batch(&batch.conds)?;
        let temb = tape.constant(&temb);
        let eps_pred = self.net.forward(tape, x, temb)?;
        let eps_true = tape.constant(batch.eps.tensor());
        let denoise = match self.config.formulation {
            Formulation::Ddpm => squared_error_graph(tape, eps_true, eps_pred),
            Formulation::Edm => {
                let w = batch
                    .sigmas
                    .iter()
                    .map(|&s| edm_weight(s, self.config.sigma_data))
                    .collect::<Result<Vec<_>>>()?;
                edm_graph(tape, eps_true, eps_pred, &w)
            }
        };
        let denoise_mean = tape.value(denoise).iter().sum::<f64>() / batch.indices.len() as f64;
        let Some(kind) = &self.spectral else {
            let loss = combined_graph(tape, denoise, None);
            let total = tape.scalar(loss);
            let b = LossBreakdown {
                denoise: denoise_mean,
                spectral: 0.0,
                lambda: 0.0,
                total,
            };
            return Ok((loss, b));
        };
        let lambdas = self.lambdas(batch)?;
        let xhat = xhat0_graph(tape, x, eps_pred, &batch.noise_coef, &batch.scale);
        let x0 = tape.constant(batch.x0.tensor());
        let (loss, spectral) = if lambdas.iter().all(|&l| l == 0.0) {
            // The spectral term cannot move the parameters; evaluate it for the
            // log only so gradients match the baseline exactly.
            let xhat = SignalGrid::new(tape.to_tensor(xhat))?;
            let s = spectral_loss_per_sample(kind, &batch.x0, &xhat)?;
            (combined_graph(tape, denoise, None), s)
        } else {
            let s = spectral_graph(tape, kind, x0, xhat)?;
            let values = tape.value(s).to_vec();
            (combined_graph(tape, denoise, Some((s, &lambdas))), values)
        };
        let mut b = total_loss_per_sample(denoise_mean, &spectral, &lambdas)?;
        b.total = tape.scalar(loss);
        Ok((loss, b))
    }

    /// Draws a batch, records the loss, and applies one Adam update.
    pub fn step(&mut self) -> Result<LossBreakdown> {
        let batch = draw_batch(&mut self.rng, &self.data, self.config.batch, &self.schedule)?;
        let mut tape = Tape::new();
        let (loss, b) = self.objective(&mut tape, &batch)?;
        let step = self.steps_done;
        if ![b.denoise, b.spectral, b.total].iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged {
                step,
                denoise: b.denoise,
                spectral: b.spectral,
                total: b.total,
            });
        }
        let grads = tape.backward(loss)?;
        self.net.apply_gradients(&grads);
        adam_step(self.net.params_mut(), &mut self.adam, &self.adam_cfg)?;
        self.log.push(LogRow { step, loss: b });
        self.steps_done += 1;
        Ok(b)
    }

    /// Runs the configured number of steps. `on_eval` sees the network after
    /// every `eval_every` completed steps.
    pub fn run(&mut self, mut on_eval: impl FnMut(usize, &DenoiserNet) -> Result<()>) -> Result<()> {
        while self.steps_done < self.config.steps {
            self.step()?;
            if self.steps_done % self.config.eval_every == 0 {
                on_eval(self.steps_done, &self.net)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct TrainOutput {
    pub config: TrainConfig,
    pub net: DenoiserNet,
    pub schedule: NoiseSchedule,
    pub log: Vec<LogRow>,
}

pub fn train(cfg: &TrainConfig, data: SignalGrid) -> Result<TrainOutput> {
    let mut t = Trainer::new(cfg, data)?;
    t.run(|_, _| Ok(()))?;
    Ok(TrainOutput {
        config: t.config,
        net: t.net,
        schedule: t.schedule,
        log: t.log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::checkerboard::{gen_checkerboard, CheckerboardConfig};
    use crate::experiments::config::SpectralChoice;
    use crate::losses::{ddpm_loss, fourier_amplitude_loss, spectral_supervision_target};
    use crate::diffusion::DiscreteSchedule;

    fn data(count: usize) -> SignalGrid {
        gen_checkerboard(&CheckerboardConfig {
            count,
            size: 8,
            tile: 2,
            seed: 5,
        })
        .unwrap()
    }

    fn small(spectral: SpectralChoice, lambda: f64) -> TrainConfig {
        TrainConfig {
            spectral,
            lambda,
            steps: 6,
            batch: 4,
            t_steps: 20,
            channels: 4,
            blocks: 1,
            embed_dim: 8,
            eval_every: 2,
            ..TrainConfig::default()
        }
    }

    fn bits(rows: &[LogRow]) -> Vec<[u64; 4]> {
        rows.iter()
            .map(|r| [r.loss.denoise, r.loss.spectral, r.loss.lambda, r.loss.total].map(f64::to_bits))
            .collect()
    }

    #[test]
    fn baseline_totals_are_denoise() {
        let out = train(&small(SpectralChoice::None, 5.0), data(6)).unwrap();
        for r in &out.log {
            assert_eq!(r.loss.total.to_bits(), r.loss.denoise.to_bits());
            assert_eq!((r.loss.spectral, r.loss.lambda), (0.0, 0.0));
        }
    }

    #[test]
    fn zero_lambda_matches_baseline_bitwise() {
        let base = train(&small(SpectralChoice::None, 0.0), data(6)).unwrap();
        let amp = train(&small(SpectralChoice::Amp, 0.0), data(6)).unwrap();
        for (a, b) in base.log.iter().zip(&amp.log) {
            assert_eq!(a.loss.denoise.to_bits(), b.loss.denoise.to_bits());
            assert_eq!(b.loss.total.to_bits(), b.loss.denoise.to_bits());
        }
        assert_eq!(base.net.params(), amp.net.params());
        let again = train(&small(SpectralChoice::Amp, 0.0), data(6)).unwrap();
        assert_eq!(bits(&again.log), bits(&amp.log));
    }

    #[test]
    fn single_step_matches_scalar_reevaluation() {
        let d = data(1);
        let mut cfg = small(SpectralChoice::Amp, 0.3);
        cfg.steps = 1;
        cfg.batch = 3;
        let trainer = Trainer::new(&cfg, d.clone()).unwrap();
        let net = trainer.net.clone();
        let out = train(&cfg, d.clone()).unwrap();
        let logged = out.log[0].loss;

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(DATA_STREAM);
        let s = DiscreteSchedule::linear(cfg.t_steps, cfg.beta_min, cfg.beta_max).unwrap();
        let batch = draw_batch(&mut rng, &d, 3, &NoiseSchedule::Discrete(s.clone())).unwrap();
        let ts: Vec<usize> = batch
            .conds
            .iter()
            .map(|c| match c {
                TimeCondition::Step(t) => *t,
                _ => unreachable!(),
            })
            .collect();
        let xt = forward_diffuse(&batch.x0, &batch.eps, &ts, &s).unwrap();
        let temb = net.config.embedding.embed_batch(&batch.conds).unwrap();
        let pred = SignalGrid::new(net.predict(xt.tensor(), &temb).unwrap()).unwrap();
        let denoise = ddpm_loss(&batch.eps, &pred).unwrap();
        let xhat = spectral_supervision_target(&xt, &pred, &s, &ts).unwrap();
        let spectral = fourier_amplitude_loss(&batch.x0, &xhat).unwrap();
        let total = denoise + 0.3 * spectral;
        assert!((logged.denoise - denoise).abs() <= 1e-10 * denoise.max(1.0));
        assert!((logged.spectral - spectral).abs() <= 1e-10 * spectral.max(1.0));
        assert!((logged.total - total).abs() <= 1e-10 * total.max(1.0));
    }

    #[test]
    fn eval_cadence_and_determinism() {
        let cfg = small(SpectralChoice::Haar, 0.1);
        let mut seen = Vec::new();
        let mut t = Trainer::new(&cfg, data(5)).unwrap();
        t.run(|s, _| {
            seen.push(s);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![2, 4, 6]);
        let again = train(&cfg, data(5)).unwrap();
        assert_eq!(log_csv(&again.log), log_csv(&t.log));
        assert_eq!(again.net.params(), t.net.params());
    }

    #[test]
    fn sigma_cap_below_every_sample_is_baseline() {
        let base = train(&small(SpectralChoice::None, 0.0), data(6)).unwrap();
        let mut cfg = small(SpectralChoice::AmpPhase, 0.5);
        cfg.spectral_sigma_max = 1e-6;
        let capped = train(&cfg, data(6)).unwrap();
        assert_eq!(base.net.params(), capped.net.params());
        assert!(capped.log.iter().all(|r| r.loss.spectral > 0.0 && r.loss.lambda == 0.0));
    }

    #[test]
    fn sigma_cap_zeroes_noisy_samples_only() {
        let mut cfg = small(SpectralChoice::Amp, 0.5);
        cfg.spectral_sigma_max = 0.3;
        let t = Trainer::new(&cfg, data(4)).unwrap();
        let s = t.schedule().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch = draw_batch(&mut rng, &data(4), 32, &s).unwrap();
        let lambdas = t.lambdas(&batch).unwrap();
        for (l, sigma) in lambdas.iter().zip(&batch.sigmas) {
            assert_eq!(*l, if *sigma > 0.3 { 0.0 } else { 0.5 });
        }
        assert!(lambdas.contains(&0.0) && lambdas.contains(&0.5));
    }

    #[test]
    fn denoise_loss_halves_for_every_regularizer() {
        for (spectral, lambda) in [
            (SpectralChoice::None, 0.0),
            (SpectralChoice::Amp, 1e-3),
            (SpectralChoice::AmpPhase, 1e-5),
            (SpectralChoice::Haar, 1e-3),
            (SpectralChoice::Bior13, 1e-3),
        ] {
            let mut cfg = small(spectral, lambda);
            cfg.steps = 300;
            cfg.channels = 8;
            cfg.batch = 8;
            cfg.spectral_sigma_max = 1.0;
            let out = train(&cfg, data(32)).unwrap();
            let avg = |rows: &[LogRow]| rows.iter().map(|r| r.loss.denoise).sum::<f64>() / rows.len() as f64;
            let (first, last) = (avg(&out.log[..30]), avg(&out.log[270..]));
            assert!(last < 0.5 * first, "{spectral}: {first} -> {last}");
        }
    }

    #[test]
    fn edm_formulation_runs() {
        let mut cfg = small(SpectralChoice::AmpPhase, 1e-3);
        cfg.formulation = Formulation::Edm;
        cfg.lambda_mode = LambdaMode::EdmWeighted;
        let out = train(&cfg, data(4)).unwrap();
        assert_eq!(out.log.len(), 6);
        assert!(out.log.iter().all(|r| r.loss.total.is_finite()));
    }

    #[test]
    fn divergence_reports_step() {
        let mut cfg = small(SpectralChoice::None, 0.0);
        cfg.lr = 1e300;
        let mut t = Trainer::new(&cfg, data(3)).unwrap();
        let err = (0..6).map(|_| t.step()).find_map(|r| r.err());
        assert!(matches!(err, Some(Error::Diverged { .. }) | Some(Error::NonFiniteGradient(_))));
    }

    #[test]
    fn csv_format() {
        let rows = [LogRow {
            step: 0,
            loss: LossBreakdown {
                denoise: 1.5,
                spectral: 0.0,
                lambda: 0.0,
                total: 1.5,
            },
        }];
        assert_eq!(
            log_csv(&rows),
            "step,loss_denoise,loss_spectral,lambda,loss_total\n0,1.500000000000e0,0.000000000000e0,0.000000000000e0,1.500000000000e0\n"
        );
    }
}
