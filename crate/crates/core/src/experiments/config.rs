//! `key = value` training configuration.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::diffusion::{DiscreteSchedule, EdmSchedule, NoiseSchedule};
use crate::error::{Error, Result};
use crate::losses::{BandWeights, SpectralLossKind, WaveletLossConfig, DEFAULT_SIGMA_DATA};
use crate::nn::{DenoiserConfig, TimeEmbedding};
use crate::transforms::WaveletKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Formulation {
    Ddpm,
    Edm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectralChoice {
    None,
    Amp,
    AmpPhase,
    Haar,
    Bior13,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaMode {
    Scalar,
    /// `lambda * edm_weight(sigma)` per sample.
    EdmWeighted,
}

macro_rules! named_enum {
    ($ty:ident, $what:literal, $($variant:ident => $name:literal $(| $alias:literal)*),+) => {
        impl $ty {
            pub fn name(self) -> &'static str {
                match self { $($ty::$variant => $name),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name $(| $alias)* => Ok($ty::$variant),)+
                    other => Err(Error::Config(format!(
                        concat!("unknown ", $what, " `{}` (expected one of: {})"),
                        other,
                        [$($name),+].join(", ")
                    ))),
                }
            }
        }
    };
}

named_enum!(Formulation, "formulation", Ddpm => "ddpm", Edm => "edm");
named_enum!(SpectralChoice, "spectral loss",
    None => "none", Amp => "amp", AmpPhase => "amp-phase", Haar => "haar", Bior13 => "bior13" | "bior1.3");
named_enum!(LambdaMode, "lambda mode", Scalar => "scalar", EdmWeighted => "edm-weighted");

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub formulation: Formulation,
    pub spectral: SpectralChoice,
    pub lambda: f64,
    pub lambda_mode: LambdaMode,
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub t_steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub wavelet_levels: usize,
    pub gamma_approx: f64,
    pub gamma_detail: f64,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub channels: usize,
    pub blocks: usize,
    pub embed_dim: usize,
    pub eval_every: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub sigma_data: f64,
    /// Samples noisier than this (equivalent sigma for DDPM) get no spectral
    /// term. Infinite by default.
    pub spectral_sigma_max: f64,
    /// Spatial shape the model was built for; filled in from the data.
    pub signal_shape: Option<Vec<usize>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            formulation: Formulation::Ddpm,
            spectral: SpectralChoice::None,
            lambda: 0.01,
            lambda_mode: LambdaMode::Scalar,
            steps: 3000,
            batch: 16,
            lr: 1e-3,
            t_steps: 200,
            beta_min: 5e-4,
            beta_max: 0.1,
            wavelet_levels: 2,
            gamma_approx: 1.0,
            gamma_detail: 1.0,
            seed: 0,
            out_dir: None,
            data: None,
            channels: 32,
            blocks: 3,
            embed_dim: 32,
            eval_every: 500,
            sigma_min: 0.002,
            sigma_max: 80.0,
            sigma_data: DEFAULT_SIGMA_DATA,
            spectral_sigma_max: f64::INFINITY,
            signal_shape: None,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for key `{key}`")))
}

fn parse_shape(value: &str) -> Result<Vec<usize>> {
    let dims: Vec<usize> = value
        .split('x')
        .map(|d| parse_num::<usize>("signal_shape", d.trim()))
        .collect::<Result<_>>()?;
    if dims.is_empty() || dims.len() > 2 || dims.contains(&0) {
        return Err(Error::Config(format!("invalid signal_shape `{value}`")));
    }
    Ok(dims)
}

impl TrainConfig {
    /// Parses `key = value` lines; `#` starts a comment. Unknown keys and
    /// repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected `key = value`", lineno + 1)));
            };
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {}: key `{key}` repeated", lineno + 1)));
            }
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "formulation" => self.formulation = value.parse()?,
            "spectral" => self.spectral = value.parse()?,
            "lambda" => self.lambda = parse_num(key, value)?,
            "lambda_mode" => self.lambda_mode = value.parse()?,
            "steps" => self.steps = parse_num(key, value)?,
            "batch" => self.batch = parse_num(key, value)?,
            "lr" => self.lr = parse_num(key, value)?,
            "T" => self.t_steps = parse_num(key, value)?,
            "beta_min" => self.beta_min = parse_num(key, value)?,
            "beta_max" => self.beta_max = parse_num(key, value)?,
            "wavelet_levels" => self.wavelet_levels = parse_num(key, value)?,
            "gamma_approx" => self.gamma_approx = parse_num(key, value)?,
            "gamma_detail" => self.gamma_detail = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "out_dir" => self.out_dir = Some(PathBuf::from(value)),
            "data" => self.data = Some(PathBuf::from(value)),
            "channels" => self.channels = parse_num(key, value)?,
            "blocks" => self.blocks = parse_num(key, value)?,
            "embed_dim" => self.embed_dim = parse_num(key, value)?,
            "eval_every" => self.eval_every = parse_num(key, value)?,
            "sigma_min" => self.sigma_min = parse_num(key, value)?,
            "sigma_max" => self.sigma_max = parse_num(key, value)?,
            "sigma_data" => self.sigma_data = parse_num(key, value)?,
            "spectral_sigma_max" => self.spectral_sigma_max = parse_num(key, value)?,
            "signal_shape" => self.signal_shape = Some(parse_shape(value)?),
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: usize| {
            if v == 0 {
                Err(Error::Config(format!("`{name}` must be at least 1")))
            } else {
                Ok(())
            }
        };
        positive("steps", self.steps)?;
        positive("batch", self.batch)?;
        positive("T", self.t_steps)?;
        positive("channels", self.channels)?;
        positive("eval_every", self.eval_every)?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("`lr` must be positive, got {}", self.lr)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("`lambda` must be non-negative, got {}", self.lambda)));
        }
        if self.embed_dim == 0 || self.embed_dim % 2 != 0 {
            return Err(Error::Config(format!("`embed_dim` must be even and positive, got {}", self.embed_dim)));
        }
        if !(self.spectral_sigma_max > 0.0) {
            return Err(Error::Config(format!(
                "`spectral_sigma_max` must be positive, got {}",
                self.spectral_sigma_max
            )));
        }
        self.schedule()?;
        if matches!(self.spectral, SpectralChoice::Haar | SpectralChoice::Bior13) {
            WaveletLossConfig::new(WaveletKind::Haar, self.wavelet_levels, self.band_weights())?;
        }
        Ok(())
    }

    fn band_weights(&self) -> BandWeights {
        BandWeights::uniform(self.gamma_approx, self.gamma_detail)
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        Ok(match self.formulation {
            Formulation::Ddpm => NoiseSchedule::Discrete(DiscreteSchedule::linear(self.t_steps, self.beta_min, self.beta_max)?),
            Formulation::Edm => NoiseSchedule::Edm(EdmSchedule::new(self.sigma_min, self.sigma_max, 7.0, self.sigma_data)?),
        })
    }

    pub fn spectral_kind(&self) -> Result<Option<SpectralLossKind>> {
        let wavelet = |k| -> Result<_> {
            Ok(Some(SpectralLossKind::Wavelet(WaveletLossConfig::new(k, self.wavelet_levels, self.band_weights())?)))
        };
        match self.spectral {
            SpectralChoice::None => Ok(None),
            SpectralChoice::Amp => Ok(Some(SpectralLossKind::FourierAmplitude)),
            SpectralChoice::AmpPhase => Ok(Some(SpectralLossKind::FourierAmpPhase)),
            SpectralChoice::Haar => wavelet(WaveletKind::Haar),
            SpectralChoice::Bior13 => wavelet(WaveletKind::Bior13),
        }
    }

    pub fn denoiser_config(&self, signal_shape: &[usize]) -> Result<DenoiserConfig> {
        Ok(DenoiserConfig {
            signal_shape: signal_shape.to_vec(),
            channels: self.channels,
            blocks: self.blocks,
            kernel: 3,
            embedding: TimeEmbedding::new(self.embed_dim, 10000.0)?,
        })
    }

    /// Canonical text form; `parse(echo())` reproduces the config.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        line("formulation", self.formulation.to_string());
        line("spectral", self.spectral.to_string());
        line("lambda", format!("{:?}", self.lambda));
        line("lambda_mode", self.lambda_mode.to_string());
        line("steps", self.steps.to_string());
        line("batch", self.batch.to_string());
        line("lr", format!("{:?}", self.lr));
        line("T", self.t_steps.to_string());
        line("beta_min", format!("{:?}", self.beta_min));
        line("beta_max", format!("{:?}", self.beta_max));
        line("wavelet_levels", self.wavelet_levels.to_string());
        line("gamma_approx", format!("{:?}", self.gamma_approx));
        line("gamma_detail", format!("{:?}", self.gamma_detail));
        line("seed", self.seed.to_string());
        if let Some(p) = &self.out_dir {
            line("out_dir", p.display().to_string());
        }
        if let Some(p) = &self.data {
            line("data", p.display().to_string());
        }
        line("channels", self.channels.to_string());
        line("blocks", self.blocks.to_string());
        line("embed_dim", self.embed_dim.to_string());
        line("eval_every", self.eval_every.to_string());
        line("sigma_min", format!("{:?}", self.sigma_min));
        line("sigma_max", format!("{:?}", self.sigma_max));
        line("sigma_data", format!("{:?}", self.sigma_data));
        line("spectral_sigma_max", format!("{:?}", self.spectral_sigma_max));
        if let Some(shape) = &self.signal_shape {
            let dims: Vec<String> = shape.iter().map(usize::to_string).collect();
            line("signal_shape", dims.join("x"));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_and_comments() {
        let cfg = TrainConfig::parse(
            "# toy run\nformulation = edm\nspectral = bior1.3 # wavelet\nlambda=0.5\nT = 50\nsignal_shape = 8x16\n",
        )
        .unwrap();
        assert_eq!(cfg.formulation, Formulation::Edm);
        assert_eq!(cfg.spectral, SpectralChoice::Bior13);
        assert_eq!(cfg.lambda, 0.5);
        assert_eq!(cfg.t_steps, 50);
        assert_eq!(cfg.signal_shape, Some(vec![8, 16]));
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = TrainConfig::default();
        cfg.lr = 3e-4;
        cfg.data = Some("some/dir".into());
        cfg.spectral = SpectralChoice::AmpPhase;
        cfg.signal_shape = Some(vec![32, 32]);
        let again = TrainConfig::parse(&cfg.echo()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.echo(), cfg.echo());
    }

    #[test]
    fn rejects_bad_input() {
        for bad in [
            "nonsense",
            "unknown_key = 1",
            "steps = -1",
            "steps = 0",
            "spectral = fancy",
            "lambda = -1",
            "steps = 2\nsteps = 3",
            "beta_min = 0.2\nbeta_max = 0.1",
            "embed_dim = 7",
        ] {
            assert!(matches!(TrainConfig::parse(bad), Err(Error::Config(_))), "{bad}");
        }
    }
}
