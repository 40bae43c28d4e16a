//! Timestep-conditioned residual convolutional denoiser.
//!
//! ```text
//! h = conv_lift(x) + W_lift temb
//! h = h + conv_i(silu(h) + W_i temb)      for each residual block i
//! out = conv_proj(silu(h))
//! ```
//!
//! All convolutions wrap around at the borders. The projection starts at zero,
//! so an untrained network predicts zero noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::autodiff::{Gradients, Tape, Var};
use super::embed::TimeEmbedding;

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserConfig {
    /// Spatial shape of one signal: `[n]` or `[h, w]`.
    pub signal_shape: Vec<usize>,
    pub channels: usize,
    pub blocks: usize,
    pub kernel: usize,
    pub embedding: TimeEmbedding,
}

impl DenoiserConfig {
    pub fn new(signal_shape: Vec<usize>) -> Self {
        DenoiserConfig {
            signal_shape,
            channels: 32,
            blocks: 3,
            kernel: 3,
            embedding: TimeEmbedding {
                width: 32,
                base: 10000.0,
            },
        }
    }

    fn validate(&self) -> Result<()> {
        if self.signal_shape.is_empty() || self.signal_shape.len() > 2 || self.signal_shape.contains(&0) {
            return Err(Error::Config(format!("unsupported signal shape {:?}", self.signal_shape)));
        }
        if self.channels == 0 {
            return Err(Error::Config("denoiser needs at least one channel".into()));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::Config(format!("kernel size must be odd, got {}", self.kernel)));
        }
        TimeEmbedding::new(self.embedding.width, self.embedding.base)?;
        Ok(())
    }

    fn plane(&self) -> (usize, usize) {
        match self.signal_shape.as_slice() {
            &[n] => (1, n),
            &[h, w] => (h, w),
            _ => unreachable!("validated"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserNet {
    pub config: DenoiserConfig,
    params: Vec<NamedTensor>,
}

fn uniform(rng: &mut ChaCha8Rng, shape: Vec<usize>, fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(shape, data).expect("shape and data agree").with_grad()
}

fn zeros(shape: Vec<usize>) -> Tensor {
    Tensor::zeros(shape).with_grad()
}

impl DenoiserNet {
    /// Fan-in uniform weights, zero biases, zero projection.
    pub fn init(config: DenoiserConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (c, k, e) = (config.channels, config.kernel, config.embedding.width);
        let mut params = Vec::new();
        let mut add = |name: String, tensor: Tensor| params.push(NamedTensor { name, tensor });
        add("lift.weight".into(), uniform(&mut rng, vec![c, 1, k, k], k * k));
        add("lift.bias".into(), zeros(vec![c]));
        add("lift.temb.weight".into(), uniform(&mut rng, vec![c, e], e));
        add("lift.temb.bias".into(), zeros(vec![c]));
        for b in 0..config.blocks {
            add(format!("block{b}.temb.weight"), uniform(&mut rng, vec![c, e], e));
            add(format!("block{b}.temb.bias"), zeros(vec![c]));
            add(format!("block{b}.conv.weight"), uniform(&mut rng, vec![c, c, k, k], c * k * k));
            add(format!("block{b}.conv.bias"), zeros(vec![c]));
        }
        add("proj.weight".into(), zeros(vec![1, c, k, k]));
        add("proj.bias".into(), zeros(vec![1]));
        Ok(DenoiserNet { config, params })
    }

    /// Rebuilds a network from named tensors, checking names and shapes
    /// against the layer plan implied by `config`.
    pub fn from_params(config: DenoiserConfig, params: Vec<NamedTensor>) -> Result<Self> {
        let template = DenoiserNet::init(config.clone(), 0)?;
        if template.params.len() != params.len() {
            return Err(Error::Validation(format!(
                "expected {} parameter tensors, got {}",
                template.params.len(),
                params.len()
            )));
        }
        let mut out = Vec::with_capacity(params.len());
        for (want, mut got) in template.params.into_iter().zip(params) {
            if want.name != got.name || want.tensor.shape() != got.tensor.shape() {
                return Err(Error::Validation(format!(
                    "parameter `{}` {:?} does not match expected `{}` {:?}",
                    got.name,
                    got.tensor.shape(),
                    want.name,
                    want.tensor.shape()
                )));
            }
            got.tensor.requires_grad = true;
            out.push(got);
        }
        Ok(DenoiserNet { config, params: out })
    }

    pub fn params(&self) -> &[NamedTensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [NamedTensor] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    /// Records the forward pass. `x` is `[B, ..signal_shape]`, `temb` is
    /// `[B, embedding.width]`; the output has the shape of `x`.
    pub fn forward(&self, tape: &mut Tape, x: Var, temb: Var) -> Result<Var> {
        let xs = tape.shape(x).to_vec();
        if xs.len() != self.config.signal_shape.len() + 1 || xs[1..] != self.config.signal_shape[..] {
            return Err(Error::Config(format!(
                "denoiser configured for signals {:?}, got input {:?}",
                self.config.signal_shape, xs
            )));
        }
        let batch = xs[0];
        let ts = tape.shape(temb).to_vec();
        if ts != [batch, self.config.embedding.width] {
            return Err(Error::Config(format!(
                "time embedding must be [{batch}, {}], got {ts:?}",
                self.config.embedding.width
            )));
        }
        let vars: Vec<Var> = self
            .params
            .iter()
            .enumerate()
            .map(|(i, p)| tape.param(i, &p.tensor))
            .collect();
        let (h, w) = self.config.plane();
        let input = tape.reshape(x, vec![batch, 1, h, w]);

        let mut next = vars.iter().copied();
        let mut take = || next.next().expect("parameter plan is complete");
        let (lw, lb, ltw, ltb) = (take(), take(), take(), take());
        let lifted = tape.conv2d(input, lw, lb);
        let emb = tape.linear(temb, ltw, ltb);
        let mut hidden = tape.add_channel_bias(lifted, emb);
        for _ in 0..self.config.blocks {
            let (tw, tb, cw, cb) = (take(), take(), take(), take());
            let act = tape.silu(hidden);
            let emb = tape.linear(temb, tw, tb);
            let cond = tape.add_channel_bias(act, emb);
            let res = tape.conv2d(cond, cw, cb);
            hidden = tape.add(hidden, res);
        }
        let (pw, pb) = (take(), take());
        let act = tape.silu(hidden);
        let out = tape.conv2d(act, pw, pb);
        Ok(tape.reshape(out, xs))
    }

    /// Forward pass without keeping the tape.
    pub fn predict(&self, x: &Tensor, temb: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let tv = tape.constant(temb);
        let out = self.forward(&mut tape, xv, tv)?;
        Ok(tape.to_tensor(out))
    }

    /// Stores `grads` into each parameter's `grad` (zeros where absent).
    pub fn apply_gradients(&mut self, grads: &Gradients) {
        for (i, p) in self.params.iter_mut().enumerate() {
            p.tensor.grad = Some(match grads.param(i) {
                Some(g) => g.to_vec(),
                None => vec![0.0; p.tensor.len()],
            });
        }
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(|p| p.tensor.zero_grad());
    }
}
