//! Central finite-difference validation of autodiff gradients.

use std::fmt;

use crate::error::Result;
use crate::tensor::Tensor;

use super::autodiff::{Tape, Var};
use super::net::DenoiserNet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tolerance: f64,
    /// Coordinates where both gradients are at or below this magnitude are
    /// not compared.
    pub min_grad: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            tolerance: 1e-4,
            min_grad: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamDeviation {
    pub name: String,
    pub max_relative_error: f64,
    pub compared: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub params: Vec<ParamDeviation>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn worst(&self) -> f64 {
        self.params.iter().map(|p| p.max_relative_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.worst() <= self.tolerance
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.params {
            writeln!(f, "{:<24} {:>5} coords  max rel err {:.3e}", p.name, p.compared, p.max_relative_error)?;
        }
        write!(
            f,
            "{} (worst {:.3e}, tolerance {:.1e})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.worst(),
            self.tolerance
        )
    }
}

/// `max |a - n| / max(|a|, |n|)` over coordinates where `max(|a|, |n|) > min_grad`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], min_grad: f64) -> (f64, usize) {
    let mut worst = 0.0f64;
    let mut compared = 0;
    for (a, n) in analytic.iter().zip(numeric) {
        let scale = a.abs().max(n.abs());
        if scale <= min_grad {
            continue;
        }
        compared += 1;
        worst = worst.max((a - n).abs() / scale);
    }
    (worst, compared)
}

/// Maps a network output to a scalar loss node.
pub type LossFn<'a> = dyn Fn(&mut Tape, Var) -> Result<Var> + 'a;

fn evaluate(net: &DenoiserNet, x: &Tensor, temb: &Tensor, loss_fn: &LossFn<'_>) -> Result<f64> {
    let mut tape = Tape::new();
    let xv = tape.constant(x);
    let tv = tape.constant(temb);
    let out = net.forward(&mut tape, xv, tv)?;
    let loss = loss_fn(&mut tape, out)?;
    Ok(tape.scalar(loss))
}

/// Autodiff gradients of `loss_fn(net(x, temb))`, one vector per parameter.
pub fn analytic_gradients(net: &DenoiserNet, x: &Tensor, temb: &Tensor, loss_fn: &LossFn<'_>) -> Result<Vec<Vec<f64>>> {
    let mut tape = Tape::new();
    let xv = tape.constant(x);
    let tv = tape.constant(temb);
    let out = net.forward(&mut tape, xv, tv)?;
    let loss = loss_fn(&mut tape, out)?;
    if !tape.requires_grad(loss) {
        return Ok(net.params().iter().map(|p| vec![0.0; p.tensor.len()]).collect());
    }
    let grads = tape.backward(loss)?;
    Ok((0..net.params().len())
        .map(|i| match grads.param(i) {
            Some(g) => g.to_vec(),
            None => vec![0.0; net.params()[i].tensor.len()],
        })
        .collect())
}

/// Central differences with step `h` for every parameter coordinate.
pub fn numeric_gradients(
    net: &DenoiserNet,
    x: &Tensor,
    temb: &Tensor,
    loss_fn: &LossFn<'_>,
    h: f64,
) -> Result<Vec<Vec<f64>>> {
    let mut probe = net.clone();
    let mut out = Vec::with_capacity(net.params().len());
    for i in 0..net.params().len() {
        let mut g = Vec::with_capacity(net.params()[i].tensor.len());
        for j in 0..net.params()[i].tensor.len() {
            let orig = net.params()[i].tensor.data()[j];
            probe.params_mut()[i].tensor.data_mut()[j] = orig + h;
            let plus = evaluate(&probe, x, temb, loss_fn)?;
            probe.params_mut()[i].tensor.data_mut()[j] = orig - h;
            let minus = evaluate(&probe, x, temb, loss_fn)?;
            probe.params_mut()[i].tensor.data_mut()[j] = orig;
            g.push((plus - minus) / (2.0 * h));
        }
        out.push(g);
    }
    Ok(out)
}

pub fn compare(net: &DenoiserNet, analytic: &[Vec<f64>], numeric: &[Vec<f64>], opts: &GradCheckOptions) -> GradCheckReport {
    let params = net
        .params()
        .iter()
        .zip(analytic.iter().zip(numeric))
        .map(|(p, (a, n))| {
            let (max_relative_error, compared) = max_relative_error(a, n, opts.min_grad);
            ParamDeviation {
                name: p.name.clone(),
                max_relative_error,
                compared,
            }
        })
        .collect();
    GradCheckReport {
        params,
        tolerance: opts.tolerance,
    }
}

/// Compares autodiff against central differences for every parameter.
pub fn grad_check(
    net: &DenoiserNet,
    x: &Tensor,
    temb: &Tensor,
    loss_fn: &LossFn<'_>,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let analytic = analytic_gradients(net, x, temb, loss_fn)?;
    let numeric = numeric_gradients(net, x, temb, loss_fn, opts.step)?;
    Ok(compare(net, &analytic, &numeric, opts))
}
