//! Radially averaged power spectra of 2-D images.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::tensor::SignalGrid;

use super::fourier::dft_real;

/// Mean `|X|^2` per integer radius from the DC bin.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    pub mean_power: Vec<f64>,
    pub count: Vec<usize>,
}

impl RadialProfile {
    pub fn bins(&self) -> usize {
        self.mean_power.len()
    }

    /// Sum of `mean_power * count`, i.e. the total power the profile covers.
    pub fn total_power(&self) -> f64 {
        self.mean_power
            .iter()
            .zip(&self.count)
            .map(|(p, &c)| p * c as f64)
            .sum()
    }

    /// `bin,mean_power,count` with one row per bin.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin,mean_power,count\n");
        for (i, (p, c)) in self.mean_power.iter().zip(&self.count).enumerate() {
            writeln!(out, "{i},{p:.12e},{c}").expect("writing to a String");
        }
        out
    }
}

fn signed_frequency(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Radius bin that DFT index `(u, v)` of an `h x w` grid falls into.
pub fn radius_bin(u: usize, v: usize, h: usize, w: usize) -> usize {
    let fu = signed_frequency(u, h) as f64;
    let fv = signed_frequency(v, w) as f64;
    (fu * fu + fv * fv).sqrt().round() as usize
}

/// Largest radius bin any coefficient of an `h x w` grid falls into.
pub fn max_radius_bin(h: usize, w: usize) -> usize {
    radius_bin(h / 2, w / 2, h, w)
}

/// Per-coefficient radius bins in row-major DFT order.
pub(crate) fn bin_map(h: usize, w: usize) -> Vec<usize> {
    (0..h * w).map(|i| radius_bin(i / w, i % w, h, w)).collect()
}

/// Radial profile of one `h x w` image.
///
/// With `n_bins = None` the profile covers every coefficient (bins
/// `0..=max_radius_bin`); a smaller explicit count drops the outer corners.
pub fn radial_power_spectrum(image: &[f64], h: usize, w: usize, n_bins: Option<usize>) -> Result<RadialProfile> {
    if h * w != image.len() || image.is_empty() {
        return Err(Error::shape("radial_power_spectrum", &[h, w], &[image.len()]));
    }
    let bins = n_bins.unwrap_or(max_radius_bin(h, w) + 1);
    if bins == 0 {
        return Err(Error::Config("radial profile needs at least one bin".into()));
    }
    let coeffs = dft_real(image, &[h, w]);
    let mut sum = vec![0.0; bins];
    let mut count = vec![0usize; bins];
    for (c, r) in coeffs.iter().zip(bin_map(h, w)) {
        if r < bins {
            sum[r] += c.norm_sqr();
            count[r] += 1;
        }
    }
    let mean_power = sum
        .iter()
        .zip(&count)
        .map(|(s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect();
    Ok(RadialProfile { mean_power, count })
}

/// Mean over the batch of per-image profiles, accumulated in image order.
pub fn mean_radial_profile(grid: &SignalGrid, n_bins: Option<usize>) -> Result<RadialProfile> {
    let &[h, w] = grid.spatial() else {
        return Err(Error::Usage(
            "radial power spectra need 2-D images; use the dft amplitude for 1-D signals".into(),
        ));
    };
    let mut acc: Option<RadialProfile> = None;
    for b in 0..grid.batch() {
        let p = radial_power_spectrum(grid.sample(b), h, w, n_bins)?;
        match acc.as_mut() {
            None => acc = Some(p),
            Some(a) => a.mean_power.iter_mut().zip(&p.mean_power).for_each(|(x, y)| *x += y),
        }
    }
    let mut out = acc.expect("signal grids have a positive batch");
    let inv = 1.0 / grid.batch() as f64;
    out.mean_power.iter_mut().for_each(|v| *v *= inv);
    Ok(out)
}
