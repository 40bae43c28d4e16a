//! Critically sampled multi-level DWT with periodic boundary extension.
//!
//! One analysis level maps `x` (even length `n`) to `n/2` approximation and
//! `n/2` detail coefficients:
//!
//! ```text
//! a[k] = sum_j lo[j] * x[(2k + j) mod n]
//! d[k] = sum_j hi[j] * x[(2k + j) mod n]
//! ```
//!
//! Synthesis places each coefficient back with the synthesis filters at the
//! same offsets and multiplies by the bank's gain. 2-D levels filter along the
//! width axis first, then the height axis, and recurse on the low/low band.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Supported wavelet families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WaveletKind {
    Haar,
    Bior13,
}

impl WaveletKind {
    pub fn name(self) -> &'static str {
        match self {
            WaveletKind::Haar => "haar",
            WaveletKind::Bior13 => "bior13",
        }
    }
}

impl fmt::Display for WaveletKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WaveletKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "haar" => Ok(WaveletKind::Haar),
            "bior13" | "bior1.3" => Ok(WaveletKind::Bior13),
            other => Err(Error::Config(format!("unknown wavelet `{other}` (expected haar or bior13)"))),
        }
    }
}

/// 4-tap B-spline synthesis pair that is sometimes listed alongside the
/// 2-tap bior1.3 analysis pair. It is not a perfect-reconstruction dual of
/// that pair (see the `bspline_synthesis_pair_does_not_invert` test), so it is
/// kept for reference only.
pub const BSPLINE_SYNTHESIS_LOW: [f64; 4] = [0.125, 0.375, 0.375, 0.125];
pub const BSPLINE_SYNTHESIS_HIGH: [f64; 4] = [-0.125, -0.375, 0.375, 0.125];

/// A two-channel analysis/synthesis filter bank.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    pub kind: WaveletKind,
    pub analysis_low: Vec<f64>,
    pub analysis_high: Vec<f64>,
    pub synthesis_low: Vec<f64>,
    pub synthesis_high: Vec<f64>,
    /// Scalar applied after synthesis so that synthesis inverts analysis.
    pub gain: f64,
}

/// Builds the named filter bank. Gains are not hard-coded: they come from an
/// impulse-response reconstruction check at construction.
pub fn filter_bank(kind: WaveletKind) -> Result<FilterBank> {
    let (lo, hi) = match kind {
        WaveletKind::Haar => {
            let r = std::f64::consts::FRAC_1_SQRT_2;
            (vec![r, r], vec![r, -r])
        }
        WaveletKind::Bior13 => (vec![0.5, 0.5], vec![-0.5, 0.5]),
    };
    let gain = calibrate_gain(&lo, &hi, &lo, &hi)?;
    Ok(FilterBank {
        kind,
        analysis_low: lo.clone(),
        analysis_high: hi.clone(),
        synthesis_low: lo,
        synthesis_high: hi,
        gain,
    })
}

pub fn filter_bank_by_name(name: &str) -> Result<FilterBank> {
    filter_bank(name.parse()?)
}

const CALIBRATION_LEN: usize = 16;
const CALIBRATION_TOLERANCE: f64 = 1e-12;

/// Finds the scalar `c` with `synthesis(analysis(delta_p)) = delta_p / c` for a
/// unit impulse at every position of a length-16 signal. Fails if any impulse
/// response is not a scaled copy of the impulse.
pub fn calibrate_gain(lo: &[f64], hi: &[f64], synth_lo: &[f64], synth_hi: &[f64]) -> Result<f64> {
    let n = CALIBRATION_LEN;
    let mut response_scale: Option<f64> = None;
    for p in 0..n {
        let mut x = vec![0.0; n];
        x[p] = 1.0;
        let (a, d) = analyze_1d(&x, lo, hi);
        let mut y = vec![0.0; n];
        expand_1d(&a, &d, synth_lo, synth_hi, &mut y);
        let peak = y[p];
        let leak = y
            .iter()
            .enumerate()
            .filter(|&(q, _)| q != p)
            .map(|(_, v)| v.abs())
            .fold(0.0, f64::max);
        if peak.abs() < CALIBRATION_TOLERANCE || leak > CALIBRATION_TOLERANCE * peak.abs() {
            return Err(Error::Validation(format!(
                "filter pair does not reconstruct an impulse at position {p} (peak {peak:.3e}, leakage {leak:.3e})"
            )));
        }
        match response_scale {
            None => response_scale = Some(peak),
            Some(s) if (s - peak).abs() > CALIBRATION_TOLERANCE * s.abs() => {
                return Err(Error::Validation(format!(
                    "impulse gain varies with position: {s} vs {peak} at {p}"
                )));
            }
            Some(_) => {}
        }
    }
    Ok(1.0 / response_scale.expect("calibration length is positive"))
}

pub(crate) fn analyze_1d(x: &[f64], lo: &[f64], hi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let half = n / 2;
    let mut a = vec![0.0; half];
    let mut d = vec![0.0; half];
    for k in 0..half {
        let (mut sa, mut sd) = (0.0, 0.0);
        for (j, (&l, &h)) in lo.iter().zip(hi).enumerate() {
            let v = x[(2 * k + j) % n];
            sa += l * v;
            sd += h * v;
        }
        a[k] = sa;
        d[k] = sd;
    }
    (a, d)
}

/// Transpose of [`analyze_1d`] for the given filters, accumulated into `out`.
pub(crate) fn expand_1d(a: &[f64], d: &[f64], lo: &[f64], hi: &[f64], out: &mut [f64]) {
    let n = out.len();
    for k in 0..a.len() {
        for (j, (&l, &h)) in lo.iter().zip(hi).enumerate() {
            out[(2 * k + j) % n] += l * a[k] + h * d[k];
        }
    }
}

/// Sub-band orientation. For 2-D grids the first letter names the filter
/// applied along the width axis and the second the one along the height axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Orientation {
    Approx,
    /// 1-D detail.
    D,
    LH,
    HL,
    HH,
}

impl Orientation {
    pub fn name(self) -> &'static str {
        match self {
            Orientation::Approx => "A",
            Orientation::D => "D",
            Orientation::LH => "LH",
            Orientation::HL => "HL",
            Orientation::HH => "HH",
        }
    }

    pub fn details_for(ndim: usize) -> &'static [Orientation] {
        if ndim == 1 {
            &[Orientation::D]
        } else {
            &[Orientation::LH, Orientation::HL, Orientation::HH]
        }
    }
}

/// One coefficient grid of a pyramid.
#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    /// 1 is the finest scale; the approximation band carries the coarsest level.
    pub level: usize,
    pub orientation: Orientation,
    pub shape: Vec<usize>,
    pub coeffs: Vec<f64>,
}

/// Multi-level decomposition of a single signal.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletPyramid {
    pub wavelet: WaveletKind,
    pub spatial: Vec<usize>,
    pub levels: usize,
    pub approx: Band,
    /// `details[s - 1]` holds the detail bands of level `s`.
    pub details: Vec<Vec<Band>>,
}

/// `(level, orientation, coefficient count)` for every band in the canonical
/// flattening order: approximation, then detail levels from coarsest to finest.
pub fn band_layout(spatial: &[usize], levels: usize) -> Vec<(usize, Orientation, usize)> {
    let band_len = |s: usize| -> usize { spatial.iter().map(|&d| d >> s).product() };
    let mut out = vec![(levels, Orientation::Approx, band_len(levels))];
    for s in (1..=levels).rev() {
        for &o in Orientation::details_for(spatial.len()) {
            out.push((s, o, band_len(s)));
        }
    }
    out
}

pub(crate) fn validate_levels(spatial: &[usize], levels: usize) -> Result<()> {
    if levels == 0 {
        return Err(Error::Config("wavelet level count must be at least 1".into()));
    }
    if spatial.is_empty() || spatial.len() > 2 {
        return Err(Error::Usage(format!("dwt expects 1-D or 2-D signals, got {spatial:?}")));
    }
    if levels >= usize::BITS as usize {
        return Err(Error::Config(format!("{levels} wavelet levels is too deep")));
    }
    let block = 1usize << levels;
    for &d in spatial {
        if d < block || d % block != 0 {
            return Err(Error::Config(format!(
                "{levels} wavelet levels need every axis divisible by {block}; got {spatial:?}"
            )));
        }
    }
    Ok(())
}

fn analyze_level(x: &[f64], shape: &[usize], lo: &[f64], hi: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    if shape.len() == 1 {
        let (a, d) = analyze_1d(x, lo, hi);
        return (a, vec![d]);
    }
    let (h, w) = (shape[0], shape[1]);
    let (h2, w2) = (h / 2, w / 2);
    let mut low = vec![0.0; h * w2];
    let mut high = vec![0.0; h * w2];
    for r in 0..h {
        let (a, d) = analyze_1d(&x[r * w..(r + 1) * w], lo, hi);
        low[r * w2..(r + 1) * w2].copy_from_slice(&a);
        high[r * w2..(r + 1) * w2].copy_from_slice(&d);
    }
    let columns = |src: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut l = vec![0.0; h2 * w2];
        let mut hh = vec![0.0; h2 * w2];
        let mut col = vec![0.0; h];
        for c in 0..w2 {
            for r in 0..h {
                col[r] = src[r * w2 + c];
            }
            let (a, d) = analyze_1d(&col, lo, hi);
            for r in 0..h2 {
                l[r * w2 + c] = a[r];
                hh[r * w2 + c] = d[r];
            }
        }
        (l, hh)
    };
    let (ll, lh) = columns(&low);
    let (hl, hhb) = columns(&high);
    (ll, vec![lh, hl, hhb])
}

fn expand_level(approx: &[f64], details: &[&[f64]], shape: &[usize], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    if shape.len() == 1 {
        let mut out = vec![0.0; shape[0]];
        expand_1d(approx, details[0], lo, hi, &mut out);
        return out;
    }
    let (h, w) = (shape[0], shape[1]);
    let (h2, w2) = (h / 2, w / 2);
    let columns = |a: &[f64], d: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; h * w2];
        let mut ca = vec![0.0; h2];
        let mut cd = vec![0.0; h2];
        let mut col = vec![0.0; h];
        for c in 0..w2 {
            for r in 0..h2 {
                ca[r] = a[r * w2 + c];
                cd[r] = d[r * w2 + c];
            }
            col.fill(0.0);
            expand_1d(&ca, &cd, lo, hi, &mut col);
            for r in 0..h {
                out[r * w2 + c] = col[r];
            }
        }
        out
    };
    let low = columns(approx, details[0]);
    let high = columns(details[1], details[2]);
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        expand_1d(
            &low[r * w2..(r + 1) * w2],
            &high[r * w2..(r + 1) * w2],
            lo,
            hi,
            &mut out[r * w..(r + 1) * w],
        );
    }
    out
}

/// Forward transform of one signal with spatial shape `spatial`.
pub fn dwt(x: &[f64], spatial: &[usize], bank: &FilterBank, levels: usize) -> Result<WaveletPyramid> {
    validate_levels(spatial, levels)?;
    let n: usize = spatial.iter().product();
    if x.len() != n {
        return Err(Error::shape("dwt", spatial, &[x.len()]));
    }
    let mut current = x.to_vec();
    let mut shape = spatial.to_vec();
    let mut details = Vec::with_capacity(levels);
    for level in 1..=levels {
        let (a, ds) = analyze_level(&current, &shape, &bank.analysis_low, &bank.analysis_high);
        shape.iter_mut().for_each(|d| *d /= 2);
        let bands = ds
            .into_iter()
            .zip(Orientation::details_for(spatial.len()))
            .map(|(coeffs, &orientation)| Band {
                level,
                orientation,
                shape: shape.clone(),
                coeffs,
            })
            .collect();
        details.push(bands);
        current = a;
    }
    Ok(WaveletPyramid {
        wavelet: bank.kind,
        spatial: spatial.to_vec(),
        levels,
        approx: Band {
            level: levels,
            orientation: Orientation::Approx,
            shape,
            coeffs: current,
        },
        details,
    })
}

/// Synthesis with `gain` applied once per axis at every level.
fn reconstruct(p: &WaveletPyramid, lo: &[f64], hi: &[f64], gain: f64) -> Vec<f64> {
    let level_gain = gain.powi(p.spatial.len() as i32);
    let mut current = p.approx.coeffs.clone();
    for s in (1..=p.levels).rev() {
        let shape: Vec<usize> = p.spatial.iter().map(|&d| d >> (s - 1)).collect();
        let ds: Vec<&[f64]> = p.details[s - 1].iter().map(|b| b.coeffs.as_slice()).collect();
        current = expand_level(&current, &ds, &shape, lo, hi);
        if level_gain != 1.0 {
            current.iter_mut().for_each(|v| *v *= level_gain);
        }
    }
    current
}

impl WaveletPyramid {
    fn check_consistent(&self) -> Result<()> {
        validate_levels(&self.spatial, self.levels)?;
        let expect = |s: usize| -> Vec<usize> { self.spatial.iter().map(|&d| d >> s).collect() };
        let bad = |b: &Band, s: usize| b.shape != expect(s) || b.coeffs.len() != expect(s).iter().product::<usize>();
        if bad(&self.approx, self.levels) || self.details.len() != self.levels {
            return Err(Error::Validation("pyramid approximation band is inconsistent with its geometry".into()));
        }
        let per_level = Orientation::details_for(self.spatial.len()).len();
        for (i, bands) in self.details.iter().enumerate() {
            if bands.len() != per_level || bands.iter().any(|b| bad(b, i + 1)) {
                return Err(Error::Validation(format!("pyramid level {} has inconsistent bands", i + 1)));
            }
        }
        Ok(())
    }

    /// All coefficients in [`band_layout`] order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.approx.coeffs.clone();
        for bands in self.details.iter().rev() {
            for b in bands {
                out.extend_from_slice(&b.coeffs);
            }
        }
        out
    }

    /// Inverse of [`WaveletPyramid::flatten`].
    pub fn from_flat(wavelet: WaveletKind, spatial: &[usize], levels: usize, flat: &[f64]) -> Result<Self> {
        validate_levels(spatial, levels)?;
        let layout = band_layout(spatial, levels);
        let total: usize = layout.iter().map(|l| l.2).sum();
        if total != flat.len() {
            return Err(Error::shape("pyramid from_flat", &[total], &[flat.len()]));
        }
        let band_shape = |s: usize| -> Vec<usize> { spatial.iter().map(|&d| d >> s).collect() };
        let mut offset = 0;
        let mut approx = None;
        let mut details: Vec<Vec<Band>> = vec![Vec::new(); levels];
        for (level, orientation, len) in layout {
            let band = Band {
                level,
                orientation,
                shape: band_shape(level),
                coeffs: flat[offset..offset + len].to_vec(),
            };
            offset += len;
            if orientation == Orientation::Approx {
                approx = Some(band);
            } else {
                details[level - 1].push(band);
            }
        }
        Ok(WaveletPyramid {
            wavelet,
            spatial: spatial.to_vec(),
            levels,
            approx: approx.expect("layout starts with the approximation band"),
            details,
        })
    }

    pub fn bands(&self) -> impl Iterator<Item = &Band> {
        std::iter::once(&self.approx).chain(self.details.iter().rev().flatten())
    }
}

/// Inverse transform of one pyramid.
pub fn idwt(p: &WaveletPyramid, bank: &FilterBank) -> Result<Vec<f64>> {
    p.check_consistent()?;
    if p.wavelet != bank.kind {
        return Err(Error::Validation(format!(
            "pyramid was built with {} but the bank is {}",
            p.wavelet, bank.kind
        )));
    }
    Ok(reconstruct(p, &bank.synthesis_low, &bank.synthesis_high, bank.gain))
}

/// Applies the transpose of the analysis operator to a flattened coefficient
/// vector. This is the backward pass of [`dwt`].
pub fn dwt_adjoint(flat: &[f64], spatial: &[usize], bank: &FilterBank, levels: usize) -> Result<Vec<f64>> {
    let p = WaveletPyramid::from_flat(bank.kind, spatial, levels, flat)?;
    Ok(reconstruct(&p, &bank.analysis_low, &bank.analysis_high, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    /// Full periodic correlation followed by keeping every second output.
    fn filter_and_downsample(x: &[f64], f: &[f64]) -> Vec<f64> {
        let n = x.len();
        let full: Vec<f64> = (0..n)
            .map(|i| f.iter().enumerate().map(|(j, c)| c * x[(i + j) % n]).sum())
            .collect();
        full.into_iter().step_by(2).collect()
    }

    #[test]
    fn haar_coefficients_are_orthonormal() {
        let b = filter_bank(WaveletKind::Haar).unwrap();
        let r = 0.5f64.sqrt();
        assert_eq!(b.analysis_low, vec![r, r]);
        assert_eq!(b.analysis_high, vec![r, -r]);
        assert_eq!(b.synthesis_low, b.analysis_low);
        assert_eq!(b.synthesis_high, b.analysis_high);
        assert!((b.gain - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bior13_analysis_filters() {
        let b = filter_bank(WaveletKind::Bior13).unwrap();
        assert_eq!(b.analysis_low, vec![0.5, 0.5]);
        assert_eq!(b.analysis_high, vec![-0.5, 0.5]);
    }

    #[test]
    fn bior13_gain_from_impulse_brute_force() {
        let b = filter_bank(WaveletKind::Bior13).unwrap();
        // Scan candidate gains and keep the one minimizing the worst impulse error.
        let n = 16;
        let worst = |c: f64| -> f64 {
            (0..n)
                .map(|p| {
                    let mut x = vec![0.0; n];
                    x[p] = 1.0;
                    let pyr = dwt(&x, &[n], &b, 1).unwrap();
                    let mut y = vec![0.0; n];
                    expand_1d(&pyr.approx.coeffs, &pyr.details[0][0].coeffs, &b.synthesis_low, &b.synthesis_high, &mut y);
                    y.iter().zip(&x).map(|(v, t)| (c * v - t).abs()).fold(0.0, f64::max)
                })
                .fold(0.0, f64::max)
        };
        let best = (1..=4000).map(|i| i as f64 * 1e-3).min_by(|a, c| worst(*a).total_cmp(&worst(*c))).unwrap();
        assert!((best - 2.0).abs() < 1e-9);
        assert!((b.gain - best).abs() < 1e-12);
    }

    #[test]
    fn bspline_synthesis_pair_does_not_invert() {
        let lo = [0.5, 0.5];
        let hi = [-0.5, 0.5];
        assert!(calibrate_gain(&lo, &hi, &BSPLINE_SYNTHESIS_LOW, &BSPLINE_SYNTHESIS_HIGH).is_err());
    }

    #[test]
    fn unknown_name_is_config_error() {
        assert!(matches!(filter_bank_by_name("db4"), Err(Error::Config(_))));
        assert_eq!(filter_bank_by_name("bior13").unwrap().kind, WaveletKind::Bior13);
    }

    #[test]
    fn constant_signal_has_zero_haar_details() {
        let b = filter_bank(WaveletKind::Haar).unwrap();
        let p = dwt(&[3.0; 64], &[8, 8], &b, 3).unwrap();
        for band in p.details.iter().flatten() {
            assert!(band.coeffs.iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn ones_one_level() {
        let b = filter_bank(WaveletKind::Haar).unwrap();
        let p = dwt(&[1.0; 4], &[4], &b, 1).unwrap();
        let s = 2f64.sqrt();
        assert!(p.approx.coeffs.iter().all(|v| (v - s).abs() < 1e-15));
        assert_eq!(p.approx.coeffs.len(), 2);
        assert_eq!(p.details[0][0].coeffs, vec![0.0, 0.0]);
    }

    #[test]
    fn two_level_haar_matches_filter_oracle() {
        let b = filter_bank(WaveletKind::Haar).unwrap();
        let x = random(8, 3);
        let p = dwt(&x, &[8], &b, 2).unwrap();
        let a1 = filter_and_downsample(&x, &b.analysis_low);
        let d1 = filter_and_downsample(&x, &b.analysis_high);
        let a2 = filter_and_downsample(&a1, &b.analysis_low);
        let d2 = filter_and_downsample(&a1, &b.analysis_high);
        let close = |u: &[f64], v: &[f64]| u.iter().zip(v).all(|(a, c)| (a - c).abs() < 1e-12);
        assert!(close(&p.details[0][0].coeffs, &d1));
        assert!(close(&p.details[1][0].coeffs, &d2));
        assert!(close(&p.approx.coeffs, &a2));
    }

    #[test]
    fn round_trips() {
        let haar = filter_bank(WaveletKind::Haar).unwrap();
        let x = random(256, 11);
        let p = dwt(&x, &[16, 16], &haar, 3).unwrap();
        let back = idwt(&p, &haar).unwrap();
        assert!(back.iter().zip(&x).all(|(a, b)| (a - b).abs() <= 1e-10));

        let bior = filter_bank(WaveletKind::Bior13).unwrap();
        let x = random(32, 12);
        let back = idwt(&dwt(&x, &[32], &bior, 2).unwrap(), &bior).unwrap();
        assert!(back.iter().zip(&x).all(|(a, b)| (a - b).abs() <= 1e-9));
    }

    #[test]
    fn zero_pyramid_gives_zero_signal() {
        let haar = filter_bank(WaveletKind::Haar).unwrap();
        let p = WaveletPyramid::from_flat(WaveletKind::Haar, &[8, 8], 2, &[0.0; 64]).unwrap();
        assert!(idwt(&p, &haar).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn band_shapes_halve_and_count_is_preserved() {
        let haar = filter_bank(WaveletKind::Haar).unwrap();
        let p = dwt(&random(16 * 32, 5), &[16, 32], &haar, 3).unwrap();
        assert_eq!(p.details[0][0].shape, vec![8, 16]);
        assert_eq!(p.details[2][2].shape, vec![2, 4]);
        assert_eq!(p.approx.shape, vec![2, 4]);
        assert_eq!(p.flatten().len(), 16 * 32);
        assert_eq!(p.bands().count(), 10);
    }

    #[test]
    fn too_many_levels() {
        let haar = filter_bank(WaveletKind::Haar).unwrap();
        assert!(matches!(dwt(&[0.0; 8], &[8], &haar, 4), Err(Error::Config(_))));
        assert!(matches!(dwt(&[0.0; 12], &[12], &haar, 3), Err(Error::Config(_))));
        assert!(matches!(dwt(&[0.0; 8], &[8], &haar, 0), Err(Error::Config(_))));
    }

    #[test]
    fn inconsistent_pyramid_rejected() {
        let haar = filter_bank(WaveletKind::Haar).unwrap();
        let mut p = dwt(&random(16, 1), &[16], &haar, 2).unwrap();
        p.details[1][0].coeffs.pop();
        assert!(matches!(idwt(&p, &haar), Err(Error::Validation(_))));
    }

    #[test]
    fn adjoint_is_transpose() {
        for kind in [WaveletKind::Haar, WaveletKind::Bior13] {
            let bank = filter_bank(kind).unwrap();
            let x = random(64, 21);
            let y = random(64, 22);
            let ax = dwt(&x, &[8, 8], &bank, 2).unwrap().flatten();
            let aty = dwt_adjoint(&y, &[8, 8], &bank, 2).unwrap();
            let lhs: f64 = ax.iter().zip(&y).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.iter().zip(&aty).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn haar_preserves_energy(x in prop::collection::vec(-10.0f64..10.0, 64), levels in 1usize..=3) {
            let haar = filter_bank(WaveletKind::Haar).unwrap();
            let p = dwt(&x, &[8, 8], &haar, levels).unwrap();
            let e_sig: f64 = x.iter().map(|v| v * v).sum();
            let e_coef: f64 = p.flatten().iter().map(|v| v * v).sum();
            prop_assert!((e_sig - e_coef).abs() <= 1e-9 * e_sig.max(1.0));
        }

        #[test]
        fn bior13_reconstructs(x in prop::collection::vec(-10.0f64..10.0, 32), levels in 1usize..=3) {
            let bank = filter_bank(WaveletKind::Bior13).unwrap();
            let back = idwt(&dwt(&x, &[32], &bank, levels).unwrap(), &bank).unwrap();
            for (a, b) in back.iter().zip(&x) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }
    }
}
