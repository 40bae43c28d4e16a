//! Unnormalized forward DFT, `1/N` inverse, and the polar view of a spectrum.
//!
//! Transforms act on the trailing spatial axes of a `[batch, ...]` grid; the
//! batch axis is never mixed. Individual 1-D passes go through `rustfft`, which
//! picks radix, mixed-radix, or Bluestein plans per length.

use std::cell::RefCell;
use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

use crate::error::{Error, Result};
use crate::tensor::SignalGrid;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Relative tolerance for the Hermitian-symmetry check in [`idft`].
pub const HERMITIAN_TOLERANCE: f64 = 1e-10;

/// Complex DFT coefficients of a signal batch with their amplitude and phase planes.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// `[batch, n]` or `[batch, h, w]`, same as the source grid.
    pub shape: Vec<usize>,
    pub coeffs: Vec<Complex64>,
    pub amplitude: Vec<f64>,
    pub phase: Vec<f64>,
}

impl Spectrum {
    pub fn from_coeffs(shape: Vec<usize>, coeffs: Vec<Complex64>) -> Self {
        let (amplitude, phase) = coeffs.iter().map(|&c| polar(c)).unzip();
        Spectrum {
            shape,
            coeffs,
            amplitude,
            phase,
        }
    }

    pub fn spatial(&self) -> &[usize] {
        &self.shape[1..]
    }

    pub fn sample(&self, i: usize) -> &[Complex64] {
        let n: usize = self.spatial().iter().product();
        &self.coeffs[i * n..(i + 1) * n]
    }
}

/// Amplitude and phase of one coefficient. Phase lies in `(-pi, pi]` and is 0
/// where the coefficient is exactly zero.
pub fn polar(c: Complex64) -> (f64, f64) {
    let amp = c.norm();
    if amp == 0.0 {
        return (0.0, 0.0);
    }
    (amp, canonical_angle(c.im.atan2(c.re)))
}

/// Maps `-pi` onto `pi` so angles live in the half-open interval `(-pi, pi]`.
pub(crate) fn canonical_angle(a: f64) -> f64 {
    if a <= -PI {
        a + 2.0 * PI
    } else {
        a
    }
}

/// Wraps an angle difference into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut r = (a + PI).rem_euclid(two_pi) - PI;
    if r <= -PI {
        r += two_pi;
    }
    r
}

fn fft_axis(data: &mut [Complex64], dims: &[usize], axis: usize, direction: FftDirection) {
    let len = dims[axis];
    if len == 1 {
        return;
    }
    let stride: usize = dims[axis + 1..].iter().product();
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft(len, direction));
    let total: usize = dims.iter().product();
    let mut line = vec![Complex64::new(0.0, 0.0); len];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let outer = total / (len * stride);
    for o in 0..outer {
        for s in 0..stride {
            let base = o * len * stride + s;
            for (i, v) in line.iter_mut().enumerate() {
                *v = data[base + i * stride];
            }
            fft.process_with_scratch(&mut line, &mut scratch);
            for (i, v) in line.iter().enumerate() {
                data[base + i * stride] = *v;
            }
        }
    }
}

/// In-place multi-axis transform over all of `dims` (no batch axis). The
/// inverse direction is unnormalized here.
pub(crate) fn fft_in_place(data: &mut [Complex64], dims: &[usize], inverse: bool) {
    let direction = if inverse {
        FftDirection::Inverse
    } else {
        FftDirection::Forward
    };
    for axis in 0..dims.len() {
        fft_axis(data, dims, axis, direction);
    }
}

/// Forward transform of one real signal with spatial shape `dims`.
pub fn dft_real(x: &[f64], dims: &[usize]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_in_place(&mut buf, dims, false);
    buf
}

/// Unnormalized inverse transform; the real part of `N * idft`.
pub(crate) fn inverse_unnormalized_real(coeffs: &[Complex64], dims: &[usize]) -> Vec<f64> {
    let mut buf = coeffs.to_vec();
    fft_in_place(&mut buf, dims, true);
    buf.into_iter().map(|c| c.re).collect()
}

/// Forward DFT of every signal in the batch.
pub fn dft(x: &SignalGrid) -> Result<Spectrum> {
    if x.data().is_empty() {
        return Err(Error::Usage("dft of an empty signal".into()));
    }
    let dims = x.spatial().to_vec();
    let mut coeffs = Vec::with_capacity(x.data().len());
    for b in 0..x.batch() {
        coeffs.extend(dft_real(x.sample(b), &dims));
    }
    Ok(Spectrum::from_coeffs(x.shape().to_vec(), coeffs))
}

fn mirror_index(flat: usize, dims: &[usize]) -> usize {
    let mut rem = flat;
    let mut out = 0;
    let mut stride = 1;
    let mut strides = vec![0; dims.len()];
    for (axis, &d) in dims.iter().enumerate().rev() {
        strides[axis] = stride;
        stride *= d;
    }
    for (axis, &d) in dims.iter().enumerate() {
        let k = rem / strides[axis];
        rem %= strides[axis];
        out += ((d - k) % d) * strides[axis];
    }
    out
}

/// Inverse DFT with `1/N` normalization. Rejects spectra that are not
/// Hermitian-symmetric, since those have no real preimage.
pub fn idft(s: &Spectrum) -> Result<SignalGrid> {
    let dims = s.spatial().to_vec();
    let n: usize = dims.iter().product();
    let scale = s.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let tol = HERMITIAN_TOLERANCE * scale.max(f64::MIN_POSITIVE);
    let batch = s.shape[0];
    let mut out = Vec::with_capacity(batch * n);
    for b in 0..batch {
        let coeffs = s.sample(b);
        for (k, c) in coeffs.iter().enumerate() {
            let m = coeffs[mirror_index(k, &dims)];
            if (c - m.conj()).norm() > tol {
                return Err(Error::Validation(format!(
                    "spectrum is not Hermitian at bin {k} of sample {b}"
                )));
            }
        }
        let inv = 1.0 / n as f64;
        out.extend(inverse_unnormalized_real(coeffs, &dims).into_iter().map(|v| v * inv));
    }
    SignalGrid::from_vec(s.shape.clone(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct O(N^2) summation, one axis at a time.
    fn naive_dft(x: &[f64], dims: &[usize]) -> Vec<Complex64> {
        let n: usize = dims.iter().product();
        let (h, w) = if dims.len() == 1 { (1, dims[0]) } else { (dims[0], dims[1]) };
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for u in 0..h {
            for v in 0..w {
                let mut acc = Complex64::new(0.0, 0.0);
                for y in 0..h {
                    for xx in 0..w {
                        let ang = -2.0 * PI * ((u * y) as f64 / h as f64 + (v * xx) as f64 / w as f64);
                        acc += x[y * w + xx] * Complex64::new(ang.cos(), ang.sin());
                    }
                }
                out[u * w + v] = acc;
            }
        }
        out
    }

    fn random(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn constant_signal_concentrates_in_dc() {
        let x = SignalGrid::from_vec(vec![1, 8], vec![2.5; 8]).unwrap();
        let s = dft(&x).unwrap();
        assert!((s.coeffs[0].re - 20.0).abs() < 1e-12);
        for c in &s.coeffs[1..] {
            assert!(c.norm() < 1e-12);
        }
    }

    #[test]
    fn cosine_has_half_n_amplitude_at_plus_minus_k() {
        let n = 16;
        let k = 3;
        let x: Vec<f64> = (0..n).map(|i| (2.0 * PI * (k * i) as f64 / n as f64).cos()).collect();
        let s = dft(&SignalGrid::from_vec(vec![1, n], x).unwrap()).unwrap();
        for (bin, &a) in s.amplitude.iter().enumerate() {
            let expected = if bin == k || bin == n - k { n as f64 / 2.0 } else { 0.0 };
            assert!((a - expected).abs() < 1e-9, "bin {bin}: {a}");
        }
    }

    #[test]
    fn matches_naive_dft_length_8() {
        let x = random(8, 1);
        let fast = dft_real(&x, &[8]);
        let slow = naive_dft(&x, &[8]);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn matches_naive_dft_on_mixed_shapes() {
        let sizes = [4usize, 6, 8, 12, 16];
        for &h in &sizes {
            for &w in &sizes {
                let x = random(h * w, (h * 100 + w) as u64);
                let fast = dft_real(&x, &[h, w]);
                let slow = naive_dft(&x, &[h, w]);
                let err = fast.iter().zip(&slow).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
                assert!(err < 1e-10, "{h}x{w}: {err}");
            }
            let x = random(h, h as u64);
            let err = dft_real(&x, &[h])
                .iter()
                .zip(&naive_dft(&x, &[h]))
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(err < 1e-10);
        }
    }

    #[test]
    fn round_trip_16x16() {
        let x = SignalGrid::from_vec(vec![1, 16, 16], random(256, 7)).unwrap();
        let back = idft(&dft(&x).unwrap()).unwrap();
        assert!(back.tensor().max_abs_diff(x.tensor()) <= 1e-10);
    }

    #[test]
    fn zero_and_dc_spectra() {
        let zero = Spectrum::from_coeffs(vec![1, 4, 4], vec![Complex64::new(0.0, 0.0); 16]);
        assert!(idft(&zero).unwrap().data().iter().all(|&v| v == 0.0));
        let mut coeffs = vec![Complex64::new(0.0, 0.0); 16];
        coeffs[0] = Complex64::new(16.0, 0.0);
        let one = idft(&Spectrum::from_coeffs(vec![1, 4, 4], coeffs)).unwrap();
        assert!(one.data().iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn non_hermitian_rejected() {
        let mut coeffs = vec![Complex64::new(0.0, 0.0); 8];
        coeffs[1] = Complex64::new(1.0, 0.0);
        assert!(matches!(
            idft(&Spectrum::from_coeffs(vec![1, 8], coeffs)),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn polar_conventions() {
        let (a, p) = polar(Complex64::new(3.0, 4.0));
        assert_eq!(a, 5.0);
        assert_eq!(p, 4f64.atan2(3.0));
        assert_eq!(polar(Complex64::new(0.0, 0.0)), (0.0, 0.0));
        assert_eq!(polar(Complex64::new(-1.0, 0.0)), (1.0, PI));
        assert_eq!(polar(Complex64::new(-1.0, -0.0)), (1.0, PI));
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((wrap_angle(0.25) - 0.25).abs() < 1e-15);
    }
}
