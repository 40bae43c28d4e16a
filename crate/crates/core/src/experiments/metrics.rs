//! Spectral comparison of a generated image set against a reference set.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::tensor::SignalGrid;
use crate::transforms::radial::{mean_radial_profile, RadialProfile};

/// Added to powers before taking logarithms.
pub const EPS_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMetrics {
    pub generated: RadialProfile,
    pub reference: RadialProfile,
    /// Mean over bins of `(log10(gen + eps) - log10(ref + eps))^2`.
    pub log_spectral_distance: f64,
    pub concentration_gen: f64,
    pub concentration_ref: f64,
    /// Bin the concentration ratios are centred on.
    pub dominant_bin: usize,
}

fn bin_totals(p: &RadialProfile) -> Vec<f64> {
    p.mean_power.iter().zip(&p.count).map(|(m, &c)| m * c as f64).collect()
}

/// Non-DC bin with the largest total power.
pub fn dominant_bin(p: &RadialProfile) -> usize {
    let totals = bin_totals(p);
    (1..totals.len())
        .max_by(|&a, &b| totals[a].total_cmp(&totals[b]).then(b.cmp(&a)))
        .unwrap_or(0)
}

/// Share of non-DC power within one bin of `center`. Zero when there is no
/// non-DC power at all.
pub fn concentration(p: &RadialProfile, center: usize) -> f64 {
    let totals = bin_totals(p);
    let non_dc: f64 = totals.iter().skip(1).sum();
    if non_dc <= 0.0 {
        return 0.0;
    }
    let near: f64 = (center.saturating_sub(1).max(1)..=center + 1)
        .filter_map(|b| totals.get(b))
        .sum();
    (near / non_dc).clamp(0.0, 1.0)
}

pub fn log_spectral_distance(a: &RadialProfile, b: &RadialProfile) -> f64 {
    let n = a.bins().min(b.bins());
    let sum: f64 = (0..n)
        .map(|i| ((a.mean_power[i] + EPS_FLOOR).log10() - (b.mean_power[i] + EPS_FLOOR).log10()).powi(2))
        .sum();
    sum / n as f64
}

/// Profiles, distance, and concentration. `dominant` defaults to the
/// reference profile's strongest non-DC bin.
pub fn evaluate_spectra(generated: &SignalGrid, reference: &SignalGrid, dominant: Option<usize>) -> Result<SpectralMetrics> {
    if generated.spatial() != reference.spatial() {
        return Err(Error::Usage(format!(
            "image geometry differs: generated {:?}, reference {:?}",
            generated.spatial(),
            reference.spatial()
        )));
    }
    let g = mean_radial_profile(generated, None)?;
    let r = mean_radial_profile(reference, None)?;
    let center = dominant.unwrap_or_else(|| dominant_bin(&r));
    Ok(SpectralMetrics {
        log_spectral_distance: log_spectral_distance(&g, &r),
        concentration_gen: concentration(&g, center),
        concentration_ref: concentration(&r, center),
        dominant_bin: center,
        generated: g,
        reference: r,
    })
}

impl SpectralMetrics {
    /// `bin,gen_power,ref_power,count`.
    pub fn spectra_csv(&self) -> String {
        let mut out = String::from("bin,gen_power,ref_power,count\n");
        for i in 0..self.generated.bins() {
            writeln!(
                out,
                "{i},{:.12e},{:.12e},{}",
                self.generated.mean_power[i], self.reference.mean_power[i], self.generated.count[i]
            )
            .expect("writing to a String");
        }
        out
    }

    pub fn summary_header() -> &'static str {
        "log_spectral_distance,concentration_gen,concentration_ref"
    }

    pub fn summary_line(&self) -> String {
        format!(
            "{:.12e},{:.12e},{:.12e}",
            self.log_spectral_distance, self.concentration_gen, self.concentration_ref
        )
    }

    pub fn summary_csv(&self) -> String {
        format!("{}\n{}\n", Self::summary_header(), self.summary_line())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::checkerboard::{gen_checkerboard, CheckerboardConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn boards(seed: u64) -> SignalGrid {
        gen_checkerboard(&CheckerboardConfig {
            count: 8,
            size: 16,
            tile: 2,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn identical_sets() {
        let b = boards(1);
        let m = evaluate_spectra(&b, &b, None).unwrap();
        assert_eq!(m.log_spectral_distance, 0.0);
        assert_eq!(m.concentration_gen, m.concentration_ref);
        assert!(m.summary_line().starts_with("0.000000000000e0,"));
    }

    #[test]
    fn noise_is_less_concentrated() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let noise: Vec<f64> = (0..8 * 256).map(|_| rng.sample(StandardNormal)).collect();
        let noise = SignalGrid::from_vec(vec![8, 16, 16], noise).unwrap();
        let m = evaluate_spectra(&noise, &boards(3), None).unwrap();
        assert!(m.concentration_gen < m.concentration_ref);
        assert!(m.log_spectral_distance > 0.0);
        assert!((0.0..=1.0).contains(&m.concentration_gen));
    }

    #[test]
    fn csv_power_bookkeeping() {
        let b = boards(4);
        let m = evaluate_spectra(&b, &b, None).unwrap();
        let mut total = 0.0;
        for line in m.spectra_csv().lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            total += f[1].parse::<f64>().unwrap() * f[3].parse::<f64>().unwrap();
        }
        let mean_energy: f64 = (0..8).map(|i| b.sample(i).iter().map(|v| v * v).sum::<f64>() * 256.0).sum::<f64>() / 8.0;
        assert!((total - mean_energy).abs() <= 1e-9 * mean_energy);
    }

    #[test]
    fn geometry_mismatch() {
        let a = SignalGrid::from_vec(vec![1, 4, 4], vec![0.0; 16]).unwrap();
        let b = SignalGrid::from_vec(vec![1, 4, 8], vec![0.0; 32]).unwrap();
        assert!(matches!(evaluate_spectra(&a, &b, None), Err(Error::Usage(_))));
    }
}
