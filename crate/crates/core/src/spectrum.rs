//! Dichotomy spectrum Σ(λ) as a finite union of intervals with multiplicities.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dichotomy::{analyze_whole_line, DichotomyConfig, DichotomyError, WholeLineAnalysis};
use crate::model::ModelSpec;
use crate::ode::{LinearSystem, VariationEquation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralInterval {
    pub lo: f64,
    pub hi: f64,
    pub multiplicity: usize,
    /// Set when neighbouring intervals closer than the resolution were joined.
    pub merged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralIntervalSet {
    pub lambda: f64,
    pub resolution: f64,
    pub gamma_range: [f64; 2],
    pub intervals: Vec<SpectralInterval>,
}

impl SpectralIntervalSet {
    pub fn total_multiplicity(&self) -> usize {
        self.intervals.iter().map(|i| i.multiplicity).sum()
    }

    pub fn contains(&self, gamma: f64) -> bool {
        self.intervals
            .iter()
            .any(|i| i.lo <= gamma && gamma <= i.hi)
    }
}

#[derive(Debug, Error)]
pub enum SpectrumError {
    #[error("gamma range endpoint {gamma} lies in the spectrum")]
    EndpointInSpectrum { gamma: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Dichotomy(#[from] DichotomyError),
}

pub const DEFAULT_RESOLUTION: f64 = 1e-3;

/// Σ(λ) of the variation equation; `gamma_range = None` selects
/// [min exponent − 1, max exponent + 1].
pub fn dichotomy_spectrum(
    m: &ModelSpec,
    lambda: f64,
    gamma_range: Option<[f64; 2]>,
    resolution: f64,
    horizon: f64,
    cfg: &DichotomyConfig,
) -> Result<SpectralIntervalSet, SpectrumError> {
    let sys = VariationEquation::new(m, lambda).map_err(DichotomyError::from)?;
    let mut s = spectrum_linear(&sys, gamma_range, resolution, horizon, cfg)?;
    s.lambda = lambda;
    Ok(s)
}

pub fn spectrum_linear<S: LinearSystem + ?Sized>(
    sys: &S,
    gamma_range: Option<[f64; 2]>,
    resolution: f64,
    horizon: f64,
    cfg: &DichotomyConfig,
) -> Result<SpectralIntervalSet, SpectrumError> {
    let analysis = analyze_whole_line(sys, 0.0, horizon, cfg)?;
    spectrum_from_analysis(&analysis, gamma_range, resolution, cfg)
}

/// Membership γ ∈ Σ ⇔ no whole-line dichotomy of the γ-shifted equation,
/// scanned with step `gap_threshold` and refined by bisection.
pub fn spectrum_from_analysis(
    analysis: &WholeLineAnalysis,
    gamma_range: Option<[f64; 2]>,
    resolution: f64,
    cfg: &DichotomyConfig,
) -> Result<SpectralIntervalSet, SpectrumError> {
    if !(resolution > 0.0) {
        return Err(SpectrumError::InvalidArgument(
            "resolution must be positive".into(),
        ));
    }
    let all = analysis
        .plus
        .exponents
        .iter()
        .chain(&analysis.minus.exponents)
        .copied();
    let (emin, emax) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), e| {
        (a.min(e), b.max(e))
    });
    let margin = 2.0 * cfg.gap_threshold;
    let [lo, hi] = match gamma_range {
        None => [emin - 1.0, emax + 1.0],
        Some([a, b]) => {
            if !(a < b) {
                return Err(SpectrumError::InvalidArgument(format!(
                    "gamma range [{a}, {b}] is empty"
                )));
            }
            let lo = if emin < a - cfg.gap_threshold {
                emin - margin
            } else {
                a
            };
            let hi = if emax > b + cfg.gap_threshold {
                emax + margin
            } else {
                b
            };
            [lo, hi]
        }
    };
    let inside = |g: f64| !analysis.verdict(g, cfg).dichotomic;
    for g in [lo, hi] {
        if inside(g) {
            return Err(SpectrumError::EndpointInSpectrum { gamma: g });
        }
    }
    let n = ((hi - lo) / cfg.gap_threshold).ceil().max(2.0) as usize;
    let grid: Vec<f64> = (0..=n)
        .map(|k| lo + (hi - lo) * k as f64 / n as f64)
        .collect();
    let flags: Vec<bool> = grid.iter().map(|&g| inside(g)).collect();

    // boundary between a resolvent point a and a spectral point b
    let refine = |mut a: f64, mut b: f64| -> f64 {
        while (b - a).abs() > resolution {
            let mid = 0.5 * (a + b);
            if inside(mid) {
                b = mid;
            } else {
                a = mid;
            }
        }
        0.5 * (a + b)
    };

    let mut raw: Vec<(f64, f64, usize, usize)> = Vec::new();
    let mut k = 0;
    while k < n {
        if !flags[k] && flags[k + 1] {
            let start = refine(grid[k], grid[k + 1]);
            let mut j = k + 1;
            while flags[j] {
                j += 1;
            }
            let end = refine(grid[j], grid[j - 1]);
            raw.push((start, end, k, j));
            k = j;
        } else {
            k += 1;
        }
    }

    let morse = |g: f64| analysis.verdict(g, cfg).morse_index;
    // (lo, hi, left flank index, right flank index, merged)
    let mut joined: Vec<(f64, f64, usize, usize, bool)> = Vec::new();
    for (start, end, kl, kr) in raw {
        match joined.last_mut() {
            Some(last) if start - last.1 < resolution => {
                last.1 = end;
                last.3 = kr;
                last.4 = true;
            }
            _ => joined.push((start, end, kl, kr, false)),
        }
    }
    let intervals = joined
        .into_iter()
        .map(|(lo, hi, kl, kr, merged)| SpectralInterval {
            lo,
            hi,
            multiplicity: morse(grid[kl]).saturating_sub(morse(grid[kr])),
            merged,
        })
        .collect();
    Ok(SpectralIntervalSet {
        lambda: f64::NAN,
        resolution,
        gamma_range: [lo, hi],
        intervals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::ConstantSystem;
    use nalgebra::DMatrix;

    #[test]
    fn example10_critical_interval() {
        let m = ModelSpec::example10();
        let cfg = DichotomyConfig::default();
        let s = dichotomy_spectrum(&m, 0.0, None, DEFAULT_RESOLUTION, 10.0, &cfg).unwrap();
        assert_eq!(s.intervals.len(), 1, "{s:?}");
        let i = s.intervals[0];
        assert_eq!(i.multiplicity, 2);
        assert!(
            (i.lo + 1.0).abs() < 0.05 && (i.hi - 1.0).abs() < 0.05,
            "{i:?}"
        );
    }

    #[test]
    fn example10_split_spectrum() {
        let m = ModelSpec::example10();
        let cfg = DichotomyConfig::default();
        let s = dichotomy_spectrum(&m, 0.4, None, DEFAULT_RESOLUTION, 10.0, &cfg).unwrap();
        assert_eq!(s.intervals.len(), 2, "{s:?}");
        for (i, c) in s.intervals.iter().zip([-1.0, 1.0]) {
            assert_eq!(i.multiplicity, 1);
            assert!((i.lo - c).abs() < 0.05 && (i.hi - c).abs() < 0.05, "{i:?}");
        }
    }

    #[test]
    fn constant_diagonal_system() {
        let sys = ConstantSystem(DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]));
        let cfg = DichotomyConfig::default();
        let s = spectrum_linear(&sys, None, 1e-3, 10.0, &cfg).unwrap();
        assert_eq!(s.intervals.len(), 2);
        assert_eq!(s.total_multiplicity(), 2);
        assert!(s.contains(-1.0) && s.contains(1.0) && !s.contains(0.0));
    }

    #[test]
    fn endpoint_inside_spectrum_is_an_error() {
        let sys = ConstantSystem(DMatrix::from_row_slice(1, 1, &[0.5]));
        let cfg = DichotomyConfig::default();
        let r = spectrum_linear(&sys, Some([0.5, 0.6]), 1e-3, 10.0, &cfg);
        assert!(
            matches!(r, Err(SpectrumError::EndpointInSpectrum { .. })),
            "{r:?}"
        );
    }
}
