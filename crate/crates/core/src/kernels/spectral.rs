use serde::{Deserialize, Serialize};

use super::force::ForceMatrixElements;
use crate::error::{Error, Result};
use crate::spectrum::BdgSpectrum;

/// Gaussians are cut off this many widths from their center.
const GAUSSIAN_REACH: f64 = 8.0;

/// One unordered pair `(k, k')` with `k < k'` contributing to `J`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub k: usize,
    pub kp: usize,
    /// `|E_k - E_k'|`.
    pub omega: f64,
    /// Weight of the pair in `J`, both orderings included:
    /// `(pi/2) |f_k - f_k'| (|M^x_kk'|^2 + |M^y_kk'|^2)`.
    pub weight: f64,
}

/// All pairs with nonzero occupation difference and matrix element, in `(k, k')` order.
pub fn transitions(elements: &ForceMatrixElements, spectrum: &BdgSpectrum) -> Vec<Transition> {
    let dim = spectrum.len();
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut out = Vec::new();
    for kp in 0..dim {
        let cx = elements.mx.col(kp);
        let cy = elements.my.col(kp);
        for k in 0..kp {
            let df = (spectrum.occupations[k] - spectrum.occupations[kp]).abs();
            if df == 0.0 {
                continue;
            }
            let m2 = cx[k].norm_sqr() + cy[k].norm_sqr();
            if m2 == 0.0 {
                continue;
            }
            out.push(Transition {
                k,
                kp,
                omega: (spectrum.energies[k] - spectrum.energies[kp]).abs(),
                weight: half_pi * df * m2,
            });
        }
    }
    out
}

/// Sampled `J(omega)` with the bookkeeping needed for its sum rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralFunction {
    pub omega: Vec<f64>,
    pub j: Vec<f64>,
    pub eta_b: f64,
    /// `sum` of all transition weights, i.e. the broadening-free value of `int J`.
    pub total_weight: f64,
    /// Broadening-free `int J / omega`, `sum_t weight_t / omega_t`.
    pub weight_over_omega: f64,
}

impl SpectralFunction {
    pub fn zeros(omega: Vec<f64>, eta_b: f64) -> Self {
        let j = vec![0.0; omega.len()];
        Self {
            omega,
            j,
            eta_b,
            total_weight: 0.0,
            weight_over_omega: 0.0,
        }
    }

    /// Trapezoidal `int J d omega` over the grid.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.omega, &self.j)
    }

    /// Fraction of the transition weight the grid fails to capture.
    pub fn missing_weight_fraction(&self) -> f64 {
        if self.total_weight == 0.0 {
            return 0.0;
        }
        ((self.total_weight - self.integral()) / self.total_weight).abs()
    }

    /// Copy with `J` multiplied by `lambda`.
    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            j: self.j.iter().map(|v| v * lambda).collect(),
            total_weight: self.total_weight * lambda,
            weight_over_omega: self.weight_over_omega * lambda,
            ..self.clone()
        }
    }
}

pub(crate) fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// `J(omega) = (pi/2) sum_{k,k'} delta_eta(omega - |E_k - E_k'|) |f_k - f_k'| (|M^x|^2 + |M^y|^2) / 2`
/// with a normalized Gaussian `delta_eta` of width `eta_b`. On `omega >= 0`
/// the Gaussian is folded (`g(omega - w) + g(omega + w)`) so each transition
/// keeps its full weight even when `w` is within a few widths of zero.
pub fn spectral_function(
    elements: &ForceMatrixElements,
    spectrum: &BdgSpectrum,
    omega_grid: &[f64],
    eta_b: f64,
) -> Result<SpectralFunction> {
    let list = transitions(elements, spectrum);
    broaden(&list, omega_grid, eta_b)
}

pub fn broaden(list: &[Transition], omega_grid: &[f64], eta_b: f64) -> Result<SpectralFunction> {
    if omega_grid.is_empty() {
        return Err(Error::Domain("omega grid is empty".into()));
    }
    if !(eta_b.is_finite() && eta_b > 0.0) {
        return Err(Error::Domain(format!("broadening eta_b must be > 0, got {eta_b}")));
    }
    if omega_grid.windows(2).any(|w| w[1] <= w[0]) || omega_grid[0] < 0.0 {
        return Err(Error::Domain("omega grid must be non-negative and strictly increasing".into()));
    }
    let norm = 1.0 / (eta_b * (2.0 * std::f64::consts::PI).sqrt());
    let reach = GAUSSIAN_REACH * eta_b;
    let mut j = vec![0.0; omega_grid.len()];
    let mut total = 0.0;
    let mut over_omega = 0.0;
    for t in list {
        total += t.weight;
        over_omega += if t.omega > 0.0 { t.weight / t.omega } else { f64::INFINITY };
        for center in [t.omega, -t.omega] {
            if center < -reach {
                continue;
            }
            let lo = omega_grid.partition_point(|&w| w < center - reach);
            let hi = omega_grid.partition_point(|&w| w <= center + reach);
            for i in lo..hi {
                let z = (omega_grid[i] - center) / eta_b;
                j[i] += t.weight * norm * (-0.5 * z * z).exp();
            }
        }
    }
    Ok(SpectralFunction {
        omega: omega_grid.to_vec(),
        j,
        eta_b,
        total_weight: total,
        weight_over_omega: over_omega,
    })
}

/// Three times the mean spacing of the positive eigenvalues.
pub fn default_broadening(spectrum: &BdgSpectrum) -> f64 {
    let pos: Vec<f64> = spectrum.energies.iter().copied().filter(|&e| e > 0.0).collect();
    if pos.len() < 2 {
        return 1e-2;
    }
    let spacing = (pos[pos.len() - 1] - pos[0]) / (pos.len() - 1) as f64;
    if spacing > 0.0 {
        3.0 * spacing
    } else {
        1e-2
    }
}

/// Uniform grid from 0 to `2 E_max + 8 eta_b` with spacing about `eta_b / 5`,
/// which resolves every broadened transition.
pub fn default_omega_grid(spectrum: &BdgSpectrum, eta_b: f64) -> Vec<f64> {
    let emax = spectrum.energies.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let top = 2.0 * emax + GAUSSIAN_REACH * eta_b;
    let n = ((top / (0.2 * eta_b)).ceil() as usize).max(2);
    let h = top / n as f64;
    (0..=n).map(|i| i as f64 * h).collect()
}
