use serde::{Deserialize, Serialize};

use super::spectral::SpectralFunction;
use crate::error::{Error, Result};

/// Imaginary-time damping kernel on a `tau` grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DampingKernel {
    pub tau: Vec<f64>,
    pub values: Vec<f64>,
    /// Set when `J(0) > 0` forced the small-frequency expansion of the integrand.
    pub zero_frequency_flag: bool,
}

/// `cosh[w (beta/2 - tau)] / sinh[w beta / 2]` written with decaying
/// exponentials only. For `beta = inf` this is `e^{-w tau}`.
fn thermal_ratio(w: f64, tau: f64, beta: f64) -> f64 {
    if beta.is_infinite() {
        return (-w * tau).exp();
    }
    ((-w * tau).exp() + (-w * (beta - tau)).exp()) / -(-w * beta).exp_m1()
}

/// Uniform grid of `n` points on `[0, beta]`, or on `[0, tau_max]` when `beta = inf`.
pub fn default_tau_grid(beta: f64, n: usize, tau_max: f64) -> Vec<f64> {
    let top = if beta.is_finite() { beta } else { tau_max };
    let n = n.max(2);
    (0..n)
        .map(|i| {
            if i == n - 1 {
                top
            } else {
                top * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// `F(tau) = (1/pi) int_0^inf J(w) cosh[w (beta/2 - tau)] / sinh[w beta/2] dw`
/// by the trapezoid rule on the grid of `j`.
///
/// At `w = 0` the ratio diverges like `2 / (w beta)`; with `J(0) = 0` the
/// integrand tends to `2 J'(0) / beta`, taken as `2 J(w_1) / (w_1 beta)`.
/// With `J(0) > 0` the first panel is integrated by the midpoint rule instead
/// and the result is flagged.
pub fn damping_kernel(j: &SpectralFunction, tau_grid: &[f64], beta: f64) -> Result<DampingKernel> {
    if beta.is_nan() || beta <= 0.0 {
        return Err(Error::Domain(format!("beta must be > 0 or +inf, got {beta}")));
    }
    if tau_grid.is_empty() {
        return Err(Error::Domain("tau grid is empty".into()));
    }
    if let Some(bad) = tau_grid
        .iter()
        .find(|&&t| !(t >= 0.0 && t <= beta && t.is_finite()))
    {
        return Err(Error::Domain(format!("tau = {bad} lies outside [0, beta]")));
    }
    let (w, jv) = (&j.omega, &j.j);
    let starts_at_zero = w.first() == Some(&0.0);
    let flag = starts_at_zero && jv[0] > 0.0;
    let values = tau_grid
        .iter()
        .map(|&tau| {
            let integrand = |i: usize| -> f64 {
                if w[i] > 0.0 {
                    jv[i] * thermal_ratio(w[i], tau, beta)
                } else if beta.is_infinite() {
                    jv[i]
                } else if w.len() > 1 && w[1] > 0.0 {
                    2.0 * jv[1] / (w[1] * beta)
                } else {
                    0.0
                }
            };
            let mut acc = 0.0;
            let first = if flag && beta.is_finite() && w.len() > 1 {
                let mid = 0.5 * w[1];
                acc += w[1] * 0.5 * (jv[0] + jv[1]) * thermal_ratio(mid, tau, beta);
                1
            } else {
                0
            };
            for i in first..w.len().saturating_sub(1) {
                acc += 0.5 * (w[i + 1] - w[i]) * (integrand(i) + integrand(i + 1));
            }
            acc / std::f64::consts::PI
        })
        .collect();
    Ok(DampingKernel {
        tau: tau_grid.to_vec(),
        values,
        zero_frequency_flag: flag,
    })
}

impl DampingKernel {
    /// `max |F(tau) - F(beta - tau)| / max |F|` on a grid symmetric about `beta/2`.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.values.len();
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        (0..n)
            .map(|i| (self.values[i] - self.values[n - 1 - i]).abs())
            .fold(0.0, f64::max)
            / scale
    }
}
