use serde::{Deserialize, Serialize};

use super::force::center_gradient;
use super::spectral::SpectralFunction;
use crate::error::{Error, Result};
use crate::model::{LatticeModel, PairField};

/// Largest fraction of the transition weight allowed to fall outside the grid.
pub const MAX_MISSING_WEIGHT: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpringConstant {
    pub k: f64,
    /// `(1/g) sum_x |grad_0 Delta|^2`.
    pub gradient_term: f64,
    /// `(2/pi) int J / omega`, subtracted from the gradient term.
    pub spectral_term: f64,
}

/// `K = (1/g) sum_x (|d_x0 Delta|^2 + |d_y0 Delta|^2) - (2/pi) int J(w)/w dw`.
///
/// The sum over sites stands for the area integral (unit cell area `a^2 = 1`
/// in reduced units). The `2/pi` undoes the `pi/2` carried by `J`, so the
/// second term is the second-order energy shift of the quasiparticles.
///
/// The frequency integral is taken before broadening, as `sum_t w_t / omega_t`
/// over the transitions behind `J`: the folded Gaussians leave `J(0) > 0`
/// whenever a core-state transition lies within a few widths of zero, and the
/// broadened `J / omega` then has a spurious `1/omega` singularity.
pub fn spring_constant(
    model: &LatticeModel,
    pair: &PairField,
    j: &SpectralFunction,
    g: f64,
    fd_step: f64,
) -> Result<SpringConstant> {
    if pair.geometry != model.geometry {
        return Err(Error::Domain("pair field does not match the lattice".into()));
    }
    if !(g.is_finite() && g > 0.0) {
        return Err(Error::Domain(format!("coupling g must be > 0, got {g}")));
    }
    let missing = j.missing_weight_fraction();
    if missing > MAX_MISSING_WEIGHT {
        return Err(Error::Numeric(format!(
            "omega grid misses {missing:.3e} of the spectral weight; extend it past {:.4}",
            j.omega.last().copied().unwrap_or(0.0)
        )));
    }
    let [gx, gy] = center_gradient(pair, fd_step)?;
    let gradient_term = gx
        .iter()
        .zip(&gy)
        .map(|(x, y)| x.norm_sqr() + y.norm_sqr())
        .sum::<f64>()
        / g;
    if !j.weight_over_omega.is_finite() {
        return Err(Error::Numeric(
            "a transition at zero frequency carries weight; the spring constant diverges".into(),
        ));
    }
    let spectral_term = std::f64::consts::FRAC_2_PI * j.weight_over_omega;
    Ok(SpringConstant {
        k: gradient_term - spectral_term,
        gradient_term,
        spectral_term,
    })
}
