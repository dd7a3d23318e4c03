use serde::{Deserialize, Serialize};

use super::damping::DampingKernel;
use super::spectral::SpectralFunction;
use super::spring::SpringConstant;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelMetadata {
    pub eta_b: f64,
    #[serde(with = "crate::report::extended_float")]
    pub beta: f64,
    pub disorder_seed: u64,
    pub fd_step: f64,
    pub zero_frequency_flag: bool,
}

/// Everything the quadratic vortex action needs. The transverse kernel is
/// stored as its long-time coefficient `B`, so the transverse action term is
/// `(B/2) int d tau z . (dx x d_tau dx)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSet {
    pub omega_grid: Vec<f64>,
    pub j_of_omega: Vec<f64>,
    pub tau_grid: Vec<f64>,
    pub f_parallel: Vec<f64>,
    pub b_transverse: f64,
    pub k_spring: f64,
    pub k_gradient_term: f64,
    pub k_spectral_term: f64,
    pub metadata: KernelMetadata,
}

pub fn assemble_action_kernels(
    k: &SpringConstant,
    j: &SpectralFunction,
    f_parallel: &DampingKernel,
    b: f64,
    tau_grid: &[f64],
    metadata: KernelMetadata,
) -> Result<KernelSet> {
    if f_parallel.tau.as_slice() != tau_grid {
        return Err(Error::Domain("damping kernel was sampled on a different tau grid".into()));
    }
    if j.omega.len() != j.j.len() {
        return Err(Error::Domain("spectral function grid and values differ in length".into()));
    }
    let set = KernelSet {
        omega_grid: j.omega.clone(),
        j_of_omega: j.j.clone(),
        tau_grid: tau_grid.to_vec(),
        f_parallel: f_parallel.values.clone(),
        b_transverse: b,
        k_spring: k.k,
        k_gradient_term: k.gradient_term,
        k_spectral_term: k.spectral_term,
        metadata,
    };
    set.validate()?;
    Ok(set)
}

impl KernelSet {
    /// Re-checks `J >= 0`, the `tau -> beta - tau` symmetry of `F` (finite
    /// temperature, grid symmetric about `beta/2`) and finiteness of `B`.
    pub fn validate(&self) -> Result<()> {
        if let Some((i, v)) = self.j_of_omega.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(Error::Numeric(format!("J({}) = {v} is negative", self.omega_grid[i])));
        }
        if !self.b_transverse.is_finite() {
            return Err(Error::Numeric(format!("transverse coefficient is {}", self.b_transverse)));
        }
        let beta = self.metadata.beta;
        let n = self.tau_grid.len();
        let mirrored = beta.is_finite()
            && (0..n).all(|i| (self.tau_grid[i] + self.tau_grid[n - 1 - i] - beta).abs() <= 1e-12 * beta);
        if mirrored {
            let scale = self.f_parallel.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for i in 0..n {
                let d = (self.f_parallel[i] - self.f_parallel[n - 1 - i]).abs();
                if d > 1e-8 * scale {
                    return Err(Error::Numeric(format!(
                        "damping kernel is not symmetric at tau = {}: defect {d:.3e}",
                        self.tau_grid[i]
                    )));
                }
            }
        }
        Ok(())
    }
}
