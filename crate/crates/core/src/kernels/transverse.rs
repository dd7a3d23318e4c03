use serde::{Deserialize, Serialize};

use super::force::ForceMatrixElements;
use crate::error::{Error, Result};
use crate::linalg::{dot, polar_unitary, CMatrix, C64};
use crate::model::{LatticeModel, PairField};
use crate::spectrum::{self_consistent_gap, solve_field, BdgSpectrum, GapParams};

/// Virtual-transition (perturbative) value of the transverse coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VirtualTransverse {
    pub b: f64,
    /// Pairs inside the degeneracy window with a nonzero occupation difference.
    pub skipped_pairs: usize,
    /// `sum |f_k - f_k'| |Im M^x M^y|` over those pairs; their contribution is
    /// this divided by the square of their (unresolved) splitting.
    pub skipped_numerator: f64,
}

/// `B = sum_{k != k'} (f_k - f_k') Im[M^x_kk' M^y_k'k] / (E_k - E_k')^2`,
/// skipping pairs closer than `degeneracy_tol`. Each unordered pair is
/// visited once and counted twice (the summand is symmetric).
pub fn transverse_coefficient_virtual(
    elements: &ForceMatrixElements,
    spectrum: &BdgSpectrum,
    degeneracy_tol: f64,
) -> VirtualTransverse {
    let dim = spectrum.len();
    let (e, f) = (&spectrum.energies, &spectrum.occupations);
    let mut b = 0.0;
    let mut skipped_pairs = 0;
    let mut skipped_numerator = 0.0;
    for k in 0..dim {
        // M^x_{k k'} = conj(M^x_{k' k}), so read both factors from column k.
        let cx = elements.mx.col(k);
        let cy = elements.my.col(k);
        for kp in k + 1..dim {
            let df = f[k] - f[kp];
            if df == 0.0 {
                continue;
            }
            let im = (cx[kp].conj() * cy[kp]).im;
            let de = e[k] - e[kp];
            if de.abs() <= degeneracy_tol {
                if im != 0.0 {
                    skipped_pairs += 1;
                    skipped_numerator += (df * im).abs();
                }
                continue;
            }
            b += 2.0 * df * im / (de * de);
        }
    }
    VirtualTransverse {
        b,
        skipped_pairs,
        skipped_numerator,
    }
}

/// Re-solves the quasiparticle problem with the vortex center moved by `dx`.
pub trait SpectrumProvider {
    fn base(&self) -> &BdgSpectrum;
    fn displaced(&self, dx: [f64; 2]) -> Result<BdgSpectrum>;
}

/// Rigid translation of the given pair field (the default).
pub struct RigidProvider<'a> {
    pub model: &'a LatticeModel,
    pub pair: &'a PairField,
    pub spectrum: &'a BdgSpectrum,
}

impl SpectrumProvider for RigidProvider<'_> {
    fn base(&self) -> &BdgSpectrum {
        self.spectrum
    }

    fn displaced(&self, dx: [f64; 2]) -> Result<BdgSpectrum> {
        let moved = self.pair.displaced(dx)?;
        solve_field(self.model, &moved, self.spectrum.beta)
    }
}

/// Re-converges the gap equation at each displaced center, starting from the
/// rigidly translated field.
pub struct AdiabaticProvider<'a> {
    pub model: &'a LatticeModel,
    pub pair: &'a PairField,
    pub spectrum: &'a BdgSpectrum,
    pub params: GapParams,
}

impl SpectrumProvider for AdiabaticProvider<'_> {
    fn base(&self) -> &BdgSpectrum {
        self.spectrum
    }

    fn displaced(&self, dx: [f64; 2]) -> Result<BdgSpectrum> {
        let moved = self.pair.displaced(dx)?;
        let (_, spectrum, report) = self_consistent_gap(self.model, &moved, &self.params)?;
        if !report.converged {
            return Err(Error::Numeric(format!(
                "gap equation did not converge at displaced center ({}, {})",
                moved.center[0], moved.center[1]
            )));
        }
        Ok(spectrum)
    }
}

/// Per-state breakdown of the state-sum transverse coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateTransverse {
    pub b: f64,
    /// `2 f_k Im <d_x Psi_k | d_y Psi_k>` per state.
    pub per_state: Vec<f64>,
    /// Particle (`u`) and hole (`v`) sector parts of `per_state`.
    pub u_part: Vec<f64>,
    pub v_part: Vec<f64>,
    pub min_overlap: f64,
}

/// Eigenvalues separated by less than this (in hopping units) are aligned as one subspace.
pub const CLUSTER_GAP: f64 = 1e-2;
const MIN_OVERLAP: f64 = 0.9;

/// Maximal runs of sorted energies whose neighbours are closer than `gap`.
fn clusters(energies: &[f64], gap: f64) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for k in 1..=energies.len() {
        if k == energies.len() || energies[k] - energies[k - 1] >= gap {
            out.push(start..k);
            start = k;
        }
    }
    out
}

/// Rotates each cluster of `moved` onto `base` by the unitary polar factor of
/// their overlap, so the aligned states are the parallel transport of `base`.
fn align(base: &BdgSpectrum, moved: &BdgSpectrum, groups: &[std::ops::Range<usize>]) -> Result<(CMatrix, f64)> {
    let dim = base.len();
    let mut out = CMatrix::zeros(dim, dim);
    let mut worst = f64::INFINITY;
    for g in groups {
        let w0 = base.states.columns(g.clone());
        let wd = moved.states.columns(g.clone());
        let overlap = w0.adjoint_mul(&wd);
        let (r, smin) = polar_unitary(&overlap).map_err(|_| {
            Error::Numeric(format!(
                "eigenvector tracking lost state {} (E = {:.6e}): singular overlap",
                g.start, base.energies[g.start]
            ))
        })?;
        if smin < MIN_OVERLAP {
            return Err(Error::Numeric(format!(
                "eigenvector tracking failed for state {} (E = {:.6e}): overlap {smin:.4} < {MIN_OVERLAP}; \
                 reduce the displacement step",
                g.start, base.energies[g.start]
            )));
        }
        worst = worst.min(smin);
        let aligned = wd.matmul(&r);
        for (c, k) in g.clone().enumerate() {
            out.col_mut(k).copy_from_slice(aligned.col(c));
        }
    }
    Ok((out, worst))
}

/// State-sum form `B = 2 sum_k f_k Im <d_x Psi_k | d_y Psi_k>` over the full
/// doubled spectrum, with center derivatives from four displaced solves
/// (`+-h x`, `+-h y`). States are tracked through each displacement cluster by
/// cluster, aligning the displaced subspace to the undisplaced one.
pub fn transverse_coefficient_state(provider: &dyn SpectrumProvider, fd_step: f64) -> Result<StateTransverse> {
    if !(fd_step.is_finite() && fd_step > 0.0) {
        return Err(Error::Domain(format!("fd_step must be > 0, got {fd_step}")));
    }
    let base = provider.base();
    let dim = base.len();
    let n = base.sites;
    let groups = clusters(&base.energies, CLUSTER_GAP);
    let mut tracked = Vec::with_capacity(4);
    let mut min_overlap = f64::INFINITY;
    for d in [[fd_step, 0.0], [-fd_step, 0.0], [0.0, fd_step], [0.0, -fd_step]] {
        let moved = provider.displaced(d)?;
        let (w, s) = align(base, &moved, &groups)?;
        min_overlap = min_overlap.min(s);
        tracked.push(w);
    }
    let inv = 1.0 / (2.0 * fd_step);
    let mut per_state = vec![0.0; dim];
    let mut u_part = vec![0.0; dim];
    let mut v_part = vec![0.0; dim];
    for k in 0..dim {
        let f = base.occupations[k];
        if f == 0.0 {
            continue;
        }
        let dx: Vec<C64> = tracked[0].col(k).iter().zip(tracked[1].col(k)).map(|(p, m)| (p - m) * inv).collect();
        let dy: Vec<C64> = tracked[2].col(k).iter().zip(tracked[3].col(k)).map(|(p, m)| (p - m) * inv).collect();
        let u = 2.0 * f * dot(&dx[..n], &dy[..n]).im;
        let v = 2.0 * f * dot(&dx[n..], &dy[n..]).im;
        u_part[k] = u;
        v_part[k] = v;
        per_state[k] = u + v;
    }
    Ok(StateTransverse {
        b: per_state.iter().sum(),
        per_state,
        u_part,
        v_part,
        min_overlap,
    })
}
