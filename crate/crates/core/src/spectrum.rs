//! Quasiparticle spectrum of the Nambu matrix and the gap-equation iteration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, CMatrix, C64, ZERO};
use crate::model::{assemble_bdg, BdgMatrix, LatticeModel, PairField};

/// Eigenvalues closer than this are treated as one degenerate cluster when ordering.
pub const DEGENERACY_ORDER_TOL: f64 = 1e-10;

/// Full eigendecomposition of a Nambu matrix with Fermi occupations.
///
/// `states` holds one spinor `(u, v)` per column, `u` in rows `0..N` and `v`
/// in rows `N..2N`. `beta` may be `f64::INFINITY`.
#[derive(Clone, Debug)]
pub struct BdgSpectrum {
    pub sites: usize,
    pub energies: Vec<f64>,
    pub states: CMatrix,
    pub beta: f64,
    pub occupations: Vec<f64>,
}

impl BdgSpectrum {
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn state(&self, k: usize) -> &[C64] {
        self.states.col(k)
    }

    pub fn u(&self, k: usize) -> &[C64] {
        &self.states.col(k)[..self.sites]
    }

    pub fn v(&self, k: usize) -> &[C64] {
        &self.states.col(k)[self.sites..]
    }

    /// `max_k |E_k + E_{2N-1-k}|` over the sorted spectrum.
    pub fn spectral_symmetry_defect(&self) -> f64 {
        let n = self.len();
        (0..n)
            .map(|k| (self.energies[k] + self.energies[n - 1 - k]).abs())
            .fold(0.0, f64::max)
    }

    /// One-body density `n(x) = sum_k [f_k |u_k(x)|^2 + (1 - f_k) |v_k(x)|^2]`
    /// over the full doubled spectrum, i.e. twice the positive-energy half
    /// (both spin species).
    pub fn density(&self) -> Vec<f64> {
        let n = self.sites;
        let mut rho = vec![0.0; n];
        for k in 0..self.len() {
            let f = self.occupations[k];
            let col = self.states.col(k);
            for s in 0..n {
                rho[s] += f * col[s].norm_sqr() + (1.0 - f) * col[n + s].norm_sqr();
            }
        }
        rho
    }

    pub fn mean_density(&self) -> f64 {
        self.density().iter().sum::<f64>() / self.sites as f64
    }

    /// Largest weight of a particle-hole partner `(-v*, u*)` of state `k`
    /// outside the eigenspace at `-E_k` (norm of the residual after projection).
    pub fn particle_hole_pairing_defect(&self) -> f64 {
        let n = self.len();
        let scale = self.energies.iter().fold(1.0f64, |m, e| m.max(e.abs()));
        let mut worst = 0.0f64;
        for k in 0..n {
            let partner = crate::model::particle_hole_partner(self.state(k));
            let target = -self.energies[k];
            let lo = self.energies.partition_point(|&e| e < target - 1e-8 * scale);
            let hi = self.energies.partition_point(|&e| e <= target + 1e-8 * scale);
            let mut rest = partner.clone();
            for j in lo..hi {
                let c = crate::linalg::dot(self.state(j), &partner);
                for (r, z) in rest.iter_mut().zip(self.state(j)) {
                    *r -= c * z;
                }
            }
            worst = worst.max(rest.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt());
        }
        worst
    }

    /// Smallest positive eigenvalue.
    pub fn lowest_excitation(&self) -> Option<f64> {
        self.energies.iter().copied().find(|&e| e > 0.0)
    }
}

/// Fermi function, evaluated without overflow for any `beta * e`.
pub fn fermi(e: f64, beta: f64) -> f64 {
    if beta.is_infinite() {
        return if e < 0.0 {
            1.0
        } else if e > 0.0 {
            0.0
        } else {
            0.5
        };
    }
    let x = beta * e;
    if x > 0.0 {
        let t = (-x).exp();
        t / (1.0 + t)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta.is_nan() || beta <= 0.0 {
        return Err(Error::Domain(format!("beta must be > 0 or +inf, got {beta}")));
    }
    Ok(())
}

/// Diagonalizes the Nambu matrix. Each eigenvector is phase-fixed so that its
/// largest-modulus component (lowest index among equals) is real and positive;
/// within a degenerate cluster (`|dE| < 1e-10`) states are ordered by the index
/// of that component. Occupations are set for `beta = +inf`.
pub fn diagonalize(matrix: &BdgMatrix) -> Result<BdgSpectrum> {
    let m = &matrix.matrix;
    let scale = m.max_abs().max(1.0);
    let defect = m.hermitian_defect();
    if defect > 1e-12 * scale {
        return Err(Error::Contract(format!(
            "matrix is not Hermitian: max |M - M^H| = {defect:.3e}"
        )));
    }
    let (energies, vecs) = hermitian_eigen(m)?;
    Ok(finish_spectrum(matrix.sites, energies, vecs))
}

/// Phase-fixes and orders eigenpairs that are already sorted by energy.
fn finish_spectrum(sites: usize, energies: Vec<f64>, mut vecs: CMatrix) -> BdgSpectrum {
    let dim = energies.len();
    let mut lead = vec![0usize; dim];
    for (k, slot) in lead.iter_mut().enumerate() {
        let col = vecs.col_mut(k);
        let max = col.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let idx = col
            .iter()
            .position(|z| z.norm() >= max * (1.0 - 1e-12))
            .unwrap_or(0);
        let phase = col[idx] / col[idx].norm();
        let fix = phase.conj();
        for z in col.iter_mut() {
            *z *= fix;
        }
        col[idx] = C64::new(col[idx].re, 0.0);
        *slot = idx;
    }
    let mut order: Vec<usize> = (0..dim).collect();
    let mut start = 0;
    while start < dim {
        let mut end = start + 1;
        while end < dim && energies[end] - energies[end - 1] < DEGENERACY_ORDER_TOL {
            end += 1;
        }
        order[start..end].sort_by_key(|&k| (lead[k], k));
        start = end;
    }
    let sorted_e: Vec<f64> = order.iter().map(|&k| energies[k]).collect();
    let states = if order.iter().enumerate().all(|(i, &k)| i == k) {
        vecs
    } else {
        CMatrix::from_fn(dim, dim, |r, c| vecs[(r, order[c])])
    };
    let occupations = sorted_e.iter().map(|&e| fermi(e, f64::INFINITY)).collect();
    BdgSpectrum {
        sites,
        energies: sorted_e,
        states,
        beta: f64::INFINITY,
        occupations,
    }
}

/// Quarter-turn symmetry of a square lattice about its midpoint: the site
/// map `(i, j) -> (n-1-j, i)` and the phase `rho` with
/// `Delta(R x) = rho Delta(x)`, `rho` a power of `i`.
struct QuarterTurn {
    rotate: Vec<usize>,
    /// `rho = i^p`.
    p: u32,
}

fn quarter_turn(model: &LatticeModel, pair: &PairField) -> Option<QuarterTurn> {
    let g = &model.geometry;
    let n = g.nx;
    if g.ny != n || n % 2 != 0 || pair.geometry != *g {
        return None;
    }
    let mid = g.midpoint();
    if (pair.center[0] - mid[0]).abs() > 1e-12 || (pair.center[1] - mid[1]).abs() > 1e-12 {
        return None;
    }
    let rotate: Vec<usize> = (0..g.sites())
        .map(|s| {
            let (i, j) = g.site_indices(s);
            g.index(n - 1 - j, i)
        })
        .collect();
    let vmax = model.potential.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if model
        .potential
        .iter()
        .enumerate()
        .any(|(s, v)| (model.potential[rotate[s]] - v).abs() > 1e-14 * vmax.max(1.0))
    {
        return None;
    }
    let d = &pair.delta;
    let dmax = d.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let p = if dmax == 0.0 {
        0
    } else {
        let s0 = d.iter().position(|z| z.norm() >= dmax * (1.0 - 1e-12))?;
        let rho = d[rotate[s0]] / d[s0];
        let powers = [C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(-1.0, 0.0), C64::new(0.0, -1.0)];
        let p = (0..4u32).find(|&p| (rho - powers[p as usize]).norm() < 1e-10)?;
        let rho = powers[p as usize];
        if d.iter()
            .enumerate()
            .any(|(s, z)| (d[rotate[s]] - rho * z).norm() > 1e-10 * dmax)
        {
            return None;
        }
        p
    };
    Some(QuarterTurn { rotate, p })
}

/// `i^k` for any integer `k`.
fn i_pow(k: i64) -> C64 {
    match k.rem_euclid(4) {
        0 => C64::new(1.0, 0.0),
        1 => C64::new(0.0, 1.0),
        2 => C64::new(-1.0, 0.0),
        _ => C64::new(0.0, -1.0),
    }
}

/// Diagonalizes in the four eigenspaces of the quarter turn combined with
/// the gauge phase `sqrt(rho)` on `u` and its conjugate on `v`. Basis
/// vectors are orbit sums with coefficients `i^{-mk}` (`u`) and
/// `i^{-(m+p)k}` (`v`) on the `k`-th rotated site.
fn diagonalize_quarter_turn(bdg: &BdgMatrix, sym: &QuarterTurn, sites: usize, side: usize) -> Result<BdgSpectrum> {
    let m = &bdg.matrix;
    let scale = m.max_abs().max(1.0);
    let defect = m.hermitian_defect();
    if defect > 1e-12 * scale {
        return Err(Error::Contract(format!(
            "matrix is not Hermitian: max |M - M^H| = {defect:.3e}"
        )));
    }
    let half = side / 2;
    // One representative per orbit: the lower-left quadrant.
    let reps: Vec<usize> = (0..half).flat_map(|j| (0..half).map(move |i| i + side * j)).collect();
    let orbit = |r: usize| {
        let mut o = [r; 4];
        for k in 1..4 {
            o[k] = sym.rotate[o[k - 1]];
        }
        o
    };
    let orbits: Vec<[usize; 4]> = reps.iter().map(|&r| orbit(r)).collect();
    let nb = 2 * reps.len();
    let mut energies = Vec::with_capacity(2 * sites);
    let mut columns: Vec<Vec<C64>> = Vec::with_capacity(2 * sites);
    for sector in 0..4i64 {
        let phase = |c: usize, k: usize| -> C64 {
            let base = if c == 0 { -sector } else { -(sector + sym.p as i64) };
            i_pow(base * k as i64)
        };
        // Row/column index a = c * reps + r.
        let block = CMatrix::from_fn(nb, nb, |a, b| {
            let (ca, ra) = (a / reps.len(), a % reps.len());
            let (cb, rb) = (b / reps.len(), b % reps.len());
            let row = orbits[ra][0] + ca * sites;
            let mut acc = ZERO;
            for (k, &site) in orbits[rb].iter().enumerate() {
                let v = m[(row, site + cb * sites)];
                if v != ZERO {
                    acc += v * phase(cb, k);
                }
            }
            acc
        });
        let (e, y) = hermitian_eigen(&block)?;
        for (col, &ev) in e.iter().enumerate() {
            let yc = y.col(col);
            let mut psi = vec![ZERO; 2 * sites];
            for (b, &yb) in yc.iter().enumerate() {
                let (cb, rb) = (b / reps.len(), b % reps.len());
                for (k, &site) in orbits[rb].iter().enumerate() {
                    psi[site + cb * sites] = yb * phase(cb, k) * 0.5;
                }
            }
            energies.push(ev);
            columns.push(psi);
        }
    }
    let mut order: Vec<usize> = (0..energies.len()).collect();
    order.sort_by(|&a, &b| energies[a].total_cmp(&energies[b]));
    let sorted: Vec<f64> = order.iter().map(|&k| energies[k]).collect();
    let ordered: Vec<Vec<C64>> = order.iter().map(|&k| std::mem::take(&mut columns[k])).collect();
    let vecs = CMatrix::from_columns(2 * sites, &ordered);
    Ok(finish_spectrum(sites, sorted, vecs))
}

/// Quasiparticle spectrum of the field on the lattice, with occupations at
/// `beta`. A square lattice whose potential and pair field are symmetric
/// under a quarter turn about the midpoint (a clean centered vortex) is
/// solved block by block; anything else goes through [`diagonalize`].
pub fn solve_field(model: &LatticeModel, pair: &PairField, beta: f64) -> Result<BdgSpectrum> {
    let bdg = assemble_bdg(model, pair)?;
    let spectrum = match quarter_turn(model, pair) {
        Some(sym) => diagonalize_quarter_turn(&bdg, &sym, model.sites(), model.geometry.nx)?,
        None => diagonalize(&bdg)?,
    };
    occupations(spectrum, beta)
}

/// Returns the spectrum with occupations `f_k = 1 / (1 + e^{beta E_k})`.
pub fn occupations(spectrum: BdgSpectrum, beta: f64) -> Result<BdgSpectrum> {
    check_beta(beta)?;
    let occupations = spectrum.energies.iter().map(|&e| fermi(e, beta)).collect();
    Ok(BdgSpectrum {
        beta,
        occupations,
        ..spectrum
    })
}

/// Mean-field grand potential
/// `sum_x |Delta|^2 / g - T sum_k ln(1 + e^{-beta E_k}) + tr H`,
/// the `k`-sum running over the full doubled spectrum. At `beta = inf`
/// the middle term is the sum of the negative eigenvalues.
pub fn grand_potential(model: &LatticeModel, pair: &PairField, spectrum: &BdgSpectrum, g: f64) -> f64 {
    let condensate = if g > 0.0 {
        pair.delta.iter().map(|d| d.norm_sqr()).sum::<f64>() / g
    } else {
        0.0
    };
    let beta = spectrum.beta;
    let quasiparticles: f64 = spectrum
        .energies
        .iter()
        .map(|&e| {
            if beta.is_infinite() {
                e.min(0.0)
            } else {
                let x = beta * e;
                -((-x).max(0.0) + (-x.abs()).exp().ln_1p()) / beta
            }
        })
        .sum();
    let trace: f64 = model.potential.iter().map(|v| v - model.mu).sum();
    condensate + quasiparticles + trace
}

/// Parameters of the gap-equation iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapParams {
    pub g: f64,
    pub beta: f64,
    pub cutoff: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub mixing: f64,
    /// Anderson history length; 0 is plain linear mixing.
    pub anderson_depth: usize,
    /// Project each update onto the winding phase about the seed center, so
    /// only the amplitude relaxes and the core cannot drift.
    #[serde(default)]
    pub phase_lock: bool,
}

impl GapParams {
    pub fn new(g: f64, beta: f64) -> Self {
        Self {
            g,
            beta,
            cutoff: 4.0,
            tol: 1e-6,
            max_iter: 200,
            mixing: 0.5,
            anderson_depth: 6,
            phase_lock: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.g.is_finite() && self.g >= 0.0) {
            return Err(Error::config("pairing.g", format!("must be finite and >= 0, got {}", self.g)));
        }
        if self.beta.is_nan() || self.beta <= 0.0 {
            return Err(Error::config("temperature.beta", format!("must be > 0 or inf, got {}", self.beta)));
        }
        if !(self.cutoff > 0.0) {
            return Err(Error::config("pairing.cutoff", format!("must be > 0, got {}", self.cutoff)));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::config("numerics.scf_tol", format!("must be > 0, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::config("numerics.max_iter", "must be >= 1"));
        }
        if !(self.mixing > 0.0 && self.mixing <= 1.0) {
            return Err(Error::config("numerics.mixing", format!("must lie in (0, 1], got {}", self.mixing)));
        }
        if self.anderson_depth > 20 {
            return Err(Error::config(
                "numerics.anderson_depth",
                format!("must be <= 20, got {}", self.anderson_depth),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfConsistencyReport {
    pub iterations: usize,
    /// `max_x |Delta_new - Delta_old|` per iteration.
    pub residual_history: Vec<f64>,
    pub converged: bool,
    pub coupling_g: f64,
    pub cutoff: f64,
    pub tolerance: f64,
    pub mixing: f64,
    pub anderson_depth: usize,
    pub phase_lock: bool,
}

impl SelfConsistencyReport {
    pub fn final_residual(&self) -> Option<f64> {
        self.residual_history.last().copied()
    }
}

/// Right-hand side of the gap equation,
/// `g * sum_{0 < E_k < cutoff} u_k(x) v_k(x)^* (1 - 2 f_k)`.
pub fn gap_update(spectrum: &BdgSpectrum, g: f64, cutoff: f64) -> Vec<C64> {
    let n = spectrum.sites;
    let mut out = vec![ZERO; n];
    if g == 0.0 {
        return out;
    }
    for k in 0..spectrum.len() {
        let e = spectrum.energies[k];
        if !(e > 0.0 && e < cutoff) {
            continue;
        }
        let w = g * (1.0 - 2.0 * spectrum.occupations[k]);
        let col = spectrum.states.col(k);
        for s in 0..n {
            out[s] += col[s] * col[n + s].conj() * w;
        }
    }
    out
}

/// Iterates the gap equation with linear mixing until the largest per-site
/// change drops below `tol`. The returned field is the last one that was
/// diagonalized, so it and the returned spectrum belong together. The winding
/// is checked on every iterate; a change is a topology error.
pub fn self_consistent_gap(
    model: &LatticeModel,
    seed: &PairField,
    params: &GapParams,
) -> Result<(PairField, BdgSpectrum, SelfConsistencyReport)> {
    params.validate()?;
    if seed.geometry != model.geometry {
        return Err(Error::Domain("seed pair field does not match the lattice".into()));
    }
    let winding_tol = 1e-6;
    let mut field = seed.with_samples(seed.delta.clone());
    let mut history = Vec::new();
    let mut converged = false;
    let mut spectrum = solve_field(model, &field, params.beta)?;
    let mut mixer = AndersonMixer::new(params.mixing, params.anderson_depth);
    for it in 0..params.max_iter {
        let mut fresh = gap_update(&spectrum, params.g, params.cutoff);
        if params.phase_lock {
            for (s, d) in fresh.iter_mut().enumerate() {
                let c = field.winding_phase(s);
                *d = c * (*d * c.conj()).re;
            }
        }
        let residual = fresh
            .iter()
            .zip(&field.delta)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        history.push(residual);
        if residual < params.tol {
            converged = true;
            break;
        }
        if it + 1 == params.max_iter {
            break;
        }
        let mixed = mixer.next(&field.delta, &fresh);
        field = field.with_samples(mixed);
        // A field that has collapsed to zero is the trivial fixed point, not a topology change.
        if seed.winding != 0 && !field.degenerate && !field.winding_intact(winding_tol) {
            return Err(Error::Topology(format!(
                "vortex winding changed at iteration {} (measured {:?} rad, expected {})",
                it + 1,
                field.measured_winding(),
                std::f64::consts::TAU * seed.winding as f64
            )));
        }
        spectrum = solve_field(model, &field, params.beta)?;
    }
    let far = field
        .far_field_amplitude(5.0 * field.coherence_length)
        .or_else(|| field.far_field_amplitude(-1.0))
        .unwrap_or(0.0);
    field.bulk_gap = far;
    let report = SelfConsistencyReport {
        iterations: history.len(),
        residual_history: history,
        converged,
        coupling_g: params.g,
        cutoff: params.cutoff,
        tolerance: params.tol,
        mixing: params.mixing,
        anderson_depth: params.anderson_depth,
        phase_lock: params.phase_lock,
    };
    Ok((field, spectrum, report))
}

/// Anderson (type II) acceleration of the fixed-point map `x -> F(x)`, with
/// a restart whenever the residual jumps above the best one seen.
struct AndersonMixer {
    mixing: f64,
    depth: usize,
    prev: Option<(Vec<C64>, Vec<C64>)>,
    dx: Vec<Vec<C64>>,
    dr: Vec<Vec<C64>>,
    best: f64,
}

impl AndersonMixer {
    fn new(mixing: f64, depth: usize) -> Self {
        Self {
            mixing,
            depth,
            prev: None,
            dx: Vec::new(),
            dr: Vec::new(),
            best: f64::INFINITY,
        }
    }

    fn next(&mut self, x: &[C64], fx: &[C64]) -> Vec<C64> {
        let m = self.mixing;
        let r: Vec<C64> = fx.iter().zip(x).map(|(a, b)| a - b).collect();
        let rnorm = r.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if self.depth == 0 {
            return x.iter().zip(&r).map(|(a, b)| a + b * m).collect();
        }
        if rnorm > 10.0 * self.best {
            self.dx.clear();
            self.dr.clear();
            self.prev = None;
        }
        self.best = self.best.min(rnorm);
        if let Some((px, pr)) = self.prev.take() {
            self.dx.push(x.iter().zip(&px).map(|(a, b)| a - b).collect());
            self.dr.push(r.iter().zip(&pr).map(|(a, b)| a - b).collect());
            if self.dx.len() > self.depth {
                self.dx.remove(0);
                self.dr.remove(0);
            }
        }
        self.prev = Some((x.to_vec(), r.clone()));
        let gamma = least_squares(&self.dr, &r);
        let mut out: Vec<C64> = x.iter().zip(&r).map(|(a, b)| a + b * m).collect();
        for (j, g) in gamma.iter().enumerate() {
            for (i, o) in out.iter_mut().enumerate() {
                *o -= (self.dx[j][i] + self.dr[j][i] * m) * *g;
            }
        }
        out
    }
}

/// Real coefficients minimizing `|r - sum_j gamma_j cols_j|` (normal
/// equations with a relative Tikhonov shift).
fn least_squares(cols: &[Vec<C64>], r: &[C64]) -> Vec<f64> {
    let k = cols.len();
    if k == 0 {
        return Vec::new();
    }
    let re_dot = |a: &[C64], b: &[C64]| a.iter().zip(b).map(|(x, y)| (x.conj() * y).re).sum::<f64>();
    let mut a = vec![vec![0.0; k]; k];
    let mut b = vec![0.0; k];
    for i in 0..k {
        for j in 0..=i {
            a[i][j] = re_dot(&cols[i], &cols[j]);
            a[j][i] = a[i][j];
        }
        b[i] = re_dot(&cols[i], r);
    }
    let trace = (0..k).map(|i| a[i][i]).sum::<f64>();
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += 1e-10 * trace / k as f64;
    }
    for c in 0..k {
        let p = (c..k).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap_or(c);
        a.swap(c, p);
        b.swap(c, p);
        if a[c][c] == 0.0 {
            return vec![0.0; k];
        }
        for i in c + 1..k {
            let f = a[i][c] / a[c][c];
            for j in c..k {
                a[i][j] -= f * a[c][j];
            }
            b[i] -= f * b[c];
        }
    }
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let s: f64 = (i + 1..k).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dot;
    use crate::model::{build_lattice, particle_hole_partner, seed_pair_field, Boundary, DisorderSpec};

    #[test]
    fn fermi_values() {
        assert_eq!(fermi(0.0, 3.0), 0.5);
        assert_eq!(fermi(0.3, f64::INFINITY), 0.0);
        assert_eq!(fermi(-0.3, f64::INFINITY), 1.0);
        assert!((fermi(-1.0, 1.0) + fermi(1.0, 1.0) - 1.0).abs() < 1e-15);
        assert_eq!(fermi(1e6, 1e6), 0.0);
        assert_eq!(fermi(-1e6, 1e6), 1.0);
    }

    #[test]
    fn nonpositive_beta_is_rejected() {
        let m = build_lattice(4, 4, 1.0, 1.0, 0.0, Boundary::Open, &DisorderSpec::clean()).unwrap();
        let p = seed_pair_field(&m, [1.5, 1.5], 1, 0.5, 1.0).unwrap();
        let s = diagonalize(&assemble_bdg(&m, &p).unwrap()).unwrap();
        assert!(matches!(occupations(s.clone(), 0.0), Err(Error::Domain(_))));
        assert!(matches!(occupations(s, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn non_hermitian_input_is_a_contract_violation() {
        let m = build_lattice(4, 4, 1.0, 1.0, 0.0, Boundary::Open, &DisorderSpec::clean()).unwrap();
        let p = seed_pair_field(&m, [1.5, 1.5], 1, 0.5, 1.0).unwrap();
        let mut b = assemble_bdg(&m, &p).unwrap();
        b.matrix[(0, 1)] += C64::new(1e-6, 0.0);
        assert!(matches!(diagonalize(&b), Err(Error::Contract(_))));
    }

    #[test]
    fn single_site_closed_form() {
        // One site is below the lattice minimum, so build the 2x2 matrix directly.
        let (xi, d) = (0.7, C64::new(0.3, 0.4));
        let mut mat = CMatrix::zeros(2, 2);
        mat[(0, 0)] = C64::new(xi, 0.0);
        mat[(1, 1)] = C64::new(-xi, 0.0);
        mat[(0, 1)] = d;
        mat[(1, 0)] = d.conj();
        let s = diagonalize(&BdgMatrix { sites: 1, matrix: mat }).unwrap();
        let e = (xi * xi + d.norm_sqr()).sqrt();
        assert!((s.energies[1] - e).abs() < 1e-14);
        assert!((s.energies[0] + e).abs() < 1e-14);
        let u2 = s.u(1)[0].norm_sqr();
        assert!((u2 - 0.5 * (1.0 + xi / e)).abs() < 1e-14);
    }

    #[test]
    fn vortex_spectrum_invariants() {
        let m = build_lattice(8, 8, 1.0, 1.0, -1.0, Boundary::Open, &DisorderSpec::clean()).unwrap();
        let p = seed_pair_field(&m, m.geometry.midpoint(), 1, 0.8, 1.5).unwrap();
        let b = assemble_bdg(&m, &p).unwrap();
        let s = diagonalize(&b).unwrap();
        let dim = s.len();
        assert!(s.spectral_symmetry_defect() < 1e-10);
        let ov = s.states.adjoint_mul(&s.states);
        for i in 0..dim {
            for j in 0..dim {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((ov[(i, j)] - target).norm() < 1e-10);
            }
        }
        let hv = b.matrix.matmul(&s.states);
        for k in 0..dim {
            let r: f64 = (0..dim)
                .map(|i| (hv[(i, k)] - s.states[(i, k)] * s.energies[k]).norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!(r < 1e-10);
        }
        // The partner of each state lies in the eigenspace at -E.
        for k in 0..dim {
            let partner = particle_hole_partner(s.state(k));
            let weight: f64 = (0..dim)
                .filter(|&j| (s.energies[j] + s.energies[k]).abs() < 1e-8)
                .map(|j| dot(s.state(j), &partner).norm_sqr())
                .sum();
            assert!((weight - 1.0).abs() < 1e-8, "state {k}: {weight}");
        }
    }

    #[test]
    fn zero_coupling_drives_gap_to_zero() {
        let m = build_lattice(6, 6, 1.0, 1.0, -1.0, Boundary::Open, &DisorderSpec::clean()).unwrap();
        let p = seed_pair_field(&m, m.geometry.midpoint(), 1, 0.5, 1.0).unwrap();
        let params = GapParams {
            mixing: 1.0,
            ..GapParams::new(0.0, f64::INFINITY)
        };
        let (f, _, rep) = self_consistent_gap(&m, &p, &params).unwrap();
        assert!(rep.converged);
        assert!(f.max_amplitude() == 0.0);
    }

    #[test]
    fn converged_field_is_a_fixed_point() {
        let m = build_lattice(8, 8, 1.0, 1.0, -1.0, Boundary::Open, &DisorderSpec::clean()).unwrap();
        let p = seed_pair_field(&m, m.geometry.midpoint(), 1, 0.5, 1.5).unwrap();
        let params = GapParams {
            tol: 1e-8,
            max_iter: 500,
            ..GapParams::new(3.0, f64::INFINITY)
        };
        let (f, _, rep) = self_consistent_gap(&m, &p, &params).unwrap();
        assert!(rep.converged, "{:?}", rep.final_residual());
        assert!(f.winding_intact(1e-6));
        let (_, _, again) = self_consistent_gap(&m, &f, &params).unwrap();
        assert!(again.converged && again.iterations <= 2);
    }

    #[test]
    fn quarter_turn_blocks_match_full_solve() {
        for (q, boundary) in [(1, Boundary::Open), (-1, Boundary::Open), (0, Boundary::Periodic)] {
            let m = build_lattice(8, 8, 1.0, 1.0, -1.2, boundary, &DisorderSpec::clean()).unwrap();
            let p = seed_pair_field(&m, m.geometry.midpoint(), q, 0.8, 1.5).unwrap();
            assert!(quarter_turn(&m, &p).is_some());
            let fast = solve_field(&m, &p, f64::INFINITY).unwrap();
            let full = diagonalize(&assemble_bdg(&m, &p).unwrap()).unwrap();
            for (a, b) in fast.energies.iter().zip(&full.energies) {
                assert!((a - b).abs() < 1e-12, "q={q}: {a} vs {b}");
            }
            let b = assemble_bdg(&m, &p).unwrap();
            let hv = b.matrix.matmul(&fast.states);
            let ov = fast.states.adjoint_mul(&fast.states);
            for k in 0..fast.len() {
                for i in 0..fast.len() {
                    assert!((hv[(i, k)] - fast.states[(i, k)] * fast.energies[k]).norm() < 1e-11);
                    let target = if i == k { 1.0 } else { 0.0 };
                    assert!((ov[(i, k)] - target).norm() < 1e-12);
                }
            }
            assert!(fast.particle_hole_pairing_defect() < 1e-10);
        }
    }

    #[test]
    fn asymmetric_fields_use_the_full_solver() {
        let m = build_lattice(8, 8, 1.0, 1.0, -1.2, Boundary::Open, &DisorderSpec::clean()).unwrap();
        let p = seed_pair_field(&m, [3.4, 3.6], 1, 0.8, 1.5).unwrap();
        assert!(quarter_turn(&m, &p).is_none());
        let dis = DisorderSpec {
            strength: 0.5,
            ..DisorderSpec::clean()
        };
        let md = build_lattice(8, 8, 1.0, 1.0, -1.2, Boundary::Open, &dis).unwrap();
        let pd = seed_pair_field(&md, md.geometry.midpoint(), 1, 0.8, 1.5).unwrap();
        assert!(quarter_turn(&md, &pd).is_none());
    }
}
