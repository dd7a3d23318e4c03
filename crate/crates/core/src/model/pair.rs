use serde::{Deserialize, Serialize};

use super::lattice::{Boundary, Geometry, LatticeModel};
use crate::error::{Error, Result};
use crate::linalg::{C64, ZERO};

/// How the samples of a pair field came about, which decides how it is displaced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldOrigin {
    /// Closed-form `tanh` profile, re-evaluated exactly when moved.
    Ansatz,
    /// Arbitrary samples (e.g. a converged gap), moved by interpolation.
    Sampled,
}

/// Complex order parameter on the lattice sites with a vortex at `center`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairField {
    pub geometry: Geometry,
    pub delta: Vec<C64>,
    pub center: [f64; 2],
    pub winding: i32,
    pub bulk_gap: f64,
    pub coherence_length: f64,
    pub origin: FieldOrigin,
    /// Set when the field vanishes identically and the winding is undefined.
    pub degenerate: bool,
    /// Vortex-free field on the same lattice (edges, impurities). When set,
    /// only the vortex factor `delta / background` moves on displacement.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<Vec<C64>>,
}

/// `tanh(r/xi) * exp(i q theta)` about `center`. For `q = 0` the carrier is 1.
fn carrier(p: [f64; 2], center: [f64; 2], q: i32, xi: f64) -> C64 {
    if q == 0 {
        return C64::new(1.0, 0.0);
    }
    let dx = p[0] - center[0];
    let dy = p[1] - center[1];
    let r = dx.hypot(dy);
    let theta = dy.atan2(dx);
    C64::from_polar((r / xi).tanh(), q as f64 * theta)
}

fn wrap_phase(x: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    x - tau * ((x + std::f64::consts::PI) / tau).floor()
}

/// Seeds the vortex ansatz `Delta_bulk * tanh(r/xi) * exp(i q theta)`; `q = 0` gives a uniform gap.
pub fn seed_pair_field(
    model: &LatticeModel,
    center: [f64; 2],
    q: i32,
    bulk_gap: f64,
    xi: f64,
) -> Result<PairField> {
    let geometry = model.geometry;
    if !(-1..=1).contains(&q) {
        return Err(Error::Domain(format!("winding must be -1, 0 or +1, got {q}")));
    }
    if q != 0 && geometry.boundary == Boundary::Periodic {
        return Err(Error::Domain(
            "a single vortex is inconsistent with periodic boundaries; use q = 0".into(),
        ));
    }
    if !(center[0].is_finite() && center[1].is_finite()) || !geometry.strictly_inside(center) {
        return Err(Error::Domain(format!(
            "vortex center ({}, {}) is not strictly inside the lattice",
            center[0], center[1]
        )));
    }
    if !(xi.is_finite() && xi > 0.0) {
        return Err(Error::Domain(format!("coherence length must be > 0, got {xi}")));
    }
    if !(bulk_gap.is_finite() && bulk_gap >= 0.0) {
        return Err(Error::Domain(format!("bulk gap must be >= 0, got {bulk_gap}")));
    }
    let delta = (0..geometry.sites())
        .map(|s| bulk_gap * carrier(geometry.position(s), center, q, xi))
        .collect();
    Ok(PairField {
        geometry,
        delta,
        center,
        winding: q,
        bulk_gap,
        coherence_length: xi,
        origin: FieldOrigin::Ansatz,
        degenerate: bulk_gap == 0.0,
        background: None,
    })
}

impl PairField {
    /// Summed wrapped phase differences around the rectangle of sites with
    /// corners `(i0, j0)` and `(i1, j1)`, traversed counter-clockwise.
    /// `None` if any site on the loop has zero amplitude.
    pub fn loop_winding(&self, i0: usize, j0: usize, i1: usize, j1: usize) -> Option<f64> {
        let g = &self.geometry;
        assert!(i0 < i1 && j0 < j1 && i1 < g.nx && j1 < g.ny, "loop outside lattice");
        let mut path = Vec::new();
        path.extend((i0..i1).map(|i| (i, j0)));
        path.extend((j0..j1).map(|j| (i1, j)));
        path.extend((i0 + 1..=i1).rev().map(|i| (i, j1)));
        path.extend((j0 + 1..=j1).rev().map(|j| (i0, j)));
        let mut total = 0.0;
        for (n, &(i, j)) in path.iter().enumerate() {
            let (ni, nj) = path[(n + 1) % path.len()];
            let a = self.delta[g.index(i, j)];
            let b = self.delta[g.index(ni, nj)];
            if a.norm() == 0.0 || b.norm() == 0.0 {
                return None;
            }
            total += wrap_phase(b.arg() - a.arg());
        }
        Some(total)
    }

    /// Site rectangle (`i0, j0, i1, j1`) of the smallest 4x4-site ring around the center,
    /// clamped to the lattice.
    pub fn core_loop(&self) -> (usize, usize, usize, usize) {
        let g = &self.geometry;
        let ic = (self.center[0] / g.a).floor() as isize;
        let jc = (self.center[1] / g.a).floor() as isize;
        let clamp = |lo: isize, n: usize| -> (usize, usize) {
            let lo = lo.clamp(0, n as isize - 4) as usize;
            (lo, lo + 3)
        };
        let (i0, i1) = clamp(ic - 1, g.nx);
        let (j0, j1) = clamp(jc - 1, g.ny);
        (i0, j0, i1, j1)
    }

    /// Winding around the core loop, in radians.
    pub fn measured_winding(&self) -> Option<f64> {
        let (i0, j0, i1, j1) = self.core_loop();
        self.loop_winding(i0, j0, i1, j1)
    }

    /// True if the core-loop winding equals `2 pi q` within `tol` radians.
    /// A degenerate field passes only for `q = 0`.
    pub fn winding_intact(&self, tol: f64) -> bool {
        match self.measured_winding() {
            Some(w) => (w - std::f64::consts::TAU * self.winding as f64).abs() < tol,
            None => self.winding == 0,
        }
    }

    /// Mean amplitude over sites farther than `min_r` from the center.
    pub fn far_field_amplitude(&self, min_r: f64) -> Option<f64> {
        let g = &self.geometry;
        let (sum, count) = (0..g.sites())
            .filter(|&s| {
                let p = g.position(s);
                (p[0] - self.center[0]).hypot(p[1] - self.center[1]) > min_r
            })
            .fold((0.0, 0usize), |(acc, n), s| (acc + self.delta[s].norm(), n + 1));
        (count > 0).then(|| sum / count as f64)
    }

    /// Core size of the `tanh` profile that matches the amplitude on the
    /// innermost ring of sites, given the current `bulk_gap`. `None` without a
    /// vortex or when the ring is not below the bulk value.
    pub fn fitted_core_length(&self) -> Option<f64> {
        if self.winding == 0 || self.degenerate || !(self.bulk_gap > 0.0) {
            return None;
        }
        let g = &self.geometry;
        let dist = |s: usize| {
            let p = g.position(s);
            (p[0] - self.center[0]).hypot(p[1] - self.center[1])
        };
        let r_min = (0..g.sites()).map(dist).fold(f64::INFINITY, f64::min);
        let ring: Vec<usize> = (0..g.sites()).filter(|&s| dist(s) <= r_min * (1.0 + 1e-9)).collect();
        let mean = ring.iter().map(|&s| self.delta[s].norm()).sum::<f64>() / ring.len() as f64;
        let ratio = mean / self.bulk_gap;
        (ratio > 0.0 && ratio < 1.0).then(|| r_min / ratio.atanh())
    }

    /// Unit phase `e^{i q theta}` of the winding about the center at site `s`.
    pub fn winding_phase(&self, s: usize) -> C64 {
        if self.winding == 0 {
            return C64::new(1.0, 0.0);
        }
        let p = self.geometry.position(s);
        let theta = (p[1] - self.center[1]).atan2(p[0] - self.center[0]);
        C64::from_polar(1.0, self.winding as f64 * theta)
    }

    pub fn max_amplitude(&self) -> f64 {
        self.delta.iter().map(|d| d.norm()).fold(0.0, f64::max)
    }

    /// Replaces the samples, keeping center, winding and profile metadata.
    pub fn with_samples(&self, delta: Vec<C64>) -> PairField {
        let degenerate = delta.iter().all(|d| d.norm() == 0.0);
        PairField {
            delta,
            origin: FieldOrigin::Sampled,
            degenerate,
            ..self.clone()
        }
    }

    /// Attaches the vortex-free field that displacement keeps fixed.
    pub fn with_background(mut self, background: Vec<C64>) -> Result<PairField> {
        if background.len() != self.delta.len() {
            return Err(Error::Domain(format!(
                "background has {} sites, field has {}",
                background.len(),
                self.delta.len()
            )));
        }
        if background.iter().any(|b| !(b.norm() > 0.0)) {
            return Err(Error::Domain("background field vanishes on some site".into()));
        }
        self.background = Some(background);
        Ok(self)
    }

    /// The field about a center moved by `dx`.
    ///
    /// Ansatz fields are re-evaluated in closed form. Sampled fields are
    /// written as `background(x) * carrier(x; x0) * S(x)` with the vortex
    /// carrier `tanh(r/xi) e^{i q theta}` and a background of 1 unless one is
    /// attached. The smooth remainder `S` is translated by bicubic
    /// (Catmull-Rom) interpolation and multiplied by the carrier about the new
    /// center, so the phase singularity moves exactly while the background
    /// (boundary and impurity structure) stays put.
    /// A field without a vortex (`q = 0`) has nothing to move and is returned as is.
    pub fn displaced(&self, dx: [f64; 2]) -> Result<PairField> {
        if dx == [0.0, 0.0] {
            return Ok(self.clone());
        }
        let g = &self.geometry;
        let center = [self.center[0] + dx[0], self.center[1] + dx[1]];
        if !(dx[0].is_finite() && dx[1].is_finite()) || g.distance_to_edge(center) < 2.0 * g.a {
            return Err(Error::Domain(format!(
                "displaced center ({}, {}) is closer than 2a to the boundary",
                center[0], center[1]
            )));
        }
        if self.winding == 0 || self.degenerate {
            return Ok(self.clone());
        }
        let (q, xi) = (self.winding, self.coherence_length);
        let delta = match self.origin {
            FieldOrigin::Ansatz => (0..g.sites())
                .map(|s| self.bulk_gap * carrier(g.position(s), center, q, xi))
                .collect(),
            FieldOrigin::Sampled => {
                let remainder = self.remainder();
                (0..g.sites())
                    .map(|s| {
                        let p = g.position(s);
                        let back = [(p[0] - dx[0]) / g.a, (p[1] - dx[1]) / g.a];
                        let bg = self.background.as_ref().map_or(C64::new(1.0, 0.0), |b| b[s]);
                        bg * carrier(p, center, q, xi) * catmull_rom(g, &remainder, back)
                    })
                    .collect()
            }
        };
        Ok(PairField {
            delta,
            center,
            ..self.clone()
        })
    }

    /// `Delta / (background * carrier)` per site; sites where the carrier
    /// vanishes take the mean of their well-defined neighbours.
    fn remainder(&self) -> Vec<C64> {
        let g = &self.geometry;
        let c: Vec<C64> = (0..g.sites())
            .map(|s| {
                let bg = self.background.as_ref().map_or(C64::new(1.0, 0.0), |b| b[s]);
                bg * carrier(g.position(s), self.center, self.winding, self.coherence_length)
            })
            .collect();
        let tiny = 1e-10;
        let mut out: Vec<Option<C64>> = (0..g.sites())
            .map(|s| (c[s].norm() > tiny).then(|| self.delta[s] / c[s]))
            .collect();
        for s in 0..g.sites() {
            if out[s].is_some() {
                continue;
            }
            let (i, j) = g.site_indices(s);
            let mut acc = ZERO;
            let mut n = 0;
            for (di, dj) in [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)] {
                let (ni, nj) = (i as isize + di, j as isize + dj);
                if ni < 0 || nj < 0 || ni >= g.nx as isize || nj >= g.ny as isize {
                    continue;
                }
                let t = g.index(ni as usize, nj as usize);
                if c[t].norm() > tiny {
                    acc += self.delta[t] / c[t];
                    n += 1;
                }
            }
            out[s] = Some(if n > 0 { acc / n as f64 } else { ZERO });
        }
        out.into_iter().map(|v| v.unwrap_or(ZERO)).collect()
    }
}

fn catmull_rom_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

/// Bicubic interpolation of site samples at fractional site coordinates,
/// clamping the stencil at the edges.
fn catmull_rom(g: &Geometry, f: &[C64], p: [f64; 2]) -> C64 {
    let x = p[0].clamp(0.0, (g.nx - 1) as f64);
    let y = p[1].clamp(0.0, (g.ny - 1) as f64);
    let (ix, iy) = (x.floor(), y.floor());
    let wx = catmull_rom_weights(x - ix);
    let wy = catmull_rom_weights(y - iy);
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut acc = ZERO;
    for (b, wyb) in wy.iter().enumerate() {
        let j = clamp(iy as isize - 1 + b as isize, g.ny);
        for (a, wxa) in wx.iter().enumerate() {
            let i = clamp(ix as isize - 1 + a as isize, g.nx);
            acc += f[g.index(i, j)] * (wxa * wyb);
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::lattice::{build_lattice, DisorderSpec};
    use std::f64::consts::TAU;

    fn open(n: usize) -> LatticeModel {
        build_lattice(n, n, 1.0, 1.0, -1.0, Boundary::Open, &DisorderSpec::clean()).unwrap()
    }

    #[test]
    fn winding_signs() {
        let m = open(12);
        let c = m.geometry.midpoint();
        for q in [-1, 1] {
            let p = seed_pair_field(&m, c, q, 1.0, 2.0).unwrap();
            let w = p.measured_winding().unwrap();
            assert!((w - TAU * q as f64).abs() < 1e-9, "q={q}: {w}");
            assert!(p.winding_intact(1e-6));
        }
    }

    #[test]
    fn zero_gap_is_degenerate() {
        let m = open(8);
        let p = seed_pair_field(&m, m.geometry.midpoint(), 1, 0.0, 2.0).unwrap();
        assert!(p.degenerate);
        assert!(p.delta.iter().all(|d| d.norm() == 0.0));
        assert!(p.measured_winding().is_none());
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = open(8);
        assert!(matches!(seed_pair_field(&m, [0.0, 3.0], 1, 1.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(seed_pair_field(&m, [3.5, 3.5], 1, 1.0, 0.0), Err(Error::Domain(_))));
        let p = build_lattice(8, 8, 1.0, 1.0, 0.0, Boundary::Periodic, &DisorderSpec::clean()).unwrap();
        assert!(seed_pair_field(&p, [3.5, 3.5], 1, 1.0, 1.0).is_err());
        assert!(seed_pair_field(&p, [3.5, 3.5], 0, 1.0, 1.0).is_ok());
    }

    #[test]
    fn zero_displacement_is_identity() {
        let m = open(10);
        let p = seed_pair_field(&m, m.geometry.midpoint(), 1, 1.0, 1.5).unwrap();
        assert_eq!(p.displaced([0.0, 0.0]).unwrap(), p);
        let s = p.with_samples(p.delta.clone());
        assert_eq!(s.displaced([0.0, 0.0]).unwrap(), s);
    }

    #[test]
    fn ansatz_displacement_matches_reseed() {
        let m = open(12);
        let c = m.geometry.midpoint();
        let p = seed_pair_field(&m, c, 1, 0.8, 1.5).unwrap();
        let moved = p.displaced([1.0, 0.0]).unwrap();
        let fresh = seed_pair_field(&m, [c[0] + 1.0, c[1]], 1, 0.8, 1.5).unwrap();
        assert_eq!(moved.delta, fresh.delta);
    }

    #[test]
    fn sampled_displacement_tracks_ansatz() {
        let m = open(16);
        let c = m.geometry.midpoint();
        let p = seed_pair_field(&m, c, 1, 1.0, 2.0).unwrap();
        let sampled = p.with_samples(p.delta.clone());
        let d = [0.3, -0.2];
        let a = p.displaced(d).unwrap();
        let b = sampled.displaced(d).unwrap();
        let err = a
            .delta
            .iter()
            .zip(&b.delta)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn displacement_near_edge_is_rejected() {
        let m = open(8);
        let p = seed_pair_field(&m, m.geometry.midpoint(), 1, 1.0, 1.0).unwrap();
        assert!(matches!(p.displaced([2.0, 0.0]), Err(Error::Domain(_))));
        assert!(p.displaced([1.0, 0.0]).is_ok());
    }

    #[test]
    fn catmull_rom_reproduces_quadratics() {
        let g = Geometry {
            nx: 8,
            ny: 8,
            a: 1.0,
            boundary: Boundary::Open,
        };
        let f = |x: f64, y: f64| C64::new(x * x - 2.0 * x * y, y * y + 0.5 * x);
        let samples: Vec<C64> = (0..g.sites())
            .map(|s| {
                let p = g.position(s);
                f(p[0], p[1])
            })
            .collect();
        let v = catmull_rom(&g, &samples, [3.3, 4.6]);
        assert!((v - f(3.3, 4.6)).norm() < 1e-12);
    }
}
