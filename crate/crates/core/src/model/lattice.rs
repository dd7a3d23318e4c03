use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Open,
    Periodic,
}

/// Site layout shared by every per-site field on a lattice.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub nx: usize,
    pub ny: usize,
    pub a: f64,
    pub boundary: Boundary,
}

impl Geometry {
    pub fn sites(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.nx * j
    }

    #[inline]
    pub fn site_indices(&self, s: usize) -> (usize, usize) {
        (s % self.nx, s / self.nx)
    }

    #[inline]
    pub fn position(&self, s: usize) -> [f64; 2] {
        let (i, j) = self.site_indices(s);
        [i as f64 * self.a, j as f64 * self.a]
    }

    /// Largest coordinate along each axis.
    pub fn extent(&self) -> [f64; 2] {
        [(self.nx - 1) as f64 * self.a, (self.ny - 1) as f64 * self.a]
    }

    /// Geometric center of the site array (a plaquette center for even sizes).
    pub fn midpoint(&self) -> [f64; 2] {
        let e = self.extent();
        [0.5 * e[0], 0.5 * e[1]]
    }

    pub fn strictly_inside(&self, p: [f64; 2]) -> bool {
        let e = self.extent();
        p[0] > 0.0 && p[0] < e[0] && p[1] > 0.0 && p[1] < e[1]
    }

    /// Distance from `p` to the nearest edge of the site array.
    pub fn distance_to_edge(&self, p: [f64; 2]) -> f64 {
        let e = self.extent();
        p[0].min(e[0] - p[0]).min(p[1]).min(e[1] - p[1])
    }

    /// Nearest-neighbour bonds `(s, s')`, each listed once (+x and +y neighbours).
    pub fn bonds(&self) -> Vec<(usize, usize)> {
        let periodic = self.boundary == Boundary::Periodic;
        let mut out = Vec::with_capacity(2 * self.sites());
        for j in 0..self.ny {
            for i in 0..self.nx {
                let s = self.index(i, j);
                if i + 1 < self.nx {
                    out.push((s, self.index(i + 1, j)));
                } else if periodic {
                    out.push((s, self.index(0, j)));
                }
                if j + 1 < self.ny {
                    out.push((s, self.index(i, j + 1)));
                } else if periodic {
                    out.push((s, self.index(i, 0)));
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisorderKind {
    /// Uniform in `[-strength, strength]` on the chosen sites.
    Box,
    /// Normal with standard deviation `strength` on the chosen sites.
    Gaussian,
}

/// Recipe for one quenched impurity-potential realization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisorderSpec {
    pub strength: f64,
    pub density: f64,
    pub seed: u64,
    pub kind: DisorderKind,
}

impl DisorderSpec {
    pub fn clean() -> Self {
        Self {
            strength: 0.0,
            density: 1.0,
            seed: 0,
            kind: DisorderKind::Box,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.strength.is_finite() && self.strength >= 0.0) {
            return Err(Error::config(
                "disorder.strength",
                format!("must be finite and >= 0, got {}", self.strength),
            ));
        }
        if !(0.0..=1.0).contains(&self.density) {
            return Err(Error::config(
                "disorder.density",
                format!("must lie in [0, 1], got {}", self.density),
            ));
        }
        Ok(())
    }

    /// Draws the per-site potential. Each site consumes the same number of
    /// random draws whether or not it hosts an impurity, so the stream for a
    /// given seed does not depend on `density`.
    pub fn realize(&self, sites: usize) -> Result<Vec<f64>> {
        self.validate()?;
        if self.strength == 0.0 || self.density == 0.0 {
            return Ok(vec![0.0; sites]);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let normal = Normal::new(0.0, self.strength)
            .map_err(|e| Error::config("disorder.strength", e.to_string()))?;
        let mut v = Vec::with_capacity(sites);
        for _ in 0..sites {
            let pick: f64 = rng.random();
            let value = match self.kind {
                DisorderKind::Box => rng.random_range(-self.strength..=self.strength),
                DisorderKind::Gaussian => normal.sample(&mut rng),
            };
            v.push(if pick < self.density { value } else { 0.0 });
        }
        Ok(v)
    }
}

/// Discretized single-particle problem: square lattice, nearest-neighbour
/// hopping `-t_hop`, on-site `V(x) - mu`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeModel {
    pub geometry: Geometry,
    pub t_hop: f64,
    pub mu: f64,
    pub potential: Vec<f64>,
    pub disorder: DisorderSpec,
}

pub fn build_lattice(
    nx: usize,
    ny: usize,
    a: f64,
    t_hop: f64,
    mu: f64,
    boundary: Boundary,
    disorder: &DisorderSpec,
) -> Result<LatticeModel> {
    if nx < 4 {
        return Err(Error::config("nx", format!("must be >= 4, got {nx}")));
    }
    if ny < 4 {
        return Err(Error::config("ny", format!("must be >= 4, got {ny}")));
    }
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::config("a", format!("must be finite and > 0, got {a}")));
    }
    if !(t_hop.is_finite() && t_hop > 0.0) {
        return Err(Error::config(
            "t_hop",
            format!("must be finite and > 0, got {t_hop}"),
        ));
    }
    if !mu.is_finite() {
        return Err(Error::config("mu", "must be finite"));
    }
    let geometry = Geometry {
        nx,
        ny,
        a,
        boundary,
    };
    let potential = disorder.realize(geometry.sites())?;
    Ok(LatticeModel {
        geometry,
        t_hop,
        mu,
        potential,
        disorder: disorder.clone(),
    })
}

impl LatticeModel {
    pub fn sites(&self) -> usize {
        self.geometry.sites()
    }

    /// Dense normal-state block `H = -t * (nearest neighbours) + V - mu`,
    /// row-major `N x N`.
    pub fn normal_hamiltonian(&self) -> Vec<f64> {
        let n = self.sites();
        let mut h = vec![0.0; n * n];
        for (s, v) in self.potential.iter().enumerate() {
            h[s * n + s] = v - self.mu;
        }
        for (s, r) in self.geometry.bonds() {
            h[s * n + r] -= self.t_hop;
            h[r * n + s] -= self.t_hop;
        }
        h
    }

    /// Mean impurity potential, a handle on the density shift it induces.
    pub fn mean_potential(&self) -> f64 {
        self.potential.iter().sum::<f64>() / self.sites() as f64
    }
}
