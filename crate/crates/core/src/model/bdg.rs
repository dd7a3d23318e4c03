use super::lattice::LatticeModel;
use super::pair::PairField;
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};

/// Dense Nambu matrix `[[H, D], [D*, -H]]` with `D = diag(delta)`.
#[derive(Clone, Debug)]
pub struct BdgMatrix {
    pub sites: usize,
    pub matrix: CMatrix,
}

pub fn assemble_bdg(model: &LatticeModel, pair: &PairField) -> Result<BdgMatrix> {
    let n = model.sites();
    if pair.geometry != model.geometry || pair.delta.len() != n {
        return Err(Error::Domain(format!(
            "pair field is defined on {}x{} sites, model on {}x{}",
            pair.geometry.nx, pair.geometry.ny, model.geometry.nx, model.geometry.ny
        )));
    }
    let h = model.normal_hamiltonian();
    let mut m = CMatrix::zeros(2 * n, 2 * n);
    for r in 0..n {
        for c in 0..n {
            let v = h[r * n + c];
            if v != 0.0 {
                m[(r, c)] = C64::new(v, 0.0);
                m[(n + r, n + c)] = C64::new(-v, 0.0);
            }
        }
    }
    for (s, d) in pair.delta.iter().enumerate() {
        m[(s, n + s)] = *d;
        m[(n + s, s)] = d.conj();
    }
    Ok(BdgMatrix { sites: n, matrix: m })
}

impl BdgMatrix {
    pub fn dim(&self) -> usize {
        2 * self.sites
    }

    pub fn hermitian_defect(&self) -> f64 {
        self.matrix.hermitian_defect()
    }

    /// `max |P M P^-1 + M|` for the antiunitary `P = (i sigma_y) K`,
    /// which maps an eigenpair `(E, (u, v))` to `(-E, (-v*, u*))`.
    pub fn particle_hole_defect(&self) -> f64 {
        let n = self.sites;
        let m = &self.matrix;
        let mut worst: f64 = 0.0;
        for c in 0..2 * n {
            for r in 0..2 * n {
                // (i sigma_y) M* (i sigma_y)^-1 has blocks [[-H22*, H21*], [H12*, -H11*]].
                let (rr, sr) = if r < n { (r + n, -1.0) } else { (r - n, 1.0) };
                let (cc, sc) = if c < n { (c + n, -1.0) } else { (c - n, 1.0) };
                let mapped = m[(rr, cc)].conj() * (sr * sc);
                worst = worst.max((mapped + m[(r, c)]).norm());
            }
        }
        worst
    }
}

/// Particle-hole partner `(-v*, u*)` of a Nambu spinor `(u, v)`.
pub fn particle_hole_partner(state: &[C64]) -> Vec<C64> {
    let n = state.len() / 2;
    let (u, v) = state.split_at(n);
    v.iter().map(|x| -x.conj()).chain(u.iter().map(|x| x.conj())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::lattice::{build_lattice, Boundary, DisorderKind, DisorderSpec};
    use crate::model::pair::seed_pair_field;

    #[test]
    fn structure_of_a_disordered_vortex_matrix() {
        let d = DisorderSpec {
            strength: 0.7,
            density: 0.5,
            seed: 3,
            kind: DisorderKind::Gaussian,
        };
        let m = build_lattice(6, 5, 1.0, 1.0, -0.4, Boundary::Open, &d).unwrap();
        let p = seed_pair_field(&m, [2.5, 2.5], 1, 0.9, 1.2).unwrap();
        let b = assemble_bdg(&m, &p).unwrap();
        assert_eq!(b.dim(), 60);
        assert_eq!(b.hermitian_defect(), 0.0);
        assert!(b.particle_hole_defect() < 1e-15);
        let n = b.sites;
        for s in 0..n {
            for r in 0..n {
                let off = b.matrix[(s, n + r)];
                if s != r {
                    assert_eq!(off.norm(), 0.0);
                }
                assert_eq!(b.matrix[(s, r)].im, 0.0);
            }
        }
    }

    #[test]
    fn size_mismatch_is_a_domain_error() {
        let a = build_lattice(6, 6, 1.0, 1.0, 0.0, Boundary::Open, &DisorderSpec::clean()).unwrap();
        let b = build_lattice(8, 6, 1.0, 1.0, 0.0, Boundary::Open, &DisorderSpec::clean()).unwrap();
        let p = seed_pair_field(&b, [3.5, 2.5], 1, 1.0, 1.0).unwrap();
        assert!(matches!(assemble_bdg(&a, &p), Err(Error::Domain(_))));
    }

    #[test]
    fn partner_is_an_involution_up_to_sign() {
        let s = vec![C64::new(1.0, 2.0), C64::new(0.5, -1.0), C64::new(-3.0, 0.25), C64::new(0.0, 1.0)];
        let twice = particle_hole_partner(&particle_hole_partner(&s));
        for (a, b) in s.iter().zip(&twice) {
            assert_eq!(*a, -*b);
        }
    }
}
