use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};
use crate::model::{LatticeModel, PairField};
use crate::spectrum::BdgSpectrum;

/// Matrix elements `(M^a)_{kk'} = <Psi_k| d/dx0_a H0 |Psi_k'>` of the force operator.
#[derive(Clone, Debug)]
pub struct ForceMatrixElements {
    pub mx: CMatrix,
    pub my: CMatrix,
    pub fd_step: f64,
    /// Central-difference gradient of the pair field with respect to the center.
    pub grad_x: Vec<C64>,
    pub grad_y: Vec<C64>,
}

/// `(Delta(x0 + h e_a) - Delta(x0 - h e_a)) / 2h` for `a = x, y`.
pub fn center_gradient(pair: &PairField, fd_step: f64) -> Result<[Vec<C64>; 2]> {
    if !(fd_step.is_finite() && fd_step > 0.0) {
        return Err(Error::Domain(format!("fd_step must be > 0, got {fd_step}")));
    }
    let diff = |d: [f64; 2]| -> Result<Vec<C64>> {
        let plus = pair.displaced(d)?;
        let minus = pair.displaced([-d[0], -d[1]])?;
        Ok(plus
            .delta
            .iter()
            .zip(&minus.delta)
            .map(|(p, m)| (p - m) / (2.0 * fd_step))
            .collect())
    };
    Ok([diff([fd_step, 0.0])?, diff([0.0, fd_step])?])
}

/// `U^H diag(g) V + V^H diag(g*) U`, the only nonzero blocks since `H` does not
/// depend on the vortex position.
pub(crate) fn pairing_matrix_elements(spectrum: &BdgSpectrum, grad: &[C64]) -> CMatrix {
    let n = spectrum.sites;
    let u = spectrum.states.row_block(0..n);
    let v = spectrum.states.row_block(n..2 * n);
    let mut gv = v.clone();
    gv.scale_rows(grad);
    let conj: Vec<C64> = grad.iter().map(|z| z.conj()).collect();
    let mut gu = u.clone();
    gu.scale_rows(&conj);
    let mut m = u.adjoint_mul(&gv);
    let second = v.adjoint_mul(&gu);
    for (a, b) in m.as_mut_slice().iter_mut().zip(second.as_slice()) {
        *a += b;
    }
    m
}

pub fn force_matrix_elements(
    model: &LatticeModel,
    pair: &PairField,
    spectrum: &BdgSpectrum,
    fd_step: f64,
) -> Result<ForceMatrixElements> {
    if pair.geometry != model.geometry || spectrum.sites != model.sites() {
        return Err(Error::Domain("pair field, spectrum and lattice sizes differ".into()));
    }
    let [gx, gy] = center_gradient(pair, fd_step)?;
    let mx = pairing_matrix_elements(spectrum, &gx);
    let my = pairing_matrix_elements(spectrum, &gy);
    for (name, m) in [("x", &mx), ("y", &my)] {
        let defect = m.hermitian_defect();
        if defect > 1e-8 * m.max_abs().max(1e-300) {
            return Err(Error::Numeric(format!(
                "force matrix M^{name} is not Hermitian (defect {defect:.3e}); reduce fd_step"
            )));
        }
    }
    Ok(ForceMatrixElements {
        mx,
        my,
        fd_step,
        grad_x: gx,
        grad_y: gy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{assemble_bdg, build_lattice, seed_pair_field, Boundary, DisorderSpec};
    use crate::spectrum::diagonalize;

    #[test]
    fn block_formula_matches_full_matrix_difference() {
        let m = build_lattice(6, 6, 1.0, 1.0, -1.0, Boundary::Open, &DisorderSpec::clean()).unwrap();
        let p = seed_pair_field(&m, m.geometry.midpoint(), 1, 0.8, 1.3).unwrap();
        let b = assemble_bdg(&m, &p).unwrap();
        let s = diagonalize(&b).unwrap();
        let h = 1e-3;
        let f = force_matrix_elements(&m, &p, &s, h).unwrap();
        let plus = assemble_bdg(&m, &p.displaced([h, 0.0]).unwrap()).unwrap();
        let minus = assemble_bdg(&m, &p.displaced([-h, 0.0]).unwrap()).unwrap();
        let dim = b.dim();
        let dm = CMatrix::from_fn(dim, dim, |r, c| (plus.matrix[(r, c)] - minus.matrix[(r, c)]) / (2.0 * h));
        let full = s.states.adjoint_mul(&dm.matmul(&s.states));
        let err = (0..dim)
            .flat_map(|r| (0..dim).map(move |c| (r, c)))
            .map(|(r, c)| (full[(r, c)] - f.mx[(r, c)]).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-10 * f.mx.max_abs(), "{err}");
        assert!(f.mx.hermitian_defect() < 1e-12);
    }

    #[test]
    fn uniform_gap_has_no_force() {
        let m = build_lattice(6, 6, 1.0, 1.0, -1.0, Boundary::Open, &DisorderSpec::clean()).unwrap();
        let p = seed_pair_field(&m, m.geometry.midpoint(), 0, 0.8, 1.3).unwrap();
        let s = diagonalize(&assemble_bdg(&m, &p).unwrap()).unwrap();
        let f = force_matrix_elements(&m, &p, &s, 0.01).unwrap();
        assert_eq!(f.mx.max_abs(), 0.0);
        assert_eq!(f.my.max_abs(), 0.0);
    }
}
