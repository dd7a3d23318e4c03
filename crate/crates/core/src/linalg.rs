//! Dense complex matrices and the Hermitian eigensolver.
//!
//! Storage is column-major so that columns (eigenvectors) are contiguous and the
//! buffers can be handed to BLAS/LAPACK without copies.

use std::ops::{Index, IndexMut};
use std::os::raw::{c_char, c_int};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_columns(rows: usize, columns: &[Vec<C64>]) -> Self {
        let mut data = Vec::with_capacity(rows * columns.len());
        for c in columns {
            assert_eq!(c.len(), rows, "column length mismatch");
            data.extend_from_slice(c);
        }
        Self {
            rows,
            cols: columns.len(),
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn col(&self, j: usize) -> &[C64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [C64] {
        let r = self.rows;
        &mut self.data[j * r..(j + 1) * r]
    }

    pub fn adjoint(&self) -> CMatrix {
        CMatrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `max |A - A^H|` over all entries.
    pub fn hermitian_defect(&self) -> f64 {
        assert!(self.is_square());
        let n = self.rows;
        let mut worst = 0.0f64;
        for j in 0..n {
            for i in j..n {
                let d = (self[(i, j)] - self[(j, i)].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    /// Copies a contiguous range of columns.
    pub fn columns(&self, range: std::ops::Range<usize>) -> CMatrix {
        let r = self.rows;
        CMatrix {
            rows: r,
            cols: range.len(),
            data: self.data[range.start * r..range.end * r].to_vec(),
        }
    }

    /// Copies a contiguous range of rows.
    pub fn row_block(&self, range: std::ops::Range<usize>) -> CMatrix {
        CMatrix::from_fn(range.len(), self.cols, |i, j| self[(range.start + i, j)])
    }

    /// `self * other`.
    pub fn matmul(&self, other: &CMatrix) -> CMatrix {
        gemm(self, false, other, false)
    }

    /// `self^H * other`.
    pub fn adjoint_mul(&self, other: &CMatrix) -> CMatrix {
        gemm(self, true, other, false)
    }

    /// `self * other^H`.
    pub fn mul_adjoint(&self, other: &CMatrix) -> CMatrix {
        gemm(self, false, other, true)
    }

    pub fn scale_rows(&mut self, factors: &[C64]) {
        assert_eq!(factors.len(), self.rows);
        for j in 0..self.cols {
            for (z, f) in self.col_mut(j).iter_mut().zip(factors) {
                *z *= f;
            }
        }
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i + j * self.rows]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i + j * self.rows]
    }
}

fn to_c_int(n: usize) -> c_int {
    c_int::try_from(n).expect("matrix dimension exceeds the BLAS integer range")
}

fn gemm(a: &CMatrix, adj_a: bool, b: &CMatrix, adj_b: bool) -> CMatrix {
    use cblas_sys::{cblas_zgemm, CBLAS_LAYOUT, CBLAS_TRANSPOSE};
    let (m, ka) = if adj_a { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let (kb, n) = if adj_b { (b.cols, b.rows) } else { (b.rows, b.cols) };
    assert_eq!(ka, kb, "inner dimensions differ: {ka} vs {kb}");
    let mut c = CMatrix::zeros(m, n);
    if m == 0 || n == 0 {
        return c;
    }
    if ka == 0 {
        return c;
    }
    let t = |adj| {
        if adj {
            CBLAS_TRANSPOSE::CblasConjTrans
        } else {
            CBLAS_TRANSPOSE::CblasNoTrans
        }
    };
    let alpha = [1.0f64, 0.0];
    let beta = [0.0f64, 0.0];
    // SAFETY: column-major buffers with leading dimensions equal to row counts;
    // Complex64 is repr(C) {re, im} which matches the BLAS double-complex layout.
    unsafe {
        cblas_zgemm(
            CBLAS_LAYOUT::CblasColMajor,
            t(adj_a),
            t(adj_b),
            to_c_int(m),
            to_c_int(n),
            to_c_int(ka),
            &alpha,
            a.data.as_ptr() as *const [f64; 2],
            to_c_int(a.rows.max(1)),
            b.data.as_ptr() as *const [f64; 2],
            to_c_int(b.rows.max(1)),
            &beta,
            c.data.as_mut_ptr() as *mut [f64; 2],
            to_c_int(m.max(1)),
        );
    }
    c
}

/// Full eigendecomposition of a Hermitian matrix (divide and conquer, `zheevd`).
/// Eigenvalues come back ascending with orthonormal eigenvectors as columns.
/// Only the lower triangle is read.
pub fn hermitian_eigen(m: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    if !m.is_square() {
        return Err(Error::Contract(format!(
            "eigensolver needs a square matrix, got {}x{}",
            m.rows, m.cols
        )));
    }
    let n = m.rows;
    let mut a = m.clone();
    let mut w = vec![0.0f64; n];
    if n == 0 {
        return Ok((w, a));
    }
    let nn = to_c_int(n);
    let jobz = b'V' as c_char;
    let uplo = b'L' as c_char;
    let mut info: c_int = 0;
    let mut work_q = [ZERO];
    let mut rwork_q = [0.0f64];
    let mut iwork_q: [c_int; 1] = [0];
    let query: c_int = -1;
    // SAFETY: workspace query; all pointers reference live buffers of length >= 1.
    unsafe {
        lapack_sys::zheevd_(
            &jobz,
            &uplo,
            &nn,
            a.data.as_mut_ptr() as *mut _,
            &nn,
            w.as_mut_ptr(),
            work_q.as_mut_ptr() as *mut _,
            &query,
            rwork_q.as_mut_ptr(),
            &query,
            iwork_q.as_mut_ptr(),
            &query,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Numeric(format!("zheevd workspace query failed, info={info}")));
    }
    let lwork = (work_q[0].re as c_int).max(1);
    let lrwork = (rwork_q[0] as c_int).max(1);
    let liwork = iwork_q[0].max(1);
    let mut work = vec![ZERO; lwork as usize];
    let mut rwork = vec![0.0f64; lrwork as usize];
    let mut iwork: Vec<c_int> = vec![0; liwork as usize];
    // SAFETY: buffers sized per the workspace query above.
    unsafe {
        lapack_sys::zheevd_(
            &jobz,
            &uplo,
            &nn,
            a.data.as_mut_ptr() as *mut _,
            &nn,
            w.as_mut_ptr(),
            work.as_mut_ptr() as *mut _,
            &lwork,
            rwork.as_mut_ptr(),
            &lrwork,
            iwork.as_mut_ptr(),
            &liwork,
            &mut info,
        );
    }
    if info != 0 {
        let fro = m.as_slice().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        return Err(Error::Numeric(format!(
            "Hermitian eigensolver did not converge (info={info}); dimension {n}, \
             Frobenius norm {fro:.6e}, max |entry| {:.6e}, Hermitian defect {:.3e}",
            m.max_abs(),
            m.hermitian_defect()
        )));
    }
    Ok((w, a))
}

extern "C" {
    fn openblas_set_num_threads(num_threads: c_int);
}

/// Sets the thread count used inside BLAS/LAPACK calls.
pub fn set_blas_threads(n: usize) {
    // SAFETY: plain setter exported by OpenBLAS.
    unsafe { openblas_set_num_threads(to_c_int(n.max(1))) }
}

/// Inner product `<a|b>` (conjugate-linear in `a`).
#[inline]
pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(ZERO, |acc, (x, y)| acc + x.conj() * y)
}

/// Singular value decomposition `a = u * diag(s) * v^H` of a small square
/// matrix, via the Hermitian eigenproblem of `a^H a`. Adequate for the
/// well-conditioned overlap matrices used in gauge alignment.
pub fn polar_unitary(a: &CMatrix) -> Result<(CMatrix, f64)> {
    // Returns the unitary factor R = V U^H maximising Re tr(a R), with the
    // smallest singular value of `a`.
    let n = a.rows;
    let (ev, v) = hermitian_eigen(&a.adjoint_mul(a))?;
    let smin = ev.first().copied().unwrap_or(0.0).max(0.0).sqrt();
    if smin < 1e-12 {
        return Err(Error::Numeric(
            "overlap matrix is singular; cannot align subspaces".into(),
        ));
    }
    // a = U S V^H  =>  U = a V S^{-1}
    let mut av = a.matmul(&v);
    for (j, &e) in ev.iter().enumerate() {
        let s = e.sqrt();
        for z in av.col_mut(j) {
            *z /= s;
        }
    }
    // R = V U^H
    let r = v.mul_adjoint(&av);
    debug_assert_eq!(r.rows, n);
    Ok((r, smin))
}
