//! Small dense complex-matrix helpers shared by every module.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn zeros(d: usize) -> CMatrix {
    CMatrix::zeros(d, d)
}

pub fn identity(d: usize) -> CMatrix {
    CMatrix::identity(d, d)
}

pub fn dagger(a: &CMatrix) -> CMatrix {
    a.adjoint()
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

pub fn anticommutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b + b * a
}

pub fn trace(a: &CMatrix) -> C64 {
    a.trace()
}

/// Largest entry modulus.
pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().fold(0.0_f64, |m, z| m.max(z.norm()))
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).norm()))
}

pub fn hermiticity_defect(a: &CMatrix) -> f64 {
    max_abs_diff(a, &a.adjoint())
}

/// (A + A†)/2
pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()).scale(0.5)
}

pub fn scale(a: &CMatrix, s: f64) -> CMatrix {
    a.map(|z| z * s)
}

/// Spectral decomposition of a Hermitian matrix: ascending eigenvalues and
/// the matching orthonormal eigenvectors as columns.
pub fn eigh(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let d = a.nrows();
    if d == 0 {
        return (Vec::new(), CMatrix::zeros(0, 0));
    }
    let eig = hermitian_part(a).symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(d, d);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Smallest eigenvalue of the Hermitian part.
pub fn min_eigenvalue(a: &CMatrix) -> f64 {
    match a.nrows() {
        0 => 0.0,
        1 => a[(0, 0)].re,
        2 => {
            // closed form avoids the iterative solver on the hot path
            let p = a[(0, 0)].re;
            let q = a[(1, 1)].re;
            let off = (a[(0, 1)] + a[(1, 0)].conj()) * 0.5;
            let mean = 0.5 * (p + q);
            let rad = (0.25 * (p - q) * (p - q) + off.norm_sqr()).sqrt();
            mean - rad
        }
        _ => hermitian_part(a)
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min),
    }
}

/// f(A) for Hermitian A through its eigenbasis.
pub fn hermitian_function<F: Fn(f64) -> C64>(a: &CMatrix, f: F) -> CMatrix {
    let (vals, vecs) = eigh(a);
    let diag = DVector::from_iterator(vals.len(), vals.iter().map(|&v| f(v)));
    &vecs * CMatrix::from_diagonal(&diag) * vecs.adjoint()
}

/// exp(-i H t) for Hermitian H.
pub fn unitary_propagator(h: &CMatrix, t: f64) -> CMatrix {
    hermitian_function(h, |e| (-I * e * t).exp())
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)])
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)])
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)])
}

/// |ψ⟩⟨ψ| for a (not necessarily normalized) amplitude vector.
pub fn projector(psi: &[C64]) -> CMatrix {
    let v = DVector::from_column_slice(psi);
    &v * v.adjoint()
}

/// Position quadrature (a + a†)/√2 of an oscillator truncated to `d` levels.
pub fn truncated_oscillator_position(d: usize) -> CMatrix {
    let mut q = CMatrix::zeros(d, d);
    for n in 1..d {
        let v = (n as f64 / 2.0).sqrt();
        q[(n - 1, n)] = c(v, 0.0);
        q[(n, n - 1)] = c(v, 0.0);
    }
    q
}
