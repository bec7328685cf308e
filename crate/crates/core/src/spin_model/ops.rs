//! Dense spin operators.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;

/// Spin-j operators (S+, S-, Sz) in the basis m = j, j-1, ..., -j.
pub fn spin_matrices(j: f64) -> (CMatrix, CMatrix, CMatrix) {
    let dim = (2.0 * j).round() as usize + 1;
    let m = |k: usize| j - k as f64;
    let mut sp = CMatrix::zeros(dim, dim);
    let mut sz = CMatrix::zeros(dim, dim);
    for k in 0..dim {
        sz[(k, k)] = Complex64::new(m(k), 0.0);
        if k > 0 {
            // <m+1| S+ |m>
            let mk = m(k);
            sp[(k - 1, k)] = Complex64::new((j * (j + 1.0) - mk * (mk + 1.0)).sqrt(), 0.0);
        }
    }
    let sm = sp.adjoint();
    (sp, sm, sz)
}

/// Cartesian operators (Sx, Sy, Sz).
pub fn cartesian(j: f64) -> [CMatrix; 3] {
    let (sp, sm, sz) = spin_matrices(j);
    let half = Complex64::new(0.5, 0.0);
    let sx = (&sp + &sm) * half;
    let sy = (&sp - &sm) * Complex64::new(0.0, -0.5);
    [sx, sy, sz]
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn identity(dim: usize) -> CMatrix {
    CMatrix::identity(dim, dim)
}

/// Largest absolute deviation from Hermiticity relative to the largest entry.
pub fn hermiticity_error(h: &CMatrix) -> f64 {
    let scale = h.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    (h - h.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max) / scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn commutation_relations() {
        for j in [0.5, 1.0, 1.5] {
            let [sx, sy, sz] = cartesian(j);
            let i = Complex64::new(0.0, 1.0);
            let lhs = &sx * &sy - &sy * &sx;
            assert!((lhs - sz.clone() * i).norm() < 1e-12);
            let casimir = &sx * &sx + &sy * &sy + &sz * &sz;
            let dim = sz.nrows();
            let expected = identity(dim) * Complex64::new(j * (j + 1.0), 0.0);
            assert!((casimir - expected).norm() < 1e-12);
        }
    }
}
