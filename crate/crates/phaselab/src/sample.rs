//! Random test objects drawn from a caller-supplied RNG.
//!
//! Everything here is deterministic given the RNG state, which is what the
//! seeded self-check suites rely on.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{self, ComplexMatrix};

pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Complex Gaussian with unit variance per component.
pub fn complex<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    Complex64::new(normal(rng), normal(rng))
}

pub fn phase<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    Complex64::from_polar(
        1.0,
        rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
    )
}

pub fn matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| complex(rng))
}

pub fn hermitian<R: Rng + ?Sized>(rng: &mut R, n: usize) -> ComplexMatrix {
    let a = matrix(rng, n, n);
    (&a + &a.adjoint()).scale_real(0.5)
}

/// Uniformly distributed unit vector in ℂⁿ.
pub fn unit_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<Complex64> {
    loop {
        let v: Vec<Complex64> = (0..n).map(|_| complex(rng)).collect();
        let nv = linalg::norm(&v);
        if nv > 1e-8 {
            return linalg::scale_vec(&v, Complex64::new(1.0 / nv, 0.0));
        }
    }
}

/// Uniformly distributed point on S².
pub fn unit_real3<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    loop {
        let v = [normal(rng), normal(rng), normal(rng)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-8 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// Uniformly distributed point on S³.
pub fn unit_real4<R: Rng + ?Sized>(rng: &mut R) -> [f64; 4] {
    loop {
        let v = [normal(rng), normal(rng), normal(rng), normal(rng)];
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-8 {
            return v.map(|x| x / n);
        }
    }
}

/// Haar-ish unitary from Gram–Schmidt on a Gaussian matrix.
pub fn unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> ComplexMatrix {
    let mut cols: Vec<Vec<Complex64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v: Vec<Complex64> = (0..n).map(|_| complex(rng)).collect();
        for u in &cols {
            let p = linalg::inner(u, &v);
            v = linalg::sub_vec(&v, &linalg::scale_vec(u, p));
        }
        let nv = linalg::norm(&v);
        if nv > 1e-6 {
            cols.push(linalg::scale_vec(&v, Complex64::new(1.0 / nv, 0.0)));
        }
    }
    ComplexMatrix::from_columns(&cols).expect("square")
}

/// Full-rank random density matrix A A† / tr(A A†).
pub fn density_matrix<R: Rng + ?Sized>(rng: &mut R, n: usize) -> ComplexMatrix {
    let a = matrix(rng, n, n);
    let p = &a * &a.adjoint();
    let tr = p.trace().re;
    p.scale_real(1.0 / tr)
}
