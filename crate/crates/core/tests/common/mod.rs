//! Random admissible materials shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::{DMatrix, Matrix3, Matrix6};
use plate_homog::forms::{MaterialBounds, QuadForm2, QuadForm3};
use rand::Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

/// `R diag(λ) Rᵀ` with `R` from the QR factorization of a uniform random
/// matrix and `λ` uniform in `[lo, hi]`.
fn random_spd(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let q = g.qr().q();
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |_, _| rng.gen_range(lo..=hi)));
    let m = &q * d * q.transpose();
    (&m + m.transpose()) * 0.5
}

pub fn random_form3(rng: &mut impl Rng, bounds: &MaterialBounds) -> QuadForm3 {
    let m = random_spd(rng, 6, bounds.eta1, bounds.eta2);
    QuadForm3::new(Matrix6::from_fn(|i, j| m[(i, j)])).unwrap()
}

pub fn random_form2(rng: &mut impl Rng, lo: f64, hi: f64) -> QuadForm2 {
    let m = random_spd(rng, 3, lo, hi);
    QuadForm2::new(Matrix3::from_fn(|i, j| m[(i, j)])).unwrap()
}

/// Bounds with a little room so that rounding in the generated spectra
/// never trips the class check.
pub fn random_bounds(rng: &mut impl Rng) -> (MaterialBounds, MaterialBounds) {
    let eta1 = rng.gen_range(0.2..2.0);
    let eta2 = eta1 * rng.gen_range(1.5..6.0);
    let declared = MaterialBounds::new(eta1, eta2).unwrap();
    let sampling = MaterialBounds::new(eta1 * (1.0 + 1e-9), eta2 * (1.0 - 1e-9)).unwrap();
    (declared, sampling)
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}
