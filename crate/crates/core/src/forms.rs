//! Symmetric matrices in Mandel coordinates and quadratic forms acting on them.
//!
//! A symmetric 3×3 matrix is stored as the six coordinates
//! `(m11, m22, m33, √2·m23, √2·m13, √2·m12)` and a symmetric 2×2 matrix as
//! `(a11, a22, √2·a12)`. The basis is orthonormal for the Frobenius product, so
//! a quadratic form is just a symmetric matrix in these coordinates, the
//! Euclidean norm of the coordinates is the Frobenius norm of the matrix, and
//! two-sided bounds `η₁|G|² ≤ Q(G) ≤ η₂|G|²` are an eigenvalue interval test.

use std::fmt;

use nalgebra::{Matrix2, Matrix3, Matrix6, SymmetricEigen, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tag written next to every serialized Mandel matrix.
pub const CONVENTION: &str = "mandel-sqrt2";

/// Mandel slots of the in-plane entries 11, 22, 12 of a 3×3 matrix.
pub const IN_PLANE: [usize; 3] = [0, 1, 5];
/// Mandel slots of the out-of-plane entries 33, 23, 13 of a 3×3 matrix.
pub const OUT_OF_PLANE: [usize; 3] = [2, 3, 4];

const SQRT2: f64 = std::f64::consts::SQRT_2;
const FRAC_1_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Symmetric 3×3 matrix in Mandel coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymMat3(pub Vector6<f64>);

impl SymMat3 {
    pub fn new(coords: [f64; 6]) -> Self {
        Self(Vector6::from(coords))
    }

    pub fn zero() -> Self {
        Self(Vector6::zeros())
    }

    pub fn identity() -> Self {
        Self::new([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])
    }

    /// The i-th orthonormal basis element.
    pub fn basis(i: usize) -> Self {
        let mut v = Vector6::zeros();
        v[i] = 1.0;
        Self(v)
    }

    /// Mandel coordinates of `sym G`.
    pub fn encode(g: &Matrix3<f64>) -> Self {
        let s = |i: usize, j: usize| 0.5 * (g[(i, j)] + g[(j, i)]);
        Self::new([
            g[(0, 0)],
            g[(1, 1)],
            g[(2, 2)],
            SQRT2 * s(1, 2),
            SQRT2 * s(0, 2),
            SQRT2 * s(0, 1),
        ])
    }

    pub fn decode(&self) -> Matrix3<f64> {
        let v = &self.0;
        let (m23, m13, m12) = (v[3] * FRAC_1_SQRT2, v[4] * FRAC_1_SQRT2, v[5] * FRAC_1_SQRT2);
        Matrix3::new(v[0], m12, m13, m12, v[1], m23, m13, m23, v[2])
    }

    pub fn coords(&self) -> &Vector6<f64> {
        &self.0
    }

    /// Frobenius norm of the represented matrix.
    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn trace(&self) -> f64 {
        self.0[0] + self.0[1] + self.0[2]
    }

    /// In-plane 2×2 block.
    pub fn in_plane(&self) -> SymMat2 {
        SymMat2(Vector3::new(self.0[0], self.0[1], self.0[5]))
    }

    /// Mandel coordinates of `sym(d ⊗ e₃ + e₃ ⊗ d)`, the out-of-plane
    /// directions reached by the third row and column.
    pub fn third_column(d: &Vector3<f64>) -> Self {
        Self::new([0.0, 0.0, 2.0 * d[2], SQRT2 * d[1], SQRT2 * d[0], 0.0])
    }
}

impl std::ops::Add for SymMat3 {
    type Output = SymMat3;
    fn add(self, rhs: Self) -> Self {
        Self(self.0 + rhs.0)
    }
}

impl std::ops::Mul<SymMat3> for f64 {
    type Output = SymMat3;
    fn mul(self, rhs: SymMat3) -> SymMat3 {
        SymMat3(rhs.0 * self)
    }
}

/// Mandel coordinates of the symmetric part of a full 3×3 matrix.
pub fn mandel_encode(g: &Matrix3<f64>) -> SymMat3 {
    SymMat3::encode(g)
}

/// Symmetric 2×2 matrix in Mandel coordinates `(a11, a22, √2·a12)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymMat2(pub Vector3<f64>);

impl SymMat2 {
    pub fn new(coords: [f64; 3]) -> Self {
        Self(Vector3::from(coords))
    }

    pub fn zero() -> Self {
        Self(Vector3::zeros())
    }

    pub fn identity() -> Self {
        Self::new([1.0, 1.0, 0.0])
    }

    pub fn basis(i: usize) -> Self {
        let mut v = Vector3::zeros();
        v[i] = 1.0;
        Self(v)
    }

    pub fn encode(a: &Matrix2<f64>) -> Self {
        Self::new([a[(0, 0)], a[(1, 1)], FRAC_1_SQRT2 * (a[(0, 1)] + a[(1, 0)])])
    }

    pub fn decode(&self) -> Matrix2<f64> {
        let off = self.0[2] * FRAC_1_SQRT2;
        Matrix2::new(self.0[0], off, off, self.0[1])
    }

    pub fn coords(&self) -> &Vector3<f64> {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn trace(&self) -> f64 {
        self.0[0] + self.0[1]
    }

    /// The embedding ι of a 2×2 matrix into the upper-left block of a 3×3 one.
    pub fn embed(&self) -> SymMat3 {
        SymMat3::new([self.0[0], self.0[1], 0.0, 0.0, 0.0, self.0[2]])
    }
}

impl std::ops::Add for SymMat2 {
    type Output = SymMat2;
    fn add(self, rhs: Self) -> Self {
        Self(self.0 + rhs.0)
    }
}

impl std::ops::Mul<SymMat2> for f64 {
    type Output = SymMat2;
    fn mul(self, rhs: SymMat2) -> SymMat2 {
        SymMat2(rhs.0 * self)
    }
}

/// Declared material constants `0 < η₁ ≤ η₂`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialBounds {
    pub eta1: f64,
    pub eta2: f64,
}

impl MaterialBounds {
    pub fn new(eta1: f64, eta2: f64) -> Result<Self> {
        if !(eta1 > 0.0 && eta1.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "eta1 must be positive (non degeneracy), got {eta1}"
            )));
        }
        if !(eta2 >= eta1 && eta2.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "eta2 must satisfy eta1 <= eta2 < inf, got eta1={eta1}, eta2={eta2}"
            )));
        }
        Ok(Self { eta1, eta2 })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundSide {
    Lower,
    Upper,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundViolation {
    /// Position of the eigenvalue in ascending order.
    pub index: usize,
    pub eigenvalue: f64,
    pub side: BoundSide,
    pub bound: f64,
}

impl fmt::Display for BoundViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cmp = match self.side {
            BoundSide::Lower => "<",
            BoundSide::Upper => ">",
        };
        write!(
            f,
            "eigenvalue #{} = {} {} {:?} bound {}",
            self.index, self.eigenvalue, cmp, self.side, self.bound
        )
    }
}

/// Outcome of checking a form against `η₁|G|² ≤ Q(G) ≤ η₂|G|²`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassReport {
    pub passed: bool,
    pub eigenvalues: Vec<f64>,
    pub violations: Vec<BoundViolation>,
    /// Number of sample pairs on which the Lipschitz-type estimate
    /// `|Q(G₁) − Q(G₂)| ≤ η₂|G₁ − G₂||G₁ + G₂|` was evaluated.
    pub lipschitz_samples: usize,
    pub lipschitz_ok: bool,
}

impl ClassReport {
    /// Converts a failed report into an admissibility error for `sample`.
    pub fn into_result(self, sample: usize) -> Result<()> {
        if self.passed {
            return Ok(());
        }
        let detail = self
            .violations
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("; ");
        Err(Error::Admissibility { sample, detail })
    }
}

/// Relative slack on the eigenvalue interval test.
const CLASS_SLACK: f64 = 1e-12;

fn class_report(mut eigenvalues: Vec<f64>, bounds: &MaterialBounds, lipschitz: (usize, bool)) -> ClassReport {
    eigenvalues.sort_by(|a, b| a.total_cmp(b));
    let slack = CLASS_SLACK * bounds.eta2;
    let mut violations = Vec::new();
    for (index, &eigenvalue) in eigenvalues.iter().enumerate() {
        if eigenvalue < bounds.eta1 - slack || eigenvalue.is_nan() {
            violations.push(BoundViolation { index, eigenvalue, side: BoundSide::Lower, bound: bounds.eta1 });
        } else if eigenvalue > bounds.eta2 + slack {
            violations.push(BoundViolation { index, eigenvalue, side: BoundSide::Upper, bound: bounds.eta2 });
        }
    }
    ClassReport {
        passed: violations.is_empty(),
        eigenvalues,
        violations,
        lipschitz_samples: lipschitz.0,
        lipschitz_ok: lipschitz.1,
    }
}

/// Deterministic, well spread sample coordinates in [-1/2, 1/2).
fn sample_coords<const N: usize>(k: usize) -> [f64; N] {
    let mut out = [0.0; N];
    for (i, c) in out.iter_mut().enumerate() {
        let t = ((k * N + i + 1) as f64 * 0.618_033_988_749_894_9).fract();
        *c = t - 0.5;
    }
    out
}

fn check_symmetric(rows: usize, get: impl Fn(usize, usize) -> f64) -> Result<()> {
    let mut scale = 0.0f64;
    for i in 0..rows {
        for j in 0..rows {
            let v = get(i, j);
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("non-finite matrix entry ({i},{j})")));
            }
            scale = scale.max(v.abs());
        }
    }
    for i in 0..rows {
        for j in 0..i {
            if (get(i, j) - get(j, i)).abs() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
                return Err(Error::InvalidInput(format!(
                    "Mandel matrix is not symmetric at ({i},{j}): {} vs {}",
                    get(i, j),
                    get(j, i)
                )));
            }
        }
    }
    Ok(())
}

fn rows_to_array<const N: usize>(rows: &[Vec<f64>]) -> Result<[[f64; N]; N]> {
    if rows.len() != N || rows.iter().any(|r| r.len() != N) {
        return Err(Error::InvalidInput(format!("expected a {N}x{N} Mandel matrix")));
    }
    let mut out = [[0.0; N]; N];
    for (i, r) in rows.iter().enumerate() {
        out[i].copy_from_slice(r);
    }
    Ok(out)
}

/// Quadratic form on symmetric 3×3 matrices, `Q(G) = gᵀ C g` with `g` the
/// Mandel vector of `sym G`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FormJson", into = "FormJson")]
pub struct QuadForm3 {
    matrix: Matrix6<f64>,
    label: Option<String>,
}

impl QuadForm3 {
    /// Accepts a matrix that is symmetric to machine precision and stores
    /// its exact symmetric part.
    pub fn new(matrix: Matrix6<f64>) -> Result<Self> {
        check_symmetric(6, |i, j| matrix[(i, j)])?;
        Ok(Self { matrix: (matrix + matrix.transpose()) * 0.5, label: None })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let a = rows_to_array::<6>(rows)?;
        Self::new(Matrix6::from_fn(|i, j| a[i][j]))
    }

    pub fn zero() -> Self {
        Self { matrix: Matrix6::zeros(), label: None }
    }

    /// `2μ|sym G|² + λ (tr G)²`.
    pub fn isotropic(mu: f64, lambda: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::InvalidInput(format!("shear modulus must be positive, got {mu}")));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("Lamé parameter must be non-negative, got {lambda}")));
        }
        let mut m = Matrix6::identity() * (2.0 * mu);
        for i in 0..3 {
            for j in 0..3 {
                m[(i, j)] += lambda;
            }
        }
        Ok(Self { matrix: m, label: Some(format!("isotropic(mu={mu}, lambda={lambda})")) })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn matrix(&self) -> &Matrix6<f64> {
        &self.matrix
    }

    pub fn eval(&self, g: &SymMat3) -> f64 {
        g.0.dot(&(self.matrix * g.0))
    }

    /// Evaluates at a full 3×3 matrix; only its symmetric part is seen.
    pub fn eval_matrix(&self, g: &Matrix3<f64>) -> f64 {
        self.eval(&SymMat3::encode(g))
    }

    pub fn bilinear(&self, a: &SymMat3, b: &SymMat3) -> f64 {
        a.0.dot(&(self.matrix * b.0))
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { matrix: self.matrix * c, label: None }
    }

    /// Eigenvalues of the Mandel matrix in ascending order.
    pub fn eigenvalues(&self) -> [f64; 6] {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.matrix).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev.try_into().unwrap()
    }

    /// Checks `η₁|G|² ≤ Q(G) ≤ η₂|G|²` through the Mandel eigenvalues and
    /// samples the Lipschitz-type estimate it implies.
    pub fn check_class(&self, bounds: &MaterialBounds) -> ClassReport {
        let samples = 32;
        let mut ok = true;
        for k in 0..samples {
            let g1 = SymMat3::new(sample_coords::<6>(2 * k));
            let g2 = SymMat3::new(sample_coords::<6>(2 * k + 1));
            let lhs = (self.eval(&g1) - self.eval(&g2)).abs();
            let rhs = bounds.eta2 * (g1.0 - g2.0).norm() * (g1.0 + g2.0).norm();
            ok &= lhs <= rhs * (1.0 + 1e-12) + 1e-14;
        }
        class_report(self.eigenvalues().to_vec(), bounds, (samples, ok))
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..6).map(|i| (0..6).map(|j| self.matrix[(i, j)]).collect()).collect()
    }
}

/// Quadratic form on symmetric 2×2 matrices in Mandel coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FormJson", into = "FormJson")]
pub struct QuadForm2 {
    matrix: Matrix3<f64>,
    label: Option<String>,
}

impl QuadForm2 {
    pub fn new(matrix: Matrix3<f64>) -> Result<Self> {
        check_symmetric(3, |i, j| matrix[(i, j)])?;
        Ok(Self { matrix: (matrix + matrix.transpose()) * 0.5, label: None })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let a = rows_to_array::<3>(rows)?;
        Self::new(Matrix3::from_fn(|i, j| a[i][j]))
    }

    /// `c·|sym A|²`.
    pub fn scalar(c: f64) -> Self {
        Self { matrix: Matrix3::identity() * c, label: None }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.matrix
    }

    pub fn eval(&self, a: &SymMat2) -> f64 {
        a.0.dot(&(self.matrix * a.0))
    }

    pub fn eval_matrix(&self, a: &Matrix2<f64>) -> f64 {
        self.eval(&SymMat2::encode(a))
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { matrix: self.matrix * c, label: None }
    }

    pub fn eigenvalues(&self) -> [f64; 3] {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.matrix).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev.try_into().unwrap()
    }

    pub fn check_class(&self, bounds: &MaterialBounds) -> ClassReport {
        let samples = 32;
        let mut ok = true;
        for k in 0..samples {
            let a1 = SymMat2::new(sample_coords::<3>(2 * k));
            let a2 = SymMat2::new(sample_coords::<3>(2 * k + 1));
            let lhs = (self.eval(&a1) - self.eval(&a2)).abs();
            let rhs = bounds.eta2 * (a1.0 - a2.0).norm() * (a1.0 + a2.0).norm();
            ok &= lhs <= rhs * (1.0 + 1e-12) + 1e-14;
        }
        class_report(self.eigenvalues().to_vec(), bounds, (samples, ok))
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..3).map(|i| (0..3).map(|j| self.matrix[(i, j)]).collect()).collect()
    }
}

/// Wire format shared by both form types.
#[derive(Serialize, Deserialize)]
struct FormJson {
    convention: String,
    matrix: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

fn check_convention(tag: &str) -> Result<()> {
    if tag != CONVENTION {
        return Err(Error::InvalidInput(format!("expected convention {CONVENTION:?}, found {tag:?}")));
    }
    Ok(())
}

impl TryFrom<FormJson> for QuadForm3 {
    type Error = Error;
    fn try_from(w: FormJson) -> Result<Self> {
        check_convention(&w.convention)?;
        let mut q = Self::from_rows(&w.matrix)?;
        q.label = w.label;
        Ok(q)
    }
}

impl From<QuadForm3> for FormJson {
    fn from(q: QuadForm3) -> Self {
        FormJson { convention: CONVENTION.into(), matrix: q.rows(), label: q.label }
    }
}

impl TryFrom<FormJson> for QuadForm2 {
    type Error = Error;
    fn try_from(w: FormJson) -> Result<Self> {
        check_convention(&w.convention)?;
        let mut q = Self::from_rows(&w.matrix)?;
        q.label = w.label;
        Ok(q)
    }
}

impl From<QuadForm2> for FormJson {
    fn from(q: QuadForm2) -> Self {
        FormJson { convention: CONVENTION.into(), matrix: q.rows(), label: q.label }
    }
}
