//! The serialized result of every effective-form computation.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::cg::SolverSettings;
use crate::forms::{QuadForm2, QuadForm3, CONVENTION};

/// One corrector solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveRecord {
    pub load: String,
    pub iterations: usize,
    pub relative_residual: f64,
    pub energy: f64,
}

/// Regime-1 factorization `Q₀ᵖ = (1/12)·reduce(Q_hom)` with `B* = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regime1Decomposition {
    pub homogenized: QuadForm3,
    pub plane_stress: QuadForm2,
    /// `∫_I x₃ dx₃`, which forces the optimal stretch to vanish.
    pub first_moment: f64,
    /// `∫_I x₃² dx₃`.
    pub second_moment: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub grid: Vec<usize>,
    pub quadrature: String,
    #[serde(default)]
    pub solves: Vec<SolveRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decomposition: Option<Regime1Decomposition>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Settings echoed into every written report.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<String>,
}

/// An effective bending form with the optimal in-plane stretch map and
/// solver diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveReport {
    pub convention: String,
    pub kind: String,
    pub q0: QuadForm2,
    /// Ascending eigenvalues of the Mandel matrix of `q0`.
    pub eigenvalues: Vec<f64>,
    /// Row-major Mandel matrix of `A ↦ B*(A)`.
    pub optimal_b: Vec<Vec<f64>>,
    pub diagnostics: Diagnostics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub settings: Option<RunSettings>,
}

impl EffectiveReport {
    pub fn new(kind: impl Into<String>, q0: QuadForm2, optimal_b: Matrix3<f64>, diagnostics: Diagnostics) -> Self {
        Self {
            convention: CONVENTION.into(),
            kind: kind.into(),
            eigenvalues: q0.eigenvalues().to_vec(),
            q0,
            optimal_b: (0..3).map(|i| (0..3).map(|j| optimal_b[(i, j)] + 0.0).collect()).collect(),
            diagnostics,
            settings: None,
        }
    }

    pub fn optimal_b_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.optimal_b[i][j])
    }
}
