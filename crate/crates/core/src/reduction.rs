//! Thickness-direction reduction: plane-stress elimination of the third row
//! and column, the moment form of the bending energy, and the oscillating
//! laminate experiment.

use nalgebra::{Cholesky, Matrix3, Vector3};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forms::{MaterialBounds, QuadForm2, QuadForm3, SymMat2, IN_PLANE, OUT_OF_PLANE};
use crate::quadrature::gauss_legendre_on;

/// In-plane block `P`, coupling `T` (in-plane rows, out-of-plane columns) and
/// out-of-plane block `S` of a Mandel matrix.
pub(crate) fn split_blocks(q: &QuadForm3) -> (Matrix3<f64>, Matrix3<f64>, Matrix3<f64>) {
    let c = q.matrix();
    let p = Matrix3::from_fn(|i, j| c[(IN_PLANE[i], IN_PLANE[j])]);
    let t = Matrix3::from_fn(|i, j| c[(IN_PLANE[i], OUT_OF_PLANE[j])]);
    let s = Matrix3::from_fn(|i, j| c[(OUT_OF_PLANE[i], OUT_OF_PLANE[j])]);
    (p, t, s)
}

pub(crate) fn symmetrize(m: Matrix3<f64>) -> Matrix3<f64> {
    (m + m.transpose()) * 0.5
}

/// Plane-stress reduced form and its linear minimizer.
#[derive(Clone, Debug)]
pub struct PlaneStressReduction {
    pub form: QuadForm2,
    /// Maps the Mandel vector of `A` to the optimal out-of-plane Mandel
    /// coordinates `(g33, √2·g23, √2·g13)`.
    out_of_plane: Matrix3<f64>,
}

impl PlaneStressReduction {
    pub fn out_of_plane_map(&self) -> &Matrix3<f64> {
        &self.out_of_plane
    }

    /// Optimal `d` in `ι(A) + d⊗e₃ + e₃⊗d`.
    pub fn d_star(&self, a: &SymMat2) -> Vector3<f64> {
        let w = self.out_of_plane * a.0;
        let r = std::f64::consts::FRAC_1_SQRT_2;
        Vector3::new(w[2] * r, w[1] * r, 0.5 * w[0])
    }
}

/// `A ↦ min_d Q(ι(A) + d⊗e₃ + e₃⊗d)`, the Schur complement of the
/// out-of-plane block.
pub fn plane_stress_reduce(q3: &QuadForm3) -> Result<PlaneStressReduction> {
    let (p, t, s) = split_blocks(q3);
    let chol = Cholesky::new(s).ok_or_else(|| {
        Error::Degenerate("out-of-plane block of the material form is not positive definite".into())
    })?;
    let x = chol.solve(&t.transpose());
    let reduced = symmetrize(p - t * x);
    Ok(PlaneStressReduction { form: QuadForm2::new(reduced)?, out_of_plane: -x })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingRule {
    /// Piecewise constant layers, integrated exactly.
    Layers,
    /// Uniform grid sampled at cell midpoints.
    Midpoint,
    /// Gauss–Legendre nodes on `[-1/2, 1/2]`.
    Gauss,
}

/// A quadratic-form valued function of the thickness variable `x₃ ∈ [-1/2, 1/2]`.
#[derive(Clone, Debug)]
pub struct ThicknessProfile {
    rule: SamplingRule,
    /// Layer interfaces; only used for [`SamplingRule::Layers`].
    breaks: Vec<f64>,
    positions: Vec<f64>,
    weights: Vec<f64>,
    forms: Vec<QuadForm2>,
}

const HALF: f64 = 0.5;

impl ThicknessProfile {
    pub fn constant(form: QuadForm2) -> Self {
        Self {
            rule: SamplingRule::Layers,
            breaks: vec![-HALF, HALF],
            positions: vec![0.0],
            weights: vec![1.0],
            forms: vec![form],
        }
    }

    /// Piecewise constant profile; `breaks` must increase strictly from
    /// `-1/2` to `1/2` and there is one form per layer.
    pub fn layers(breaks: Vec<f64>, forms: Vec<QuadForm2>) -> Result<Self> {
        if forms.is_empty() || breaks.len() != forms.len() + 1 {
            return Err(Error::InvalidInput(format!(
                "{} layer forms need {} breakpoints, got {}",
                forms.len(),
                forms.len() + 1,
                breaks.len()
            )));
        }
        if (breaks[0] + HALF).abs() > 1e-12 || (breaks[breaks.len() - 1] - HALF).abs() > 1e-12 {
            return Err(Error::InvalidInput("layer breakpoints must span [-1/2, 1/2]".into()));
        }
        if breaks.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("layer breakpoints must increase strictly".into()));
        }
        let mut breaks = breaks;
        let last = breaks.len() - 1;
        breaks[0] = -HALF;
        breaks[last] = HALF;
        let positions = breaks.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let weights = breaks.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(Self { rule: SamplingRule::Layers, breaks, positions, weights, forms })
    }

    /// Samples at the midpoints of a uniform grid.
    pub fn midpoint(forms: Vec<QuadForm2>) -> Result<Self> {
        let n = forms.len();
        if n == 0 {
            return Err(Error::InvalidInput("profile needs at least one sample".into()));
        }
        let h = 1.0 / n as f64;
        Ok(Self {
            rule: SamplingRule::Midpoint,
            breaks: Vec::new(),
            positions: (0..n).map(|i| -HALF + (i as f64 + 0.5) * h).collect(),
            weights: vec![h; n],
            forms,
        })
    }

    /// Samples at the Gauss–Legendre nodes of order `forms.len()`.
    pub fn gauss(forms: Vec<QuadForm2>) -> Result<Self> {
        if forms.is_empty() {
            return Err(Error::InvalidInput("profile needs at least one sample".into()));
        }
        let (positions, weights) = gauss_legendre_on(forms.len(), -HALF, HALF);
        Ok(Self { rule: SamplingRule::Gauss, breaks: Vec::new(), positions, weights, forms })
    }

    /// Samples a smooth profile at Gauss–Legendre nodes of the given order.
    pub fn gauss_from_fn(order: usize, f: impl Fn(f64) -> QuadForm2) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidInput("quadrature order must be positive".into()));
        }
        let (positions, weights) = gauss_legendre_on(order, -HALF, HALF);
        let forms = positions.iter().map(|&x| f(x)).collect();
        Ok(Self { rule: SamplingRule::Gauss, breaks: Vec::new(), positions, weights, forms })
    }

    /// Builds a profile from 3D material forms by plane-stress reduction of
    /// every sample.
    pub fn from_3d(rule: SamplingRule, breaks: Option<Vec<f64>>, forms: &[QuadForm3]) -> Result<Self> {
        let reduced = forms
            .iter()
            .map(|q| plane_stress_reduce(q).map(|r| r.form))
            .collect::<Result<Vec<_>>>()?;
        match rule {
            SamplingRule::Layers => {
                let breaks = breaks.ok_or_else(|| Error::InvalidInput("layers need breakpoints".into()))?;
                Self::layers(breaks, reduced)
            }
            SamplingRule::Midpoint => Self::midpoint(reduced),
            SamplingRule::Gauss => Self::gauss(reduced),
        }
    }

    pub fn rule(&self) -> SamplingRule {
        self.rule
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn forms(&self) -> &[QuadForm2] {
        &self.forms
    }

    /// `(position, weight, form)` per sample; layers report their midpoint
    /// and thickness.
    pub fn samples(&self) -> impl Iterator<Item = (f64, f64, &QuadForm2)> {
        self.positions.iter().zip(&self.weights).zip(&self.forms).map(|((&x, &w), f)| (x, w, f))
    }

    pub fn check_class(&self, bounds: &MaterialBounds) -> Result<()> {
        for (i, f) in self.forms.iter().enumerate() {
            f.check_class(bounds).into_result(i)?;
        }
        Ok(())
    }

    /// `∫_I Q₂(x₃, B + x₃A) dx₃`, evaluated sample by sample.
    pub fn energy(&self, a: &SymMat2, b: &SymMat2) -> f64 {
        match self.rule {
            SamplingRule::Layers => self
                .breaks
                .windows(2)
                .zip(&self.forms)
                .map(|(w, f)| {
                    let (lo, hi) = (w[0], w[1]);
                    let c = f.matrix();
                    let bb = b.0.dot(&(c * b.0));
                    let ab = a.0.dot(&(c * b.0));
                    let aa = a.0.dot(&(c * a.0));
                    bb * (hi - lo) + ab * (hi * hi - lo * lo) + aa * (hi.powi(3) - lo.powi(3)) / 3.0
                })
                .sum(),
            _ => self.samples().map(|(x, w, f)| w * f.eval(&(*b + x * *a))).sum(),
        }
    }
}

/// Zeroth, first and second thickness moments of a profile.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentTriple {
    pub m0: Matrix3<f64>,
    pub m1: Matrix3<f64>,
    pub m2: Matrix3<f64>,
}

/// `M_k = ∫_I x₃ᵏ C(x₃) dx₃` for `k = 0, 1, 2`.
pub fn moment_matrices(profile: &ThicknessProfile) -> MomentTriple {
    let mut m = MomentTriple { m0: Matrix3::zeros(), m1: Matrix3::zeros(), m2: Matrix3::zeros() };
    match profile.rule {
        SamplingRule::Layers => {
            for (w, f) in profile.breaks.windows(2).zip(&profile.forms) {
                let (lo, hi) = (w[0], w[1]);
                let c = f.matrix();
                m.m0 += c * (hi - lo);
                m.m1 += c * ((hi * hi - lo * lo) / 2.0);
                m.m2 += c * ((hi.powi(3) - lo.powi(3)) / 3.0);
            }
        }
        _ => {
            for (x, w, f) in profile.samples() {
                let c = f.matrix();
                m.m0 += c * w;
                m.m1 += c * (w * x);
                m.m2 += c * (w * x * x);
            }
        }
    }
    m
}

/// Effective bending form together with the optimal in-plane stretch.
#[derive(Clone, Debug)]
pub struct BendingForm {
    pub form: QuadForm2,
    /// `B*(A) = optimal_b · A` in Mandel coordinates.
    pub optimal_b: Matrix3<f64>,
    pub moments: MomentTriple,
}

impl BendingForm {
    pub fn optimal_b(&self, a: &SymMat2) -> SymMat2 {
        SymMat2(self.optimal_b * a.0)
    }
}

/// `Q₀(A) = min_B ∫_I Q₂(x₃, B + x₃A) dx₃ = Aᵀ(M₂ − M₁ᵀM₀⁻¹M₁)A`.
pub fn bending_form(profile: &ThicknessProfile) -> Result<BendingForm> {
    let moments = moment_matrices(profile);
    let chol = Cholesky::new(moments.m0)
        .ok_or_else(|| Error::Degenerate("zeroth thickness moment is not positive definite".into()))?;
    let x = chol.solve(&moments.m1);
    let q0 = symmetrize(moments.m2 - moments.m1.transpose() * x);
    Ok(BendingForm { form: QuadForm2::new(q0)?, optimal_b: -x, moments })
}

/// A 1-periodic layered profile on `[0, 1)`.
#[derive(Clone, Debug)]
pub struct PeriodicProfile {
    breaks: Vec<f64>,
    forms: Vec<QuadForm2>,
}

impl PeriodicProfile {
    pub fn new(breaks: Vec<f64>, forms: Vec<QuadForm2>) -> Result<Self> {
        if forms.is_empty() || breaks.len() != forms.len() + 1 {
            return Err(Error::InvalidInput("periodic profile needs one more breakpoint than forms".into()));
        }
        if breaks[0].abs() > 1e-12 || (breaks[breaks.len() - 1] - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput("periodic breakpoints must span [0, 1]".into()));
        }
        if breaks.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("periodic breakpoints must increase strictly".into()));
        }
        Ok(Self { breaks, forms })
    }

    /// Equal-width phases.
    pub fn uniform(forms: Vec<QuadForm2>) -> Result<Self> {
        let n = forms.len();
        Self::new((0..=n).map(|i| i as f64 / n as f64).collect(), forms)
    }

    pub fn forms(&self) -> &[QuadForm2] {
        &self.forms
    }

    /// Cell average of the coefficients.
    pub fn mean(&self) -> QuadForm2 {
        let m = self
            .breaks
            .windows(2)
            .zip(&self.forms)
            .fold(Matrix3::zeros(), |acc, (w, f)| acc + f.matrix() * (w[1] - w[0]));
        QuadForm2::new(m).expect("average of symmetric matrices")
    }

    fn phase_at(&self, t: f64) -> usize {
        let frac = t - t.floor();
        let j = self.breaks.partition_point(|&b| b <= frac);
        j.saturating_sub(1).min(self.forms.len() - 1)
    }

    /// The layered profile `x₃ ↦ C(n·x₃)` on `[-1/2, 1/2]`.
    pub fn oscillated(&self, n: usize) -> Result<ThicknessProfile> {
        if n == 0 {
            return Err(Error::InvalidInput("period count must be at least 1".into()));
        }
        let nf = n as f64;
        let mut cuts = vec![-HALF, HALF];
        let (k0, k1) = ((-nf / 2.0).floor() as i64 - 1, (nf / 2.0).ceil() as i64 + 1);
        for k in k0..=k1 {
            for b in &self.breaks {
                let x = (k as f64 + b) / nf;
                if x > -HALF && x < HALF {
                    cuts.push(x);
                }
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        let forms = cuts
            .windows(2)
            .map(|w| self.forms[self.phase_at(nf * 0.5 * (w[0] + w[1]))].clone())
            .collect();
        ThicknessProfile::layers(cuts, forms)
    }
}

/// Bending form of the thickness profile `x₃ ↦ C(n·x₃)`.
pub fn oscillation_experiment(base: &PeriodicProfile, n: usize) -> Result<BendingForm> {
    bending_form(&base.oscillated(n)?)
}

#[derive(Clone, Debug, Serialize)]
pub struct OscillationRow {
    pub periods: usize,
    pub q0: QuadForm2,
    /// Frobenius distance to the bending form of the averaged profile.
    pub distance: f64,
}

/// Runs the oscillation experiment for each period count and compares with
/// the bending form of the averaged coefficients.
pub fn oscillation_table(base: &PeriodicProfile, periods: &[usize]) -> Result<(QuadForm2, Vec<OscillationRow>)> {
    let limit = bending_form(&ThicknessProfile::constant(base.mean()))?.form;
    let rows = periods
        .iter()
        .map(|&n| {
            let q0 = oscillation_experiment(base, n)?.form;
            let distance = (q0.matrix() - limit.matrix()).norm();
            Ok(OscillationRow { periods: n, q0, distance })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((limit, rows))
}
