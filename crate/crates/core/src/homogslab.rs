//! Thickness-comparable regime: through-thickness period fine compared with
//! the plate, in-plane period comparable with the thickness.
//!
//! The fast thickness oscillation is relaxed first, fiber by fiber, by a
//! zero-mean third column `d(y₃)` ([`fiber_reduce`]). What is left is a
//! corrector problem on the slab `I × Y²`, periodic in-plane and free at
//! `x₃ = ±1/2`, loaded by in-plane stretches `ι(B)` and bending strains
//! `x₃ ι(A)`. The effective bending form is the Schur complement of the
//! stretch block of the resulting 6×6 form on `(A, B)`.

use nalgebra::{Cholesky, Matrix3, Matrix6, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cg::{SolveStats, SolverSettings};
use crate::error::{Error, Result};
use crate::fem::{Axis, Elasticity, Load, Mesh, Order};
use crate::forms::{MaterialBounds, QuadForm3, SymMat2, SymMat3, IN_PLANE, OUT_OF_PLANE};
use crate::homog3d::solve_load;
use crate::reduction::{split_blocks, symmetrize};
use crate::report::{Diagnostics, EffectiveReport, SolveRecord};

/// Piecewise constant material along the fast thickness variable `y₃ ∈ [0, 1)`.
#[derive(Clone, Debug)]
pub struct FiberMaterial {
    forms: Vec<QuadForm3>,
    /// Volume fraction of each sample; sums to one.
    weights: Vec<f64>,
}

impl FiberMaterial {
    /// Equal-width samples.
    pub fn uniform(forms: Vec<QuadForm3>) -> Result<Self> {
        if forms.is_empty() {
            return Err(Error::InvalidInput("fiber needs at least one sample".into()));
        }
        let w = 1.0 / forms.len() as f64;
        Ok(Self { weights: vec![w; forms.len()], forms })
    }

    /// Layers between `breaks`, which increase strictly from 0 to 1.
    pub fn layers(breaks: &[f64], forms: Vec<QuadForm3>) -> Result<Self> {
        if forms.is_empty() || breaks.len() != forms.len() + 1 {
            return Err(Error::InvalidInput("fiber layers need one more breakpoint than forms".into()));
        }
        if breaks[0].abs() > 1e-12 || (breaks[breaks.len() - 1] - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput("fiber breakpoints must span [0, 1]".into()));
        }
        if breaks.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("fiber breakpoints must increase strictly".into()));
        }
        Ok(Self { weights: breaks.windows(2).map(|w| w[1] - w[0]).collect(), forms })
    }

    pub fn constant(form: QuadForm3) -> Self {
        Self { forms: vec![form], weights: vec![1.0] }
    }

    pub fn forms(&self) -> &[QuadForm3] {
        &self.forms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn check_class(&self, bounds: &MaterialBounds) -> Result<()> {
        for (i, f) in self.forms.iter().enumerate() {
            f.check_class(bounds).into_result(i)?;
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { forms: self.forms.iter().map(|f| f.scaled(c)).collect(), weights: self.weights.clone() }
    }

    /// Fraction-weighted average of the samples.
    pub fn mean(&self) -> QuadForm3 {
        let m = self.forms.iter().zip(&self.weights).fold(Matrix6::zeros(), |acc, (f, w)| acc + f.matrix() * *w);
        QuadForm3::new(m).expect("mean of symmetric matrices")
    }
}

/// `M ↦ min { ∫_{Y¹} Q(y₃, M + d⊗e₃ + e₃⊗d) dy₃ : ∫ d = 0 }`.
///
/// With blocks `P` (in-plane), `T` (coupling) and `S` (out-of-plane) the
/// optimal out-of-plane strain is `S⁻¹(κ − Tᵀm_p)` where the multiplier
/// `κ = ⟨S⁻¹⟩⁻¹(m_o + ⟨S⁻¹Tᵀ⟩m_p)` enforces the mean constraint.
pub fn fiber_reduce(fiber: &FiberMaterial) -> Result<QuadForm3> {
    let mut p_mean = Matrix3::zeros();
    let mut s_inv_mean = Matrix3::zeros();
    let mut s_inv_t = Matrix3::zeros();
    let mut t_s_inv_t = Matrix3::zeros();
    for (i, (form, &w)) in fiber.forms.iter().zip(&fiber.weights).enumerate() {
        let (p, t, s) = split_blocks(form);
        let chol = Cholesky::new(s).ok_or_else(|| {
            Error::Degenerate(format!("out-of-plane block of fiber sample {i} is not positive definite"))
        })?;
        let s_inv = chol.inverse();
        let k = chol.solve(&t.transpose());
        p_mean += p * w;
        s_inv_mean += s_inv * w;
        s_inv_t += k * w;
        t_s_inv_t += t * k * w;
    }
    let h = Cholesky::new(symmetrize(s_inv_mean))
        .ok_or_else(|| Error::Degenerate("averaged out-of-plane compliance is singular".into()))?
        .inverse();
    let h = symmetrize(h);
    let pp = symmetrize(p_mean - t_s_inv_t + s_inv_t.transpose() * h * s_inv_t);
    let po = s_inv_t.transpose() * h;

    let mut m = Matrix6::zeros();
    for i in 0..3 {
        for j in 0..3 {
            m[(IN_PLANE[i], IN_PLANE[j])] = pp[(i, j)];
            m[(IN_PLANE[i], OUT_OF_PLANE[j])] = po[(i, j)];
            m[(OUT_OF_PLANE[j], IN_PLANE[i])] = po[(i, j)];
            m[(OUT_OF_PLANE[i], OUT_OF_PLANE[j])] = h[(i, j)];
        }
    }
    QuadForm3::new(m)
}

/// Closed form of the fiber reduction for `λ₁λ₂(y₃)·2μ|sym G|²` with equal
/// fiber samples: arithmetic mean of `λ₂` on the in-plane entries, harmonic
/// mean on 13, 23 (with the half weight of the symmetric part) and 33.
pub fn example_reduced_form(lambda1: f64, lambda2: &[f64], mu: f64) -> Result<QuadForm3> {
    if lambda2.is_empty() {
        return Err(Error::InvalidInput("lambda2 needs at least one sample".into()));
    }
    if !(lambda1 > 0.0) || !(mu > 0.0) || lambda2.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::InvalidInput("lambda1, lambda2 samples and mu must be positive".into()));
    }
    let n = lambda2.len() as f64;
    let mean = lambda2.iter().sum::<f64>() / n;
    let harmonic = n / lambda2.iter().map(|l| 1.0 / l).sum::<f64>();
    // Energy of a full 3×3 strain, written entry by entry.
    let energy = |g: &nalgebra::Matrix3<f64>| {
        let s = (g + g.transpose()) * 0.5;
        let in_plane = s[(0, 0)].powi(2) + s[(1, 1)].powi(2) + 2.0 * s[(0, 1)].powi(2);
        let (a13, a23) = (2.0 * s[(0, 2)], 2.0 * s[(1, 2)]);
        let out = 0.5 * a13 * a13 + 0.5 * a23 * a23 + s[(2, 2)].powi(2);
        lambda1 * 2.0 * mu * (mean * in_plane + harmonic * out)
    };
    // polarization on the Mandel basis
    let mut m = Matrix6::zeros();
    for i in 0..6 {
        for j in 0..6 {
            let ei = SymMat3::basis(i).decode();
            let ej = SymMat3::basis(j).decode();
            m[(i, j)] = 0.25 * (energy(&(ei + ej)) - energy(&(ei - ej)));
        }
    }
    Ok(QuadForm3::new(m)?.with_label("example closed form"))
}

/// Material on the slab `I × Y²`, one fiber per slab cell.
#[derive(Clone, Debug)]
pub struct SlabMaterial {
    x3_cells: usize,
    inplane: [usize; 2],
    fibers: Vec<FiberMaterial>,
    /// Fiber index of each slab cell, ordered `(x₃, y₁, y₂)` with `y₂` fastest.
    cell_fiber: Vec<usize>,
    bounds: MaterialBounds,
}

impl SlabMaterial {
    pub fn new(
        x3_cells: usize,
        inplane: [usize; 2],
        fibers: Vec<FiberMaterial>,
        cell_fiber: Vec<usize>,
        bounds: MaterialBounds,
    ) -> Result<Self> {
        if x3_cells == 0 || inplane.contains(&0) {
            return Err(Error::InvalidInput("slab grid sizes must be positive".into()));
        }
        let n = x3_cells * inplane[0] * inplane[1];
        if cell_fiber.len() != n {
            return Err(Error::InvalidInput(format!("slab has {n} cells but {} fiber indices", cell_fiber.len())));
        }
        if let Some(bad) = cell_fiber.iter().find(|&&i| i >= fibers.len()) {
            return Err(Error::InvalidInput(format!("fiber index {bad} out of range")));
        }
        let mut offset = 0;
        for f in &fibers {
            f.check_class(&bounds).map_err(|e| match e {
                Error::Admissibility { sample, detail } => Error::Admissibility { sample: offset + sample, detail },
                other => other,
            })?;
            offset += f.forms.len();
        }
        Ok(Self { x3_cells, inplane, fibers, cell_fiber, bounds })
    }

    /// The same fiber in every slab cell (no slow dependence).
    pub fn broadcast(x3_cells: usize, inplane: [usize; 2], fiber: FiberMaterial, bounds: MaterialBounds) -> Result<Self> {
        let n = x3_cells * inplane[0] * inplane[1];
        Self::new(x3_cells, inplane, vec![fiber], vec![0; n], bounds)
    }

    /// `λ₁(x₃, y′)·λ₂(y₃)·2μ|sym G|²`; `lambda1` is per slab cell, or a
    /// single value.
    pub fn separable(
        x3_cells: usize,
        inplane: [usize; 2],
        lambda1: &[f64],
        lambda2: &[f64],
        mu: f64,
        bounds: MaterialBounds,
    ) -> Result<Self> {
        let n = x3_cells * inplane[0] * inplane[1];
        if lambda1.len() != n && lambda1.len() != 1 {
            return Err(Error::InvalidInput(format!("lambda1 needs 1 or {n} values, got {}", lambda1.len())));
        }
        if lambda1.iter().chain(lambda2).any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidInput("lambda1 and lambda2 must be positive".into()));
        }
        let base = QuadForm3::isotropic(mu, 0.0)?;
        let fiber_for = |l1: f64| {
            FiberMaterial::uniform(lambda2.iter().map(|l2| base.scaled(l1 * l2)).collect())
        };
        let mut distinct: Vec<f64> = Vec::new();
        let mut fibers = Vec::new();
        let mut cell_fiber = Vec::with_capacity(n);
        for c in 0..n {
            let l1 = lambda1[if lambda1.len() == 1 { 0 } else { c }];
            let idx = match distinct.iter().position(|&v| v == l1) {
                Some(i) => i,
                None => {
                    distinct.push(l1);
                    fibers.push(fiber_for(l1)?);
                    distinct.len() - 1
                }
            };
            cell_fiber.push(idx);
        }
        Self::new(x3_cells, inplane, fibers, cell_fiber, bounds)
    }

    pub fn x3_cells(&self) -> usize {
        self.x3_cells
    }

    pub fn inplane(&self) -> [usize; 2] {
        self.inplane
    }

    pub fn bounds(&self) -> MaterialBounds {
        self.bounds
    }

    pub fn fibers(&self) -> &[FiberMaterial] {
        &self.fibers
    }

    pub fn fiber_at(&self, x3: usize, y1: usize, y2: usize) -> &FiberMaterial {
        &self.fibers[self.cell_fiber[(x3 * self.inplane[0] + y1) * self.inplane[1] + y2]]
    }

    /// True when the material changes with the slow thickness variable.
    pub fn depends_on_x3(&self) -> bool {
        let layer = self.inplane[0] * self.inplane[1];
        (layer..self.cell_fiber.len()).any(|c| self.cell_fiber[c] != self.cell_fiber[c % layer])
    }

    /// Nested subdivision of the slab grid by integer factors `(x₃, y₁, y₂)`.
    pub fn subdivided(&self, factors: [usize; 3]) -> Result<Self> {
        if factors.contains(&0) {
            return Err(Error::InvalidInput("subdivision factors must be positive".into()));
        }
        let (n3, n1, n2) = (self.x3_cells * factors[0], self.inplane[0] * factors[1], self.inplane[1] * factors[2]);
        let mut cell_fiber = Vec::with_capacity(n3 * n1 * n2);
        for k in 0..n3 {
            for i in 0..n1 {
                for j in 0..n2 {
                    let (k0, i0, j0) = (k / factors[0], i / factors[1], j / factors[2]);
                    cell_fiber.push(self.cell_fiber[(k0 * self.inplane[0] + i0) * self.inplane[1] + j0]);
                }
            }
        }
        Ok(Self { x3_cells: n3, inplane: [n1, n2], fibers: self.fibers.clone(), cell_fiber, bounds: self.bounds })
    }

    pub fn refined(&self) -> Self {
        self.subdivided([2, 2, 2]).expect("factor 2 is valid")
    }

    /// Applies [`fiber_reduce`] to every distinct fiber.
    pub fn reduce(&self) -> Result<ReducedSlab> {
        let reduced = self.fibers.par_iter().map(fiber_reduce).collect::<Result<Vec<_>>>()?;
        Ok(ReducedSlab {
            x3_cells: self.x3_cells,
            inplane: self.inplane,
            forms: self.cell_fiber.iter().map(|&i| reduced[i].clone()).collect(),
        })
    }
}

/// Slab material after the fiber reduction: one form per slab cell.
#[derive(Clone, Debug)]
pub struct ReducedSlab {
    x3_cells: usize,
    inplane: [usize; 2],
    /// Ordered `(x₃, y₁, y₂)`, `y₂` fastest.
    forms: Vec<QuadForm3>,
}

impl ReducedSlab {
    pub fn homogeneous(form: QuadForm3, x3_cells: usize, inplane: [usize; 2]) -> Result<Self> {
        Self::new(x3_cells, inplane, vec![form; x3_cells * inplane[0] * inplane[1]])
    }

    pub fn new(x3_cells: usize, inplane: [usize; 2], forms: Vec<QuadForm3>) -> Result<Self> {
        if x3_cells == 0 || inplane.contains(&0) || forms.len() != x3_cells * inplane[0] * inplane[1] {
            return Err(Error::InvalidInput("reduced slab grid and form count disagree".into()));
        }
        Ok(Self { x3_cells, inplane, forms })
    }

    pub fn forms(&self) -> &[QuadForm3] {
        &self.forms
    }

    pub(crate) fn mesh(&self) -> Mesh {
        Mesh::new([
            Axis::periodic_linear(self.inplane[0]),
            Axis::periodic_linear(self.inplane[1]),
            Axis { cells: self.x3_cells, order: Order::Quadratic, periodic: false, lo: -0.5, hi: 0.5 },
        ])
    }

    /// Per-cell matrices in mesh order `(y₁, y₂, x₃)`.
    pub(crate) fn matrices(&self) -> Vec<Matrix6<f64>> {
        let [n1, n2] = self.inplane;
        let mut out = Vec::with_capacity(self.forms.len());
        for i in 0..n1 {
            for j in 0..n2 {
                for k in 0..self.x3_cells {
                    out.push(*self.forms[(k * n1 + i) * n2 + j].matrix());
                }
            }
        }
        out
    }
}

/// Macroscopic strain pattern driving a slab solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlabLoad {
    /// Constant in-plane stretch `ι(E_k)`.
    Stretch(usize),
    /// Bending strain `x₃ ι(E_k)`.
    Bend(usize),
}

impl SlabLoad {
    fn to_load(self) -> Load {
        match self {
            SlabLoad::Stretch(k) => Load::Constant(SymMat2::basis(k).embed().0),
            SlabLoad::Bend(k) => Load::LinearInThird(SymMat2::basis(k).embed().0),
        }
    }

    fn name(self) -> String {
        const N: [&str; 3] = ["11", "22", "12"];
        match self {
            SlabLoad::Stretch(k) => format!("B=e{}", N[k]),
            SlabLoad::Bend(k) => format!("A=e{}", N[k]),
        }
    }

    fn check(self) -> Result<()> {
        let (SlabLoad::Stretch(k) | SlabLoad::Bend(k)) = self;
        if k >= 3 {
            return Err(Error::InvalidInput(format!("load index {k} out of range 0..3")));
        }
        Ok(())
    }
}

/// Corrector on the slab nodes, periodic in `y′`, free in `x₃`.
#[derive(Clone, Debug)]
pub struct SlabCorrector {
    /// Node counts along `(y₁, y₂, x₃)`.
    pub nodes: [usize; 3],
    pub values: Vec<[f64; 3]>,
}

impl SlabCorrector {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> [f64; 3] {
        let n = self.values.len() as f64;
        let mut m = [0.0; 3];
        for v in &self.values {
            for c in 0..3 {
                m[c] += v[c] / n;
            }
        }
        m
    }
}

#[derive(Clone, Debug)]
pub struct SlabSolution {
    pub corrector: SlabCorrector,
    pub energy: f64,
    pub stats: SolveStats,
}

/// Minimizes `∫_{I×Y²} Q̃(x₃, y′, L + sym(∇′φ | ∂₃φ))` for one load pattern.
pub fn slab_corrector_solve(slab: &ReducedSlab, load: SlabLoad, settings: &SolverSettings) -> Result<SlabSolution> {
    load.check()?;
    let mesh = slab.mesh();
    let mats = slab.matrices();
    let op = Elasticity { mesh: &mesh, materials: &mats };
    let l = load.to_load();
    let (u, stats) = solve_load(&op, &l, None, settings)?;
    let energy = op.bilinear(&l, &u, &l, &u);
    let nodes = [mesh.axes[0].nodes(), mesh.axes[1].nodes(), mesh.axes[2].nodes()];
    Ok(SlabSolution {
        corrector: SlabCorrector { nodes, values: u.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect() },
        energy,
        stats,
    })
}

/// The 6×6 form on `(A, B)` assembled from the six slab solves, ordered
/// `(A₁₁, A₂₂, A₁₂, B₁₁, B₂₂, B₁₂)` in Mandel coordinates.
pub fn slab_effective_form(slab: &ReducedSlab, settings: &SolverSettings) -> Result<(Matrix6<f64>, Vec<SolveRecord>)> {
    settings.validate()?;
    let mesh = slab.mesh();
    let mats = slab.matrices();
    let op = Elasticity { mesh: &mesh, materials: &mats };
    let patterns: Vec<SlabLoad> = (0..3).map(SlabLoad::Bend).chain((0..3).map(SlabLoad::Stretch)).collect();
    let loads: Vec<Load> = patterns.iter().map(|p| p.to_load()).collect();
    let solutions = loads
        .par_iter()
        .map(|l| solve_load(&op, l, None, settings))
        .collect::<Result<Vec<_>>>()?;
    let mut m = Matrix6::zeros();
    for i in 0..6 {
        for j in i..6 {
            let v = op.bilinear(&loads[i], &solutions[i].0, &loads[j], &solutions[j].0);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    let records = patterns
        .iter()
        .zip(&solutions)
        .enumerate()
        .map(|(k, (p, (_, s)))| SolveRecord {
            load: p.name(),
            iterations: s.iterations,
            relative_residual: s.relative_residual,
            energy: m[(k, k)],
        })
        .collect();
    Ok((m, records))
}

/// Effective bending form of the thickness-comparable regime.
pub fn bending_form_regime2(slab: &SlabMaterial, settings: &SolverSettings) -> Result<EffectiveReport> {
    let reduced = slab.reduce()?;
    let (m, solves) = slab_effective_form(&reduced, settings)?;
    let aa = m.fixed_view::<3, 3>(0, 0).into_owned();
    let ab = m.fixed_view::<3, 3>(0, 3).into_owned();
    let bb = m.fixed_view::<3, 3>(3, 3).into_owned();
    let chol = Cholesky::new(bb)
        .ok_or_else(|| Error::Internal("stretch block of the slab form is not positive definite".into()))?;
    let x = chol.solve(&ab.transpose());
    let q0 = symmetrize(aa - ab * x);
    let optimal_b = -x;
    let diagnostics = Diagnostics {
        grid: vec![slab.x3_cells, slab.inplane[0], slab.inplane[1]],
        quadrature: "bilinear in y' x quadratic in x3, 2x2x3 Gauss per cell; fiber reduced in closed form".into(),
        solves,
        decomposition: None,
        notes: vec![format!(
            "material depends on slow x3: {}",
            if slab.depends_on_x3() { "yes" } else { "no" }
        )],
    };
    Ok(EffectiveReport::new(
        "homog-regime2",
        crate::forms::QuadForm2::new(q0)?.with_label("Q0p regime 2"),
        optimal_b,
        diagnostics,
    ))
}

/// Helper for tests and callers: the optimal third column of the fiber
/// problem at strain `m` for each sample.
pub fn fiber_optimal_columns(fiber: &FiberMaterial, m: &SymMat3) -> Result<Vec<Vector3<f64>>> {
    let mp = Vector3::new(m.0[IN_PLANE[0]], m.0[IN_PLANE[1]], m.0[IN_PLANE[2]]);
    let mo = Vector3::new(m.0[OUT_OF_PLANE[0]], m.0[OUT_OF_PLANE[1]], m.0[OUT_OF_PLANE[2]]);
    let mut s_inv_mean = Matrix3::zeros();
    let mut s_inv_t = Matrix3::zeros();
    let mut parts = Vec::new();
    for (form, &w) in fiber.forms.iter().zip(&fiber.weights) {
        let (_, t, s) = split_blocks(form);
        let chol = Cholesky::new(s).ok_or_else(|| Error::Degenerate("singular out-of-plane block".into()))?;
        s_inv_mean += chol.inverse() * w;
        s_inv_t += chol.solve(&t.transpose()) * w;
        parts.push((chol, t));
    }
    let kappa = s_inv_mean
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("averaged compliance is singular".into()))?
        * (mo + s_inv_t * mp);
    // out-of-plane Mandel strain minus the imposed one, per sample
    Ok(parts.iter().map(|(chol, t)| chol.solve(&(kappa - t.transpose() * mp)) - mo).collect())
}
