//! Fully coupled regime: the corrector problem on the unit cell Y³ and the
//! resulting effective bending form.
//!
//! With in-plane period `h^{α+1}` and through-thickness period `h^α` the
//! material does not vary with the slow thickness variable, so the inner
//! problem homogenizes to a single form `Q_hom` on symmetric 3×3 matrices.
//! Minimizing over the third column and integrating over the thickness then
//! gives `Q₀ᵖ = reduce(Q_hom) / 12` with vanishing optimal stretch; the dense
//! oracle in [`crate::oracle`] solves the joint problem without using this
//! factorization.

use nalgebra::{Matrix3, Matrix6};
use rayon::prelude::*;

use crate::cg::{self, SolveStats, SolverSettings};
use crate::error::{Error, Result};
use crate::fem::{Axis, Elasticity, Load, Mesh};
use crate::forms::{MaterialBounds, QuadForm3, SymMat3};
use crate::reduction::plane_stress_reduce;
use crate::report::{Diagnostics, EffectiveReport, Regime1Decomposition, SolveRecord};

/// Quadratic-form samples on a uniform grid of cells over `[0, 1)³`.
#[derive(Clone, Debug)]
pub struct CellMaterial3 {
    grid: [usize; 3],
    forms: Vec<QuadForm3>,
    bounds: MaterialBounds,
}

impl CellMaterial3 {
    /// `forms` are listed row-major over `grid` (last axis fastest). Every
    /// sample is checked against `bounds`.
    pub fn new(grid: [usize; 3], forms: Vec<QuadForm3>, bounds: MaterialBounds) -> Result<Self> {
        if grid.contains(&0) {
            return Err(Error::InvalidInput(format!("cell grid must be at least 1 in every direction, got {grid:?}")));
        }
        let n: usize = grid.iter().product();
        if forms.len() != n {
            return Err(Error::InvalidInput(format!("grid {grid:?} needs {n} forms, got {}", forms.len())));
        }
        for (i, f) in forms.iter().enumerate() {
            f.check_class(&bounds).into_result(i)?;
        }
        Ok(Self { grid, forms, bounds })
    }

    pub fn homogeneous(form: QuadForm3, bounds: MaterialBounds) -> Result<Self> {
        Self::new([1, 1, 1], vec![form], bounds)
    }

    /// Samples `f` at the cell centres.
    pub fn from_fn(grid: [usize; 3], bounds: MaterialBounds, f: impl Fn([f64; 3]) -> QuadForm3) -> Result<Self> {
        let mut forms = Vec::with_capacity(grid.iter().product());
        for i in 0..grid[0] {
            for j in 0..grid[1] {
                for k in 0..grid[2] {
                    let y = [
                        (i as f64 + 0.5) / grid[0] as f64,
                        (j as f64 + 0.5) / grid[1] as f64,
                        (k as f64 + 0.5) / grid[2] as f64,
                    ];
                    forms.push(f(y));
                }
            }
        }
        Self::new(grid, forms, bounds)
    }

    /// Isotropic field given by per-cell Lamé parameters.
    pub fn isotropic_field(grid: [usize; 3], mu: &[f64], lambda: &[f64], bounds: MaterialBounds) -> Result<Self> {
        if mu.len() != lambda.len() {
            return Err(Error::InvalidInput("mu and lambda grids differ in length".into()));
        }
        let forms = mu
            .iter()
            .zip(lambda)
            .map(|(&m, &l)| QuadForm3::isotropic(m, l))
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid, forms, bounds)
    }

    pub fn grid(&self) -> [usize; 3] {
        self.grid
    }

    pub fn forms(&self) -> &[QuadForm3] {
        &self.forms
    }

    pub fn bounds(&self) -> MaterialBounds {
        self.bounds
    }

    pub fn form_at(&self, cell: [usize; 3]) -> &QuadForm3 {
        &self.forms[(cell[0] * self.grid[1] + cell[1]) * self.grid[2] + cell[2]]
    }

    /// Same material on a grid subdivided by integer `factors`.
    pub fn subdivided(&self, factors: [usize; 3]) -> Result<Self> {
        if factors.contains(&0) {
            return Err(Error::InvalidInput("subdivision factors must be positive".into()));
        }
        let grid = [self.grid[0] * factors[0], self.grid[1] * factors[1], self.grid[2] * factors[2]];
        let mut forms = Vec::with_capacity(grid.iter().product());
        for i in 0..grid[0] {
            for j in 0..grid[1] {
                for k in 0..grid[2] {
                    forms.push(self.form_at([i / factors[0], j / factors[1], k / factors[2]]).clone());
                }
            }
        }
        Ok(Self { grid, forms, bounds: self.bounds })
    }

    /// Nested 2× subdivision along every axis.
    pub fn refined(&self) -> Self {
        self.subdivided([2, 2, 2]).expect("factor 2 is valid")
    }

    /// Every sample scaled by `c > 0`, bounds scaled alike.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let bounds = MaterialBounds::new(self.bounds.eta1 * c, self.bounds.eta2 * c)?;
        Self::new(self.grid, self.forms.iter().map(|f| f.scaled(c)).collect(), bounds)
    }

    /// Cell average of the coefficients (the φ = 0 upper bound).
    pub fn arithmetic_mean(&self) -> QuadForm3 {
        let n = self.forms.len() as f64;
        let m = self.forms.iter().fold(Matrix6::zeros(), |acc, f| acc + f.matrix()) / n;
        QuadForm3::new(m).expect("mean of symmetric matrices")
    }

    /// Inverse of the averaged compliance (the classical lower bound).
    pub fn harmonic_mean(&self) -> Result<QuadForm3> {
        let n = self.forms.len() as f64;
        let mut acc = Matrix6::zeros();
        for f in &self.forms {
            acc += f
                .matrix()
                .try_inverse()
                .ok_or_else(|| Error::Degenerate("singular material sample".into()))?;
        }
        let inv = (acc / n)
            .try_inverse()
            .ok_or_else(|| Error::Degenerate("singular averaged compliance".into()))?;
        QuadForm3::new((inv + inv.transpose()) * 0.5)
    }

    pub(crate) fn mesh(&self) -> Mesh {
        Mesh::new(self.grid.map(Axis::periodic_linear))
    }

    pub(crate) fn matrices(&self) -> Vec<Matrix6<f64>> {
        self.forms.iter().map(|f| *f.matrix()).collect()
    }
}

/// Periodic displacement corrector on the nodes of the cell grid.
#[derive(Clone, Debug)]
pub struct CorrectorField3 {
    grid: [usize; 3],
    values: Vec<[f64; 3]>,
}

impl CorrectorField3 {
    fn from_flat(grid: [usize; 3], u: &[f64]) -> Self {
        Self { grid, values: u.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect() }
    }

    fn flat(&self) -> Vec<f64> {
        self.values.iter().flatten().copied().collect()
    }

    pub fn grid(&self) -> [usize; 3] {
        self.grid
    }

    /// Node values, row-major over the grid (nodes coincide with cell corners).
    pub fn values(&self) -> &[[f64; 3]] {
        &self.values
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

    pub fn max_abs(&self) -> f64 {
        self.values.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Clone, Debug)]
pub struct CorrectorSolution {
    pub field: CorrectorField3,
    /// `∫_{Y³} Q(y, E + ∇φ) dy`.
    pub energy: f64,
    pub stats: SolveStats,
}

/// Minimizes `∫_{Y³} Q(y, E + ∇φ)` over periodic trilinear `φ`.
pub fn corrector_solve_3d(material: &CellMaterial3, e: &SymMat3, settings: &SolverSettings) -> Result<CorrectorSolution> {
    solve_with_guess(material, e, settings, None)
}

/// As [`corrector_solve_3d`], starting the iteration from `initial`.
pub fn corrector_solve_3d_from(
    material: &CellMaterial3,
    e: &SymMat3,
    settings: &SolverSettings,
    initial: &CorrectorField3,
) -> Result<CorrectorSolution> {
    if initial.grid != material.grid {
        return Err(Error::InvalidInput("initial corrector grid does not match the material".into()));
    }
    solve_with_guess(material, e, settings, Some(&initial.flat()))
}

fn solve_with_guess(
    material: &CellMaterial3,
    e: &SymMat3,
    settings: &SolverSettings,
    initial: Option<&[f64]>,
) -> Result<CorrectorSolution> {
    let mesh = material.mesh();
    let mats = material.matrices();
    let op = Elasticity { mesh: &mesh, materials: &mats };
    let load = Load::Constant(e.0);
    let (u, stats) = solve_load(&op, &load, initial, settings)?;
    let energy = op.bilinear(&load, &u, &load, &u);
    Ok(CorrectorSolution { field: CorrectorField3::from_flat(material.grid, &u), energy, stats })
}

pub(crate) fn solve_load(
    op: &Elasticity<'_>,
    load: &Load,
    initial: Option<&[f64]>,
    settings: &SolverSettings,
) -> Result<(Vec<f64>, SolveStats)> {
    let (f, fabs) = op.rhs(load);
    let diag = op.diagonal();
    cg::solve(|x, y| op.apply(x, y), &diag, &f, &fabs, initial, settings)
}

#[derive(Clone, Debug)]
pub struct HomogenizedCell {
    pub form: QuadForm3,
    pub solves: Vec<SolveRecord>,
}

const MANDEL3_NAMES: [&str; 6] = ["11", "22", "33", "23", "13", "12"];

/// Effective form on symmetric 3×3 matrices from the six basis correctors;
/// off-diagonal entries are the bilinear energies of corrector pairs.
pub fn homogenized_form_3d(material: &CellMaterial3, settings: &SolverSettings) -> Result<HomogenizedCell> {
    settings.validate()?;
    let mesh = material.mesh();
    let mats = material.matrices();
    let op = Elasticity { mesh: &mesh, materials: &mats };
    let loads: Vec<Load> = (0..6).map(|k| Load::Constant(SymMat3::basis(k).0)).collect();
    let solutions = loads
        .par_iter()
        .map(|load| solve_load(&op, load, None, settings))
        .collect::<Result<Vec<_>>>()?;

    let mut m = Matrix6::zeros();
    for i in 0..6 {
        for j in i..6 {
            let v = op.bilinear(&loads[i], &solutions[i].0, &loads[j], &solutions[j].0);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    let solves = solutions
        .iter()
        .enumerate()
        .map(|(k, (_, s))| SolveRecord {
            load: format!("E=e{}", MANDEL3_NAMES[k]),
            iterations: s.iterations,
            relative_residual: s.relative_residual,
            energy: m[(k, k)],
        })
        .collect();
    Ok(HomogenizedCell { form: QuadForm3::new(m)?.with_label("homogenized"), solves })
}

/// Effective bending form of the fully coupled regime.
pub fn bending_form_regime1(material: &CellMaterial3, settings: &SolverSettings) -> Result<EffectiveReport> {
    let cell = homogenized_form_3d(material, settings)?;
    let reduced = plane_stress_reduce(&cell.form)?.form;
    let q0 = reduced.scaled(1.0 / 12.0).with_label("Q0p regime 1");
    let diagnostics = Diagnostics {
        grid: material.grid.to_vec(),
        quadrature: "trilinear hexahedra, 2x2x2 Gauss per cell".into(),
        solves: cell.solves,
        decomposition: Some(Regime1Decomposition {
            homogenized: cell.form,
            plane_stress: reduced,
            first_moment: 0.0,
            second_moment: 1.0 / 12.0,
        }),
        notes: vec!["Q0p = reduce(Q_hom)/12, B* = 0".into()],
    };
    Ok(EffectiveReport::new("homog-regime1", q0, Matrix3::zeros(), diagnostics))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::forms::testing::random_form3;
    use crate::forms::SymMat2;

    fn tight() -> SolverSettings {
        SolverSettings::with_tol(1e-12)
    }

    fn laminate(values: &[f64]) -> CellMaterial3 {
        let forms = values.iter().map(|&l| QuadForm3::isotropic(l, 0.0).unwrap()).collect();
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(0.0, f64::max);
        CellMaterial3::new([1, 1, values.len()], forms, MaterialBounds::new(2.0 * lo, 2.0 * hi).unwrap()).unwrap()
    }

    #[test]
    fn homogeneous_cell_has_no_corrector() {
        let q = QuadForm3::isotropic(1.2, 0.7).unwrap();
        let bounds = MaterialBounds::new(2.4, 2.4 + 2.1).unwrap();
        let m = CellMaterial3::homogeneous(q.clone(), bounds).unwrap().subdivided([3, 2, 2]).unwrap();
        let e = SymMat3::new([0.3, -0.2, 0.5, 0.1, -0.4, 0.25]);
        let sol = corrector_solve_3d(&m, &e, &tight()).unwrap();
        assert_eq!(sol.field.max_abs(), 0.0);
        assert!((sol.energy - q.eval(&e)).abs() < 1e-13);
        let hom = homogenized_form_3d(&m, &tight()).unwrap().form;
        assert!((hom.matrix() - q.matrix()).abs().max() < 1e-13);
    }

    #[test]
    fn laminate_normal_strain_is_harmonic() {
        let m = laminate(&[1.0, 3.0]).subdivided([1, 1, 2]).unwrap();
        let sol = corrector_solve_3d(&m, &SymMat3::basis(2), &tight()).unwrap();
        // ⟨1/λ⟩⁻¹ = 3/2 times 2μ|e33|² at λ ≡ 1
        assert!((sol.energy - 2.0 * 1.5).abs() < 1e-10, "energy {}", sol.energy);
        let sol = corrector_solve_3d(&m, &SymMat3::basis(0), &tight()).unwrap();
        assert!((sol.energy - 2.0 * 2.0).abs() < 1e-12);
        assert_eq!(sol.field.max_abs(), 0.0);
    }

    #[test]
    fn laminate_homogenized_form() {
        let hom = homogenized_form_3d(&laminate(&[1.0, 3.0]), &tight()).unwrap().form;
        let expected = Matrix6::from_diagonal(&nalgebra::Vector6::new(4.0, 4.0, 3.0, 3.0, 3.0, 4.0));
        assert!((hom.matrix() - expected).abs().max() < 1e-9, "{}", hom.matrix());
    }

    #[test]
    fn regime1_examples() {
        let bounds = MaterialBounds::new(2.0, 2.0).unwrap();
        let m = CellMaterial3::homogeneous(QuadForm3::isotropic(1.0, 0.0).unwrap(), bounds).unwrap();
        let r = bending_form_regime1(&m, &tight()).unwrap();
        assert!((r.q0.matrix() - Matrix3::identity() / 6.0).abs().max() < 1e-15);
        let r = bending_form_regime1(&laminate(&[1.0, 3.0]), &tight()).unwrap();
        assert!((r.q0.matrix() - Matrix3::identity() / 3.0).abs().max() < 1e-10);
        assert_eq!(r.optimal_b_matrix(), Matrix3::zeros());
    }

    fn checkerboard() -> CellMaterial3 {
        let soft = QuadForm3::isotropic(1.0, 0.5).unwrap();
        let hard = QuadForm3::isotropic(4.0, 1.0).unwrap();
        let bounds = MaterialBounds::new(2.0, 11.0).unwrap();
        CellMaterial3::from_fn([2, 2, 1], bounds, |y| {
            if (y[0] < 0.5) ^ (y[1] < 0.5) { hard.clone() } else { soft.clone() }
        })
        .unwrap()
    }

    #[test]
    fn checkerboard_between_reuss_and_voigt() {
        let m = checkerboard().refined();
        let hom = homogenized_form_3d(&m, &tight()).unwrap().form;
        let voigt = m.arithmetic_mean();
        let reuss = m.harmonic_mean().unwrap();
        let upper = (voigt.matrix() - hom.matrix()).symmetric_eigenvalues().min();
        let lower = (hom.matrix() - reuss.matrix()).symmetric_eigenvalues().min();
        assert!(upper > -1e-9 && lower > -1e-9, "upper {upper}, lower {lower}");
        let rep = hom.check_class(&m.bounds());
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn energy_does_not_depend_on_initial_guess() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let bounds = MaterialBounds::new(0.5, 3.0).unwrap();
        let forms = (0..27).map(|_| random_form3(&mut rng, 0.5, 3.0)).collect();
        let m = CellMaterial3::new([3, 3, 3], forms, bounds).unwrap();
        let e = SymMat3::new([0.2, -0.1, 0.4, 0.3, 0.0, -0.2]);
        let a = corrector_solve_3d(&m, &e, &tight()).unwrap();
        let mut guess = a.field.clone();
        guess.values.iter_mut().enumerate().for_each(|(i, v)| v[i % 3] += (i as f64).sin());
        let b = corrector_solve_3d_from(&m, &e, &tight(), &guess).unwrap();
        assert!((a.energy - b.energy).abs() < 1e-12 * a.energy);
        assert!(a.field.mean().iter().all(|m| m.abs() < 1e-12));
        assert!(a.energy <= m.forms().iter().map(|f| f.eval(&e)).sum::<f64>() / 27.0);
    }

    #[test]
    fn nested_refinement_does_not_increase_energy() {
        let m = checkerboard();
        let e = SymMat3::new([1.0, 0.0, 0.0, 0.0, 0.3, 0.7]);
        let coarse = corrector_solve_3d(&m, &e, &tight()).unwrap().energy;
        let fine = corrector_solve_3d(&m.refined(), &e, &tight()).unwrap().energy;
        assert!(fine <= coarse * (1.0 + 1e-10), "{fine} > {coarse}");
    }

    #[test]
    fn scaling_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let bounds = MaterialBounds::new(0.5, 3.0).unwrap();
        let forms = (0..8).map(|_| random_form3(&mut rng, 0.5, 3.0)).collect();
        let m = CellMaterial3::new([2, 2, 2], forms, bounds).unwrap();
        let q = bending_form_regime1(&m, &tight()).unwrap();
        let q2 = bending_form_regime1(&m.scaled(2.5).unwrap(), &tight()).unwrap();
        assert!((q2.q0.matrix() - q.q0.matrix() * 2.5).abs().max() < 1e-10);
        assert!(q.eigenvalues[0] > 0.0);
        assert!(q.eigenvalues[2] <= bounds.eta2 / 12.0 + 1e-10);
        let avg = plane_stress_reduce(&m.arithmetic_mean()).unwrap().form;
        let a = SymMat2::new([0.3, 1.0, -0.5]);
        assert!(q.q0.eval(&a) <= avg.eval(&a) / 12.0 + 1e-12);
    }

    #[test]
    fn rejects_inadmissible_samples() {
        let bounds = MaterialBounds::new(1.0, 2.0).unwrap();
        let err = CellMaterial3::new([1, 1, 2], vec![QuadForm3::isotropic(0.5, 0.0).unwrap(), QuadForm3::isotropic(5.0, 0.0).unwrap()], bounds);
        assert!(matches!(err, Err(Error::Admissibility { sample: 1, .. })));
        assert!(CellMaterial3::new([0, 1, 1], vec![], bounds).is_err());
    }
}
