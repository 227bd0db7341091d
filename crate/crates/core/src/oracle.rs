//! Ground truth for the iterative pipelines.
//!
//! The brute-force functions assemble the whole joint quadratic in
//! `(B, d, φ)` as one dense matrix and factor it. They use the same
//! discrete spaces as the solvers (trilinear periodic cells; slabs bilinear
//! in `y′` and quadratic in `x₃`) but none of their code: shape functions,
//! node numbering and strain operators are rebuilt here from scratch.
//!
//! Keep the sizes tiny. Everything is `O(n³)`.

use nalgebra::{DMatrix, Matrix3, Matrix6, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::forms::{mandel_encode, QuadForm2, QuadForm3, SymMat2, SymMat3};
use crate::homog3d::CellMaterial3;
use crate::homogslab::{FiberMaterial, SlabMaterial};
use crate::quadrature::gauss_legendre_on;

/// Largest number of joint unknowns a brute-force problem may have.
pub const DENSE_CAP: usize = 20_000;

/// `min_x xᵀKx + 2xᵀF a + aᵀC a` over the unknowns `x`, as a function of the
/// macroscopic bending strain `a`.
#[derive(Clone, Debug)]
pub struct DenseProblem {
    pub matrix: DMatrix<f64>,
    /// One column per Mandel coordinate of `a`.
    pub load: DMatrix<f64>,
    pub constant: Matrix3<f64>,
    /// Joint unknowns before any block elimination.
    pub joint_unknowns: usize,
}

impl DenseProblem {
    /// Mandel matrix of `a ↦ C − FᵀK⁻¹F`.
    pub fn effective_matrix(&self) -> Result<Matrix3<f64>> {
        let chol = self
            .matrix
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Internal("dense oracle matrix is not positive definite".into()))?;
        let x = chol.solve(&self.load);
        let schur = self.load.transpose() * x;
        let mut q = self.constant;
        for i in 0..3 {
            for j in 0..3 {
                q[(i, j)] -= 0.5 * (schur[(i, j)] + schur[(j, i)]);
            }
        }
        Ok(q)
    }

    pub fn energy(&self, a: &SymMat2) -> Result<f64> {
        let q = self.effective_matrix()?;
        Ok(a.0.dot(&(q * a.0)))
    }
}

/// Lagrange basis on equispaced nodes of `[0, 1]`: values and derivatives.
fn lagrange(order: usize, t: f64) -> (Vec<f64>, Vec<f64>) {
    let nodes: Vec<f64> = (0..=order).map(|k| k as f64 / order as f64).collect();
    let mut val = vec![0.0; nodes.len()];
    let mut der = vec![0.0; nodes.len()];
    for (i, xi) in nodes.iter().enumerate() {
        let mut v = 1.0;
        for (j, xj) in nodes.iter().enumerate() {
            if j != i {
                v *= (t - xj) / (xi - xj);
            }
        }
        val[i] = v;
        let mut d = 0.0;
        for (k, xk) in nodes.iter().enumerate() {
            if k == i {
                continue;
            }
            let mut p = 1.0 / (xi - xk);
            for (j, xj) in nodes.iter().enumerate() {
                if j != i && j != k {
                    p *= (t - xj) / (xi - xj);
                }
            }
            d += p;
        }
        der[i] = d;
    }
    (val, der)
}

/// One direction of a tensor grid.
struct Dir {
    cells: usize,
    order: usize,
    periodic: bool,
    lo: f64,
    len: f64,
}

impl Dir {
    fn node_count(&self) -> usize {
        self.cells * self.order + usize::from(!self.periodic)
    }

    fn node(&self, cell: usize, local: usize) -> usize {
        let n = cell * self.order + local;
        if self.periodic {
            n % (self.cells * self.order)
        } else {
            n
        }
    }

    fn h(&self) -> f64 {
        self.len / self.cells as f64
    }
}

/// Per-cell strain operator at one quadrature point: the Mandel strain of
/// every local displacement unknown, plus the physical point and weight.
struct PointOperator {
    weight: f64,
    x: [f64; 3],
    /// `(global node, component, strain column)`.
    columns: Vec<(usize, usize, Vector6<f64>)>,
}

/// Walks every quadrature point of a tensor grid with full Gauss rules.
fn for_each_point(dirs: &[Dir; 3], mut visit: impl FnMut([usize; 3], &PointOperator)) {
    let rules: Vec<_> = dirs.iter().map(|d| gauss_legendre_on(d.order + 1, 0.0, 1.0)).collect();
    let counts: Vec<usize> = dirs.iter().map(Dir::node_count).collect();
    let e = Matrix3::identity();
    for c0 in 0..dirs[0].cells {
        for c1 in 0..dirs[1].cells {
            for c2 in 0..dirs[2].cells {
                let cell = [c0, c1, c2];
                for (p0, w0) in rules[0].0.iter().zip(&rules[0].1) {
                    for (p1, w1) in rules[1].0.iter().zip(&rules[1].1) {
                        for (p2, w2) in rules[2].0.iter().zip(&rules[2].1) {
                            let t = [*p0, *p1, *p2];
                            let shapes: Vec<_> = (0..3).map(|k| lagrange(dirs[k].order, t[k])).collect();
                            let h: Vec<f64> = dirs.iter().map(Dir::h).collect();
                            let mut columns = Vec::new();
                            for a in 0..=dirs[0].order {
                                for b in 0..=dirs[1].order {
                                    for c in 0..=dirs[2].order {
                                        let g = Vector3::new(
                                            shapes[0].1[a] * shapes[1].0[b] * shapes[2].0[c] / h[0],
                                            shapes[0].0[a] * shapes[1].1[b] * shapes[2].0[c] / h[1],
                                            shapes[0].0[a] * shapes[1].0[b] * shapes[2].1[c] / h[2],
                                        );
                                        let node = (dirs[0].node(c0, a) * counts[1] + dirs[1].node(c1, b)) * counts[2]
                                            + dirs[2].node(c2, c);
                                        for comp in 0..3 {
                                            let grad = e.column(comp) * g.transpose();
                                            let sym = (grad + grad.transpose()) * 0.5;
                                            columns.push((node, comp, mandel_encode(&sym).0));
                                        }
                                    }
                                }
                            }
                            let x = [0, 1, 2].map(|k| dirs[k].lo + (cell[k] as f64 + t[k]) * h[k]);
                            let weight = w0 * w1 * w2 * h[0] * h[1] * h[2];
                            visit(cell, &PointOperator { weight, x, columns });
                        }
                    }
                }
            }
        }
    }
}

/// Embedding `S₂ → S₃` as a 6×3 matrix on Mandel coordinates.
fn iota() -> nalgebra::Matrix6x3<f64> {
    nalgebra::Matrix6x3::from_columns(&[0, 1, 2].map(|k| SymMat2::basis(k).embed().0))
}

/// Third-column strain `d ↦ sym(d⊗e₃ + e₃⊗d)` as a 6×3 matrix.
fn third_column() -> nalgebra::Matrix6x3<f64> {
    nalgebra::Matrix6x3::from_columns(&[0, 1, 2].map(|k| SymMat3::third_column(&Vector3::ith(k, 1.0)).0))
}

/// Accumulates `w·(Σ uᵢ Gᵢ + Σ aⱼ Lⱼ)ᵀ C (…)` into the dense blocks.
/// `unknowns` lists `(global index, strain column)`; pinned unknowns are
/// simply omitted by the caller.
fn accumulate(
    problem: &mut DenseProblem,
    c: &Matrix6<f64>,
    w: f64,
    unknowns: &[(usize, Vector6<f64>)],
    load_strain: &nalgebra::Matrix6x3<f64>,
) {
    let c_load = c * load_strain;
    let stressed: Vec<Vector6<f64>> = unknowns.iter().map(|(_, g)| c * g).collect();
    for (i, (gi, _)) in unknowns.iter().enumerate() {
        for (gj, colj) in unknowns {
            problem.matrix[(*gi, *gj)] += w * stressed[i].dot(colj);
        }
        for k in 0..3 {
            problem.load[(*gi, k)] += w * stressed[i].dot(&load_strain.column(k));
        }
    }
    problem.constant += load_strain.transpose() * c_load * w;
}

fn check_cap(unknowns: usize) -> Result<()> {
    if unknowns > DENSE_CAP {
        return Err(Error::SizeCap { unknowns, cap: DENSE_CAP });
    }
    Ok(())
}

/// Joint problem of the fine-periodic regime: `B`, then per `x₃` sample a
/// third column `d` and a cell corrector `φ` with node 0 pinned.
///
/// `x3_samples` Gauss–Legendre nodes on `[−1/2, 1/2]` integrate `1, x₃, x₃²`
/// exactly, so the thickness integral is not a source of error.
pub fn regime1_problem(material: &CellMaterial3, x3_samples: usize) -> Result<DenseProblem> {
    if x3_samples < 2 {
        return Err(Error::InvalidInput("at least two x3 samples are needed".into()));
    }
    let grid = material.grid();
    let dirs = grid.map(|cells| Dir { cells, order: 1, periodic: true, lo: 0.0, len: 1.0 });
    let nodes: usize = dirs.iter().map(Dir::node_count).product();
    let per_slice = 3 + 3 * (nodes - 1);
    let n = 3 + x3_samples * per_slice;
    check_cap(n)?;
    let mut problem = DenseProblem {
        matrix: DMatrix::zeros(n, n),
        load: DMatrix::zeros(n, 3),
        constant: Matrix3::zeros(),
        joint_unknowns: n,
    };
    let (xs, ws) = gauss_legendre_on(x3_samples, -0.5, 0.5);
    let iota = iota();
    let third = third_column();
    for (s, (x3, w3)) in xs.iter().zip(&ws).enumerate() {
        let base = 3 + s * per_slice;
        for_each_point(&dirs, |cell, p| {
            let c = material.form_at(cell).matrix();
            let mut unknowns: Vec<(usize, Vector6<f64>)> = Vec::with_capacity(6 + p.columns.len());
            unknowns.extend((0..3).map(|k| (k, iota.column(k).into_owned())));
            unknowns.extend((0..3).map(|k| (base + k, third.column(k).into_owned())));
            for (node, comp, col) in &p.columns {
                if *node != 0 {
                    unknowns.push((base + 3 + 3 * (node - 1) + comp, *col));
                }
            }
            accumulate(&mut problem, c, w3 * p.weight, &unknowns, &(iota * *x3));
        });
    }
    Ok(problem)
}

/// `min` over `(B, d(x₃), φ(x₃, ·))` of the fine-periodic plate energy at `a`.
pub fn brute_force_regime1(material: &CellMaterial3, a: &SymMat2, x3_samples: usize) -> Result<f64> {
    regime1_problem(material, x3_samples)?.energy(a)
}

/// Pointwise minimum over zero-mean third columns, by dense elimination:
/// the last sample's `d` is fixed by the mean constraint.
fn fiber_eliminated(fiber: &FiberMaterial) -> Result<Matrix6<f64>> {
    let forms = fiber.forms();
    let w = fiber.weights();
    let m = forms.len();
    if m == 1 {
        return Ok(*forms[0].matrix());
    }
    let third = third_column();
    let nd = 3 * (m - 1);
    // strain of sample s = M + T_s δ
    let t_of = |s: usize| {
        let mut t = DMatrix::<f64>::zeros(6, nd);
        if s + 1 < m {
            for k in 0..3 {
                t.column_mut(3 * s + k).copy_from(&third.column(k));
            }
        } else {
            for r in 0..m - 1 {
                for k in 0..3 {
                    t.column_mut(3 * r + k).copy_from(&(third.column(k) * (-w[r] / w[m - 1])));
                }
            }
        }
        t
    };
    let mut hdd = DMatrix::<f64>::zeros(nd, nd);
    let mut hdm = DMatrix::<f64>::zeros(nd, 6);
    let mut hmm = DMatrix::<f64>::zeros(6, 6);
    for s in 0..m {
        let c = DMatrix::from_column_slice(6, 6, forms[s].matrix().as_slice());
        let t = t_of(s);
        hdd += t.transpose() * &c * &t * w[s];
        hdm += t.transpose() * &c * w[s];
        hmm += &c * w[s];
    }
    let chol = hdd
        .cholesky()
        .ok_or_else(|| Error::Internal("fiber elimination block is not positive definite".into()))?;
    let schur = hmm - hdm.transpose() * chol.solve(&hdm);
    Ok(Matrix6::from_fn(|i, j| 0.5 * (schur[(i, j)] + schur[(j, i)])))
}

/// Joint problem of the thickness-comparable regime with the zero-mean
/// fiber columns eliminated cell by cell.
pub fn regime2_problem(slab: &SlabMaterial) -> Result<DenseProblem> {
    let [n1, n2] = slab.inplane();
    let n3 = slab.x3_cells();
    let dirs = [
        Dir { cells: n1, order: 1, periodic: true, lo: 0.0, len: 1.0 },
        Dir { cells: n2, order: 1, periodic: true, lo: 0.0, len: 1.0 },
        Dir { cells: n3, order: 2, periodic: false, lo: -0.5, len: 1.0 },
    ];
    let nodes: usize = dirs.iter().map(Dir::node_count).product();
    let n = 3 + 3 * (nodes - 1);
    // points per cell (2·2·3) times eliminated fiber columns
    let joint: usize = n + (0..n3)
        .flat_map(|k| (0..n1).flat_map(move |i| (0..n2).map(move |j| (k, i, j))))
        .map(|(k, i, j)| 12 * 3 * (slab.fiber_at(k, i, j).forms().len() - 1))
        .sum::<usize>();
    check_cap(joint)?;
    let reduced: Vec<Matrix6<f64>> = slab.fibers().iter().map(fiber_eliminated).collect::<Result<_>>()?;
    let index_of = |f: &FiberMaterial| {
        slab.fibers().iter().position(|g| std::ptr::eq(g, f)).expect("fiber belongs to slab")
    };
    let mut problem = DenseProblem {
        matrix: DMatrix::zeros(n, n),
        load: DMatrix::zeros(n, 3),
        constant: Matrix3::zeros(),
        joint_unknowns: joint,
    };
    let iota = iota();
    for_each_point(&dirs, |cell, p| {
        let c = &reduced[index_of(slab.fiber_at(cell[2], cell[0], cell[1]))];
        let mut unknowns: Vec<(usize, Vector6<f64>)> = Vec::with_capacity(3 + p.columns.len());
        unknowns.extend((0..3).map(|k| (k, iota.column(k).into_owned())));
        for (node, comp, col) in &p.columns {
            if *node != 0 {
                unknowns.push((3 + 3 * (node - 1) + comp, *col));
            }
        }
        accumulate(&mut problem, c, p.weight, &unknowns, &(iota * p.x[2]));
    });
    Ok(problem)
}

/// `min` over `(B, d, φ)` of the thickness-comparable plate energy at `a`.
pub fn brute_force_regime2(slab: &SlabMaterial, a: &SymMat2) -> Result<f64> {
    regime2_problem(slab)?.energy(a)
}

/// Bending form of two equal layers `c₁·base` (bottom) and `c₂·base` (top).
pub fn bilayer_closed_form(c1: f64, c2: f64, base: &QuadForm2) -> Result<QuadForm2> {
    if !(c1 > 0.0 && c2 > 0.0) {
        return Err(Error::InvalidInput(format!("phase scalars must be positive, got {c1} and {c2}")));
    }
    let factor = (c1 + c2) / 24.0 - (c2 - c1).powi(2) / (32.0 * (c1 + c2));
    Ok(base.scaled(factor))
}

/// Means of the fiber profile `λ₂` for `λ₂(y₃)·2μ|sym G|²` laminates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LaminateFactors {
    pub arithmetic: f64,
    pub harmonic: f64,
    pub mu: f64,
}

impl LaminateFactors {
    /// The fiber-reduced (equivalently, homogenized) 3D form.
    pub fn reduced_form(&self) -> QuadForm3 {
        let (a, h) = (2.0 * self.mu * self.arithmetic, 2.0 * self.mu * self.harmonic);
        QuadForm3::new(Matrix6::from_diagonal(&Vector6::new(a, a, h, h, h, a))).expect("diagonal")
    }

    /// Predicted bending form for either regime.
    pub fn bending_form(&self) -> QuadForm2 {
        QuadForm2::scalar(2.0 * self.mu * self.arithmetic / 12.0)
    }
}

pub fn laminate_closed_form(lambda2: &[f64], mu: f64) -> Result<LaminateFactors> {
    if lambda2.is_empty() || lambda2.iter().any(|l| !(*l > 0.0)) || !(mu > 0.0) {
        return Err(Error::InvalidInput("laminate samples and mu must be positive".into()));
    }
    let n = lambda2.len() as f64;
    Ok(LaminateFactors {
        arithmetic: lambda2.iter().sum::<f64>() / n,
        harmonic: n / lambda2.iter().map(|l| l.recip()).sum::<f64>(),
        mu,
    })
}
