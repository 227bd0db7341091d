//! Tensor-product Lagrange elements on a uniform box grid, shared by the
//! Y³ cell problem and the I×Y² slab problem.
//!
//! Material is constant per cell. Every axis is integrated with enough Gauss
//! points to be exact for the element energies, so a nested subdivision
//! yields a superset discrete space for the same functional.

use nalgebra::{Matrix6, Vector6};

use crate::quadrature::gauss_legendre_on;

const FRAC_1_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Order {
    Linear,
    Quadratic,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Axis {
    pub cells: usize,
    pub order: Order,
    pub periodic: bool,
    pub lo: f64,
    pub hi: f64,
}

impl Axis {
    pub fn periodic_linear(cells: usize) -> Self {
        Self { cells, order: Order::Linear, periodic: true, lo: 0.0, hi: 1.0 }
    }

    fn h(&self) -> f64 {
        (self.hi - self.lo) / self.cells as f64
    }

    fn local(&self) -> usize {
        match self.order {
            Order::Linear => 2,
            Order::Quadratic => 3,
        }
    }

    pub fn nodes(&self) -> usize {
        let per = self.cells * (self.local() - 1);
        if self.periodic {
            per
        } else {
            per + 1
        }
    }

    fn global(&self, cell: usize, local: usize) -> usize {
        let idx = cell * (self.local() - 1) + local;
        if self.periodic {
            idx % self.nodes()
        } else {
            idx
        }
    }

    /// Shape values and reference derivatives at `t ∈ [0, 1]`.
    fn shape(&self, t: f64) -> ([f64; 3], [f64; 3]) {
        match self.order {
            Order::Linear => ([1.0 - t, t, 0.0], [-1.0, 1.0, 0.0]),
            Order::Quadratic => (
                [2.0 * (t - 0.5) * (t - 1.0), -4.0 * t * (t - 1.0), 2.0 * t * (t - 0.5)],
                [4.0 * t - 3.0, 4.0 - 8.0 * t, 4.0 * t - 1.0],
            ),
        }
    }

    fn gauss(&self) -> (Vec<f64>, Vec<f64>) {
        gauss_legendre_on(self.local(), 0.0, 1.0)
    }
}

#[derive(Clone, Debug)]
struct QuadPoint {
    /// Physical weight, cell volume included.
    weight: f64,
    /// Reference coordinates inside the cell.
    reference: [f64; 3],
    /// Physical gradients of the local shape functions.
    grads: Vec<[f64; 3]>,
}

/// Macroscopic strain imposed on the cell problem.
#[derive(Clone, Copy, Debug)]
pub(crate) enum Load {
    Constant(Vector6<f64>),
    /// `x₃ · E`, with `x₃` the physical coordinate along the third axis.
    LinearInThird(Vector6<f64>),
}

#[derive(Clone, Debug)]
pub(crate) struct Mesh {
    pub axes: [Axis; 3],
    quad: Vec<QuadPoint>,
    nloc: [usize; 3],
}

impl Mesh {
    pub fn new(axes: [Axis; 3]) -> Self {
        let nloc = [axes[0].local(), axes[1].local(), axes[2].local()];
        let h = [axes[0].h(), axes[1].h(), axes[2].h()];
        let rules = [axes[0].gauss(), axes[1].gauss(), axes[2].gauss()];
        let mut quad = Vec::new();
        for (t0, w0) in rules[0].0.iter().zip(&rules[0].1) {
            for (t1, w1) in rules[1].0.iter().zip(&rules[1].1) {
                for (t2, w2) in rules[2].0.iter().zip(&rules[2].1) {
                    let t = [*t0, *t1, *t2];
                    let s: Vec<_> = (0..3).map(|k| axes[k].shape(t[k])).collect();
                    let mut grads = Vec::with_capacity(nloc[0] * nloc[1] * nloc[2]);
                    for a in 0..nloc[0] {
                        for b in 0..nloc[1] {
                            for c in 0..nloc[2] {
                                grads.push([
                                    s[0].1[a] * s[1].0[b] * s[2].0[c] / h[0],
                                    s[0].0[a] * s[1].1[b] * s[2].0[c] / h[1],
                                    s[0].0[a] * s[1].0[b] * s[2].1[c] / h[2],
                                ]);
                            }
                        }
                    }
                    quad.push(QuadPoint { weight: w0 * w1 * w2 * h[0] * h[1] * h[2], reference: t, grads });
                }
            }
        }
        Self { axes, quad, nloc }
    }

    #[cfg(test)]
    pub fn cell_count(&self) -> usize {
        self.axes.iter().map(|a| a.cells).product()
    }

    pub fn node_count(&self) -> usize {
        self.axes.iter().map(|a| a.nodes()).product()
    }

    pub fn dofs(&self) -> usize {
        3 * self.node_count()
    }

    pub fn cell_index(&self, c: [usize; 3]) -> usize {
        (c[0] * self.axes[1].cells + c[1]) * self.axes[2].cells + c[2]
    }

    fn cells(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let n = [self.axes[0].cells, self.axes[1].cells, self.axes[2].cells];
        (0..n[0]).flat_map(move |i| (0..n[1]).flat_map(move |j| (0..n[2]).map(move |k| [i, j, k])))
    }

    /// Global node numbers of a cell, third axis fastest.
    fn cell_nodes(&self, c: [usize; 3], out: &mut Vec<usize>) {
        out.clear();
        let nn = [self.axes[0].nodes(), self.axes[1].nodes(), self.axes[2].nodes()];
        for a in 0..self.nloc[0] {
            let g0 = self.axes[0].global(c[0], a);
            for b in 0..self.nloc[1] {
                let g1 = self.axes[1].global(c[1], b);
                for d in 0..self.nloc[2] {
                    let g2 = self.axes[2].global(c[2], d);
                    out.push((g0 * nn[1] + g1) * nn[2] + g2);
                }
            }
        }
    }

    fn third_coordinate(&self, cell: usize, q: &QuadPoint) -> f64 {
        let ax = &self.axes[2];
        ax.lo + (cell as f64 + q.reference[2]) * ax.h()
    }

    fn load_at(&self, load: &Load, c: [usize; 3], q: &QuadPoint) -> Vector6<f64> {
        match load {
            Load::Constant(e) => *e,
            Load::LinearInThird(e) => e * self.third_coordinate(c[2], q),
        }
    }
}

/// Mandel strain of the displacement gradient `Σ_a u_a ⊗ ∇N_a`.
fn strain(grads: &[[f64; 3]], nodes: &[usize], u: &[f64]) -> Vector6<f64> {
    let mut e = [0.0; 6];
    for (g, &n) in grads.iter().zip(nodes) {
        let (u0, u1, u2) = (u[3 * n], u[3 * n + 1], u[3 * n + 2]);
        e[0] += u0 * g[0];
        e[1] += u1 * g[1];
        e[2] += u2 * g[2];
        e[3] += (u1 * g[2] + u2 * g[1]) * FRAC_1_SQRT2;
        e[4] += (u0 * g[2] + u2 * g[0]) * FRAC_1_SQRT2;
        e[5] += (u0 * g[1] + u1 * g[0]) * FRAC_1_SQRT2;
    }
    Vector6::from(e)
}

/// Adds `w · Bᵀ s` into the global vector.
fn scatter(grads: &[[f64; 3]], nodes: &[usize], s: &Vector6<f64>, w: f64, out: &mut [f64]) {
    for (g, &n) in grads.iter().zip(nodes) {
        out[3 * n] += w * (g[0] * s[0] + (g[2] * s[4] + g[1] * s[5]) * FRAC_1_SQRT2);
        out[3 * n + 1] += w * (g[1] * s[1] + (g[2] * s[3] + g[0] * s[5]) * FRAC_1_SQRT2);
        out[3 * n + 2] += w * (g[2] * s[2] + (g[1] * s[3] + g[0] * s[4]) * FRAC_1_SQRT2);
    }
}

/// Like [`scatter`] with every product taken in absolute value.
fn scatter_abs(grads: &[[f64; 3]], nodes: &[usize], s: &Vector6<f64>, w: f64, out: &mut [f64]) {
    let r = FRAC_1_SQRT2;
    for (g, &n) in grads.iter().zip(nodes) {
        let g = [g[0].abs(), g[1].abs(), g[2].abs()];
        let s = s.abs();
        out[3 * n] += w * (g[0] * s[0] + (g[2] * s[4] + g[1] * s[5]) * r);
        out[3 * n + 1] += w * (g[1] * s[1] + (g[2] * s[3] + g[0] * s[5]) * r);
        out[3 * n + 2] += w * (g[2] * s[2] + (g[1] * s[3] + g[0] * s[4]) * r);
    }
}

/// Stiffness operator of `u ↦ Σ_cells ∫ ε(u)ᵀ C ε(u)` with per-cell `C`.
pub(crate) struct Elasticity<'a> {
    pub mesh: &'a Mesh,
    pub materials: &'a [Matrix6<f64>],
}

impl Elasticity<'_> {
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut nodes = Vec::new();
        for c in self.mesh.cells() {
            let cm = &self.materials[self.mesh.cell_index(c)];
            self.mesh.cell_nodes(c, &mut nodes);
            for q in &self.mesh.quad {
                let s = cm * strain(&q.grads, &nodes, u);
                scatter(&q.grads, &nodes, &s, q.weight, out);
            }
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.mesh.dofs()];
        let mut nodes = Vec::new();
        for c in self.mesh.cells() {
            let cm = &self.materials[self.mesh.cell_index(c)];
            self.mesh.cell_nodes(c, &mut nodes);
            for q in &self.mesh.quad {
                for (g, &n) in q.grads.iter().zip(&nodes) {
                    for comp in 0..3 {
                        let mut b = [0.0; 6];
                        match comp {
                            0 => {
                                b[0] = g[0];
                                b[4] = g[2] * FRAC_1_SQRT2;
                                b[5] = g[1] * FRAC_1_SQRT2;
                            }
                            1 => {
                                b[1] = g[1];
                                b[3] = g[2] * FRAC_1_SQRT2;
                                b[5] = g[0] * FRAC_1_SQRT2;
                            }
                            _ => {
                                b[2] = g[2];
                                b[3] = g[1] * FRAC_1_SQRT2;
                                b[4] = g[0] * FRAC_1_SQRT2;
                            }
                        }
                        let b = Vector6::from(b);
                        d[3 * n + comp] += q.weight * b.dot(&(cm * b));
                    }
                }
            }
        }
        d
    }

    /// Right-hand side `−∫ Bᵀ C L` and the same sum taken in absolute value,
    /// used to recognise loads that are balanced up to rounding.
    pub fn rhs(&self, load: &Load) -> (Vec<f64>, Vec<f64>) {
        let mut f = vec![0.0; self.mesh.dofs()];
        let mut fabs = vec![0.0; self.mesh.dofs()];
        let mut nodes = Vec::new();
        for c in self.mesh.cells() {
            let cm = &self.materials[self.mesh.cell_index(c)];
            self.mesh.cell_nodes(c, &mut nodes);
            for q in &self.mesh.quad {
                let s = cm * self.mesh.load_at(load, c, q);
                scatter(&q.grads, &nodes, &s, -q.weight, &mut f);
                scatter_abs(&q.grads, &nodes, &s, q.weight, &mut fabs);
            }
        }
        (f, fabs)
    }

    /// `∫ (Lᵢ + ε(uᵢ))ᵀ C (Lⱼ + ε(uⱼ))`.
    pub fn bilinear(&self, li: &Load, ui: &[f64], lj: &Load, uj: &[f64]) -> f64 {
        let mut total = 0.0;
        let mut nodes = Vec::new();
        for c in self.mesh.cells() {
            let cm = &self.materials[self.mesh.cell_index(c)];
            self.mesh.cell_nodes(c, &mut nodes);
            for q in &self.mesh.quad {
                let ei = self.mesh.load_at(li, c, q) + strain(&q.grads, &nodes, ui);
                let ej = self.mesh.load_at(lj, c, q) + strain(&q.grads, &nodes, uj);
                total += q.weight * ei.dot(&(cm * ej));
            }
        }
        total
    }
}
