//! Jacobi-preconditioned conjugate gradients on the gauge-fixed corrector
//! systems. The stiffness is only semidefinite (rigid translations), so
//! iterates are projected onto zero nodal mean per component.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Relative residual `‖r‖ / ‖f‖` at which iteration stops.
    pub tol: f64,
    /// Iteration cap; `None` means `5000 · (unknowns)^(1/3)`.
    pub max_iterations: Option<usize>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { tol: 1e-10, max_iterations: None }
    }
}

impl SolverSettings {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidInput(format!("solver tolerance must be positive, got {}", self.tol)));
        }
        Ok(())
    }

    fn cap(&self, unknowns: usize) -> usize {
        self.max_iterations
            .unwrap_or_else(|| (5000.0 * (unknowns as f64).cbrt()).ceil() as usize)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Removes the mean of each of the three displacement components.
pub(crate) fn project_zero_mean(v: &mut [f64]) {
    let n = v.len() / 3;
    for comp in 0..3 {
        let mean = v.iter().skip(comp).step_by(3).sum::<f64>() / n as f64;
        v.iter_mut().skip(comp).step_by(3).for_each(|x| *x -= mean);
    }
}

/// Solves `K u = f` for `u` with zero nodal mean.
///
/// `f_abs` carries the magnitudes that were summed into `f`; a right-hand
/// side that cancels to rounding level relative to it is treated as zero.
pub(crate) fn solve(
    apply: impl Fn(&[f64], &mut [f64]),
    diagonal: &[f64],
    f: &[f64],
    f_abs: &[f64],
    initial: Option<&[f64]>,
    settings: &SolverSettings,
) -> Result<(Vec<f64>, SolveStats)> {
    settings.validate()?;
    let n = f.len();
    let fnorm = dot(f, f).sqrt();
    let scale = dot(f_abs, f_abs).sqrt();
    if fnorm <= 1e-13 * scale || fnorm == 0.0 {
        return Ok((vec![0.0; n], SolveStats { iterations: 0, relative_residual: 0.0 }));
    }
    let inv_diag: Vec<f64> = diagonal.iter().map(|d| if *d > 0.0 { 1.0 / d } else { 1.0 }).collect();

    let mut x = initial.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    project_zero_mean(&mut x);
    let mut r = vec![0.0; n];
    apply(&x, &mut r);
    r.iter_mut().zip(f).for_each(|(r, f)| *r = f - *r);
    project_zero_mean(&mut r);

    let precondition = |r: &[f64], z: &mut Vec<f64>| {
        z.clear();
        z.extend(r.iter().zip(&inv_diag).map(|(r, d)| r * d));
        project_zero_mean(z);
    };
    let mut z = Vec::with_capacity(n);
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut history = vec![dot(&r, &r).sqrt() / fnorm];

    let cap = settings.cap(n);
    for it in 0..cap {
        let res = *history.last().unwrap();
        if res <= settings.tol {
            return Ok((x, SolveStats { iterations: it, relative_residual: res }));
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        x.iter_mut().zip(&p).for_each(|(x, p)| *x += alpha * p);
        r.iter_mut().zip(&ap).for_each(|(r, a)| *r -= alpha * a);
        project_zero_mean(&mut r);
        precondition(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
        history.push(dot(&r, &r).sqrt() / fnorm);
    }
    let res = *history.last().unwrap();
    if res <= settings.tol {
        return Ok((x, SolveStats { iterations: history.len() - 1, relative_residual: res }));
    }
    Err(Error::NotConverged { iterations: history.len() - 1, tol: settings.tol, residuals: history })
}
