//! Acceptance gate. Runs every criterion, prints one line each, and exits
//! non-zero if any of them fails. Tolerances are fixed here on purpose; do
//! not loosen them to make a run pass.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::Matrix3;
use plate_homog::app::{self, Command, Overrides, Payload, SurfaceSpec};
use plate_homog::cg::SolverSettings;
use plate_homog::forms::{MaterialBounds, QuadForm2, QuadForm3, SymMat2, SymMat3};
use plate_homog::homog3d::{bending_form_regime1, corrector_solve_3d, CellMaterial3};
use plate_homog::homogslab::{
    bending_form_regime2, example_reduced_form, fiber_reduce, slab_corrector_solve, FiberMaterial, SlabLoad,
    SlabMaterial,
};
use plate_homog::oracle::{bilayer_closed_form, laminate_closed_form, regime1_problem, regime2_problem};
use plate_homog::reduction::{bending_form, oscillation_table, plane_stress_reduce, PeriodicProfile, ThicknessProfile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{fixture, rel_diff, random_bounds, random_form2, random_form3};

type Outcome = Result<String, String>;

fn frob_rel(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

fn tight() -> SolverSettings {
    SolverSettings::with_tol(1e-12)
}

fn random_a(rng: &mut impl Rng) -> SymMat2 {
    SymMat2::new(std::array::from_fn(|_| rng.gen_range(-1.0..1.0)))
}

fn plane_stress_closed_form() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let mu = rng.gen_range(0.05..10.0);
        let lambda = rng.gen_range(0.0..10.0);
        let q2 = plane_stress_reduce(&QuadForm3::isotropic(mu, lambda).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?
            .form;
        // 2μ|A|² + c(tr A)² in Mandel coordinates
        let c = 2.0 * mu * lambda / (lambda + 2.0 * mu);
        let t = nalgebra::Vector3::new(1.0, 1.0, 0.0);
        let expected = Matrix3::identity() * (2.0 * mu) + t * t.transpose() * c;
        worst = worst.max(frob_rel(q2.matrix(), &expected));
    }
    let elapsed = start.elapsed();
    let detail = format!("max rel err {worst:.2e} (<= 1e-12), {elapsed:.2?} (< 1 s)");
    if worst <= 1e-12 && elapsed < Duration::from_secs(1) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn homogeneous_bending_factor() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let c2 = random_form2(&mut rng, 0.1, 10.0);
        let b = bending_form(&ThicknessProfile::constant(c2.clone())).map_err(|e| e.to_string())?;
        worst = worst.max(frob_rel(b.form.matrix(), &(c2.matrix() / 12.0)));
        if b.moments.m1.norm() != 0.0 {
            return Err(format!("first moment is {:e}, expected exactly 0", b.moments.m1.norm()));
        }
    }
    let detail = format!("max rel err {worst:.2e} (<= 1e-14)");
    if worst <= 1e-14 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn bilayer() -> Outcome {
    let id = QuadForm2::scalar(1.0);
    let profile = ThicknessProfile::layers(vec![-0.5, 0.0, 0.5], vec![id.clone(), id.scaled(3.0)]).map_err(|e| e.to_string())?;
    let q0 = bending_form(&profile).map_err(|e| e.to_string())?.form;
    let err = (q0.matrix() - Matrix3::identity() * (13.0 / 96.0)).abs().max();
    let oracle = bilayer_closed_form(1.0, 3.0, &id).map_err(|e| e.to_string())?;
    let err_oracle = (q0.matrix() - oracle.matrix()).abs().max();
    let detail = format!("|Q0 - 13/96 I| = {err:.2e}, |Q0 - closed form| = {err_oracle:.2e} (<= 1e-12)");
    if err <= 1e-12 && err_oracle <= 1e-12 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sandwich_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_margin = f64::INFINITY;
    for trial in 0..100 {
        let (declared, sampling) = random_bounds(&mut rng);
        let layers = rng.gen_range(1..=6);
        let mut cuts: Vec<f64> = (0..layers - 1).map(|_| rng.gen_range(-0.5..0.5)).collect();
        cuts.extend([-0.5, 0.5]);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let forms = (0..cuts.len() - 1).map(|_| random_form2(&mut rng, sampling.eta1, sampling.eta2)).collect();
        let profile = ThicknessProfile::layers(cuts, forms).map_err(|e| e.to_string())?;
        profile.check_class(&declared).map_err(|e| format!("trial {trial}: {e}"))?;
        let ev = bending_form(&profile).map_err(|e| e.to_string())?.form.eigenvalues();
        let lo = ev[0] - (declared.eta1 / 12.0 - 1e-10);
        let hi = declared.eta2 / 12.0 + 1e-10 - ev[2];
        worst_margin = worst_margin.min(lo).min(hi);
        if lo < 0.0 || hi < 0.0 {
            return Err(format!("trial {trial}: eigenvalues {ev:?} outside [{}, {}]", declared.eta1 / 12.0, declared.eta2 / 12.0));
        }
    }
    Ok(format!("100 profiles inside [eta1/12, eta2/12] (smallest margin {worst_margin:.2e})"))
}

fn oscillation_convergence() -> Outcome {
    let start = Instant::now();
    let base = PeriodicProfile::uniform(vec![QuadForm2::scalar(1.0), QuadForm2::scalar(3.0)]).map_err(|e| e.to_string())?;
    let (limit, rows) = oscillation_table(&base, &[1, 2, 4, 8, 16, 32]).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let monotone = rows.windows(2).all(|w| w[1].distance <= w[0].distance);
    let last = rows.last().unwrap().distance;
    let target = 1e-3 * limit.matrix().norm();
    let detail = format!(
        "distances {:?}, final {last:.2e} (<= {target:.2e}), non-increasing: {monotone}, {elapsed:.2?} (< 5 s)",
        rows.iter().map(|r| format!("{:.1e}", r.distance)).collect::<Vec<_>>()
    );
    if monotone && last <= target && elapsed < Duration::from_secs(5) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn example_inner_reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.gen_range(1..=8);
        let lambda2: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..10.0)).collect();
        let lambda1 = rng.gen_range(0.2..5.0);
        let mu = rng.gen_range(0.2..5.0);
        let base = QuadForm3::isotropic(mu, 0.0).map_err(|e| e.to_string())?;
        let fiber = FiberMaterial::uniform(lambda2.iter().map(|l| base.scaled(lambda1 * l)).collect())
            .map_err(|e| e.to_string())?;
        let got = fiber_reduce(&fiber).map_err(|e| e.to_string())?;
        let want = example_reduced_form(lambda1, &lambda2, mu).map_err(|e| e.to_string())?;
        worst = worst.max((got.matrix() - want.matrix()).norm() / want.matrix().norm());
    }
    let detail = format!("max rel err {worst:.2e} over 50 fibers (<= 1e-10)");
    if worst <= 1e-10 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_cell(rng: &mut impl Rng, grid: [usize; 3]) -> Result<CellMaterial3, String> {
    let (declared, sampling) = random_bounds(rng);
    let forms = (0..grid.iter().product::<usize>()).map(|_| random_form3(rng, &sampling)).collect();
    CellMaterial3::new(grid, forms, declared).map_err(|e| e.to_string())
}

fn random_slab(rng: &mut impl Rng, x3: usize, inplane: [usize; 2], samples: usize) -> Result<SlabMaterial, String> {
    let (declared, sampling) = random_bounds(rng);
    let n = x3 * inplane[0] * inplane[1];
    let fibers = (0..n)
        .map(|_| FiberMaterial::uniform((0..samples).map(|_| random_form3(rng, &sampling)).collect()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    SlabMaterial::new(x3, inplane, fibers, (0..n).collect(), declared).map_err(|e| e.to_string())
}

fn oracle_regime1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let mut slowest = Duration::ZERO;
    for _ in 0..3 {
        let cell = random_cell(&mut rng, [4, 4, 4])?;
        let start = Instant::now();
        let q0 = bending_form_regime1(&cell, &tight()).map_err(|e| e.to_string())?.q0;
        let oracle = regime1_problem(&cell, 8).map_err(|e| e.to_string())?;
        let q_oracle = oracle.effective_matrix().map_err(|e| e.to_string())?;
        for _ in 0..5 {
            let a = random_a(&mut rng);
            let brute = a.0.dot(&(q_oracle * a.0));
            worst = worst.max(rel_diff(q0.eval(&a), brute));
        }
        slowest = slowest.max(start.elapsed());
    }
    let detail = format!("max rel diff {worst:.2e} (<= 1e-8), slowest cell {slowest:.2?} (< 10 s)");
    if worst <= 1e-8 && slowest < Duration::from_secs(10) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn oracle_regime2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    let mut slowest = Duration::ZERO;
    for _ in 0..3 {
        let slab = random_slab(&mut rng, 4, [4, 4], 4)?;
        let start = Instant::now();
        let q0 = bending_form_regime2(&slab, &tight()).map_err(|e| e.to_string())?.q0;
        let oracle = regime2_problem(&slab).map_err(|e| e.to_string())?;
        let q_oracle = oracle.effective_matrix().map_err(|e| e.to_string())?;
        for _ in 0..5 {
            let a = random_a(&mut rng);
            let brute = a.0.dot(&(q_oracle * a.0));
            worst = worst.max(rel_diff(q0.eval(&a), brute));
        }
        slowest = slowest.max(start.elapsed());
    }
    let detail = format!("max rel diff {worst:.2e} (<= 1e-8), slowest slab {slowest:.2?} (< 10 s)");
    if worst <= 1e-8 && slowest < Duration::from_secs(10) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn check_effective(label: &str, q0: &QuadForm2, bounds: &MaterialBounds) -> Result<(), String> {
    let m = q0.matrix();
    let asym = (m - m.transpose()).abs().max();
    let ev = q0.eigenvalues();
    if !(ev[0] > 0.0) || asym > 1e-12 || ev[2] > bounds.eta2 / 12.0 + 1e-10 {
        return Err(format!("{label}: eigenvalues {ev:?}, asymmetry {asym:.1e}, eta2/12 = {}", bounds.eta2 / 12.0));
    }
    Ok(())
}

fn positive_definite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut smallest = f64::INFINITY;
    for i in 0..20 {
        let (declared, sampling) = random_bounds(&mut rng);
        let profile = ThicknessProfile::layers(
            vec![-0.5, -0.1, 0.2, 0.5],
            (0..3).map(|_| random_form2(&mut rng, sampling.eta1, sampling.eta2)).collect(),
        )
        .map_err(|e| e.to_string())?;
        let q = bending_form(&profile).map_err(|e| e.to_string())?.form;
        check_effective(&format!("thickness profile {i}"), &q, &declared)?;
        smallest = smallest.min(q.eigenvalues()[0]);
    }
    for i in 0..20 {
        let cell = random_cell(&mut rng, [2, 2, 2])?;
        let q = bending_form_regime1(&cell, &tight()).map_err(|e| e.to_string())?.q0;
        check_effective(&format!("regime 1 cell {i}"), &q, &cell.bounds())?;
        smallest = smallest.min(q.eigenvalues()[0]);
    }
    for i in 0..20 {
        let slab = random_slab(&mut rng, 2, [2, 2], 3)?;
        let q = bending_form_regime2(&slab, &tight()).map_err(|e| e.to_string())?.q0;
        check_effective(&format!("regime 2 slab {i}"), &q, &slab.bounds())?;
        smallest = smallest.min(q.eigenvalues()[0]);
    }
    Ok(format!("60 materials symmetric, positive definite, below eta2/12 (smallest eigenvalue {smallest:.2e})"))
}

fn regime_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let two_phase: Vec<f64> = vec![1.0, 3.0];
    let random_phases: Vec<f64> = (0..4).map(|_| rng.gen_range(0.3..4.0)).collect();
    let poisson: Vec<(f64, f64)> = (0..3).map(|_| (rng.gen_range(0.5..2.0), rng.gen_range(0.1..2.0))).collect();

    let mut laminates: Vec<(String, Vec<QuadForm3>, Option<(Vec<f64>, f64)>)> = Vec::new();
    for (name, lambda2, mu) in [("two-phase nu=0", &two_phase, 1.0), ("random nu=0", &random_phases, 0.8)] {
        let base = QuadForm3::isotropic(mu, 0.0).map_err(|e| e.to_string())?;
        laminates.push((name.into(), lambda2.iter().map(|l| base.scaled(*l)).collect(), Some((lambda2.clone(), mu))));
    }
    laminates.push((
        "random nu>0".into(),
        poisson.iter().map(|&(m, l)| QuadForm3::isotropic(m, l)).collect::<Result<_, _>>().map_err(|e| e.to_string())?,
        None,
    ));

    let mut worst: f64 = 0.0;
    let mut worst_closed: f64 = 0.0;
    for (name, forms, closed) in laminates {
        let hi = forms.iter().map(|f| f.eigenvalues()[5]).fold(0.0, f64::max);
        let lo = forms.iter().map(|f| f.eigenvalues()[0]).fold(f64::INFINITY, f64::min);
        let bounds = MaterialBounds::new(lo * (1.0 - 1e-9), hi * (1.0 + 1e-9)).map_err(|e| e.to_string())?;
        let cell = CellMaterial3::new([1, 1, forms.len()], forms.clone(), bounds).map_err(|e| e.to_string())?;
        let fiber = FiberMaterial::uniform(forms).map_err(|e| e.to_string())?;
        let slab = SlabMaterial::broadcast(2, [1, 1], fiber, bounds).map_err(|e| e.to_string())?;
        let q1 = bending_form_regime1(&cell, &tight()).map_err(|e| e.to_string())?.q0;
        let q2 = bending_form_regime2(&slab, &tight()).map_err(|e| e.to_string())?.q0;
        let d = frob_rel(q1.matrix(), q2.matrix());
        worst = worst.max(d);
        if d > 1e-8 {
            return Err(format!("{name}: regimes differ by {d:.2e}"));
        }
        if let Some((lambda2, mu)) = closed {
            let predicted = laminate_closed_form(&lambda2, mu).map_err(|e| e.to_string())?.bending_form();
            let e = frob_rel(q1.matrix(), predicted.matrix()).max(frob_rel(q2.matrix(), predicted.matrix()));
            worst_closed = worst_closed.max(e);
            if e > 1e-8 {
                return Err(format!("{name}: closed form differs by {e:.2e}"));
            }
        }
    }
    Ok(format!("regime 1 vs 2 max rel diff {worst:.2e}, vs laminate closed form {worst_closed:.2e} (<= 1e-8)"))
}

fn refinement_monotonicity() -> Outcome {
    let settings = SolverSettings::with_tol(1e-10);
    let overrides = Overrides::default();
    let mut lines = Vec::new();

    let cell = match app::parse_material_spec(&fixture("cell.json"), Command::HomogRegime1, &overrides) {
        Ok(s) => match s.payload {
            Payload::Cell(m) => m,
            _ => return Err("cell fixture has the wrong payload".into()),
        },
        Err(e) => return Err(e.to_string()),
    };
    let fine_cell = cell.refined();
    for k in 0..6 {
        let e = SymMat3::basis(k);
        let coarse = corrector_solve_3d(&cell, &e, &settings).map_err(|e| e.to_string())?.energy;
        let fine = corrector_solve_3d(&fine_cell, &e, &settings).map_err(|e| e.to_string())?.energy;
        if fine > coarse * (1.0 + 1e-10) {
            return Err(format!("cell load {k}: refined energy {fine} above coarse {coarse}"));
        }
        lines.push(coarse - fine);
    }

    let slab = match app::parse_material_spec(&fixture("slab.json"), Command::HomogRegime2, &overrides) {
        Ok(s) => match s.payload {
            Payload::Slab(m) => m,
            _ => return Err("slab fixture has the wrong payload".into()),
        },
        Err(e) => return Err(e.to_string()),
    };
    let coarse_slab = slab.reduce().map_err(|e| e.to_string())?;
    let fine_slab = slab.refined().reduce().map_err(|e| e.to_string())?;
    for load in (0..3).map(SlabLoad::Bend).chain((0..3).map(SlabLoad::Stretch)) {
        let coarse = slab_corrector_solve(&coarse_slab, load, &settings).map_err(|e| e.to_string())?.energy;
        let fine = slab_corrector_solve(&fine_slab, load, &settings).map_err(|e| e.to_string())?.energy;
        if fine > coarse * (1.0 + 1e-10) {
            return Err(format!("slab load {load:?}: refined energy {fine} above coarse {coarse}"));
        }
        lines.push(coarse - fine);
    }
    let min_drop = lines.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(format!("12 loads on cell and slab fixtures non-increasing (smallest drop {min_drop:.2e})"))
}

fn plate_energy_scaling() -> Outcome {
    let s = app::parse_material_spec(&fixture("homogeneous.json"), Command::Bending, &Overrides::default())
        .map_err(|e| e.to_string())?;
    let Payload::Homogeneous(q) = &s.payload else { return Err("homogeneous fixture has the wrong payload".into()) };
    let q0 = bending_form(&ThicknessProfile::constant(plane_stress_reduce(q).map_err(|e| e.to_string())?.form))
        .map_err(|e| e.to_string())?
        .form;
    let energy = |radius: f64| {
        app::plate_energy(&q0, &SurfaceSpec::Cylinder { radius, extents: [1.0, 1.0] }).map_err(|e| e.to_string())
    };
    let unit = energy(1.0)?;
    if (unit - 1.0 / 6.0).abs() > 1e-15 {
        return Err(format!("unit cylinder energy {unit}, expected mu/6 = 1/6"));
    }
    for r in [1.0, 0.3, 2.5, 7.0] {
        let (e1, e2) = (energy(r)?, energy(2.0 * r)?);
        if e1 != 4.0 * e2 {
            return Err(format!("R = {r}: E(R) = {e1:e}, 4 E(2R) = {:e}", 4.0 * e2));
        }
    }
    Ok(format!("E(R) = 4 E(2R) bit-exactly for R in {{1, 0.3, 2.5, 7}}; E(1) = {unit}"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("plane-stress reduction closed form", plane_stress_closed_form),
        ("homogeneous bending factor", homogeneous_bending_factor),
        ("bilayer 13/96", bilayer),
        ("sandwich bound", sandwich_bound),
        ("oscillating profile convergence", oscillation_convergence),
        ("separable fiber reduction", example_inner_reduction),
        ("regime 1 vs dense oracle", oracle_regime1),
        ("regime 2 vs dense oracle", oracle_regime2),
        ("positive definiteness and symmetry", positive_definite),
        ("regime consistency on laminates", regime_consistency),
        ("refinement monotonicity", refinement_monotonicity),
        ("cylinder plate energy", plate_energy_scaling),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("[PASS] {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
