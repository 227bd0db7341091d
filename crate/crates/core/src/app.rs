//! Command line front end: spec files in, JSON reports and CSV tables out.
//!
//! Every input file is a JSON object tagged with the coordinate convention.
//! The schemas are documented in `docs/formats.md`; the fixtures under
//! `crates/core/fixtures/` are one valid instance of each.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cg::SolverSettings;
use crate::error::{Error, Result};
use crate::forms::{MaterialBounds, QuadForm2, QuadForm3, SymMat2, CONVENTION};
use crate::homog3d::{bending_form_regime1, CellMaterial3};
use crate::homogslab::{bending_form_regime2, fiber_reduce, FiberMaterial, SlabMaterial};
use crate::oracle::{brute_force_regime1, brute_force_regime2};
use crate::reduction::{bending_form, oscillation_table, plane_stress_reduce, PeriodicProfile, ThicknessProfile};
use crate::report::{Diagnostics, EffectiveReport, RunSettings};

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "PLATE_HOMOG_THREADS";

/// Relative agreement demanded by `oracle-check`.
pub const ORACLE_TOLERANCE: f64 = 1e-8;

const DEFAULT_PERIODS: [usize; 6] = [1, 2, 4, 8, 16, 32];
const DEFAULT_X3_SAMPLES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Reduce,
    Bending,
    HomogRegime1,
    HomogRegime2,
    Oscillate,
    OracleCheck,
    Energy,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Reduce => "reduce",
            Command::Bending => "bending",
            Command::HomogRegime1 => "homog-regime1",
            Command::HomogRegime2 => "homog-regime2",
            Command::Oscillate => "oscillate",
            Command::OracleCheck => "oracle-check",
            Command::Energy => "energy",
            Command::Sweep => "sweep",
        }
    }
}

/// Command line values that take precedence over the spec file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub tol: Option<f64>,
    pub grid: Option<[usize; 3]>,
    pub quadrature: Option<usize>,
}

// ---------------------------------------------------------------------------
// raw file schema

#[derive(Deserialize)]
#[serde(untagged)]
enum RawForm {
    Isotropic {
        mu: f64,
        lambda: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    Scalar {
        scalar: f64,
    },
    Matrix {
        matrix: Vec<Vec<f64>>,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFiber {
    #[serde(default)]
    breaks: Option<Vec<f64>>,
    forms: Vec<RawForm>,
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
enum RawMaterial {
    Homogeneous {
        form: RawForm,
    },
    /// 3D layers through the thickness, reduced to plane stress.
    Layers {
        breaks: Vec<f64>,
        forms: Vec<RawForm>,
    },
    /// Plane-stress forms given directly.
    PlaneStressLayers {
        breaks: Vec<f64>,
        forms: Vec<RawForm>,
    },
    Periodic {
        #[serde(default)]
        breaks: Option<Vec<f64>>,
        forms: Vec<RawForm>,
    },
    Fiber {
        #[serde(default)]
        breaks: Option<Vec<f64>>,
        forms: Vec<RawForm>,
    },
    Cell {
        grid: [usize; 3],
        phases: Vec<RawForm>,
        cells: Vec<usize>,
    },
    Slab {
        x3_cells: usize,
        inplane: [usize; 2],
        fibers: Vec<RawFiber>,
        cells: Vec<usize>,
    },
    Separable {
        x3_cells: usize,
        inplane: [usize; 2],
        lambda1: Vec<f64>,
        lambda2: Vec<f64>,
        mu: f64,
    },
    Effective {
        q0: RawForm,
    },
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSettings {
    tol: Option<f64>,
    max_iterations: Option<usize>,
    grid: Option<Vec<usize>>,
    quadrature: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBounds {
    eta1: f64,
    eta2: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweepEntry {
    name: String,
    command: Command,
    spec: Value,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    #[serde(default)]
    convention: Option<String>,
    #[serde(default)]
    description: Option<String>,
    #[serde(default)]
    bounds: Option<RawBounds>,
    #[serde(default)]
    material: Option<RawMaterial>,
    #[serde(default)]
    settings: RawSettings,
    #[serde(default)]
    surface: Option<SurfaceSpec>,
    #[serde(default)]
    periods: Option<Vec<usize>>,
    #[serde(default)]
    loads: Option<Vec<[f64; 3]>>,
    #[serde(default)]
    scenarios: Option<Vec<RawSweepEntry>>,
}

// ---------------------------------------------------------------------------
// validated scenario

/// Material payload after validation.
#[derive(Clone, Debug)]
pub enum Payload {
    Homogeneous(QuadForm3),
    Layers(ThicknessProfile),
    Periodic(PeriodicProfile),
    Fiber(FiberMaterial),
    Cell(CellMaterial3),
    Slab(SlabMaterial),
    Effective(QuadForm2),
    None,
}

impl Payload {
    fn name(&self) -> &'static str {
        match self {
            Payload::Homogeneous(_) => "homogeneous",
            Payload::Layers(_) => "layers",
            Payload::Periodic(_) => "periodic",
            Payload::Fiber(_) => "fiber",
            Payload::Cell(_) => "cell",
            Payload::Slab(_) => "slab",
            Payload::Effective(_) => "effective",
            Payload::None => "none",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepEntry {
    pub name: String,
    pub scenario: Scenario,
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub command: Command,
    pub spec_path: PathBuf,
    pub bounds: Option<MaterialBounds>,
    pub payload: Payload,
    pub solver: SolverSettings,
    pub grid: Option<[usize; 3]>,
    pub quadrature: Option<usize>,
    pub surface: Option<SurfaceSpec>,
    pub periods: Vec<usize>,
    pub loads: Vec<SymMat2>,
    pub sweep: Vec<SweepEntry>,
}

impl Scenario {
    fn run_settings(&self) -> RunSettings {
        RunSettings {
            command: self.command.name().into(),
            solver: Some(self.solver),
            grid: self.grid.map(|g| g.to_vec()),
            quadrature: self.quadrature,
            spec: Some(self.spec_path.display().to_string()),
        }
    }

    fn mismatch(&self) -> Error {
        Error::Parse {
            path: self.spec_path.clone(),
            field: "material.type".into(),
            message: format!("payload `{}` cannot be used with command `{}`", self.payload.name(), self.command.name()),
        }
    }
}

fn parse_err(path: &Path, field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), field: field.into(), message: message.into() }
}

/// Reads and fully validates a spec file, including every admissibility
/// check on the material samples.
pub fn parse_material_spec(path: &Path, command: Command, overrides: &Overrides) -> Result<Scenario> {
    let text = fs::read_to_string(path)?;
    let value: Value = serde_json::from_str(&text).map_err(|e| parse_err(path, "", e.to_string()))?;
    match value.get("convention") {
        Some(Value::String(s)) if s == CONVENTION => {}
        Some(other) => {
            return Err(Error::Convention { path: path.to_path_buf(), found: Some(other.to_string().trim_matches('"').into()) })
        }
        None => return Err(Error::Convention { path: path.to_path_buf(), found: None }),
    }
    scenario_from_value(path, value, command, overrides)
}

fn scenario_from_value(path: &Path, value: Value, command: Command, overrides: &Overrides) -> Result<Scenario> {
    let raw: RawSpec = serde_path_to_error::deserialize(value).map_err(|e| {
        let field = e.path().to_string();
        parse_err(path, if field == "." { String::new() } else { field }, e.into_inner().to_string())
    })?;
    let _ = (&raw.convention, &raw.description);

    let bounds = raw.bounds.as_ref().map(|b| MaterialBounds::new(b.eta1, b.eta2)).transpose()?;
    let tol = overrides.tol.or(raw.settings.tol);
    let solver = SolverSettings { tol: tol.unwrap_or(SolverSettings::default().tol), max_iterations: raw.settings.max_iterations };
    solver.validate()?;
    let grid = match (overrides.grid, &raw.settings.grid) {
        (Some(g), _) => Some(g),
        (None, Some(g)) => Some(
            <[usize; 3]>::try_from(g.as_slice())
                .map_err(|_| parse_err(path, "settings.grid", "expected three grid sizes"))?,
        ),
        (None, None) => None,
    };
    if grid.is_some_and(|g| g.contains(&0)) {
        return Err(Error::InvalidInput("grid sizes must be positive".into()));
    }
    let quadrature = overrides.quadrature.or(raw.settings.quadrature);
    if quadrature.is_some_and(|q| q < 2) {
        return Err(Error::InvalidInput("quadrature order must be at least 2".into()));
    }

    let payload = match raw.material {
        Some(m) => build_payload(path, m, bounds)?,
        None => Payload::None,
    };

    let sweep = match raw.scenarios {
        Some(entries) => {
            let mut out = Vec::with_capacity(entries.len());
            for (i, e) in entries.into_iter().enumerate() {
                let field = format!("scenarios[{i}]");
                if e.name.is_empty() || !e.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                    return Err(parse_err(path, format!("{field}.name"), "names may only use letters, digits, '-' and '_'"));
                }
                if out.iter().any(|s: &SweepEntry| s.name == e.name) {
                    return Err(parse_err(path, format!("{field}.name"), format!("duplicate scenario name `{}`", e.name)));
                }
                if e.command == Command::Sweep {
                    return Err(parse_err(path, format!("{field}.command"), "sweeps cannot be nested"));
                }
                let mut spec = e.spec;
                if let Value::Object(map) = &mut spec {
                    match map.get("convention") {
                        None => {
                            map.insert("convention".into(), Value::String(CONVENTION.into()));
                        }
                        Some(Value::String(s)) if s == CONVENTION => {}
                        Some(other) => {
                            return Err(Error::Convention { path: path.to_path_buf(), found: Some(other.to_string()) })
                        }
                    }
                }
                let scenario = scenario_from_value(path, spec, e.command, overrides).map_err(|err| match err {
                    Error::Parse { path, field: f, message } => Error::Parse { path, field: format!("{field}.spec.{f}"), message },
                    other => other,
                })?;
                out.push(SweepEntry { name: e.name, scenario });
            }
            out
        }
        None => Vec::new(),
    };

    let loads = raw
        .loads
        .map(|v| v.into_iter().map(SymMat2::new).collect())
        .unwrap_or_else(|| {
            vec![
                SymMat2::basis(0),
                SymMat2::basis(1),
                SymMat2::basis(2),
                SymMat2::identity(),
            ]
        });

    let scenario = Scenario {
        command,
        spec_path: path.to_path_buf(),
        bounds,
        payload,
        solver,
        grid,
        quadrature,
        surface: raw.surface,
        periods: raw.periods.unwrap_or_else(|| DEFAULT_PERIODS.to_vec()),
        loads,
        sweep,
    };
    check_command_inputs(&scenario)?;
    Ok(scenario)
}

fn check_command_inputs(s: &Scenario) -> Result<()> {
    let p = &s.spec_path;
    match s.command {
        Command::Sweep if s.sweep.is_empty() => Err(parse_err(p, "scenarios", "sweep needs at least one scenario")),
        Command::Sweep => Ok(()),
        _ if matches!(s.payload, Payload::None) => Err(parse_err(p, "material", "missing material payload")),
        Command::Energy if s.surface.is_none() => Err(parse_err(p, "surface", "energy needs a surface")),
        Command::Energy => s.surface.as_ref().unwrap().validate(),
        Command::Oscillate if s.periods.contains(&0) || s.periods.is_empty() => {
            Err(parse_err(p, "periods", "period counts must be positive"))
        }
        _ => Ok(()),
    }
}

fn require_bounds(path: &Path, bounds: Option<MaterialBounds>) -> Result<MaterialBounds> {
    bounds.ok_or_else(|| parse_err(path, "bounds", "this material needs declared bounds eta1, eta2"))
}

fn form3(path: &Path, field: &str, raw: &RawForm) -> Result<QuadForm3> {
    match raw {
        RawForm::Isotropic { mu, lambda, scale } => Ok(QuadForm3::isotropic(*mu, *lambda)?.scaled(*scale)),
        RawForm::Scalar { scalar } => QuadForm3::new(nalgebra::Matrix6::identity() * *scalar),
        RawForm::Matrix { matrix } if matrix.len() == 6 => QuadForm3::from_rows(matrix),
        RawForm::Matrix { .. } => Err(parse_err(path, format!("{field}.matrix"), "expected a 6x6 Mandel matrix")),
    }
}

/// Plane-stress form; 3D inputs are reduced.
fn form2(path: &Path, field: &str, raw: &RawForm) -> Result<QuadForm2> {
    match raw {
        RawForm::Scalar { scalar } => Ok(QuadForm2::scalar(*scalar)),
        RawForm::Matrix { matrix } if matrix.len() == 3 => QuadForm2::from_rows(matrix),
        _ => Ok(plane_stress_reduce(&form3(path, field, raw)?)?.form),
    }
}

fn forms3(path: &Path, field: &str, raw: &[RawForm]) -> Result<Vec<QuadForm3>> {
    raw.iter().enumerate().map(|(i, f)| form3(path, &format!("{field}[{i}]"), f)).collect()
}

fn forms2(path: &Path, field: &str, raw: &[RawForm]) -> Result<Vec<QuadForm2>> {
    raw.iter().enumerate().map(|(i, f)| form2(path, &format!("{field}[{i}]"), f)).collect()
}

fn fiber(breaks: Option<Vec<f64>>, forms: Vec<QuadForm3>) -> Result<FiberMaterial> {
    match breaks {
        Some(b) => FiberMaterial::layers(&b, forms),
        None => FiberMaterial::uniform(forms),
    }
}

fn build_payload(path: &Path, raw: RawMaterial, bounds: Option<MaterialBounds>) -> Result<Payload> {
    let f = "material";
    Ok(match raw {
        RawMaterial::Homogeneous { form } => {
            let q = form3(path, "material.form", &form)?;
            q.check_class(&require_bounds(path, bounds)?).into_result(0)?;
            Payload::Homogeneous(q)
        }
        RawMaterial::Layers { breaks, forms } => {
            let q = forms3(path, "material.forms", &forms)?;
            let b = require_bounds(path, bounds)?;
            for (i, form) in q.iter().enumerate() {
                form.check_class(&b).into_result(i)?;
            }
            Payload::Layers(ThicknessProfile::from_3d(crate::reduction::SamplingRule::Layers, Some(breaks), &q)?)
        }
        RawMaterial::PlaneStressLayers { breaks, forms } => {
            let profile = ThicknessProfile::layers(breaks, forms2(path, "material.forms", &forms)?)?;
            profile.check_class(&require_bounds(path, bounds)?)?;
            Payload::Layers(profile)
        }
        RawMaterial::Periodic { breaks, forms } => {
            let q = forms2(path, "material.forms", &forms)?;
            let profile = match breaks {
                Some(b) => PeriodicProfile::new(b, q)?,
                None => PeriodicProfile::uniform(q)?,
            };
            let b = require_bounds(path, bounds)?;
            for (i, form) in profile.forms().iter().enumerate() {
                form.check_class(&b).into_result(i)?;
            }
            Payload::Periodic(profile)
        }
        RawMaterial::Fiber { breaks, forms } => {
            let fb = fiber(breaks, forms3(path, "material.forms", &forms)?)?;
            fb.check_class(&require_bounds(path, bounds)?)?;
            Payload::Fiber(fb)
        }
        RawMaterial::Cell { grid, phases, cells } => {
            let phases = forms3(path, "material.phases", &phases)?;
            let forms = cells
                .iter()
                .enumerate()
                .map(|(i, &p)| {
                    phases.get(p).cloned().ok_or_else(|| {
                        parse_err(path, format!("{f}.cells[{i}]"), format!("phase {p} out of range"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Payload::Cell(CellMaterial3::new(grid, forms, require_bounds(path, bounds)?)?)
        }
        RawMaterial::Slab { x3_cells, inplane, fibers, cells } => {
            let fibers = fibers
                .into_iter()
                .enumerate()
                .map(|(i, fb)| fiber(fb.breaks, forms3(path, &format!("material.fibers[{i}].forms"), &fb.forms)?))
                .collect::<Result<Vec<_>>>()?;
            Payload::Slab(SlabMaterial::new(x3_cells, inplane, fibers, cells, require_bounds(path, bounds)?)?)
        }
        RawMaterial::Separable { x3_cells, inplane, lambda1, lambda2, mu } => Payload::Slab(SlabMaterial::separable(
            x3_cells,
            inplane,
            &lambda1,
            &lambda2,
            mu,
            require_bounds(path, bounds)?,
        )?),
        RawMaterial::Effective { q0 } => Payload::Effective(form2(path, "material.q0", &q0)?),
    })
}

// ---------------------------------------------------------------------------
// plate energy

/// A developable test surface with constant second fundamental form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SurfaceSpec {
    /// The rectangle `[0, L₁] × [0, L₂]` rolled around an axis parallel to `e₂`.
    Cylinder { radius: f64, extents: [f64; 2] },
    Flat { extents: [f64; 2] },
}

impl SurfaceSpec {
    pub fn validate(&self) -> Result<()> {
        let (extents, radius) = match self {
            SurfaceSpec::Cylinder { radius, extents } => (extents, Some(*radius)),
            SurfaceSpec::Flat { extents } => (extents, None),
        };
        if extents.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(Error::InvalidInput(format!("surface extents must be positive, got {extents:?}")));
        }
        if radius.is_some_and(|r| !(r > 0.0 && r.is_finite())) {
            return Err(Error::InvalidInput("cylinder radius must be positive".into()));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        let (SurfaceSpec::Cylinder { extents, .. } | SurfaceSpec::Flat { extents }) = self;
        extents[0] * extents[1]
    }

    /// Second fundamental form in the flat coordinates.
    pub fn second_fundamental_form(&self) -> SymMat2 {
        match self {
            SurfaceSpec::Cylinder { radius, .. } => SymMat2::new([1.0 / radius, 0.0, 0.0]),
            SurfaceSpec::Flat { .. } => SymMat2::zero(),
        }
    }

    /// The isometric deformation of the flat rectangle.
    pub fn deformation(&self, x: [f64; 2]) -> [f64; 3] {
        match self {
            SurfaceSpec::Cylinder { radius: r, .. } => [r * (x[0] / r).sin(), x[1], r * (1.0 - (x[0] / r).cos())],
            SurfaceSpec::Flat { .. } => [x[0], x[1], 0.0],
        }
    }
}

/// `∫_S Q₀(II) dx′` for a surface with constant `II`.
pub fn plate_energy(q0: &QuadForm2, surface: &SurfaceSpec) -> Result<f64> {
    surface.validate()?;
    Ok(surface.area() * q0.eval(&surface.second_fundamental_form()))
}

// ---------------------------------------------------------------------------
// outputs

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReduceReport {
    pub convention: String,
    pub kind: String,
    pub q2: QuadForm2,
    pub eigenvalues: Vec<f64>,
    /// Row-major map from the in-plane to the out-of-plane Mandel
    /// coordinates of the optimal strain.
    pub out_of_plane_map: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fiber_reduced: Option<QuadForm3>,
    pub settings: RunSettings,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OscillationReport {
    pub convention: String,
    pub kind: String,
    pub limit: QuadForm2,
    pub rows: Vec<OscillationEntry>,
    pub settings: RunSettings,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OscillationEntry {
    pub periods: usize,
    pub q0: QuadForm2,
    pub distance: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleRow {
    /// Mandel coordinates of the bending strain.
    pub load: [f64; 3],
    pub solver: f64,
    pub oracle: f64,
    pub relative_difference: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleReport {
    pub convention: String,
    pub kind: String,
    pub regime: u8,
    pub solver: EffectiveReport,
    pub rows: Vec<OracleRow>,
    pub max_relative_difference: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub settings: RunSettings,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnergyReport {
    pub convention: String,
    pub kind: String,
    pub surface: SurfaceSpec,
    /// Mandel coordinates of the second fundamental form.
    pub second_fundamental_form: [f64; 3],
    pub q0: QuadForm2,
    pub energy: f64,
    pub settings: RunSettings,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Internal(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(path.to_path_buf())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Internal(format!("{other:?}")),
    }
}

// ---------------------------------------------------------------------------
// commands

fn subdivide_cell(m: &CellMaterial3, grid: Option<[usize; 3]>) -> Result<CellMaterial3> {
    let Some(target) = grid else { return Ok(m.clone()) };
    let base = m.grid();
    if (0..3).any(|k| target[k] % base[k] != 0) {
        return Err(Error::InvalidInput(format!("grid {target:?} is not a refinement of the material grid {base:?}")));
    }
    m.subdivided([0, 1, 2].map(|k| target[k] / base[k]))
}

fn subdivide_slab(m: &SlabMaterial, grid: Option<[usize; 3]>) -> Result<SlabMaterial> {
    let Some(target) = grid else { return Ok(m.clone()) };
    let base = [m.x3_cells(), m.inplane()[0], m.inplane()[1]];
    if (0..3).any(|k| target[k] % base[k] != 0) {
        return Err(Error::InvalidInput(format!("grid {target:?} is not a refinement of the slab grid {base:?}")));
    }
    m.subdivided([0, 1, 2].map(|k| target[k] / base[k]))
}

/// Cell material for the fine-periodic regime.
fn regime1_material(s: &Scenario) -> Result<CellMaterial3> {
    let bounds = require_bounds(&s.spec_path, s.bounds)?;
    let base = match &s.payload {
        Payload::Cell(m) => m.clone(),
        Payload::Homogeneous(q) => CellMaterial3::homogeneous(q.clone(), bounds)?,
        Payload::Fiber(fb) => {
            let w = fb.weights();
            if w.iter().any(|x| (x - w[0]).abs() > 1e-12) {
                return Err(Error::InvalidInput("only equal-fraction fibers can be laid out on a uniform cell grid".into()));
            }
            CellMaterial3::new([1, 1, fb.forms().len()], fb.forms().to_vec(), bounds)?
        }
        _ => return Err(s.mismatch()),
    };
    subdivide_cell(&base, s.grid)
}

/// Slab material for the thickness-comparable regime.
fn regime2_material(s: &Scenario) -> Result<SlabMaterial> {
    let bounds = require_bounds(&s.spec_path, s.bounds)?;
    let base = match &s.payload {
        Payload::Slab(m) => m.clone(),
        Payload::Homogeneous(q) => SlabMaterial::broadcast(1, [1, 1], FiberMaterial::constant(q.clone()), bounds)?,
        Payload::Fiber(fb) => SlabMaterial::broadcast(1, [1, 1], fb.clone(), bounds)?,
        _ => return Err(s.mismatch()),
    };
    subdivide_slab(&base, s.grid)
}

fn bending_report(s: &Scenario) -> Result<EffectiveReport> {
    let profile = match &s.payload {
        Payload::Homogeneous(q) => ThicknessProfile::constant(plane_stress_reduce(q)?.form),
        Payload::Layers(p) => p.clone(),
        _ => return Err(s.mismatch()),
    };
    let b = bending_form(&profile)?;
    let diagnostics = Diagnostics {
        grid: vec![profile.forms().len()],
        quadrature: "exact integration over layers".into(),
        ..Diagnostics::default()
    };
    Ok(EffectiveReport::new("bending", b.form.with_label("Q0"), b.optimal_b, diagnostics))
}

/// The effective form a scenario's payload naturally produces.
fn effective_form(s: &Scenario) -> Result<EffectiveReport> {
    match &s.payload {
        Payload::Homogeneous(_) | Payload::Layers(_) => bending_report(s),
        Payload::Cell(_) => bending_form_regime1(&regime1_material(s)?, &s.solver),
        Payload::Slab(_) | Payload::Fiber(_) => bending_form_regime2(&regime2_material(s)?, &s.solver),
        Payload::Effective(q) => Ok(EffectiveReport::new("given", q.clone(), Matrix3::zeros(), Diagnostics::default())),
        _ => Err(s.mismatch()),
    }
}

fn run_reduce(s: &Scenario, out: &Path) -> Result<Vec<PathBuf>> {
    let (q3, fiber_reduced) = match &s.payload {
        Payload::Homogeneous(q) => (q.clone(), None),
        Payload::Fiber(fb) => {
            let r = fiber_reduce(fb)?;
            (r.clone(), Some(r))
        }
        _ => return Err(s.mismatch()),
    };
    let red = plane_stress_reduce(&q3)?;
    let map = red.out_of_plane_map();
    let report = ReduceReport {
        convention: CONVENTION.into(),
        kind: "reduce".into(),
        eigenvalues: red.form.eigenvalues().to_vec(),
        q2: red.form.clone(),
        out_of_plane_map: (0..3).map(|i| (0..3).map(|j| map[(i, j)] + 0.0).collect()).collect(),
        fiber_reduced,
        settings: s.run_settings(),
    };
    Ok(vec![write_json(&out.join("reduce.json"), &report)?])
}

fn with_settings(mut r: EffectiveReport, s: &Scenario) -> EffectiveReport {
    r.settings = Some(s.run_settings());
    r
}

/// Upper triangle of the Mandel matrix of `Q0`, zero-based indices.
const Q0_COLUMNS: [&str; 6] = ["q0_00", "q0_11", "q0_22", "q0_01", "q0_02", "q0_12"];

fn q0_entries(q: &QuadForm2) -> [String; 6] {
    let m = q.matrix();
    [m[(0, 0)], m[(1, 1)], m[(2, 2)], m[(0, 1)], m[(0, 2)], m[(1, 2)]].map(|v| format!("{:e}", v + 0.0))
}

fn run_oscillate(s: &Scenario, out: &Path) -> Result<Vec<PathBuf>> {
    let Payload::Periodic(base) = &s.payload else { return Err(s.mismatch()) };
    let (limit, rows) = oscillation_table(base, &s.periods)?;
    let csv_path = out.join("oscillate.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(csv_error)?;
    w.write_record(["periods", "distance"].into_iter().chain(Q0_COLUMNS)).map_err(csv_error)?;
    for r in &rows {
        let mut rec = vec![r.periods.to_string(), format!("{:e}", r.distance)];
        rec.extend(q0_entries(&r.q0));
        w.write_record(&rec).map_err(csv_error)?;
    }
    w.flush()?;
    let report = OscillationReport {
        convention: CONVENTION.into(),
        kind: "oscillate".into(),
        limit,
        rows: rows.into_iter().map(|r| OscillationEntry { periods: r.periods, q0: r.q0, distance: r.distance }).collect(),
        settings: s.run_settings(),
    };
    Ok(vec![csv_path, write_json(&out.join("oscillate.json"), &report)?])
}

type OracleFn = Box<dyn Fn(&SymMat2) -> Result<f64>>;

fn run_oracle_check(s: &Scenario, out: &Path) -> Result<Vec<PathBuf>> {
    let (regime, solver, oracle): (u8, EffectiveReport, OracleFn) = match &s.payload {
        Payload::Cell(_) => {
            let m = regime1_material(s)?;
            let samples = s.quadrature.unwrap_or(DEFAULT_X3_SAMPLES);
            let r = bending_form_regime1(&m, &s.solver)?;
            (1, r, Box::new(move |a| brute_force_regime1(&m, a, samples)))
        }
        Payload::Slab(_) => {
            let m = regime2_material(s)?;
            let r = bending_form_regime2(&m, &s.solver)?;
            (2, r, Box::new(move |a| brute_force_regime2(&m, a)))
        }
        _ => return Err(s.mismatch()),
    };
    let rows = s
        .loads
        .iter()
        .map(|a| {
            let sv = solver.q0.eval(a);
            let ov = oracle(a)?;
            let scale = sv.abs().max(ov.abs());
            let rel = if scale == 0.0 { 0.0 } else { (sv - ov).abs() / scale };
            Ok(OracleRow { load: [a.0[0], a.0[1], a.0[2]], solver: sv, oracle: ov, relative_difference: rel })
        })
        .collect::<Result<Vec<_>>>()?;
    let max_rel = rows.iter().map(|r| r.relative_difference).fold(0.0, f64::max);
    let passed = max_rel <= ORACLE_TOLERANCE;
    let report = OracleReport {
        convention: CONVENTION.into(),
        kind: "oracle-check".into(),
        regime,
        solver,
        rows,
        max_relative_difference: max_rel,
        tolerance: ORACLE_TOLERANCE,
        passed,
        settings: s.run_settings(),
    };
    let path = write_json(&out.join("oracle.json"), &report)?;
    if !passed {
        return Err(Error::Internal(format!(
            "solver and dense oracle differ by {max_rel:e} (relative), above {ORACLE_TOLERANCE:e}"
        )));
    }
    Ok(vec![path])
}

fn run_energy(s: &Scenario, out: &Path) -> Result<Vec<PathBuf>> {
    let surface = s.surface.expect("checked at parse time");
    let q0 = effective_form(s)?.q0;
    let energy = plate_energy(&q0, &surface)?;
    let ii = surface.second_fundamental_form();
    let report = EnergyReport {
        convention: CONVENTION.into(),
        kind: "energy".into(),
        surface,
        second_fundamental_form: [ii.0[0], ii.0[1], ii.0[2]],
        q0,
        energy,
        settings: s.run_settings(),
    };
    Ok(vec![write_json(&out.join("energy.json"), &report)?])
}

fn run_sweep(s: &Scenario, out: &Path) -> Result<Vec<PathBuf>> {
    let results: Vec<(Result<Vec<PathBuf>>, Option<EffectiveReport>)> = s
        .sweep
        .par_iter()
        .map(|e| {
            let dir = out.join(&e.name);
            let res = fs::create_dir_all(&dir).map_err(Error::from).and_then(|_| run_scenario(&e.scenario, &dir));
            let summary = match (&res, e.scenario.command) {
                (Ok(_), Command::Bending | Command::HomogRegime1 | Command::HomogRegime2) => {
                    fs::read_to_string(dir.join("report.json")).ok().and_then(|t| serde_json::from_str(&t).ok())
                }
                _ => None,
            };
            (res, summary)
        })
        .collect();

    let csv_path = out.join("sweep.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(csv_error)?;
    w.write_record(["name", "command", "status", "exit_code"].into_iter().chain(Q0_COLUMNS).chain(["min_eigenvalue"]))
        .map_err(csv_error)?;
    let mut artifacts = vec![csv_path.clone()];
    let mut first_error = None;
    for (e, (res, summary)) in s.sweep.iter().zip(results) {
        let (status, code) = match &res {
            Ok(paths) => {
                artifacts.extend(paths.iter().cloned());
                ("ok".to_string(), 0)
            }
            Err(err) => (err.kind().to_string(), err.exit_code()),
        };
        let mut rec = vec![e.name.clone(), e.scenario.command.name().into(), status, code.to_string()];
        match summary {
            Some(r) => {
                rec.extend(q0_entries(&r.q0));
                rec.push(format!("{:e}", r.eigenvalues[0]));
            }
            None => rec.extend(std::iter::repeat_n(String::new(), Q0_COLUMNS.len() + 1)),
        }
        w.write_record(&rec).map_err(csv_error)?;
        if let (Err(err), None) = (res, &first_error) {
            first_error = Some((e.name.clone(), err));
        }
    }
    w.flush()?;
    if let Some((name, err)) = first_error {
        return Err(match err {
            Error::Internal(m) => Error::Internal(format!("scenario `{name}`: {m}")),
            other => other,
        });
    }
    Ok(artifacts)
}

/// Runs a validated scenario and writes its artifacts into `out`.
pub fn run_scenario(s: &Scenario, out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out)?;
    let report_path = out.join("report.json");
    match s.command {
        Command::Reduce => run_reduce(s, out),
        Command::Bending => Ok(vec![write_json(&report_path, &with_settings(bending_report(s)?, s))?]),
        Command::HomogRegime1 => {
            let r = bending_form_regime1(&regime1_material(s)?, &s.solver)?;
            Ok(vec![write_json(&report_path, &with_settings(r, s))?])
        }
        Command::HomogRegime2 => {
            let r = bending_form_regime2(&regime2_material(s)?, &s.solver)?;
            Ok(vec![write_json(&report_path, &with_settings(r, s))?])
        }
        Command::Oscillate => run_oscillate(s, out),
        Command::OracleCheck => run_oracle_check(s, out),
        Command::Energy => run_energy(s, out),
        Command::Sweep => run_sweep(s, out),
    }
}

/// Reads `PLATE_HOMOG_THREADS`; unset or empty means no cap.
pub fn thread_cap() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if v.trim().is_empty() => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Parse {
                path: PathBuf::from(format!("${THREADS_ENV}")),
                field: THREADS_ENV.into(),
                message: format!("expected a positive integer, got `{v}`"),
            }),
        },
        Err(_) => Ok(None),
    }
}

/// Parses, validates and runs one command inside a thread pool sized by
/// [`thread_cap`].
pub fn run(command: Command, spec: &Path, out: &Path, overrides: &Overrides) -> Result<Vec<PathBuf>> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap()? {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Internal(e.to_string()))?;
    pool.install(|| {
        let scenario = parse_material_spec(spec, command, overrides)?;
        run_scenario(&scenario, out)
    })
}

/// Structured form of an error for the error stream.
pub fn error_json(err: &Error) -> Value {
    let mut v = serde_json::json!({
        "error": err.kind(),
        "exit_code": err.exit_code(),
        "message": err.to_string(),
    });
    let extra = match err {
        Error::Parse { path, field, .. } => serde_json::json!({ "path": path, "field": field }),
        Error::Convention { path, found } => serde_json::json!({ "path": path, "found": found }),
        Error::Admissibility { sample, .. } => serde_json::json!({ "sample": sample }),
        Error::NotConverged { iterations, tol, residuals } => {
            serde_json::json!({ "iterations": iterations, "tol": tol, "residuals": residuals })
        }
        Error::SizeCap { unknowns, cap } => serde_json::json!({ "unknowns": unknowns, "cap": cap }),
        _ => Value::Null,
    };
    if let (Value::Object(map), Value::Object(more)) = (&mut v, extra) {
        map.extend(more);
    }
    v
}
