//! Python bindings: meshes, the deformation space and latent model, fitting,
//! CMA-ES, scoring helpers and the rollout / co-design drivers.
//!
//! Structured results (fit results, rollouts, reports) come back as plain
//! Python dicts; configurations go in as dicts or JSON strings with the same
//! schema as the CLI's config sections.

use codesign_core::cmaes::{CmaError, CmaState};
use codesign_core::codesign::{self as cd, CodesignConfig, CodesignError, ScoreWeights};
use codesign_core::control::{ControlError, Task};
use codesign_core::geom::{self, GeomError, PointCloud, TriMesh, Vec3};
use codesign_core::gripper::Gripper;
use codesign_core::ldm::{self, DesignModel, FitConfig, FreezeMask, LdmError, LdmSpace, PrimitiveKind};
use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(codesign, NumericalError, PyRuntimeError, "A computation diverged or degenerated.");

/// Error wrapper so core errors convert with `?`.
struct Failure(PyErr);

impl From<Failure> for PyErr {
    fn from(f: Failure) -> Self {
        f.0
    }
}

impl From<PyErr> for Failure {
    fn from(e: PyErr) -> Self {
        Failure(e)
    }
}

fn value_err(e: impl ToString) -> Failure {
    Failure(PyValueError::new_err(e.to_string()))
}

fn numerical(e: impl ToString) -> Failure {
    Failure(NumericalError::new_err(e.to_string()))
}

impl From<GeomError> for Failure {
    fn from(e: GeomError) -> Self {
        match e {
            GeomError::DegenerateGradient { .. } => numerical(e),
            GeomError::Io(_) => Failure(PyOSError::new_err(e.to_string())),
            _ => value_err(e),
        }
    }
}

impl From<LdmError> for Failure {
    fn from(e: LdmError) -> Self {
        match e {
            LdmError::FitFailure(_) | LdmError::FlowDivergence { .. } | LdmError::RankDeficient { .. } => numerical(e),
            LdmError::Geom(g) => g.into(),
            _ => value_err(e),
        }
    }
}

impl From<ControlError> for Failure {
    fn from(e: ControlError) -> Self {
        match &e {
            ControlError::Sim(s) if s.is_blowup() => numerical(e),
            _ => value_err(e),
        }
    }
}

impl From<CmaError> for Failure {
    fn from(e: CmaError) -> Self {
        value_err(e)
    }
}

impl From<CodesignError> for Failure {
    fn from(e: CodesignError) -> Self {
        match e {
            CodesignError::Ldm(l) => l.into(),
            CodesignError::Control(c) => c.into(),
            CodesignError::Cma(c) => numerical(c),
            CodesignError::Invalid(m) => value_err(m),
            CodesignError::Serde(s) => value_err(s),
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        value_err(e)
    }
}

type Res<T> = Result<T, Failure>;

fn to_vec3(points: Vec<[f64; 3]>) -> Vec<Vec3> {
    points.into_iter().map(Vec3::from).collect()
}

fn from_vec3(points: &[Vec3]) -> Vec<[f64; 3]> {
    points.iter().map(|p| [p.x, p.y, p.z]).collect()
}

/// Serializes through JSON into Python objects.
fn to_py<'py>(py: Python<'py>, value: &impl serde::Serialize) -> Res<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?)
}

/// Accepts a dict (or any JSON-serializable object) or a JSON string.
fn from_py<T: serde::de::DeserializeOwned>(obj: &Bound<'_, PyAny>) -> Res<T> {
    let text: String = match obj.extract::<String>() {
        Ok(s) => s,
        Err(_) => obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?,
    };
    Ok(serde_json::from_str(&text)?)
}

fn parse_enum<T: serde::de::DeserializeOwned>(name: &str) -> Res<T> {
    Ok(serde_json::from_value(serde_json::Value::String(name.to_owned()))?)
}

/// Triangle mesh with shared vertices.
#[pyclass(name = "Mesh", module = "codesign", from_py_object)]
#[derive(Clone)]
struct PyMesh {
    inner: TriMesh,
}

#[pymethods]
impl PyMesh {
    #[new]
    fn new(vertices: Vec<[f64; 3]>, faces: Vec<[usize; 3]>) -> Res<Self> {
        Ok(Self { inner: TriMesh::new(to_vec3(vertices), faces)? })
    }

    /// Reads a Wavefront OBJ file.
    #[staticmethod]
    fn load(path: std::path::PathBuf) -> Res<Self> {
        Ok(Self { inner: geom::read_mesh(path)? })
    }

    #[staticmethod]
    fn from_obj(text: &str) -> Res<Self> {
        Ok(Self { inner: geom::parse_mesh(text)? })
    }

    fn save(&self, path: std::path::PathBuf) -> Res<()> {
        Ok(geom::write_mesh(path, &self.inner)?)
    }

    fn to_obj(&self) -> String {
        geom::format_mesh(&self.inner)
    }

    #[getter]
    fn vertices(&self) -> Vec<[f64; 3]> {
        from_vec3(self.inner.vertices())
    }

    #[getter]
    fn faces(&self) -> Vec<[usize; 3]> {
        self.inner.faces().to_vec()
    }

    fn area(&self) -> f64 {
        self.inner.area()
    }

    fn volume(&self) -> f64 {
        self.inner.signed_volume()
    }

    fn is_watertight(&self) -> bool {
        self.inner.is_watertight()
    }

    /// `(min, max)` corners.
    fn bounds(&self) -> Option<([f64; 3], [f64; 3])> {
        self.inner.bounds().map(|b| ([b.min.x, b.min.y, b.min.z], [b.max.x, b.max.y, b.max.z]))
    }

    /// Area-weighted surface samples.
    fn sample(&self, n: usize, seed: u64) -> Res<Vec<[f64; 3]>> {
        Ok(from_vec3(&geom::surface_sample(&self.inner, n, seed)?.points))
    }

    fn __len__(&self) -> usize {
        self.inner.vertices().len()
    }

    fn __repr__(&self) -> String {
        format!("Mesh(vertices={}, faces={})", self.inner.vertices().len(), self.inner.faces().len())
    }
}

/// Deformation space: base mesh, frozen mount region and kernel lattice.
#[pyclass(name = "DeformationSpace", module = "codesign", from_py_object)]
#[derive(Clone)]
struct PySpace {
    inner: LdmSpace,
}

#[pymethods]
impl PySpace {
    /// Kernel lattice over `base`; vertices with z ≥ `mount_z` stay fixed.
    #[new]
    #[pyo3(signature = (base=None, mount_z=0.0, steps=ldm::DEFAULT_STEPS))]
    fn new(base: Option<PyMesh>, mount_z: f64, steps: usize) -> Res<Self> {
        let base = base.map(|m| m.inner).unwrap_or_else(ldm::base_finger);
        Ok(Self { inner: LdmSpace::with_lattice(base, FreezeMask::below_mount(mount_z), steps)? })
    }

    #[getter]
    fn raw_dim(&self) -> usize {
        self.inner.raw_dim()
    }

    #[getter]
    fn kernel_count(&self) -> usize {
        self.inner.kernel_count()
    }

    #[getter]
    fn base(&self) -> PyMesh {
        PyMesh { inner: self.inner.base.clone() }
    }

    fn zero_params(&self) -> Vec<f64> {
        self.inner.zero_params()
    }

    fn deform_mesh(&self, py: Python<'_>, raw: Vec<f64>) -> Res<PyMesh> {
        let m = py.detach(|| self.inner.deform_mesh(&raw))?;
        Ok(PyMesh { inner: m })
    }

    fn deform_points(&self, py: Python<'_>, raw: Vec<f64>, points: Vec<[f64; 3]>) -> Res<Vec<[f64; 3]>> {
        let pts = to_vec3(points);
        let out = py.detach(|| self.inner.deform_points(&raw, &pts))?;
        Ok(from_vec3(&out))
    }

    /// Chamfer objective of the deformed `points` against `target` and its
    /// gradient in the raw parameters.
    fn chamfer_and_gradient(&self, raw: Vec<f64>, points: Vec<[f64; 3]>, target: Vec<[f64; 3]>) -> Res<(f64, Vec<f64>)> {
        Ok(ldm::chamfer_value_and_gradient(&self.inner, &raw, &to_vec3(points), &to_vec3(target))?)
    }

    /// Fits raw parameters to a target point cloud; returns the fit result
    /// as a dict. `config` follows the `[fit]` config section.
    #[pyo3(signature = (target, config=None, seed=0))]
    fn fit<'py>(
        &self,
        py: Python<'py>,
        target: Vec<[f64; 3]>,
        config: Option<&Bound<'py, PyAny>>,
        seed: u64,
    ) -> Res<Bound<'py, PyAny>> {
        let cfg: FitConfig = config.map(from_py).transpose()?.unwrap_or_default();
        let target = PointCloud::new(to_vec3(target));
        let r = py.detach(|| ldm::fit_deformation_with(&self.inner, &target, &cfg, None, seed))?;
        to_py(py, &r)
    }

    fn __repr__(&self) -> String {
        format!("DeformationSpace(kernels={}, raw_dim={})", self.inner.kernel_count(), self.inner.raw_dim())
    }
}

/// Deformation space plus PCA latent model.
#[pyclass(name = "DesignModel", module = "codesign", from_py_object)]
#[derive(Clone)]
struct PyModel {
    inner: DesignModel,
}

#[pymethods]
impl PyModel {
    /// PCA over raw parameter vectors of `space`.
    #[staticmethod]
    fn build(space: &PySpace, params: Vec<Vec<f64>>, latent_dim: usize) -> Res<Self> {
        let latent = ldm::build_latent(&params, latent_dim)?;
        Ok(Self { inner: DesignModel::new(space.inner.clone(), latent)? })
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> Res<Self> {
        Ok(Self { inner: DesignModel::load(path)? })
    }

    fn save(&self, path: std::path::PathBuf) -> Res<()> {
        Ok(self.inner.save(path)?)
    }

    #[getter]
    fn latent_dim(&self) -> usize {
        self.inner.latent_dim()
    }

    #[getter]
    fn space(&self) -> PySpace {
        PySpace { inner: self.inner.space.clone() }
    }

    #[getter]
    fn mean(&self) -> Vec<f64> {
        self.inner.latent.mean.clone()
    }

    fn encode(&self, raw: Vec<f64>) -> Res<Vec<f64>> {
        Ok(self.inner.latent.encode(&raw)?)
    }

    fn decode(&self, z: Vec<f64>) -> Res<Vec<f64>> {
        Ok(self.inner.latent.decode(&z)?)
    }

    fn decode_mesh(&self, py: Python<'_>, z: Vec<f64>) -> Res<PyMesh> {
        let m = py.detach(|| self.inner.decode_mesh(&z))?;
        Ok(PyMesh { inner: m })
    }

    fn __repr__(&self) -> String {
        format!("DesignModel(latent_dim={}, raw_dim={})", self.inner.latent_dim(), self.inner.space.raw_dim())
    }
}

/// Ask/tell CMA-ES that maximizes.
#[pyclass(name = "CmaEs", module = "codesign")]
struct PyCma {
    inner: CmaState,
}

#[pymethods]
impl PyCma {
    #[new]
    #[pyo3(signature = (mean, sigma, bounds=None, seed=0, population=None))]
    fn new(mean: Vec<f64>, sigma: f64, bounds: Option<Vec<(f64, f64)>>, seed: u64, population: Option<usize>) -> Res<Self> {
        Ok(Self { inner: CmaState::with_population(&mean, sigma, bounds, seed, population)? })
    }

    fn ask(&mut self) -> Vec<Vec<f64>> {
        self.inner.ask()
    }

    fn tell(&mut self, candidates: Vec<Vec<f64>>, fitness: Vec<f64>) -> Res<()> {
        Ok(self.inner.tell(&candidates, &fitness)?)
    }

    /// Best `(x, f)` seen so far.
    fn best(&self) -> Res<(Vec<f64>, f64)> {
        Ok(self.inner.best()?)
    }

    /// Runs until `max_evals` evaluations of the Python callable `f`.
    fn optimize(&mut self, f: &Bound<'_, PyAny>, max_evals: usize) -> Res<(Vec<f64>, f64)> {
        while self.inner.evaluations() + self.inner.population() <= max_evals {
            let xs = self.inner.ask();
            let fx = xs.iter().map(|x| f.call1((x.clone(),))?.extract::<f64>()).collect::<PyResult<Vec<f64>>>()?;
            self.inner.tell(&xs, &fx)?;
        }
        self.best()
    }

    #[getter]
    fn mean(&self) -> Vec<f64> {
        self.inner.mean().to_vec()
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.step_size()
    }

    #[getter]
    fn evaluations(&self) -> usize {
        self.inner.evaluations()
    }

    #[getter]
    fn population(&self) -> usize {
        self.inner.population()
    }
}

#[pyfunction]
fn base_finger() -> PyMesh {
    PyMesh { inner: ldm::base_finger() }
}

/// Primitive finger design: `kind` is "cubic" or "spherical".
#[pyfunction]
fn primitive_design(kind: &str, param: f64) -> Res<PyMesh> {
    Ok(PyMesh { inner: ldm::primitive_design(parse_enum::<PrimitiveKind>(kind)?, param)? })
}

/// Symmetric mean nearest-neighbour squared distance.
#[pyfunction]
fn chamfer(a: Vec<[f64; 3]>, b: Vec<[f64; 3]>) -> Res<f64> {
    Ok(geom::chamfer(&PointCloud::new(to_vec3(a)), &PointCloud::new(to_vec3(b)))?)
}

/// Value at the top `s` percent of `values` (s = 0 is the maximum).
#[pyfunction]
fn percentile_top(values: Vec<f64>, s: f64) -> Res<f64> {
    cd::percentile_top(&values, s).map_err(value_err)
}

/// Per-environment score with the default weights of `task`.
#[pyfunction]
#[pyo3(signature = (task, q_prog, q_succ, mean_stress, max_stress_25, max_stress_0, weights=None))]
fn env_score(
    task: &str,
    q_prog: f64,
    q_succ: f64,
    mean_stress: f64,
    max_stress_25: f64,
    max_stress_0: f64,
    weights: Option<&Bound<'_, PyAny>>,
) -> Res<f64> {
    let w = match weights {
        Some(w) => from_py::<ScoreWeights>(w)?,
        None => ScoreWeights::for_task(parse_enum::<Task>(task)?),
    };
    Ok(cd::env_score(q_prog, q_succ, mean_stress, max_stress_25, max_stress_0, &w))
}

fn config_of(config: Option<&Bound<'_, PyAny>>) -> Res<CodesignConfig> {
    let cfg: CodesignConfig = config.map(from_py).transpose()?.unwrap_or_default();
    cfg.validate()?;
    Ok(cfg)
}

/// Pose search and soft-body rollouts of `finger` in one sampled context.
/// Returns `{context, components, pose, rollout}`; `rollout` is JSON lines.
#[pyfunction]
#[pyo3(signature = (finger, config=None, seed=0))]
fn rollout<'py>(py: Python<'py>, finger: &PyMesh, config: Option<&Bound<'py, PyAny>>, seed: u64) -> Res<Bound<'py, PyAny>> {
    let cfg = config_of(config)?;
    let gripper = Gripper::new(finger.inner.clone())?;
    let out = py.detach(|| cd::evaluate_env(&gripper, &cfg, seed))?;
    let d = PyDict::new(py);
    d.set_item("context", to_py(py, &out.context)?)?;
    d.set_item("components", to_py(py, &out.components)?)?;
    d.set_item("pose", to_py(py, &out.pose)?)?;
    let lines = out.record.as_ref().map(|r| r.to_jsonl()).transpose()?;
    d.set_item("rollout", lines)?;
    Ok(d.into_any())
}

/// Full co-design run over `model`'s latent space; returns the report.
#[pyfunction]
#[pyo3(signature = (model, config=None))]
fn codesign<'py>(py: Python<'py>, model: &PyModel, config: Option<&Bound<'py, PyAny>>) -> Res<Bound<'py, PyAny>> {
    let cfg = config_of(config)?;
    let echo = serde_json::to_value(&cfg)?;
    let m = &model.inner;
    let report = py.detach(|| cd::codesign_run(&cfg, &m.latent, &m.space, echo, |_| {}))?;
    to_py(py, &report)
}

/// Grid evaluation of primitive designs with the co-design report schema.
#[pyfunction]
#[pyo3(signature = (kind, params, config=None))]
fn baseline<'py>(py: Python<'py>, kind: &str, params: Vec<f64>, config: Option<&Bound<'py, PyAny>>) -> Res<Bound<'py, PyAny>> {
    let cfg = config_of(config)?;
    let kind: PrimitiveKind = parse_enum(kind)?;
    let echo = serde_json::to_value(&cfg)?;
    let report = py.detach(|| cd::baseline_sweep(&cfg, kind, &params, echo))?;
    to_py(py, &report)
}

/// Default co-design configuration as a dict.
#[pyfunction]
fn default_config(py: Python<'_>) -> Res<Bound<'_, PyAny>> {
    to_py(py, &CodesignConfig::default())
}

#[pymodule]
#[pyo3(name = "codesign")]
pub fn codesign_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    m.add_class::<PyMesh>()?;
    m.add_class::<PySpace>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyCma>()?;
    m.add_function(wrap_pyfunction!(base_finger, m)?)?;
    m.add_function(wrap_pyfunction!(primitive_design, m)?)?;
    m.add_function(wrap_pyfunction!(chamfer, m)?)?;
    m.add_function(wrap_pyfunction!(percentile_top, m)?)?;
    m.add_function(wrap_pyfunction!(env_score, m)?)?;
    m.add_function(wrap_pyfunction!(rollout, m)?)?;
    m.add_function(wrap_pyfunction!(codesign, m)?)?;
    m.add_function(wrap_pyfunction!(baseline, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    Ok(())
}
