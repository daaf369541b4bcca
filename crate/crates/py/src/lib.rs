//! Python bindings: configuration, meshing, lead fields, simulation and
//! IAS inversion.

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector, Point3, Vector3};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use cemfield::harness::{self, pipeline, Experiment};
use cemfield::inverse::{self, HyperModel, MultiresOptions, WarmStart};
use cemfield::leadfield::Modality;
use cemfield::simulate::{self, Dipole, NoiseLevel, NoiseSpec};
use cemfield::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        e if e.exit_code() == 2 => PyValueError::new_err(e.to_string()),
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let m = rows.len();
    let n = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("matrix rows must have equal length"));
    }
    Ok(DMatrix::from_fn(m, n, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn points(p: &[Point3<f64>]) -> Vec<[f64; 3]> {
    p.iter().map(|p| [p.x, p.y, p.z]).collect()
}

/// Parsed project configuration.
#[pyclass(name = "ProjectConfig", frozen)]
struct PyProjectConfig {
    inner: harness::ProjectConfig,
    base: PathBuf,
}

#[pymethods]
impl PyProjectConfig {
    #[staticmethod]
    #[pyo3(signature = (path, seed=None))]
    fn load(path: PathBuf, seed: Option<u64>) -> PyResult<Self> {
        let inner = harness::ProjectConfig::load_with_seed(&path, seed).map_err(to_py)?;
        let base = path.parent().map(PathBuf::from).unwrap_or_default();
        Ok(Self { inner, base })
    }

    #[staticmethod]
    #[pyo3(signature = (text, base=None))]
    fn parse(text: &str, base: Option<PathBuf>) -> PyResult<Self> {
        let base = base.unwrap_or_else(|| PathBuf::from("."));
        let inner = harness::ProjectConfig::parse(text, "<string>", &base).map_err(to_py)?;
        Ok(Self { inner, base })
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn modality(&self) -> &'static str {
        match self.inner.modality {
            Modality::Eeg => "eeg",
            Modality::Eit => "eit",
        }
    }

    #[getter]
    fn hash(&self) -> &str {
        &self.inner.hash
    }

    #[getter]
    fn output(&self) -> PathBuf {
        self.base.join(&self.inner.output)
    }

    /// Runs a pipeline command and returns the output hashes of its manifest.
    #[pyo3(signature = (command, output=None, data=None, experiment=None))]
    fn run(
        &self,
        command: &str,
        output: Option<PathBuf>,
        data: Option<PathBuf>,
        experiment: Option<&str>,
    ) -> PyResult<Vec<(String, String)>> {
        let out = output.unwrap_or_else(|| self.output());
        let cfg = &self.inner;
        let m = match command {
            "mesh" => pipeline::mesh_command(cfg, &out),
            "leadfield" => pipeline::leadfield_command(cfg, &out),
            "simulate" => pipeline::simulate_command(cfg, &out),
            "invert" => pipeline::invert_command(cfg, &out, data.as_deref()),
            "metrics" => pipeline::metrics_command(cfg, &out),
            "experiment" => {
                let name: Experiment = experiment
                    .ok_or_else(|| PyValueError::new_err("experiment name required"))?
                    .parse()
                    .map_err(to_py)?;
                pipeline::experiment_command(cfg, name, &out)
            }
            other => return Err(PyValueError::new_err(format!("unknown command '{other}'"))),
        }
        .map_err(to_py)?;
        Ok(m.outputs.into_iter().collect())
    }

    /// Meshes the head and places the electrodes.
    fn build_model(&self) -> PyResult<Model> {
        Ok(Model {
            inner: harness::build_model(&self.inner).map_err(to_py)?,
        })
    }
}

/// Tetrahedral head mesh with electrodes.
#[pyclass(frozen)]
struct Model {
    inner: harness::Model,
}

#[pymethods]
impl Model {
    #[getter]
    fn node_count(&self) -> usize {
        self.inner.mesh.node_count()
    }

    #[getter]
    fn element_count(&self) -> usize {
        self.inner.mesh.element_count()
    }

    #[getter]
    fn electrode_count(&self) -> usize {
        self.inner.electrodes.len()
    }

    fn nodes(&self) -> Vec<[f64; 3]> {
        points(self.inner.mesh.nodes())
    }

    fn tetra(&self) -> Vec<[usize; 4]> {
        self.inner.mesh.tetra().to_vec()
    }

    fn labels(&self) -> Vec<usize> {
        self.inner.mesh.labels().to_vec()
    }

    fn leadfield(&self, config: &PyProjectConfig) -> PyResult<LeadField> {
        Ok(LeadField {
            inner: pipeline::compute_leadfield(&config.inner, &self.inner).map_err(to_py)?,
        })
    }
}

/// Lead-field matrix with DOF positions.
#[pyclass(frozen)]
struct LeadField {
    inner: cemfield::leadfield::LeadField,
}

#[pymethods]
impl LeadField {
    #[staticmethod]
    fn load(stem: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: cemfield::leadfield::LeadField::load(stem).map_err(to_py)?,
        })
    }

    fn save(&self, stem: PathBuf) -> PyResult<()> {
        self.inner.save(stem, false).map_err(to_py)
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        self.inner.matrix.shape()
    }

    #[getter]
    fn modality(&self) -> &'static str {
        match self.inner.modality {
            Modality::Eeg => "eeg",
            Modality::Eit => "eit",
        }
    }

    fn matrix(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.matrix)
    }

    fn positions(&self) -> Vec<[f64; 3]> {
        points(&self.inner.positions)
    }

    fn predict(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        let y = self.inner.predict(&DVector::from_vec(x)).map_err(to_py)?;
        Ok(y.as_slice().to_vec())
    }

    /// Noisy EEG data for `(position, orientation, moment)` dipoles and a
    /// noise level in percent of the maximum clean entry.
    #[pyo3(signature = (dipoles, noise_percent, seed=1))]
    fn simulate(&self, dipoles: Vec<([f64; 3], [f64; 3], f64)>, noise_percent: f64, seed: u64) -> PyResult<Vec<f64>> {
        let dipoles: Vec<Dipole> = dipoles
            .into_iter()
            .map(|(p, o, m)| Dipole {
                position: Point3::from(p),
                orientation: Vector3::from(o).normalize(),
                moment: m,
            })
            .collect();
        let noise = NoiseSpec::new(NoiseLevel::RelativeToMax(noise_percent), seed).map_err(to_py)?;
        let data = simulate::simulate_eeg(&self.inner, &dipoles, &noise).map_err(to_py)?;
        Ok(data.noisy.as_slice().to_vec())
    }
}

fn hyper(family: &str, beta: f64, theta0: f64) -> PyResult<HyperModel> {
    HyperModel::new(family.parse().map_err(to_py)?, beta, theta0).map_err(to_py)
}

/// IAS MAP estimate, optionally restricted to `roi` column indices.
#[pyfunction]
#[pyo3(signature = (l, y, nu, hypermodel="ig", beta=1.5, theta0=1e-3, iterations=2, roi=None))]
#[allow(clippy::too_many_arguments)]
fn ias_map(
    l: Vec<Vec<f64>>,
    y: Vec<f64>,
    nu: f64,
    hypermodel: &str,
    beta: f64,
    theta0: f64,
    iterations: usize,
    roi: Option<Vec<usize>>,
) -> PyResult<Vec<f64>> {
    let h = hyper(hypermodel, beta, theta0)?;
    let r = inverse::ias_map(&matrix(l)?, &DVector::from_vec(y), &h, nu, iterations, roi.as_deref())
        .map_err(to_py)?;
    Ok(r.x.as_slice().to_vec())
}

/// Averaged multiresolution IAS estimate.
#[pyfunction]
#[pyo3(signature = (l, positions, y, nu, hypermodel="ig", beta=1.5, theta0=1e-3, iterations=2, subsets=100, decompositions=20, seed=1, warm_start="reset"))]
#[allow(clippy::too_many_arguments)]
fn multires_ias(
    l: Vec<Vec<f64>>,
    positions: Vec<[f64; 3]>,
    y: Vec<f64>,
    nu: f64,
    hypermodel: &str,
    beta: f64,
    theta0: f64,
    iterations: usize,
    subsets: usize,
    decompositions: usize,
    seed: u64,
    warm_start: &str,
) -> PyResult<Vec<f64>> {
    let h = hyper(hypermodel, beta, theta0)?;
    let warm_start = match warm_start {
        "reset" => WarmStart::Reset,
        "hyper" => WarmStart::Hyper,
        other => return Err(PyValueError::new_err(format!("unknown warm start '{other}'"))),
    };
    let positions: Vec<Point3<f64>> = positions.into_iter().map(Point3::from).collect();
    let opts = MultiresOptions {
        subsets,
        decompositions,
        iterations,
        seed,
        warm_start,
    };
    let r = inverse::multires_ias(&matrix(l)?, &positions, &DVector::from_vec(y), &h, nu, &opts).map_err(to_py)?;
    Ok(r.mean.as_slice().to_vec())
}

#[pymodule(name = "cemfield")]
fn cemfield_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProjectConfig>()?;
    m.add_class::<Model>()?;
    m.add_class::<LeadField>()?;
    m.add_function(wrap_pyfunction!(ias_map, m)?)?;
    m.add_function(wrap_pyfunction!(multires_ias, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
