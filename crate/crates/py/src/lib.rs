//! Python bindings. Results come back as plain dicts and lists.

use diffarb_core::mc_engine::{simulate as run_simulation, SimulationConfig};
use diffarb_core::model_catalog::{build_model, entries, Params};
use diffarb_core::spec_io::parse_model;
use diffarb_core::{classify as run_classify, DiffusionSpec, Error};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A validated diffusion market.
#[pyclass(name = "Model", frozen)]
struct PyModel {
    spec: DiffusionSpec,
}

#[pymethods]
impl PyModel {
    /// Parse a model from its JSON text.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { spec: parse_model(text).map_err(py_err)? })
    }

    /// Build a catalog entry; `params` is either `"k=v,k=v"` or a dict.
    #[staticmethod]
    #[pyo3(signature = (name, params=None))]
    fn from_catalog(name: &str, params: Option<&Bound<'_, PyAny>>) -> PyResult<Self> {
        let params = match params {
            None => Params::new(),
            Some(p) => match p.cast::<PyDict>() {
                Ok(d) => {
                    let mut parts = Vec::new();
                    for (k, v) in d.iter() {
                        parts.push(format!("{}={}", k.str()?, v.str()?));
                    }
                    Params::parse(&parts.join(",")).map_err(py_err)?
                }
                Err(_) => Params::parse(&p.extract::<String>()?).map_err(py_err)?,
            },
        };
        Ok(Self { spec: build_model(name, &params).map_err(py_err)? })
    }

    #[getter]
    fn model_id(&self) -> &str {
        &self.spec.model_id
    }

    #[getter]
    fn r(&self) -> f64 {
        self.spec.r
    }

    #[getter]
    fn x0(&self) -> f64 {
        self.spec.x0
    }

    /// Verdict as a dict.
    fn classify<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let v = py.detach(|| run_classify(&self.spec)).map_err(py_err)?;
        to_py(py, &v)
    }

    /// Human-readable verdict.
    fn verdict_text(&self, py: Python<'_>) -> PyResult<String> {
        Ok(py.detach(|| run_classify(&self.spec)).map_err(py_err)?.render())
    }

    #[pyo3(signature = (grid=512, paths=10_000, levels=3, seed=42))]
    fn simulate<'py>(
        &self,
        py: Python<'py>,
        grid: usize,
        paths: usize,
        levels: usize,
        seed: u64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let cfg = SimulationConfig { grid, paths, levels, seed };
        let report = py.detach(|| run_simulation(&self.spec, &cfg)).map_err(py_err)?;
        to_py(py, &report)
    }

    fn __repr__(&self) -> String {
        format!("Model({})", self.spec.model_id)
    }
}

/// Classify a catalog entry or a JSON model text.
#[pyfunction]
#[pyo3(signature = (catalog=None, params=None, model_json=None))]
fn classify<'py>(
    py: Python<'py>,
    catalog: Option<&str>,
    params: Option<&Bound<'py, PyAny>>,
    model_json: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let model = match (catalog, model_json) {
        (Some(name), None) => PyModel::from_catalog(name, params)?,
        (None, Some(text)) => PyModel::from_json(text)?,
        _ => return Err(PyValueError::new_err("give exactly one of catalog and model_json")),
    };
    model.classify(py)
}

/// Catalog entries with their parameter schemas.
#[pyfunction]
fn catalog<'py>(py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
    let list: Vec<serde_json::Value> = entries().iter().map(|e| e.describe()).collect();
    to_py(py, &list)
}

#[pymodule]
fn diffarb(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(catalog, m)?)?;
    Ok(())
}
