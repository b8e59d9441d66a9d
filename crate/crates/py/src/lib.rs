use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use fracafem::afem::{self, AfemConfig, Rhs, Strategy};
use fracafem::assembly::{assemble_load, assemble_stiffness};
use fracafem::diagnostics::equivalence_report;
use fracafem::estimator::{doerfler_mark_values, two_level_indicators};
use fracafem::mesh::{self, DomainSpec, Triangulation, DEFAULT_CIRCLE_SEGMENTS};
use fracafem::solver::solve_spd;
use fracafem::AfemError;

fn to_py(e: AfemError) -> PyErr {
    if e.is_input_error() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn domain(name: &str) -> PyResult<DomainSpec> {
    match name {
        "circle" => Ok(DomainSpec::unit_circle(DEFAULT_CIRCLE_SEGMENTS)),
        "lshape" => Ok(DomainSpec::l_shape()),
        _ => Err(PyValueError::new_err(format!("unknown domain {name:?}"))),
    }
}

#[pyclass(name = "Mesh", module = "fracafem_py", skip_from_py_object)]
#[derive(Clone)]
struct PyMesh {
    inner: Triangulation,
}

#[pymethods]
impl PyMesh {
    /// Initial mesh of "circle" or "lshape".
    #[staticmethod]
    fn initial(name: &str) -> PyResult<Self> {
        let inner = mesh::build_initial_mesh(&domain(name)?).map_err(to_py)?;
        Ok(PyMesh { inner })
    }

    #[getter]
    fn n_dofs(&self) -> usize {
        self.inner.n_dofs()
    }

    #[getter]
    fn n_elements(&self) -> usize {
        self.inner.n_elements()
    }

    #[getter]
    fn level(&self) -> usize {
        self.inner.level()
    }

    fn vertices(&self) -> Vec<(f64, f64)> {
        self.inner.vertices().iter().map(|p| (p[0], p[1])).collect()
    }

    fn elements(&self) -> Vec<(usize, usize, usize)> {
        self.inner
            .elements()
            .iter()
            .map(|e| (e[0], e[1], e[2]))
            .collect()
    }

    fn shape_regularity(&self) -> f64 {
        self.inner.shape_regularity()
    }

    /// Newest-vertex bisection of the marked elements.
    fn refine(&self, marked: Vec<usize>) -> PyResult<Self> {
        let r = mesh::refine(&self.inner, &marked).map_err(to_py)?;
        Ok(PyMesh { inner: r.mesh })
    }

    fn uniform_refine(&self) -> PyResult<Self> {
        let r = mesh::uniform_refine(&self.inner).map_err(to_py)?;
        Ok(PyMesh { inner: r.mesh })
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn __repr__(&self) -> String {
        format!(
            "Mesh(level={}, elements={}, dofs={})",
            self.inner.level(),
            self.inner.n_elements(),
            self.inner.n_dofs()
        )
    }
}

/// Dense stiffness matrix as a list of rows.
#[pyfunction]
#[pyo3(signature = (mesh, s, quad_order=7))]
fn stiffness(mesh: &PyMesh, s: f64, quad_order: usize) -> PyResult<Vec<Vec<f64>>> {
    let a = assemble_stiffness(&mesh.inner, s, quad_order).map_err(to_py)?;
    Ok((0..a.dim())
        .map(|i| (0..a.dim()).map(|j| a.get(i, j)).collect())
        .collect())
}

/// Galerkin solution for a constant load; returns (coefficients, energy).
#[pyfunction]
#[pyo3(signature = (mesh, s, f=1.0, quad_order=7))]
fn solve(mesh: &PyMesh, s: f64, f: f64, quad_order: usize) -> PyResult<(Vec<f64>, f64)> {
    let a = assemble_stiffness(&mesh.inner, s, quad_order).map_err(to_py)?;
    let b = assemble_load(&mesh.inner, |_| f, 4);
    let u = solve_spd(&a, &b, 1e-10).map_err(to_py)?;
    let energy = b.iter().zip(&u.coeffs).map(|(x, y)| x * y).sum();
    Ok((u.coeffs, energy))
}

/// Per-element two-level indicators τ(T)² of the Galerkin solution.
#[pyfunction]
#[pyo3(signature = (mesh, s, f=1.0, quad_order=7))]
fn indicators(mesh: &PyMesh, s: f64, f: f64, quad_order: usize) -> PyResult<Vec<f64>> {
    let a = assemble_stiffness(&mesh.inner, s, quad_order).map_err(to_py)?;
    let b = assemble_load(&mesh.inner, |_| f, 4);
    let u = solve_spd(&a, &b, 1e-10).map_err(to_py)?;
    let ind = two_level_indicators(&mesh.inner, &u, &|_| f, s, quad_order).map_err(to_py)?;
    Ok(ind.element_tau_sq)
}

#[pyfunction]
fn doerfler_mark(tau_sq: Vec<f64>, theta: f64) -> PyResult<Vec<usize>> {
    Ok(doerfler_mark_values(&tau_sq, theta)
        .map_err(to_py)?
        .elements)
}

#[pyfunction]
fn exact_energy_disc(s: f64) -> f64 {
    afem::exact_energy_disc(s)
}

/// Runs the adaptive loop; returns one dict per level.
#[pyfunction]
#[pyo3(signature = (domain_name, s, theta=0.3, strategy="adaptive", max_dofs=3000, quad_order=7, rhs=None))]
fn run<'py>(
    py: Python<'py>,
    domain_name: &str,
    s: f64,
    theta: f64,
    strategy: &str,
    max_dofs: usize,
    quad_order: usize,
    rhs: Option<f64>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mut cfg = AfemConfig::new(domain(domain_name)?, s);
    cfg.theta = theta;
    cfg.strategy = match strategy {
        "adaptive" => Strategy::Adaptive,
        "uniform" => Strategy::Uniform,
        _ => {
            return Err(PyValueError::new_err(format!(
                "unknown strategy {strategy:?}"
            )))
        }
    };
    cfg.max_dofs = max_dofs;
    cfg.quad_order = quad_order;
    cfg.rhs = rhs.map_or(Rhs::DiscExact, Rhs::Constant);
    let out = afem::run(&cfg).map_err(to_py)?;
    out.records
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("level", r.level)?;
            d.set_item("dofs", r.dofs)?;
            d.set_item("n_elements", r.n_elements)?;
            d.set_item("energy_sq", r.energy_sq)?;
            d.set_item("estimator", r.estimator)?;
            d.set_item("error", r.error)?;
            d.set_item("n_marked", r.n_marked)?;
            Ok(d)
        })
        .collect()
}

/// (r_min, r_max, q_min, q_max) of the interpolation equivalence report.
#[pyfunction]
#[pyo3(signature = (mesh, s, samples=20))]
fn equivalence(mesh: &PyMesh, s: f64, samples: usize) -> PyResult<(f64, f64, f64, f64)> {
    let r = equivalence_report(&mesh.inner, s, samples).map_err(to_py)?;
    Ok((r.r_min, r.r_max, r.q_min, r.q_max))
}

#[pymodule]
fn fracafem_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMesh>()?;
    m.add_function(wrap_pyfunction!(stiffness, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(indicators, m)?)?;
    m.add_function(wrap_pyfunction!(doerfler_mark, m)?)?;
    m.add_function(wrap_pyfunction!(exact_energy_disc, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(equivalence, m)?)?;
    Ok(())
}
