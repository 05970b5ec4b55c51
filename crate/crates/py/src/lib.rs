//! Python bindings for the `phmin` solver.

use nalgebra::DMatrix;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyString;
use serde::Serialize;

use phmin::am::{AmConfig, InitKind};
use phmin::cli::{solve_input, SolveOptions};
use phmin::discrete::{to_continuous, GeneratingFunction as CoreGf};
use phmin::io::{check_admissible, load_input, parse_input, Input};
use phmin::jordan::ProblemData;
use phmin::phgen::{sample_ph_instance, GenSpec, Variant};
use phmin::poly::{Polynomial, RationalLst, C64};
use phmin::verify;
use phmin::PhError;

fn err(e: PhError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_dict<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("matrix must be square"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// A rational Laplace-Stieltjes transform `p(s) / q(s)`.
#[pyclass(frozen, module = "phmin")]
struct Lst {
    lst: RationalLst,
    problem: Option<ProblemData>,
}

#[pymethods]
impl Lst {
    /// Ascending coefficients; normalized so `q` is monic.
    #[staticmethod]
    fn from_coeffs(p: Vec<f64>, q: Vec<f64>) -> PyResult<Self> {
        let lst = RationalLst::from_coeffs(Polynomial::new(p), Polynomial::new(q)).map_err(err)?;
        Ok(Self { lst, problem: None })
    }

    #[getter]
    fn p(&self) -> Vec<f64> {
        self.lst.p.coeffs().to_vec()
    }

    #[getter]
    fn q(&self) -> Vec<f64> {
        self.lst.q.coeffs().to_vec()
    }

    #[getter]
    fn order(&self) -> usize {
        self.lst.order()
    }

    /// `(pole, multiplicity)` pairs, conjugates listed separately.
    #[getter]
    fn poles(&self) -> Vec<(C64, usize)> {
        self.lst.poles.roots_with_mult()
    }

    /// Names every failed admissibility condition, or `None`.
    fn admissibility_error(&self) -> Option<String> {
        check_admissible(&self.lst).err().map(|e| e.to_string())
    }

    /// `(xi, beta)` for the canonical Jordan realization.
    fn problem_data(&self) -> PyResult<(f64, Vec<f64>)> {
        let pd = match &self.problem {
            Some(p) => p.clone(),
            None => ProblemData::from_lst(&self.lst).map_err(err)?,
        };
        Ok((pd.xi, pd.beta))
    }

    fn __call__(&self, s: f64) -> f64 {
        self.lst.eval(s)
    }

    fn __repr__(&self) -> String {
        format!("Lst(p={:?}, q={:?})", self.lst.p.coeffs(), self.lst.q.coeffs())
    }
}

/// A probability generating function `p~(z) / q~(z)`.
#[pyclass(frozen, module = "phmin")]
struct GeneratingFunction {
    gf: CoreGf,
}

#[pymethods]
impl GeneratingFunction {
    #[new]
    fn new(p_tilde: Vec<f64>, q_tilde: Vec<f64>) -> Self {
        Self {
            gf: CoreGf::new(Polynomial::new(p_tilde), Polynomial::new(q_tilde)),
        }
    }

    /// The transform of the continuous distribution with the same representation order.
    fn to_continuous(&self) -> PyResult<Lst> {
        let lst = to_continuous(&self.gf).map_err(err)?;
        Ok(Lst { lst, problem: None })
    }

    fn __call__(&self, z: C64) -> C64 {
        self.gf.eval_c(z)
    }

    fn __repr__(&self) -> String {
        format!(
            "GeneratingFunction(p_tilde={:?}, q_tilde={:?})",
            self.gf.p_tilde.coeffs(),
            self.gf.q_tilde.coeffs()
        )
    }
}

fn into_py_input(py: Python<'_>, input: Input) -> PyResult<Py<PyAny>> {
    Ok(match input {
        Input::Continuous { lst, problem } => Py::new(py, Lst { lst, problem })?.into_any(),
        Input::Discrete(gf) => Py::new(py, GeneratingFunction { gf })?.into_any(),
    })
}

/// Reads an input file; returns an `Lst` or a `GeneratingFunction`.
#[pyfunction]
fn load(py: Python<'_>, path: std::path::PathBuf) -> PyResult<Py<PyAny>> {
    into_py_input(py, load_input(&path).map_err(err)?)
}

/// Parses input JSON text; returns an `Lst` or a `GeneratingFunction`.
#[pyfunction]
fn loads(py: Python<'_>, text: &str) -> PyResult<Py<PyAny>> {
    into_py_input(py, parse_input(text).map_err(err)?)
}

fn parse_init(init: &Bound<'_, PyAny>) -> PyResult<InitKind> {
    if let Ok(s) = init.cast::<PyString>() {
        return match s.to_str()? {
            "jordan-plus-ones" => Ok(InitKind::JordanPlusOnesMinusI),
            "jordan" => Ok(InitKind::Jordan),
            "minus-xi-i" => Ok(InitKind::MinusXiI),
            other => Err(PyValueError::new_err(format!("unknown init {other:?}"))),
        };
    }
    Ok(InitKind::Custom(matrix(init.extract()?)?))
}

/// Runs the solver and returns the report as a dict.
///
/// `init` is a start label or an explicit starting matrix.
#[pyfunction]
#[pyo3(signature = (target, init=None, max_iter=None, tol_term=None, success_factor=None, multistart=1, seed=0, trace_full=false))]
#[allow(clippy::too_many_arguments)]
fn solve<'py>(
    py: Python<'py>,
    target: &Bound<'py, PyAny>,
    init: Option<&Bound<'py, PyAny>>,
    max_iter: Option<usize>,
    tol_term: Option<f64>,
    success_factor: Option<f64>,
    multistart: usize,
    seed: u64,
    trace_full: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let input = if let Ok(l) = target.cast::<Lst>() {
        let l = l.get();
        Input::Continuous {
            lst: l.lst.clone(),
            problem: l.problem.clone(),
        }
    } else if let Ok(g) = target.cast::<GeneratingFunction>() {
        Input::Discrete(g.get().gf.clone())
    } else {
        return Err(PyValueError::new_err("target must be an Lst or a GeneratingFunction"));
    };
    let mut config = match init {
        Some(i) => AmConfig::with_init(parse_init(i)?),
        None => AmConfig::default(),
    };
    if let Some(v) = max_iter {
        config.max_outer_iter = v;
    }
    if let Some(v) = tol_term {
        config.tol_term = v;
    }
    if let Some(v) = success_factor {
        config.success_threshold_factor = v;
    }
    let opts = SolveOptions {
        config,
        multistart,
        seed,
        trace_full,
    };
    let report = py.detach(|| solve_input(&input, &opts)).map_err(err)?;
    to_dict(py, &report)
}

/// Draws `(alpha, A)`; `variant` is `balanced`, `sparse` or `stiff`.
#[pyfunction]
#[pyo3(signature = (n, variant="balanced", p=0.5, seed=0, index=0))]
fn sample_ph(n: usize, variant: &str, p: f64, seed: u64, index: u64) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let variant = match variant {
        "balanced" => Variant::Balanced,
        "sparse" => Variant::Sparse(p),
        "stiff" => Variant::Stiff(p),
        other => return Err(PyValueError::new_err(format!("unknown variant {other:?}"))),
    };
    let (alpha, a) = sample_ph_instance(&GenSpec::new(n, variant, seed), index).map_err(err)?;
    Ok((alpha, rows(&a)))
}

/// The transform of `(alpha, A)`.
#[pyfunction]
fn lst_of(alpha: Vec<f64>, a: Vec<Vec<f64>>) -> PyResult<Lst> {
    let lst = phmin::phgen::lst_of(&alpha, &matrix(a)?).map_err(err)?;
    Ok(Lst { lst, problem: None })
}

/// Validity, transform and spectrum checks of `(alpha, A)` against `lst`, as a dict.
#[pyfunction]
#[pyo3(signature = (alpha, a, lst, tol=1e-4))]
fn check_representation<'py>(
    py: Python<'py>,
    alpha: Vec<f64>,
    a: Vec<Vec<f64>>,
    lst: &Lst,
    tol: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let report = verify::check_representation(&alpha, &matrix(a)?, &lst.lst, tol);
    to_dict(py, &report)
}

#[pyfunction]
fn cdf(alpha: Vec<f64>, a: Vec<Vec<f64>>, t: f64) -> PyResult<f64> {
    Ok(verify::cdf(&alpha, &matrix(a)?, t))
}

/// `E[X^k]`.
#[pyfunction]
fn moment(alpha: Vec<f64>, a: Vec<Vec<f64>>, k: usize) -> PyResult<f64> {
    verify::moments(&alpha, &matrix(a)?, k).map_err(err)
}

#[pymodule]
#[pyo3(name = "phmin")]
fn phmin_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Lst>()?;
    m.add_class::<GeneratingFunction>()?;
    m.add_function(wrap_pyfunction!(load, m)?)?;
    m.add_function(wrap_pyfunction!(loads, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(sample_ph, m)?)?;
    m.add_function(wrap_pyfunction!(lst_of, m)?)?;
    m.add_function(wrap_pyfunction!(check_representation, m)?)?;
    m.add_function(wrap_pyfunction!(cdf, m)?)?;
    m.add_function(wrap_pyfunction!(moment, m)?)?;
    Ok(())
}
