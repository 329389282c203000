//! Python bindings: a `Space` class plus operation-level functions.
//! Composite values (seminorms, bodies, functions, certificates, reports)
//! cross the boundary as JSON documents in the same schemas the CLI uses.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use stratcvx::event::Event;
use stratcvx::fenchel::{self, StratifiedConvexFunction};
use stratcvx::harness::{self, ExperimentConfig};
use stratcvx::module::{self, ModuleElement, ModuleFunctional, Seminorm};
use stratcvx::risk::{self, EntropicRiskSpec};
use stratcvx::scalar::{RandomScalar, Xr};
use stratcvx::separation;
use stratcvx::sets::{self, StratifiedConvexSet};
use stratcvx::space::{Partition, StratifiedSpace};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn scalar_to_vec(s: &RandomScalar) -> Vec<f64> {
    s.values().iter().map(|v| v.raw()).collect()
}

fn scalar_from_vec(values: Vec<f64>) -> PyResult<RandomScalar> {
    if values.iter().any(|v| v.is_nan()) {
        return Err(PyValueError::new_err("NaN is not an extended real"));
    }
    Ok(RandomScalar::new(values.into_iter().map(Xr::new).collect()))
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> PyResult<T> {
    serde_json::from_str(text).map_err(|e| PyValueError::new_err(format!("bad {what} JSON: {e}")))
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("serializable")
}

/// A finite probability space with nested fine and coarse partitions.
#[pyclass(name = "Space", from_py_object)]
#[derive(Clone)]
struct PySpace {
    inner: StratifiedSpace,
}

#[pymethods]
impl PySpace {
    #[new]
    fn new(weights: Vec<f64>, fine: Vec<Vec<usize>>, coarse: Vec<Vec<usize>>) -> PyResult<Self> {
        let n = weights.len();
        let fine = Partition::new(fine, n).map_err(err)?;
        let coarse = Partition::new(coarse, n).map_err(err)?;
        Ok(PySpace { inner: StratifiedSpace::new(weights, fine, coarse).map_err(err)? })
    }

    #[getter]
    fn n_points(&self) -> usize {
        self.inner.n_points()
    }

    #[getter]
    fn n_fine(&self) -> usize {
        self.inner.n_fine()
    }

    #[getter]
    fn n_coarse(&self) -> usize {
        self.inner.n_coarse()
    }

    fn atom_dims(&self) -> Vec<usize> {
        (0..self.inner.n_coarse()).map(|a| self.inner.atom_dim(a)).collect()
    }

    /// Conditional expectation of a pointwise variable: one value per atom.
    fn cond_expect(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(scalar_to_vec(&self.inner.cond_expect(&x).map_err(err)?))
    }

    fn to_json(&self) -> String {
        to_json(&self.inner)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PySpace { inner: parse_json(text, "space")? })
    }

    fn __repr__(&self) -> String {
        format!(
            "Space(points={}, fine={}, coarse={})",
            self.inner.n_points(),
            self.inner.n_fine(),
            self.inner.n_coarse()
        )
    }
}

/// Does the first partition refine the second?
#[pyfunction]
fn refines(fine: Vec<Vec<usize>>, coarse: Vec<Vec<usize>>) -> PyResult<bool> {
    let nf: usize = fine.iter().map(|b| b.len()).sum();
    let f = Partition::new(fine, nf).map_err(err)?;
    let c = Partition::new(coarse, nf).map_err(err)?;
    stratcvx::space::refines(&f, &c).map_err(err)
}

/// Per-atom conditional p-norm of a module element (p may be inf).
#[pyfunction]
fn cond_p_norm(space: &PySpace, coords: Vec<f64>, p: f64) -> PyResult<Vec<f64>> {
    let x = ModuleElement::new(coords);
    Ok(scalar_to_vec(&module::cond_p_norm(&x, p, &space.inner).map_err(err)?))
}

/// Evaluate a seminorm (JSON) on a module element.
#[pyfunction]
fn eval_seminorm(space: &PySpace, seminorm: &str, coords: Vec<f64>) -> PyResult<Vec<f64>> {
    let s: Seminorm = parse_json(seminorm, "seminorm")?;
    let x = ModuleElement::new(coords);
    Ok(scalar_to_vec(&module::eval_seminorm(&s, &x, &space.inner).map_err(err)?))
}

/// Apply a module functional blockwise.
#[pyfunction]
fn apply_functional(space: &PySpace, coeffs: Vec<f64>, coords: Vec<f64>) -> PyResult<Vec<f64>> {
    let f = ModuleFunctional::new(coeffs);
    let x = ModuleElement::new(coords);
    Ok(scalar_to_vec(&module::apply_functional(&f, &x, &space.inner).map_err(err)?))
}

/// Smallest per-atom domination constant of a functional against a
/// seminorm; entries may be inf.
#[pyfunction]
fn operator_bound(space: &PySpace, coeffs: Vec<f64>, seminorm: &str) -> PyResult<Vec<f64>> {
    let f = ModuleFunctional::new(coeffs);
    let s: Seminorm = parse_json(seminorm, "seminorm")?;
    Ok(scalar_to_vec(&module::operator_bound(&f, &s, &space.inner).map_err(err)?))
}

/// Glue per-atom scalars over a partition of the atoms (lists of atom
/// indices) and return the assembled values.
#[pyfunction]
fn glue_scalars(n_atoms: usize, events: Vec<Vec<usize>>, scalars: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    let events: Vec<Event> = events
        .iter()
        .map(|idx| Event::from_indices(n_atoms, idx))
        .collect();
    let scalars: Vec<RandomScalar> = scalars
        .into_iter()
        .map(scalar_from_vec)
        .collect::<PyResult<_>>()?;
    Ok(scalar_to_vec(&RandomScalar::glue(&events, &scalars).map_err(err)?))
}

/// Per-atom lattice supremum of finitely many scalars.
#[pyfunction]
fn lattice_sup(scalars: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    let scalars: Vec<RandomScalar> = scalars
        .into_iter()
        .map(scalar_from_vec)
        .collect::<PyResult<_>>()?;
    Ok(scalar_to_vec(&RandomScalar::lattice_sup(&scalars).map_err(err)?))
}

/// Generalized inverse: 1/v off zeros, 0 on them.
#[pyfunction]
fn gen_inverse(values: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(scalar_to_vec(&scalar_from_vec(values)?.gen_inverse().map_err(err)?))
}

#[pyfunction]
fn sign(values: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(scalar_to_vec(&scalar_from_vec(values)?.sign().map_err(err)?))
}

/// The ball of a polytopal seminorm with per-atom radii, as set JSON.
#[pyfunction]
fn ball_of_seminorm(space: &PySpace, seminorm: &str, radii: Vec<f64>) -> PyResult<String> {
    let s: Seminorm = parse_json(seminorm, "seminorm")?;
    let eps = scalar_from_vec(radii)?;
    let ball = sets::ball_of_seminorm(&s, &eps, &space.inner).map_err(err)?;
    Ok(to_json(&ball))
}

/// Atom indices on which the element's blocks lie in the body.
#[pyfunction]
fn contains_event(space: &PySpace, set: &str, coords: Vec<f64>) -> PyResult<Vec<usize>> {
    let m: StratifiedConvexSet = parse_json(set, "set")?;
    let x = ModuleElement::new(coords);
    Ok(sets::contains_event(&m, &x, &space.inner).indices())
}

/// Per-atom gauge of a zero-containing balanced body.
#[pyfunction]
fn gauge(space: &PySpace, set: &str, coords: Vec<f64>) -> PyResult<Vec<f64>> {
    let m: StratifiedConvexSet = parse_json(set, "set")?;
    let x = ModuleElement::new(coords);
    Ok(scalar_to_vec(&sets::gauge(&m, &x, &space.inner).map_err(err)?))
}

/// Per-atom distance to a body under the supremum of a seminorm family
/// (JSON list).
#[pyfunction]
fn random_distance(space: &PySpace, set: &str, family: &str, coords: Vec<f64>) -> PyResult<Vec<f64>> {
    let m: StratifiedConvexSet = parse_json(set, "set")?;
    let fam: Vec<Seminorm> = parse_json(family, "seminorm family")?;
    let x = ModuleElement::new(coords);
    Ok(scalar_to_vec(&sets::random_distance(&x, &m, &fam, &space.inner).map_err(err)?))
}

/// Separation certificate (JSON) of a point from a body.
#[pyfunction]
fn separate(space: &PySpace, set: &str, family: &str, coords: Vec<f64>) -> PyResult<String> {
    let m: StratifiedConvexSet = parse_json(set, "set")?;
    let fam: Vec<Seminorm> = parse_json(family, "seminorm family")?;
    let x = ModuleElement::new(coords);
    let cert = separation::separate(&x, &m, &fam, &space.inner).map_err(err)?;
    Ok(to_json(&cert))
}

/// Strict separation (all atoms outside) certificate as JSON.
#[pyfunction]
fn separate_strict(space: &PySpace, set: &str, family: &str, coords: Vec<f64>) -> PyResult<String> {
    let m: StratifiedConvexSet = parse_json(set, "set")?;
    let fam: Vec<Seminorm> = parse_json(family, "seminorm family")?;
    let x = ModuleElement::new(coords);
    let cert = separation::separate_strict(&x, &m, &fam, &space.inner).map_err(err)?;
    Ok(to_json(&cert))
}

/// The banding probe on a diagonal space; returns the report as JSON.
#[pyfunction]
fn counterexample_probe(space: &PySpace, radii: Vec<f64>) -> PyResult<String> {
    let eps = scalar_from_vec(radii)?;
    let report = separation::counterexample_probe(&eps, &space.inner).map_err(err)?;
    Ok(to_json(&report))
}

/// Evaluate a stratified convex function (JSON) per atom.
#[pyfunction]
fn evaluate_function(space: &PySpace, function: &str, coords: Vec<f64>) -> PyResult<Vec<f64>> {
    let f: StratifiedConvexFunction = parse_json(function, "function")?;
    let x = ModuleElement::new(coords);
    Ok(scalar_to_vec(&fenchel::evaluate(&f, &x, &space.inner).map_err(err)?))
}

/// Fenchel conjugate of a function (JSON in, JSON out).
#[pyfunction]
fn conjugate(space: &PySpace, function: &str) -> PyResult<String> {
    let f: StratifiedConvexFunction = parse_json(function, "function")?;
    Ok(to_json(&fenchel::conjugate(&f, &space.inner).map_err(err)?))
}

#[pyfunction]
fn biconjugate(space: &PySpace, function: &str) -> PyResult<String> {
    let f: StratifiedConvexFunction = parse_json(function, "function")?;
    Ok(to_json(&fenchel::biconjugate(&f, &space.inner).map_err(err)?))
}

#[pyfunction]
fn closure(space: &PySpace, function: &str) -> PyResult<String> {
    let f: StratifiedConvexFunction = parse_json(function, "function")?;
    Ok(to_json(&fenchel::closure(&f, &space.inner).map_err(err)?))
}

/// Classify the atoms of a function into the minus-infinity,
/// plus-infinity and potentially proper events (index lists).
#[pyfunction]
fn classify_events(space: &PySpace, function: &str) -> PyResult<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let f: StratifiedConvexFunction = parse_json(function, "function")?;
    let c = fenchel::classify_events(&f, &space.inner).map_err(err)?;
    Ok((c.mi.indices(), c.pi.indices(), c.bp.indices()))
}

/// An affine minorant pinned to `beta` at `x0`: returns (coefficients,
/// per-atom offsets).
#[pyfunction]
fn affine_minorant(
    space: &PySpace,
    function: &str,
    x0: Vec<f64>,
    beta: Vec<f64>,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let f: StratifiedConvexFunction = parse_json(function, "function")?;
    let x = ModuleElement::new(x0);
    let b = scalar_from_vec(beta)?;
    let (g, z) = fenchel::affine_minorant(&f, &x, &b, &space.inner).map_err(err)?;
    Ok((g.coeffs, scalar_to_vec(&z)))
}

/// Per-atom entropic risk of a position.
#[pyfunction]
fn entropic_risk(space: &PySpace, gamma: f64, coords: Vec<f64>) -> PyResult<Vec<f64>> {
    let spec = EntropicRiskSpec::new(gamma, space.inner.clone()).map_err(err)?;
    let x = ModuleElement::new(coords);
    Ok(scalar_to_vec(&risk::risk_value(&spec, &x).map_err(err)?))
}

/// Worst dual-representation gap of the entropic risk over seeded samples.
#[pyfunction]
fn risk_duality_gap(space: &PySpace, gamma: f64, samples: usize, seed: u64) -> PyResult<f64> {
    let spec = EntropicRiskSpec::new(gamma, space.inner.clone()).map_err(err)?;
    Ok(risk::risk_duality_report(&spec, samples, seed).map_err(err)?.max_gap)
}

/// Run a check suite from a JSON config; returns the report as JSON.
#[pyfunction]
fn run_suite(config: &str) -> PyResult<String> {
    let config: ExperimentConfig = parse_json(config, "config")?;
    let report = harness::run_suite(&config).map_err(err)?;
    Ok(to_json(&report))
}

#[pymodule]
fn stratcvx_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySpace>()?;
    m.add_function(wrap_pyfunction!(refines, m)?)?;
    m.add_function(wrap_pyfunction!(cond_p_norm, m)?)?;
    m.add_function(wrap_pyfunction!(eval_seminorm, m)?)?;
    m.add_function(wrap_pyfunction!(apply_functional, m)?)?;
    m.add_function(wrap_pyfunction!(operator_bound, m)?)?;
    m.add_function(wrap_pyfunction!(glue_scalars, m)?)?;
    m.add_function(wrap_pyfunction!(lattice_sup, m)?)?;
    m.add_function(wrap_pyfunction!(gen_inverse, m)?)?;
    m.add_function(wrap_pyfunction!(sign, m)?)?;
    m.add_function(wrap_pyfunction!(ball_of_seminorm, m)?)?;
    m.add_function(wrap_pyfunction!(contains_event, m)?)?;
    m.add_function(wrap_pyfunction!(gauge, m)?)?;
    m.add_function(wrap_pyfunction!(random_distance, m)?)?;
    m.add_function(wrap_pyfunction!(separate, m)?)?;
    m.add_function(wrap_pyfunction!(separate_strict, m)?)?;
    m.add_function(wrap_pyfunction!(counterexample_probe, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_function, m)?)?;
    m.add_function(wrap_pyfunction!(conjugate, m)?)?;
    m.add_function(wrap_pyfunction!(biconjugate, m)?)?;
    m.add_function(wrap_pyfunction!(closure, m)?)?;
    m.add_function(wrap_pyfunction!(classify_events, m)?)?;
    m.add_function(wrap_pyfunction!(affine_minorant, m)?)?;
    m.add_function(wrap_pyfunction!(entropic_risk, m)?)?;
    m.add_function(wrap_pyfunction!(risk_duality_gap, m)?)?;
    m.add_function(wrap_pyfunction!(run_suite, m)?)?;
    Ok(())
}
