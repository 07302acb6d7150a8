//! Python bindings: channel parameters, closed forms, the thermal, transport
//! and PDE routes, and extremum location.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use qfj_core::fick_jacobs::{self, DensityExpansion};
use qfj_core::grid::{assemble_hamiltonian, build_grid, BoundaryX};
use qfj_core::model::check_validity;
use qfj_core::redfield::{
    default_gamma, default_threshold, transport_setup, LeadSpec, Side, SteadyMethod, SteadyOptions, DIRECT_LIMIT,
};
use qfj_core::spectrum::diagonalize;
use qfj_core::sweep::{self, ExtremumKind};
use qfj_core::{smoluchowski, thermal, ChannelParams, Error};

create_exception!(qfj, QfjError, PyException);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidParameter { .. } | Error::Config { .. } => PyValueError::new_err(e.to_string()),
        other => QfjError::new_err(other.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_py)
}

/// Harmonic channel `U = k(x) y^2 / 2` with `k = k0 (1 + k1 cos(2 pi x / L))`.
#[pyclass(name = "Channel", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyChannel {
    inner: ChannelParams,
}

#[pymethods]
impl PyChannel {
    #[new]
    #[pyo3(signature = (k0, k1, beta, period = 1.0, hbar = 1.0, mass = 1.0))]
    fn new(k0: f64, k1: f64, beta: f64, period: f64, hbar: f64, mass: f64) -> PyResult<Self> {
        let inner = ChannelParams::new(k0, k1, period, beta, hbar, mass).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Channel at quantum parameter `lam`; `beta` is derived.
    #[staticmethod]
    #[pyo3(signature = (k0, k1, lam, period = 1.0, hbar = 1.0, mass = 1.0))]
    fn from_lambda(k0: f64, k1: f64, lam: f64, period: f64, hbar: f64, mass: f64) -> PyResult<Self> {
        let inner = ChannelParams::from_lambda(k0, k1, period, lam, hbar, mass).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Channel with `L / L_omega = ratio`.
    #[staticmethod]
    #[pyo3(signature = (ratio, k1, lam, period = 1.0, hbar = 1.0, mass = 1.0))]
    fn for_ratio(ratio: f64, k1: f64, lam: f64, period: f64, hbar: f64, mass: f64) -> PyResult<Self> {
        let k0 = ChannelParams::k0_for_ratio(ratio, period, hbar, mass);
        Self::from_lambda(k0, k1, lam, period, hbar, mass)
    }

    #[getter]
    fn k0(&self) -> f64 {
        self.inner.k0
    }

    #[getter]
    fn k1(&self) -> f64 {
        self.inner.k1
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta
    }

    #[getter]
    fn period(&self) -> f64 {
        self.inner.period
    }

    #[getter]
    fn lam(&self) -> f64 {
        self.inner.scales().lambda
    }

    #[getter]
    fn l_y(&self) -> f64 {
        self.inner.scales().l_y
    }

    #[getter]
    fn l_omega(&self) -> f64 {
        self.inner.scales().l_omega
    }

    fn geometry_ratio(&self) -> f64 {
        self.inner.geometry_ratio()
    }

    fn stiffness(&self, x: f64) -> f64 {
        self.inner.stiffness(x)
    }

    fn with_lambda(&self, lam: f64) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.with_lambda(lam).map_err(to_py)?,
        })
    }

    /// Validity messages; empty when the first-order expansion applies.
    fn validity(&self) -> Vec<String> {
        check_validity(&self.inner).messages
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!("Channel(k0={}, k1={}, beta={}, period={})", p.k0, p.k1, p.beta, p.period)
    }
}

#[pyfunction]
fn free_energy_barrier(k1: f64, lam: f64) -> PyResult<f64> {
    fick_jacobs::free_energy_barrier(k1, lam).map_err(to_py)
}

#[pyfunction]
fn harmonic_flux_correction(k1: f64) -> PyResult<f64> {
    fick_jacobs::harmonic_flux_correction(k1).map_err(to_py)
}

#[pyfunction]
fn classical_free_energy(channel: &PyChannel, x: f64) -> f64 {
    fick_jacobs::classical_free_energy(&channel.inner, x)
}

#[pyfunction]
fn quantum_free_energy_correction(channel: &PyChannel, x: f64) -> f64 {
    fick_jacobs::quantum_free_energy_correction(&channel.inner, x)
}

/// First-order density at `x`; `form` is `"additive"` or `"multiplicative"`.
#[pyfunction]
#[pyo3(signature = (channel, lam, x, form = "additive"))]
fn equilibrium_density(channel: &PyChannel, lam: f64, x: f64, form: &str) -> PyResult<f64> {
    let form = match form {
        "additive" => DensityExpansion::Additive,
        "multiplicative" => DensityExpansion::Multiplicative,
        other => return Err(PyValueError::new_err(format!("unknown density form `{other}`"))),
    };
    Ok(fick_jacobs::equilibrium_density_with(&channel.inner, lam, 0.0, 1.0, x, form).rho)
}

#[pyfunction]
fn enthalpic_1d_barrier(u0: f64, lambda_t: f64, period: f64) -> f64 {
    fick_jacobs::enthalpic_1d_barrier(u0, lambda_t, period)
}

/// Lattice marginal density at one `Lambda`.
#[pyclass(frozen, get_all)]
struct Marginal {
    lam: f64,
    x: Vec<f64>,
    rho: Vec<f64>,
    barrier: f64,
}

/// Thermal marginals for every entry of `lambdas` from one diagonalization.
#[pyfunction]
#[pyo3(signature = (channel, lambdas, mx = 50, my = 31, bc = "periodic"))]
fn thermal_marginals(
    py: Python<'_>,
    channel: &PyChannel,
    lambdas: Vec<f64>,
    mx: usize,
    my: usize,
    bc: &str,
) -> PyResult<Vec<Marginal>> {
    let bc: BoundaryX = parse(bc)?;
    let p = channel.inner;
    let s = py
        .detach(|| thermal::thermal_sweep(&p, &lambdas, mx, my, bc, None))
        .map_err(to_py)?;
    s.marginals
        .iter()
        .zip(&lambdas)
        .map(|(m, &lam)| {
            Ok(Marginal {
                lam,
                x: m.x_samples.clone(),
                rho: m.rho.iter().map(|r| r / m.norm).collect(),
                barrier: thermal::numeric_barrier(m).map_err(to_py)?.value,
            })
        })
        .collect()
}

#[pyclass(frozen, get_all)]
struct TransportResult {
    current: f64,
    residual: f64,
    method: String,
    iterations: usize,
}

/// Redfield steady-state current with leads at fugacities `z_left`, `z_right`.
#[pyfunction]
#[pyo3(signature = (channel, mx = 12, my = 7, z_left = 1.04e-3, z_right = 1e-3, gamma = None, method = None))]
#[allow(clippy::too_many_arguments)]
fn transport_current(
    py: Python<'_>,
    channel: &PyChannel,
    mx: usize,
    my: usize,
    z_left: f64,
    z_right: f64,
    gamma: Option<f64>,
    method: Option<&str>,
) -> PyResult<TransportResult> {
    let method: Option<SteadyMethod> = method.map(parse).transpose()?;
    let p = channel.inner;
    let run = || -> qfj_core::Result<TransportResult> {
        let g = build_grid(&p, mx, my, BoundaryX::Open, None)?;
        let h = assemble_hamiltonian(&g, &p);
        let eig = diagonalize(&h)?;
        let gamma = gamma.unwrap_or_else(|| default_gamma(&p));
        let left = LeadSpec::from_fugacity(Side::Left, z_left, gamma, p.beta)?;
        let right = LeadSpec::from_fugacity(Side::Right, z_right, gamma, p.beta)?;
        let setup = transport_setup(&g, &h, &eig, p.hbar, left, right)?;
        let opts = SteadyOptions {
            method: method.unwrap_or(if g.len() <= DIRECT_LIMIT {
                SteadyMethod::Direct
            } else {
                SteadyMethod::Lyapunov
            }),
            threshold: default_threshold(gamma, p.hbar),
            max_iterations: 200,
        };
        let s = setup.solve(&opts)?;
        Ok(TransportResult {
            current: setup.current(&s)?,
            residual: s.residual,
            method: s.method.to_string(),
            iterations: s.iterations,
        })
    };
    py.detach(run).map_err(to_py)
}

#[pyclass(frozen, get_all)]
struct PdeResult {
    x: Vec<f64>,
    marginal: Vec<f64>,
    steps: usize,
    mass_drift: f64,
    flux_ratio: f64,
}

/// Steady state of the 2D quantum Smoluchowski equation.
#[pyfunction]
#[pyo3(signature = (channel, lam, mx = 64, my = 61))]
fn pde_steady(py: Python<'_>, channel: &PyChannel, lam: f64, mx: usize, my: usize) -> PyResult<PdeResult> {
    let p = channel.inner;
    let f = py
        .detach(|| smoluchowski::solve_steady_2d(&p, lam, mx, my, None))
        .map_err(to_py)?;
    Ok(PdeResult {
        x: f.grid.xs(),
        marginal: f.marginal(),
        steps: f.stats.steps,
        mass_drift: f.stats.mass_drift,
        flux_ratio: f.stats.flux_ratio,
    })
}

#[pyclass(frozen, get_all)]
struct Extremum {
    lambda_m: f64,
    value: f64,
    std_error: f64,
    window: (f64, f64),
}

/// Vertex of the parabola through the five samples around the extremum.
#[pyfunction]
#[pyo3(signature = (xs, ys, kind = "max"))]
fn locate_extremum(xs: Vec<f64>, ys: Vec<f64>, kind: &str) -> PyResult<Extremum> {
    let kind = match kind {
        "max" => ExtremumKind::Max,
        "min" => ExtremumKind::Min,
        other => return Err(PyValueError::new_err(format!("kind must be max or min, got `{other}`"))),
    };
    let e = sweep::locate_extremum(&xs, &ys, kind).map_err(to_py)?;
    Ok(Extremum {
        lambda_m: e.lambda_m,
        value: e.value,
        std_error: e.std_error,
        window: e.window,
    })
}

#[pymodule]
pub fn qfj(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("QfjError", m.py().get_type::<QfjError>())?;
    m.add_class::<PyChannel>()?;
    m.add_class::<Marginal>()?;
    m.add_class::<TransportResult>()?;
    m.add_class::<PdeResult>()?;
    m.add_class::<Extremum>()?;
    m.add_function(wrap_pyfunction!(free_energy_barrier, m)?)?;
    m.add_function(wrap_pyfunction!(harmonic_flux_correction, m)?)?;
    m.add_function(wrap_pyfunction!(classical_free_energy, m)?)?;
    m.add_function(wrap_pyfunction!(quantum_free_energy_correction, m)?)?;
    m.add_function(wrap_pyfunction!(equilibrium_density, m)?)?;
    m.add_function(wrap_pyfunction!(enthalpic_1d_barrier, m)?)?;
    m.add_function(wrap_pyfunction!(thermal_marginals, m)?)?;
    m.add_function(wrap_pyfunction!(transport_current, m)?)?;
    m.add_function(wrap_pyfunction!(pde_steady, m)?)?;
    m.add_function(wrap_pyfunction!(locate_extremum, m)?)?;
    Ok(())
}
