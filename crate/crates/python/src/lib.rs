//! Python bindings for the scattering, spectral shift, reconstruction and
//! KdV invariant routines.

use std::sync::OnceLock;

use fgscatter::background::{DirichletDivisor, DivisorEntry, FiniteGapPotential};
use fgscatter::kdv_invariants::{self, KdvOptions};
use fgscatter::perturbation::Perturbation;
use fgscatter::reconstruction::{Reconstruction, ReconstructionInput};
use fgscatter::riemann_surface::{BandStructure, SurfacePoint};
use fgscatter::scattering::{ScatteringData, ScatteringProblem};
use fgscatter::spectral_shift::SpectralShift;
use fgscatter::Error;
use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Expression(_) | Error::InvalidBands(_) | Error::Domain(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Finite-gap background given by its band edges and Dirichlet divisor.
#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
struct Background {
    inner: FiniteGapPotential,
}

#[pymethods]
impl Background {
    /// `divisor` lists `(mu, sigma)` pairs, one per gap.
    #[new]
    #[pyo3(signature = (edges, divisor = Vec::new(), x_max = 40.0))]
    fn new(edges: Vec<f64>, divisor: Vec<(f64, f64)>, x_max: f64) -> PyResult<Self> {
        let inner = if edges.len() == 1 && divisor.is_empty() {
            FiniteGapPotential::free(edges[0])
        } else {
            let bands = BandStructure::new(edges).map_err(py_err)?;
            let div = DirichletDivisor::new(divisor.into_iter().map(|(mu, sigma)| DivisorEntry { mu, sigma }).collect());
            FiniteGapPotential::new(bands, div, x_max).map_err(py_err)?
        };
        Ok(Background { inner })
    }

    #[getter]
    fn genus(&self) -> usize {
        self.inner.genus()
    }

    #[getter]
    fn edges(&self) -> Vec<f64> {
        self.inner.bands().edges().to_vec()
    }

    fn potential(&self, x: f64) -> PyResult<f64> {
        self.inner.potential(x).map_err(py_err)
    }
}

/// Perturbed operator `-d²/dx² + V_q + vhat` with cached derived data.
#[pyclass(frozen)]
struct Problem {
    inner: ScatteringProblem,
    data: OnceLock<ScatteringData>,
    shift: OnceLock<SpectralShift>,
    rec: OnceLock<Reconstruction>,
}

impl Problem {
    fn data(&self) -> PyResult<&ScatteringData> {
        if let Some(d) = self.data.get() {
            return Ok(d);
        }
        let d = self.inner.scattering_data().map_err(py_err)?;
        Ok(self.data.get_or_init(|| d))
    }

    fn shift(&self) -> PyResult<&SpectralShift> {
        if let Some(s) = self.shift.get() {
            return Ok(s);
        }
        let s = SpectralShift::compute(self.data()?).map_err(py_err)?;
        Ok(self.shift.get_or_init(|| s))
    }

    fn rec(&self) -> PyResult<&Reconstruction> {
        if let Some(r) = self.rec.get() {
            return Ok(r);
        }
        let r = Reconstruction::new(&ReconstructionInput::from_scattering(self.data()?)).map_err(py_err)?;
        Ok(self.rec.get_or_init(|| r))
    }
}

#[pymethods]
impl Problem {
    /// `expression` is a formula in `x`; an empty string means `vhat = 0`.
    #[new]
    #[pyo3(signature = (background, expression = ""))]
    fn new(background: &Background, expression: &str) -> PyResult<Self> {
        let pert = if expression.trim().is_empty() {
            Perturbation::zero()
        } else {
            Perturbation::from_expression(expression).map_err(py_err)?
        };
        let inner = ScatteringProblem::new(background.inner.clone(), pert).map_err(py_err)?;
        Ok(Problem {
            inner,
            data: OnceLock::new(),
            shift: OnceLock::new(),
            rec: OnceLock::new(),
        })
    }

    fn eigenvalues(&self) -> PyResult<Vec<f64>> {
        Ok(self.data()?.eigenvalue_values())
    }

    /// Transmission coefficient on the physical sheet.
    fn transmission(&self, z: Complex64) -> PyResult<Complex64> {
        self.inner.t(z).map_err(py_err)
    }

    /// `(T, R_+, R_-)` at an interior band point.
    fn band_scattering(&self, lam: f64) -> PyResult<(Complex64, Complex64, Complex64)> {
        let b = self.inner.band_scattering(lam).map_err(py_err)?;
        Ok((b.t, b.r_plus, b.r_minus))
    }

    /// `∫ (G - G_q)(z, x, x) dx`.
    fn resolvent_trace(&self, z: Complex64) -> PyResult<Complex64> {
        self.inner.resolvent_trace(z).map_err(py_err)
    }

    /// Spectral shift function at a real point.
    fn xi(&self, lam: f64) -> PyResult<f64> {
        self.shift()?.xi(&self.inner, lam).map_err(py_err)
    }

    /// `T(z)` rebuilt from the spectral shift function.
    fn krein_transmission(&self, z: Complex64) -> PyResult<Complex64> {
        self.shift()?.krein_reconstruct_t(z).map_err(py_err)
    }

    /// `T(z)` rebuilt from the eigenvalues and `|R|^2` on the spectrum.
    fn reconstructed_transmission(&self, z: Complex64) -> PyResult<Complex64> {
        self.rec()?.reconstruct_t(&SurfacePoint::upper(z)).map_err(py_err)
    }

    /// `τ_1..τ_k` along the three routes.
    #[pyo3(signature = (k = 3))]
    fn invariants<'py>(&self, py: Python<'py>, k: usize) -> PyResult<Bound<'py, PyDict>> {
        let r = kdv_invariants::invariants_report(&self.inner, self.rec()?, k).map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("integral", r.tau_integral)?;
        d.set_item("log_t_fit", r.tau_log_t)?;
        d.set_item("trace_formula", r.tau_trace)?;
        d.set_item("discrepancy_log_t", r.discrepancy_log_t)?;
        d.set_item("discrepancy_trace", r.discrepancy_trace)?;
        Ok(d)
    }

    /// Leading coefficient of `T(iy) - 1` in powers of `(iy)^{-1/2}`.
    #[pyo3(signature = (y_min = 1e2, y_max = 1e6, points = 30))]
    fn large_z_coefficient(&self, y_min: f64, y_max: f64, points: usize) -> PyResult<Complex64> {
        kdv_invariants::large_z_coefficient(&self.inner, y_min, y_max, points).map_err(py_err)
    }
}

/// Evolves `v_t = -v_xxx + 6 v v_x` on a periodic box from the samples
/// `v0` on the grid `-length/2 + j length/n`; returns `(x, v, drift)`.
#[pyfunction]
#[pyo3(signature = (v0, e0, t_end, length = 100.0, dt = 1e-3))]
fn kdv_evolve(v0: Vec<f64>, e0: f64, t_end: f64, length: f64, dt: f64) -> PyResult<(Vec<f64>, Vec<f64>, [f64; 3])> {
    let opts = KdvOptions {
        n: v0.len(),
        length,
        dt,
        ..Default::default()
    };
    let run = kdv_invariants::kdv_evolve_g0(&v0, e0, t_end, 100, opts).map_err(py_err)?;
    let drift = run.drift();
    Ok((run.xs, run.v, drift))
}

#[pymodule]
fn fgscatter_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Background>()?;
    m.add_class::<Problem>()?;
    m.add_function(wrap_pyfunction!(kdv_evolve, m)?)?;
    Ok(())
}
