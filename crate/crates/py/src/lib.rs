//! Python bindings: the sector basis plus the main measured-evolution
//! operations, with keyword arguments mirroring the CLI configuration keys.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use qmbdp::detection::{
    free_dynamics, no_detection_series, single_shot_probability, DetectionConfig,
};
use qmbdp::fock::FockSector as CoreSector;
use qmbdp::krylov::{arnoldi_leading, ArnoldiOptions};
use qmbdp::spectra::{
    diagonalize_sector, filtered_initial_state, vvpt_gap, FilterEnergy, FilterSpec,
    DEGENERACY_THRESHOLD,
};
use qmbdp::trajectories::trajectory_ensemble;
use qmbdp::{build_h1, build_hamiltonian, HamiltonianParams};

fn to_py_err(e: qmbdp::Error) -> PyErr {
    if e.exit_code() == 1 {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn parse_energy(energy: &str) -> PyResult<FilterEnergy> {
    match energy {
        "ground" => Ok(FilterEnergy::Ground),
        "mid" => Ok(FilterEnergy::Mid),
        other => other
            .parse::<f64>()
            .map(FilterEnergy::Value)
            .map_err(|_| PyValueError::new_err(format!("energy must be 'ground', 'mid' or a number, got {other:?}"))),
    }
}

#[allow(clippy::too_many_arguments)]
fn build_config(
    n_sites: usize,
    delta: f64,
    epsilon0: f64,
    tau: f64,
    steps: usize,
    p: i64,
    q: i64,
    sigma: f64,
    energy: &str,
    seed: u64,
    cheb_tol: f64,
) -> PyResult<DetectionConfig> {
    let config = DetectionConfig {
        n_sites,
        params: HamiltonianParams {
            hopping: 1.0,
            interaction: delta,
            impurity: epsilon0,
            boundary_hop: true,
        },
        detector_p: p,
        detector_q: q,
        tau,
        steps,
        filter: FilterSpec {
            energy: parse_energy(energy)?,
            sigma,
            seed,
        },
        cheb_tol,
    };
    config.validate().map_err(to_py_err)?;
    Ok(config)
}

/// Occupation-number basis of a fixed-filling chain sector.
#[pyclass(name = "FockSector", frozen)]
struct PySector {
    inner: CoreSector,
}

#[pymethods]
impl PySector {
    #[new]
    fn new(n_sites: usize, n_particles: usize) -> PyResult<Self> {
        Ok(Self {
            inner: CoreSector::build(n_sites, n_particles).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn n_sites(&self) -> usize {
        self.inner.n_sites()
    }

    #[getter]
    fn n_particles(&self) -> usize {
        self.inner.n_particles()
    }

    /// Bitstring of basis state `index` (bit b holds site b − N/2 + 1).
    fn state(&self, index: usize) -> PyResult<u64> {
        if index >= self.inner.dim() {
            return Err(PyValueError::new_err("index out of range"));
        }
        Ok(self.inner.state(index))
    }

    /// Canonical index of a bitstring.
    fn index_of(&self, bits: u64) -> PyResult<usize> {
        self.inner.index_of(bits).map_err(to_py_err)
    }

    /// Particles on the right half of a bitstring.
    fn right_half_count(&self, bits: u64) -> usize {
        self.inner.right_half_count(bits)
    }

    /// Sub-dimension of each right-half particle-count block.
    fn right_sub_dims(&self) -> Vec<usize> {
        let rc = self.inner.right_count();
        (0..=rc.max_value()).map(|r| rc.sub_dim(r)).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "FockSector(n_sites={}, n_particles={}, dim={})",
            self.inner.n_sites(),
            self.inner.n_particles(),
            self.inner.dim()
        )
    }
}

/// Hilbert-space dimension of a sector without building it.
#[pyfunction]
fn sector_dimension(n_sites: usize, n_particles: usize) -> u128 {
    qmbdp::binomial(n_sites, n_particles)
}

/// No-detection series: returns a dict with `r` (linear, underflows to 0)
/// and `log10_r` (exact) for k = 0..=steps.
#[pyfunction]
#[pyo3(signature = (n_sites, delta, *, epsilon0=0.5, tau=2.0, steps=1000, p=3, q=5, sigma=0.1, energy="ground", seed=42, cheb_tol=1e-12))]
#[allow(clippy::too_many_arguments)]
fn no_detection<'py>(
    py: Python<'py>,
    n_sites: usize,
    delta: f64,
    epsilon0: f64,
    tau: f64,
    steps: usize,
    p: i64,
    q: i64,
    sigma: f64,
    energy: &str,
    seed: u64,
    cheb_tol: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let config = build_config(
        n_sites, delta, epsilon0, tau, steps, p, q, sigma, energy, seed, cheb_tol,
    )?;
    let series = no_detection_series(&config).map_err(to_py_err)?;
    let out = PyDict::new(py);
    let r: Vec<f64> = (0..series.len()).map(|k| series.r(k)).collect();
    let log10: Vec<f64> = (0..series.len()).map(|k| series.log10_r(k)).collect();
    out.set_item("r", r)?;
    out.set_item("log10_r", log10)?;
    out.set_item("t_n", series.t(series.len() - 1))?;
    Ok(out)
}

/// Block-coupling gap table: rows (alpha, E_alpha, g_alpha, flagged).
#[pyfunction]
#[pyo3(signature = (n_sites, delta, *, epsilon0=0.5))]
fn gap_table(
    n_sites: usize,
    delta: f64,
    epsilon0: f64,
) -> PyResult<Vec<(usize, f64, f64, bool)>> {
    let params = HamiltonianParams {
        hopping: 1.0,
        interaction: delta,
        impurity: epsilon0,
        boundary_hop: true,
    };
    let sector = CoreSector::half_filling(n_sites).map_err(to_py_err)?;
    let rc = sector.right_count();
    let h0 = build_hamiltonian(&sector, &params.without_boundary_hop()).map_err(to_py_err)?;
    let h1 = build_h1(&sector, &params).map_err(to_py_err)?;
    let r0 = diagonalize_sector(&h0, &rc, 0).map_err(to_py_err)?;
    let r1 = diagonalize_sector(&h0, &rc, 1).map_err(to_py_err)?;
    let r2 = diagonalize_sector(&h0, &rc, 2).map_err(to_py_err)?;
    let table = vvpt_gap(&r0, &r1, &r2, &h1, DEGENERACY_THRESHOLD).map_err(to_py_err)?;
    Ok((0..table.len())
        .map(|alpha| (alpha, table.energies[alpha], table.gaps[alpha], table.flagged[alpha]))
        .collect())
}

/// Leading decay rate of the measured step operator via Krylov iteration.
#[pyfunction]
#[pyo3(signature = (n_sites, delta, *, epsilon0=0.5, tau=2.0, p=3, q=5, sigma=0.1, energy="ground", seed=42, cheb_tol=1e-12, krylov_dim=30, max_restarts=50, tol=1e-8, stall_cycles=5))]
#[allow(clippy::too_many_arguments)]
fn leading_decay<'py>(
    py: Python<'py>,
    n_sites: usize,
    delta: f64,
    epsilon0: f64,
    tau: f64,
    p: i64,
    q: i64,
    sigma: f64,
    energy: &str,
    seed: u64,
    cheb_tol: f64,
    krylov_dim: usize,
    max_restarts: usize,
    tol: f64,
    stall_cycles: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let config = build_config(
        n_sites, delta, epsilon0, tau, 1, p, q, sigma, energy, seed, cheb_tol,
    )?;
    let run = qmbdp::detection::assemble(&config).map_err(to_py_err)?;
    let est = arnoldi_leading(
        |psi| qmbdp::detection::apply_mq(&run.plan, &run.hamiltonian, &run.q_mask, psi),
        run.sector.dim(),
        &run.q_mask,
        &ArnoldiOptions {
            krylov_dim,
            max_restarts,
            tol,
            stall_cycles,
            seed,
        },
    )
    .map_err(to_py_err)?;
    let out = PyDict::new(py);
    out.set_item("lambda1", est.lambda1)?;
    out.set_item("theta1", est.theta1)?;
    out.set_item("converged", est.converged)?;
    out.set_item("restarts", est.restarts)?;
    out.set_item("residual", est.residual)?;
    Ok(out)
}

/// Click counts of a reproducible trajectory ensemble:
/// rows (index, clicks, click_steps).
#[pyfunction]
#[pyo3(signature = (n_sites, delta, *, count=4, master_seed=42, epsilon0=0.5, tau=2.0, steps=1000, p=3, q=5, sigma=0.1, energy="ground", seed=42, cheb_tol=1e-12))]
#[allow(clippy::too_many_arguments)]
fn trajectory_clicks(
    n_sites: usize,
    delta: f64,
    count: usize,
    master_seed: u64,
    epsilon0: f64,
    tau: f64,
    steps: usize,
    p: i64,
    q: i64,
    sigma: f64,
    energy: &str,
    seed: u64,
    cheb_tol: f64,
) -> PyResult<Vec<(usize, u64, Vec<usize>)>> {
    let config = build_config(
        n_sites, delta, epsilon0, tau, steps, p, q, sigma, energy, seed, cheb_tol,
    )?;
    let (records, _) = trajectory_ensemble(&config, count, master_seed).map_err(to_py_err)?;
    records
        .into_iter()
        .map(|rec| {
            rec.map(|r| (r.index, r.clicks, r.click_steps))
                .map_err(to_py_err)
        })
        .collect()
}

/// ⟨N̂_R⟩ along measurement-free evolution at the given times.
#[pyfunction]
#[pyo3(signature = (n_sites, delta, times, *, epsilon0=0.5, tau=2.0, p=3, q=5, sigma=0.1, energy="ground", seed=42, cheb_tol=1e-12))]
#[allow(clippy::too_many_arguments)]
fn right_count_dynamics(
    n_sites: usize,
    delta: f64,
    times: Vec<f64>,
    epsilon0: f64,
    tau: f64,
    p: i64,
    q: i64,
    sigma: f64,
    energy: &str,
    seed: u64,
    cheb_tol: f64,
) -> PyResult<Vec<f64>> {
    let config = build_config(
        n_sites, delta, epsilon0, tau, 1, p, q, sigma, energy, seed, cheb_tol,
    )?;
    let out = free_dynamics(&config, &times, &[]).map_err(to_py_err)?;
    Ok(out.right_count)
}

/// ⟨n̂_p n̂_q⟩ after free evolution to time t.
#[pyfunction]
#[pyo3(signature = (n_sites, delta, t, *, epsilon0=0.5, tau=2.0, p=3, q=5, sigma=0.1, energy="ground", seed=42, cheb_tol=1e-12))]
#[allow(clippy::too_many_arguments)]
fn single_shot(
    n_sites: usize,
    delta: f64,
    t: f64,
    epsilon0: f64,
    tau: f64,
    p: i64,
    q: i64,
    sigma: f64,
    energy: &str,
    seed: u64,
    cheb_tol: f64,
) -> PyResult<f64> {
    let config = build_config(
        n_sites, delta, epsilon0, tau, 1, p, q, sigma, energy, seed, cheb_tol,
    )?;
    single_shot_probability(&config, t).map_err(to_py_err)
}

/// Amplitudes of the energy-filtered random initial state (real and
/// imaginary parts), for inspection from Python.
#[pyfunction]
#[pyo3(signature = (n_sites, delta, *, epsilon0=0.5, sigma=0.1, energy="ground", seed=42))]
fn initial_state(
    n_sites: usize,
    delta: f64,
    epsilon0: f64,
    sigma: f64,
    energy: &str,
    seed: u64,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let params = HamiltonianParams {
        hopping: 1.0,
        interaction: delta,
        impurity: epsilon0,
        boundary_hop: true,
    };
    let sector = CoreSector::half_filling(n_sites).map_err(to_py_err)?;
    let rc = sector.right_count();
    let h0 = build_hamiltonian(&sector, &params.without_boundary_hop()).map_err(to_py_err)?;
    let r1 = diagonalize_sector(&h0, &rc, 1).map_err(to_py_err)?;
    let spec = FilterSpec {
        energy: parse_energy(energy)?,
        sigma,
        seed,
    };
    let psi = filtered_initial_state(&r1, &spec, &sector).map_err(to_py_err)?;
    Ok((
        psi.as_slice().iter().map(|a| a.re).collect(),
        psi.as_slice().iter().map(|a| a.im).collect(),
    ))
}

#[pymodule]
fn qmbdp_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySector>()?;
    m.add_function(wrap_pyfunction!(sector_dimension, m)?)?;
    m.add_function(wrap_pyfunction!(no_detection, m)?)?;
    m.add_function(wrap_pyfunction!(gap_table, m)?)?;
    m.add_function(wrap_pyfunction!(leading_decay, m)?)?;
    m.add_function(wrap_pyfunction!(trajectory_clicks, m)?)?;
    m.add_function(wrap_pyfunction!(right_count_dynamics, m)?)?;
    m.add_function(wrap_pyfunction!(single_shot, m)?)?;
    m.add_function(wrap_pyfunction!(initial_state, m)?)?;
    Ok(())
}
