//! Python bindings: instances, the association and power-control solvers, the
//! MIMO two-stage scheme and the experiment runner.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use hetnet_core::baselines::max_sinr_assoc;
use hetnet_core::dcd::{dcd_solve, Association, DcdOptions};
use hetnet_core::harness::{self, ExperimentSpec};
use hetnet_core::joint::{direct_dual_solve, iterate_assoc_power, iterate_maxsinr_power, DirectDualOptions, JointOptions};
use hetnet_core::mimo::{maxsinr_wmmse_solve, two_stage_solve, CandidateCount, TwoStageOptions, TwoStageResult};
use hetnet_core::netmodel::{gen_topology, NetworkConfig, NetworkInstance, Tier, UtilityMatrix};
use hetnet_core::powerctl::{newton_power_solve, NewtonOptions};
use hetnet_core::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidConfig(_) | Error::Dimension(_) | Error::OracleGuard(_) | Error::MissingChannels | Error::Toml(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn association(inst: &NetworkInstance, bs_of: Vec<usize>) -> PyResult<Association> {
    if bs_of.len() != inst.num_users || bs_of.iter().any(|&j| j >= inst.num_bs) {
        return Err(PyValueError::new_err("association needs one BS index below num_bs per user"));
    }
    Ok(Association::from_bs_of(bs_of, inst.num_bs))
}

fn table(rows: &[Vec<f64>]) -> PyResult<UtilityMatrix> {
    let l = rows.first().map_or(0, Vec::len);
    if l == 0 || rows.iter().any(|r| r.len() != l) {
        return Err(PyValueError::new_err("utility table must be a non-empty rectangular list of rows"));
    }
    Ok(UtilityMatrix::from_rows(rows))
}

/// A network scenario: gains, power budgets, noise and (optionally) MIMO channels.
#[pyclass(name = "Instance", module = "hetnet", frozen)]
struct PyInstance {
    inner: NetworkInstance,
}

impl PyInstance {
    fn check_power(&self, p: Option<Vec<f64>>) -> PyResult<Vec<f64>> {
        let p = p.unwrap_or_else(|| self.inner.full_power());
        if p.len() != self.inner.num_bs {
            return Err(PyValueError::new_err("power vector length must equal the BS count"));
        }
        Ok(p)
    }
}

#[pymethods]
impl PyInstance {
    /// Seeded drop of the hexagonal HetNet layout.
    #[staticmethod]
    #[pyo3(signature = (seed=0, num_cells=7, picos_per_cell=3, users_per_cell=30, bs_antennas=1, user_antennas=1, wraparound=true, total_picos=None))]
    #[allow(clippy::too_many_arguments)]
    fn generate(
        seed: u64,
        num_cells: usize,
        picos_per_cell: usize,
        users_per_cell: usize,
        bs_antennas: usize,
        user_antennas: usize,
        wraparound: bool,
        total_picos: Option<usize>,
    ) -> PyResult<Self> {
        let cfg = NetworkConfig {
            seed,
            num_cells,
            picos_per_cell,
            users_per_cell,
            bs_antennas,
            user_antennas,
            wraparound,
            total_picos,
            ..NetworkConfig::default()
        };
        Ok(Self { inner: gen_topology(&cfg).map_err(to_py)? })
    }

    /// Single-antenna instance from a `users x bss` linear gain table.
    #[staticmethod]
    #[pyo3(signature = (gains, max_psd, noise_psd, bandwidth_hz=10e6, snr_gap=1.0))]
    fn from_gains(gains: Vec<Vec<f64>>, max_psd: Vec<f64>, noise_psd: Vec<f64>, bandwidth_hz: f64, snr_gap: f64) -> PyResult<Self> {
        let inst = NetworkInstance::from_gains(&gains, max_psd, noise_psd, bandwidth_hz, snr_gap).map_err(to_py)?;
        inst.validate().map_err(to_py)?;
        Ok(Self { inner: inst })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: NetworkInstance::from_json(text).map_err(to_py)? })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    #[getter]
    fn num_users(&self) -> usize {
        self.inner.num_users
    }

    #[getter]
    fn num_bs(&self) -> usize {
        self.inner.num_bs
    }

    #[getter]
    fn max_psd(&self) -> Vec<f64> {
        self.inner.max_psd.clone()
    }

    #[getter]
    fn tiers(&self) -> Vec<&'static str> {
        self.inner.tiers.iter().map(|t| if *t == Tier::Pico { "pico" } else { "macro" }).collect()
    }

    #[getter]
    fn gain(&self) -> Vec<Vec<f64>> {
        self.inner.gain.chunks(self.inner.num_bs).map(<[f64]>::to_vec).collect()
    }

    #[getter]
    fn has_channels(&self) -> bool {
        self.inner.channels.is_some()
    }

    /// Linear SINR of user `i` served by BS `j` (full power when `p` is omitted).
    #[pyo3(signature = (i, j, p=None))]
    fn sinr(&self, i: usize, j: usize, p: Option<Vec<f64>>) -> PyResult<f64> {
        if i >= self.inner.num_users || j >= self.inner.num_bs {
            return Err(PyValueError::new_err("user or BS index out of range"));
        }
        let p = self.check_power(p)?;
        Ok(self.inner.sinr(i, j, &p))
    }

    /// a_ij = ln(W log2(1 + SINR_ij/Γ) in Mbps): the log rate of user i alone on BS j.
    #[pyo3(signature = (p=None, antenna_scaling=false))]
    fn utility_matrix(&self, p: Option<Vec<f64>>, antenna_scaling: bool) -> PyResult<Vec<Vec<f64>>> {
        let p = self.check_power(p)?;
        let a = self.inner.utility_matrix(&p, antenna_scaling);
        Ok((0..a.num_users).map(|i| a.row(i).to_vec()).collect())
    }

    /// Rates (bits/s), utility and loads of an association at power `p`.
    #[pyo3(signature = (bs_of, p=None))]
    fn rate_report<'py>(&self, py: Python<'py>, bs_of: Vec<usize>, p: Option<Vec<f64>>) -> PyResult<Bound<'py, PyDict>> {
        let p = self.check_power(p)?;
        let assoc = association(&self.inner, bs_of)?;
        let rep = self.inner.rate_report(&assoc, &p);
        let d = PyDict::new(py);
        d.set_item("rates", rep.rates)?;
        d.set_item("utility", rep.utility)?;
        d.set_item("load", rep.load)?;
        d.set_item("pico_user_fraction", rep.pico_user_fraction)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("Instance(num_users={}, num_bs={})", self.inner.num_users, self.inner.num_bs)
    }
}

/// Max-SINR association (full power when `p` is omitted).
#[pyfunction]
#[pyo3(signature = (inst, p=None))]
fn max_sinr(inst: &PyInstance, p: Option<Vec<f64>>) -> PyResult<Vec<usize>> {
    let p = inst.check_power(p)?;
    Ok(max_sinr_assoc(&inst.inner, &p).bs_of)
}

/// Dual coordinate descent on a utility table.
#[pyfunction]
#[pyo3(signature = (a, max_sweeps=200, tol=1e-6))]
fn dcd<'py>(py: Python<'py>, a: Vec<Vec<f64>>, max_sweeps: usize, tol: f64) -> PyResult<Bound<'py, PyDict>> {
    let a = table(&a)?;
    let opts = DcdOptions { max_sweeps, convergence_tol: tol, ..DcdOptions::default() };
    let res = py.detach(|| dcd_solve(&a, &opts)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("bs_of", res.association.bs_of.clone())?;
    d.set_item("load", res.association.load.clone())?;
    d.set_item("utility", res.utility(&a))?;
    d.set_item("gap_bound", res.gap_bound())?;
    d.set_item("mu", res.dual.mu.clone())?;
    d.set_item("nu", res.dual.nu)?;
    d.set_item("dual_objective", res.dual.dual_objective)?;
    d.set_item("converged", res.converged)?;
    d.set_item("sweeps", res.sweeps)?;
    d.set_item("dual_trace", res.trace.iter().map(|e| e.dual_objective).collect::<Vec<_>>())?;
    Ok(d)
}

/// Exhaustive search over all associations of a small utility table.
#[pyfunction]
fn exhaustive_oracle(a: Vec<Vec<f64>>) -> PyResult<(f64, Vec<usize>)> {
    let (u, assoc) = harness::exhaustive_oracle(&table(&a)?).map_err(to_py)?;
    Ok((u, assoc.bs_of))
}

/// Newton power control under a fixed association; returns (p, utility).
#[pyfunction]
#[pyo3(signature = (inst, bs_of, p0=None))]
fn newton_power(py: Python<'_>, inst: &PyInstance, bs_of: Vec<usize>, p0: Option<Vec<f64>>) -> PyResult<(Vec<f64>, f64)> {
    let p0 = inst.check_power(p0)?;
    let assoc = association(&inst.inner, bs_of)?;
    let res = py.detach(|| newton_power_solve(&inst.inner, &assoc, &p0, &NewtonOptions::default())).map_err(to_py)?;
    Ok((res.power.0, res.utility))
}

/// Joint association + power control: "joint-dcd", "joint-maxsinr" or "direct-dual".
#[pyfunction]
#[pyo3(signature = (inst, method="joint-dcd", seed=0))]
fn joint<'py>(py: Python<'py>, inst: &PyInstance, method: &str, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let i = &inst.inner;
    let full = i.full_power();
    let newton = NewtonOptions::default();
    let d = PyDict::new(py);
    let (assoc, power, utility) = match method {
        "joint-dcd" | "joint-maxsinr" => {
            let res = py
                .detach(|| {
                    if method == "joint-dcd" {
                        iterate_assoc_power(i, &full, &JointOptions::default(), &DcdOptions::default(), &newton)
                    } else {
                        iterate_maxsinr_power(i, &full, &JointOptions::default(), &newton)
                    }
                })
                .map_err(to_py)?;
            d.set_item("round_utility", res.trace.iter().map(|e| e.utility).collect::<Vec<_>>())?;
            (res.association, res.power, res.utility)
        }
        "direct-dual" => {
            let opts = DirectDualOptions { seed, ..DirectDualOptions::default() };
            let res = py.detach(|| direct_dual_solve(i, &opts, &newton)).map_err(to_py)?;
            d.set_item("dual_objective", res.dual.dual_objective)?;
            d.set_item("warnings", res.warnings)?;
            (res.association, res.power, res.utility)
        }
        other => return Err(PyValueError::new_err(format!("unknown joint method {other:?}"))),
    };
    d.set_item("bs_of", assoc.bs_of)?;
    d.set_item("load", assoc.load)?;
    d.set_item("power", power.0)?;
    d.set_item("utility", utility)?;
    Ok(d)
}

fn mimo_dict<'py>(py: Python<'py>, res: TwoStageResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("bs_of", res.association.bs_of)?;
    d.set_item("load", res.association.load)?;
    d.set_item("stage_one_power", res.stage_one_power)?;
    d.set_item("average_rates_mbps", res.average_rates)?;
    d.set_item("utility", res.utility)?;
    d.set_item("ema_utility", res.ema_utility)?;
    d.set_item("slots", res.slots.len())?;
    d.set_item("converged", res.converged)?;
    d.set_item("handovers", res.handovers)?;
    Ok(d)
}

/// Two-stage MIMO scheme with `candidates` users per BS per slot.
#[pyfunction]
#[pyo3(signature = (inst, candidates=8, max_slots=200))]
fn two_stage<'py>(py: Python<'py>, inst: &PyInstance, candidates: usize, max_slots: usize) -> PyResult<Bound<'py, PyDict>> {
    let opts = TwoStageOptions { candidates: CandidateCount::PerBs(candidates), max_slots, ..TwoStageOptions::default() };
    let res = py.detach(|| two_stage_solve(&inst.inner, &opts)).map_err(to_py)?;
    mimo_dict(py, res)
}

/// Max-SINR association at full power followed by per-cell WMMSE scheduling.
#[pyfunction]
#[pyo3(signature = (inst, candidates=8, max_slots=200))]
fn maxsinr_wmmse<'py>(py: Python<'py>, inst: &PyInstance, candidates: usize, max_slots: usize) -> PyResult<Bound<'py, PyDict>> {
    let opts = TwoStageOptions { candidates: CandidateCount::PerBs(candidates), max_slots, ..TwoStageOptions::default() };
    let res = py.detach(|| maxsinr_wmmse_solve(&inst.inner, &opts)).map_err(to_py)?;
    mimo_dict(py, res)
}

/// Runs a TOML experiment spec and returns the report as a JSON string.
#[pyfunction]
fn run_experiment(py: Python<'_>, config_toml: &str) -> PyResult<String> {
    let spec = ExperimentSpec::from_toml(config_toml).map_err(to_py)?;
    let report = py.detach(|| harness::run_experiment(&spec)).map_err(to_py)?;
    serde_json::to_string(&report).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn hetnet(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInstance>()?;
    m.add_function(wrap_pyfunction!(max_sinr, m)?)?;
    m.add_function(wrap_pyfunction!(dcd, m)?)?;
    m.add_function(wrap_pyfunction!(exhaustive_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(newton_power, m)?)?;
    m.add_function(wrap_pyfunction!(joint, m)?)?;
    m.add_function(wrap_pyfunction!(two_stage, m)?)?;
    m.add_function(wrap_pyfunction!(maxsinr_wmmse, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
