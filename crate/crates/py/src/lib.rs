//! Python bindings for the home WiFi selection simulator.

use std::collections::{BTreeMap, BTreeSet};

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use homewifi_core::config::Config;
use homewifi_core::model::{self as m, Band, ChannelId, NodeId, NodeKind, Position, RadioConfig};
use homewifi_core::perf::{self, Environment};
use homewifi_core::radio;
use homewifi_core::runner::{self, Aggregate, Criterion, Overrides, RunConfig};
use homewifi_core::scenarios;
use homewifi_core::selection::{self, Mechanism, SelectionConfig};

fn err(e: homewifi_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<T: serde::Serialize>(py: Python<'_>, v: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn band(name: &str) -> PyResult<Band> {
    match name {
        "2.4" | "2g4" => Ok(Band::Band2G4),
        "5" | "5g" => Ok(Band::Band5G),
        other => Err(PyValueError::new_err(format!("unknown band {other:?}, use \"2.4\" or \"5\""))),
    }
}

fn mechanism(name: &str) -> PyResult<Mechanism> {
    match name {
        "rssi" => Ok(Mechanism::RssiBased),
        "loadaware" => Ok(Mechanism::LoadAware),
        other => Err(PyValueError::new_err(format!("unknown mechanism {other:?}"))),
    }
}

fn criterion(name: &str) -> PyResult<Criterion> {
    match name {
        "thr99" => Ok(Criterion::Thr99),
        "delay10ms" => Ok(Criterion::Delay10ms),
        "no_congestion" => Ok(Criterion::NoCongestion),
        other => Err(PyValueError::new_err(format!("unknown criterion {other:?}"))),
    }
}

/// Path loss in dB at `f_mhz` over `d_m` metres.
#[pyfunction]
fn path_loss_db(f_mhz: f64, d_m: f64) -> PyResult<f64> {
    radio::path_loss_db(f_mhz, d_m, &Config::builtin().propagation).map_err(err)
}

/// Distance at which a standard 20 dBm radio is received at `threshold_dbm`.
#[pyfunction]
#[pyo3(signature = (threshold_dbm=-90.0, band_name="2.4"))]
fn max_range_m(threshold_dbm: f64, band_name: &str) -> PyResult<f64> {
    let ch = match band(band_name)? {
        Band::Band2G4 => ChannelId::g24(1),
        Band::Band5G => ChannelId::g5(36),
    };
    radio::max_range_m(&RadioConfig::standard(ch), threshold_dbm, &Config::builtin().propagation).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (rssi_dbm, p_t_dbm=20.0, sensitivity_dbm=-90.0))]
fn weighted_rssi(rssi_dbm: f64, p_t_dbm: f64, sensitivity_dbm: f64) -> PyResult<f64> {
    selection::weighted_rssi(rssi_dbm, p_t_dbm, sensitivity_dbm).map_err(err)
}

/// Y = alpha (w + ca) + (1 - alpha) cb_sum; lower is better.
#[pyfunction]
fn decision_metric(alpha: f64, w: f64, ca: f64, cb_sum: f64) -> f64 {
    selection::decision_metric(alpha, w, ca, cb_sum)
}

/// `(test_id, points, k, description)` for every built-in test.
#[pyfunction]
fn list_tests() -> PyResult<Vec<(String, usize, usize, String)>> {
    let defaults = Config::builtin().grid_defaults();
    scenarios::grid_manifest()
        .map_err(err)?
        .into_iter()
        .map(|e| {
            let n = scenarios::build_test(&e.test_id, &defaults).map_err(err)?.len();
            Ok((e.test_id, n, e.k, e.description))
        })
        .collect()
}

/// Aggregated output of one built-in test run.
#[pyclass(name = "RunResult")]
struct PyRunResult {
    aggregates: Vec<Aggregate>,
}

#[pymethods]
impl PyRunResult {
    /// One dict per sweep point.
    fn aggregates(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.aggregates)
    }

    /// Series label to operational range in Mbps.
    #[pyo3(signature = (criterion_name="no_congestion"))]
    fn operational_ranges(&self, criterion_name: &str) -> PyResult<BTreeMap<String, f64>> {
        let c = criterion(criterion_name)?;
        runner::series(&self.aggregates)
            .into_iter()
            .map(|(label, s)| Ok((label, runner::operational_range(&s, c).map_err(err)? / 1e6)))
            .collect()
    }

    fn __len__(&self) -> usize {
        self.aggregates.len()
    }
}

#[pyfunction]
#[pyo3(signature = (test_id, k=None, alpha=None, beta=None, seed=None, mechanism_name=None, workers=None))]
#[allow(clippy::too_many_arguments)]
fn run_test(
    py: Python<'_>,
    test_id: &str,
    k: Option<usize>,
    alpha: Option<f64>,
    beta: Option<f64>,
    seed: Option<u64>,
    mechanism_name: Option<&str>,
    workers: Option<usize>,
) -> PyResult<PyRunResult> {
    let overrides = Overrides {
        alpha,
        beta_pct: beta,
        k,
        seed,
        mechanism: mechanism_name.map(mechanism).transpose()?,
    };
    let mut cfg = RunConfig::for_test(test_id, Config::builtin(), &overrides).map_err(err)?;
    cfg.workers = workers.or(cfg.workers);
    let aggregates = py.detach(|| runner::run_aggregates(&cfg)).map_err(err)?;
    Ok(PyRunResult { aggregates })
}

/// A network under construction: AP, Extenders and STAs.
#[pyclass(name = "Topology")]
struct PyTopology {
    inner: m::Topology,
}

impl PyTopology {
    fn env(&self, per_sta_load_bps: f64) -> PyResult<Environment> {
        let config = Config::builtin();
        Ok(Environment {
            radio: config.radio_env(),
            mac: config.mac_overheads,
            traffic: m::TrafficProfile::new(
                config.traffic.packet_length_bits,
                per_sta_load_bps,
                self.inner.stas().count(),
            )
            .map_err(err)?,
            external: vec![],
        })
    }
}

#[pymethods]
impl PyTopology {
    /// New topology with the AP at `(x, y)` on 2.4 GHz channel `channel`.
    #[new]
    #[pyo3(signature = (x=0.0, y=0.0, channel=1, max_chain=2))]
    fn new(x: f64, y: f64, channel: u16, max_chain: usize) -> Self {
        let mut t = m::Topology::new(max_chain);
        t.add_node(m::Node::infrastructure(
            NodeId::AP,
            NodeKind::Ap,
            Position::new(x, y),
            ChannelId::g24(channel),
            scenarios::BACKHAUL_CHANNEL,
        ));
        PyTopology { inner: t }
    }

    /// Adds an Extender relaying through `parent`; returns its id.
    #[pyo3(signature = (x, y, channel, parent=0))]
    fn add_extender(&mut self, x: f64, y: f64, channel: u16, parent: u32) -> u32 {
        let id = self.inner.next_id();
        self.inner.add_node(m::Node::infrastructure(
            id,
            NodeKind::Extender,
            Position::new(x, y),
            ChannelId::g24(channel),
            scenarios::BACKHAUL_CHANNEL,
        ));
        self.inner.backhaul_parent.insert(id, NodeId(parent));
        id.0
    }

    /// Adds a STA; returns its id.
    #[pyo3(signature = (x, y, capable=true))]
    fn add_sta(&mut self, x: f64, y: f64, capable: bool) -> u32 {
        let id = self.inner.next_id();
        self.inner.add_node(m::Node::sta(id, Position::new(x, y), capable));
        id.0
    }

    /// Violations as strings; empty when the topology is sound.
    fn validate(&self) -> Vec<String> {
        self.inner.validate().iter().map(|v| format!("{v:?}")).collect()
    }

    /// STA id to parent id.
    fn associations(&self) -> BTreeMap<u32, u32> {
        self.inner.associations.iter().map(|(s, p)| (s.0, p.0)).collect()
    }

    /// Associates every STA to its strongest AP/Extender.
    fn associate(&mut self) -> PyResult<()> {
        let env = self.env(0.0)?;
        self.inner = selection::initial_association(&self.inner, &env).map_err(err)?;
        Ok(())
    }

    /// One load-aware pass over the capable STAs; returns the moves as
    /// `(sta, from, to)`.
    #[pyo3(signature = (per_sta_load_bps, alpha=0.5))]
    fn balance(&mut self, per_sta_load_bps: f64, alpha: f64) -> PyResult<Vec<(u32, u32, u32)>> {
        let env = self.env(per_sta_load_bps)?;
        let capable: BTreeSet<NodeId> = self.inner.stas().filter(|n| n.supports_11kv).map(|n| n.id).collect();
        let cfg = SelectionConfig::load_aware(alpha, 100.0);
        let (t, moves) = selection::reassociation_pass(&self.inner, &env, &cfg, &capable).map_err(err)?;
        self.inner = t;
        Ok(moves.iter().map(|mv| (mv.sta.0, mv.from.0, mv.to.0)).collect())
    }

    /// Throughput, delay and congestion at the given per-STA load.
    /// `per_sta` maps STA id to `(delivered_bps, delay_ms)` and `per_channel`
    /// maps "band/number" to `(utilization, busy_fraction)`.
    fn evaluate<'py>(&self, py: Python<'py>, per_sta_load_bps: f64) -> PyResult<Bound<'py, PyDict>> {
        let env = self.env(per_sta_load_bps)?;
        let r = perf::evaluate(&self.inner, &env).map_err(err)?;
        let out = PyDict::new(py);
        out.set_item("network_throughput_pct", r.network_throughput_pct)?;
        out.set_item("avg_delay_ms", r.avg_delay_ms)?;
        out.set_item("congested", r.congested)?;
        let stas = PyDict::new(py);
        for (id, s) in &r.per_sta {
            stas.set_item(id.0, (s.delivered_bps, s.delay_ms))?;
        }
        out.set_item("per_sta", stas)?;
        let channels = PyDict::new(py);
        for (ch, c) in &r.per_channel {
            let b = match ch.band {
                Band::Band2G4 => "2.4",
                Band::Band5G => "5",
            };
            channels.set_item(format!("{b}/{}", ch.number), (c.utilization, c.busy_fraction))?;
        }
        out.set_item("per_channel", channels)?;
        Ok(out)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Topology(extenders={}, stas={}, associated={})",
            self.inner.extenders().count(),
            self.inner.stas().count(),
            self.inner.associations.len()
        )
    }
}

#[pymodule]
fn homewifi(module: &Bound<'_, PyModule>) -> PyResult<()> {
    module.add_function(wrap_pyfunction!(path_loss_db, module)?)?;
    module.add_function(wrap_pyfunction!(max_range_m, module)?)?;
    module.add_function(wrap_pyfunction!(weighted_rssi, module)?)?;
    module.add_function(wrap_pyfunction!(decision_metric, module)?)?;
    module.add_function(wrap_pyfunction!(list_tests, module)?)?;
    module.add_function(wrap_pyfunction!(run_test, module)?)?;
    module.add_class::<PyRunResult>()?;
    module.add_class::<PyTopology>()?;
    Ok(())
}
