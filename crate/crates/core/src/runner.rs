//! Monte-Carlo execution over sweep grids, aggregation and export.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::model::{NodeId, TrafficProfile};
use crate::perf::{self, Environment};
use crate::protocol::{self, EventLog, MeasurementMode};
use crate::scenarios::{self, ChannelPlan, Scenario, SweepParams, SweepPoint};
use crate::selection::{self, Mechanism};

/// Deployments evaluated per parallel batch.
const BATCH: usize = 20_000;

/// Command-line style overrides applied to every sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Overrides {
    pub alpha: Option<f64>,
    pub beta_pct: Option<f64>,
    pub k: Option<usize>,
    pub seed: Option<u64>,
    pub mechanism: Option<Mechanism>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub test_id: String,
    pub points: Vec<SweepPoint>,
    pub config: Config,
    pub workers: Option<usize>,
    pub emit_events: bool,
    pub measurement_mode: MeasurementMode,
}

impl RunConfig {
    /// Grid of a built-in test with `overrides` applied.
    pub fn for_test(test_id: &str, config: &Config, overrides: &Overrides) -> Result<RunConfig> {
        let mut d = config.grid_defaults();
        if let Some(seed) = overrides.seed {
            d.seed = seed;
        }
        let mut points = scenarios::build_test(test_id, &d)?;
        for p in &mut points {
            apply_overrides(p, config, overrides)?;
        }
        Ok(RunConfig {
            test_id: test_id.to_string(),
            points,
            config: config.clone(),
            workers: config.run.workers,
            emit_events: config.run.emit_events,
            measurement_mode: MeasurementMode::default(),
        })
    }

    /// Single point from the config's own scenario section.
    pub fn for_scenario(config: &Config, overrides: &Overrides) -> Result<RunConfig> {
        let scenario = match (&config.scenario.spec, &config.scenario.explicit) {
            (Some(spec), None) => {
                let mut spec = spec.clone();
                if let Some(seed) = overrides.seed {
                    spec.seed = seed;
                }
                Scenario::Spec(spec)
            }
            (None, Some(e)) => Scenario::Explicit(e.clone()),
            _ => return Err(Error::Config("config has no scenario to run".into())),
        };
        let per_sta = config
            .traffic
            .per_sta_load_bps
            .ok_or_else(|| Error::Config("traffic.per_sta_load_bps is required for scenario runs".into()))?;
        let n_sta = match &scenario {
            Scenario::Spec(s) => s.n_sta,
            Scenario::Explicit(e) => e.topology.stas().count(),
        };
        let mut point = SweepPoint {
            test_id: "scenario".into(),
            params: SweepParams {
                n_ext: scenario.n_extenders(),
                channel_plan: scenario.channel_plan(),
                rssi_ap_e: match &scenario {
                    Scenario::Spec(s) if s.n_extenders() > 0 => Some(s.extender_rssi_dbm),
                    _ => None,
                },
                b_ext_bps: None,
            },
            scenario,
            selection: config.selection,
            per_sta_load_bps: per_sta,
            n_sta,
            external: vec![],
        };
        apply_overrides(&mut point, config, overrides)?;
        Ok(RunConfig {
            test_id: "scenario".into(),
            points: vec![point],
            config: config.clone(),
            workers: config.run.workers,
            emit_events: config.run.emit_events,
            measurement_mode: MeasurementMode::default(),
        })
    }

    pub fn total_deployments(&self) -> usize {
        self.points.iter().map(|p| p.scenario.k()).sum()
    }
}

fn apply_overrides(p: &mut SweepPoint, config: &Config, o: &Overrides) -> Result<()> {
    let sel = &mut p.selection;
    sel.tie_break = config.selection.tie_break;
    sel.passes = config.selection.passes;
    sel.load_refresh = config.selection.load_refresh;
    sel.self_load = config.selection.self_load;
    if let Some(m) = o.mechanism {
        sel.mechanism = m;
    }
    if let Some(a) = o.alpha {
        sel.alpha = a;
    }
    if let Some(b) = o.beta_pct {
        sel.beta_pct = b;
    }
    sel.check()?;
    let k = o.k.or(config.run.k);
    if let (Some(k), Scenario::Spec(spec)) = (k, &mut p.scenario) {
        if k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        spec.k = k;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub test_id: String,
    pub point_index: usize,
    pub params: SweepParams,
    pub deployment_index: u64,
    pub mechanism: Mechanism,
    pub alpha: f64,
    pub beta_pct: f64,
    pub b_t_bps: f64,
    pub throughput_pct: f64,
    pub avg_delay_ms: f64,
    pub congested: bool,
    /// Parent of every STA in id order; `None` when unassociated.
    pub associations: Vec<(NodeId, Option<NodeId>)>,
}

impl ResultRow {
    pub fn n_associated(&self) -> usize {
        self.associations.iter().filter(|(_, p)| p.is_some()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub test_id: String,
    pub point_index: usize,
    pub params: SweepParams,
    pub mechanism: Mechanism,
    pub alpha: f64,
    pub beta_pct: f64,
    pub b_t_bps: f64,
    pub k: usize,
    pub mean_throughput_pct: f64,
    pub mean_delay_ms: f64,
    pub pct_congested: f64,
    /// Share of STAs that found an AP/Extender, over all deployments.
    pub association_pct: f64,
}

impl Aggregate {
    /// Label shared by all points of one B_T series.
    pub fn series_label(&self) -> String {
        series_label(&self.params, self.mechanism, self.alpha, self.beta_pct)
    }
}

pub fn series_label(p: &SweepParams, m: Mechanism, alpha: f64, beta: f64) -> String {
    let mut s = format!("{}E", p.n_ext);
    if let Some(plan) = p.channel_plan {
        s.push_str(&format!(" {}", plan.as_str()));
    }
    s.push_str(&format!(" {}", m.as_str()));
    if m == Mechanism::LoadAware {
        s.push_str(&format!(" a={alpha} b={beta}"));
    }
    if let Some(r) = p.rssi_ap_e {
        s.push_str(&format!(" rssi_ap_e={r}"));
    }
    if let Some(x) = p.b_ext_bps {
        s.push_str(&format!(" b_ext={x}"));
    }
    s
}

/// Evaluates one deployment of one point.
pub fn evaluate_deployment(
    point: &SweepPoint,
    point_index: usize,
    deployment_index: u64,
    config: &Config,
    emit_events: bool,
    mode: MeasurementMode,
) -> Result<(ResultRow, Option<EventLog>)> {
    let sel = &point.selection;
    let dep = scenarios::build_deployment(&point.scenario, deployment_index, sel.beta_pct, &config.propagation)?;
    let n_sta = dep.topology.stas().count();
    let env = Environment {
        radio: dep.radio_env(&config.radio_env()),
        mac: config.mac_overheads,
        traffic: TrafficProfile::new(config.traffic.packet_length_bits, point.per_sta_load_bps, n_sta)?,
        external: point.external.clone(),
    };
    let (topology, log) = if emit_events {
        let (t, log) = protocol::run_protocol(&dep.topology, &env, sel, mode)?;
        (t, Some(log))
    } else {
        let initial = selection::initial_association(&dep.topology, &env)?;
        let (t, _) = selection::reassociation_pass(&initial, &env, sel, &dep.capable)?;
        (t, None)
    };
    let report = perf::evaluate(&topology, &env)?;
    let associations = dep
        .stas()
        .into_iter()
        .map(|s| (s, topology.parent_of(s)))
        .collect();
    let row = ResultRow {
        test_id: point.test_id.clone(),
        point_index,
        params: point.params,
        deployment_index,
        mechanism: sel.mechanism,
        alpha: sel.alpha,
        beta_pct: sel.beta_pct,
        b_t_bps: point.per_sta_load_bps * n_sta as f64,
        throughput_pct: report.network_throughput_pct,
        avg_delay_ms: report.avg_delay_ms,
        congested: report.congested,
        associations,
    };
    Ok((row, log))
}

fn aggregate(point: &SweepPoint, point_index: usize, rows: &[ResultRow]) -> Aggregate {
    let k = rows.len();
    let n = k as f64;
    let mut thr = 0.0;
    let mut delay = 0.0;
    let mut congested = 0usize;
    let mut assoc = 0usize;
    let mut total = 0usize;
    for r in rows {
        thr += r.throughput_pct;
        delay += r.avg_delay_ms;
        congested += usize::from(r.congested);
        assoc += r.n_associated();
        total += r.associations.len();
    }
    Aggregate {
        test_id: point.test_id.clone(),
        point_index,
        params: point.params,
        mechanism: point.selection.mechanism,
        alpha: point.selection.alpha,
        beta_pct: point.selection.beta_pct,
        b_t_bps: rows.first().map_or(point.b_t_bps(), |r| r.b_t_bps),
        k,
        mean_throughput_pct: thr / n,
        mean_delay_ms: delay / n,
        pct_congested: 100.0 * congested as f64 / n,
        association_pct: if total > 0 { 100.0 * assoc as f64 / total as f64 } else { 0.0 },
    }
}

/// Runs every point, handing rows (and event logs) to `sink` in
/// deterministic order: point by point, deployment index ascending.
pub fn run_streaming<F>(cfg: &RunConfig, mut sink: F) -> Result<Vec<Aggregate>>
where
    F: FnMut(&ResultRow, Option<&EventLog>) -> Result<()>,
{
    cfg.config.check()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.workers {
        if w == 0 {
            return Err(Error::InvalidParameter("workers must be at least 1".into()));
        }
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;

    let jobs: Vec<(usize, u64)> = cfg
        .points
        .iter()
        .enumerate()
        .flat_map(|(i, p)| (0..p.scenario.k() as u64).map(move |d| (i, d)))
        .collect();

    let mut aggregates = Vec::with_capacity(cfg.points.len());
    let mut pending: Vec<ResultRow> = Vec::new();
    let mut pending_point = 0usize;
    for chunk in jobs.chunks(BATCH) {
        let results: Vec<Result<(ResultRow, Option<EventLog>)>> = pool.install(|| {
            chunk
                .par_iter()
                .map(|&(i, d)| {
                    evaluate_deployment(&cfg.points[i], i, d, &cfg.config, cfg.emit_events, cfg.measurement_mode)
                })
                .collect()
        });
        for r in results {
            let (row, log) = r?;
            if row.point_index != pending_point {
                aggregates.push(aggregate(&cfg.points[pending_point], pending_point, &pending));
                pending.clear();
                pending_point = row.point_index;
            }
            sink(&row, log.as_ref())?;
            pending.push(row);
        }
    }
    if !pending.is_empty() {
        aggregates.push(aggregate(&cfg.points[pending_point], pending_point, &pending));
    }
    Ok(aggregates)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunOutput {
    pub rows: Vec<ResultRow>,
    pub aggregates: Vec<Aggregate>,
}

/// Runs everything in memory.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    let mut rows = Vec::new();
    let aggregates = run_streaming(cfg, |r, _| {
        rows.push(r.clone());
        Ok(())
    })?;
    Ok(RunOutput { rows, aggregates })
}

/// Runs aggregates only, dropping rows as they arrive.
pub fn run_aggregates(cfg: &RunConfig) -> Result<Vec<Aggregate>> {
    run_streaming(cfg, |_, _| Ok(()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Criterion {
    /// Mean throughput at least 99%.
    Thr99,
    /// Mean delay at most 10 ms.
    Delay10ms,
    /// No congested deployment.
    NoCongestion,
}

impl Criterion {
    pub fn holds(self, a: &Aggregate) -> bool {
        match self {
            Criterion::Thr99 => a.mean_throughput_pct >= 99.0,
            Criterion::Delay10ms => a.mean_delay_ms <= 10.0,
            Criterion::NoCongestion => a.pct_congested == 0.0,
        }
    }
}

/// Largest B_T of the leading run of points that meet `criterion`, for
/// one series sorted by ascending B_T; 0 when the first point fails.
pub fn operational_range(series: &[Aggregate], criterion: Criterion) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::InvalidParameter("empty sweep".into()));
    }
    let mut sorted: Vec<&Aggregate> = series.iter().collect();
    sorted.sort_by(|a, b| a.b_t_bps.total_cmp(&b.b_t_bps));
    let mut best = 0.0;
    for a in sorted {
        if !criterion.holds(a) {
            break;
        }
        best = a.b_t_bps;
    }
    Ok(best)
}

/// Splits aggregates into B_T series, keeping first-seen order.
pub fn series(aggregates: &[Aggregate]) -> Vec<(String, Vec<Aggregate>)> {
    let mut out: Vec<(String, Vec<Aggregate>)> = Vec::new();
    for a in aggregates {
        let label = a.series_label();
        match out.iter_mut().find(|(l, _)| *l == label) {
            Some((_, v)) => v.push(a.clone()),
            None => out.push((label, vec![a.clone()])),
        }
    }
    out
}

pub const ROW_COLUMNS: [&str; 13] = [
    "test_id",
    "n_ext",
    "channel_plan",
    "rssi_ap_e",
    "b_ext_bps",
    "deployment_index",
    "mechanism",
    "alpha",
    "beta_pct",
    "b_t_bps",
    "throughput_pct",
    "avg_delay_ms",
    "congested",
];

pub const AGGREGATE_COLUMNS: [&str; 14] = [
    "test_id",
    "n_ext",
    "channel_plan",
    "rssi_ap_e",
    "b_ext_bps",
    "mechanism",
    "alpha",
    "beta_pct",
    "b_t_bps",
    "k",
    "mean_throughput_pct",
    "mean_delay_ms",
    "pct_congested",
    "association_pct",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn plan_str(p: Option<ChannelPlan>) -> String {
    p.map(|p| p.as_str().to_string()).unwrap_or_default()
}

/// Header for rows with `n_sta` association columns.
pub fn row_header(n_sta: usize) -> Vec<String> {
    ROW_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain((1..=n_sta).map(|i| format!("sta_{i}")))
        .collect()
}

pub fn row_record(r: &ResultRow, n_sta: usize) -> Vec<String> {
    let mut rec = vec![
        r.test_id.clone(),
        r.params.n_ext.to_string(),
        plan_str(r.params.channel_plan),
        opt(r.params.rssi_ap_e),
        opt(r.params.b_ext_bps),
        r.deployment_index.to_string(),
        r.mechanism.as_str().to_string(),
        r.alpha.to_string(),
        r.beta_pct.to_string(),
        r.b_t_bps.to_string(),
        r.throughput_pct.to_string(),
        r.avg_delay_ms.to_string(),
        r.congested.to_string(),
    ];
    for i in 0..n_sta {
        rec.push(opt(r.associations.get(i).and_then(|(_, p)| p.map(|p| p.0))));
    }
    rec
}

pub fn aggregate_record(a: &Aggregate) -> Vec<String> {
    vec![
        a.test_id.clone(),
        a.params.n_ext.to_string(),
        plan_str(a.params.channel_plan),
        opt(a.params.rssi_ap_e),
        opt(a.params.b_ext_bps),
        a.mechanism.as_str().to_string(),
        a.alpha.to_string(),
        a.beta_pct.to_string(),
        a.b_t_bps.to_string(),
        a.k.to_string(),
        a.mean_throughput_pct.to_string(),
        a.mean_delay_ms.to_string(),
        a.pct_congested.to_string(),
        a.association_pct.to_string(),
    ]
}

/// Output file paths of one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputPaths {
    pub rows_csv: PathBuf,
    pub aggregates_csv: PathBuf,
    pub json: PathBuf,
    pub events_dir: PathBuf,
}

impl OutputPaths {
    pub fn new(dir: &Path, test_id: &str) -> Self {
        let stem = format!("test_{}", test_id.replace('.', "_"));
        OutputPaths {
            rows_csv: dir.join(format!("{stem}_rows.csv")),
            aggregates_csv: dir.join(format!("{stem}_aggregates.csv")),
            json: dir.join(format!("{stem}.json")),
            events_dir: dir.join(format!("{stem}_events")),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn json_err(path: &Path) -> impl FnOnce(serde_json::Error) -> Error + '_ {
    move |source| Error::Json {
        path: path.to_path_buf(),
        source,
    }
}

/// Streams rows to CSV and JSON, and event logs to NDJSON files.
pub struct Exporter {
    paths: OutputPaths,
    n_sta: usize,
    rows: csv::Writer<BufWriter<File>>,
    json: BufWriter<File>,
    first_row: bool,
    emit_events: bool,
}

impl Exporter {
    pub fn create(dir: &Path, test_id: &str, n_sta: usize, emit_events: bool) -> Result<Exporter> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let paths = OutputPaths::new(dir, test_id);
        let file = File::create(&paths.rows_csv).map_err(io_err(&paths.rows_csv))?;
        let mut rows = csv::Writer::from_writer(BufWriter::new(file));
        rows.write_record(row_header(n_sta)).map_err(csv_err(&paths.rows_csv))?;
        let file = File::create(&paths.json).map_err(io_err(&paths.json))?;
        let mut json = BufWriter::new(file);
        write!(json, "{{\"test_id\":{},\"rows\":[", serde_json::to_string(test_id).unwrap_or_default())
            .map_err(io_err(&paths.json))?;
        if emit_events {
            fs::create_dir_all(&paths.events_dir).map_err(io_err(&paths.events_dir))?;
        }
        Ok(Exporter {
            paths,
            n_sta,
            rows,
            json,
            first_row: true,
            emit_events,
        })
    }

    pub fn paths(&self) -> &OutputPaths {
        &self.paths
    }

    pub fn row(&mut self, r: &ResultRow, log: Option<&EventLog>) -> Result<()> {
        let p = &self.paths;
        self.rows.write_record(row_record(r, self.n_sta)).map_err(csv_err(&p.rows_csv))?;
        if !self.first_row {
            self.json.write_all(b",").map_err(io_err(&p.json))?;
        }
        self.first_row = false;
        serde_json::to_writer(&mut self.json, r).map_err(json_err(&p.json))?;
        if let (true, Some(log)) = (self.emit_events, log) {
            let path = p
                .events_dir
                .join(format!("p{:05}_d{:06}.ndjson", r.point_index, r.deployment_index));
            let file = File::create(&path).map_err(io_err(&path))?;
            let mut w = BufWriter::new(file);
            log.write_ndjson(&mut w).map_err(io_err(&path))?;
            w.flush().map_err(io_err(&path))?;
        }
        Ok(())
    }

    pub fn finish(mut self, aggregates: &[Aggregate]) -> Result<OutputPaths> {
        let p = self.paths.clone();
        self.rows.flush().map_err(io_err(&p.rows_csv))?;
        self.json.write_all(b"],\"aggregates\":").map_err(io_err(&p.json))?;
        serde_json::to_writer(&mut self.json, aggregates).map_err(json_err(&p.json))?;
        self.json.write_all(b"}\n").map_err(io_err(&p.json))?;
        self.json.flush().map_err(io_err(&p.json))?;
        write_aggregates_csv(&p.aggregates_csv, aggregates)?;
        Ok(p)
    }
}

pub fn write_aggregates_csv(path: &Path, aggregates: &[Aggregate]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(AGGREGATE_COLUMNS).map_err(csv_err(path))?;
    for a in aggregates {
        w.write_record(aggregate_record(a)).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Largest STA count of any point, which sets the CSV width.
pub fn max_n_sta(cfg: &RunConfig) -> usize {
    cfg.points.iter().map(|p| p.n_sta).max().unwrap_or(0)
}

/// Writes in-memory results. Event logs are not part of `RunOutput`.
pub fn export(out: &RunOutput, dir: &Path, test_id: &str, n_sta: usize) -> Result<OutputPaths> {
    let mut ex = Exporter::create(dir, test_id, n_sta, false)?;
    for r in &out.rows {
        ex.row(r, None)?;
    }
    ex.finish(&out.aggregates)
}

/// Runs and writes everything under `dir`, streaming rows to disk.
pub fn run_to_dir(cfg: &RunConfig, dir: &Path) -> Result<(Vec<Aggregate>, OutputPaths)> {
    let mut ex = Exporter::create(dir, &cfg.test_id, max_n_sta(cfg), cfg.emit_events)?;
    let aggregates = run_streaming(cfg, |r, log| ex.row(r, log))?;
    let paths = ex.finish(&aggregates)?;
    Ok((aggregates, paths))
}

/// STA ids with a parent in `row`.
pub fn associated(row: &ResultRow) -> BTreeSet<NodeId> {
    row.associations.iter().filter(|(_, p)| p.is_some()).map(|(s, _)| *s).collect()
}
