//! CSV traces, decision logs, JSON artifacts and the run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use asynctrig::linalg::{lambda_max, lambda_min};
use asynctrig::simulation::{guub_containment, GuubReport, UtilizationMetrics};
use asynctrig::{Certificate, ConicRegion, Scenario, SimTrace};
use csv::{Terminator, WriterBuilder};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::plot;

/// GUUB containment tolerance on `V`.
pub const GUUB_TOL: f64 = 1e-6;

/// Shortest round-trip text, switching to exponent form for very small or
/// large magnitudes.
pub fn fmt_num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn trace_header(n: usize, inputs: usize) -> Vec<String> {
    let mut h = vec!["step".to_string(), "t".to_string()];
    h.extend((1..=n).map(|i| format!("x_{i}")));
    h.extend((1..=n).map(|i| format!("xhat_{i}")));
    h.extend((1..=inputs).map(|i| format!("u_{i}")));
    h.push("action".into());
    h.push("V".into());
    h
}

/// `step,t,x_1..,xhat_1..,u_1..,action,V` with LF line endings.
pub fn write_trace_csv<W: Write>(trace: &SimTrace, out: W) -> Result<()> {
    let mut w = WriterBuilder::new().terminator(Terminator::Any(b'\n')).from_writer(out);
    let (n, inputs) = trace.records.first().map_or((0, 0), |r| (r.x.len(), r.u.len()));
    w.write_record(trace_header(n, inputs))?;
    for r in &trace.records {
        let mut row = vec![r.step.to_string(), fmt_num(r.t)];
        row.extend(r.x.iter().map(|&v| fmt_num(v)));
        row.extend(r.xhat.iter().map(|&v| fmt_num(v)));
        row.extend(r.u.iter().map(|&v| fmt_num(v)));
        row.push(r.action.to_string());
        row.push(fmt_num(r.v));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| CliError::io("trace", e))?;
    Ok(())
}

pub fn trace_csv_string(trace: &SimTrace) -> Result<String> {
    let mut buf = Vec::new();
    write_trace_csv(trace, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

/// One row per triggering decision.
pub fn write_decisions_csv<W: Write>(trace: &SimTrace, out: W) -> Result<()> {
    let mut w = WriterBuilder::new().terminator(Terminator::Any(b'\n')).from_writer(out);
    w.write_record([
        "k", "step", "horizon", "metric", "feasible", "ties", "region", "inside_unit_ellipsoid", "V",
    ])?;
    for (k, (d, &h)) in trace.decisions.iter().zip(&trace.boundaries).enumerate() {
        w.write_record([
            k.to_string(),
            h.to_string(),
            d.horizon.to_string(),
            fmt_num(d.metric),
            d.feasible_count.to_string(),
            d.tie_count.to_string(),
            d.region.map_or(String::new(), |c| c.to_string()),
            d.inside_ellipsoid.to_string(),
            fmt_num(trace.records[h].v),
        ])?;
    }
    w.flush().map_err(|e| CliError::io("decisions", e))?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateSummary {
    pub kind: String,
    pub sigma_star: String,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub beta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psi: Option<f64>,
}

impl CertificateSummary {
    pub fn new(cert: &Certificate) -> Self {
        let p = cert.p();
        let mut s = Self {
            kind: String::new(),
            sigma_star: cert.sigma_star().to_string(),
            lambda_min: lambda_min(p),
            lambda_max: lambda_max(p),
            beta: 0.0,
            gamma: None,
            gamma1: None,
            gamma2: None,
            mu: None,
            psi: None,
        };
        match cert {
            Certificate::Unperturbed(c) => {
                s.kind = "unperturbed".into();
                s.beta = c.beta;
            }
            Certificate::PerturbedOnline(c) => {
                s.kind = "perturbed-online".into();
                s.beta = c.beta;
                s.gamma = Some(c.gamma);
                s.mu = Some(c.mu);
                s.psi = Some(c.psi);
            }
            Certificate::PerturbedOffline(c) => {
                s.kind = "perturbed-offline".into();
                s.beta = c.beta;
                s.gamma1 = Some(c.gamma1);
                s.gamma2 = Some(c.gamma2);
                s.mu = Some(c.mu);
                s.psi = Some(c.psi);
            }
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub mode: String,
    pub seed: u64,
    pub t: f64,
    pub sigma_star: String,
    pub steps: usize,
    pub decisions: usize,
    pub readings: usize,
    pub utilization_reduction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reported_reduction: Option<f64>,
    pub initial_v: f64,
    pub final_v: f64,
    pub max_state_abs: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub guub: Option<GuubReport>,
    pub certificate: CertificateSummary,
}

impl Summary {
    pub fn new(scenario: &Scenario, trace: &SimTrace, seed: u64, preset: Option<(&str, f64)>) -> Self {
        let cert = scenario.policy.certificate();
        let guub = cert.mu().map(|mu| guub_containment(trace, mu, GUUB_TOL));
        Self {
            preset: preset.map(|(name, _)| name.to_string()),
            mode: scenario.config.mode.to_string(),
            seed,
            t: scenario.config.t,
            sigma_star: scenario.sigma_star().to_string(),
            steps: trace.metrics.steps,
            decisions: trace.decisions.len(),
            readings: trace.metrics.readings,
            utilization_reduction: trace.metrics.utilization_reduction,
            reported_reduction: preset.map(|(_, r)| r),
            initial_v: trace.initial_v,
            final_v: trace.final_v,
            max_state_abs: trace.records.iter().map(|r| r.x.amax()).fold(0.0, f64::max),
            guub,
            certificate: CertificateSummary::new(&cert),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_digest: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub certificate: CertificateSummary,
    pub metrics: UtilizationMetrics,
    pub outputs: Vec<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub region: usize,
    pub horizons: Vec<String>,
    pub metric: f64,
    pub feasible_count: usize,
    pub fallback: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionReport {
    pub dim: usize,
    pub regions: Vec<ConicRegion>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<TableRow>>,
}

impl PartitionReport {
    pub fn from_scenario(scenario: &Scenario) -> Option<Self> {
        let regions = scenario.policy.regions()?.to_vec();
        let table = scenario.policy.table().map(|t| {
            t.entries
                .iter()
                .enumerate()
                .map(|(c, e)| TableRow {
                    region: c,
                    horizons: e.horizons.iter().map(|&i| scenario.bank.horizons[i].to_string()).collect(),
                    metric: e.metric,
                    feasible_count: e.feasible_count,
                    fallback: e.fallback,
                })
                .collect()
        });
        Some(Self { dim: 2 * scenario.dp.n(), regions, table })
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn create_file(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| CliError::io(path, e))
}

/// Writes the trace, decision log, certificate, summary, optional
/// partition and plots, then the manifest listing them.
pub fn write_run(
    dir: &Path,
    config: &RunConfig,
    scenario: &Scenario,
    trace: &SimTrace,
    summary: &Summary,
    plots: bool,
) -> Result<RunManifest> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut outputs = Vec::new();
    let path = dir.join("trace.csv");
    write_trace_csv(trace, create_file(&path)?)?;
    outputs.push(path);
    let path = dir.join("decisions.csv");
    write_decisions_csv(trace, create_file(&path)?)?;
    outputs.push(path);
    let path = dir.join("certificate.json");
    write_json(&path, &scenario.policy.certificate())?;
    outputs.push(path);
    if let Some(report) = PartitionReport::from_scenario(scenario) {
        let path = dir.join("partition.json");
        write_json(&path, &report)?;
        outputs.push(path);
    }
    let path = dir.join("config.json");
    write_json(&path, config)?;
    outputs.push(path);
    let path = dir.join("summary.json");
    write_json(&path, summary)?;
    outputs.push(path);
    if plots {
        outputs.extend(plot::emit_plots(trace, dir)?);
    }
    let manifest = RunManifest {
        config_digest: config.digest(),
        preset: summary.preset.clone(),
        certificate: summary.certificate.clone(),
        metrics: trace.metrics.clone(),
        outputs,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}
