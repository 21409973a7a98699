//! Run records, aggregate tables and their CSV/JSON emission.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::Method;
use crate::error::{Error, Result};
use crate::netmodel::{RateReport, BPS_PER_MBPS};

/// Absolute slack (scaled by max(1, |u|)) allowed between a solver's utility
/// and the one recomputed from its emitted rates.
pub const CROSS_CHECK_TOL: f64 = 1e-6;

/// Linear interpolation between order statistics at rank q·(n − 1).
/// `sorted` must be ascending; `q` is clamped to [0, 1].
pub fn percentile(sorted: &[f64], q: f64) -> Option<f64> {
    let n = sorted.len();
    if n == 0 {
        return None;
    }
    let rank = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = rank - lo as f64;
    Some(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

/// One point of a convergence series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub series: String,
    pub value: f64,
}

impl TraceRow {
    pub fn new(step: usize, series: &str, value: f64) -> Self {
        Self { step, series: series.to_string(), value }
    }
}

/// Outcome of one method on one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub method: Method,
    pub rates: RateReport,
    /// Utility as reported by the solver itself.
    pub solver_utility: f64,
    pub bs_of: Vec<usize>,
    /// Final PSD per BS (stage-one PSD for MIMO methods).
    pub power: Vec<f64>,
    pub dual_objective: Option<f64>,
    pub gap_bound: Option<f64>,
    /// Price updates, alternation rounds or slots, depending on the method.
    pub iterations: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TraceRow>,
    /// Wall-clock seconds; kept out of every emitted file so reruns match.
    #[serde(skip)]
    pub elapsed_s: f64,
}

impl RunRecord {
    /// Recomputes Σ ln(rate in Mbps) from the emitted rates and compares it with
    /// the solver's value.
    pub fn cross_check(&self) -> Result<()> {
        let recomputed: f64 = self.rates.rates.iter().map(|r| (r / BPS_PER_MBPS).ln()).sum();
        let reported = self.solver_utility;
        let ok = (recomputed - reported).abs() <= CROSS_CHECK_TOL * reported.abs().max(1.0);
        if ok {
            Ok(())
        } else {
            Err(Error::CrossCheck { reported, recomputed })
        }
    }

    pub fn rate_percentile_mbps(&self, q: f64) -> f64 {
        percentile(&self.rates.cdf_points, q).unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub method: Option<Method>,
    pub error: String,
}

/// Aggregate over all successful seeds of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub runs: usize,
    pub mean_utility: f64,
    pub median_utility: f64,
    pub min_utility: f64,
    pub max_utility: f64,
    /// Percentiles of the pooled per-user rate list, Mbps.
    pub rate_p5_mbps: f64,
    pub rate_p50_mbps: f64,
    pub rate_p95_mbps: f64,
    pub macro_user_share: f64,
    pub pico_user_share: f64,
}

impl MethodSummary {
    fn from_runs(method: Method, runs: &[&RunRecord]) -> Self {
        let mut utilities: Vec<f64> = runs.iter().map(|r| r.rates.utility).collect();
        utilities.sort_by(f64::total_cmp);
        let mut pooled: Vec<f64> = runs.iter().flat_map(|r| r.rates.cdf_points.iter().copied()).collect();
        pooled.sort_by(f64::total_cmp);
        let n = runs.len() as f64;
        let pico = runs.iter().map(|r| r.rates.pico_user_fraction).sum::<f64>() / n;
        let p = |q| percentile(&pooled, q).unwrap_or(f64::NAN);
        Self {
            method,
            runs: runs.len(),
            mean_utility: utilities.iter().sum::<f64>() / n,
            median_utility: percentile(&utilities, 0.5).unwrap_or(f64::NAN),
            min_utility: utilities[0],
            max_utility: utilities[utilities.len() - 1],
            rate_p5_mbps: p(0.05),
            rate_p50_mbps: p(0.5),
            rate_p95_mbps: p(0.95),
            macro_user_share: 1.0 - pico,
            pico_user_share: pico,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub runs: Vec<RunRecord>,
    pub failures: Vec<SeedFailure>,
    pub summary: Vec<MethodSummary>,
}

impl Report {
    /// Builds the method summaries in the order methods first appear in `runs`.
    pub fn new(runs: Vec<RunRecord>, failures: Vec<SeedFailure>) -> Self {
        let mut methods: Vec<Method> = Vec::new();
        for r in &runs {
            if !methods.contains(&r.method) {
                methods.push(r.method);
            }
        }
        let summary = methods
            .iter()
            .map(|&m| {
                let of: Vec<&RunRecord> = runs.iter().filter(|r| r.method == m).collect();
                MethodSummary::from_runs(m, &of)
            })
            .collect();
        Self { runs, failures, summary }
    }

    pub fn run(&self, seed: u64, method: Method) -> Option<&RunRecord> {
        self.runs.iter().find(|r| r.seed == seed && r.method == method)
    }

    pub fn summary_for(&self, method: Method) -> Option<&MethodSummary> {
        self.summary.iter().find(|s| s.method == method)
    }

    /// Writes `utility.csv`, `loads.csv`, `rates_<seed>_<method>.csv`,
    /// optional `trace_<seed>_<method>.csv` and `summary.json` into `dir`.
    /// Every file is written to a temporary sibling first and renamed.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;

        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["seed", "method", "utility", "solver_utility", "pico_user_fraction", "rate_p5_mbps", "rate_p50_mbps", "rate_p95_mbps", "dual_objective", "gap_bound", "iterations", "converged"])?;
        for r in &self.runs {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            w.write_record([
                r.seed.to_string(),
                r.method.to_string(),
                r.rates.utility.to_string(),
                r.solver_utility.to_string(),
                r.rates.pico_user_fraction.to_string(),
                r.rate_percentile_mbps(0.05).to_string(),
                r.rate_percentile_mbps(0.5).to_string(),
                r.rate_percentile_mbps(0.95).to_string(),
                opt(r.dual_objective),
                opt(r.gap_bound),
                r.iterations.to_string(),
                r.converged.to_string(),
            ])?;
        }
        write_atomic(&dir.join("utility.csv"), &finish(w)?)?;

        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["seed", "method", "bs", "load", "power_mw_hz"])?;
        for r in &self.runs {
            for (j, k) in r.rates.load.iter().enumerate() {
                w.write_record([r.seed.to_string(), r.method.to_string(), j.to_string(), k.to_string(), r.power[j].to_string()])?;
            }
        }
        write_atomic(&dir.join("loads.csv"), &finish(w)?)?;

        for r in &self.runs {
            let tag = format!("{}_{}", r.seed, r.method.slug());
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["user", "bs", "rate_mbps"])?;
            for (i, rate) in r.rates.rates.iter().enumerate() {
                w.write_record([i.to_string(), r.bs_of[i].to_string(), (rate / BPS_PER_MBPS).to_string()])?;
            }
            write_atomic(&dir.join(format!("rates_{tag}.csv")), &finish(w)?)?;
            if !r.trace.is_empty() {
                let mut w = csv::Writer::from_writer(Vec::new());
                for row in &r.trace {
                    w.serialize(row)?;
                }
                write_atomic(&dir.join(format!("trace_{tag}.csv")), &finish(w)?)?;
            }
        }

        #[derive(Serialize)]
        struct Summary<'a> {
            summary: &'a [MethodSummary],
            failures: &'a [SeedFailure],
        }
        let json = serde_json::to_vec_pretty(&Summary { summary: &self.summary, failures: &self.failures })?;
        write_atomic(&dir.join("summary.json"), &json)
    }
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Writes `bytes` to a temporary file next to `path`, then renames it over
/// `path`, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dcd::Association;
    use crate::netmodel::Tier;

    #[test]
    fn percentile_interpolates_between_order_statistics() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&xs, 0.5), Some(2.5));
        assert_eq!(percentile(&xs, 0.0), Some(1.0));
        assert_eq!(percentile(&xs, 1.0), Some(4.0));
        assert!((percentile(&xs, 0.05).unwrap() - 1.15).abs() < 1e-12);
        assert_eq!(percentile(&[7.0], 0.3), Some(7.0));
        assert_eq!(percentile(&[], 0.5), None);
    }

    fn record(seed: u64, method: Method, rates_mbps: &[f64], solver: f64) -> RunRecord {
        let assoc = Association::from_bs_of(vec![0; rates_mbps.len()], 2);
        let rates = RateReport::from_rates(rates_mbps.iter().map(|r| r * 1e6).collect(), &assoc, &[Tier::Macro, Tier::Pico]);
        RunRecord {
            seed,
            method,
            rates,
            solver_utility: solver,
            bs_of: assoc.bs_of,
            power: vec![1.0, 0.5],
            dual_objective: None,
            gap_bound: None,
            iterations: 1,
            converged: true,
            warnings: vec![],
            trace: vec![TraceRow::new(0, "utility", solver)],
            elapsed_s: 0.25,
        }
    }

    #[test]
    fn cross_check_flags_mismatch() {
        let u = 2f64.ln() + 3f64.ln();
        record(0, Method::Dcd, &[2.0, 3.0], u).cross_check().unwrap();
        record(0, Method::Dcd, &[2.0, 3.0], u + 5e-7).cross_check().unwrap();
        assert!(matches!(record(0, Method::Dcd, &[2.0, 3.0], u + 1e-4).cross_check(), Err(Error::CrossCheck { .. })));
    }

    #[test]
    fn summary_pools_rates_across_seeds() {
        let runs = vec![
            record(0, Method::Dcd, &[1.0, 2.0], 2f64.ln()),
            record(1, Method::Dcd, &[3.0, 4.0], 12f64.ln()),
            record(0, Method::MaxSinr, &[1.0, 1.0], 0.0),
        ];
        let rep = Report::new(runs, vec![]);
        assert_eq!(rep.summary.iter().map(|s| s.method).collect::<Vec<_>>(), vec![Method::Dcd, Method::MaxSinr]);
        let s = rep.summary_for(Method::Dcd).unwrap();
        assert_eq!(s.runs, 2);
        assert_eq!(s.rate_p50_mbps, 2.5);
        assert!((s.mean_utility - (2f64.ln() + 12f64.ln()) / 2.0).abs() < 1e-12);
        assert_eq!(s.macro_user_share, 1.0);
    }

    #[test]
    fn written_files_are_identical_on_rewrite() {
        let dir = tempfile::tempdir().unwrap();
        let rep = Report::new(vec![record(3, Method::TwoStage(4), &[1.5, 2.5], 1.5f64.ln() + 2.5f64.ln())], vec![]);
        rep.write(dir.path()).unwrap();
        let first = std::fs::read(dir.path().join("utility.csv")).unwrap();
        let mut slower = rep.clone();
        slower.runs[0].elapsed_s = 99.0;
        slower.write(dir.path()).unwrap();
        assert_eq!(std::fs::read(dir.path().join("utility.csv")).unwrap(), first);
        assert!(dir.path().join("rates_3_two-stage-s4.csv").exists());
        assert!(dir.path().join("trace_3_two-stage-s4.csv").exists());
        let names: Vec<String> =
            std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
        assert!(names.iter().all(|n| !n.starts_with(".tmp")), "{names:?}");
    }
}
