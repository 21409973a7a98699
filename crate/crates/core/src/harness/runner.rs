//! Seeded experiment execution.

use std::time::Instant;

use rayon::prelude::*;

use super::config::{ExperimentSpec, Method};
use super::report::{Report, RunRecord, SeedFailure, TraceRow};
use crate::baselines::{max_sinr_assoc, subgradient_solve};
use crate::dcd::{dcd_solve, duality_gap_bound, Association};
use crate::error::{Error, Result};
use crate::joint::{direct_dual_solve, iterate_assoc_power, iterate_maxsinr_power, JointOptions, JointResult};
use crate::mimo::{maxsinr_wmmse_solve, two_stage_solve, CandidateCount, TwoStageOptions, TwoStageResult};
use crate::netmodel::{gen_topology, NetworkInstance, RateReport, BPS_PER_MBPS};

/// A record with everything except the method-specific extras filled in.
fn base_record(seed: u64, method: Method, assoc: &Association, power: Vec<f64>, rates: RateReport, utility: f64) -> RunRecord {
    RunRecord {
        seed,
        method,
        rates,
        solver_utility: utility,
        bs_of: assoc.bs_of.clone(),
        power,
        dual_objective: None,
        gap_bound: None,
        iterations: 0,
        converged: true,
        warnings: Vec::new(),
        trace: Vec::new(),
        elapsed_s: 0.0,
    }
}

fn joint_record(inst: &NetworkInstance, seed: u64, method: Method, res: JointResult, max_rounds: usize, trace: bool) -> RunRecord {
    let rates = inst.rate_report(&res.association, &res.power.0);
    let mut rec = base_record(seed, method, &res.association, res.power.0.clone(), rates, res.utility);
    rec.iterations = res.trace.len().saturating_sub(1);
    rec.converged = rec.iterations < max_rounds;
    if trace {
        for e in &res.trace {
            rec.trace.push(TraceRow::new(e.round, "utility", e.utility));
            rec.trace.push(TraceRow::new(e.round, "macro_user_fraction", e.macro_user_fraction));
            rec.trace.push(TraceRow::new(e.round, "mean_macro_psd", e.mean_macro_psd));
            rec.trace.push(TraceRow::new(e.round, "mean_pico_psd", e.mean_pico_psd));
        }
    }
    rec
}

fn mimo_record(inst: &NetworkInstance, seed: u64, method: Method, res: TwoStageResult, trace: bool) -> RunRecord {
    let rates = RateReport::from_rates(
        res.average_rates.iter().map(|r| r * BPS_PER_MBPS).collect(),
        &res.association,
        &inst.tiers,
    );
    let mut rec = base_record(seed, method, &res.association, res.stage_one_power.clone(), rates, res.utility);
    rec.iterations = res.slots.len();
    rec.converged = res.converged;
    if res.wmmse_nonconverged > 0 {
        rec.warnings.push(format!("{} per-cell WMMSE solves hit the iteration cap", res.wmmse_nonconverged));
    }
    if res.handovers > 0 {
        rec.warnings.push(format!("{} slots served a user from a foreign BS", res.handovers));
    }
    if trace {
        for st in &res.scheduler_trace {
            let ema: f64 = st.r_avg.iter().map(|r| r.ln()).sum();
            rec.trace.push(TraceRow::new(st.slot, "ema_utility", ema));
        }
    }
    rec
}

/// Runs one method on one instance. The record's solver utility has not been
/// cross-checked yet.
pub fn run_method(inst: &NetworkInstance, seed: u64, method: Method, spec: &ExperimentSpec, trace: bool) -> Result<RunRecord> {
    let start = Instant::now();
    let full = inst.full_power();
    let siso_joint = JointOptions { antenna_scaling: false, ..spec.joint.clone() };
    let mut rec = match method {
        Method::MaxSinr => {
            let assoc = max_sinr_assoc(inst, &full);
            let utility = inst.utility_matrix(&full, false).objective(&assoc);
            base_record(seed, method, &assoc, full.clone(), inst.rate_report(&assoc, &full), utility)
        }
        Method::Dcd => {
            let a = inst.utility_matrix(&full, false);
            let res = dcd_solve(&a, &spec.dcd)?;
            let mut rec = base_record(seed, method, &res.association, full.clone(), inst.rate_report(&res.association, &full), res.utility(&a));
            rec.dual_objective = Some(res.dual.dual_objective);
            rec.gap_bound = Some(res.gap_bound());
            rec.iterations = res.dual.iteration;
            rec.converged = res.converged;
            if trace {
                for e in &res.trace {
                    rec.trace.push(TraceRow::new(e.iteration, "dual_objective", e.dual_objective));
                    if let Some(p) = e.primal_utility {
                        rec.trace.push(TraceRow::new(e.iteration, "primal_utility", p));
                    }
                }
            }
            rec
        }
        Method::Subgradient => {
            let a = inst.utility_matrix(&full, false);
            let res = subgradient_solve(&a, &spec.subgradient)?;
            let mut rec = base_record(seed, method, &res.association, full.clone(), inst.rate_report(&res.association, &full), a.objective(&res.association));
            rec.dual_objective = Some(res.dual.dual_objective);
            rec.gap_bound = Some(duality_gap_bound(&res.association, &res.dual.mu, res.dual.nu));
            rec.iterations = res.trace.len().saturating_sub(1);
            if trace {
                for e in &res.trace {
                    rec.trace.push(TraceRow::new(e.iteration, "dual_objective", e.dual_objective));
                    rec.trace.push(TraceRow::new(e.iteration, "best_dual_objective", e.best_dual_objective));
                }
            }
            rec
        }
        Method::JointDcd => {
            let res = iterate_assoc_power(inst, &full, &siso_joint, &spec.dcd, &spec.newton)?;
            joint_record(inst, seed, method, res, siso_joint.max_rounds, trace)
        }
        Method::JointMaxSinr => {
            let res = iterate_maxsinr_power(inst, &full, &siso_joint, &spec.newton)?;
            joint_record(inst, seed, method, res, siso_joint.max_rounds, trace)
        }
        Method::DirectDual => {
            let res = direct_dual_solve(inst, &spec.direct_dual, &spec.newton)?;
            let rates = inst.rate_report(&res.association, &res.power.0);
            let mut rec = base_record(seed, method, &res.association, res.power.0.clone(), rates, res.utility);
            rec.dual_objective = Some(res.dual.dual_objective);
            rec.gap_bound = Some(res.dual.dual_objective - res.utility);
            rec.iterations = res.trace.len();
            rec.warnings = res.warnings.clone();
            if trace {
                for e in &res.trace {
                    rec.trace.push(TraceRow::new(e.evaluation, "dual_objective", e.dual_objective));
                    rec.trace.push(TraceRow::new(e.evaluation, "best_primal_utility", e.best_primal_utility));
                }
            }
            rec
        }
        Method::TwoStage(s) => {
            let opts = TwoStageOptions { candidates: CandidateCount::PerBs(s), ..spec.mimo.clone() };
            mimo_record(inst, seed, method, two_stage_solve(inst, &opts)?, trace)
        }
        Method::MaxSinrWmmse => mimo_record(inst, seed, method, maxsinr_wmmse_solve(inst, &spec.mimo)?, trace),
    };
    rec.elapsed_s = start.elapsed().as_secs_f64();
    Ok(rec)
}

fn run_seed(spec: &ExperimentSpec, seed: u64) -> (Vec<RunRecord>, Vec<SeedFailure>) {
    let inst = match gen_topology(&spec.scenario.clone().with_seed(seed)) {
        Ok(inst) => inst,
        Err(e) => return (vec![], vec![SeedFailure { seed, method: None, error: e.to_string() }]),
    };
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for &m in &spec.run.methods {
        match run_method(&inst, seed, m, spec, spec.run.trace).and_then(|r| r.cross_check().map(|_| r)) {
            Ok(r) => runs.push(r),
            Err(e) => failures.push(SeedFailure { seed, method: Some(m), error: e.to_string() }),
        }
    }
    (runs, failures)
}

/// Validates `spec`, then solves every (seed, method) pair on a shared
/// per-seed instance. Seeds run concurrently, capped by `HETNET_THREADS`.
/// Per-seed failures are collected in the report rather than aborting the
/// batch. When `spec.run.out` is set the report is written there.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Report> {
    spec.validate()?;
    let solve = || -> Vec<(Vec<RunRecord>, Vec<SeedFailure>)> {
        spec.run.seeds.par_iter().map(|&seed| run_seed(spec, seed)).collect()
    };
    let per_seed = match ExperimentSpec::thread_cap()? {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(solve),
        None => solve(),
    };
    let (mut runs, mut failures) = (Vec::new(), Vec::new());
    for (r, f) in per_seed {
        runs.extend(r);
        failures.extend(f);
    }
    let report = Report::new(runs, failures);
    if let Some(dir) = &spec.run.out {
        report.write(dir)?;
    }
    Ok(report)
}
