use serde::{Deserialize, Serialize};

use super::{rates_mimo, wmmse_percell, BeamformerSet, WmmseOptions};
use crate::baselines::max_sinr_assoc;
use crate::dcd::{Association, DcdOptions};
use crate::error::{Error, Result};
use crate::joint::{iterate_assoc_power, JointOptions};
use crate::netmodel::{NetworkInstance, BPS_PER_MBPS};
use crate::powerctl::NewtonOptions;

/// How many users per BS take part in each slot's WMMSE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateCount {
    PerBs(usize),
    EntireCell,
}

/// Per-BS transmit budget used by the per-cell WMMSE in stage two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageTwoBudget {
    /// p̄_j.
    MaxPower,
    /// The PSD chosen for BS j in stage one (p̄ for the max-SINR baseline).
    StageOnePower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TwoStageOptions {
    pub candidates: CandidateCount,
    pub budget: StageTwoBudget,
    /// EMA factor of the average-rate tracker.
    pub ema_epsilon: f64,
    pub max_slots: usize,
    /// Slots between the two r_avg snapshots compared by the convergence test.
    pub window: usize,
    /// Max relative change of r_avg over `window` slots that counts as converged.
    pub convergence_tol: f64,
    pub wmmse: WmmseOptions,
    pub joint: JointOptions,
    pub dcd: DcdOptions,
    pub newton: NewtonOptions,
}

impl Default for TwoStageOptions {
    fn default() -> Self {
        Self {
            candidates: CandidateCount::PerBs(8),
            budget: StageTwoBudget::StageOnePower,
            ema_epsilon: 0.1,
            max_slots: 200,
            window: 10,
            convergence_tol: 1e-3,
            wmmse: WmmseOptions::default(),
            joint: JointOptions { antenna_scaling: true, ..JointOptions::default() },
            dcd: DcdOptions::default(),
            newton: NewtonOptions::default(),
        }
    }
}

impl TwoStageOptions {
    pub fn validate(&self, inst: &NetworkInstance) -> Result<()> {
        if !(self.ema_epsilon > 0.0 && self.ema_epsilon <= 1.0) {
            return Err(Error::InvalidConfig("ema_epsilon must lie in (0, 1]".into()));
        }
        if self.max_slots == 0 || self.window == 0 || !(self.convergence_tol > 0.0) {
            return Err(Error::InvalidConfig("max_slots, window and convergence_tol must be positive".into()));
        }
        if let CandidateCount::PerBs(s) = self.candidates {
            let m = inst.bs_antennas.iter().copied().max().unwrap_or(1);
            if s < m {
                return Err(Error::InvalidConfig(format!("candidate count {s} is below the BS antenna count {m}")));
            }
        }
        self.wmmse.validate()?;
        self.joint.validate()?;
        self.newton.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerState {
    /// 1/r_avg, in 1/Mbps.
    pub omega: Vec<f64>,
    /// Average rate tracker, Mbps.
    pub r_avg: Vec<f64>,
    /// Candidate count per BS.
    pub s: Vec<usize>,
    pub slot: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: usize,
    pub rates_mbps: Vec<f64>,
    pub scheduled: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct TwoStageResult {
    pub association: Association,
    /// Power from stage one (SISO surrogate); the beams set the actual power.
    pub stage_one_power: Vec<f64>,
    /// SISO rate estimates scaled by M_j, Mbps.
    pub r_tilde: Vec<f64>,
    pub beamformers: Vec<BeamformerSet>,
    pub slots: Vec<SlotRecord>,
    pub scheduler_trace: Vec<SchedulerState>,
    /// Per-user rate averaged over all slots (zero-rate slots included), Mbps.
    pub average_rates: Vec<f64>,
    /// Σ_i ln(average rate in Mbps).
    pub utility: f64,
    /// Σ_i ln(r_avg) of the EMA tracker after the last slot.
    pub ema_utility: f64,
    pub converged: bool,
    /// Slots whose beam set serves some user from a BS other than its association.
    pub handovers: usize,
    pub wmmse_nonconverged: usize,
    /// Worst relative per-iteration decrease of any per-cell weighted sum rate.
    pub worst_wsr_decrease: f64,
}

/// For every BS, its top-min(S_j, k_j) users by ω_i·r̃_i (ties to the lower index).
pub fn select_candidates(assoc: &Association, sched: &SchedulerState, r_tilde: &[f64]) -> Vec<Vec<usize>> {
    let mut per_bs: Vec<Vec<usize>> = vec![Vec::new(); assoc.num_bs()];
    for (i, &j) in assoc.bs_of.iter().enumerate() {
        per_bs[j].push(i);
    }
    for (j, users) in per_bs.iter_mut().enumerate() {
        let score = |i: usize| sched.omega[i] * r_tilde[i];
        users.sort_by(|&x, &y| score(y).total_cmp(&score(x)).then(x.cmp(&y)));
        users.truncate(sched.s[j]);
    }
    per_bs
}

/// SISO estimate M_j·W/k_j·log2(1 + SINR/Γ) at the given power, Mbps.
fn siso_estimate(inst: &NetworkInstance, assoc: &Association, p: &[f64]) -> Vec<f64> {
    assoc
        .bs_of
        .iter()
        .enumerate()
        .map(|(i, &j)| inst.bs_antennas[j] as f64 * inst.rate_siso(i, j, p, assoc.load[j]) / BPS_PER_MBPS)
        .collect()
}

/// Stage two: slots of candidate selection, per-cell WMMSE (cells in index
/// order, each seeing the latest beams of the others) and PF weight refresh,
/// under a fixed association.
pub fn run_stage_two(
    inst: &NetworkInstance,
    assoc: &Association,
    r_tilde: &[f64],
    budget: &[f64],
    options: &TwoStageOptions,
) -> Result<TwoStageResult> {
    options.validate(inst)?;
    if budget.len() != inst.num_bs || budget.iter().zip(&inst.max_psd).any(|(b, m)| !(*b >= 0.0 && b <= m)) {
        return Err(Error::InvalidConfig("stage-two budget must lie in [0, p̄]".into()));
    }
    if inst.channels.is_none() {
        return Err(Error::MissingChannels);
    }
    if r_tilde.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(Error::InvalidConfig("rate estimates must be positive".into()));
    }
    let (k, l) = (inst.num_users, inst.num_bs);
    let s = match options.candidates {
        CandidateCount::PerBs(s) => vec![s; l],
        CandidateCount::EntireCell => assoc.load.clone(),
    };
    let mut sched = SchedulerState { omega: r_tilde.iter().map(|r| 1.0 / r).collect(), r_avg: r_tilde.to_vec(), s, slot: 0 };
    let mut current = BeamformerSet::empty(assoc.bs_of.clone());
    let mut beamformers = Vec::new();
    let mut slots = Vec::new();
    let mut scheduler_trace = vec![sched.clone()];
    let mut totals = vec![0.0; k];
    let mut converged = false;
    let mut wmmse_nonconverged = 0;
    let mut worst_wsr_decrease: f64 = 0.0;

    for t in 1..=options.max_slots {
        let candidates = select_candidates(assoc, &sched, r_tilde);
        for (j, cands) in candidates.iter().enumerate() {
            let omega: Vec<f64> = cands.iter().map(|&i| sched.omega[i]).collect();
            if budget[j] <= 0.0 {
                current.clear_bs(j);
                continue;
            }
            let out = wmmse_percell(inst, j, cands, &omega, budget[j], &current, &options.wmmse)?;
            if !out.converged {
                wmmse_nonconverged += 1;
            }
            worst_wsr_decrease = worst_wsr_decrease.max(out.worst_decrease());
            current.clear_bs(j);
            for (&i, v) in cands.iter().zip(out.beams) {
                current.v[i] = Some(v);
            }
        }
        let rates: Vec<f64> = rates_mimo(inst, &current)?.into_iter().map(|r| r / BPS_PER_MBPS).collect();
        let eps = options.ema_epsilon;
        for i in 0..k {
            sched.r_avg[i] = (1.0 - eps) * sched.r_avg[i] + eps * rates[i];
            sched.omega[i] = 1.0 / sched.r_avg[i];
            totals[i] += rates[i];
        }
        sched.slot = t;
        slots.push(SlotRecord { slot: t, scheduled: current.scheduled(), rates_mbps: rates });
        beamformers.push(current.clone());
        scheduler_trace.push(sched.clone());
        if t >= options.window {
            let past = &scheduler_trace[t - options.window].r_avg;
            let change = sched.r_avg.iter().zip(past).map(|(a, b)| ((a - b) / b).abs()).fold(0.0, f64::max);
            if change < options.convergence_tol {
                converged = true;
                break;
            }
        }
    }

    let n = slots.len() as f64;
    let average_rates: Vec<f64> = totals.iter().map(|x| x / n).collect();
    let handovers = beamformers.iter().filter(|b| b.bs_of != assoc.bs_of).count();
    Ok(TwoStageResult {
        association: assoc.clone(),
        stage_one_power: Vec::new(),
        r_tilde: r_tilde.to_vec(),
        utility: average_rates.iter().map(|r| r.ln()).sum(),
        ema_utility: sched.r_avg.iter().map(|r| r.ln()).sum(),
        average_rates,
        beamformers,
        slots,
        scheduler_trace,
        converged,
        handovers,
        wmmse_nonconverged,
        worst_wsr_decrease,
    })
}

/// Stage one runs the joint association/power loop on the SISO surrogate
/// (antenna scaling on) from full power; stage two follows with that
/// association fixed.
pub fn two_stage_solve(inst: &NetworkInstance, options: &TwoStageOptions) -> Result<TwoStageResult> {
    options.validate(inst)?;
    let joint = JointOptions { antenna_scaling: true, ..options.joint.clone() };
    let stage_one = iterate_assoc_power(inst, &inst.full_power(), &joint, &options.dcd, &options.newton)?;
    let r_tilde = siso_estimate(inst, &stage_one.association, &stage_one.power);
    let budget = match options.budget {
        StageTwoBudget::MaxPower => inst.full_power(),
        StageTwoBudget::StageOnePower => stage_one.power.0.clone(),
    };
    let mut out = run_stage_two(inst, &stage_one.association, &r_tilde, &budget, options)?;
    out.stage_one_power = stage_one.power.0;
    Ok(out)
}

/// Baseline: max-SINR association at full power, then the same stage two.
pub fn maxsinr_wmmse_solve(inst: &NetworkInstance, options: &TwoStageOptions) -> Result<TwoStageResult> {
    options.validate(inst)?;
    let p = inst.full_power();
    let assoc = max_sinr_assoc(inst, &p);
    let r_tilde = siso_estimate(inst, &assoc, &p);
    let mut out = run_stage_two(inst, &assoc, &r_tilde, &p, options)?;
    out.stage_one_power = p;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{gen_topology, NetworkConfig};

    fn sched(omega: Vec<f64>, s: usize, l: usize) -> SchedulerState {
        let r_avg = omega.iter().map(|w| 1.0 / w).collect();
        SchedulerState { omega, r_avg, s: vec![s; l], slot: 0 }
    }

    #[test]
    fn small_cells_are_selected_whole() {
        let assoc = Association::from_bs_of(vec![0, 1, 0, 1, 1], 2);
        let st = sched(vec![1.0; 5], 4, 2);
        let c = select_candidates(&assoc, &st, &[1.0; 5]);
        assert_eq!(c, vec![vec![0, 2], vec![1, 3, 4]]);
    }

    #[test]
    fn selection_follows_weights_and_ignores_scale() {
        let assoc = Association::from_bs_of(vec![0; 5], 1);
        let st = sched(vec![0.5, 2.0, 1.0, 3.0, 2.0], 2, 1);
        let c = select_candidates(&assoc, &st, &[1.0; 5]);
        assert_eq!(c, vec![vec![3, 1]]);
        let scaled = sched(st.omega.iter().map(|w| w * 7.0).collect(), 2, 1);
        assert_eq!(select_candidates(&assoc, &scaled, &[1.0; 5]), c);
    }

    fn mimo_cfg(seed: u64) -> NetworkConfig {
        NetworkConfig {
            num_cells: 1,
            picos_per_cell: 1,
            users_per_cell: 6,
            wraparound: false,
            bs_antennas: 2,
            user_antennas: 2,
            ..NetworkConfig::default()
        }
        .with_seed(seed)
    }

    #[test]
    fn association_is_fixed_and_power_feasible() {
        let inst = gen_topology(&mimo_cfg(1)).unwrap();
        let opts = TwoStageOptions { candidates: CandidateCount::PerBs(2), max_slots: 30, ..Default::default() };
        let out = two_stage_solve(&inst, &opts).unwrap();
        assert_eq!(out.handovers, 0);
        assert_eq!(out.slots.len(), out.beamformers.len());
        for b in &out.beamformers {
            assert_eq!(b.bs_of, out.association.bs_of);
            assert!(b.is_feasible(&inst.max_psd, 1e-9));
        }
        assert!(out.worst_wsr_decrease <= 1e-8);
        for st in &out.scheduler_trace {
            for (w, r) in st.omega.iter().zip(&st.r_avg) {
                assert!((w * r - 1.0).abs() < 1e-12);
            }
        }
        assert!(out.utility.is_finite());
    }

    #[test]
    fn entire_cell_selects_everyone() {
        let inst = gen_topology(&mimo_cfg(2)).unwrap();
        let opts = TwoStageOptions { candidates: CandidateCount::EntireCell, max_slots: 3, ..Default::default() };
        let out = two_stage_solve(&inst, &opts).unwrap();
        assert_eq!(out.scheduler_trace[0].s, out.association.load);
    }

    #[test]
    fn rejects_too_few_candidates() {
        let inst = gen_topology(&mimo_cfg(0)).unwrap();
        let opts = TwoStageOptions { candidates: CandidateCount::PerBs(1), ..Default::default() };
        assert!(matches!(two_stage_solve(&inst, &opts), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn needs_channels() {
        let inst = NetworkInstance::from_gains(&[vec![1e-10]], vec![1e-3], vec![1e-16], 1e7, 1.0).unwrap();
        let assoc = Association::from_bs_of(vec![0], 1);
        let opts = TwoStageOptions { candidates: CandidateCount::PerBs(1), ..Default::default() };
        assert!(matches!(run_stage_two(&inst, &assoc, &[1.0], &[1e-3], &opts), Err(Error::MissingChannels)));
    }
}
