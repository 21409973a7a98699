//! Joint association and power control.
//!
//! [`iterate_assoc_power`] alternates price-based association with Newton power
//! control; [`iterate_maxsinr_power`] is the same loop driven by the max-SINR
//! rule. [`direct_dual_solve`] minimizes the dual of the joint problem with
//! coordinate bisection on the prices, evaluating the dual function by
//! multi-start alternation over (association, power).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::max_sinr_assoc;
use crate::dcd::{
    assign_by_prices, dcd_solve, recover_association, update_nu, Association, DcdOptions, DualState,
};
use crate::error::{Error, Result};
use crate::netmodel::{NetworkInstance, Tier};
use crate::powerctl::{newton_power_solve, NewtonOptions, PowerVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JointOptions {
    pub max_rounds: usize,
    pub utility_tol: f64,
    /// Keep the previous association when the new one scores lower at the current power.
    pub accept_only_improving_association: bool,
    /// Use a_ij = ln(M_j W log2(1 + SINR/Γ)) (the SISO surrogate of a MIMO network).
    pub antenna_scaling: bool,
}

impl Default for JointOptions {
    fn default() -> Self {
        Self { max_rounds: 20, utility_tol: 1e-6, accept_only_improving_association: true, antenna_scaling: false }
    }
}

impl JointOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.utility_tol > 0.0) || self.max_rounds == 0 {
            return Err(Error::InvalidConfig("joint loop needs max_rounds >= 1 and utility_tol > 0".into()));
        }
        Ok(())
    }
}

/// One alternation round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTraceEntry {
    pub round: usize,
    pub utility: f64,
    pub macro_user_fraction: f64,
    pub mean_macro_psd: f64,
    pub mean_pico_psd: f64,
    pub association_adopted: bool,
}

#[derive(Debug, Clone)]
pub struct JointResult {
    pub association: Association,
    pub power: PowerVector,
    pub utility: f64,
    pub trace: Vec<RoundTraceEntry>,
}

/// Utility of (assoc, p), including Σ ln M_j when antenna scaling is on.
pub fn joint_utility(inst: &NetworkInstance, assoc: &Association, p: &[f64], antenna_scaling: bool) -> f64 {
    let base = inst.network_utility(assoc, p);
    if antenna_scaling {
        base + assoc.bs_of.iter().map(|&j| (inst.bs_antennas[j] as f64).ln()).sum::<f64>()
    } else {
        base
    }
}

fn round_entry(
    inst: &NetworkInstance,
    round: usize,
    utility: f64,
    assoc: &Association,
    p: &[f64],
    adopted: bool,
) -> RoundTraceEntry {
    let mean = |tier: Tier| {
        let v: Vec<f64> = (0..inst.num_bs).filter(|&j| inst.tiers[j] == tier).map(|j| p[j]).collect();
        if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 }
    };
    let macro_users = assoc.bs_of.iter().filter(|&&j| inst.tiers[j] == Tier::Macro).count();
    RoundTraceEntry {
        round,
        utility,
        macro_user_fraction: macro_users as f64 / assoc.num_users().max(1) as f64,
        mean_macro_psd: mean(Tier::Macro),
        mean_pico_psd: mean(Tier::Pico),
        association_adopted: adopted,
    }
}

fn check_power(inst: &NetworkInstance, p0: &[f64]) -> Result<()> {
    if p0.len() != inst.num_bs || !PowerVector(p0.to_vec()).is_feasible(inst) {
        return Err(Error::InvalidConfig("initial power vector is infeasible".into()));
    }
    Ok(())
}

/// Alternates DCD association (at the current power) with Newton power control.
///
/// With the adoption guard on, the round utility never decreases.
pub fn iterate_assoc_power(
    inst: &NetworkInstance,
    p0: &[f64],
    options: &JointOptions,
    dcd_options: &DcdOptions,
    newton_options: &NewtonOptions,
) -> Result<JointResult> {
    options.validate()?;
    check_power(inst, p0)?;
    let scaling = options.antenna_scaling;
    let mut p = p0.to_vec();
    let mut current: Option<Association> = None;
    let mut trace = Vec::new();
    let mut utility = f64::NEG_INFINITY;

    for round in 1..=options.max_rounds {
        let a = inst.utility_matrix(&p, scaling);
        let cand = dcd_solve(&a, dcd_options)?.association;
        let adopt = match &current {
            None => true,
            Some(prev) => !options.accept_only_improving_association || a.objective(&cand) >= a.objective(prev),
        };
        if adopt {
            current = Some(cand);
        }
        let assoc = current.as_ref().expect("set in the first round");
        let res = newton_power_solve(inst, assoc, &p, newton_options)?;
        p = res.power.0;
        let next = joint_utility(inst, assoc, &p, scaling);
        trace.push(round_entry(inst, round, next, assoc, &p, adopt));
        let improvement = next - utility;
        utility = next;
        if round > 1 && improvement < options.utility_tol {
            break;
        }
    }
    let association = current.expect("max_rounds >= 1");
    Ok(JointResult { association, power: PowerVector(p), utility, trace })
}

/// The same alternation with the max-SINR rule and no adoption guard; the
/// utility trace may decrease.
pub fn iterate_maxsinr_power(
    inst: &NetworkInstance,
    p0: &[f64],
    options: &JointOptions,
    newton_options: &NewtonOptions,
) -> Result<JointResult> {
    options.validate()?;
    check_power(inst, p0)?;
    let scaling = options.antenna_scaling;
    let mut p = p0.to_vec();
    let mut trace = Vec::new();
    let mut utility = f64::NEG_INFINITY;
    let mut assoc = max_sinr_assoc(inst, &p);
    for round in 1..=options.max_rounds {
        assoc = max_sinr_assoc(inst, &p);
        let res = newton_power_solve(inst, &assoc, &p, newton_options)?;
        p = res.power.0;
        let next = joint_utility(inst, &assoc, &p, scaling);
        trace.push(round_entry(inst, round, next, &assoc, &p, true));
        let change = (next - utility).abs();
        utility = next;
        if round > 1 && change < options.utility_tol {
            break;
        }
    }
    Ok(JointResult { association: assoc, power: PowerVector(p), utility, trace })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DirectDualOptions {
    pub num_starts: usize,
    pub mu_bisection_tol: f64,
    /// Association/power alternations per start when evaluating the dual function.
    pub inner_alt_max: usize,
    /// Newton iterations per power step inside the dual evaluation.
    pub inner_newton_iters: usize,
    /// End states carried from one dual evaluation into the next.
    pub carried_states: usize,
    /// Full coordinate sweeps over the prices.
    pub outer_sweeps: usize,
    /// Half-width of the initial bisection bracket around the current price.
    pub bracket: f64,
    /// Association/power rounds when recovering a primal point from a dual power.
    pub primal_rounds: usize,
    /// Power-solver calls beyond which a cost warning is recorded.
    pub power_call_budget: usize,
    pub seed: u64,
}

impl Default for DirectDualOptions {
    fn default() -> Self {
        Self {
            num_starts: 10,
            mu_bisection_tol: 5e-2,
            inner_alt_max: 3,
            inner_newton_iters: 10,
            carried_states: 3,
            outer_sweeps: 1,
            bracket: 20.0,
            primal_rounds: 3,
            power_call_budget: 1_000_000,
            seed: 0,
        }
    }
}

impl DirectDualOptions {
    pub fn validate(&self) -> Result<()> {
        if self.num_starts == 0 || self.inner_alt_max == 0 || self.outer_sweeps == 0 || self.primal_rounds == 0 {
            return Err(Error::InvalidConfig("direct dual needs num_starts, inner_alt_max, outer_sweeps, primal_rounds >= 1".into()));
        }
        if !(self.mu_bisection_tol > 0.0) || !(self.bracket > 0.0) {
            return Err(Error::InvalidConfig("bisection tolerance and bracket must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectDualTraceEntry {
    pub evaluation: usize,
    pub updated_bs: Option<usize>,
    pub dual_objective: f64,
    pub best_primal_utility: f64,
    pub power_solver_calls: usize,
}

#[derive(Debug, Clone)]
pub struct DirectDualResult {
    pub association: Association,
    pub power: PowerVector,
    pub utility: f64,
    pub dual: DualState,
    pub trace: Vec<DirectDualTraceEntry>,
    pub power_solver_calls: usize,
    pub warnings: Vec<String>,
}

/// Bracket half-widths stop doubling here.
const MAX_BRACKET: f64 = 1e3;

/// Per-start state carried along accepted price updates.
#[derive(Debug, Clone)]
struct StartState {
    power: Vec<f64>,
    assoc: Association,
}

/// Outcome of one (approximate) dual-function evaluation.
#[derive(Debug, Clone)]
struct DualEval {
    value: f64,
    best: usize,
    states: Vec<StartState>,
}

impl DualEval {
    fn load(&self) -> &[usize] {
        &self.states[self.best].assoc.load
    }

    fn power(&self) -> &[f64] {
        &self.states[self.best].power
    }
}

struct DirectDual<'a> {
    inst: &'a NetworkInstance,
    options: &'a DirectDualOptions,
    newton: NewtonOptions,
    /// p̄ and the random starts, rerun at every evaluation.
    fresh: Vec<StartState>,
    best_primal: Option<(f64, Association, Vec<f64>)>,
    calls: usize,
}

impl DirectDual<'_> {
    /// g(μ, ν) with the inner maximum over (X, p) approximated by alternating
    /// from the fresh starts and the carried states. The best few end states
    /// are kept for the next evaluation.
    fn eval(&mut self, mu: &[f64], nu: f64, carried: &[StartState]) -> Result<DualEval> {
        let inst = self.inst;
        let starts: Vec<&StartState> = self.fresh.iter().chain(carried).collect();
        let newton = &self.newton;
        let alt_max = self.options.inner_alt_max;
        let runs: Vec<Result<(f64, StartState, usize)>> = starts
            .par_iter()
            .map(|s| {
                let mut p = s.power.clone();
                let mut assoc = s.assoc.clone();
                let mut calls = 0;
                let mut a = inst.utility_matrix(&p, false);
                for _ in 0..alt_max {
                    p = newton_power_solve(inst, &assoc, &p, newton)?.power.0;
                    calls += 1;
                    a = inst.utility_matrix(&p, false);
                    let next = assign_by_prices(&a, mu);
                    if next == assoc {
                        break;
                    }
                    assoc = next;
                }
                let assoc = assign_by_prices(&a, mu);
                let value = assoc.bs_of.iter().enumerate().map(|(i, &j)| a.get(i, j) - mu[j]).sum();
                Ok((value, StartState { power: p, assoc }, calls))
            })
            .collect();
        let mut ranked = Vec::with_capacity(runs.len());
        for run in runs {
            let (value, state, calls) = run?;
            self.calls += calls;
            let u = inst.network_utility(&state.assoc, &state.power);
            self.offer(u, &state.assoc, &state.power);
            ranked.push((value, state));
        }
        ranked.sort_by(|x, y| y.0.total_cmp(&x.0));
        ranked.truncate(self.options.carried_states.max(1));
        let k = inst.num_users as f64;
        let value = ranked[0].0 + mu.iter().map(|m| (m - nu - 1.0).exp()).sum::<f64>() + nu * k;
        Ok(DualEval { value, best: 0, states: ranked.into_iter().map(|r| r.1).collect() })
    }

    /// Fixed-power DCD association at `p` followed by Newton power control.
    fn recover(&mut self, p: &[f64], rounds: usize) -> Result<()> {
        let options = JointOptions { max_rounds: rounds, ..JointOptions::default() };
        let res = iterate_assoc_power(self.inst, p, &options, &DcdOptions::default(), &NewtonOptions::default())?;
        self.calls += res.trace.len();
        self.offer(res.utility, &res.association, &res.power);
        Ok(())
    }

    fn offer(&mut self, utility: f64, assoc: &Association, p: &[f64]) {
        if self.best_primal.as_ref().is_none_or(|b| utility > b.0) {
            self.best_primal = Some((utility, assoc.clone(), p.to_vec()));
        }
    }

    fn best_utility(&self) -> f64 {
        self.best_primal.as_ref().map_or(f64::NEG_INFINITY, |b| b.0)
    }

    /// Lagrangian value at (μ, ν) of the best primal power, maximized over X.
    /// It is at least the best primal utility.
    fn primal_bound(&self, mu: &[f64], nu: f64) -> f64 {
        let Some((_, _, p)) = &self.best_primal else { return f64::NEG_INFINITY };
        let k = self.inst.num_users;
        let a = self.inst.utility_matrix(p, false);
        let inner: f64 = (0..k)
            .map(|i| a.row(i).iter().zip(mu).map(|(x, m)| x - m).fold(f64::NEG_INFINITY, f64::max))
            .sum();
        inner + mu.iter().map(|m| (m - nu - 1.0).exp()).sum::<f64>() + nu * k as f64
    }
}

/// Direct minimization of the joint dual by price bisection.
///
/// Start states are p̄ plus `num_starts` log-uniform random powers, each with
/// its max-SINR association, rerun at every evaluation next to the best end
/// states of the previous one. Primal points are recovered from p̄ and from the
/// dual's powers by alternating fixed-power DCD and Newton. The reported dual objective is raised, if needed, to the
/// Lagrangian value of every recovered power, so it upper-bounds all primal
/// utilities met.
pub fn direct_dual_solve(
    inst: &NetworkInstance,
    options: &DirectDualOptions,
    newton_options: &NewtonOptions,
) -> Result<DirectDualResult> {
    options.validate()?;
    newton_options.validate()?;
    let newton = NewtonOptions { max_outer_iters: options.inner_newton_iters, ..newton_options.clone() };
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut powers = vec![inst.full_power()];
    for _ in 0..options.num_starts {
        powers.push(inst.max_psd.iter().map(|m| m * 10f64.powf(rng.random_range(-3.0..=0.0))).collect());
    }
    let fresh: Vec<StartState> =
        powers.into_iter().map(|p| StartState { assoc: max_sinr_assoc(inst, &p), power: p }).collect();
    let mut dd = DirectDual { inst, options, newton, fresh, best_primal: None, calls: 0 };

    let k = inst.num_users;
    let mut mu = vec![0.0; inst.num_bs];
    let mut nu = update_nu(&mu, k);
    dd.recover(&inst.full_power(), JointOptions::default().max_rounds)?;
    let mut current = dd.eval(&mu, nu, &[])?;
    dd.recover(current.power(), options.primal_rounds)?;
    let mut evaluation = 1;
    let mut trace = vec![DirectDualTraceEntry {
        evaluation,
        updated_bs: None,
        dual_objective: current.value,
        best_primal_utility: dd.best_utility(),
        power_solver_calls: dd.calls,
    }];

    for _ in 0..options.outer_sweeps {
        for j in 0..inst.num_bs {
            let mut last: Option<DualEval> = None;
            let mut probe = |dd: &mut DirectDual, m: f64| -> Result<f64> {
                let mut trial = mu.clone();
                trial[j] = m;
                let e = dd.eval(&trial, nu, &current.states)?;
                let d = (m - nu - 1.0).exp() - e.load()[j] as f64;
                last = Some(e);
                Ok(d)
            };
            let mut width = options.bracket;
            while probe(&mut dd, mu[j] - width)? > 0.0 && width < MAX_BRACKET {
                width *= 2.0;
                evaluation += 1;
            }
            let mut lo = mu[j] - width;
            width = options.bracket;
            while probe(&mut dd, mu[j] + width)? < 0.0 && width < MAX_BRACKET {
                width *= 2.0;
                evaluation += 1;
            }
            let mut hi = mu[j] + width;
            evaluation += 2;
            loop {
                let mid = 0.5 * (lo + hi);
                let d = probe(&mut dd, mid)?;
                evaluation += 1;
                if hi - lo <= options.mu_bisection_tol {
                    mu[j] = mid;
                    break;
                }
                if d < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            current = last.expect("probed at the root");
            dd.recover(current.power(), options.primal_rounds)?;
            trace.push(DirectDualTraceEntry {
                evaluation,
                updated_bs: Some(j),
                dual_objective: current.value,
                best_primal_utility: dd.best_utility(),
                power_solver_calls: dd.calls,
            });
        }
        nu = update_nu(&mu, k);
        current = dd.eval(&mu, nu, &current.states)?;
        evaluation += 1;
        trace.push(DirectDualTraceEntry {
            evaluation,
            updated_bs: None,
            dual_objective: current.value,
            best_primal_utility: dd.best_utility(),
            power_solver_calls: dd.calls,
        });
    }

    for st in current.states.clone() {
        dd.recover(&st.power, options.primal_rounds)?;
    }
    let a = inst.utility_matrix(current.power(), false);
    let recovered = recover_association(&a, &mu, nu, &DcdOptions::default());
    if recovered.load.iter().zip(current.power()).all(|(&k, &p)| k == 0 || p > 0.0) {
        let res = newton_power_solve(inst, &recovered, current.power(), newton_options)?;
        dd.calls += 1;
        dd.offer(res.utility, &recovered, &res.power);
    }
    if let Some((_, x, p)) = dd.best_primal.clone() {
        let res = newton_power_solve(inst, &x, &p, newton_options)?;
        dd.calls += 1;
        dd.offer(res.utility, &x, &res.power);
    }
    let dual_objective = current.value.max(dd.primal_bound(&mu, nu));

    let mut warnings = Vec::new();
    if dd.calls > options.power_call_budget {
        warnings.push(format!(
            "direct dual used {} power-control calls (budget {})",
            dd.calls, options.power_call_budget
        ));
    }
    let (utility, association, power) = dd.best_primal.expect("recovered at least once");
    let iteration = trace.len();
    Ok(DirectDualResult {
        association,
        power: PowerVector(power),
        utility,
        dual: DualState { mu, nu, dual_objective, iteration },
        trace,
        power_solver_calls: dd.calls,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn one_bs() -> NetworkInstance {
        NetworkInstance::from_gains(&[vec![1e-10], vec![3e-11], vec![5e-12]], vec![1e-3], vec![1e-16; 3], 1e7, 1.0)
            .unwrap()
    }

    #[test]
    fn single_bs_joint_goes_to_full_power() {
        let inst = one_bs();
        let half = vec![5e-4];
        let res = iterate_assoc_power(&inst, &half, &JointOptions::default(), &DcdOptions::default(), &NewtonOptions::default())
            .unwrap();
        assert_eq!(res.association.load, vec![3]);
        assert_relative_eq!(res.power[0], 1e-3, max_relative = 1e-9);
        let ms = iterate_maxsinr_power(&inst, &half, &JointOptions::default(), &NewtonOptions::default()).unwrap();
        assert_eq!(ms.association, res.association);
        assert_relative_eq!(ms.utility, res.utility, epsilon = 1e-12);
    }

    #[test]
    fn zero_newton_iterations_reduce_to_dcd() {
        let inst = NetworkInstance::from_gains(
            &[vec![2e-10, 1e-11], vec![1e-10, 8e-11], vec![5e-11, 5e-11], vec![1e-12, 3e-11]],
            vec![1e-3, 1e-5],
            vec![1e-16; 4],
            1e7,
            1.0,
        )
        .unwrap();
        let newton = NewtonOptions { max_outer_iters: 0, ..Default::default() };
        let p0 = inst.full_power();
        let res = iterate_assoc_power(&inst, &p0, &JointOptions::default(), &DcdOptions::default(), &newton).unwrap();
        let plain = dcd_solve(&inst.utility_matrix(&p0, false), &DcdOptions::default()).unwrap();
        assert_eq!(res.association, plain.association);
        assert_eq!(res.power.0, p0);
    }

    #[test]
    fn single_bs_direct_dual() {
        let inst = one_bs();
        let opts = DirectDualOptions { num_starts: 2, outer_sweeps: 1, ..Default::default() };
        let res = direct_dual_solve(&inst, &opts, &NewtonOptions::default()).unwrap();
        assert_eq!(res.association.load, vec![3]);
        assert_relative_eq!(res.power[0], 1e-3, max_relative = 1e-9);
        assert!(res.dual.dual_objective >= res.utility - 1e-9);
    }

    #[test]
    fn pricing_relieves_the_overloaded_bs() {
        let inst = crate::harness::scenarios::load_imbalance_instance().unwrap();
        let p0 = inst.full_power();
        let initial = max_sinr_assoc(&inst, &p0).load[0];
        assert_eq!(initial, 12);
        let joint = iterate_assoc_power(&inst, &p0, &JointOptions::default(), &DcdOptions::default(), &NewtonOptions::default())
            .unwrap();
        let maxsinr = iterate_maxsinr_power(&inst, &p0, &JointOptions::default(), &NewtonOptions::default()).unwrap();
        assert!(joint.association.load[0] < initial);
        assert!(maxsinr.association.load[0] >= initial);
        assert!(maxsinr.power[1] < p0[1]);
    }

    #[test]
    fn round_trace_is_nondecreasing() {
        let cfg = crate::netmodel::NetworkConfig { users_per_cell: 5, ..Default::default() }.with_seed(3);
        let inst = crate::netmodel::gen_topology(&cfg).unwrap();
        let res = iterate_assoc_power(
            &inst,
            &inst.full_power(),
            &JointOptions::default(),
            &DcdOptions::default(),
            &NewtonOptions::default(),
        )
        .unwrap();
        assert!(res.trace.len() <= JointOptions::default().max_rounds);
        for w in res.trace.windows(2) {
            assert!(w[1].utility >= w[0].utility - 1e-9, "{:?}", w);
        }
    }

    #[test]
    fn rejects_infeasible_start() {
        let inst = one_bs();
        let err = iterate_assoc_power(&inst, &[2e-3], &JointOptions::default(), &DcdOptions::default(), &NewtonOptions::default());
        assert!(err.is_err());
    }
}
