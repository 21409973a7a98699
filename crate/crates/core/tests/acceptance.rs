//! Acceptance suite. Each test prints one `PASS`/`FAIL` line straight to the
//! process stdout (bypassing libtest capture) and then asserts.

use std::io::Write;
use std::time::Instant;

use hetnet_core::baselines::{max_sinr_assoc, subgradient_solve, StepRule, SubgradientConfig};
use hetnet_core::dcd::{dcd_solve, DcdOptions, DcdResult, UpdateOrder};
use hetnet_core::harness::scenarios::{load_imbalance_instance, mimo_scenario, reduced_joint_scenario, tiny_scenario};
use hetnet_core::harness::{exhaustive_oracle, joint_brute_oracle, percentile};
use hetnet_core::joint::{direct_dual_solve, iterate_assoc_power, iterate_maxsinr_power, DirectDualOptions, JointOptions};
use hetnet_core::mimo::{
    maxsinr_wmmse_solve, rate_mimo, two_stage_solve, wmmse_percell, BeamformerSet, CandidateCount, TwoStageOptions,
    TwoStageResult, WmmseOptions,
};
use hetnet_core::netmodel::{gen_topology, NetworkConfig, NetworkInstance, UtilityMatrix};
use hetnet_core::powerctl::{newton_power_solve, power_gradient, power_hessian_diag, power_objective, NewtonOptions};
use hetnet_core::C64;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(id: u32, title: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "criterion {id:>2} {tag}: {title} | {detail}");
    let _ = out.flush();
    assert!(pass, "criterion {id} failed: {detail}");
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    percentile(&v, 0.5).unwrap()
}

fn default_scenario(seed: u64) -> NetworkInstance {
    gen_topology(&NetworkConfig::default().with_seed(seed)).unwrap()
}

fn full_power_table(inst: &NetworkInstance) -> UtilityMatrix {
    inst.utility_matrix(&inst.full_power(), false)
}

/// L = 3, K = 8 gain table: one strong BS and two weak ones, log-uniform gains.
fn random_small_instance(rng: &mut ChaCha8Rng) -> NetworkInstance {
    let gains: Vec<Vec<f64>> =
        (0..8).map(|_| (0..3).map(|_| 10f64.powf(rng.random_range(-13.0..-9.0))).collect()).collect();
    NetworkInstance::from_gains(&gains, vec![2e-3, 2e-5, 2e-5], vec![1.26e-17; 8], 1e7, 1.0).unwrap()
}

#[test]
fn c01_gap_certificate_against_exhaustive_search() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut violations = 0;
    let mut exact = 0;
    for _ in 0..50 {
        let a = full_power_table(&random_small_instance(&mut rng));
        let (best, _) = exhaustive_oracle(&a).unwrap();
        let res = dcd_solve(&a, &DcdOptions::default()).unwrap();
        let u = res.utility(&a);
        if u < best - res.gap_bound() - 1e-12 || u > best + 1e-9 {
            violations += 1;
        }
        if (u - best).abs() < 1e-9 {
            exact += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        1,
        "DCD within its gap bound of the exhaustive optimum",
        violations == 0 && secs < 10.0,
        &format!("50 instances, {violations} violations, {exact} exact, {secs:.2} s"),
    );
}

#[test]
fn c02_dual_objective_is_monotone() {
    let mut updates = 0usize;
    let mut worst: f64 = 0.0;
    let mut seed = 0u64;
    while updates < 100_000 {
        let a = full_power_table(&default_scenario(seed));
        let l = a.num_bs;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let order = match seed % 3 {
            0 => UpdateOrder::RoundRobin,
            1 => UpdateOrder::RandomPermutation { seed },
            _ => UpdateOrder::Sequence((0..2 * l).map(|_| rng.random_range(0..l)).collect()),
        };
        let opts = DcdOptions { update_order: order, convergence_tol: 1e-300, max_sweeps: 300, record_primal: false, ..DcdOptions::default() };
        let res = dcd_solve(&a, &opts).unwrap();
        updates += res.trace.iter().filter(|e| e.updated_bs.is_some()).count();
        for w in res.trace.windows(2) {
            worst = worst.max(w[1].dual_objective - w[0].dual_objective);
        }
        seed += 1;
    }
    verdict(
        2,
        "dual objective never increases under mixed update orders",
        worst <= 1e-12,
        &format!("{updates} updates over {seed} instances, worst increase {worst:.3e}"),
    );
}

#[test]
fn c03_weak_duality_at_every_iterate() {
    let mut checked = 0usize;
    let mut violations = 0usize;
    for seed in 0..100u64 {
        let cfg = NetworkConfig { num_cells: 3, users_per_cell: 10, seed, ..NetworkConfig::default() };
        let a = full_power_table(&gen_topology(&cfg).unwrap());
        let order = if seed % 2 == 0 { UpdateOrder::RoundRobin } else { UpdateOrder::RandomPermutation { seed } };
        let res = dcd_solve(&a, &DcdOptions { update_order: order, ..DcdOptions::default() }).unwrap();
        for e in &res.trace {
            if let Some(p) = e.primal_utility {
                checked += 1;
                if e.dual_objective < p - 1e-9 {
                    violations += 1;
                }
            }
        }
    }
    verdict(
        3,
        "dual objective bounds the recovered primal utility",
        violations == 0 && checked > 0,
        &format!("100 instances, {checked} iterates, {violations} violations"),
    );
}

#[test]
fn c04_power_derivatives_and_newton_monotonicity() {
    let mut worst_g: f64 = 0.0;
    let mut worst_h: f64 = 0.0;
    let mut nonmonotone = 0;
    for seed in 0..50u64 {
        let cfg = NetworkConfig { num_cells: 1, users_per_cell: 8, wraparound: false, seed, ..NetworkConfig::default() };
        let inst = gen_topology(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xacce);
        let p: Vec<f64> = inst.max_psd.iter().map(|m| m * 10f64.powf(rng.random_range(-2.0..0.0))).collect();
        let assoc = max_sinr_assoc(&inst, &p);
        let f = |j: usize, d: f64| {
            let mut q = p.clone();
            q[j] += d;
            power_objective(&inst, &assoc, &q).unwrap()
        };
        let f0 = power_objective(&inst, &assoc, &p).unwrap();
        let grad = power_gradient(&inst, &assoc, &p).unwrap();
        let hess = power_hessian_diag(&inst, &assoc, &p).unwrap();
        for j in 0..inst.num_bs {
            let h = 1e-6 * p[j];
            let fd = (f(j, h) - f(j, -h)) / (2.0 * h);
            worst_g = worst_g.max((fd - grad[j]).abs() / grad[j].abs());
            let d2 = |h: f64| (f(j, h) - 2.0 * f0 + f(j, -h)) / (h * h);
            let h = 1e-2 * p[j];
            let fd2 = (4.0 * d2(h / 2.0) - d2(h)) / 3.0;
            worst_h = worst_h.max((fd2 - hess[j]).abs() / hess[j].abs());
        }
        let res = newton_power_solve(&inst, &assoc, &p, &NewtonOptions::default()).unwrap();
        if res.trace.windows(2).any(|w| w[1].utility < w[0].utility) {
            nonmonotone += 1;
        }
    }
    verdict(
        4,
        "power gradient/Hessian match finite differences; Newton is monotone",
        worst_g < 1e-5 && worst_h < 1e-4 && nonmonotone == 0,
        &format!("worst gradient err {worst_g:.2e}, worst Hessian err {worst_h:.2e}, {nonmonotone} non-monotone traces"),
    );
}

#[test]
fn c05_dcd_beats_max_sinr_at_full_power() {
    let start = Instant::now();
    let mut wins = 0;
    let mut gains = Vec::new();
    for seed in 0..20u64 {
        let inst = default_scenario(seed);
        let p = inst.full_power();
        let a = full_power_table(&inst);
        let base = max_sinr_assoc(&inst, &p);
        let dcd = dcd_solve(&a, &DcdOptions::default()).unwrap();
        if dcd.utility(&a) > a.objective(&base) {
            wins += 1;
        }
        let p50 = |assoc| percentile(&inst.rate_report(assoc, &p).cdf_points, 0.5).unwrap();
        gains.push(p50(&dcd.association) / p50(&base) - 1.0);
    }
    let med = median(&gains);
    let secs = start.elapsed().as_secs_f64();
    verdict(
        5,
        "DCD beats max-SINR at full power",
        wins >= 19 && med >= 0.20 && secs < 120.0,
        &format!("wins {wins}/20, median 50th-percentile gain {:.1}%, {secs:.1} s", 100.0 * med),
    );
}

/// Dual objective after the first `sweeps` full sweeps.
fn dual_after_sweeps(res: &DcdResult, l: usize, sweeps: usize) -> f64 {
    res.trace.iter().take_while(|e| e.iteration <= sweeps * l).last().unwrap().dual_objective
}

#[test]
fn c06_dcd_converges_in_a_few_sweeps() {
    let mut ok = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let a = full_power_table(&default_scenario(seed));
        let res = dcd_solve(&a, &DcdOptions { convergence_tol: 1e-10, max_sweeps: 500, record_primal: false, ..DcdOptions::default() }).unwrap();
        let gap = dual_after_sweeps(&res, a.num_bs, 3) - res.dual.dual_objective;
        worst = worst.max(gap);
        if gap <= 0.1 {
            ok += 1;
        }
    }
    verdict(
        6,
        "DCD within 0.1 of its converged dual after 3 sweeps",
        ok >= 18,
        &format!("{ok}/20 seeds, worst residual {worst:.3}"),
    );
}

#[test]
fn c07_subgradient_parity_with_ten_times_the_budget() {
    let mut ok = 0;
    let mut rels = Vec::new();
    for seed in 0..20u64 {
        let a = full_power_table(&default_scenario(seed));
        let dcd = dcd_solve(&a, &DcdOptions { record_primal: false, ..DcdOptions::default() }).unwrap();
        let budget = 10 * dcd.dual.iteration;
        let cfg = SubgradientConfig { step_rule: StepRule::Diminishing { alpha0: 0.5 }, max_iters: budget };
        let sub = subgradient_solve(&a, &cfg).unwrap();
        let rel = (sub.dual.dual_objective - dcd.dual.dual_objective) / dcd.dual.dual_objective.abs();
        rels.push(rel);
        if rel <= 1e-2 {
            ok += 1;
        }
    }
    verdict(
        7,
        "diminishing-step subgradient reaches DCD's dual within 1%",
        ok >= 18,
        &format!("{ok}/20 seeds, median relative gap {:.2e}", median(&rels)),
    );
}

#[test]
fn c08_joint_method_ordering() {
    let newton = NewtonOptions::default();
    let dcd = DcdOptions::default();
    let joint = JointOptions::default();
    let (mut dd, mut jd, mut jm) = (Vec::new(), Vec::new(), Vec::new());
    for seed in 0..10u64 {
        let inst = gen_topology(&reduced_joint_scenario().with_seed(seed)).unwrap();
        let full = inst.full_power();
        jd.push(iterate_assoc_power(&inst, &full, &joint, &dcd, &newton).unwrap().utility);
        jm.push(iterate_maxsinr_power(&inst, &full, &joint, &newton).unwrap().utility);
        dd.push(direct_dual_solve(&inst, &DirectDualOptions::default(), &newton).unwrap().utility);
    }
    let (mdd, mjd, mjm) = (median(&dd), median(&jd), median(&jm));
    let rel = (mdd - mjd) / mdd.abs();

    let mut worst_tiny: f64 = 0.0;
    for seed in 0..10u64 {
        let inst = gen_topology(&tiny_scenario().with_seed(seed)).unwrap();
        let (oracle, _, _) = joint_brute_oracle(&inst, 10, &newton).unwrap();
        let res = direct_dual_solve(&inst, &DirectDualOptions::default(), &newton).unwrap();
        worst_tiny = worst_tiny.max(oracle - res.utility);
    }
    verdict(
        8,
        "direct dual >= joint DCD >= joint max-SINR; direct dual matches the joint oracle",
        mdd >= mjd && mjd >= mjm && rel <= 0.05 && worst_tiny <= 1e-3,
        &format!("medians {mdd:.3} / {mjd:.3} / {mjm:.3}, joint-DCD gap {:.2}%, worst tiny shortfall {worst_tiny:.2e}", 100.0 * rel),
    );
}

#[test]
fn c09_pricing_relieves_the_overloaded_bs() {
    let inst = load_imbalance_instance().unwrap();
    let full = inst.full_power();
    let before = max_sinr_assoc(&inst, &full).load[0];
    let newton = NewtonOptions::default();
    let joint = JointOptions::default();
    let jd = iterate_assoc_power(&inst, &full, &joint, &DcdOptions::default(), &newton).unwrap();
    let jm = iterate_maxsinr_power(&inst, &full, &joint, &newton).unwrap();
    let (after_dcd, after_max) = (jd.association.load[0], jm.association.load[0]);
    verdict(
        9,
        "joint DCD offloads the crowded BS, joint max-SINR does not",
        after_dcd < before && after_max >= before,
        &format!("BS 0 load: max-SINR {before}, joint-DCD {after_dcd}, joint-maxSINR {after_max}"),
    );
}

fn mimo_runs(seeds: std::ops::Range<u64>) -> Vec<(Vec<TwoStageResult>, TwoStageResult)> {
    seeds
        .map(|seed| {
            let inst = gen_topology(&mimo_scenario().with_seed(seed)).unwrap();
            let two: Vec<TwoStageResult> = [4, 6, 8]
                .iter()
                .map(|&s| {
                    let o = TwoStageOptions { candidates: CandidateCount::PerBs(s), ..TwoStageOptions::default() };
                    two_stage_solve(&inst, &o).unwrap()
                })
                .collect();
            (two, maxsinr_wmmse_solve(&inst, &TwoStageOptions::default()).unwrap())
        })
        .collect()
}

#[test]
fn c10_two_stage_beats_max_sinr_wmmse() {
    let runs = mimo_runs(0..10);
    let wins = runs.iter().filter(|(two, base)| two[2].utility > base.utility).count();
    let means: Vec<f64> = (0..3).map(|s| runs.iter().map(|(two, _)| two[s].utility).sum::<f64>() / 10.0).collect();
    let base_mean = runs.iter().map(|(_, b)| b.utility).sum::<f64>() / 10.0;
    let handovers: usize = runs.iter().flat_map(|(two, _)| two.iter()).map(|r| r.handovers).sum();
    verdict(
        10,
        "two-stage beats max-SINR + WMMSE and improves with S",
        wins >= 9 && means[0] <= means[1] && means[1] <= means[2] && handovers == 0,
        &format!(
            "wins {wins}/10, mean utility S4/S6/S8 {:.2}/{:.2}/{:.2} vs {base_mean:.2}, {handovers} association changes",
            means[0], means[1], means[2]
        ),
    );
}

fn single_user_miso(rng: &mut ChaCha8Rng, m: usize) -> (NetworkInstance, f64) {
    let h = DMatrix::from_fn(1, m, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let (p, noise) = (rng.random_range(0.1..2.0), rng.random_range(0.05..1.0));
    let mut inst = NetworkInstance::from_gains(&[vec![h.norm_squared() / m as f64]], vec![p], vec![noise], 1e7, 1.0).unwrap();
    let capacity = 1e7 * (1.0 + p * h.norm_squared() / noise).log2();
    inst.bs_antennas = vec![m];
    inst.user_antennas = vec![1];
    inst.channels = Some(vec![h]);
    (inst, capacity)
}

#[test]
fn c11_wmmse_gates() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst_closed: f64 = 0.0;
    for _ in 0..20 {
        let m = rng.random_range(1..=4);
        let (inst, capacity) = single_user_miso(&mut rng, m);
        let out = wmmse_percell(&inst, 0, &[0], &[1.0], inst.max_psd[0], &BeamformerSet::empty(vec![0]), &WmmseOptions::default()).unwrap();
        let mut set = BeamformerSet::empty(vec![0]);
        set.v[0] = Some(out.beams[0].clone());
        let rate = rate_mimo(&inst, 0, 0, &set).unwrap();
        worst_closed = worst_closed.max((rate - capacity).abs() / capacity);
    }

    let mut worst_decrease: f64 = 0.0;
    let mut infeasible = 0;
    let mut runs = 0;
    for (two, base) in mimo_runs(0..3) {
        for r in two.iter().chain(std::iter::once(&base)) {
            runs += 1;
            worst_decrease = worst_decrease.max(r.worst_wsr_decrease);
            let budget = &r.stage_one_power;
            infeasible += r.beamformers.iter().filter(|b| !b.is_feasible(budget, 1e-12)).count();
        }
    }
    verdict(
        11,
        "WMMSE is monotone, matches single-user capacity and respects budgets",
        worst_closed <= 1e-6 && worst_decrease <= 1e-8 && infeasible == 0,
        &format!(
            "worst MISO error {worst_closed:.2e}, worst WSR decrease {worst_decrease:.2e} over {runs} schedules, {infeasible} infeasible slots"
        ),
    );
}
