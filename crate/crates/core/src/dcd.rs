//! Fixed-power association by dual coordinate descent on the closed-form dual
//!
//! ```text
//! g(μ, ν) = Σ_i max_j (a_ij − μ_j) + Σ_j exp(μ_j − ν − 1) + ν K
//! ```
//!
//! Each price update is an exact one-dimensional minimization of `g`, so the
//! dual objective never increases regardless of the update order. The primal
//! association is read off the prices, with ties resolved to keep each load
//! `k_j` close to its dual target `exp(μ_j − ν − 1)`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::{xlogx, UtilityMatrix};

/// Relative tolerance under which two values of `a_ij − μ_j` count as tied.
pub const TIE_TOL: f64 = 1e-9;

/// User-to-BS assignment with per-BS loads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Association {
    pub bs_of: Vec<usize>,
    pub load: Vec<usize>,
}

impl Association {
    pub fn from_bs_of(bs_of: Vec<usize>, num_bs: usize) -> Self {
        let mut load = vec![0; num_bs];
        for &j in &bs_of {
            load[j] += 1;
        }
        Self { bs_of, load }
    }

    pub fn num_users(&self) -> usize {
        self.bs_of.len()
    }

    pub fn num_bs(&self) -> usize {
        self.load.len()
    }

    pub fn validate(&self) -> Result<()> {
        let mut load = vec![0; self.load.len()];
        for &j in &self.bs_of {
            if j >= load.len() {
                return Err(Error::Dimension(format!("user assigned to missing BS {j}")));
            }
            load[j] += 1;
        }
        if load != self.load {
            return Err(Error::Dimension("load vector disagrees with assignment".into()));
        }
        Ok(())
    }
}

/// Prices and the scalar multiplier on Σ k_j = K.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub mu: Vec<f64>,
    pub nu: f64,
    pub dual_objective: f64,
    /// Number of single-price updates performed.
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateOrder {
    RoundRobin,
    /// A fresh random permutation of the BSs for every sweep.
    RandomPermutation { seed: u64 },
    /// An arbitrary cyclic schedule of BS indices; one sweep consumes `L` entries.
    Sequence(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DcdOptions {
    pub update_order: UpdateOrder,
    /// Stop once a full sweep lowers the dual objective by less than this.
    pub convergence_tol: f64,
    pub max_sweeps: usize,
    /// Tied users up to this count are resolved by exhaustive search.
    pub tie_break_exhaustive_limit: usize,
    /// Evaluate the recovered primal utility after every update for the trace.
    pub record_primal: bool,
}

impl Default for DcdOptions {
    fn default() -> Self {
        Self {
            update_order: UpdateOrder::RoundRobin,
            convergence_tol: 1e-6,
            max_sweeps: 200,
            tie_break_exhaustive_limit: 12,
            record_primal: true,
        }
    }
}

impl DcdOptions {
    pub fn validate(&self, num_bs: usize) -> Result<()> {
        if !(self.convergence_tol > 0.0) {
            return Err(Error::InvalidConfig("convergence_tol must be positive".into()));
        }
        if let UpdateOrder::Sequence(seq) = &self.update_order {
            if seq.is_empty() || seq.iter().any(|&j| j >= num_bs) {
                return Err(Error::InvalidConfig("update sequence must index existing BSs".into()));
            }
        }
        Ok(())
    }
}

/// One row of a dual trace: the state right after a price (or ν) update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualTraceEntry {
    pub iteration: usize,
    /// `None` marks a ν refresh or the initial point.
    pub updated_bs: Option<usize>,
    pub dual_objective: f64,
    pub primal_utility: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct DcdResult {
    pub association: Association,
    pub dual: DualState,
    pub trace: Vec<DualTraceEntry>,
    pub converged: bool,
    pub sweeps: usize,
}

impl DcdResult {
    pub fn utility(&self, a: &UtilityMatrix) -> f64 {
        a.objective(&self.association)
    }

    pub fn gap_bound(&self) -> f64 {
        duality_gap_bound(&self.association, &self.dual.mu, self.dual.nu)
    }
}

/// Closed-form dual objective g(μ, ν).
pub fn dual_objective(a: &UtilityMatrix, mu: &[f64], nu: f64, num_users: usize) -> f64 {
    let best: f64 = (0..a.num_users)
        .map(|i| {
            a.row(i)
                .iter()
                .zip(mu)
                .map(|(aij, m)| aij - m)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum();
    let targets: f64 = mu.iter().map(|m| (m - nu - 1.0).exp()).sum();
    best + targets + nu * num_users as f64
}

/// ν minimizing g for fixed μ: ln(Σ_j exp(μ_j − 1) / K), via log-sum-exp.
pub fn update_nu(mu: &[f64], num_users: usize) -> f64 {
    assert!(num_users >= 1);
    let top = mu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = mu.iter().map(|m| (m - top).exp()).sum();
    top + sum.ln() - 1.0 - (num_users as f64).ln()
}

/// The exact minimizer of g over μ_j with every other variable held fixed,
/// `sup { μ_j : exp(μ_j − ν − 1) ≤ f1(μ_j) }`.
///
/// `f1(μ_j)` counts users whose best price-adjusted utility is attained at `j`
/// (ties included). User `i` stays in that set while `μ_j ≤ β_i`, with breakpoint
/// `β_i = a_ij − max_{j'≠j}(a_ij' − μ_j')`, so `f1` is a left-continuous step
/// function of the sorted breakpoints.
pub fn update_mu_j(a: &UtilityMatrix, mu: &[f64], nu: f64, j: usize) -> f64 {
    let mut breaks: Vec<f64> = (0..a.num_users)
        .map(|i| {
            let others = a
                .row(i)
                .iter()
                .zip(mu)
                .enumerate()
                .filter(|&(jj, _)| jj != j)
                .map(|(_, (aij, m))| aij - m)
                .fold(f64::NEG_INFINITY, f64::max);
            a.get(i, j) - others
        })
        .collect();
    breaks.sort_by(|x, y| y.total_cmp(x));

    let k = breaks.len();
    for m in 1..=k {
        // on (b_{m+1}, b_m] the step count is m; the crossing with exp is ν + 1 + ln m
        let upper = breaks[m - 1];
        let lower = if m < k { breaks[m] } else { f64::NEG_INFINITY };
        let cand = upper.min(nu + 1.0 + (m as f64).ln());
        if cand > lower {
            return cand;
        }
    }
    // K = 0: f1 ≡ 0 and the sup is empty; keep the price where it is
    mu[j]
}

/// Mixed-radix increment (last digit fastest); false once every combination was visited.
fn advance(digits: &mut [usize], radix: impl Fn(usize) -> usize) -> bool {
    for pos in (0..digits.len()).rev() {
        digits[pos] += 1;
        if digits[pos] < radix(pos) {
            return true;
        }
        digits[pos] = 0;
    }
    false
}

fn tie_threshold(best: f64) -> f64 {
    best - TIE_TOL * (1.0 + best.abs())
}

/// Argmax of `a_ij − μ_j` per user, lowest BS index on ties.
pub fn assign_by_prices(a: &UtilityMatrix, mu: &[f64]) -> Association {
    let bs_of = (0..a.num_users)
        .map(|i| {
            let mut best = 0;
            for j in 1..a.num_bs {
                if a.get(i, j) - mu[j] > a.get(i, best) - mu[best] {
                    best = j;
                }
            }
            best
        })
        .collect();
    Association::from_bs_of(bs_of, a.num_bs)
}

/// Σ_j k_j ln(k_j / exp(μ_j − ν − 1)), the certificate bounding the distance
/// between the recovered utility and the global optimum.
pub fn duality_gap_bound(assoc: &Association, mu: &[f64], nu: f64) -> f64 {
    assoc
        .load
        .iter()
        .zip(mu)
        .map(|(&k, m)| {
            let k = k as f64;
            xlogx(k) - k * (m - nu - 1.0)
        })
        .sum()
}

/// Recovers the association from prices: strict argmax users are fixed; tied
/// users are spread to minimize the gap certificate, exhaustively when there
/// are at most `tie_break_exhaustive_limit` of them and greedily otherwise.
pub fn recover_association(a: &UtilityMatrix, mu: &[f64], nu: f64, options: &DcdOptions) -> Association {
    const MAX_COMBINATIONS: usize = 1 << 20;
    let l = a.num_bs;
    let mut bs_of = vec![0; a.num_users];
    let mut load = vec![0usize; l];
    let mut tied: Vec<(usize, Vec<usize>)> = Vec::new();
    for (i, slot) in bs_of.iter_mut().enumerate() {
        let row = a.row(i);
        let best = row.iter().zip(mu).map(|(x, m)| x - m).fold(f64::NEG_INFINITY, f64::max);
        let thr = tie_threshold(best);
        let alts: Vec<usize> = (0..l).filter(|&j| row[j] - mu[j] >= thr).collect();
        if alts.len() == 1 {
            *slot = alts[0];
            load[alts[0]] += 1;
        } else {
            tied.push((i, alts));
        }
    }
    if tied.is_empty() {
        return Association { bs_of, load };
    }

    let log_target: Vec<f64> = mu.iter().map(|m| m - nu - 1.0).collect();
    let cost = |k: usize, j: usize| {
        let k = k as f64;
        xlogx(k) - k * log_target[j]
    };

    let combos = tied
        .iter()
        .try_fold(1usize, |acc, (_, alts)| acc.checked_mul(alts.len()))
        .unwrap_or(usize::MAX);
    if tied.len() <= options.tie_break_exhaustive_limit && combos <= MAX_COMBINATIONS {
        let mut digits = vec![0usize; tied.len()];
        let mut best_digits = digits.clone();
        let mut best_cost = f64::INFINITY;
        let mut trial = load.clone();
        loop {
            trial.copy_from_slice(&load);
            for ((_, alts), &d) in tied.iter().zip(&digits) {
                trial[alts[d]] += 1;
            }
            let c: f64 = trial.iter().enumerate().map(|(j, &k)| cost(k, j)).sum();
            if c < best_cost - 1e-12 {
                best_cost = c;
                best_digits.copy_from_slice(&digits);
            }
            if !advance(&mut digits, |pos| tied[pos].1.len()) {
                break;
            }
        }
        for ((i, alts), &d) in tied.iter().zip(&best_digits) {
            bs_of[*i] = alts[d];
            load[alts[d]] += 1;
        }
    } else {
        for (i, alts) in &tied {
            let pick = *alts
                .iter()
                .min_by(|&&x, &&y| {
                    let dx = cost(load[x] + 1, x) - cost(load[x], x);
                    let dy = cost(load[y] + 1, y) - cost(load[y], y);
                    dx.total_cmp(&dy)
                })
                .expect("tied users have at least two alternatives");
            bs_of[*i] = pick;
            load[pick] += 1;
        }
    }
    Association { bs_of, load }
}

struct SweepSchedule {
    order: UpdateOrder,
    rng: Option<ChaCha8Rng>,
    cursor: usize,
    num_bs: usize,
}

impl SweepSchedule {
    fn new(order: &UpdateOrder, num_bs: usize) -> Self {
        let rng = match order {
            UpdateOrder::RandomPermutation { seed } => Some(ChaCha8Rng::seed_from_u64(*seed)),
            _ => None,
        };
        Self { order: order.clone(), rng, cursor: 0, num_bs }
    }

    fn next_sweep(&mut self) -> Vec<usize> {
        match &self.order {
            UpdateOrder::RoundRobin => (0..self.num_bs).collect(),
            UpdateOrder::RandomPermutation { .. } => {
                let mut perm: Vec<usize> = (0..self.num_bs).collect();
                perm.shuffle(self.rng.as_mut().expect("seeded"));
                perm
            }
            UpdateOrder::Sequence(seq) => {
                let out = (0..self.num_bs).map(|t| seq[(self.cursor + t) % seq.len()]).collect();
                self.cursor = (self.cursor + self.num_bs) % seq.len();
                out
            }
        }
    }
}

/// Runs dual coordinate descent from μ = 0 and recovers the association.
///
/// A sweep is `L` price updates in the configured order followed by a ν
/// refresh. Hitting `max_sweeps` is reported through `converged`, not as an
/// error.
pub fn dcd_solve(a: &UtilityMatrix, options: &DcdOptions) -> Result<DcdResult> {
    options.validate(a.num_bs)?;
    let k = a.num_users;
    let mut mu = vec![0.0; a.num_bs];
    let mut nu = update_nu(&mu, k);
    let mut iteration = 0;
    let mut trace = Vec::new();
    let record = |mu: &[f64], nu: f64, iteration: usize, updated_bs: Option<usize>| {
        let dual_objective = dual_objective(a, mu, nu, k);
        let primal_utility = options
            .record_primal
            .then(|| a.objective(&recover_association(a, mu, nu, options)));
        DualTraceEntry { iteration, updated_bs, dual_objective, primal_utility }
    };
    trace.push(record(&mu, nu, 0, None));

    let mut schedule = SweepSchedule::new(&options.update_order, a.num_bs);
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < options.max_sweeps {
        let start = trace.last().map(|e| e.dual_objective).unwrap_or(f64::INFINITY);
        for j in schedule.next_sweep() {
            mu[j] = update_mu_j(a, &mu, nu, j);
            iteration += 1;
            trace.push(record(&mu, nu, iteration, Some(j)));
        }
        nu = update_nu(&mu, k);
        trace.push(record(&mu, nu, iteration, None));
        sweeps += 1;
        let end = trace.last().map(|e| e.dual_objective).unwrap_or(f64::INFINITY);
        if start - end < options.convergence_tol {
            converged = true;
            break;
        }
    }

    let association = recover_association(a, &mu, nu, options);
    let dual_objective = dual_objective(a, &mu, nu, k);
    Ok(DcdResult {
        association,
        dual: DualState { mu, nu, dual_objective, iteration },
        trace,
        converged,
        sweeps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn two_by_two() -> UtilityMatrix {
        UtilityMatrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]])
    }

    #[test]
    fn dual_objective_examples() {
        let a = UtilityMatrix::from_rows(&[vec![0.0]]);
        assert_relative_eq!(dual_objective(&a, &[0.0], -1.0, 1), 0.0, epsilon = 1e-15);
        let nu = (2.0 * (-1f64).exp() / 2.0).ln();
        assert_relative_eq!(nu, -1.0, epsilon = 1e-15);
        assert_relative_eq!(dual_objective(&two_by_two(), &[0.0, 0.0], nu, 2), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn nu_update() {
        assert_relative_eq!(update_nu(&[0.0, 0.0], 2), -1.0, epsilon = 1e-15);
        let mu = [0.3, -1.2, 2.5, 0.0];
        let nu = update_nu(&mu, 7);
        let total: f64 = mu.iter().map(|m| (m - nu - 1.0).exp()).sum();
        assert_relative_eq!(total, 7.0, max_relative = 1e-14);
        let shifted: Vec<f64> = mu.iter().map(|m| m + 3.25).collect();
        assert_relative_eq!(update_nu(&shifted, 7), nu + 3.25, epsilon = 1e-13);
    }

    #[test]
    fn single_bs_price() {
        let a = UtilityMatrix::from_rows(&[vec![0.4], vec![-1.0], vec![2.0]]);
        let nu = -0.7;
        assert_relative_eq!(update_mu_j(&a, &[0.0], nu, 0), nu + 1.0 + 3f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn strict_argmax_recovery() {
        let a = UtilityMatrix::from_rows(&[vec![5.0, 1.0], vec![1.0, 5.0]]);
        let assoc = recover_association(&a, &[0.0, 0.0], -1.0, &DcdOptions::default());
        assert_eq!(assoc.bs_of, vec![0, 1]);
    }

    #[test]
    fn fully_tied_users_split() {
        // equal utilities everywhere; targets exp(μ − ν − 1) = 1 for both BSs
        let a = UtilityMatrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0]]);
        let assoc = recover_association(&a, &[0.0, 0.0], -1.0, &DcdOptions::default());
        assert_eq!(assoc.load, vec![1, 1]);
        let greedy = DcdOptions { tie_break_exhaustive_limit: 0, ..Default::default() };
        assert_eq!(recover_association(&a, &[0.0, 0.0], -1.0, &greedy).load, vec![1, 1]);
        assert_relative_eq!(duality_gap_bound(&assoc, &[0.0, 0.0], -1.0), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn single_bs_solve() {
        let a = UtilityMatrix::from_rows(&[vec![0.5], vec![1.5], vec![-0.25]]);
        let res = dcd_solve(&a, &DcdOptions::default()).unwrap();
        assert_eq!(res.association.load, vec![3]);
        assert_relative_eq!(res.utility(&a), 1.75 - 3.0 * 3f64.ln(), epsilon = 1e-12);
        assert!(res.converged);
    }

    #[test]
    fn sequence_schedule_cycles() {
        let mut s = SweepSchedule::new(&UpdateOrder::Sequence(vec![2, 0, 0, 1, 2]), 3);
        assert_eq!(s.next_sweep(), vec![2, 0, 0]);
        assert_eq!(s.next_sweep(), vec![1, 2, 2]);
        let bad = DcdOptions { update_order: UpdateOrder::Sequence(vec![3]), ..Default::default() };
        assert!(bad.validate(3).is_err());
    }

    #[test]
    fn association_validation() {
        let mut assoc = Association::from_bs_of(vec![0, 1, 1], 2);
        assoc.validate().unwrap();
        assoc.load[0] = 2;
        assert!(assoc.validate().is_err());
    }
}
