//! Reference association schemes: the max-SINR rule and subgradient price updates.

use serde::{Deserialize, Serialize};

use crate::dcd::{
    assign_by_prices, dual_objective, recover_association, update_nu, Association, DcdOptions,
    DualState, DualTraceEntry,
};
use crate::error::{Error, Result};
use crate::netmodel::{NetworkInstance, UtilityMatrix};

/// Each user attaches to the BS with the highest SINR; ties go to the lowest index.
pub fn max_sinr_assoc(inst: &NetworkInstance, p: &[f64]) -> Association {
    let bs_of = (0..inst.num_users)
        .map(|i| {
            let mut best = 0;
            let mut best_sinr = inst.sinr(i, 0, p);
            for j in 1..inst.num_bs {
                let s = inst.sinr(i, j, p);
                if s > best_sinr {
                    best = j;
                    best_sinr = s;
                }
            }
            best
        })
        .collect();
    Association::from_bs_of(bs_of, inst.num_bs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "rule")]
pub enum StepRule {
    Constant { alpha0: f64 },
    /// α_t = α0 / sqrt(t), t = 1, 2, ...
    Diminishing { alpha0: f64 },
    /// Adjustable target level: α_t = γ (g_t − g_lev) / ‖s_t‖² with
    /// g_lev = best − δ_t. δ grows by ρ after reaching the level and shrinks by
    /// β (floored at δ) otherwise; δ_1 seeds it.
    Adaptive { rho: f64, beta: f64, delta: f64, delta1: f64, gamma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SubgradientConfig {
    pub step_rule: StepRule,
    pub max_iters: usize,
}

impl Default for SubgradientConfig {
    fn default() -> Self {
        Self {
            step_rule: StepRule::Adaptive { rho: 1.2, beta: 0.9, delta: 0.002, delta1: 0.5, gamma: 1.0 },
            max_iters: 1000,
        }
    }
}

impl SubgradientConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        match self.step_rule {
            StepRule::Constant { alpha0 } | StepRule::Diminishing { alpha0 } if !(alpha0 > 0.0) => {
                bad("alpha0 must be positive")
            }
            StepRule::Adaptive { rho, beta, delta, delta1, gamma } => {
                if !(rho >= 1.0) || !(beta < 1.0) || !(beta > 0.0) {
                    bad("adaptive rule needs rho >= 1 and 0 < beta < 1")
                } else if !(delta > 0.0) || !(delta1 > 0.0) {
                    bad("adaptive rule needs positive delta and delta1")
                } else if !(gamma > 0.0 && gamma < 2.0) {
                    bad("adaptive rule needs 0 < gamma < 2")
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

/// Simultaneous price step μ_j' = μ_j − α (exp(μ_j − ν − 1) − k_j) followed by
/// the closed-form ν refresh. Returns `(μ', ν')`.
pub fn subgradient_step(mu: &[f64], nu: f64, load: &[usize], alpha: f64, num_users: usize) -> (Vec<f64>, f64) {
    let next: Vec<f64> = mu
        .iter()
        .zip(load)
        .map(|(m, &k)| m - alpha * ((m - nu - 1.0).exp() - k as f64))
        .collect();
    let nu_next = update_nu(&next, num_users);
    (next, nu_next)
}

fn subgradient(mu: &[f64], nu: f64, load: &[usize]) -> Vec<f64> {
    mu.iter().zip(load).map(|(m, &k)| (m - nu - 1.0).exp() - k as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgradientTraceEntry {
    pub iteration: usize,
    pub dual_objective: f64,
    pub best_dual_objective: f64,
    pub step: f64,
}

#[derive(Debug, Clone)]
pub struct SubgradientResult {
    pub association: Association,
    /// The best dual point visited.
    pub dual: DualState,
    pub trace: Vec<SubgradientTraceEntry>,
}

impl SubgradientResult {
    /// Rows in the same layout as the coordinate-descent trace.
    pub fn dual_trace(&self) -> Vec<DualTraceEntry> {
        self.trace
            .iter()
            .map(|e| DualTraceEntry {
                iteration: e.iteration,
                updated_bs: None,
                dual_objective: e.dual_objective,
                primal_utility: None,
            })
            .collect()
    }
}

/// Runs `max_iters` synchronous subgradient updates from μ = 0, keeping the
/// best dual point, then recovers the association there.
pub fn subgradient_solve(a: &UtilityMatrix, config: &SubgradientConfig) -> Result<SubgradientResult> {
    config.validate()?;
    let k = a.num_users;
    let mut mu = vec![0.0; a.num_bs];
    let mut nu = update_nu(&mu, k);
    let mut g = dual_objective(a, &mu, nu, k);
    let mut best = (mu.clone(), nu, g);
    let mut trace = vec![SubgradientTraceEntry { iteration: 0, dual_objective: g, best_dual_objective: g, step: 0.0 }];

    let mut delta = match config.step_rule {
        StepRule::Adaptive { delta1, .. } => delta1,
        _ => 0.0,
    };
    for t in 1..=config.max_iters {
        let load = assign_by_prices(a, &mu).load;
        let s = subgradient(&mu, nu, &load);
        let norm2: f64 = s.iter().map(|x| x * x).sum();
        if norm2 == 0.0 {
            break;
        }
        let alpha = match config.step_rule {
            StepRule::Constant { alpha0 } => alpha0,
            StepRule::Diminishing { alpha0 } => alpha0 / (t as f64).sqrt(),
            StepRule::Adaptive { gamma, .. } => gamma * (g - (best.2 - delta)) / norm2,
        };
        let level = best.2 - delta;
        (mu, nu) = subgradient_step(&mu, nu, &load, alpha, k);
        g = dual_objective(a, &mu, nu, k);
        if let StepRule::Adaptive { rho, beta, delta: floor, .. } = config.step_rule {
            delta = if g <= level { rho * delta } else { (beta * delta).max(floor) };
        }
        if g < best.2 {
            best = (mu.clone(), nu, g);
        }
        trace.push(SubgradientTraceEntry { iteration: t, dual_objective: g, best_dual_objective: best.2, step: alpha });
    }

    let (mu, nu, g) = best;
    let association = recover_association(a, &mu, nu, &DcdOptions::default());
    let iteration = trace.len() - 1;
    Ok(SubgradientResult {
        association,
        dual: DualState { mu, nu, dual_objective: g, iteration },
        trace,
    })
}
