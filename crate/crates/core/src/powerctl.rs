//! Downlink PSD optimization under a fixed association.
//!
//! Maximizes f(p) = Σ_i ln R_i(p) with a diagonal-Hessian Newton step
//! `Δp_j = ∂f/∂p_j / |∂²f/∂p_j²|`, projected onto the box and accepted by
//! Armijo backtracking on the true objective.
//!
//! With `s_i` the SINR of user `i` at its serving BS `b`, interference-plus-noise
//! `I_i` and `r_i = ln(1 + s_i/Γ)`, the derivative terms are
//!
//! ```text
//! ∂f/∂p_b   self :  s / (r (Γ + s) p_b)
//! ∂f/∂p_j   cross: −(h_ij / I) · s / (r (Γ + s))
//! ∂²f/∂p_b² self : −(1/r² + 1/r) s² / ((Γ + s)² p_b²)
//! ∂²f/∂p_j² cross:  (h_ij / I)² · s (2 r Γ + s (r − 1)) / (r² (Γ + s)²)
//! ```
//!
//! `r` is a natural log here: ln(log_b x) and ln(ln x) differ by a constant,
//! so the derivatives do not depend on the base used to report rates.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::dcd::Association;
use crate::error::{Error, Result};
use crate::netmodel::{NetworkInstance, BPS_PER_MBPS};

/// Per-BS transmit PSD, mW/Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerVector(pub Vec<f64>);

impl PowerVector {
    pub fn max(inst: &NetworkInstance) -> Self {
        Self(inst.max_psd.clone())
    }

    pub fn is_feasible(&self, inst: &NetworkInstance) -> bool {
        self.0.len() == inst.num_bs
            && self.0.iter().zip(&inst.max_psd).all(|(p, m)| *p >= 0.0 && *p <= *m)
    }
}

impl Deref for PowerVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NewtonOptions {
    pub backtrack_shrink: f64,
    pub backtrack_slope: f64,
    pub max_outer_iters: usize,
    /// Tolerance on max_j |projected ∂f/∂p_j| · p̄_j.
    pub grad_tol: f64,
    /// Lower bound for BSs that serve at least one user, mW/Hz.
    pub min_psd_floor: f64,
    /// Stop when an accepted step improves f by less than this.
    pub objective_tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            backtrack_shrink: 0.5,
            backtrack_slope: 0.01,
            max_outer_iters: 100,
            grad_tol: 1e-6,
            min_psd_floor: 1e-12,
            objective_tol: 1e-10,
        }
    }
}

impl NewtonOptions {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| x > 0.0 && x < 1.0;
        if !unit(self.backtrack_shrink) || !unit(self.backtrack_slope) {
            return Err(Error::InvalidConfig("backtracking ratios must lie in (0, 1)".into()));
        }
        if !(self.grad_tol > 0.0) || !(self.min_psd_floor > 0.0) || !(self.objective_tol >= 0.0) {
            return Err(Error::InvalidConfig("Newton tolerances must be positive".into()));
        }
        Ok(())
    }
}

fn check_loaded(assoc: &Association, p: &[f64]) -> Result<()> {
    match assoc.load.iter().zip(p).position(|(&k, &pw)| k > 0 && pw <= 0.0) {
        Some(bs) => Err(Error::ZeroPowerLoadedBs { bs }),
        None => Ok(()),
    }
}

/// Σ_i ln R_i(p) with rates in Mbps; same value as
/// [`NetworkInstance::network_utility`].
pub fn power_objective(inst: &NetworkInstance, assoc: &Association, p: &[f64]) -> Result<f64> {
    check_loaded(assoc, p)?;
    Ok(assoc
        .bs_of
        .iter()
        .enumerate()
        .map(|(i, &j)| {
            let se = inst.spectral_efficiency(inst.sinr(i, j, p));
            (inst.bandwidth_hz / assoc.load[j] as f64 * se / BPS_PER_MBPS).ln()
        })
        .sum())
}

struct ServedLink {
    bs: usize,
    sinr: f64,
    interference: f64,
    r: f64,
}

fn served_links<'a>(
    inst: &'a NetworkInstance,
    assoc: &'a Association,
    p: &'a [f64],
) -> impl Iterator<Item = (usize, ServedLink)> + 'a {
    assoc.bs_of.iter().enumerate().map(move |(i, &bs)| {
        let interference = inst.interference(i, bs, p);
        let sinr = inst.gain(i, bs) * p[bs] / interference;
        let r = (sinr / inst.snr_gap).ln_1p();
        (i, ServedLink { bs, sinr, interference, r })
    })
}

/// ∂f/∂p_j for every BS.
pub fn power_gradient(inst: &NetworkInstance, assoc: &Association, p: &[f64]) -> Result<Vec<f64>> {
    check_loaded(assoc, p)?;
    let gap = inst.snr_gap;
    let mut grad = vec![0.0; inst.num_bs];
    for (i, link) in served_links(inst, assoc, p) {
        let c = link.sinr / (link.r * (gap + link.sinr));
        for (j, (g, h)) in grad.iter_mut().zip(inst.gain_row(i)).enumerate() {
            if j == link.bs {
                *g += c / p[j];
            } else {
                *g -= c * h / link.interference;
            }
        }
    }
    Ok(grad)
}

/// Diagonal of the Hessian, ∂²f/∂p_j².
pub fn power_hessian_diag(inst: &NetworkInstance, assoc: &Association, p: &[f64]) -> Result<Vec<f64>> {
    check_loaded(assoc, p)?;
    let gap = inst.snr_gap;
    let mut diag = vec![0.0; inst.num_bs];
    for (i, link) in served_links(inst, assoc, p) {
        let (s, r) = (link.sinr, link.r);
        let denom = (gap + s) * (gap + s);
        let own = -(1.0 / (r * r) + 1.0 / r) * s * s / denom;
        let cross = s * (2.0 * r * gap + s * (r - 1.0)) / (r * r * denom);
        for (j, (d, h)) in diag.iter_mut().zip(inst.gain_row(i)).enumerate() {
            if j == link.bs {
                *d += own / (p[j] * p[j]);
            } else {
                let q = h / link.interference;
                *d += q * q * cross;
            }
        }
    }
    Ok(diag)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonTraceEntry {
    pub iteration: usize,
    pub utility: f64,
    pub step: f64,
    pub max_projected_gradient: f64,
}

#[derive(Debug, Clone)]
pub struct NewtonResult {
    pub power: PowerVector,
    pub utility: f64,
    pub trace: Vec<NewtonTraceEntry>,
    pub converged: bool,
    /// Backtracking shrank the step below 1e−12 without satisfying Armijo.
    pub stalled: bool,
}

const MIN_STEP: f64 = 1e-12;
const HESSIAN_GUARD: f64 = 1e-18;

/// Projected diagonal-Newton ascent from `p0`.
pub fn newton_power_solve(
    inst: &NetworkInstance,
    assoc: &Association,
    p0: &[f64],
    options: &NewtonOptions,
) -> Result<NewtonResult> {
    options.validate()?;
    if p0.len() != inst.num_bs {
        return Err(Error::Dimension("power vector length".into()));
    }
    let lower: Vec<f64> = assoc
        .load
        .iter()
        .zip(&inst.max_psd)
        .map(|(&k, &m)| if k > 0 { options.min_psd_floor.min(m) } else { 0.0 })
        .collect();
    let clamp = |v: f64, j: usize| v.clamp(lower[j], inst.max_psd[j]);
    let mut p: Vec<f64> = p0.iter().enumerate().map(|(j, &v)| clamp(v, j)).collect();
    let mut f = power_objective(inst, assoc, &p)?;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut stalled = false;

    for iteration in 0..=options.max_outer_iters {
        let grad = power_gradient(inst, assoc, &p)?;
        let pg_norm = grad
            .iter()
            .enumerate()
            .map(|(j, &g)| {
                let pinned = (p[j] >= inst.max_psd[j] && g > 0.0) || (p[j] <= lower[j] && g < 0.0);
                if pinned { 0.0 } else { (g * inst.max_psd[j]).abs() }
            })
            .fold(0.0, f64::max);
        let last_step = trace.last().map_or(0.0, |e: &NewtonTraceEntry| e.step);
        trace.push(NewtonTraceEntry { iteration, utility: f, step: last_step, max_projected_gradient: pg_norm });
        if pg_norm < options.grad_tol {
            converged = true;
            break;
        }
        if iteration == options.max_outer_iters {
            break;
        }
        let hess = power_hessian_diag(inst, assoc, &p)?;
        let dir: Vec<f64> = grad
            .iter()
            .zip(&hess)
            .map(|(&g, &h)| if h.abs() < HESSIAN_GUARD { g } else { g / h.abs() })
            .collect();

        let mut alpha = 1.0;
        let accepted = loop {
            let cand: Vec<f64> = p.iter().zip(&dir).enumerate().map(|(j, (&v, &d))| clamp(v + alpha * d, j)).collect();
            let ascent: f64 = grad.iter().zip(cand.iter().zip(&p)).map(|(g, (c, v))| g * (c - v)).sum();
            let fc = power_objective(inst, assoc, &cand)?;
            if fc >= f + options.backtrack_slope * ascent {
                break Some((cand, fc));
            }
            alpha *= options.backtrack_shrink;
            if alpha < MIN_STEP {
                break None;
            }
        };
        let Some((cand, fc)) = accepted else {
            stalled = true;
            break;
        };
        let gain = fc - f;
        p = cand;
        f = fc;
        if let Some(e) = trace.last_mut() {
            e.step = alpha;
        }
        if gain < options.objective_tol {
            trace.push(NewtonTraceEntry { iteration: iteration + 1, utility: f, step: alpha, max_projected_gradient: f64::NAN });
            converged = true;
            break;
        }
    }
    Ok(NewtonResult { power: PowerVector(p), utility: f, trace, converged, stalled })
}
