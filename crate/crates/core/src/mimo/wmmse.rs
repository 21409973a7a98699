use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{covariance, log_det_hpd, matched_direction, whitened, BeamformerSet};
use crate::error::{Error, Result};
use crate::netmodel::{NetworkInstance, BPS_PER_MBPS};
use crate::C64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WmmseOptions {
    pub max_iters: usize,
    /// Stop once the weighted sum rate changes by less than this, relatively.
    pub tol: f64,
}

impl Default for WmmseOptions {
    fn default() -> Self {
        Self { max_iters: 100, tol: 1e-6 }
    }
}

impl WmmseOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || !(self.tol > 0.0) {
            return Err(Error::InvalidConfig("WMMSE needs max_iters >= 1 and tol > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct WmmseOutcome {
    /// One beam per candidate, in candidate order.
    pub beams: Vec<DVector<C64>>,
    /// Candidate rates in bits/s.
    pub rates: Vec<f64>,
    /// Σ ω_i R_i (R in Mbps) after initialization and after every iteration.
    pub wsr_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl WmmseOutcome {
    /// Largest decrease between consecutive weighted-sum-rate values, relative
    /// to the magnitude of the earlier value.
    pub fn worst_decrease(&self) -> f64 {
        self.wsr_trace
            .windows(2)
            .map(|w| (w[0] - w[1]) / w[0].abs().max(1.0))
            .fold(0.0, f64::max)
    }
}

struct Cell<'a> {
    /// Whitened channels from the cell's BS to each candidate.
    h: Vec<DMatrix<C64>>,
    /// Out-of-cell interference plus noise (whitened), fixed during the solve.
    q: Vec<DMatrix<C64>>,
    omega: &'a [f64],
    bandwidth_hz: f64,
}

impl Cell<'_> {
    /// In-cell received covariance at candidate `c`, excluding candidate `skip`.
    fn received(&self, c: usize, beams: &[DVector<C64>], skip: Option<usize>) -> DMatrix<C64> {
        let mut m = self.q[c].clone();
        for (k, v) in beams.iter().enumerate() {
            if Some(k) != skip {
                let y = &self.h[c] * v;
                m += &y * y.adjoint();
            }
        }
        m
    }

    fn rates(&self, beams: &[DVector<C64>]) -> Result<Vec<f64>> {
        (0..beams.len())
            .map(|c| {
                if beams[c].norm_squared() == 0.0 {
                    return Ok(0.0);
                }
                let total = self.received(c, beams, None);
                let interference = self.received(c, beams, Some(c));
                let nats = log_det_hpd(total)? - log_det_hpd(interference)?;
                Ok(self.bandwidth_hz * nats.max(0.0) / std::f64::consts::LN_2)
            })
            .collect()
    }

    fn wsr(&self, rates: &[f64]) -> f64 {
        rates.iter().zip(self.omega).map(|(r, w)| w * r / BPS_PER_MBPS).sum()
    }
}

/// Σ_m φ_m/(d_m + λ)², the total transmit power at multiplier λ.
fn power_at(phi: &[f64], d: &[f64], lambda: f64) -> f64 {
    phi.iter().zip(d).map(|(p, e)| p / ((e + lambda) * (e + lambda))).sum()
}

/// Smallest λ ≥ 0 with power_at(λ) ≤ budget.
fn multiplier(phi: &[f64], d: &[f64], budget: f64) -> f64 {
    let d_max = d.iter().copied().fold(0.0, f64::max);
    let singular = d.iter().any(|&e| e <= 1e-12 * d_max);
    if !singular && power_at(phi, d, 0.0) <= budget {
        return 0.0;
    }
    let total: f64 = phi.iter().sum();
    let (mut lo, mut hi) = (0.0, (total / budget).sqrt());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if power_at(phi, d, mid) <= budget {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    hi
}

/// WMMSE for the candidates of BS `bs`, with every other BS's beams in
/// `background` held fixed as interference.
///
/// Beams start at the matched direction with the budget split equally; each
/// iteration updates the MMSE receivers, the MSE weights and the transmit
/// beams (per-BS multiplier by bisection).
pub fn wmmse_percell(
    inst: &NetworkInstance,
    bs: usize,
    candidates: &[usize],
    omega: &[f64],
    max_psd: f64,
    background: &BeamformerSet,
    options: &WmmseOptions,
) -> Result<WmmseOutcome> {
    options.validate()?;
    if omega.len() != candidates.len() {
        return Err(Error::Dimension("one weight per candidate".into()));
    }
    if omega.iter().any(|w| !(*w > 0.0 && w.is_finite())) || !(max_psd > 0.0) {
        return Err(Error::InvalidConfig("weights and power budget must be positive".into()));
    }
    if candidates.iter().any(|&i| background.bs_of[i] != bs) {
        return Err(Error::Dimension(format!("candidate not served by BS {bs}")));
    }
    if candidates.is_empty() {
        return Ok(WmmseOutcome { beams: vec![], rates: vec![], wsr_trace: vec![0.0], iterations: 0, converged: true });
    }
    let h = candidates.iter().map(|&i| whitened(inst, i, bs)).collect::<Result<Vec<_>>>()?;
    let q = candidates
        .iter()
        .map(|&i| covariance(inst, i, background, |other| background.bs_of[other] == bs))
        .collect::<Result<Vec<_>>>()?;
    let cell = Cell { h, q, omega, bandwidth_hz: inst.bandwidth_hz };
    // the solution is invariant to a common scale of ω; normalizing makes that exact
    let w_max = omega.iter().copied().fold(0.0, f64::max);
    let wn: Vec<f64> = omega.iter().map(|w| w / w_max).collect();

    let share = (max_psd / candidates.len() as f64).sqrt();
    let mut beams: Vec<DVector<C64>> = cell.h.iter().map(|h| matched_direction(h).scale(share)).collect();
    let mut rates = cell.rates(&beams)?;
    let mut wsr_trace = vec![cell.wsr(&rates)];
    let m = inst.bs_antennas[bs];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < options.max_iters {
        iterations += 1;
        let mut a = DMatrix::<C64>::zeros(m, m);
        let mut b = Vec::with_capacity(beams.len());
        for c in 0..beams.len() {
            let y = &cell.h[c] * &beams[c];
            let interference = cell.received(c, &beams, Some(c));
            let chol = interference
                .cholesky()
                .ok_or_else(|| Error::Dimension("covariance is not positive definite".into()))?;
            let ciy = chol.solve(&y);
            let s = y.dotc(&ciy).re.max(0.0);
            // MMSE receiver u = J⁻¹y = C⁻¹y/(1+s), MSE e = 1/(1+s)
            let u = ciy.unscale(1.0 + s);
            let weight = 1.0 + s;
            let hu = cell.h[c].adjoint() * &u;
            a += (&hu * hu.adjoint()).scale(wn[c] * weight);
            b.push(hu.scale(wn[c] * weight));
        }
        let eig = a.symmetric_eigen();
        let d: Vec<f64> = eig.eigenvalues.iter().map(|e| e.max(0.0)).collect();
        let ub: Vec<DVector<C64>> = b.iter().map(|bc| eig.eigenvectors.adjoint() * bc).collect();
        let phi: Vec<f64> = (0..m).map(|k| ub.iter().map(|x| x[k].norm_sqr()).sum()).collect();
        let lambda = multiplier(&phi, &d, max_psd);
        beams = ub
            .iter()
            .map(|x| {
                let scaled = DVector::from_fn(m, |k, _| {
                    let den = d[k] + lambda;
                    if den > 0.0 { x[k].unscale(den) } else { C64::new(0.0, 0.0) }
                });
                &eig.eigenvectors * scaled
            })
            .collect();
        rates = cell.rates(&beams)?;
        let wsr = cell.wsr(&rates);
        let prev = *wsr_trace.last().expect("trace starts non-empty");
        wsr_trace.push(wsr);
        if (wsr - prev).abs() <= options.tol * prev.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    Ok(WmmseOutcome { beams, rates, wsr_trace, iterations, converged })
}
