//! Multi-antenna networks: log-det rates, per-cell WMMSE beamforming and the
//! two-stage scheme (SISO-surrogate association, then proportional-fair
//! scheduling with per-cell WMMSE over time slots).
//!
//! Inside this module channels are whitened by the receiver noise, so a user's
//! interference-plus-noise covariance is `I + Σ H̃ v vᴴ H̃ᴴ` with `H̃ = H/σ_i`.

mod schedule;
mod wmmse;

use nalgebra::{DMatrix, DVector};

pub use self::schedule::{
    maxsinr_wmmse_solve, run_stage_two, select_candidates, two_stage_solve, CandidateCount, SchedulerState,
    SlotRecord, StageTwoBudget, TwoStageOptions, TwoStageResult,
};
pub use self::wmmse::{wmmse_percell, WmmseOptions, WmmseOutcome};

use crate::error::{Error, Result};
use crate::netmodel::{NetworkInstance, UtilityMatrix};
use crate::C64;

/// Transmit vectors, at most one per user, each sent by the user's serving BS.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSet {
    /// Serving BS of every user.
    pub bs_of: Vec<usize>,
    /// `v[i]` has length `M_{bs_of[i]}`; `None` for users not scheduled.
    pub v: Vec<Option<DVector<C64>>>,
}

impl BeamformerSet {
    pub fn empty(bs_of: Vec<usize>) -> Self {
        let v = vec![None; bs_of.len()];
        Self { bs_of, v }
    }

    /// Σ_i ‖v_i‖² over users served by `j`.
    pub fn power_at(&self, j: usize) -> f64 {
        self.bs_of
            .iter()
            .zip(&self.v)
            .filter(|(&b, _)| b == j)
            .filter_map(|(_, v)| v.as_ref())
            .map(|v| v.norm_squared())
            .sum()
    }

    /// Per-BS budget check with absolute slack `tol`.
    pub fn is_feasible(&self, max_psd: &[f64], tol: f64) -> bool {
        (0..max_psd.len()).all(|j| self.power_at(j) <= max_psd[j] + tol)
    }

    /// Users with a nonzero beam.
    pub fn scheduled(&self) -> Vec<bool> {
        self.v.iter().map(|v| v.as_ref().is_some_and(|v| v.norm_squared() > 0.0)).collect()
    }

    /// Drops every beam of BS `j`.
    pub fn clear_bs(&mut self, j: usize) {
        for (b, v) in self.bs_of.iter().zip(self.v.iter_mut()) {
            if *b == j {
                *v = None;
            }
        }
    }
}

/// ln det of a Hermitian positive definite matrix via Cholesky.
pub(crate) fn log_det_hpd(m: DMatrix<C64>) -> Result<f64> {
    let chol = m.cholesky().ok_or_else(|| Error::Dimension("covariance is not positive definite".into()))?;
    Ok(2.0 * chol.l_dirty().diagonal().iter().map(|d| d.re.ln()).sum::<f64>())
}

/// Noise-whitened channel H_ij / σ_i.
pub(crate) fn whitened(inst: &NetworkInstance, i: usize, j: usize) -> Result<DMatrix<C64>> {
    let h = inst.channel(i, j).ok_or(Error::MissingChannels)?;
    Ok(h.unscale(inst.noise_psd[i].sqrt()))
}

/// `I + Σ_{i'} H̃_{i,b(i')} v_{i'} v_{i'}ᴴ H̃ᴴ` over every beam in `set` except
/// those of users for which `skip` is true.
pub(crate) fn covariance(
    inst: &NetworkInstance,
    i: usize,
    set: &BeamformerSet,
    skip: impl Fn(usize) -> bool,
) -> Result<DMatrix<C64>> {
    let n = inst.user_antennas[i];
    let mut c = DMatrix::<C64>::identity(n, n);
    for (other, v) in set.v.iter().enumerate() {
        let Some(v) = v else { continue };
        if skip(other) {
            continue;
        }
        let y = whitened(inst, i, set.bs_of[other])? * v;
        c += &y * y.adjoint();
    }
    Ok(c)
}

/// Rate of user `i` served by `j` under the beams in `set`, bits/s:
/// `W log2 det(I + H v vᴴ Hᴴ C⁻¹)` with C the interference-plus-noise
/// covariance.
pub fn rate_mimo(inst: &NetworkInstance, i: usize, j: usize, set: &BeamformerSet) -> Result<f64> {
    if inst.noise_psd[i] <= 0.0 {
        return Err(Error::InvalidConfig("noise PSD must be positive".into()));
    }
    if set.bs_of.get(i) != Some(&j) {
        return Err(Error::Dimension(format!("user {i} is not served by BS {j} in this beam set")));
    }
    let Some(v) = &set.v[i] else { return Ok(0.0) };
    let interference = covariance(inst, i, set, |other| other == i)?;
    let y = whitened(inst, i, j)? * v;
    let total = &interference + &y * y.adjoint();
    let nats = log_det_hpd(total)? - log_det_hpd(interference)?;
    Ok(inst.bandwidth_hz * nats.max(0.0) / std::f64::consts::LN_2)
}

/// Rates of every user under `set`, bits/s (zero for unscheduled users).
pub fn rates_mimo(inst: &NetworkInstance, set: &BeamformerSet) -> Result<Vec<f64>> {
    (0..inst.num_users).map(|i| rate_mimo(inst, i, set.bs_of[i], set)).collect()
}

/// SISO surrogate utilities a_ij = ln(M_j W log2(1 + SINR_ij/Γ)) from the
/// average gains.
pub fn siso_surrogate(inst: &NetworkInstance, p: &[f64]) -> UtilityMatrix {
    inst.utility_matrix(p, true)
}

/// Unit-norm dominant right singular vector of `h`.
pub(crate) fn matched_direction(h: &DMatrix<C64>) -> DVector<C64> {
    let gram = h.adjoint() * h;
    let eig = gram.symmetric_eigen();
    let (idx, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (k, &e)| if e > acc.1 { (k, e) } else { acc });
    let v = eig.eigenvectors.column(idx).into_owned();
    let norm = v.norm();
    v.unscale(norm)
}
