use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scenario parameters for a seeded HetNet drop.
///
/// Power quantities are given in dB units here and converted to linear
/// mW/Hz once, when the instance is generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub num_cells: usize,
    pub macros_per_cell: usize,
    pub picos_per_cell: usize,
    /// Overrides `picos_per_cell * num_cells`; picos are then dealt to cells
    /// round-robin (e.g. 4 picos over 3 cells).
    pub total_picos: Option<usize>,
    pub users_per_cell: usize,
    pub inter_site_distance_km: f64,
    pub bandwidth_hz: f64,
    /// Linear SNR gap, Γ ≥ 1.
    pub snr_gap: f64,
    pub noise_psd_dbm_hz: f64,
    pub macro_max_psd_dbm_hz: f64,
    pub pico_max_psd_dbm_hz: f64,
    pub antenna_gain_dbi: f64,
    pub shadowing_sigma_db: f64,
    pub wraparound: bool,
    pub seed: u64,
    pub bs_antennas: usize,
    pub user_antennas: usize,
    /// Users closer than this to any BS are re-dropped.
    pub min_distance_km: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            num_cells: 7,
            macros_per_cell: 1,
            picos_per_cell: 3,
            total_picos: None,
            users_per_cell: 30,
            inter_site_distance_km: 0.5,
            bandwidth_hz: 10e6,
            snr_gap: 1.0,
            noise_psd_dbm_hz: -169.0,
            macro_max_psd_dbm_hz: -27.0,
            pico_max_psd_dbm_hz: -47.0,
            antenna_gain_dbi: 15.0,
            shadowing_sigma_db: 8.0,
            wraparound: true,
            seed: 0,
            bs_antennas: 1,
            user_antennas: 1,
            min_distance_km: 0.01,
        }
    }
}

impl NetworkConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn num_picos(&self) -> usize {
        self.total_picos
            .unwrap_or(self.picos_per_cell * self.num_cells)
    }

    pub fn num_bs(&self) -> usize {
        self.num_cells * self.macros_per_cell + self.num_picos()
    }

    pub fn num_users(&self) -> usize {
        self.num_cells * self.users_per_cell
    }

    /// Whether generation also draws per-pair MIMO channel matrices.
    pub fn has_mimo(&self) -> bool {
        self.bs_antennas * self.user_antennas > 1
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.num_cells == 0 || self.macros_per_cell == 0 || self.users_per_cell == 0 {
            return bad("cell, macro and user counts must be at least 1");
        }
        if self.bs_antennas == 0 || self.user_antennas == 0 {
            return bad("antenna counts must be at least 1");
        }
        if !(self.inter_site_distance_km > 0.0) {
            return bad("inter_site_distance_km must be positive");
        }
        if !(self.bandwidth_hz > 0.0) {
            return bad("bandwidth_hz must be positive");
        }
        if !(self.snr_gap >= 1.0) {
            return bad("snr_gap must be a linear ratio >= 1");
        }
        if !(self.shadowing_sigma_db >= 0.0) {
            return bad("shadowing_sigma_db must be non-negative");
        }
        if !(self.min_distance_km > 0.0) || self.min_distance_km >= self.inter_site_distance_km / 4.0 {
            return bad("min_distance_km must be positive and well inside a cell");
        }
        let finite = [
            self.noise_psd_dbm_hz,
            self.macro_max_psd_dbm_hz,
            self.pico_max_psd_dbm_hz,
            self.antenna_gain_dbi,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("power levels must be finite");
        }
        Ok(())
    }
}

/// dBm/Hz to mW/Hz.
pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}
