//! Versioned JSON export of network instances.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{NetworkInstance, Point, Tier};
use crate::error::{Error, Result};
use crate::C64;

pub const INSTANCE_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ChannelDoc {
    rows: usize,
    cols: usize,
    /// Column-major (re, im) pairs.
    entries: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct InstanceDoc {
    format_version: u32,
    num_users: usize,
    num_bs: usize,
    bandwidth_hz: f64,
    snr_gap: f64,
    /// Linear power gains, one row per user.
    gain: Vec<Vec<f64>>,
    max_psd_mw_hz: Vec<f64>,
    noise_psd_mw_hz: Vec<f64>,
    tiers: Vec<Tier>,
    bs_positions_km: Vec<Point>,
    user_positions_km: Vec<Point>,
    bs_antennas: Vec<usize>,
    user_antennas: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    channels: Option<Vec<ChannelDoc>>,
}

impl NetworkInstance {
    pub fn to_json(&self) -> Result<String> {
        let doc = InstanceDoc {
            format_version: INSTANCE_FORMAT_VERSION,
            num_users: self.num_users,
            num_bs: self.num_bs,
            bandwidth_hz: self.bandwidth_hz,
            snr_gap: self.snr_gap,
            gain: self.gain.chunks(self.num_bs).map(<[f64]>::to_vec).collect(),
            max_psd_mw_hz: self.max_psd.clone(),
            noise_psd_mw_hz: self.noise_psd.clone(),
            tiers: self.tiers.clone(),
            bs_positions_km: self.bs_positions.clone(),
            user_positions_km: self.user_positions.clone(),
            bs_antennas: self.bs_antennas.clone(),
            user_antennas: self.user_antennas.clone(),
            channels: self.channels.as_ref().map(|hs| {
                hs.iter()
                    .map(|h| ChannelDoc {
                        rows: h.nrows(),
                        cols: h.ncols(),
                        entries: h.iter().map(|c| [c.re, c.im]).collect(),
                    })
                    .collect()
            }),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: InstanceDoc = serde_json::from_str(text)?;
        if doc.format_version != INSTANCE_FORMAT_VERSION {
            return Err(Error::FormatVersion(doc.format_version));
        }
        let channels = doc.channels.map(|hs| {
            hs.into_iter()
                .map(|c| {
                    DMatrix::from_iterator(
                        c.rows,
                        c.cols,
                        c.entries.into_iter().map(|[re, im]| C64::new(re, im)),
                    )
                })
                .collect()
        });
        let inst = Self {
            num_users: doc.num_users,
            num_bs: doc.num_bs,
            gain: doc.gain.into_iter().flatten().collect(),
            max_psd: doc.max_psd_mw_hz,
            noise_psd: doc.noise_psd_mw_hz,
            bandwidth_hz: doc.bandwidth_hz,
            snr_gap: doc.snr_gap,
            tiers: doc.tiers,
            bs_positions: doc.bs_positions_km,
            user_positions: doc.user_positions_km,
            bs_antennas: doc.bs_antennas,
            user_antennas: doc.user_antennas,
            channels,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
