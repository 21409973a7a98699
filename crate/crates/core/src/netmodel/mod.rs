//! Network model: seeded HetNet drops, SINR and rate evaluation, and the
//! per-pair utility parameters that drive the association solvers.

mod config;
mod io;
mod topology;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

pub use self::config::{db_to_linear, dbm_to_mw, NetworkConfig};
pub use self::io::INSTANCE_FORMAT_VERSION;
pub use self::topology::{spiral_axial, HexLayout, Point};
use crate::dcd::Association;
use crate::error::{Error, Result};
use crate::C64;

/// Rates are reported in bits/s; utilities use natural logs of Mbps.
pub const BPS_PER_MBPS: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Macro,
    Pico,
}

/// An immutable physical scenario.
///
/// `gain` is stored row-major (`users x bss`) in linear units and already
/// includes path loss, shadowing and antenna gain.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkInstance {
    pub num_users: usize,
    pub num_bs: usize,
    pub gain: Vec<f64>,
    /// Per-BS PSD limit, mW/Hz.
    pub max_psd: Vec<f64>,
    /// Per-user noise PSD σ², mW/Hz.
    pub noise_psd: Vec<f64>,
    pub bandwidth_hz: f64,
    pub snr_gap: f64,
    pub tiers: Vec<Tier>,
    pub bs_positions: Vec<Point>,
    pub user_positions: Vec<Point>,
    pub bs_antennas: Vec<usize>,
    pub user_antennas: Vec<usize>,
    /// `N_i x M_j` channel matrices, row-major over (user, bs).
    pub channels: Option<Vec<DMatrix<C64>>>,
}

impl NetworkInstance {
    /// Builds a single-antenna instance directly from a gain table.
    ///
    /// Positions are left at the origin and every BS is tagged as a macro.
    pub fn from_gains(
        gains: &[Vec<f64>],
        max_psd: Vec<f64>,
        noise_psd: Vec<f64>,
        bandwidth_hz: f64,
        snr_gap: f64,
    ) -> Result<Self> {
        let num_users = gains.len();
        let num_bs = max_psd.len();
        if gains.iter().any(|row| row.len() != num_bs) || noise_psd.len() != num_users {
            return Err(Error::Dimension("gain table does not match BS/user counts".into()));
        }
        let inst = Self {
            num_users,
            num_bs,
            gain: gains.iter().flatten().copied().collect(),
            max_psd,
            noise_psd,
            bandwidth_hz,
            snr_gap,
            tiers: vec![Tier::Macro; num_bs],
            bs_positions: vec![Point::default(); num_bs],
            user_positions: vec![Point::default(); num_users],
            bs_antennas: vec![1; num_bs],
            user_antennas: vec![1; num_users],
            channels: None,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn with_tiers(mut self, tiers: Vec<Tier>) -> Self {
        assert_eq!(tiers.len(), self.num_bs);
        self.tiers = tiers;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let (k, l) = (self.num_users, self.num_bs);
        if k == 0 || l == 0 {
            return Err(Error::Dimension("instance needs at least one user and one BS".into()));
        }
        let lens = [
            (self.gain.len(), k * l, "gain"),
            (self.max_psd.len(), l, "max_psd"),
            (self.noise_psd.len(), k, "noise_psd"),
            (self.tiers.len(), l, "tiers"),
            (self.bs_positions.len(), l, "bs_positions"),
            (self.user_positions.len(), k, "user_positions"),
            (self.bs_antennas.len(), l, "bs_antennas"),
            (self.user_antennas.len(), k, "user_antennas"),
        ];
        for (got, want, name) in lens {
            if got != want {
                return Err(Error::Dimension(format!("{name}: expected {want} entries, got {got}")));
            }
        }
        let positive = |v: &[f64]| v.iter().all(|x| *x > 0.0 && x.is_finite());
        if !positive(&self.gain) || !positive(&self.max_psd) || !positive(&self.noise_psd) {
            return Err(Error::InvalidConfig("gains, PSD limits and noise must be positive".into()));
        }
        if !(self.bandwidth_hz > 0.0) || !(self.snr_gap >= 1.0) {
            return Err(Error::InvalidConfig("bandwidth must be positive and snr_gap >= 1".into()));
        }
        if let Some(h) = &self.channels {
            if h.len() != k * l {
                return Err(Error::Dimension("channel table size".into()));
            }
            for i in 0..k {
                for j in 0..l {
                    let m = &h[i * l + j];
                    if m.nrows() != self.user_antennas[i] || m.ncols() != self.bs_antennas[j] {
                        return Err(Error::Dimension(format!("channel ({i},{j}) shape")));
                    }
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn gain(&self, i: usize, j: usize) -> f64 {
        self.gain[i * self.num_bs + j]
    }

    pub fn gain_row(&self, i: usize) -> &[f64] {
        &self.gain[i * self.num_bs..(i + 1) * self.num_bs]
    }

    pub fn channel(&self, i: usize, j: usize) -> Option<&DMatrix<C64>> {
        self.channels.as_ref().map(|h| &h[i * self.num_bs + j])
    }

    pub fn is_pico(&self, j: usize) -> bool {
        self.tiers[j] == Tier::Pico
    }

    /// Received interference plus noise at user `i` when served by `j`.
    #[inline]
    pub fn interference(&self, i: usize, j: usize, p: &[f64]) -> f64 {
        let row = self.gain_row(i);
        let mut acc = self.noise_psd[i];
        for (jj, (g, pw)) in row.iter().zip(p).enumerate() {
            if jj != j {
                acc += g * pw;
            }
        }
        acc
    }

    /// SINR of user `i` if served by BS `j` at PSD vector `p`.
    #[inline]
    pub fn sinr(&self, i: usize, j: usize, p: &[f64]) -> f64 {
        self.gain(i, j) * p[j] / self.interference(i, j, p)
    }

    /// Spectral efficiency log2(1 + SINR/Γ), bits/s/Hz.
    #[inline]
    pub fn spectral_efficiency(&self, sinr: f64) -> f64 {
        spectral_efficiency(sinr, self.snr_gap)
    }

    /// Rate of user `i` on BS `j` shared round-robin with `k_j` users, bits/s.
    pub fn rate_siso(&self, i: usize, j: usize, p: &[f64], k_j: usize) -> f64 {
        assert!(k_j >= 1, "k_j must be at least 1");
        self.bandwidth_hz / k_j as f64 * self.spectral_efficiency(self.sinr(i, j, p))
    }

    /// Utility parameters a_ij = ln(c_j W log2(1 + SINR_ij/Γ)) with the rate in
    /// Mbps; `c_j = M_j` when `antenna_scaling` is set, else 1.
    pub fn utility_matrix(&self, p: &[f64], antenna_scaling: bool) -> UtilityMatrix {
        let (k, l) = (self.num_users, self.num_bs);
        let mut values = Vec::with_capacity(k * l);
        // interference excluding j = noise + prefix[j] + suffix[j + 1]
        let mut suffix = vec![0.0; l + 1];
        for i in 0..k {
            let row = self.gain_row(i);
            for j in (0..l).rev() {
                suffix[j] = suffix[j + 1] + row[j] * p[j];
            }
            let mut prefix = 0.0;
            for j in 0..l {
                let c = if antenna_scaling { self.bs_antennas[j] as f64 } else { 1.0 };
                let interference = self.noise_psd[i] + prefix + suffix[j + 1];
                let se = self.spectral_efficiency(row[j] * p[j] / interference);
                values.push((c * self.bandwidth_hz * se / BPS_PER_MBPS).ln());
                prefix += row[j] * p[j];
            }
        }
        UtilityMatrix { num_users: k, num_bs: l, values }
    }

    /// Σ_i ln(rate_i in Mbps) for an association at PSD vector `p`.
    pub fn network_utility(&self, assoc: &Association, p: &[f64]) -> f64 {
        assoc
            .bs_of
            .iter()
            .enumerate()
            .map(|(i, &j)| {
                let r = self.rate_siso(i, j, p, assoc.load[j]) / BPS_PER_MBPS;
                r.ln()
            })
            .sum()
    }

    pub fn rate_report(&self, assoc: &Association, p: &[f64]) -> RateReport {
        let rates: Vec<f64> = assoc
            .bs_of
            .iter()
            .enumerate()
            .map(|(i, &j)| self.rate_siso(i, j, p, assoc.load[j]))
            .collect();
        RateReport::from_rates(rates, assoc, &self.tiers)
    }

    /// Per-BS maximum PSD vector.
    pub fn full_power(&self) -> Vec<f64> {
        self.max_psd.clone()
    }
}

/// log2(1 + sinr/gap). The only place the Shannon log base is chosen.
#[inline]
pub fn spectral_efficiency(sinr: f64, gap: f64) -> f64 {
    (sinr / gap).ln_1p() / std::f64::consts::LN_2
}

/// Distance-dependent attenuation in dB for `d_km > 0`.
pub fn pathloss_db(d_km: f64) -> f64 {
    debug_assert!(d_km > 0.0, "path loss needs a positive distance");
    128.1 + 37.6 * d_km.log10()
}

/// Utility parameters `a[i][j]`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityMatrix {
    pub num_users: usize,
    pub num_bs: usize,
    pub values: Vec<f64>,
}

impl UtilityMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let num_users = rows.len();
        let num_bs = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == num_bs), "ragged utility rows");
        Self { num_users, num_bs, values: rows.iter().flatten().copied().collect() }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.num_bs + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.num_bs..(i + 1) * self.num_bs]
    }

    /// Σ a_ij x_ij − Σ k_j ln k_j.
    pub fn objective(&self, assoc: &Association) -> f64 {
        let direct: f64 = assoc.bs_of.iter().enumerate().map(|(i, &j)| self.get(i, j)).sum();
        direct - assoc.load.iter().map(|&k| xlogx(k as f64)).sum::<f64>()
    }

    pub fn shifted(&self, c: f64) -> Self {
        Self { values: self.values.iter().map(|v| v + c).collect(), ..self.clone() }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// x ln x with 0 ln 0 = 0.
#[inline]
pub fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// Per-user rates plus the load statistics derived from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    /// bits/s
    pub rates: Vec<f64>,
    /// Σ ln(rate in Mbps)
    pub utility: f64,
    pub load: Vec<usize>,
    pub pico_user_fraction: f64,
    /// Sorted rates in Mbps.
    pub cdf_points: Vec<f64>,
}

impl RateReport {
    pub fn from_rates(rates: Vec<f64>, assoc: &Association, tiers: &[Tier]) -> Self {
        let utility = rates.iter().map(|r| (r / BPS_PER_MBPS).ln()).sum();
        let pico = assoc.bs_of.iter().filter(|&&j| tiers[j] == Tier::Pico).count();
        let mut cdf_points: Vec<f64> = rates.iter().map(|r| r / BPS_PER_MBPS).collect();
        cdf_points.sort_by(f64::total_cmp);
        Self {
            utility,
            load: assoc.load.clone(),
            pico_user_fraction: pico as f64 / rates.len().max(1) as f64,
            cdf_points,
            rates,
        }
    }

    pub fn macro_user_fraction(&self) -> f64 {
        1.0 - self.pico_user_fraction
    }
}

/// Generates a seeded HetNet drop.
pub fn gen_topology(cfg: &NetworkConfig) -> Result<NetworkInstance> {
    cfg.validate()?;
    let layout = HexLayout::new(cfg.num_cells, cfg.inter_site_distance_km, cfg.wraparound)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut bs_positions = Vec::with_capacity(cfg.num_bs());
    let mut tiers = Vec::with_capacity(cfg.num_bs());
    let mut max_psd = Vec::with_capacity(cfg.num_bs());
    for &c in layout.centers() {
        for _ in 0..cfg.macros_per_cell {
            bs_positions.push(c);
            tiers.push(Tier::Macro);
            max_psd.push(dbm_to_mw(cfg.macro_max_psd_dbm_hz));
        }
    }
    // picos dealt round-robin over cells, evenly spaced in azimuth starting at 30°
    let num_picos = cfg.num_picos();
    let per_cell: Vec<usize> = (0..cfg.num_cells)
        .map(|c| num_picos / cfg.num_cells + usize::from(c < num_picos % cfg.num_cells))
        .collect();
    let pico_radius = 2.0 / 3.0 * layout.cell_radius();
    for (c, &n) in per_cell.iter().enumerate() {
        for s in 0..n {
            let az = 30.0 + 360.0 * s as f64 / n as f64;
            bs_positions.push(layout.centers()[c] + Point::polar(pico_radius, az));
            tiers.push(Tier::Pico);
            max_psd.push(dbm_to_mw(cfg.pico_max_psd_dbm_hz));
        }
    }

    let half = layout.isd() / 2.0;
    let radius = layout.cell_radius();
    let mut user_positions = Vec::with_capacity(cfg.num_users());
    for &c in layout.centers() {
        for _ in 0..cfg.users_per_cell {
            let pos = loop {
                let off = Point::new(rng.random_range(-half..half), rng.random_range(-radius..radius));
                if !layout.in_cell(off) {
                    continue;
                }
                let pos = c + off;
                if bs_positions
                    .iter()
                    .all(|&b| layout.distance(pos, b) >= cfg.min_distance_km)
                {
                    break pos;
                }
            };
            user_positions.push(pos);
        }
    }

    let (k, l) = (user_positions.len(), bs_positions.len());
    let shadow = Normal::new(0.0, cfg.shadowing_sigma_db)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut gain = Vec::with_capacity(k * l);
    for &u in &user_positions {
        for &b in &bs_positions {
            let d = layout.distance(u, b);
            let x: f64 = shadow.sample(&mut rng);
            gain.push(db_to_linear(cfg.antenna_gain_dbi - pathloss_db(d) - x));
        }
    }

    let bs_antennas = vec![cfg.bs_antennas; l];
    let user_antennas = vec![cfg.user_antennas; k];
    let mut inst = NetworkInstance {
        num_users: k,
        num_bs: l,
        gain,
        max_psd,
        noise_psd: vec![dbm_to_mw(cfg.noise_psd_dbm_hz); k],
        bandwidth_hz: cfg.bandwidth_hz,
        snr_gap: cfg.snr_gap,
        tiers,
        bs_positions,
        user_positions,
        bs_antennas,
        user_antennas,
        channels: None,
    };
    if cfg.has_mimo() {
        inst.channels = Some(draw_mimo_channels(&inst, &mut rng));
    }
    inst.validate()?;
    Ok(inst)
}

/// Rayleigh fast fading: i.i.d. CN(0, gain_ij) entries for every (user, BS) pair.
pub fn draw_mimo_channels<R: Rng + ?Sized>(inst: &NetworkInstance, rng: &mut R) -> Vec<DMatrix<C64>> {
    let mut out = Vec::with_capacity(inst.num_users * inst.num_bs);
    for i in 0..inst.num_users {
        for j in 0..inst.num_bs {
            let scale = (inst.gain(i, j) / 2.0).sqrt();
            let (n, m) = (inst.user_antennas[i], inst.bs_antennas[j]);
            out.push(DMatrix::from_fn(n, m, |_, _| {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                C64::new(re * scale, im * scale)
            }));
        }
    }
    out
}
