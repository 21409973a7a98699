//! Hand-built instances.

use crate::error::Result;
use crate::netmodel::{NetworkConfig, NetworkInstance, Tier};

/// Two macro cells with two users each, no picos, no wrap-around: small enough
/// for both brute-force oracles.
pub fn tiny_scenario() -> NetworkConfig {
    NetworkConfig { num_cells: 2, picos_per_cell: 0, users_per_cell: 2, wraparound: false, ..NetworkConfig::default() }
}

/// The default 7-cell layout with 10 users per cell.
pub fn reduced_joint_scenario() -> NetworkConfig {
    NetworkConfig { users_per_cell: 10, ..NetworkConfig::default() }
}

/// Three macro cells sharing four picos, 35 users per cell, 4 BS antennas and
/// 2 user antennas.
pub fn mimo_scenario() -> NetworkConfig {
    NetworkConfig {
        num_cells: 3,
        picos_per_cell: 0,
        total_picos: Some(4),
        users_per_cell: 35,
        bs_antennas: 4,
        user_antennas: 2,
        ..NetworkConfig::default()
    }
}

/// Two BSs with equal budgets and unit noise. BS 0 has eight noise-limited
/// core users plus four cell-edge users; BS 1 has two core users. Max-SINR at
/// full power loads BS 0 with 12 of the 14 users.
pub fn load_imbalance_instance() -> Result<NetworkInstance> {
    let mut gains = vec![vec![100.0, 0.01]; 8];
    gains.extend(std::iter::repeat_n(vec![3.0, 2.0], 4));
    gains.extend(std::iter::repeat_n(vec![0.01, 100.0], 2));
    let k = gains.len();
    Ok(NetworkInstance::from_gains(&gains, vec![1.0, 1.0], vec![1.0; k], 10e6, 1.0)?
        .with_tiers(vec![Tier::Macro, Tier::Pico]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_sizes() {
        let t = tiny_scenario();
        assert_eq!((t.num_bs(), t.num_users()), (2, 4));
        t.validate().unwrap();
        let m = mimo_scenario();
        assert_eq!((m.num_bs(), m.num_users()), (7, 105));
        assert!(m.has_mimo());
        assert_eq!(reduced_joint_scenario().num_users(), 70);
    }
}
