//! Brute-force oracles for tiny instances.

use rayon::prelude::*;

use crate::dcd::Association;
use crate::error::{Error, Result};
use crate::netmodel::{xlogx, NetworkInstance, UtilityMatrix};
use crate::powerctl::{newton_power_solve, NewtonOptions, PowerVector};

/// Largest L^K the exhaustive oracle will enumerate.
pub const EXHAUSTIVE_LIMIT: u64 = 1_000_000;

pub const JOINT_MAX_BS: usize = 3;
pub const JOINT_MAX_USERS: usize = 6;
pub const JOINT_MAX_GRID: usize = 20;

fn enumeration_size(num_bs: usize, num_users: usize) -> Option<u64> {
    (num_bs as u64).checked_pow(num_users as u32)
}

/// Visits every assignment in lexicographic order (user 0 most significant).
fn for_each_assignment(num_users: usize, num_bs: usize, mut f: impl FnMut(&[usize])) {
    let mut bs_of = vec![0; num_users];
    loop {
        f(&bs_of);
        let mut i = num_users;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            bs_of[i] += 1;
            if bs_of[i] < num_bs {
                break;
            }
            bs_of[i] = 0;
        }
    }
}

/// Optimum of Σ a_ij x_ij − Σ k_j ln k_j over all assignments; ties go to the
/// lexicographically first assignment.
pub fn exhaustive_oracle(a: &UtilityMatrix) -> Result<(f64, Association)> {
    let (k, l) = (a.num_users, a.num_bs);
    if l == 0 || k == 0 {
        return Err(Error::Dimension("empty utility matrix".into()));
    }
    match enumeration_size(l, k) {
        Some(n) if n <= EXHAUSTIVE_LIMIT => {}
        _ => return Err(Error::OracleGuard(format!("{l}^{k} assignments exceed {EXHAUSTIVE_LIMIT}"))),
    }
    let mut best = f64::NEG_INFINITY;
    let mut best_assoc = vec![0; k];
    let mut load = vec![0usize; l];
    for_each_assignment(k, l, |bs_of| {
        load.iter_mut().for_each(|x| *x = 0);
        let mut value = 0.0;
        for (i, &j) in bs_of.iter().enumerate() {
            value += a.get(i, j);
            load[j] += 1;
        }
        value -= load.iter().map(|&n| xlogx(n as f64)).sum::<f64>();
        if value > best {
            best = value;
            best_assoc.copy_from_slice(bs_of);
        }
    });
    Ok((best, Association::from_bs_of(best_assoc, l)))
}

/// Log-spaced grid from 1e-3·p̄ to p̄.
fn power_grid(max_psd: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![max_psd];
    }
    (0..points)
        .map(|s| max_psd * 10f64.powf(-3.0 * (1.0 - s as f64 / (points - 1) as f64)))
        .collect()
}

/// Joint optimum over associations × a per-BS power grid. For every association
/// the best grid point is then polished by Newton, and the best polished pair
/// is returned.
pub fn joint_brute_oracle(
    inst: &NetworkInstance,
    power_grid_points: usize,
    newton_options: &NewtonOptions,
) -> Result<(f64, Association, PowerVector)> {
    let (k, l) = (inst.num_users, inst.num_bs);
    if l == 0 || l > JOINT_MAX_BS || k == 0 || k > JOINT_MAX_USERS {
        return Err(Error::OracleGuard(format!("joint oracle needs L <= {JOINT_MAX_BS}, K <= {JOINT_MAX_USERS}")));
    }
    if power_grid_points == 0 || power_grid_points > JOINT_MAX_GRID {
        return Err(Error::OracleGuard(format!("power grid must have 1..={JOINT_MAX_GRID} points")));
    }
    let grids: Vec<Vec<f64>> = inst.max_psd.iter().map(|&m| power_grid(m, power_grid_points)).collect();
    let mut powers = Vec::new();
    for_each_assignment(l, power_grid_points, |idx| {
        powers.push(idx.iter().enumerate().map(|(j, &s)| grids[j][s]).collect::<Vec<f64>>());
    });
    let mut assocs = Vec::new();
    for_each_assignment(k, l, |bs_of| assocs.push(Association::from_bs_of(bs_of.to_vec(), l)));

    let polished: Vec<Result<(f64, Association, PowerVector)>> = assocs
        .into_par_iter()
        .map(|assoc| {
            let (p0, _) = powers
                .iter()
                .map(|p| (p, inst.network_utility(&assoc, p)))
                .fold((&powers[0], f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
            let res = newton_power_solve(inst, &assoc, p0, newton_options)?;
            Ok((res.utility, assoc, res.power))
        })
        .collect();
    let mut best: Option<(f64, Association, PowerVector)> = None;
    for r in polished {
        let r = r?;
        if best.as_ref().is_none_or(|b| r.0 > b.0) {
            best = Some(r);
        }
    }
    Ok(best.expect("at least one association"))
}
