//! Rotation-number estimation and energy scans.
//!
//! The rotation number is the limit of `(theta(x_n) - Xi) / x_n`. Finite
//! horizons report the quotient at `n_steps` lattice points together with a
//! doubling-based error estimate: the difference against the quotient at
//! half the horizon. The estimate is a heuristic — the underlying ergodic
//! limit comes with no rate — but it tracks the observed convergence well.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::apmodels::{density, GeneralizedPotential};
use crate::error::{Error, Result};
use crate::prufer::{self, IntegratorConfig};

/// A finite-horizon rotation-number estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotationEstimate {
    pub energy: f64,
    /// Angle advance per unit length, in radians.
    pub rho: f64,
    /// `|rho(n) - rho(n/2)|`, the doubling-rule error surrogate.
    pub error_est: f64,
    pub n_steps: i64,
    pub x_final: f64,
}

/// One row of an energy scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    #[serde(rename = "E")]
    pub energy: f64,
    pub rho: f64,
    pub error_est: f64,
    pub n_steps: i64,
    pub x_final: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

fn check_horizon(n_steps: i64) -> Result<()> {
    if n_steps < 2 || n_steps % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "n_steps must be even and at least 2, got {n_steps}"
        )));
    }
    Ok(())
}

/// Direct finite-horizon estimate `(theta(x_N) - Xi) / x_N`.
pub fn estimate_rho(
    p: &GeneralizedPotential,
    e: f64,
    xi: f64,
    n_steps: i64,
    cfg: &IntegratorConfig,
) -> Result<RotationEstimate> {
    check_horizon(n_steps)?;
    let mut cfg_rec = *cfg;
    cfg_rec.record_lattice = true;
    let traj = prufer::evolve(p, e, xi, n_steps, &cfg_rec)?;
    let half = n_steps / 2;
    let (_, x_half, th_half) = traj.lattice_angles[half as usize];
    let (_, x_final, th_final) = traj.final_entry();
    let rho = (th_final - xi) / x_final;
    let rho_half = (th_half - xi) / x_half;
    Ok(RotationEstimate {
        energy: e,
        rho,
        error_est: (rho - rho_half).abs(),
        n_steps,
        x_final,
    })
}

/// Birkhoff-average estimate: the lattice density times the mean of the
/// one-step increments of the skew product along the orbit.
///
/// Each increment is evaluated from the shifted potential and the reduced
/// angle, so this is a genuinely different code path from [`estimate_rho`];
/// the two telescope to the same sum in exact arithmetic.
pub fn estimate_rho_birkhoff(
    p: &GeneralizedPotential,
    e: f64,
    xi: f64,
    n_steps: i64,
    cfg: &IntegratorConfig,
) -> Result<RotationEstimate> {
    check_horizon(n_steps)?;
    let mut pot = p.clone();
    let mut vartheta = xi.rem_euclid(std::f64::consts::TAU);
    let mut sum = 0.0f64;
    let mut half_sum = 0.0f64;
    let half = n_steps / 2;
    for k in 0..n_steps {
        let inc =
            prufer::observable_increment(&pot, e, vartheta, cfg).map_err(|err| err.at_step(k))?;
        sum += inc;
        if k + 1 == half {
            half_sum = sum;
        }
        vartheta = (vartheta + inc).rem_euclid(std::f64::consts::TAU);
        pot = pot.shift(1);
    }
    let rho = density(p.gamma(), n_steps) * (sum / n_steps as f64);
    let rho_half = density(p.gamma(), half) * (half_sum / half as f64);
    Ok(RotationEstimate {
        energy: e,
        rho,
        error_est: (rho - rho_half).abs(),
        n_steps,
        x_final: p.gamma().position(n_steps),
    })
}

/// The energy grid `e_min, e_min + e_step, ...` up to and including `e_max`
/// (within a relative 1e-9 slack on the endpoint).
pub fn energy_grid(e_min: f64, e_max: f64, e_step: f64) -> Result<Vec<f64>> {
    if e_min >= e_max || e_min.is_nan() || e_max.is_nan() {
        return Err(Error::InvalidArgument(format!(
            "need e_min < e_max, got [{e_min}, {e_max}]"
        )));
    }
    if e_step <= 0.0 || e_step.is_nan() {
        return Err(Error::InvalidArgument(format!(
            "energy step must be positive, got {e_step}"
        )));
    }
    let count = ((e_max - e_min) / e_step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| e_min + k as f64 * e_step).collect())
}

/// Scans a uniform energy grid, one row per energy. Rows are computed
/// independently; a failing row records its error and the scan continues.
pub fn scan(
    p: &GeneralizedPotential,
    e_min: f64,
    e_max: f64,
    e_step: f64,
    xi: f64,
    n_steps: i64,
    cfg: &IntegratorConfig,
) -> Result<Vec<ScanRow>> {
    let energies = energy_grid(e_min, e_max, e_step)?;
    Ok(scan_energies(p, &energies, xi, n_steps, cfg, 1))
}

/// Like [`scan`] but fanning rows out to `jobs` worker threads. Rows are
/// merged back in energy order and each is computed by the same arithmetic
/// as in the serial scan, so the output is identical to the serial one.
#[allow(clippy::too_many_arguments)]
pub fn scan_parallel(
    p: &GeneralizedPotential,
    e_min: f64,
    e_max: f64,
    e_step: f64,
    xi: f64,
    n_steps: i64,
    cfg: &IntegratorConfig,
    jobs: usize,
) -> Result<Vec<ScanRow>> {
    let energies = energy_grid(e_min, e_max, e_step)?;
    Ok(scan_energies(p, &energies, xi, n_steps, cfg, jobs))
}

/// Scan over an explicit energy list.
pub fn scan_energies(
    p: &GeneralizedPotential,
    energies: &[f64],
    xi: f64,
    n_steps: i64,
    cfg: &IntegratorConfig,
    jobs: usize,
) -> Vec<ScanRow> {
    let row_for = |e: f64| -> ScanRow {
        match estimate_rho(p, e, xi, n_steps, cfg) {
            Ok(est) => ScanRow {
                energy: e,
                rho: est.rho,
                error_est: est.error_est,
                n_steps: est.n_steps,
                x_final: est.x_final,
                error: None,
            },
            Err(err) => ScanRow {
                energy: e,
                rho: f64::NAN,
                error_est: f64::NAN,
                n_steps,
                x_final: f64::NAN,
                error: Some(err.to_string()),
            },
        }
    };

    if jobs <= 1 || energies.len() <= 1 {
        return energies.iter().copied().map(row_for).collect();
    }

    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<ScanRow>>> = Mutex::new(vec![None; energies.len()]);
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(energies.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= energies.len() {
                    break;
                }
                let row = row_for(energies[i]);
                slots.lock().expect("scan worker poisoned the row buffer")[i] = Some(row);
            });
        }
    });
    slots
        .into_inner()
        .expect("scan workers finished")
        .into_iter()
        .map(|r| r.expect("every row computed"))
        .collect()
}

/// A maximal run of consecutive scan rows whose rotation numbers span at
/// most the flatness tolerance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Plateau {
    pub e_lo: f64,
    pub e_hi: f64,
    /// Mean rotation number over the run.
    pub rho: f64,
    pub rows: usize,
}

/// Flags gap candidates: maximal runs of at least `min_width` consecutive
/// rows whose `rho` values span at most `flat_tol`. Runs are taken greedily
/// from the left and never overlap; rows carrying errors break runs.
pub fn detect_plateaus(rows: &[ScanRow], flat_tol: f64, min_width: usize) -> Vec<Plateau> {
    let mut plateaus = Vec::new();
    let mut i = 0;
    while i < rows.len() {
        if rows[i].error.is_some() {
            i += 1;
            continue;
        }
        let (mut lo, mut hi) = (rows[i].rho, rows[i].rho);
        let mut j = i;
        while j + 1 < rows.len() && rows[j + 1].error.is_none() {
            let r = rows[j + 1].rho;
            let (nlo, nhi) = (lo.min(r), hi.max(r));
            if nhi - nlo > flat_tol {
                break;
            }
            lo = nlo;
            hi = nhi;
            j += 1;
        }
        let width = j - i + 1;
        if width >= min_width.max(1) {
            let mean = rows[i..=j].iter().map(|r| r.rho).sum::<f64>() / width as f64;
            plateaus.push(Plateau {
                e_lo: rows[i].energy,
                e_hi: rows[j].energy,
                rho: mean,
                rows: width,
            });
        }
        i = j + 1;
    }
    plateaus
}
