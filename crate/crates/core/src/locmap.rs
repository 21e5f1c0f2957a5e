//! From estimated angles and delays to a mobile position and a scatterer
//! map.
//!
//! The earliest path is taken as line of sight, which places the mobile at
//! `c tau_LOS [cos theta_LOS, sin theta_LOS]`. Each remaining path then fixes
//! its scatterer as the intersection of the ray at `theta_k` from the base
//! station with the ellipse `|s| + |p - s| = c tau_k`. All math is in the
//! frame with the base station at the origin; [`locate`] translates the
//! results to world coordinates.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::estimator::{nll, ThetaVector};
use crate::signal::TxSignalSet;
use crate::{Error, Result, Vec2, SPEED_OF_LIGHT};

/// Relative margin by which `c tau_k` must exceed `|p|` for the ellipse to be
/// non-degenerate.
pub const FEASIBILITY_MARGIN: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LosChoice {
    pub index: usize,
    /// Another path had exactly the same delay; the first one was taken.
    pub tie: bool,
}

/// Index of the path with the smallest delay.
pub fn identify_los(theta: &ThetaVector) -> LosChoice {
    let mut index = 0;
    let mut tie = false;
    for k in 1..theta.n_paths() {
        if theta.tau(k) < theta.tau(index) {
            index = k;
            tie = false;
        } else if theta.tau(k) == theta.tau(index) {
            tie = true;
        }
    }
    LosChoice { index, tie }
}

pub fn localize(theta_los: f64, tau_los: f64) -> Result<Vec2> {
    if !(tau_los > 0.0) {
        return Err(Error::DegenerateGeometry(format!("LOS delay must be positive, got {tau_los}")));
    }
    Ok(SPEED_OF_LIGHT * tau_los * Vec2::new(theta_los.cos(), theta_los.sin()))
}

/// Scatterer on the ray at `theta_k` whose bounce path to `p_hat` has length
/// `c tau_k`: `s = t u` with `u = [cos theta_k, sin theta_k]` and
/// `t = ((c tau_k)^2 - |p|^2) / (2 (c tau_k - p.u))`.
pub fn map_scatterer(p_hat: Vec2, theta_k: f64, tau_k: f64) -> Result<Vec2> {
    let d = SPEED_OF_LIGHT * tau_k;
    let pn = p_hat.norm();
    if !(d >= pn * (1.0 + FEASIBILITY_MARGIN)) {
        return Err(Error::DegenerateGeometry(format!(
            "path length {d} m does not exceed the LOS range {pn} m"
        )));
    }
    let u = Vec2::new(theta_k.cos(), theta_k.sin());
    let den = d - p_hat.dot(&u);
    if den <= 1e-12 * d {
        return Err(Error::DegenerateGeometry("ray does not meet the range ellipse".into()));
    }
    Ok(u * ((d - pn) * (d + pn) / (2.0 * den)))
}

/// The tangent form of the same closed form, valid for `cos theta_k > 0`.
/// Kept as a cross-check of [`map_scatterer`].
pub fn map_scatterer_tan(p_hat: Vec2, theta_k: f64, tau_k: f64) -> Option<Vec2> {
    let d = SPEED_OF_LIGHT * tau_k;
    let t = theta_k.tan();
    let den = (1.0 + t * t).sqrt() * d - p_hat.x - t * p_hat.y;
    if den == 0.0 || theta_k.cos() <= 0.0 {
        return None;
    }
    let sx = 0.5 * (d * d - p_hat.norm_squared()) / den;
    Some(Vec2::new(sx, t * sx))
}

/// Single-path cost at a position: `L_0(atan2(s_y, s_x), |s| / c)`.
pub fn position_cost(s: Vec2, y: &DMatrix<Complex64>, tx: &TxSignalSet) -> Result<f64> {
    if s.norm() == 0.0 {
        return Err(Error::DegenerateGeometry("position at the base station".into()));
    }
    let theta = ThetaVector::from_pairs(&[(s.y.atan2(s.x), s.norm() / SPEED_OF_LIGHT)]);
    Ok(nll(&theta, y, tx))
}

/// Equivalent position `c tau_k [cos theta_k, sin theta_k]`, where the
/// single-path cost puts an NLOS path.
pub fn equivalent_position(theta_k: f64, tau_k: f64) -> Vec2 {
    SPEED_OF_LIGHT * tau_k * Vec2::new(theta_k.cos(), theta_k.sin())
}

/// Moves an equivalent position back along the ray to the point that is as
/// far from `s_e` as from `p`: `s = (1 - lambda) s_e` with
/// `lambda = |s_e - p|^2 / (2 (|s_e|^2 - p.s_e))`.
pub fn equivalent_to_scatterer(s_e: Vec2, p: Vec2) -> Result<Vec2> {
    if s_e == p {
        return Ok(s_e);
    }
    let den = s_e.norm_squared() - p.dot(&s_e);
    if den.abs() <= 1e-12 * s_e.norm_squared() || s_e.norm() == 0.0 {
        return Err(Error::DegenerateGeometry("equivalent position is not beyond the mobile".into()));
    }
    let lambda = 0.5 * (s_e - p).norm_squared() / den;
    Ok(s_e * (1.0 - lambda))
}

/// Mobile position and scatterer map in world coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationResult {
    pub position: [f64; 2],
    /// One entry per non-LOS path in estimator order; `None` when the path
    /// could not be mapped.
    pub scatterers: Vec<Option<[f64; 2]>>,
    /// Index of the path used as LOS.
    pub los_index: usize,
    pub los_tie: bool,
    /// Estimator path index of every entry in `scatterers`.
    pub nlos_indices: Vec<usize>,
}

impl LocalizationResult {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.position[0], self.position[1])
    }

    pub fn scatterer(&self, i: usize) -> Option<Vec2> {
        self.scatterers[i].map(|s| Vec2::new(s[0], s[1]))
    }
}

/// Runs LOS selection, localization and mapping on an estimate. `bs` is the
/// base-station position in world coordinates.
pub fn locate(theta: &ThetaVector, bs: Vec2) -> Result<LocalizationResult> {
    let los = identify_los(theta);
    let p = localize(theta.theta(los.index), theta.tau(los.index))?;
    let mut scatterers = Vec::new();
    let mut nlos_indices = Vec::new();
    for k in (0..theta.n_paths()).filter(|&k| k != los.index) {
        let s = map_scatterer(p, theta.theta(k), theta.tau(k)).ok().map(|s| {
            let w = s + bs;
            [w.x, w.y]
        });
        scatterers.push(s);
        nlos_indices.push(k);
    }
    let w = p + bs;
    Ok(LocalizationResult {
        position: [w.x, w.y],
        scatterers,
        los_index: los.index,
        los_tie: los.tie,
        nlos_indices,
    })
}
