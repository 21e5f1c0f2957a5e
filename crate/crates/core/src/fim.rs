//! Fisher information and Cramér-Rao bounds.
//!
//! The channel-domain FIM `J_gamma` is assembled from closed-form entries;
//! [`fd_fim`] builds the same matrix from central differences of the forward
//! model and serves as an independent check. Parameters are ordered
//! `(r, phi, tau, theta)` per path, LOS first.
//!
//! The position-domain FIM is `J_eta = T J_gamma T^T` with
//! `T = d gamma^T / d eta` and `eta_k = (r_k, phi_k, x_k, y_k)`; the position
//! error bound is the root of the two position entries of block 0 of
//! `Sigma_p = J_eta^{-1}`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::linalg::{sym_inverse, SymInverse};
use crate::scenario::{location_params, realize, LocationParams, PathParams, ScenarioConfig};
use crate::signal::{build_beamformer, noise_free_observation, TxSignalSet};
use crate::{Error, Result, Vec2, SPEED_OF_LIGHT};

pub const R: usize = 0;
pub const PHI: usize = 1;
pub const TAU: usize = 2;
pub const THETA: usize = 3;

const J: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Channel-domain FIM, `4(K+1)` square.
#[derive(Clone, Debug)]
pub struct ChannelFim {
    pub matrix: DMatrix<f64>,
    pub n_paths: usize,
}

impl ChannelFim {
    /// 4x4 block `Lambda(gamma_h, gamma_l)`.
    pub fn block(&self, h: usize, l: usize) -> DMatrix<f64> {
        self.matrix.view((4 * h, 4 * l), (4, 4)).into_owned()
    }

    pub fn inverse(&self) -> Result<SymInverse> {
        sym_inverse(&self.matrix)
    }

    /// `sqrt(CRLB)` of every channel parameter, same ordering as the matrix.
    pub fn crlb(&self) -> Result<Vec<f64>> {
        let inv = self.inverse()?;
        Ok(inv.inverse.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect())
    }
}

/// Closed-form channel FIM.
pub fn fim_channel(paths: &[PathParams], tx: &TxSignalSet, sigma2: f64) -> Result<ChannelFim> {
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidConfig(format!("sigma2 must be positive, got {sigma2}")));
    }
    if paths.is_empty() {
        return Err(Error::InvalidConfig("at least one path required".into()));
    }
    let np = paths.len();
    let dim = 4 * np;
    let mut jm = DMatrix::<f64>::zeros(dim, dim);
    let c0 = 2.0 * tx.n_bs as f64 / sigma2;

    let steer: Vec<_> = paths.iter().map(|p| tx.steering(p.theta).conjugate()).collect();
    let ddiag: Vec<_> = paths.iter().map(|p| tx.steering_derivative_diag(p.theta)).collect();
    let alpha: Vec<_> = paths.iter().map(|p| p.alpha()).collect();
    let unit: Vec<_> = paths.iter().map(|p| Complex64::from_polar(1.0, p.phi)).collect();

    // u_k = a_k^H z and w_k = a_k^H D_k z, so that
    // z^H A_hl z = conj(u_h) u_l, z^H A_hl D_l z = conj(u_h) w_l,
    // z^H D_h^H A_hl z = conj(w_h) u_l, z^H D_h^H A_hl D_l z = conj(w_h) w_l.
    let mut u = vec![Complex64::default(); np];
    let mut w = vec![Complex64::default(); np];
    for g in 0..tx.n_transmissions() {
        for n in 0..tx.n_subcarriers {
            let z = tx.z[g].column(n);
            let kappa = tx.kappa(n);
            for k in 0..np {
                u[k] = steer[k].iter().zip(z.iter()).map(|(a, z)| a * z).sum();
                w[k] = steer[k]
                    .iter()
                    .zip(ddiag[k].iter())
                    .zip(z.iter())
                    .map(|((a, d), z)| a * d * z)
                    .sum();
            }
            for h in 0..np {
                for l in 0..np {
                    let phase = Complex64::from_polar(1.0, kappa * (paths[h].tau - paths[l].tau));
                    let beta = c0 * alpha[h].conj() * alpha[l] * phase;
                    // beta / alpha_l, beta / conj(alpha_h) and
                    // beta / (conj(alpha_h) alpha_l), written without division
                    // so zero-gain paths stay finite.
                    let beta_over_al = c0 * alpha[h].conj() * phase;
                    let beta_over_ah = c0 * alpha[l] * phase;
                    let beta_over_both = c0 * phase;
                    let s0 = u[h].conj() * u[l];
                    let s_ad = u[h].conj() * w[l];
                    let s_da = w[h].conj() * u[l];
                    let s_dd = w[h].conj() * w[l];
                    let (rh, rl) = (4 * h, 4 * l);
                    let k2 = kappa * kappa;
                    jm[(rh + TAU, rl + TAU)] += (beta * k2 * s0).re;
                    jm[(rh + THETA, rl + THETA)] += (beta * s_dd).re;
                    jm[(rh + TAU, rl + THETA)] += (J * kappa * beta * s_ad).re;
                    jm[(rh + TAU, rl + R)] += (J * unit[l] * beta_over_al * kappa * s0).re;
                    jm[(rh + TAU, rl + PHI)] += (-beta * kappa * s0).re;
                    jm[(rh + THETA, rl + R)] += (unit[l] * beta_over_al * s_da).re;
                    jm[(rh + THETA, rl + PHI)] += (J * beta * s_da).re;
                    jm[(rh + R, rl + R)] += (beta_over_both * unit[l] * unit[h].conj() * s0).re;
                    jm[(rh + PHI, rl + PHI)] += (beta * s0).re;
                    jm[(rh + R, rl + PHI)] += (J * beta_over_ah * unit[h].conj() * s0).re;
                }
            }
        }
    }
    // Entries not listed above follow from J = J^T across blocks.
    const MIRRORED: [(usize, usize); 6] =
        [(THETA, TAU), (R, TAU), (PHI, TAU), (R, THETA), (PHI, THETA), (PHI, R)];
    for h in 0..np {
        for l in 0..np {
            for (a, b) in MIRRORED {
                jm[(4 * h + a, 4 * l + b)] = jm[(4 * l + b, 4 * h + a)];
            }
        }
    }
    Ok(ChannelFim { matrix: jm, n_paths: np })
}

/// Per-parameter perturbation scales for [`fd_fim`]: gains relative to the
/// largest `r`, phases and angles in radians, delays in units of `T_S`.
fn fd_scales(paths: &[PathParams], tx: &TxSignalSet) -> [f64; 4] {
    let rmax = paths.iter().map(|p| p.r).fold(0.0, f64::max);
    let r = if rmax > 0.0 { rmax } else { 1.0 };
    [r, 1.0, 1.0 / tx.bandwidth_hz, 1.0]
}

fn perturb(p: &mut PathParams, which: usize, delta: f64) {
    match which {
        R => p.r += delta,
        PHI => p.phi += delta,
        TAU => p.tau += delta,
        _ => p.theta += delta,
    }
}

/// FIM from `2/sigma^2 sum Re{(dm/dgamma_i)^* dm/dgamma_j}` with derivatives of
/// the forward model taken by central differences. `step` is relative to the
/// per-parameter scales (largest gain, 1 rad, `T_S`).
pub fn fd_fim(paths: &[PathParams], tx: &TxSignalSet, sigma2: f64, step: f64) -> ChannelFim {
    assert!(step > 0.0, "step must be positive");
    let np = paths.len();
    let dim = 4 * np;
    let scales = fd_scales(paths, tx);
    let n_obs = tx.n_subcarriers * tx.n_transmissions();
    // derivs[i] holds dm/dgamma_i for every (g, n).
    let mut derivs = vec![vec![Complex64::default(); n_obs]; dim];
    for k in 0..np {
        for which in 0..4 {
            let h = step * scales[which];
            let mut plus = paths.to_vec();
            let mut minus = paths.to_vec();
            perturb(&mut plus[k], which, h);
            perturb(&mut minus[k], which, -h);
            let col = &mut derivs[4 * k + which];
            for g in 0..tx.n_transmissions() {
                for n in 0..tx.n_subcarriers {
                    let mp = noise_free_observation(g, n, &plus, tx);
                    let mm = noise_free_observation(g, n, &minus, tx);
                    col[g * tx.n_subcarriers + n] = (mp - mm) / (2.0 * h);
                }
            }
        }
    }
    let matrix = DMatrix::from_fn(dim, dim, |i, j| {
        let s: f64 = derivs[i].iter().zip(&derivs[j]).map(|(a, b)| (a.conj() * b).re).sum();
        2.0 / sigma2 * s
    });
    ChannelFim { matrix, n_paths: np }
}

/// `[-y, x] / |v|^2`: gradient of `atan2(y, x)`, valid everywhere off the
/// origin (including `x = 0`).
fn atan2_gradient(v: Vec2) -> Vec2 {
    Vec2::new(-v.y, v.x) / v.norm_squared()
}

fn check_eta(eta: &[LocationParams]) -> Result<()> {
    if eta.is_empty() {
        return Err(Error::InvalidConfig("at least one path required".into()));
    }
    let p = eta[0].position;
    for l in eta {
        if l.position.norm() == 0.0 {
            return Err(Error::SingularGeometry {
                path: l.k,
                reason: "position at the base station".into(),
            });
        }
        if l.k > 0 && (p - l.position).norm() == 0.0 {
            return Err(Error::SingularGeometry {
                path: l.k,
                reason: "scatterer coincides with the mobile".into(),
            });
        }
    }
    Ok(())
}

/// `T = d gamma^T / d eta`: rows indexed by `eta`, columns by `gamma`.
pub fn jacobian_t(eta: &[LocationParams]) -> Result<DMatrix<f64>> {
    check_eta(eta)?;
    let np = eta.len();
    let mut t = DMatrix::zeros(4 * np, 4 * np);
    let p = eta[0].position;
    for h in 0..np {
        // d r_h / d r_h and d phi_h / d phi_h
        t[(4 * h + R, 4 * h + R)] = 1.0;
        t[(4 * h + PHI, 4 * h + PHI)] = 1.0;
    }
    // Block row 0: derivatives with respect to p.
    let dtau0 = p / (p.norm() * SPEED_OF_LIGHT);
    let dtheta0 = atan2_gradient(p);
    t[(2, TAU)] = dtau0.x;
    t[(3, TAU)] = dtau0.y;
    t[(2, THETA)] = dtheta0.x;
    t[(3, THETA)] = dtheta0.y;
    for h in 1..np {
        let s = eta[h].position;
        let dtau_dp = (p - s) / ((p - s).norm() * SPEED_OF_LIGHT);
        t[(2, 4 * h + TAU)] = dtau_dp.x;
        t[(3, 4 * h + TAU)] = dtau_dp.y;
        let dtau_ds = (s / s.norm() - (p - s) / (p - s).norm()) / SPEED_OF_LIGHT;
        let dtheta_ds = atan2_gradient(s);
        t[(4 * h + 2, 4 * h + TAU)] = dtau_ds.x;
        t[(4 * h + 3, 4 * h + TAU)] = dtau_ds.y;
        t[(4 * h + 2, 4 * h + THETA)] = dtheta_ds.x;
        t[(4 * h + 3, 4 * h + THETA)] = dtheta_ds.y;
    }
    Ok(t)
}

/// Partial derivatives of the scatterer map `s(p, tau_k, theta_k)` (see
/// [`crate::locmap::map_scatterer`]): returns `(ds/dp, ds/dtau, ds/dtheta)`
/// with `ds/dp` as a 2x2 matrix (rows = components of s).
fn scatterer_map_partials(p: Vec2, tau: f64, theta: f64) -> Result<(nalgebra::Matrix2<f64>, Vec2, Vec2)> {
    let d = SPEED_OF_LIGHT * tau;
    let u = Vec2::new(theta.cos(), theta.sin());
    let du = Vec2::new(-theta.sin(), theta.cos());
    let den = d - p.dot(&u);
    if den.abs() < 1e-12 * d.max(1.0) {
        return Err(Error::DegenerateGeometry("scatterer ray parallel to the range ellipse".into()));
    }
    let num = d * d - p.norm_squared();
    let t = num / (2.0 * den);
    let den2 = 2.0 * den * den;
    let dt_dd = (2.0 * d * den - num) / den2;
    let dt_dp = (-2.0 * p * den + num * u) / den2;
    let dt_dth = num * p.dot(&du) / den2;
    let ds_dp = u * dt_dp.transpose();
    let ds_dtau = u * (dt_dd * SPEED_OF_LIGHT);
    let ds_dtheta = u * dt_dth + du * t;
    Ok((ds_dp, ds_dtau, ds_dtheta))
}

/// `T^{-1} = d eta^T / d gamma` built directly from the inverse mapping
/// (mobile from the LOS pair, scatterers from the mobile plus their own pair).
/// Rows indexed by `gamma`, columns by `eta`.
pub fn inverse_jacobian_t(paths: &[PathParams]) -> Result<DMatrix<f64>> {
    let np = paths.len();
    if np == 0 {
        return Err(Error::InvalidConfig("at least one path required".into()));
    }
    let mut tb = DMatrix::zeros(4 * np, 4 * np);
    for h in 0..np {
        tb[(4 * h + R, 4 * h + R)] = 1.0;
        tb[(4 * h + PHI, 4 * h + PHI)] = 1.0;
    }
    let (tau0, th0) = (paths[0].tau, paths[0].theta);
    let d0 = SPEED_OF_LIGHT * tau0;
    let p = d0 * Vec2::new(th0.cos(), th0.sin());
    let dp_dtau0 = SPEED_OF_LIGHT * Vec2::new(th0.cos(), th0.sin());
    let dp_dth0 = d0 * Vec2::new(-th0.sin(), th0.cos());
    tb[(TAU, 2)] = dp_dtau0.x;
    tb[(TAU, 3)] = dp_dtau0.y;
    tb[(THETA, 2)] = dp_dth0.x;
    tb[(THETA, 3)] = dp_dth0.y;
    for h in 1..np {
        let (ds_dp, ds_dtau, ds_dth) = scatterer_map_partials(p, paths[h].tau, paths[h].theta)
            .map_err(|_| Error::SingularGeometry {
                path: h,
                reason: "scatterer map not differentiable".into(),
            })?;
        let ds_dtau0 = ds_dp * dp_dtau0;
        let ds_dth0 = ds_dp * dp_dth0;
        let c = 4 * h;
        tb[(TAU, c + 2)] = ds_dtau0.x;
        tb[(TAU, c + 3)] = ds_dtau0.y;
        tb[(THETA, c + 2)] = ds_dth0.x;
        tb[(THETA, c + 3)] = ds_dth0.y;
        tb[(c + TAU, c + 2)] = ds_dtau.x;
        tb[(c + TAU, c + 3)] = ds_dtau.y;
        tb[(c + THETA, c + 2)] = ds_dth.x;
        tb[(c + THETA, c + 3)] = ds_dth.y;
    }
    Ok(tb)
}

/// Position-domain bounds.
#[derive(Clone, Debug)]
pub struct PositionFim {
    pub channel: ChannelFim,
    pub t: DMatrix<f64>,
    pub j_eta: DMatrix<f64>,
    pub sigma_p: DMatrix<f64>,
    /// Position error bound of the mobile, meters.
    pub peb: f64,
    /// Mapping error bound of each scatterer, meters.
    pub scatterer_bounds: Vec<f64>,
    /// `sqrt(CRLB)` of every channel parameter, `(r, phi, tau, theta)` per path.
    pub channel_crlb: Vec<f64>,
    /// Condition number of the equilibrated `J_eta`.
    pub condition: f64,
}

impl PositionFim {
    pub fn crlb_tau(&self, k: usize) -> f64 {
        self.channel_crlb[4 * k + TAU]
    }

    pub fn crlb_theta(&self, k: usize) -> f64 {
        self.channel_crlb[4 * k + THETA]
    }
}

/// Root of the two position entries of diagonal block `k` of `Sigma_p`.
pub fn position_bound(sigma_p: &DMatrix<f64>, k: usize) -> f64 {
    (sigma_p[(4 * k + 2, 4 * k + 2)] + sigma_p[(4 * k + 3, 4 * k + 3)]).max(0.0).sqrt()
}

pub fn position_bounds(
    paths: &[PathParams],
    eta: &[LocationParams],
    tx: &TxSignalSet,
    sigma2: f64,
) -> Result<PositionFim> {
    if paths.len() != eta.len() {
        return Err(Error::Dimension("paths and eta differ in length".into()));
    }
    let channel = fim_channel(paths, tx, sigma2)?;
    let t = jacobian_t(eta)?;
    let j_eta = &t * &channel.matrix * t.transpose();
    let inv = sym_inverse(&j_eta)?;
    let sigma_p = inv.inverse;
    let channel_crlb = channel.crlb()?;
    Ok(PositionFim {
        peb: position_bound(&sigma_p, 0),
        scatterer_bounds: (1..paths.len()).map(|k| position_bound(&sigma_p, k)).collect(),
        channel,
        t,
        j_eta,
        sigma_p,
        channel_crlb,
        condition: inv.condition,
    })
}

/// Bounds for a scenario, with path phases drawn from `cfg.rng_seed`.
pub fn bounds_for_config(cfg: &ScenarioConfig) -> Result<PositionFim> {
    let tx = build_beamformer(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let real = realize(cfg, &mut rng)?;
    let eta = location_params(&real.paths, &cfg.geometry()?);
    position_bounds(&real.paths, &eta, &tx, real.sigma2)
}

/// `Sigma_p` under the orthogonal-path approximation from per-path inverse
/// blocks `C_k` and `T^{-1}`: block `(i, j)` is
/// `Tb_{i,0}^T C_0 Tb_{j,0} + [i == j >= 1] Tb_{i,i}^T C_i Tb_{i,i}`, where
/// `Tb_{h,l}` is the `(gamma_l, eta_h)` block of `T^{-1}`.
pub fn assemble_approx_sigma_p(c: &[DMatrix<f64>], tinv: &DMatrix<f64>) -> DMatrix<f64> {
    let np = c.len();
    let tb = |h: usize, l: usize| tinv.view((4 * l, 4 * h), (4, 4)).into_owned();
    let mut out = DMatrix::zeros(4 * np, 4 * np);
    for i in 0..np {
        for j in 0..np {
            let mut block = tb(i, 0).transpose() * &c[0] * tb(j, 0);
            if i == j && i >= 1 {
                block += tb(i, i).transpose() * &c[i] * tb(i, i);
            }
            out.view_mut((4 * i, 4 * j), (4, 4)).copy_from(&block);
        }
    }
    out
}

/// Orthogonal-path approximation of `Sigma_p`: cross-path FIM blocks are
/// neglected, so `C_k = Lambda(gamma_k, gamma_k)^{-1}`.
pub fn approx_sigma_p(paths: &[PathParams], tx: &TxSignalSet, sigma2: f64) -> Result<DMatrix<f64>> {
    let fim = fim_channel(paths, tx, sigma2)?;
    let c = (0..paths.len())
        .map(|k| sym_inverse(&fim.block(k, k)).map(|i| i.inverse))
        .collect::<Result<Vec<_>>>()?;
    let tinv = inverse_jacobian_t(paths)?;
    Ok(assemble_approx_sigma_p(&c, &tinv))
}

/// Scale of each channel parameter, used for relative comparisons of FIMs:
/// `sqrt(diag)` so that entry `(i, j)` is compared against
/// `sqrt(J_ii J_jj)`.
pub fn relative_entry_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let d = DVector::from_fn(a.nrows(), |i, _| a[(i, i)].abs().max(b[(i, i)].abs()).sqrt());
    let mut worst: f64 = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            let scale = d[i] * d[j];
            if scale > 0.0 {
                worst = worst.max((a[(i, j)] - b[(i, j)]).abs() / scale);
            }
        }
    }
    worst
}
