//! Scenario description and the propagation model.
//!
//! [`ScenarioConfig`] is the full experiment description in world
//! coordinates. Everything derived from it ([`PathParams`],
//! [`LocationParams`], [`Geometry`]) lives in the frame with the base station
//! at the origin.
//!
//! Path losses follow a single-reflector model: the LOS path sees free-space
//! loss times atmospheric attenuation, each NLOS path additionally a
//! reflection factor `omega` and the Poisson geometry factor
//! `(gamma_r d)^2 exp(-gamma_r d)`. `omega` is not given directly; it is
//! calibrated per path so that the LOS-to-multipath ratio hits its target.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Vec2, SPEED_OF_LIGHT};

/// Cyclic prefix length in samples. The model works directly in the frequency
/// domain, so the prefix has no effect on any computation.
pub const CP_SAMPLES: usize = 0;

/// How a path phase is chosen for each realization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhasePolicy {
    /// i.i.d. uniform on [0, 2pi).
    Uniform,
    /// Fixed phase, degrees in the file.
    FixedDeg(f64),
}

impl PhasePolicy {
    /// Draws a phase in radians. `Fixed` never touches the generator.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            PhasePolicy::Uniform => rng.random::<f64>() * 2.0 * PI,
            PhasePolicy::FixedDeg(deg) => deg.to_radians(),
        }
    }
}

/// Arrangement of the transmit beams.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeamLayout {
    /// Steering vectors at angles uniformly partitioning the coverage sector.
    UniformAngle,
    /// DFT columns, uniform in `sin(theta)` over the whole array field of view.
    Dft,
}

/// Pilot symbols `x^g[n]`, known at the receiver.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotKind {
    /// Seeded random QPSK, independent per beam, subcarrier and transmission.
    Qpsk,
    /// Constant all-ones. With `G = 1` this makes the AOD unidentifiable,
    /// since `a(theta)^H z` is then the same complex number on every
    /// subcarrier and is absorbed by the path gain.
    AllOnes,
}

/// Full experiment description. Positions in meters (world frame), angles in
/// degrees in the file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub bs_position: [f64; 2],
    pub ms_position: [f64; 2],
    pub scatterers: Vec<[f64; 2]>,
    pub n_bs: usize,
    pub n_subcarriers: usize,
    pub n_transmissions: usize,
    pub n_beams: usize,
    pub bandwidth_hz: f64,
    pub carrier_hz: f64,
    pub tx_power_w: f64,
    pub snr_db: f64,
    pub lmr_db_per_path: Vec<f64>,
    pub atten_db_per_km: f64,
    pub reflector_density: f64,
    pub los_phase: PhasePolicy,
    pub nlos_phase: PhasePolicy,
    pub rng_seed: u64,
    /// Broadside direction of the array, degrees from the x axis.
    pub array_broadside_deg: f64,
    pub beam_layout: BeamLayout,
    /// Sector covered by the beams, degrees relative to broadside.
    pub coverage_deg: [f64; 2],
    pub pilots: PilotKind,
    pub pilot_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            bs_position: [3.0, 0.0],
            ms_position: [10.0, 4.0],
            scatterers: vec![[8.0, 13.0]],
            n_bs: 20,
            n_subcarriers: 20,
            n_transmissions: 1,
            n_beams: 10,
            bandwidth_hz: 40e6,
            carrier_hz: 60e9,
            tx_power_w: 1e-2,
            snr_db: 10.0,
            lmr_db_per_path: vec![5.0],
            atten_db_per_km: 16.0,
            reflector_density: 1.0 / 7.0,
            los_phase: PhasePolicy::Uniform,
            nlos_phase: PhasePolicy::Uniform,
            rng_seed: 0,
            array_broadside_deg: 0.0,
            beam_layout: BeamLayout::UniformAngle,
            coverage_deg: [-90.0, 90.0],
            pilots: PilotKind::Qpsk,
            pilot_seed: 0x5EED,
        }
    }
}

/// Scenario geometry with the base station at the origin.
#[derive(Clone, Debug, PartialEq)]
pub struct Geometry {
    pub ms: Vec2,
    pub scatterers: Vec<Vec2>,
}

impl Geometry {
    /// Length of path `k`: `|p|` for the LOS, `|s_k| + |p - s_k|` otherwise.
    pub fn path_length(&self, k: usize) -> f64 {
        if k == 0 {
            self.ms.norm()
        } else {
            let s = self.scatterers[k - 1];
            s.norm() + (self.ms - s).norm()
        }
    }

    pub fn n_paths(&self) -> usize {
        self.scatterers.len() + 1
    }
}

/// Channel parameters of one path: `alpha_k = r e^{j phi}`, delay, AOD.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathParams {
    pub k: usize,
    pub r: f64,
    pub phi: f64,
    pub tau: f64,
    pub theta: f64,
}

impl PathParams {
    pub fn alpha(&self) -> Complex64 {
        Complex64::from_polar(self.r, self.phi)
    }

    pub fn with_alpha(mut self, alpha: Complex64) -> Self {
        self.r = alpha.norm();
        self.phi = alpha.arg();
        self
    }

    /// Range equivalent of the delay, meters.
    pub fn range(&self) -> f64 {
        self.tau * SPEED_OF_LIGHT
    }
}

/// Location-domain counterpart of [`PathParams`]: the mobile position for
/// `k = 0`, the scatterer position otherwise (BS frame).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocationParams {
    pub k: usize,
    pub r: f64,
    pub phi: f64,
    pub position: Vec2,
}

/// Location parameters of every path, mobile first.
pub fn location_params(paths: &[PathParams], geometry: &Geometry) -> Vec<LocationParams> {
    paths
        .iter()
        .map(|p| LocationParams {
            k: p.k,
            r: p.r,
            phi: p.phi,
            position: if p.k == 0 {
                geometry.ms
            } else {
                geometry.scatterers[p.k - 1]
            },
        })
        .collect()
}

/// Maps location parameters to channel parameters (delays and AODs from
/// positions). Inverse of what [`crate::locmap`] does on estimates.
pub fn channel_from_locations(eta: &[LocationParams]) -> Result<Vec<PathParams>> {
    let ms = eta
        .first()
        .ok_or_else(|| Error::InvalidConfig("no paths".into()))?
        .position;
    eta.iter()
        .map(|l| {
            let length = if l.k == 0 {
                ms.norm()
            } else {
                l.position.norm() + (ms - l.position).norm()
            };
            if l.position.norm() == 0.0 {
                return Err(Error::SingularGeometry {
                    path: l.k,
                    reason: "position coincides with the base station".into(),
                });
            }
            Ok(PathParams {
                k: l.k,
                r: l.r,
                phi: l.phi,
                tau: length / SPEED_OF_LIGHT,
                theta: l.position.y.atan2(l.position.x),
            })
        })
        .collect()
}

fn v(a: [f64; 2]) -> Vec2 {
    Vec2::new(a[0], a[1])
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_bs == 0 {
            return bad("n_bs must be at least 1");
        }
        if self.n_beams == 0 || self.n_beams > self.n_bs {
            return bad("n_beams must satisfy 1 <= n_beams <= n_bs");
        }
        if self.n_subcarriers == 0 {
            return bad("n_subcarriers must be at least 1");
        }
        if self.n_transmissions == 0 {
            return bad("n_transmissions must be at least 1");
        }
        if !(self.bandwidth_hz > 0.0) || !(self.carrier_hz > 0.0) {
            return bad("bandwidth_hz and carrier_hz must be positive");
        }
        if !(self.tx_power_w > 0.0) {
            return bad("tx_power_w must be positive");
        }
        if !(self.reflector_density > 0.0) {
            return bad("reflector_density must be positive");
        }
        if self.lmr_db_per_path.len() != self.scatterers.len() {
            return bad("lmr_db_per_path needs one entry per scatterer");
        }
        if !(self.coverage_deg[0] < self.coverage_deg[1]) {
            return bad("coverage_deg must be an increasing interval");
        }
        self.geometry().map(|_| ())
    }

    /// Positions translated to the BS-centered frame.
    pub fn geometry(&self) -> Result<Geometry> {
        let bs = v(self.bs_position);
        let ms = v(self.ms_position) - bs;
        if ms.norm() == 0.0 {
            return Err(Error::DegenerateGeometry(
                "mobile coincides with the base station".into(),
            ));
        }
        let mut scatterers = Vec::with_capacity(self.scatterers.len());
        for (i, s) in self.scatterers.iter().enumerate() {
            let s = v(*s) - bs;
            if s.norm() == 0.0 || (s - ms).norm() == 0.0 {
                return Err(Error::DegenerateGeometry(format!(
                    "scatterer {} coincides with an endpoint",
                    i + 1
                )));
            }
            scatterers.push(s);
        }
        Ok(Geometry { ms, scatterers })
    }

    pub fn bs(&self) -> Vec2 {
        v(self.bs_position)
    }

    pub fn to_world(&self, p: Vec2) -> Vec2 {
        p + self.bs()
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// `T_S = 1/B`.
    pub fn sampling_period(&self) -> f64 {
        1.0 / self.bandwidth_hz
    }

    pub fn cyclic_prefix_s(&self) -> f64 {
        CP_SAMPLES as f64 * self.sampling_period()
    }

    pub fn n_paths(&self) -> usize {
        self.scatterers.len() + 1
    }
}

/// Delays and AODs of all paths, LOS first. Gains are left at `r = 1,
/// phi = 0`; [`realize`] fills in the actual amplitudes.
pub fn derive_channel_params(cfg: &ScenarioConfig) -> Result<Vec<PathParams>> {
    let g = cfg.geometry()?;
    let mut out = Vec::with_capacity(g.n_paths());
    for k in 0..g.n_paths() {
        let dir = if k == 0 { g.ms } else { g.scatterers[k - 1] };
        out.push(PathParams {
            k,
            r: 1.0,
            phi: 0.0,
            tau: g.path_length(k) / SPEED_OF_LIGHT,
            theta: dir.y.atan2(dir.x),
        });
    }
    Ok(out)
}

/// `(lambda_c / (4 pi d))^2`.
fn free_space_gain(d: f64, cfg: &ScenarioConfig) -> f64 {
    (cfg.wavelength() / (4.0 * PI * d)).powi(2)
}

/// Atmospheric attenuation over `d` meters as a linear power factor (< 1).
pub fn atmospheric_factor(d: f64, cfg: &ScenarioConfig) -> f64 {
    10f64.powf(-cfg.atten_db_per_km * d / 1000.0 / 10.0)
}

/// Poisson geometry factor `(gamma_r d)^2 exp(-gamma_r d)`.
pub fn poisson_factor(d: f64, density: f64) -> f64 {
    let x = density * d;
    x * x * (-x).exp()
}

/// LOS path loss `rho_0` with `1/rho_0 = xi^2(d0) (lambda_c / 4 pi d0)^2`.
pub fn path_loss_los(d0: f64, cfg: &ScenarioConfig) -> f64 {
    assert!(d0 > 0.0, "LOS distance must be positive");
    1.0 / (atmospheric_factor(d0, cfg) * free_space_gain(d0, cfg))
}

/// NLOS path loss `rho_k` with `1/rho_k = omega Omega(dk) (lambda_c / 4 pi dk)^2`.
pub fn path_loss_nlos(dk: f64, omega: f64, cfg: &ScenarioConfig) -> f64 {
    assert!(dk > 0.0 && omega > 0.0, "dk and omega must be positive");
    1.0 / (omega * poisson_factor(dk, cfg.reflector_density) * free_space_gain(dk, cfg))
}

/// Reflection factor `omega` that makes `rho_k / rho_0` equal to the target
/// LOS-to-multipath ratio for path `k >= 1`.
pub fn calibrate_omega(target_lmr_db: f64, k: usize, cfg: &ScenarioConfig) -> Result<f64> {
    let g = cfg.geometry()?;
    if k == 0 || k > g.scatterers.len() {
        return Err(Error::InvalidConfig(format!("no NLOS path with index {k}")));
    }
    let rho0 = path_loss_los(g.path_length(0), cfg);
    let dk = g.path_length(k);
    let lmr = 10f64.powf(target_lmr_db / 10.0);
    let omega = 1.0 / (lmr * rho0 * poisson_factor(dk, cfg.reflector_density) * free_space_gain(dk, cfg));
    if !omega.is_finite() || omega <= 0.0 {
        return Err(Error::NonFinite(format!("omega for path {k} is {omega}")));
    }
    Ok(omega)
}

/// `sigma^2 = P_t / (rho_0 10^{SNR/10})`, i.e. `N_0 B` from the SNR definition.
pub fn noise_variance_from_snr(cfg: &ScenarioConfig) -> Result<f64> {
    let g = cfg.geometry()?;
    let rho0 = path_loss_los(g.path_length(0), cfg);
    Ok(cfg.tx_power_w / (rho0 * 10f64.powf(cfg.snr_db / 10.0)))
}

/// `alpha_k = h_k / sqrt(rho_k)` with `|h_k| = sqrt(P_t)` and phases drawn per
/// policy (LOS first, then one draw per NLOS path in order).
pub fn complex_gains<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    losses: &[f64],
    rng: &mut R,
) -> Vec<Complex64> {
    let amp = cfg.tx_power_w.sqrt();
    losses
        .iter()
        .enumerate()
        .map(|(k, &rho)| {
            let phase = if k == 0 {
                cfg.los_phase.draw(rng)
            } else {
                cfg.nlos_phase.draw(rng)
            };
            Complex64::from_polar(amp / rho.sqrt(), phase)
        })
        .collect()
}

/// One draw of the channel: parameters of every path plus the noise level.
#[derive(Clone, Debug)]
pub struct Realization {
    pub paths: Vec<PathParams>,
    pub losses: Vec<f64>,
    pub omegas: Vec<f64>,
    pub sigma2: f64,
}

/// Path losses of every path (LOS first) and the calibrated `omega`s.
pub fn path_losses(cfg: &ScenarioConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    cfg.validate()?;
    let g = cfg.geometry()?;
    let mut losses = vec![path_loss_los(g.path_length(0), cfg)];
    let mut omegas = Vec::with_capacity(g.scatterers.len());
    for k in 1..g.n_paths() {
        let omega = calibrate_omega(cfg.lmr_db_per_path[k - 1], k, cfg)?;
        losses.push(path_loss_nlos(g.path_length(k), omega, cfg));
        omegas.push(omega);
    }
    Ok((losses, omegas))
}

/// Draws gains from `rng` and assembles the full channel description.
pub fn realize<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<Realization> {
    let (losses, omegas) = path_losses(cfg)?;
    let gains = complex_gains(cfg, &losses, rng);
    let paths = derive_channel_params(cfg)?
        .into_iter()
        .zip(gains)
        .map(|(p, a)| p.with_alpha(a))
        .collect();
    Ok(Realization {
        paths,
        losses,
        omegas,
        sigma2: noise_variance_from_snr(cfg)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg_345() -> ScenarioConfig {
        ScenarioConfig {
            bs_position: [0.0, 0.0],
            ms_position: [3.0, 4.0],
            scatterers: vec![],
            lmr_db_per_path: vec![],
            ..Default::default()
        }
    }

    #[test]
    fn three_four_five() {
        let paths = derive_channel_params(&cfg_345()).unwrap();
        assert_eq!(paths.len(), 1);
        assert!((paths[0].tau - 5.0 / SPEED_OF_LIGHT).abs() < 1e-22);
        assert_eq!(paths[0].theta, 4f64.atan2(3.0));
    }

    #[test]
    fn default_nlos_geometry() {
        let paths = derive_channel_params(&ScenarioConfig::default()).unwrap();
        let expected = 194f64.sqrt() + 85f64.sqrt();
        assert!((paths[1].range() - expected).abs() < 1e-12);
        assert!((paths[1].range() - 23.148).abs() < 1e-3);
        assert_eq!(paths[1].theta, 13f64.atan2(5.0));
        let eq = Vec2::new(3.0, 0.0)
            + paths[1].range() * Vec2::new(paths[1].theta.cos(), paths[1].theta.sin());
        assert!((eq.x - 11.3).abs() < 0.05 && (eq.y - 21.6).abs() < 0.05);
    }

    #[test]
    fn coincident_points_rejected() {
        let mut cfg = cfg_345();
        cfg.ms_position = [0.0, 0.0];
        assert!(matches!(derive_channel_params(&cfg), Err(Error::DegenerateGeometry(_))));
        let mut cfg = ScenarioConfig::default();
        cfg.scatterers = vec![[10.0, 4.0]];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn invariant_violations_rejected() {
        let mut cfg = ScenarioConfig::default();
        cfg.n_beams = 21;
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::default();
        cfg.lmr_db_per_path.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::default();
        cfg.tx_power_w = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn los_loss_free_space_and_inverse_square() {
        let mut cfg = ScenarioConfig::default();
        cfg.atten_db_per_km = 0.0;
        let lam = cfg.wavelength();
        let d = 7.0;
        let inv = 1.0 / path_loss_los(d, &cfg);
        assert!((inv - (lam / (4.0 * PI * d)).powi(2)).abs() <= 1e-15 * inv);
        let inv2 = 1.0 / path_loss_los(2.0 * d, &cfg);
        assert!((inv / inv2 - 4.0).abs() < 1e-12);
    }

    #[test]
    fn los_loss_default_frozen() {
        // Hand evaluation: lambda = c / 60 GHz, d0 = sqrt(65),
        // FSPL(dB) = 20 log10(4 pi d0 / lambda) = 86.140 dB, atmosphere
        // 16 dB/km * 0.00806 km = 0.129 dB.
        let cfg = ScenarioConfig::default();
        let d0 = 65f64.sqrt();
        let loss_db = 10.0 * path_loss_los(d0, &cfg).log10();
        let lam = 299_792_458.0 / 60e9;
        let fspl = 20.0 * (4.0 * PI * d0 / lam).log10();
        let expected = fspl + 16.0 * d0 / 1000.0;
        assert!((loss_db - expected).abs() < 1e-10);
        assert!((loss_db - 86.2689).abs() < 1e-3, "{loss_db}");
    }

    #[test]
    fn nlos_poisson_factor() {
        assert!(poisson_factor(1e-9, 1.0 / 7.0) < 1e-19);
        let cfg = ScenarioConfig::default();
        // Omega ~ d^2 cancels the free-space 1/d^2, so the loss tends to
        // (4 pi / (gamma_r lambda))^2 / omega as d -> 0.
        let lam = cfg.wavelength();
        let limit = (4.0 * std::f64::consts::PI / (cfg.reflector_density * lam)).powi(2);
        assert!((path_loss_nlos(1e-6, 1.0, &cfg) / limit - 1.0).abs() < 1e-6);
        // Omega'(d) = 0 at d = 2 / gamma_r: check by central differences.
        let gr = 1.0 / 7.0;
        let d = 2.0 / gr;
        let h = 1e-4;
        let deriv = (poisson_factor(d + h, gr) - poisson_factor(d - h, gr)) / (2.0 * h);
        assert!(deriv.abs() < 1e-9);
        assert!(poisson_factor(d, gr) > poisson_factor(d * 0.9, gr));
        assert!(poisson_factor(d, gr) > poisson_factor(d * 1.1, gr));
    }

    #[test]
    fn nlos_loss_frozen() {
        // 1/rho = Omega(d) (lambda / 4 pi d)^2 with d = 23.148, gamma_r = 1/7:
        // Omega = 3.3069^2 e^{-3.3069} = 0.40057 -> 99.274 dB.
        let cfg = ScenarioConfig::default();
        let rho = path_loss_nlos(23.148, 1.0, &cfg);
        let x: f64 = 23.148 / 7.0;
        let omega = x * x * (-x).exp();
        let lam = cfg.wavelength();
        let expected = 1.0 / (omega * (lam / (4.0 * PI * 23.148)).powi(2));
        assert!((rho / expected - 1.0).abs() < 1e-12);
        assert!((10.0 * rho.log10() - 99.2743).abs() < 1e-3, "{}", 10.0 * rho.log10());
    }

    #[test]
    fn omega_round_trip() {
        let cfg = ScenarioConfig::default();
        let g = cfg.geometry().unwrap();
        let rho0 = path_loss_los(g.path_length(0), &cfg);
        for target in [-5.0, 0.0, 5.0, 12.5] {
            let omega = calibrate_omega(target, 1, &cfg).unwrap();
            let rho1 = path_loss_nlos(g.path_length(1), omega, &cfg);
            let lmr = rho1 / rho0;
            let want = 10f64.powf(target / 10.0);
            assert!((lmr / want - 1.0).abs() < 1e-12, "{target}");
        }
        let omega = calibrate_omega(0.0, 1, &cfg).unwrap();
        let rho1 = path_loss_nlos(g.path_length(1), omega, &cfg);
        assert!((rho1 / rho0 - 1.0).abs() < 1e-14);
        assert!(calibrate_omega(0.0, 2, &cfg).is_err());
    }

    #[test]
    fn noise_from_snr() {
        let mut cfg = ScenarioConfig::default();
        cfg.snr_db = 0.0;
        let rho0 = path_loss_los(65f64.sqrt(), &cfg);
        let s0 = noise_variance_from_snr(&cfg).unwrap();
        assert!((s0 - cfg.tx_power_w / rho0).abs() <= 1e-15 * s0);
        cfg.snr_db = 10.0;
        let s10 = noise_variance_from_snr(&cfg).unwrap();
        assert!((s0 / s10 - 10.0).abs() < 1e-12);
    }

    #[test]
    fn gains() {
        let cfg = ScenarioConfig {
            tx_power_w: 1.0,
            los_phase: PhasePolicy::FixedDeg(0.0),
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = complex_gains(&cfg, &[1.0], &mut rng);
        assert_eq!(g[0], Complex64::new(1.0, 0.0));

        let (losses, _) = path_losses(&ScenarioConfig::default()).unwrap();
        let g = complex_gains(&ScenarioConfig::default(), &losses, &mut rng);
        let ratio = g[0].norm_sqr() / g[1].norm_sqr();
        assert!((10.0 * ratio.log10() - 5.0).abs() < 1e-10);

        let a = realize(&ScenarioConfig::default(), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = realize(&ScenarioConfig::default(), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.paths, b.paths);
    }

    #[test]
    fn json_round_trip_uses_degrees() {
        let cfg = ScenarioConfig {
            los_phase: PhasePolicy::FixedDeg(90.0),
            ..Default::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains("\"fixed_deg\":90.0"));
        let back: ScenarioConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!((back.los_phase.draw(&mut rng) - PI / 2.0).abs() < 1e-15);
        let partial: ScenarioConfig = serde_json::from_str(r#"{"snr_db": 3.0}"#).unwrap();
        assert_eq!(partial.n_bs, 20);
        assert_eq!(partial.snr_db, 3.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn translation_invariance(dx in -50.0..50.0f64, dy in -50.0..50.0f64) {
                let cfg = ScenarioConfig::default();
                let mut moved = cfg.clone();
                moved.bs_position = [cfg.bs_position[0] + dx, cfg.bs_position[1] + dy];
                moved.ms_position = [cfg.ms_position[0] + dx, cfg.ms_position[1] + dy];
                moved.scatterers = vec![[cfg.scatterers[0][0] + dx, cfg.scatterers[0][1] + dy]];
                let a = derive_channel_params(&cfg).unwrap();
                let b = derive_channel_params(&moved).unwrap();
                for (p, q) in a.iter().zip(&b) {
                    prop_assert!((p.tau - q.tau).abs() < 1e-9 * p.tau);
                    prop_assert!((p.theta - q.theta).abs() < 1e-9);
                }
            }

            #[test]
            fn reflected_path_is_longer(sx in -40.0..40.0f64, sy in -40.0..40.0f64) {
                let cfg = ScenarioConfig { scatterers: vec![[sx, sy]], ..Default::default() };
                prop_assume!(cfg.geometry().is_ok());
                let p = derive_channel_params(&cfg).unwrap();
                prop_assert!(p[1].tau >= p[0].tau * (1.0 - 1e-15));
            }
        }
    }
}
