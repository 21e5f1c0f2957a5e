//! Transmit beams, frequency-domain channel and received observations.
//!
//! Conventions used throughout the crate:
//!
//! * steering vector `a(theta)[m] = exp(j pi m sin(theta - psi)) / sqrt(N_BS)`
//!   for a half-wavelength ULA with broadside `psi`;
//! * channel row `h^T[n] = sum_k sqrt(N_BS) alpha_k exp(-j kappa_n tau_k) a^H(theta_k)`
//!   with `kappa_n = 2 pi n / (N T_S)`;
//! * observation `y^g[n] = h^T[n] z^g[n] + noise`, `z^g[n] = F x^g[n]`.
//!
//! The beamformer has unit Frobenius norm and every pilot symbol has unit
//! modulus, so the radiated power `E |z|^2` is one; the transmit power enters
//! through the path gains.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::scenario::{BeamLayout, PathParams, PilotKind, ScenarioConfig};
use crate::{Error, Result};

const J: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Unit-norm ULA steering vector for an angle measured from broadside.
pub fn steering_vector(theta: f64, n_bs: usize) -> DVector<Complex64> {
    let scale = 1.0 / (n_bs as f64).sqrt();
    let phase = PI * theta.sin();
    DVector::from_fn(n_bs, |m, _| Complex64::from_polar(scale, phase * m as f64))
}

/// Known transmit-side signals: beamformer, pilots and their product
/// `z^g[n]`, plus the waveform constants the model needs.
#[derive(Clone, Debug, PartialEq)]
pub struct TxSignalSet {
    pub n_bs: usize,
    pub n_subcarriers: usize,
    pub bandwidth_hz: f64,
    /// Array broadside, radians from the x axis.
    pub broadside: f64,
    /// `N_BS x M`, identical for every subcarrier and transmission.
    pub beamformer: DMatrix<Complex64>,
    /// Per transmission, `M x N`: column `n` is `x^g[n]`.
    pub pilots: Vec<DMatrix<Complex64>>,
    /// Per transmission, `N_BS x N`: column `n` is `z^g[n]`.
    pub z: Vec<DMatrix<Complex64>>,
}

impl TxSignalSet {
    /// Builds a set from explicit `z` matrices (one `N_BS x N` block per
    /// transmission). Used when importing observations.
    pub fn from_z(z: Vec<DMatrix<Complex64>>, bandwidth_hz: f64, broadside: f64) -> Result<Self> {
        let first = z
            .first()
            .ok_or_else(|| Error::Dimension("no transmissions".into()))?;
        let (n_bs, n) = first.shape();
        if z.iter().any(|m| m.shape() != (n_bs, n)) {
            return Err(Error::Dimension("inconsistent z blocks".into()));
        }
        Ok(Self {
            n_bs,
            n_subcarriers: n,
            bandwidth_hz,
            broadside,
            beamformer: DMatrix::zeros(n_bs, 0),
            pilots: Vec::new(),
            z,
        })
    }

    pub fn n_transmissions(&self) -> usize {
        self.z.len()
    }

    /// `kappa_n = 2 pi n / (N T_S)`.
    pub fn kappa(&self, n: usize) -> f64 {
        2.0 * PI * n as f64 * self.bandwidth_hz / self.n_subcarriers as f64
    }

    pub fn steering(&self, theta: f64) -> DVector<Complex64> {
        steering_vector(theta - self.broadside, self.n_bs)
    }

    /// Diagonal of `D_u = -j pi cos(theta - psi) diag(0..N_BS-1)`, the
    /// derivative of the conjugated steering vector with respect to `theta`.
    pub fn steering_derivative_diag(&self, theta: f64) -> DVector<Complex64> {
        let c = -J * PI * (theta - self.broadside).cos();
        DVector::from_fn(self.n_bs, |m, _| c * m as f64)
    }

    /// Row vector `a^H(theta) Z^g`, i.e. `a^H(theta) z^g[n]` for every `n`.
    pub fn beam_response(&self, theta: f64, g: usize) -> DVector<Complex64> {
        let a = self.steering(theta);
        self.z[g].tr_mul(&a.conjugate())
    }

    pub fn z_col(&self, g: usize, n: usize) -> DVector<Complex64> {
        self.z[g].column(n).into_owned()
    }
}

/// Beam angles (radians from broadside) for the uniform-angle layout.
pub fn beam_angles(cfg: &ScenarioConfig) -> Vec<f64> {
    let [lo, hi] = cfg.coverage_deg;
    let m = cfg.n_beams as f64;
    (0..cfg.n_beams)
        .map(|i| (lo + (i as f64 + 0.5) * (hi - lo) / m).to_radians())
        .collect()
}

/// Beamformer and pilots for a scenario. Beams are fixed across subcarriers
/// and transmissions.
pub fn build_beamformer(cfg: &ScenarioConfig) -> Result<TxSignalSet> {
    if cfg.n_beams == 0 || cfg.n_beams > cfg.n_bs {
        return Err(Error::InvalidConfig(format!(
            "need 1 <= M <= N_BS, got M = {}, N_BS = {}",
            cfg.n_beams, cfg.n_bs
        )));
    }
    let (n_bs, m, n, g) = (cfg.n_bs, cfg.n_beams, cfg.n_subcarriers, cfg.n_transmissions);
    let mut f = DMatrix::<Complex64>::zeros(n_bs, m);
    match cfg.beam_layout {
        BeamLayout::UniformAngle => {
            for (i, angle) in beam_angles(cfg).into_iter().enumerate() {
                f.set_column(i, &steering_vector(angle, n_bs));
            }
        }
        BeamLayout::Dft => {
            for i in 0..m {
                let u = -1.0 + (2 * i + 1) as f64 / m as f64;
                f.set_column(i, &steering_vector(u.asin(), n_bs));
            }
        }
    }
    let frob = f.norm();
    f /= Complex64::from(frob);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.pilot_seed);
    let mut pilots = Vec::with_capacity(g);
    let mut z = Vec::with_capacity(g);
    for _ in 0..g {
        let x = DMatrix::from_fn(m, n, |_, _| match cfg.pilots {
            PilotKind::AllOnes => Complex64::new(1.0, 0.0),
            PilotKind::Qpsk => {
                let q: u32 = rng.random_range(0..4);
                Complex64::from_polar(1.0, PI / 4.0 * (2 * q + 1) as f64)
            }
        });
        z.push(&f * &x);
        pilots.push(x);
    }
    Ok(TxSignalSet {
        n_bs,
        n_subcarriers: n,
        bandwidth_hz: cfg.bandwidth_hz,
        broadside: cfg.array_broadside_deg.to_radians(),
        beamformer: f,
        pilots,
        z,
    })
}

/// Entries of the channel row `h^T[n]` (length `N_BS`).
pub fn channel_row(n: usize, paths: &[PathParams], tx: &TxSignalSet) -> DVector<Complex64> {
    let sqrt_n = (tx.n_bs as f64).sqrt();
    let kappa = tx.kappa(n);
    let mut row = DVector::zeros(tx.n_bs);
    for p in paths {
        let w = p.alpha() * Complex64::from_polar(sqrt_n, -kappa * p.tau);
        row += tx.steering(p.theta).conjugate() * w;
    }
    row
}

/// Noise-free observation `m^g[n]`, summed path by path.
pub fn noise_free_observation(g: usize, n: usize, paths: &[PathParams], tx: &TxSignalSet) -> Complex64 {
    let sqrt_n = (tx.n_bs as f64).sqrt();
    let kappa = tx.kappa(n);
    let z = tx.z[g].column(n);
    paths
        .iter()
        .map(|p| {
            let a = tx.steering(p.theta);
            let ahz: Complex64 = a.iter().zip(z.iter()).map(|(a, z)| a.conj() * z).sum();
            p.alpha() * Complex64::from_polar(sqrt_n, -kappa * p.tau) * ahz
        })
        .sum()
}

/// `N x G` matrix of noise-free observations.
pub fn noise_free_matrix(paths: &[PathParams], tx: &TxSignalSet) -> DMatrix<Complex64> {
    DMatrix::from_fn(tx.n_subcarriers, tx.n_transmissions(), |n, g| {
        noise_free_observation(g, n, paths, tx)
    })
}

/// Received observations. `y` is `N x G`: row = subcarrier, column =
/// transmission.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSet {
    pub y: DMatrix<Complex64>,
    pub sigma2: f64,
}

/// Draws `y = m + noise` with circularly-symmetric complex Gaussian noise of
/// variance `sigma2`.
pub fn synthesize<R: Rng + ?Sized>(
    paths: &[PathParams],
    tx: &TxSignalSet,
    sigma2: f64,
    rng: &mut R,
) -> Result<ObservationSet> {
    if !(sigma2 >= 0.0) {
        return Err(Error::InvalidConfig(format!("sigma2 must be >= 0, got {sigma2}")));
    }
    let mut y = noise_free_matrix(paths, tx);
    if sigma2 > 0.0 {
        let s = (sigma2 / 2.0).sqrt();
        for v in y.iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *v += Complex64::new(s * re, s * im);
        }
    }
    Ok(ObservationSet { y, sigma2 })
}
