//! Maximum-likelihood estimation of angles of departure and delays.
//!
//! For fixed `Theta = [theta_0, tau_0, ..., theta_K, tau_K]` the gains enter
//! linearly, so they are profiled out in closed form and the remaining cost
//! `L_K(Theta) = sum_g |y^g - sqrt(N_BS) Q^g(Theta) alpha_hat(Theta)|^2` is
//! minimized over `Theta` alone. `Q^g` is `N x (K+1)` with entries
//! `exp(-j kappa_n tau_k) a^H(theta_k) z^g[n]`.
//!
//! Three estimators are available:
//!
//! * [`Method::SpGrid`]: successive single-path extraction on a grid,
//! * [`Method::SpRefine`]: each extracted pair refined on the single-path cost,
//! * [`Method::Joint`]: extraction followed by a simplex search on the joint
//!   cost.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::linalg::hermitian_solve;
use crate::nelder_mead::{minimize, NmOptions};
use crate::signal::TxSignalSet;
use crate::{Error, Result, SPEED_OF_LIGHT};

/// `[theta_0, tau_0, ..., theta_K, tau_K]`, angles in radians, delays in
/// seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ThetaVector {
    pub values: Vec<f64>,
}

impl ThetaVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || !values.len().is_multiple_of(2) {
            return Err(Error::Dimension(format!(
                "Theta needs 2(K+1) entries, got {}",
                values.len()
            )));
        }
        Ok(Self { values })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Self {
        Self { values: pairs.iter().flat_map(|&(th, tau)| [th, tau]).collect() }
    }

    pub fn n_paths(&self) -> usize {
        self.values.len() / 2
    }

    pub fn theta(&self, k: usize) -> f64 {
        self.values[2 * k]
    }

    pub fn tau(&self, k: usize) -> f64 {
        self.values[2 * k + 1]
    }

    pub fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values.chunks_exact(2).map(|c| (c[0], c[1]))
    }

    /// Optimizer coordinates: angles in radians, delays as ranges in meters.
    pub fn to_normalized(&self) -> Vec<f64> {
        self.pairs().flat_map(|(th, tau)| [th, tau * SPEED_OF_LIGHT]).collect()
    }

    pub fn from_normalized(x: &[f64]) -> Self {
        Self { values: x.chunks_exact(2).flat_map(|c| [c[0], c[1] / SPEED_OF_LIGHT]).collect() }
    }
}

/// Folds an angle into the half-plane in front of the array. A ULA cannot
/// tell `theta` from its mirror image about the array axis, so estimates
/// are reported in `[psi - pi/2, psi + pi/2]`.
pub fn canonical_angle(theta: f64, broadside: f64) -> f64 {
    use std::f64::consts::{FRAC_PI_2, PI};
    if (theta - broadside).abs() <= FRAC_PI_2 {
        return theta;
    }
    let mut x = (theta - broadside).rem_euclid(2.0 * PI);
    if x > PI {
        x -= 2.0 * PI;
    }
    if x > FRAC_PI_2 {
        x = PI - x;
    } else if x < -FRAC_PI_2 {
        x = -PI - x;
    }
    x + broadside
}

/// Search grid over angle (relative to the array broadside) and range
/// `c tau`. Nodes sit at cell centers, so the endfire directions and zero
/// range are never evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub theta_deg: [f64; 2],
    pub n_theta: usize,
    pub range_m: [f64; 2],
    pub n_range: usize,
}

/// The 4 degree / 2 m grid. An 8 x 8 grid over the whole sector is far
/// coarser than the single-path basins (a few degrees by a few meters for a
/// 20-element array and 40 MHz), so it rarely lands in the right basin.
impl Default for GridSpec {
    fn default() -> Self {
        Self::fine()
    }
}

impl GridSpec {
    /// 8 x 8 over the whole sector and 0..50 m.
    pub fn coarse() -> Self {
        Self { theta_deg: [-90.0, 90.0], n_theta: 8, range_m: [0.0, 50.0], n_range: 8 }
    }

    /// 4 degree / 2 m cells over the same region.
    pub fn fine() -> Self {
        Self::with_resolution(4.0, 2.0)
    }

    pub fn with_resolution(theta_step_deg: f64, range_step_m: f64) -> Self {
        let base = Self::coarse();
        let n_theta = ((base.theta_deg[1] - base.theta_deg[0]) / theta_step_deg).round().max(1.0) as usize;
        let n_range = ((base.range_m[1] - base.range_m[0]) / range_step_m).round().max(1.0) as usize;
        Self { n_theta, n_range, ..base }
    }

    pub fn with_size(n_theta: usize, n_range: usize) -> Self {
        Self { n_theta, n_range, ..Self::coarse() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.n_theta >= 1
            && self.n_range >= 1
            && self.theta_deg[1] > self.theta_deg[0]
            && self.range_m[1] > self.range_m[0]
            && self.range_m[0] >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid grid {self:?}")))
        }
    }

    pub fn theta_step(&self) -> f64 {
        ((self.theta_deg[1] - self.theta_deg[0]) / self.n_theta as f64).to_radians()
    }

    pub fn range_step(&self) -> f64 {
        (self.range_m[1] - self.range_m[0]) / self.n_range as f64
    }

    /// Node angles in radians, including the broadside offset.
    pub fn thetas(&self, broadside: f64) -> Vec<f64> {
        let lo = self.theta_deg[0].to_radians();
        let step = self.theta_step();
        (0..self.n_theta).map(|i| broadside + lo + (i as f64 + 0.5) * step).collect()
    }

    /// Node delays in seconds.
    pub fn taus(&self) -> Vec<f64> {
        let step = self.range_step();
        (0..self.n_range)
            .map(|i| (self.range_m[0] + (i as f64 + 0.5) * step) / SPEED_OF_LIGHT)
            .collect()
    }
}

impl FromStr for GridSpec {
    type Err = Error;

    /// `"8x8"` (angle nodes x range nodes), `"coarse"` or `"fine"`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coarse" => return Ok(Self::coarse()),
            "fine" => return Ok(Self::fine()),
            _ => {}
        }
        let bad = || Error::InvalidConfig(format!("grid must look like 8x8, got {s:?}"));
        let (a, b) = s.split_once(['x', 'X']).ok_or_else(bad)?;
        let g = Self::with_size(a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        g.validate()?;
        Ok(g)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CostDiagnostics {
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub initial: ThetaVector,
    pub refined: ThetaVector,
    /// The gain solve needed regularization at the final point.
    pub regularized: bool,
    /// Successive extraction picked the same grid node twice.
    pub duplicate_nodes: bool,
}

/// `Q^g` for every transmission.
pub fn build_q(theta: &ThetaVector, tx: &TxSignalSet) -> Vec<DMatrix<Complex64>> {
    let np = theta.n_paths();
    (0..tx.n_transmissions())
        .map(|g| {
            let mut q = DMatrix::zeros(tx.n_subcarriers, np);
            for (k, (th, tau)) in theta.pairs().enumerate() {
                let resp = tx.beam_response(th, g);
                for n in 0..tx.n_subcarriers {
                    q[(n, k)] = Complex64::from_polar(1.0, -tx.kappa(n) * tau) * resp[n];
                }
            }
            q
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct Profile {
    pub alpha: DVector<Complex64>,
    pub regularized: bool,
}

fn solve_gains(q: &[DMatrix<Complex64>], y: &DMatrix<Complex64>, n_bs: usize) -> Result<Profile> {
    let np = q[0].ncols();
    let mut gram = DMatrix::<Complex64>::zeros(np, np);
    let mut rhs = DVector::<Complex64>::zeros(np);
    for (g, qg) in q.iter().enumerate() {
        gram += qg.ad_mul(qg);
        rhs += qg.ad_mul(&y.column(g));
    }
    let (x, regularized) = hermitian_solve(&gram, &rhs)
        .ok_or_else(|| Error::NonFinite("gain normal equations are singular".into()))?;
    Ok(Profile { alpha: x / Complex64::from((n_bs as f64).sqrt()), regularized })
}

fn check_y(y: &DMatrix<Complex64>, tx: &TxSignalSet) -> Result<()> {
    if y.nrows() != tx.n_subcarriers || y.ncols() != tx.n_transmissions() {
        return Err(Error::Dimension(format!(
            "Y is {}x{}, expected {}x{}",
            y.nrows(),
            y.ncols(),
            tx.n_subcarriers,
            tx.n_transmissions()
        )));
    }
    Ok(())
}

/// Least-squares gains `alpha_hat = Q^{-1} sum_g Q^gH y^g / sqrt(N_BS)`.
pub fn profile_alpha(theta: &ThetaVector, y: &DMatrix<Complex64>, tx: &TxSignalSet) -> Result<Profile> {
    check_y(y, tx)?;
    solve_gains(&build_q(theta, tx), y, tx.n_bs)
}

/// Residual `sum_g |y^g - sqrt(N_BS) Q^g alpha|^2` for given gains.
pub fn residual_cost(
    theta: &ThetaVector,
    alpha: &DVector<Complex64>,
    y: &DMatrix<Complex64>,
    tx: &TxSignalSet,
) -> f64 {
    let q = build_q(theta, tx);
    residual_with(&q, alpha, y, tx.n_bs)
}

fn residual_with(q: &[DMatrix<Complex64>], alpha: &DVector<Complex64>, y: &DMatrix<Complex64>, n_bs: usize) -> f64 {
    let s = Complex64::from((n_bs as f64).sqrt());
    q.iter()
        .enumerate()
        .map(|(g, qg)| (y.column(g) - qg * alpha * s).norm_squared())
        .sum()
}

/// Compressed negative log-likelihood `L_K(Theta)` with the gains profiled
/// out. Falls back to `|Y|^2` (all gains zero) if the gain solve fails.
pub fn nll(theta: &ThetaVector, y: &DMatrix<Complex64>, tx: &TxSignalSet) -> f64 {
    nll_with_profile(theta, y, tx).0
}

fn nll_with_profile(theta: &ThetaVector, y: &DMatrix<Complex64>, tx: &TxSignalSet) -> (f64, Option<Profile>) {
    let q = build_q(theta, tx);
    match solve_gains(&q, y, tx.n_bs) {
        Ok(p) => (residual_with(&q, &p.alpha, y, tx.n_bs), Some(p)),
        Err(_) => (y.norm_squared(), None),
    }
}

/// Single-path cost evaluated on a grid.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub thetas: Vec<f64>,
    pub taus: Vec<f64>,
    /// `cost[(i, j)]` at `(thetas[i], taus[j])`.
    pub cost: DMatrix<f64>,
    /// Local minima `(i, j)` over the 8-neighbourhood, lowest cost first.
    pub minima: Vec<(usize, usize)>,
}

impl Spectrum {
    pub fn node(&self, i: usize, j: usize) -> (f64, f64) {
        (self.thetas[i], self.taus[j])
    }

    pub fn argmin(&self) -> (usize, usize) {
        self.minima[0]
    }
}

/// `L_0(theta, tau)` at every node of `grid`.
pub fn singlepath_spectrum(y: &DMatrix<Complex64>, tx: &TxSignalSet, grid: &GridSpec) -> Result<Spectrum> {
    grid.validate()?;
    check_y(y, tx)?;
    let thetas = grid.thetas(tx.broadside);
    let taus = grid.taus();
    let mut cost = DMatrix::zeros(thetas.len(), taus.len());
    for (i, &th) in thetas.iter().enumerate() {
        let resp: Vec<_> = (0..tx.n_transmissions()).map(|g| tx.beam_response(th, g)).collect();
        for (j, &tau) in taus.iter().enumerate() {
            // K = 0 closed form: |y|^2 - |q^H y|^2 / q^H q.
            let mut qq = 0.0;
            let mut qy = Complex64::default();
            for (g, r) in resp.iter().enumerate() {
                for n in 0..tx.n_subcarriers {
                    let q = Complex64::from_polar(1.0, -tx.kappa(n) * tau) * r[n];
                    qq += q.norm_sqr();
                    qy += q.conj() * y[(n, g)];
                }
            }
            cost[(i, j)] = if qq > 0.0 { (y.norm_squared() - qy.norm_sqr() / qq).max(0.0) } else { y.norm_squared() };
        }
    }
    let mut minima = Vec::new();
    let (ni, nj) = (thetas.len() as isize, taus.len() as isize);
    for i in 0..ni {
        for j in 0..nj {
            let c = cost[(i as usize, j as usize)];
            let mut is_min = true;
            for di in -1..=1 {
                for dj in -1..=1 {
                    let (a, b) = (i + di, j + dj);
                    if (di, dj) != (0, 0) && a >= 0 && b >= 0 && a < ni && b < nj && cost[(a as usize, b as usize)] < c {
                        is_min = false;
                    }
                }
            }
            if is_min {
                minima.push((i as usize, j as usize));
            }
        }
    }
    minima.sort_by(|a, b| cost[*a].total_cmp(&cost[*b]));
    Ok(Spectrum { thetas, taus, cost, minima })
}

/// Initial simplex steps: half a grid cell along each coordinate.
fn simplex_steps(grid: &GridSpec, n_paths: usize) -> Vec<f64> {
    (0..n_paths).flat_map(|_| [grid.theta_step() / 2.0, grid.range_step() / 2.0]).collect()
}

/// Simplex refinement of `cost` from `theta0`. The optimizer works on
/// `(theta, c tau)` so both coordinates are measured in comparable units.
pub fn refine<F>(mut cost: F, theta0: &ThetaVector, steps: &[f64], opts: &NmOptions) -> Result<(ThetaVector, CostDiagnostics)>
where
    F: FnMut(&ThetaVector) -> f64,
{
    let x0 = theta0.to_normalized();
    let res = minimize(|x| cost(&ThetaVector::from_normalized(x)), &x0, steps, opts)
        .ok_or_else(|| Error::NonFinite("cost is not finite at the starting point".into()))?;
    let refined = ThetaVector::from_normalized(&res.x);
    Ok((
        refined.clone(),
        CostDiagnostics {
            cost: res.cost,
            iterations: res.iterations,
            converged: res.converged,
            initial: theta0.clone(),
            refined,
            regularized: false,
            duplicate_nodes: false,
        },
    ))
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct ExtractionOptions {
    /// Refine each extracted pair on the residual's single-path cost before
    /// subtracting it.
    pub polish: bool,
    pub nm: NmOptions,
}


#[derive(Clone, Debug)]
pub struct Extraction {
    pub theta: ThetaVector,
    /// Grid node picked at every step.
    pub nodes: Vec<(usize, usize)>,
    pub duplicate_nodes: bool,
}

/// Successive extraction: pick the global minimum of the single-path
/// spectrum of the residual, fit that path's gain, subtract it, repeat.
/// Paths come out in extraction order (strongest first), not sorted by delay.
pub fn successive_extraction(
    y: &DMatrix<Complex64>,
    tx: &TxSignalSet,
    grid: &GridSpec,
    n_paths: usize,
    opts: &ExtractionOptions,
) -> Result<Extraction> {
    if n_paths == 0 {
        return Err(Error::InvalidConfig("n_paths must be at least 1".into()));
    }
    let mut residual = y.clone();
    let mut pairs = Vec::with_capacity(n_paths);
    let mut nodes: Vec<(usize, usize)> = Vec::with_capacity(n_paths);
    let mut duplicate = false;
    let s = Complex64::from((tx.n_bs as f64).sqrt());
    for _ in 0..n_paths {
        let spec = singlepath_spectrum(&residual, tx, grid)?;
        let node = spec.argmin();
        duplicate |= nodes.contains(&node);
        nodes.push(node);
        let mut pair = ThetaVector::from_pairs(&[spec.node(node.0, node.1)]);
        if opts.polish {
            let r = &residual;
            let (refined, _) = refine(|t| nll(t, r, tx), &pair, &simplex_steps(grid, 1), &opts.nm)?;
            pair = refined;
        }
        let q = build_q(&pair, tx);
        if let Ok(p) = solve_gains(&q, &residual, tx.n_bs) {
            for (g, qg) in q.iter().enumerate() {
                let fitted = qg * &p.alpha * s;
                let mut col = residual.column_mut(g);
                col -= fitted;
            }
        }
        pairs.push((pair.theta(0), pair.tau(0)));
    }
    Ok(Extraction { theta: ThetaVector::from_pairs(&pairs), nodes, duplicate_nodes: duplicate })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Joint,
    SpGrid,
    SpRefine,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Joint, Method::SpGrid, Method::SpRefine];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Joint => "joint",
            Method::SpGrid => "sp-grid",
            Method::SpRefine => "sp-refine",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(Method::Joint),
            "sp-grid" => Ok(Method::SpGrid),
            "sp-refine" => Ok(Method::SpRefine),
            _ => Err(Error::InvalidConfig(format!("unknown method {s:?} (joint, sp-grid, sp-refine)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EstimatorOptions {
    pub grid: GridSpec,
    pub nm: NmOptions,
    /// Polish each pair during extraction before the joint search.
    pub polish_init: bool,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self { grid: GridSpec::default(), nm: NmOptions::default(), polish_init: true }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Estimate {
    pub method: Method,
    pub theta: ThetaVector,
    pub alpha: Vec<Complex64>,
    pub sigma2: f64,
    pub diagnostics: CostDiagnostics,
}

fn finish(
    method: Method,
    theta: ThetaVector,
    initial: ThetaVector,
    y: &DMatrix<Complex64>,
    tx: &TxSignalSet,
    iterations: usize,
    converged: bool,
    duplicate_nodes: bool,
) -> Estimate {
    let theta = ThetaVector::from_pairs(
        &theta.pairs().map(|(th, tau)| (canonical_angle(th, tx.broadside), tau)).collect::<Vec<_>>(),
    );
    let (cost, profile) = nll_with_profile(&theta, y, tx);
    let (alpha, regularized) = match profile {
        Some(p) => (p.alpha.iter().copied().collect(), p.regularized),
        None => (vec![Complex64::default(); theta.n_paths()], true),
    };
    let sigma2 = cost / (tx.n_subcarriers * tx.n_transmissions()) as f64;
    Estimate {
        method,
        diagnostics: CostDiagnostics {
            cost,
            iterations,
            converged,
            initial,
            refined: theta.clone(),
            regularized,
            duplicate_nodes,
        },
        theta,
        alpha,
        sigma2,
    }
}

/// Joint ML: extraction on the grid, then one simplex over all `2(K+1)`
/// coordinates of the joint cost.
pub fn joint_ml(y: &DMatrix<Complex64>, tx: &TxSignalSet, n_paths: usize, opts: &EstimatorOptions) -> Result<Estimate> {
    check_y(y, tx)?;
    let ext = successive_extraction(
        y,
        tx,
        &opts.grid,
        n_paths,
        &ExtractionOptions { polish: opts.polish_init, nm: opts.nm },
    )?;
    let (theta, diag) = refine(|t| nll(t, y, tx), &ext.theta, &simplex_steps(&opts.grid, n_paths), &opts.nm)?;
    Ok(finish(Method::Joint, theta, ext.theta, y, tx, diag.iterations, diag.converged, ext.duplicate_nodes))
}

/// Runs the requested estimator for `n_paths = K + 1` paths.
pub fn estimate(
    method: Method,
    y: &DMatrix<Complex64>,
    tx: &TxSignalSet,
    n_paths: usize,
    opts: &EstimatorOptions,
) -> Result<Estimate> {
    check_y(y, tx)?;
    match method {
        Method::Joint => joint_ml(y, tx, n_paths, opts),
        Method::SpGrid => {
            let ext = successive_extraction(y, tx, &opts.grid, n_paths, &ExtractionOptions::default())?;
            Ok(finish(method, ext.theta.clone(), ext.theta, y, tx, 0, true, ext.duplicate_nodes))
        }
        Method::SpRefine => {
            let ext = successive_extraction(y, tx, &opts.grid, n_paths, &ExtractionOptions::default())?;
            let mut pairs = Vec::with_capacity(n_paths);
            let (mut iterations, mut converged) = (0, true);
            for (th, tau) in ext.theta.pairs() {
                let start = ThetaVector::from_pairs(&[(th, tau)]);
                let (r, d) = refine(|t| nll(t, y, tx), &start, &simplex_steps(&opts.grid, 1), &opts.nm)?;
                iterations += d.iterations;
                converged &= d.converged;
                pairs.push((r.theta(0), r.tau(0)));
            }
            let theta = ThetaVector::from_pairs(&pairs);
            Ok(finish(method, theta, ext.theta, y, tx, iterations, converged, ext.duplicate_nodes))
        }
    }
}
