//! Monte Carlo trials and parameter sweeps.
//!
//! Trial `i` of sweep point `j` draws everything random (path phases, noise)
//! from `ChaCha8Rng::seed_from_u64(seed)` on stream `j << 32 | i`, so any
//! trial can be rerun in isolation and the result does not depend on how
//! trials are scheduled across threads.
//!
//! Output rows have the columns
//! `value, method, quantity, rmse, bound, trials_ok, trials_failed, q10, q50,
//! q90, rmse_se, variable`. Quantities are `p` (mobile position, m), `s_k`
//! (scatterer `k`, m), `theta_k` (AOD of path `k`, rad) and `d_k` (range
//! `c tau_k` of path `k`, m), with `k = 0` the LOS path. Bound-only rows use
//! the method name `bound` and leave the RMSE columns empty.
//!
//! The CRLB depends on the relative phases of the paths, which are redrawn
//! in every trial. The bound column is therefore the root of the CRLB
//! averaged over the realizations of the point's trials, the quantity the
//! mean squared error of an efficient estimator converges to.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::estimator::{estimate, EstimatorOptions, Method, ThetaVector};
use crate::fim::{bounds_for_config, position_bounds, PositionFim};
use crate::locmap::{equivalent_position, locate};
use crate::scenario::{location_params, realize, ScenarioConfig};
use crate::signal::{build_beamformer, synthesize, TxSignalSet};
use crate::{Error, Result, SPEED_OF_LIGHT};

/// Directions (degrees, seen from the mobile) and reference distances of
/// the scatterers in the separation sweep.
pub const MU_DIRECTIONS_DEG: [f64; 3] = [-20.0, 50.0, 70.0];
pub const MU_DISTANCES_M: [f64; 3] = [20.0, 28.0, 36.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVar {
    SnrDb,
    LmrDb,
    /// Scatterer separation: scatterer `k` sits `mu * l_k` from the mobile.
    Mu,
    /// Number of NLOS paths, placed as in the separation sweep at `mu = 1`.
    NPaths,
}

impl fmt::Display for SweepVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepVar::SnrDb => "snr_db",
            SweepVar::LmrDb => "lmr_db",
            SweepVar::Mu => "mu",
            SweepVar::NPaths => "n_paths",
        })
    }
}

impl FromStr for SweepVar {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "snr" | "snr_db" => Ok(SweepVar::SnrDb),
            "lmr" | "lmr_db" => Ok(SweepVar::LmrDb),
            "mu" => Ok(SweepVar::Mu),
            "n_paths" | "k" => Ok(SweepVar::NPaths),
            _ => Err(Error::InvalidConfig(format!("unknown sweep variable {s:?} (snr, lmr, mu, n_paths)"))),
        }
    }
}

/// Parses `var=start:step:stop` (inclusive of `stop` up to rounding) or
/// `var=v1,v2,...`.
pub fn parse_sweep(s: &str) -> Result<(SweepVar, Vec<f64>)> {
    let bad = || Error::InvalidConfig(format!("sweep must look like snr=-10:5:20 or mu=0.2,0.5,1, got {s:?}"));
    let (var, range) = s.split_once('=').ok_or_else(bad)?;
    let var: SweepVar = var.trim().parse()?;
    let nums = |sep: char| -> Result<Vec<f64>> {
        range.split(sep).map(|v| v.trim().parse::<f64>().map_err(|_| bad())).collect()
    };
    let values = if range.contains(':') {
        let parts = nums(':')?;
        let [start, step, stop] = parts[..] else { return Err(bad()) };
        if !(step > 0.0) || stop < start {
            return Err(bad());
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
        (0..n).map(|i| start + i as f64 * step).collect()
    } else {
        nums(',')?
    };
    if values.is_empty() {
        return Err(bad());
    }
    Ok((var, values))
}

/// Scatterers for the separation sweep: `p + mu l_k [cos d_k, sin d_k]`.
pub fn mu_scatterers(ms: [f64; 2], mu: f64, n_scatterers: usize) -> Result<Vec<[f64; 2]>> {
    if n_scatterers > MU_DIRECTIONS_DEG.len() {
        return Err(Error::InvalidConfig(format!(
            "separation sweep defines {} scatterers, asked for {n_scatterers}",
            MU_DIRECTIONS_DEG.len()
        )));
    }
    Ok((0..n_scatterers)
        .map(|k| {
            let d = MU_DIRECTIONS_DEG[k].to_radians();
            let l = MU_DISTANCES_M[k] * mu;
            [ms[0] + l * d.cos(), ms[1] + l * d.sin()]
        })
        .collect())
}

fn lmr_for(base: &ScenarioConfig, k: usize) -> Vec<f64> {
    let v = base.lmr_db_per_path.first().copied().unwrap_or(5.0);
    vec![v; k]
}

/// Scenario at one sweep point.
pub fn apply_sweep(base: &ScenarioConfig, var: SweepVar, value: f64) -> Result<ScenarioConfig> {
    let mut cfg = base.clone();
    match var {
        SweepVar::SnrDb => cfg.snr_db = value,
        SweepVar::LmrDb => cfg.lmr_db_per_path = vec![value; base.scatterers.len()],
        SweepVar::Mu => {
            let k = base.scatterers.len();
            cfg.scatterers = mu_scatterers(base.ms_position, value, k)?;
            cfg.lmr_db_per_path = lmr_for(base, k);
        }
        SweepVar::NPaths => {
            if value < 0.0 || value.fract() != 0.0 {
                return Err(Error::InvalidConfig(format!("n_paths must be a whole number, got {value}")));
            }
            let k = value as usize;
            cfg.scatterers = mu_scatterers(base.ms_position, 1.0, k)?;
            cfg.lmr_db_per_path = lmr_for(base, k);
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepSpec {
    pub base: ScenarioConfig,
    pub var: SweepVar,
    pub values: Vec<f64>,
    pub trials: usize,
    /// Empty means bounds only.
    pub methods: Vec<Method>,
    pub seed: u64,
    pub estimator: EstimatorOptions,
}

impl SweepSpec {
    pub fn new(base: ScenarioConfig, var: SweepVar, values: Vec<f64>) -> Self {
        Self {
            base,
            var,
            values,
            trials: 200,
            methods: vec![Method::Joint],
            seed: 0,
            estimator: EstimatorOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidConfig("sweep needs at least one value".into()));
        }
        if self.trials == 0 && !self.methods.is_empty() {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        self.estimator.grid.validate()
    }
}

/// Errors of one trial against the truth. `None` marks a quantity that
/// could not be produced (estimator failure or infeasible mapping).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialErrors {
    pub failure: Option<String>,
    /// `|p_hat - p|`, meters.
    pub position: Option<f64>,
    /// `|s_hat_k - s_k|` for every true scatterer, meters.
    pub scatterers: Vec<Option<f64>>,
    /// AOD error for every true path (LOS first), radians.
    pub theta: Vec<Option<f64>>,
    /// Range error `c |tau_hat - tau|` for every true path, meters.
    pub range: Vec<Option<f64>>,
}

impl TrialErrors {
    fn failed(n_paths: usize, why: String) -> Self {
        Self {
            failure: Some(why),
            position: None,
            scatterers: vec![None; n_paths - 1],
            theta: vec![None; n_paths],
            range: vec![None; n_paths],
        }
    }
}

/// Greedy assignment of estimated NLOS paths to true ones, closest pair of
/// equivalent positions first. Returns, for every true NLOS path, the index
/// of the estimated path matched to it.
fn match_nlos(truth: &[(f64, f64)], est: &[(usize, f64, f64)]) -> Vec<Option<usize>> {
    let mut pairs = Vec::new();
    for (i, &(th, tau)) in truth.iter().enumerate() {
        for (j, &(_, eth, etau)) in est.iter().enumerate() {
            let d = (equivalent_position(th, tau) - equivalent_position(eth, etau)).norm();
            pairs.push((d, i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = vec![None; truth.len()];
    let mut used = vec![false; est.len()];
    for (_, i, j) in pairs {
        if out[i].is_none() && !used[j] {
            out[i] = Some(est[j].0);
            used[j] = true;
        }
    }
    out
}

/// Per-trial RNG: stream `point << 32 | trial` of the master seed.
pub fn trial_rng(seed: u64, point: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((point as u64) << 32) | trial as u64);
    rng
}

/// One synthesize-estimate-locate run, scored against the scenario truth.
pub fn run_trial(
    cfg: &ScenarioConfig,
    tx: &TxSignalSet,
    method: Method,
    opts: &EstimatorOptions,
    rng: &mut ChaCha8Rng,
) -> Result<TrialErrors> {
    let real = realize(cfg, rng)?;
    let obs = synthesize(&real.paths, tx, real.sigma2, rng)?;
    let np = real.paths.len();
    let est = match estimate(method, &obs.y, tx, np, opts) {
        Ok(e) if e.theta.values.iter().all(|v| v.is_finite()) => e,
        Ok(_) => return Ok(TrialErrors::failed(np, "non-finite estimate".into())),
        Err(e) => return Ok(TrialErrors::failed(np, e.to_string())),
    };
    score(cfg, &real.paths, &est.theta)
}

fn score(cfg: &ScenarioConfig, truth: &[crate::scenario::PathParams], theta: &ThetaVector) -> Result<TrialErrors> {
    let np = truth.len();
    let loc = match locate(theta, cfg.bs()) {
        Ok(l) => l,
        Err(e) => return Ok(TrialErrors::failed(np, e.to_string())),
    };
    let geometry = cfg.geometry()?;
    let mut errs = TrialErrors {
        failure: None,
        position: Some((loc.position() - cfg.to_world(geometry.ms)).norm()),
        scatterers: vec![None; np - 1],
        theta: vec![None; np],
        range: vec![None; np],
    };
    let path_err = |k_true: usize, k_est: usize| {
        (
            (truth[k_true].theta - theta.theta(k_est)).abs(),
            SPEED_OF_LIGHT * (truth[k_true].tau - theta.tau(k_est)).abs(),
        )
    };
    let (t0, r0) = path_err(0, loc.los_index);
    errs.theta[0] = Some(t0);
    errs.range[0] = Some(r0);
    let true_nlos: Vec<_> = truth[1..].iter().map(|p| (p.theta, p.tau)).collect();
    let est_nlos: Vec<_> = loc.nlos_indices.iter().map(|&k| (k, theta.theta(k), theta.tau(k))).collect();
    for (i, m) in match_nlos(&true_nlos, &est_nlos).into_iter().enumerate() {
        let Some(k_est) = m else { continue };
        let (t, r) = path_err(i + 1, k_est);
        errs.theta[i + 1] = Some(t);
        errs.range[i + 1] = Some(r);
        let slot = loc.nlos_indices.iter().position(|&k| k == k_est).expect("matched index is NLOS");
        errs.scatterers[i] = loc
            .scatterer(slot)
            .map(|s| (s - cfg.to_world(geometry.scatterers[i])).norm());
    }
    Ok(errs)
}

/// RMSE and spread of one quantity at one sweep point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub rmse: Option<f64>,
    pub q10: Option<f64>,
    pub q50: Option<f64>,
    pub q90: Option<f64>,
    /// Standard error of the RMSE (delta method).
    pub rmse_se: Option<f64>,
    pub trials_ok: usize,
    pub trials_failed: usize,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// RMSE over the available errors; `None` entries count as failures.
pub fn aggregate(errors: &[Option<f64>]) -> Aggregate {
    let mut ok: Vec<f64> = errors.iter().flatten().map(|e| e.abs()).collect();
    let failed = errors.len() - ok.len();
    if ok.is_empty() {
        return Aggregate { rmse: None, q10: None, q50: None, q90: None, rmse_se: None, trials_ok: 0, trials_failed: failed };
    }
    ok.sort_by(f64::total_cmp);
    let n = ok.len() as f64;
    let mse = ok.iter().map(|e| e * e).sum::<f64>() / n;
    let rmse = mse.sqrt();
    let var_sq = if ok.len() > 1 {
        ok.iter().map(|e| (e * e - mse).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let se = if rmse > 0.0 { (var_sq / n).sqrt() / (2.0 * rmse) } else { 0.0 };
    Aggregate {
        rmse: Some(rmse),
        q10: Some(quantile(&ok, 0.1)),
        q50: Some(quantile(&ok, 0.5)),
        q90: Some(quantile(&ok, 0.9)),
        rmse_se: Some(se),
        trials_ok: ok.len(),
        trials_failed: failed,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub value: f64,
    pub method: String,
    pub quantity: String,
    pub rmse: Option<f64>,
    pub bound: Option<f64>,
    pub trials_ok: usize,
    pub trials_failed: usize,
    pub q10: Option<f64>,
    pub q50: Option<f64>,
    pub q90: Option<f64>,
    pub rmse_se: Option<f64>,
    pub variable: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<Row>,
    /// Wall time per sweep point, seconds. Not part of the deterministic
    /// output.
    pub wall_time_s: Vec<f64>,
}

impl SweepResult {
    pub fn find(&self, value: f64, method: &str, quantity: &str) -> Option<&Row> {
        self.rows.iter().find(|r| r.value == value && r.method == method && r.quantity == quantity)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Bound of every reported quantity, in the same units as the errors.
pub fn quantity_bounds(b: &PositionFim, n_paths: usize) -> Vec<(String, f64)> {
    let mut out = vec![("p".to_string(), b.peb)];
    for (k, s) in b.scatterer_bounds.iter().enumerate() {
        out.push((format!("s_{}", k + 1), *s));
    }
    for k in 0..n_paths {
        out.push((format!("theta_{k}"), b.crlb_theta(k)));
        out.push((format!("d_{k}"), SPEED_OF_LIGHT * b.crlb_tau(k)));
    }
    out
}

fn quantity_names(n_paths: usize) -> Vec<String> {
    let mut out = vec!["p".to_string()];
    out.extend((1..n_paths).map(|k| format!("s_{k}")));
    for k in 0..n_paths {
        out.push(format!("theta_{k}"));
        out.push(format!("d_{k}"));
    }
    out
}

fn column(errs: &[TrialErrors], name: &str) -> Vec<Option<f64>> {
    let idx = |s: &str| s.parse::<usize>().expect("numeric suffix");
    errs.iter()
        .map(|e| match name.split_once('_') {
            None => e.position,
            Some(("s", k)) => e.scatterers[idx(k) - 1],
            Some(("theta", k)) => e.theta[idx(k)],
            Some(("d", k)) => e.range[idx(k)],
            _ => unreachable!("unknown quantity {name}"),
        })
        .collect()
}

/// Root of the CRLB averaged over the path realizations of trials
/// `0..draws` at `point`. Realizations whose information matrix is singular
/// are skipped; a quantity is `None` if every draw failed. With `draws = 0`
/// the single realization of [`bounds_for_config`] is used.
pub fn point_bounds(
    cfg: &ScenarioConfig,
    tx: &TxSignalSet,
    seed: u64,
    point: usize,
    draws: usize,
) -> Result<Vec<(String, Option<f64>)>> {
    let np = cfg.n_paths();
    if draws == 0 {
        return Ok(match bounds_for_config(cfg) {
            Ok(b) => quantity_bounds(&b, np).into_iter().map(|(q, v)| (q, Some(v))).collect(),
            Err(_) => quantity_names(np).into_iter().map(|q| (q, None)).collect(),
        });
    }
    let geometry = cfg.geometry()?;
    let per_draw: Vec<Option<Vec<f64>>> = (0..draws)
        .into_par_iter()
        .map(|trial| {
            let real = realize(cfg, &mut trial_rng(seed, point, trial))?;
            let eta = location_params(&real.paths, &geometry);
            Ok(position_bounds(&real.paths, &eta, tx, real.sigma2)
                .ok()
                .map(|b| quantity_bounds(&b, np).into_iter().map(|(_, v)| v * v).collect()))
        })
        .collect::<Result<_>>()?;
    let ok: Vec<&Vec<f64>> = per_draw.iter().flatten().collect();
    Ok(quantity_names(np)
        .into_iter()
        .enumerate()
        .map(|(i, q)| {
            let b = (!ok.is_empty()).then(|| (ok.iter().map(|v| v[i]).sum::<f64>() / ok.len() as f64).sqrt());
            (q, b)
        })
        .collect())
}

/// Runs every point of the sweep: bounds as in [`point_bounds`] over the
/// point's `spec.trials` realizations, RMSEs from the same trials for each
/// method.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let mut rows = Vec::new();
    let mut wall = Vec::new();
    for (point, &value) in spec.values.iter().enumerate() {
        let start = Instant::now();
        let cfg = apply_sweep(&spec.base, spec.var, value)?;
        let tx = build_beamformer(&cfg)?;
        let bounds = point_bounds(&cfg, &tx, spec.seed, point, spec.trials)?;
        let row = |method: &str, quantity: &str, bound: Option<f64>, agg: Option<Aggregate>| {
            let agg = agg.unwrap_or(Aggregate {
                rmse: None,
                q10: None,
                q50: None,
                q90: None,
                rmse_se: None,
                trials_ok: 0,
                trials_failed: 0,
            });
            Row {
                value,
                method: method.to_string(),
                quantity: quantity.to_string(),
                rmse: agg.rmse,
                bound,
                trials_ok: agg.trials_ok,
                trials_failed: agg.trials_failed,
                q10: agg.q10,
                q50: agg.q50,
                q90: agg.q90,
                rmse_se: agg.rmse_se,
                variable: spec.var.to_string(),
            }
        };
        if spec.methods.is_empty() {
            for (q, b) in &bounds {
                rows.push(row("bound", q, *b, None));
            }
        }
        for &method in &spec.methods {
            let errs: Vec<TrialErrors> = (0..spec.trials)
                .into_par_iter()
                .map(|trial| {
                    let mut rng = trial_rng(spec.seed, point, trial);
                    run_trial(&cfg, &tx, method, &spec.estimator, &mut rng)
                })
                .collect::<Result<_>>()?;
            for (q, b) in &bounds {
                rows.push(row(&method.to_string(), q, *b, Some(aggregate(&column(&errs, q)))));
            }
        }
        wall.push(start.elapsed().as_secs_f64());
    }
    Ok(SweepResult { rows, wall_time_s: wall })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::GridSpec;
    use crate::Vec2;

    #[test]
    fn sweep_parsing() {
        let (v, vals) = parse_sweep("snr=-10:5:20").unwrap();
        assert_eq!(v, SweepVar::SnrDb);
        assert_eq!(vals, vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0]);
        let (v, vals) = parse_sweep("mu=0.1:0.1:1").unwrap();
        assert_eq!(v, SweepVar::Mu);
        assert_eq!(vals.len(), 10);
        assert!((vals[9] - 1.0).abs() < 1e-12);
        assert_eq!(parse_sweep("lmr=-5,0,5").unwrap().1, vec![-5.0, 0.0, 5.0]);
        assert!(parse_sweep("snr").is_err());
        assert!(parse_sweep("foo=1:1:2").is_err());
        assert!(parse_sweep("snr=1:0:2").is_err());
    }

    #[test]
    fn mu_geometry() {
        let s = mu_scatterers([10.0, 4.0], 1.0, 3).unwrap();
        let d = (Vec2::new(s[0][0], s[0][1]) - Vec2::new(10.0, 4.0)).norm();
        assert!((d - 20.0).abs() < 1e-12);
        let ang = (s[2][1] - 4.0).atan2(s[2][0] - 10.0).to_degrees();
        assert!((ang - 70.0).abs() < 1e-12);
        assert!(mu_scatterers([0.0, 0.0], 1.0, 4).is_err());
        let base = ScenarioConfig { scatterers: vec![[0.0, 0.0]; 2], lmr_db_per_path: vec![3.0; 2], ..Default::default() };
        let cfg = apply_sweep(&base, SweepVar::Mu, 0.5).unwrap();
        assert_eq!(cfg.scatterers.len(), 2);
        assert_eq!(cfg.lmr_db_per_path, vec![3.0, 3.0]);
        let cfg = apply_sweep(&base, SweepVar::NPaths, 3.0).unwrap();
        assert_eq!(cfg.scatterers.len(), 3);
        assert!(apply_sweep(&base, SweepVar::NPaths, 1.5).is_err());
    }

    #[test]
    fn aggregate_arithmetic() {
        let a = aggregate(&[Some(2.0)]);
        assert_eq!(a.rmse, Some(2.0));
        let a = aggregate(&[Some(3.0), Some(4.0), None]);
        assert!((a.rmse.unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert_eq!((a.trials_ok, a.trials_failed), (2, 1));
        let a = aggregate(&[None, None]);
        assert_eq!(a.rmse, None);
        assert_eq!(a.trials_failed, 2);
        let a = aggregate(&(1..=11).map(|v| Some(v as f64)).collect::<Vec<_>>());
        assert_eq!(a.q50, Some(6.0));
        assert_eq!(a.q10, Some(2.0));
    }

    #[test]
    fn greedy_matching() {
        let truth = [(0.5, 60e-9), (1.2, 80e-9)];
        let est = [(2, 1.21, 80.5e-9), (0, 0.49, 59e-9)];
        assert_eq!(match_nlos(&truth, &est), vec![Some(0), Some(2)]);
        assert_eq!(match_nlos(&truth, &est[..1]), vec![None, Some(2)]);
    }

    #[test]
    fn noiseless_trial_is_exact() {
        let cfg = ScenarioConfig { snr_db: 400.0, ..Default::default() };
        let tx = build_beamformer(&cfg).unwrap();
        let mut rng = trial_rng(1, 0, 0);
        let e = run_trial(&cfg, &tx, Method::Joint, &EstimatorOptions::default(), &mut rng).unwrap();
        assert!(e.failure.is_none());
        // The simplex stops at a 1e-8 diameter, which bounds the accuracy.
        assert!(e.position.unwrap() < 1e-8, "{e:?}");
        assert!(e.scatterers[0].unwrap() < 1e-8, "{e:?}");
    }

    #[test]
    fn trials_are_deterministic() {
        let cfg = ScenarioConfig::default();
        let tx = build_beamformer(&cfg).unwrap();
        let opts = EstimatorOptions::default();
        let a = run_trial(&cfg, &tx, Method::Joint, &opts, &mut trial_rng(7, 2, 3)).unwrap();
        let b = run_trial(&cfg, &tx, Method::Joint, &opts, &mut trial_rng(7, 2, 3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sp_grid_has_quantization_floor() {
        // High SNR: sp-grid can only land on nodes, so its range error is
        // the distance to the nearest node, not zero.
        let cfg = ScenarioConfig { snr_db: 60.0, ..Default::default() };
        let tx = build_beamformer(&cfg).unwrap();
        let opts = EstimatorOptions::default();
        let e = run_trial(&cfg, &tx, Method::SpGrid, &opts, &mut trial_rng(3, 0, 0)).unwrap();
        let truth = crate::scenario::derive_channel_params(&cfg).unwrap();
        let nodes: Vec<f64> = GridSpec::default().taus().iter().map(|t| t * SPEED_OF_LIGHT).collect();
        let floor = nodes.iter().map(|n| (n - truth[0].range()).abs()).fold(f64::INFINITY, f64::min);
        assert!(e.range[0].unwrap() >= floor - 1e-9);
        assert!(e.range[0].unwrap() > 0.0);
    }

    #[test]
    fn sweep_rows_and_determinism() {
        let mut spec = SweepSpec::new(ScenarioConfig::default(), SweepVar::SnrDb, vec![10.0, 20.0]);
        spec.trials = 6;
        spec.methods = vec![Method::Joint, Method::SpGrid];
        let a = run_sweep(&spec).unwrap();
        let b = run_sweep(&spec).unwrap();
        assert_eq!(a.rows, b.rows);
        // 2 points x 2 methods x (p, s_1, theta_0, d_0, theta_1, d_1).
        assert_eq!(a.rows.len(), 2 * 2 * 6);
        let r = a.find(10.0, "joint", "p").unwrap();
        // Bound: RMS of the PEB over the six trial realizations.
        let cfg = apply_sweep(&spec.base, SweepVar::SnrDb, 10.0).unwrap();
        let tx = build_beamformer(&cfg).unwrap();
        let mean_sq = (0..6)
            .map(|t| {
                let real = realize(&cfg, &mut trial_rng(spec.seed, 0, t)).unwrap();
                let eta = location_params(&real.paths, &cfg.geometry().unwrap());
                position_bounds(&real.paths, &eta, &tx, real.sigma2).unwrap().peb.powi(2)
            })
            .sum::<f64>()
            / 6.0;
        assert!((r.bound.unwrap() - mean_sq.sqrt()).abs() <= 1e-12 * mean_sq.sqrt());
        assert_eq!(r.bound, a.find(10.0, "sp-grid", "p").unwrap().bound);
        assert_eq!(r.trials_ok + r.trials_failed, 6);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("value,method,quantity,rmse,bound,trials_ok,trials_failed,"));
    }

    #[test]
    fn bounds_only_sweep() {
        let mut spec = SweepSpec::new(ScenarioConfig::default(), SweepVar::Mu, vec![0.5, 1.0]);
        spec.methods.clear();
        let r = run_sweep(&spec).unwrap();
        assert!(r.rows.iter().all(|row| row.method == "bound" && row.rmse.is_none() && row.bound.is_some()));
        spec.trials = 0;
        let single = run_sweep(&spec).unwrap();
        let cfg = apply_sweep(&spec.base, SweepVar::Mu, 1.0).unwrap();
        assert_eq!(single.find(1.0, "bound", "p").unwrap().bound, Some(bounds_for_config(&cfg).unwrap().peb));
    }
}
