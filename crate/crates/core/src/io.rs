//! File formats used by the command-line tool.
//!
//! Observations are stored either as one JSON document or as a CSV with
//! columns `n,g,re,im` (one row per subcarrier and transmission); the CSV
//! form carries no metadata, so the scenario must come from its own JSON
//! file. Estimates and localization results are JSON. Angles and delays in
//! estimates are in radians and seconds in the base-station frame; positions
//! in localization output are world coordinates in meters.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::estimator::Estimate;
use crate::fim::PositionFim;
use crate::harness::quantity_bounds;
use crate::locmap::LocalizationResult;
use crate::scenario::{PathParams, ScenarioConfig};
use crate::signal::ObservationSet;
use crate::{Complex64, Error, Result};

/// One complex observation `y_g[n]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub n: usize,
    pub g: usize,
    pub re: f64,
    pub im: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationFile {
    pub config: ScenarioConfig,
    pub sigma2: f64,
    pub samples: Vec<Sample>,
    /// Channel parameters the observations were drawn from, if known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Vec<PathParams>>,
}

impl ObservationFile {
    pub fn new(config: ScenarioConfig, obs: &ObservationSet, truth: Option<Vec<PathParams>>) -> Self {
        Self { config, sigma2: obs.sigma2, samples: samples_of(&obs.y), truth }
    }

    pub fn observations(&self) -> Result<ObservationSet> {
        let y = matrix_from_samples(&self.samples, self.config.n_subcarriers, self.config.n_transmissions)?;
        Ok(ObservationSet { y, sigma2: self.sigma2 })
    }
}

pub fn samples_of(y: &DMatrix<Complex64>) -> Vec<Sample> {
    let mut out = Vec::with_capacity(y.len());
    for n in 0..y.nrows() {
        for g in 0..y.ncols() {
            let v = y[(n, g)];
            out.push(Sample { n, g, re: v.re, im: v.im });
        }
    }
    out
}

/// Rebuilds the `N x G` matrix. Every entry must appear exactly once.
pub fn matrix_from_samples(samples: &[Sample], n: usize, g: usize) -> Result<DMatrix<Complex64>> {
    if samples.len() != n * g {
        return Err(Error::Dimension(format!("expected {} samples for {n}x{g}, found {}", n * g, samples.len())));
    }
    let mut y = DMatrix::zeros(n, g);
    let mut seen = vec![false; n * g];
    for s in samples {
        if s.n >= n || s.g >= g {
            return Err(Error::Dimension(format!("sample ({}, {}) outside {n}x{g}", s.n, s.g)));
        }
        if std::mem::replace(&mut seen[s.n * g + s.g], true) {
            return Err(Error::Dimension(format!("sample ({}, {}) appears twice", s.n, s.g)));
        }
        if !(s.re.is_finite() && s.im.is_finite()) {
            return Err(Error::NonFinite(format!("sample ({}, {})", s.n, s.g)));
        }
        y[(s.n, s.g)] = Complex64::new(s.re, s.im);
    }
    Ok(y)
}

pub fn write_samples_csv<W: Write>(samples: &[Sample], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for s in samples {
        wr.serialize(s)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_samples_csv<R: Read>(r: R) -> Result<Vec<Sample>> {
    csv::Reader::from_reader(r).deserialize().map(|s| s.map_err(Error::from)).collect()
}

/// Output of the `estimate` command, self-contained for `locmap`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EstimateFile {
    pub config: ScenarioConfig,
    pub estimate: Estimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocationRow {
    pub kind: String,
    pub index: usize,
    pub x: Option<f64>,
    pub y: Option<f64>,
}

/// Rows `mobile,0,x,y` followed by one `scatterer,k,x,y` per NLOS path.
/// Infeasible scatterers have empty coordinates.
pub fn location_rows(loc: &LocalizationResult) -> Vec<LocationRow> {
    let mut rows = vec![LocationRow {
        kind: "mobile".into(),
        index: 0,
        x: Some(loc.position[0]),
        y: Some(loc.position[1]),
    }];
    for (i, s) in loc.scatterers.iter().enumerate() {
        rows.push(LocationRow { kind: "scatterer".into(), index: i + 1, x: s.map(|v| v[0]), y: s.map(|v| v[1]) });
    }
    rows
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub value: f64,
    pub n_paths: usize,
    pub quantity: String,
    pub bound: f64,
    pub variable: String,
}

/// Square-root bounds of every channel parameter (`r_k`, `phi_k`, `tau_k`,
/// `theta_k`) followed by the position-domain ones (`p`, `s_k`, `d_k`).
pub fn bound_rows(variable: &str, value: f64, b: &PositionFim) -> Vec<BoundRow> {
    let n_paths = b.channel.n_paths;
    let row = |quantity: String, bound: f64| BoundRow { value, n_paths, quantity, bound, variable: variable.to_string() };
    let mut out = Vec::new();
    for k in 0..n_paths {
        for (j, name) in ["r", "phi", "tau", "theta"].iter().enumerate() {
            out.push(row(format!("{name}_{k}"), b.channel_crlb[4 * k + j]));
        }
    }
    out.extend(
        quantity_bounds(b, n_paths)
            .into_iter()
            .filter(|(q, _)| !q.starts_with("theta_"))
            .map(|(q, v)| row(q, v)),
    );
    out
}

pub fn write_csv_rows<T: Serialize, W: Write>(rows: &[T], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// True when the path ends in `.csv` (case-insensitive).
pub fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fim::bounds_for_config;
    use crate::scenario::realize;
    use crate::signal::{build_beamformer, synthesize};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn observation() -> (ScenarioConfig, ObservationSet, Vec<PathParams>) {
        let cfg = ScenarioConfig { n_transmissions: 2, ..Default::default() };
        let tx = build_beamformer(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let real = realize(&cfg, &mut rng).unwrap();
        let obs = synthesize(&real.paths, &tx, real.sigma2, &mut rng).unwrap();
        (cfg, obs, real.paths)
    }

    #[test]
    fn observation_json_round_trip() {
        let (cfg, obs, truth) = observation();
        let file = ObservationFile::new(cfg, &obs, Some(truth));
        let text = serde_json::to_string(&file).unwrap();
        let back: ObservationFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.observations().unwrap(), obs);
    }

    #[test]
    fn observation_csv_round_trip() {
        let (cfg, obs, _) = observation();
        let mut buf = Vec::new();
        write_samples_csv(&samples_of(&obs.y), &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("n,g,re,im\n"));
        let samples = read_samples_csv(buf.as_slice()).unwrap();
        let y = matrix_from_samples(&samples, cfg.n_subcarriers, cfg.n_transmissions).unwrap();
        assert_eq!(y, obs.y);
    }

    #[test]
    fn malformed_samples_are_rejected() {
        let s = |n, g| Sample { n, g, re: 0.0, im: 0.0 };
        assert!(matrix_from_samples(&[s(0, 0)], 1, 2).is_err());
        assert!(matrix_from_samples(&[s(0, 0), s(0, 0)], 1, 2).is_err());
        assert!(matrix_from_samples(&[s(0, 0), s(0, 2)], 1, 2).is_err());
        assert!(matrix_from_samples(&[s(0, 0), s(0, 1)], 1, 2).is_ok());
    }

    #[test]
    fn bound_rows_cover_every_parameter() {
        let cfg = ScenarioConfig::default();
        let b = bounds_for_config(&cfg).unwrap();
        let rows = bound_rows("snr_db", 10.0, &b);
        assert_eq!(rows.len(), 4 * 2 + 1 + 1 + 2);
        let p = rows.iter().find(|r| r.quantity == "p").unwrap();
        assert_eq!(p.bound, b.peb);
        assert!(rows.iter().all(|r| r.bound.is_finite() && r.bound > 0.0));
    }
}
