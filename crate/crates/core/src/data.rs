//! Dataset handling: CSV ingestion, normalization, synthetic flight-like
//! data, additive fault injection and the baseline least-squares model.
//!
//! A [`Dataset`] stores samples row-wise; row `k` is `z(k) = [x(k); u(k)]`
//! with the monitored sensors first and the input channels after them.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SVD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_DT: f64 = 0.1;

/// Time-indexed matrix of monitored sensors and input channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: DMatrix<f64>,
    x_channels: Vec<String>,
    u_channels: Vec<String>,
    dt: f64,
}

impl Dataset {
    pub fn new(
        samples: DMatrix<f64>,
        x_channels: Vec<String>,
        u_channels: Vec<String>,
        dt: f64,
    ) -> Result<Self> {
        let n_x = x_channels.len();
        let n = n_x + u_channels.len();
        if n_x == 0 {
            return Err(Error::InvalidDataset("at least one monitored sensor is required".into()));
        }
        if n < 2 {
            return Err(Error::InvalidDataset(format!("need n >= 2 channels, got {n}")));
        }
        if samples.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: samples.ncols(),
            });
        }
        if samples.nrows() < n {
            return Err(Error::InvalidDataset(format!(
                "need at least n = {n} samples, got {}",
                samples.nrows()
            )));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidDataset(format!("sampling interval must be positive, got {dt}")));
        }
        let names: Vec<&String> = x_channels.iter().chain(&u_channels).collect();
        for k in 0..samples.nrows() {
            for j in 0..n {
                if !samples[(k, j)].is_finite() {
                    return Err(Error::NonFinite {
                        row: k + 1,
                        column: names[j].clone(),
                    });
                }
            }
        }
        Ok(Self {
            samples,
            x_channels,
            u_channels,
            dt,
        })
    }

    pub fn with_dt(mut self, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidDataset(format!("sampling interval must be positive, got {dt}")));
        }
        self.dt = dt;
        Ok(self)
    }

    /// Stack several datasets with identical schemas, e.g. multiple training flights.
    pub fn concat(parts: &[Dataset]) -> Result<Dataset> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidDataset("no datasets to concatenate".into()))?;
        let m: usize = parts.iter().map(Dataset::m).sum();
        let n = first.n();
        let mut samples = DMatrix::zeros(m, n);
        let mut row = 0;
        for p in parts {
            if p.x_channels != first.x_channels || p.u_channels != first.u_channels {
                return Err(Error::InvalidDataset("datasets have different channel schemas".into()));
            }
            samples.rows_mut(row, p.m()).copy_from(&p.samples);
            row += p.m();
        }
        Dataset::new(samples, first.x_channels.clone(), first.u_channels.clone(), first.dt)
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn x_channels(&self) -> &[String] {
        &self.x_channels
    }

    pub fn u_channels(&self) -> &[String] {
        &self.u_channels
    }

    pub fn channel_names(&self) -> impl Iterator<Item = &String> {
        self.x_channels.iter().chain(&self.u_channels)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn m(&self) -> usize {
        self.samples.nrows()
    }

    pub fn n(&self) -> usize {
        self.samples.ncols()
    }

    pub fn n_x(&self) -> usize {
        self.x_channels.len()
    }

    pub fn n_u(&self) -> usize {
        self.u_channels.len()
    }

    /// Sample `z(k)` as a column vector.
    pub fn row(&self, k: usize) -> DVector<f64> {
        self.samples.row(k).transpose()
    }

    pub fn x_block(&self) -> DMatrix<f64> {
        self.samples.columns(0, self.n_x()).into_owned()
    }

    pub fn u_block(&self) -> DMatrix<f64> {
        self.samples.columns(self.n_x(), self.n_u()).into_owned()
    }

    /// Euclidean norm of the input sub-vector `u(k)`.
    pub fn u_norm(&self, k: usize) -> f64 {
        self.samples.row(k).columns(self.n_x(), self.n_u()).norm()
    }

    /// Write the dataset as a header + one row per sample CSV.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(self.channel_names())?;
        for row in self.samples.row_iter() {
            w.write_record(row.iter().map(|v| crate::fmt_f64(*v)))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Read a CSV with a header row and reorder its columns to `[x; u]`.
pub fn load_dataset(path: impl AsRef<Path>, x_names: &[String], u_names: &[String]) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(file, x_names, u_names)
}

pub fn read_dataset<R: std::io::Read>(reader: R, x_names: &[String], u_names: &[String]) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let wanted: Vec<&String> = x_names.iter().chain(u_names).collect();
    let mut index = Vec::with_capacity(wanted.len());
    for name in &wanted {
        let pos = headers
            .iter()
            .position(|h| h == *name)
            .ok_or_else(|| Error::UnknownColumn {
                name: (*name).clone(),
                available: headers.clone(),
            })?;
        index.push(pos);
    }

    let mut values = Vec::new();
    let mut m = 0;
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        for (&pos, name) in index.iter().zip(&wanted) {
            let cell = record.get(pos).ok_or_else(|| {
                Error::InvalidDataset(format!(
                    "row {} has {} columns, expected {}",
                    r + 1,
                    record.len(),
                    headers.len()
                ))
            })?;
            let v: f64 = cell.parse().map_err(|_| Error::NonNumeric {
                row: r + 1,
                column: (*name).clone(),
                value: cell.to_owned(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row: r + 1,
                    column: (*name).clone(),
                });
            }
            values.push(v);
        }
        m += 1;
    }
    let samples = DMatrix::from_row_slice(m, wanted.len(), &values);
    Dataset::new(samples, x_names.to_vec(), u_names.to_vec(), DEFAULT_DT)
}

/// Per-channel offset and scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Column means and population standard deviations.
pub fn compute_normalization(train: &Dataset) -> Result<NormStats> {
    let m = train.m();
    if m < 2 {
        return Err(Error::InvalidDataset("normalization needs at least two samples".into()));
    }
    let mut mean = Vec::with_capacity(train.n());
    let mut std = Vec::with_capacity(train.n());
    for (j, name) in train.channel_names().enumerate() {
        let col = train.samples.column(j);
        let mu = col.sum() / m as f64;
        let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / m as f64;
        let sd = var.sqrt();
        if !(sd > 0.0) || sd <= f64::EPSILON * mu.abs() {
            return Err(Error::ConstantChannel { channel: name.clone() });
        }
        mean.push(mu);
        std.push(sd);
    }
    Ok(NormStats { mean, std })
}

pub fn apply_normalization(ds: &Dataset, stats: &NormStats) -> Result<Dataset> {
    if stats.mean.len() != ds.n() || stats.std.len() != ds.n() {
        return Err(Error::DimensionMismatch {
            expected: ds.n(),
            got: stats.mean.len().min(stats.std.len()),
        });
    }
    if let Some(j) = stats.std.iter().position(|s| !(*s > 0.0)) {
        return Err(Error::InvalidParameter(format!("non-positive scale for channel {j}")));
    }
    let mut samples = ds.samples.clone();
    for (j, mut col) in samples.column_iter_mut().enumerate() {
        col.apply(|v| *v = (*v - stats.mean[j]) / stats.std[j]);
    }
    Dataset::new(samples, ds.x_channels.clone(), ds.u_channels.clone(), ds.dt)
}

/// An interval of elevated control activity in a synthetic record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManeuverSegment {
    pub start: usize,
    pub stop: usize,
    pub intensity: f64,
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

/// Parameters of the latent linear-mixing flight-data stand-in.
///
/// Every channel mixes `latent_dim` shared smooth drivers. Inside a
/// maneuver the shared drivers are multiplied by the segment intensity, so
/// the input channels scale by it as well, and the record picks up an extra
/// independent unmodeled term of size `maneuver_mismatch * (intensity - 1)`
/// on every channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_x: usize,
    pub n_u: usize,
    pub m: usize,
    pub latent_dim: usize,
    pub noise_std: f64,
    #[serde(default)]
    pub maneuver_segments: Vec<ManeuverSegment>,
    pub seed: u64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub maneuver_mismatch: f64,
    /// Seed of the mixing matrices; records sharing it come from the same
    /// plant. Defaults to `seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_seed: Option<u64>,
}

impl SyntheticConfig {
    /// Defaults for the optional fields.
    pub fn new(n_x: usize, n_u: usize, m: usize, latent_dim: usize, noise_std: f64, seed: u64) -> Self {
        Self {
            n_x,
            n_u,
            m,
            latent_dim,
            noise_std,
            maneuver_segments: Vec::new(),
            seed,
            dt: DEFAULT_DT,
            maneuver_mismatch: 0.0,
            system_seed: None,
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.n_x + self.n_u;
        if self.n_x == 0 || n < 2 {
            return Err(Error::InvalidParameter(format!(
                "need n_x >= 1 and n_x + n_u >= 2, got n_x = {}, n_u = {}",
                self.n_x, self.n_u
            )));
        }
        if self.latent_dim == 0 || self.latent_dim >= n {
            return Err(Error::InvalidParameter(format!(
                "latent_dim must be in [1, n) for a null space to exist; got {} with n = {n}",
                self.latent_dim
            )));
        }
        if self.m < n {
            return Err(Error::InvalidParameter(format!("m = {} is smaller than n = {n}", self.m)));
        }
        for (name, v) in [
            ("noise_std", self.noise_std),
            ("maneuver_mismatch", self.maneuver_mismatch),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {v}")));
            }
        }
        for s in &self.maneuver_segments {
            if s.start >= s.stop || s.stop > self.m {
                return Err(Error::InvalidParameter(format!(
                    "maneuver segment [{}, {}) outside [0, {})",
                    s.start, s.stop, self.m
                )));
            }
            if !(s.intensity > 0.0 && s.intensity.is_finite()) {
                return Err(Error::InvalidParameter(format!("maneuver intensity must be positive, got {}", s.intensity)));
            }
        }
        Ok(())
    }

    /// Fraction of samples covered by at least one maneuver segment.
    pub fn maneuver_coverage(&self) -> f64 {
        let mut covered = vec![false; self.m];
        for s in &self.maneuver_segments {
            for c in covered.iter_mut().take(s.stop.min(self.m)).skip(s.start) {
                *c = true;
            }
        }
        covered.iter().filter(|c| **c).count() as f64 / self.m.max(1) as f64
    }
}

struct LatentSignal {
    amps: [f64; 3],
    freqs: [f64; 3],
    phases: [f64; 3],
}

impl LatentSignal {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let mut s = LatentSignal {
            amps: [0.0; 3],
            freqs: [0.0; 3],
            phases: [0.0; 3],
        };
        for h in 0..3 {
            s.amps[h] = rng.random_range(0.3..1.0);
            s.freqs[h] = rng.random_range(0.0005..0.02);
            s.phases[h] = rng.random_range(0.0..std::f64::consts::TAU);
        }
        s
    }

    fn at(&self, t: f64) -> f64 {
        (0..3)
            .map(|h| self.amps[h] * (std::f64::consts::TAU * self.freqs[h] * t + self.phases[h]).sin())
            .sum()
    }
}

/// Unit-variance AR(1) process.
struct Ar1 {
    coef: f64,
    gain: f64,
    state: Vec<f64>,
}

impl Ar1 {
    fn new(coef: f64, dim: usize) -> Self {
        Self {
            coef,
            gain: (1.0 - coef * coef).sqrt(),
            state: vec![0.0; dim],
        }
    }

    fn step(&mut self, rng: &mut ChaCha8Rng) {
        for s in &mut self.state {
            *s = self.coef * *s + self.gain * rng.sample::<f64, _>(StandardNormal);
        }
    }
}

/// Deterministic flight-like record: smooth latent mixtures plus white noise.
pub fn generate_synthetic_flight(cfg: &SyntheticConfig) -> Result<Dataset> {
    cfg.validate()?;
    let n = cfg.n_x + cfg.n_u;
    let l = cfg.latent_dim;
    let mut plant = ChaCha8Rng::seed_from_u64(cfg.system_seed.unwrap_or(cfg.seed));
    let mut mixing = DMatrix::from_fn(n, l, |_, _| plant.sample::<f64, _>(StandardNormal));
    // Well-conditioned input rows: an ill-conditioned input map would blow
    // input noise up into a few sensors when predicting them from u.
    let input_rows = mixing.rows(cfg.n_x, cfg.n_u).into_owned();
    let svd = SVD::new(input_rows, true, true);
    if let (Some(u), Some(v_t)) = (svd.u, svd.v_t) {
        let scale = (l as f64).sqrt();
        mixing.rows_mut(cfg.n_x, cfg.n_u).copy_from(&(u * v_t * scale));
    }

    // Trajectory randomness lives on its own stream so a shared plant seed
    // still gives independent records.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let signals: Vec<LatentSignal> = (0..l).map(|_| LatentSignal::random(&mut rng)).collect();

    // AR(1) components keep the drivers smooth but non-periodic.
    let mut shared_ar = Ar1::new(0.995, l);
    // One unmodeled driver per channel, so no other channel can explain it.
    let mut mismatch_ar = Ar1::new(0.99, n);

    let mut intensity = vec![1.0; cfg.m];
    for seg in &cfg.maneuver_segments {
        for v in &mut intensity[seg.start..seg.stop] {
            *v *= seg.intensity;
        }
    }

    let mut samples = DMatrix::zeros(cfg.m, n);
    let mut latent = DVector::zeros(l);
    for k in 0..cfg.m {
        shared_ar.step(&mut rng);
        mismatch_ar.step(&mut rng);
        for (j, sig) in signals.iter().enumerate() {
            latent[j] = intensity[k] * (sig.at(k as f64) + 0.5 * shared_ar.state[j]);
        }
        let mut z = &mixing * &latent;
        let excess = intensity[k] - 1.0;
        if excess != 0.0 && cfg.maneuver_mismatch > 0.0 {
            let gain = cfg.maneuver_mismatch * excess;
            for (i, d) in mismatch_ar.state.iter().enumerate() {
                z[i] += gain * d;
            }
        }
        for c in 0..n {
            let noise = if cfg.noise_std > 0.0 {
                cfg.noise_std * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            samples[(k, c)] = z[c] + noise;
        }
    }

    let x_channels = (1..=cfg.n_x).map(|i| format!("x{i}")).collect();
    let u_channels = (1..=cfg.n_u).map(|i| format!("u{i}")).collect();
    Dataset::new(samples, x_channels, u_channels, cfg.dt)
}

/// Single additive rectangular sensor fault.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub channel: usize,
    pub amplitude: f64,
    pub start: usize,
    pub stop: usize,
}

impl FaultSpec {
    pub fn validate(&self, ds: &Dataset) -> Result<()> {
        if self.channel >= ds.n_x() {
            return Err(Error::InvalidFault(format!(
                "channel {} out of range (n_x = {})",
                self.channel,
                ds.n_x()
            )));
        }
        if self.start >= self.stop || self.stop > ds.m() {
            return Err(Error::InvalidFault(format!(
                "interval [{}, {}) outside [0, {})",
                self.start,
                self.stop,
                ds.m()
            )));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::InvalidFault("amplitude must be finite".into()));
        }
        Ok(())
    }

    pub fn is_active(&self, k: usize) -> bool {
        (self.start..self.stop).contains(&k)
    }

    pub fn len(&self) -> usize {
        self.stop.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Boolean mask of fault activity over a record of `m` samples.
    pub fn mask(&self, m: usize) -> Vec<bool> {
        (0..m).map(|k| self.is_active(k)).collect()
    }
}

/// Return a copy with `amplitude` added to the faulty channel inside `[start, stop)`.
pub fn inject_fault(ds: &Dataset, fault: &FaultSpec) -> Result<Dataset> {
    fault.validate(ds)?;
    let mut out = ds.clone();
    for k in fault.start..fault.stop {
        out.samples[(k, fault.channel)] += fault.amplitude;
    }
    Ok(out)
}

/// Linear multivariate model predicting each sensor from the other sensors and the inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsModel {
    #[serde(with = "crate::rowmajor")]
    pub wx: DMatrix<f64>,
    #[serde(with = "crate::rowmajor")]
    pub wu: DMatrix<f64>,
    pub mean_abs_error: Vec<f64>,
}

impl LsModel {
    /// `W' = W_x - I`.
    pub fn w_prime(&self) -> DMatrix<f64> {
        &self.wx - DMatrix::identity(self.wx.nrows(), self.wx.ncols())
    }

    /// `W = [W' W_u]`, so that `W z(k) ≈ 0` on fault-free data.
    pub fn w(&self) -> DMatrix<f64> {
        let n_x = self.wx.nrows();
        let n_u = self.wu.ncols();
        let mut w = DMatrix::zeros(n_x, n_x + n_u);
        w.columns_mut(0, n_x).copy_from(&self.w_prime());
        w.columns_mut(n_x, n_u).copy_from(&self.wu);
        w
    }

    /// Estimate of `x(k)` from `z(k)`.
    pub fn predict(&self, z: &DVector<f64>) -> DVector<f64> {
        let n_x = self.wx.nrows();
        &self.wx * z.rows(0, n_x) + &self.wu * z.rows(n_x, self.wu.ncols())
    }
}

const RANK_TOL: f64 = 1e-10;

/// Ordinary least-squares fit of every sensor on the remaining sensors and all inputs.
pub fn fit_ls_model(train: &Dataset) -> Result<LsModel> {
    let n_x = train.n_x();
    let n_u = train.n_u();
    let n = train.n();
    let m = train.m();
    let z = train.samples();
    let mut wx = DMatrix::zeros(n_x, n_x);
    let mut wu = DMatrix::zeros(n_x, n_u);
    let mut mean_abs_error = Vec::with_capacity(n_x);

    for i in 0..n_x {
        let cols: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let a = z.select_columns(&cols);
        let b = z.column(i).into_owned();
        let svd = SVD::new(a.clone(), true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smax > 0.0) || smin <= RANK_TOL * smax {
            return Err(Error::RankDeficient {
                row: i,
                channel: train.x_channels()[i].clone(),
            });
        }
        let coef = svd.solve(&b, 0.0).map_err(|e| Error::Svd(e.to_string()))?;
        for (c, &j) in cols.iter().enumerate() {
            if j < n_x {
                wx[(i, j)] = coef[c];
            } else {
                wu[(i, j - n_x)] = coef[c];
            }
        }
        let resid = &b - &a * &coef;
        mean_abs_error.push(resid.iter().map(|r| r.abs()).sum::<f64>() / m as f64);
    }
    Ok(LsModel { wx, wu, mean_abs_error })
}

/// Round a non-negative value to one significant figure.
pub fn round_one_significant(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let exp = x.abs().log10().floor() as i32;
    if exp < 0 {
        let scale = 10f64.powi(-exp);
        let r = (x * scale).round();
        // 9.5 rounds up to 10, still one significant figure.
        r / scale
    } else {
        let scale = 10f64.powi(exp);
        (x / scale).round() * scale
    }
}

/// Fault amplitude as `factor` times the rounded mean estimation error of a sensor.
pub fn calibrate_fault_amplitude(model: &LsModel, channel: usize, factor: f64) -> Result<f64> {
    let mae = model.mean_abs_error.get(channel).ok_or_else(|| {
        Error::InvalidParameter(format!(
            "channel {channel} out of range (n_x = {})",
            model.mean_abs_error.len()
        ))
    })?;
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::InvalidParameter(format!("factor must be positive, got {factor}")));
    }
    Ok(factor * round_one_significant(*mae))
}
