//! Per-beam hourly traffic series and the supervised samples built from them.
//!
//! CSV schema (header required):
//! `hour,downlink,uplink,communication,streaming,cloud_services,system_updates`.
//! Shares are fractions in `[0, 1]` summing to one.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Matrix;

pub const CATEGORIES: [&str; 4] = ["communication", "streaming", "cloud_services", "system_updates"];
pub const CSV_HEADER: [&str; 7] = [
    "hour",
    "downlink",
    "uplink",
    "communication",
    "streaming",
    "cloud_services",
    "system_updates",
];

/// Shares within this distance of summing to one are renormalized on load.
pub const SHARE_REPAIR_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficRecord {
    pub hour: u64,
    pub downlink: f64,
    pub uplink: f64,
    pub shares: [f64; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamSeries {
    pub beam_id: String,
    pub records: Vec<TrafficRecord>,
}

/// A `W`-hour window of `[dl_t, ul_t]` pairs (oldest first) and the next hour's shares.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedSample {
    pub features: Vec<f64>,
    pub target: [f64; 4],
}

impl BeamSeries {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn mean_downlink(&self) -> f64 {
        self.records.iter().map(|r| r.downlink).sum::<f64>() / self.records.len().max(1) as f64
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = CSV_HEADER.join(",");
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{:?},{:?},{:?},{:?},{:?},{:?}",
                r.hour, r.downlink, r.uplink, r.shares[0], r.shares[1], r.shares[2], r.shares[3]
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }
}

/// Loads one beam; the beam id is the file stem.
pub fn load_csv(path: &Path) -> Result<BeamSeries> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let beam_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "beam".to_string());
    parse_csv(&beam_id, &text)
}

/// Parses CSV text in the documented schema into a validated series.
pub fn parse_csv(beam_id: &str, text: &str) -> Result<BeamSeries> {
    let ingest = |line: usize, message: String| Error::Ingest {
        source_name: beam_id.to_string(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| ingest(1, e.to_string()))?.clone();
    let mut columns = [0usize; 7];
    for (slot, name) in columns.iter_mut().zip(CSV_HEADER) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ingest(1, format!("missing column `{name}`")))?;
    }

    let mut records: Vec<TrafficRecord> = Vec::new();
    let mut rejected = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            ingest(line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let field = |idx: usize| -> Result<&str> {
            row.get(columns[idx])
                .ok_or_else(|| ingest(line, format!("missing value for `{}`", CSV_HEADER[idx])))
        };
        let hour: u64 = field(0)?.parse().map_err(|_| {
            ingest(
                line,
                format!(
                    "hour `{}` is not a non-negative integer",
                    row.get(columns[0]).unwrap_or("")
                ),
            )
        })?;
        let mut reals = [0.0; 6];
        for (k, v) in reals.iter_mut().enumerate() {
            let raw = field(k + 1)?;
            *v = raw
                .parse::<f64>()
                .map_err(|_| ingest(line, format!("`{}` value `{raw}` is not a number", CSV_HEADER[k + 1])))?;
            if !v.is_finite() {
                return Err(ingest(line, format!("`{}` is {raw}", CSV_HEADER[k + 1])));
            }
        }
        let [downlink, uplink, s0, s1, s2, s3] = reals;
        if downlink < 0.0 || uplink < 0.0 {
            return Err(ingest(line, "traffic volumes must be non-negative".into()));
        }
        if let Some(prev) = records.last() {
            if hour != prev.hour + 1 {
                return Err(ingest(line, format!("hour {hour} does not follow hour {}", prev.hour)));
            }
        }
        let raw_shares = [s0, s1, s2, s3];
        let sum: f64 = raw_shares.iter().sum();
        let in_unit = raw_shares.iter().all(|s| (0.0..=1.0).contains(s));
        if !in_unit || (sum - 1.0).abs() > SHARE_REPAIR_TOLERANCE {
            rejected.push(line);
            // keep the hour chain intact so later rows are still checked
            records.push(TrafficRecord {
                hour,
                downlink,
                uplink,
                shares: raw_shares,
            });
            continue;
        }
        let shares = raw_shares.map(|s| s / sum);
        records.push(TrafficRecord {
            hour,
            downlink,
            uplink,
            shares,
        });
    }
    if !rejected.is_empty() {
        return Err(Error::RejectedRows {
            source_name: beam_id.to_string(),
            lines: rejected,
        });
    }
    if records.is_empty() {
        return Err(ingest(1, "no data rows".into()));
    }
    Ok(BeamSeries {
        beam_id: beam_id.to_string(),
        records,
    })
}

/// Parameters of one synthetic beam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticProfile {
    pub beam_id: String,
    pub downlink_level: f64,
    pub uplink_level: f64,
    /// Relative amplitude of the daily cycle.
    pub diurnal_amplitude: f64,
    pub phase_hours: f64,
    /// Std of the AR(1) innovations, relative to the level.
    pub traffic_noise: f64,
    /// Std of the noise added to the share logits.
    pub share_noise: f64,
}

impl SyntheticProfile {
    /// Profile for the `index`-th beam; beams differ in level, amplitude and phase.
    pub fn beam(index: usize) -> Self {
        let i = index as f64;
        SyntheticProfile {
            beam_id: format!("beam_{index}"),
            downlink_level: 120.0 + 35.0 * i,
            uplink_level: 25.0 + 6.0 * i,
            diurnal_amplitude: 0.45 + 0.05 * (index % 4) as f64,
            phase_hours: 3.0 * i,
            traffic_noise: 0.04,
            share_noise: 0.05,
        }
    }
}

/// Seed for the `index`-th synthetic beam of a run seeded with `seed`.
pub fn beam_seed(seed: u64, index: usize) -> u64 {
    crate::seed::derive_seed(seed, "synthetic-beam", &[index as u64])
}

/// `n_beams` synthetic beams named `beam_0..`, each with its own profile and seed.
pub fn generate_beams(seed: u64, hours: usize, n_beams: usize) -> Vec<BeamSeries> {
    (0..n_beams)
        .map(|i| generate_synthetic(beam_seed(seed, i), hours, &SyntheticProfile::beam(i)))
        .collect()
}

/// Seeded synthetic beam: diurnal uplink/downlink with AR(1) noise, and
/// category shares from a fixed nonlinear map of (downlink, uplink, hour of
/// day) pushed through a softmax.
pub fn generate_synthetic(seed: u64, hours: usize, profile: &SyntheticProfile) -> BeamSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = move || -> f64 { StandardNormal.sample(&mut rng) };
    let amp = profile.diurnal_amplitude;
    let (mut ar_dl, mut ar_ul) = (0.0, 0.0);
    let records = (0..hours)
        .map(|h| {
            let theta = 2.0 * PI * (h as f64 + profile.phase_hours) / 24.0;
            ar_dl = 0.7 * ar_dl + profile.traffic_noise * normal();
            ar_ul = 0.7 * ar_ul + profile.traffic_noise * normal();
            let dl_rel = amp * theta.sin() + 0.35 * amp * (2.0 * theta + 0.5).sin() + ar_dl;
            let ul_rel = 0.8 * amp * (theta - 0.6).sin() + 0.25 * amp * (2.0 * theta).cos() + ar_ul;
            let downlink = (profile.downlink_level * (1.0 + dl_rel)).max(0.0);
            let uplink = (profile.uplink_level * (1.0 + ul_rel)).max(0.0);

            let u = dl_rel / amp;
            let v = ul_rel / amp;
            let hod = 2.0 * PI * ((h % 24) as f64) / 24.0;
            let logits = [
                1.2 * (2.5 * v).tanh() + 0.4 * hod.cos(),
                1.6 * (1.8 * u).sin() + 0.6 * u * v,
                1.1 * (3.0 * (u - v)).tanh() - 0.3,
                1.8 * (-4.0 * (u + 0.5).powi(2)).exp() - 0.8,
            ]
            .map(|z| z + profile.share_noise * normal());
            TrafficRecord {
                hour: h as u64,
                downlink,
                uplink,
                shares: softmax(logits),
            }
        })
        .collect();
    BeamSeries {
        beam_id: profile.beam_id.clone(),
        records,
    }
}

fn softmax(z: [f64; 4]) -> [f64; 4] {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = z.map(|v| (v - max).exp());
    let sum: f64 = e.iter().sum();
    e.map(|v| v / sum)
}

/// Overlapping windows: sample `t` reads hours `[t, t + W)` and targets hour `t + W`.
pub fn make_windows(series: &BeamSeries, window: usize) -> Result<Vec<WindowedSample>> {
    if window == 0 {
        return Err(Error::Config("window must be at least 1 hour".into()));
    }
    if series.len() < window + 1 {
        return Err(Error::Config(format!(
            "beam {} has {} hours; a {window}-hour window needs at least {}",
            series.beam_id,
            series.len(),
            window + 1
        )));
    }
    Ok(series
        .records
        .windows(window + 1)
        .map(|w| WindowedSample {
            features: w[..window].iter().flat_map(|r| [r.downlink, r.uplink]).collect(),
            target: w[window].shares,
        })
        .collect())
}

/// Chronological split: the first `floor(train_fraction · n)` samples train.
pub fn chrono_split(
    samples: &[WindowedSample],
    train_fraction: f64,
) -> Result<(Vec<WindowedSample>, Vec<WindowedSample>)> {
    let n_train = split_point(samples.len(), train_fraction)?;
    Ok((samples[..n_train].to_vec(), samples[n_train..].to_vec()))
}

/// Number of training samples for a split of `n` items.
pub fn split_point(n: usize, train_fraction: f64) -> Result<usize> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train_fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    // the epsilon absorbs representation error such as 0.29 * 100 = 28.999...
    let n_train = (train_fraction * n as f64 + 1e-9).floor() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::Config(format!(
            "splitting {n} samples at {train_fraction} leaves an empty train or test set"
        )));
    }
    Ok(n_train)
}

/// Per-feature min-max scaler fitted on training features only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Scaler {
    pub fn fit(train: &[WindowedSample]) -> Result<Scaler> {
        let first = train
            .first()
            .ok_or_else(|| Error::Config("cannot fit a scaler on an empty training set".into()))?;
        let mut min = first.features.clone();
        let mut max = first.features.clone();
        for s in train {
            if s.features.len() != min.len() {
                return Err(Error::Contract("samples have differing feature lengths".into()));
            }
            for (k, &v) in s.features.iter().enumerate() {
                min[k] = min[k].min(v);
                max[k] = max[k].max(v);
            }
        }
        Ok(Scaler { min, max })
    }

    /// Maps features to `(x - min) / (max - min)`; constant features map to 0.
    /// Targets are left as shares. Values outside the fit range fall outside `[0, 1]`.
    pub fn apply(&self, samples: &[WindowedSample]) -> Result<Vec<WindowedSample>> {
        samples
            .iter()
            .map(|s| {
                if s.features.len() != self.min.len() {
                    return Err(Error::Contract(format!(
                        "scaler fitted on {} features applied to {}",
                        self.min.len(),
                        s.features.len()
                    )));
                }
                let features = s
                    .features
                    .iter()
                    .zip(self.min.iter().zip(&self.max))
                    .map(|(&x, (&lo, &hi))| if hi > lo { (x - lo) / (hi - lo) } else { 0.0 })
                    .collect();
                Ok(WindowedSample {
                    features,
                    target: s.target,
                })
            })
            .collect()
    }
}

/// Stacks samples into `(features, targets)` matrices.
pub fn to_matrices(samples: &[WindowedSample]) -> Result<(Matrix, Matrix)> {
    let x = Matrix::from_rows(&samples.iter().map(|s| s.features.as_slice()).collect::<Vec<_>>())?;
    let y = Matrix::from_rows(&samples.iter().map(|s| s.target.as_slice()).collect::<Vec<_>>())?;
    Ok((x, y))
}
