//! Seeded synthetic app-usage logs.
//!
//! Each user has a Dirichlet-drawn app preference, a diurnal activity curve
//! made of up to three wrapped Gaussian bumps and a Poisson daily event
//! rate. Profiles come from stream 0 of the config seed; user `i`'s log
//! comes from a seed derived from `(seed, i)`, so users can be generated in
//! any order or in parallel with identical output.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate, NaiveDateTime, NaiveTime};
use rand::Rng as _;
use rand_distr::{Distribution, Gamma, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::applog::{AppEvent, EventLog, Manifest, ManifestEntry};
use crate::rng;
use crate::{Error, Result};

pub const MINUTES_PER_DAY: f64 = 1440.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiurnalBump {
    /// Minute of day in `[0, 1440)`.
    pub mean: f64,
    pub std_dev: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    pub preference: Vec<f64>,
    pub diurnal: Vec<DiurnalBump>,
    pub daily_event_rate: f64,
}

impl UserProfile {
    pub fn validate(&self) -> Result<()> {
        let psum: f64 = self.preference.iter().sum();
        if self.preference.is_empty() || (psum - 1.0).abs() > 1e-9 || self.preference.iter().any(|&p| p < 0.0) {
            return Err(Error::Param(format!("preference of `{}` is not a distribution", self.user_id)));
        }
        let wsum: f64 = self.diurnal.iter().map(|b| b.weight).sum();
        if self.diurnal.is_empty() || self.diurnal.len() > 3 || (wsum - 1.0).abs() > 1e-9 {
            return Err(Error::Param(format!("diurnal mixture of `{}` is invalid", self.user_id)));
        }
        if self.diurnal.iter().any(|b| !(0.0..MINUTES_PER_DAY).contains(&b.mean) || b.std_dev <= 0.0 || b.weight < 0.0) {
            return Err(Error::Param(format!("diurnal bump of `{}` out of range", self.user_id)));
        }
        if self.daily_event_rate <= 0.0 || !self.daily_event_rate.is_finite() {
            return Err(Error::Param("daily_event_rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_users: usize,
    pub vocab_size: usize,
    pub n_days: usize,
    pub seed: u64,
    /// Dirichlet concentration of app preferences; small values give
    /// peaked, easily separated users.
    pub concentration: f64,
    /// Range of bump standard deviations, in minutes.
    pub sharpness: (f64, f64),
    /// Range of mean events per day.
    pub event_rate: (f64, f64),
    pub start_date: NaiveDate,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_users: 15,
            vocab_size: 100,
            n_days: 40,
            seed: 7,
            concentration: 0.05,
            sharpness: (20.0, 90.0),
            event_rate: (80.0, 240.0),
            start_date: NaiveDate::from_ymd_opt(2012, 1, 2).expect("valid date"),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_users < 2 {
            return Err(Error::Param("n_users must be at least 2".into()));
        }
        if self.n_days < 1 {
            return Err(Error::Param("n_days must be at least 1".into()));
        }
        if self.vocab_size < 2 {
            return Err(Error::Param("vocab_size must be at least 2".into()));
        }
        if !(self.concentration > 0.0 && self.concentration.is_finite()) {
            return Err(Error::Param("concentration must be positive".into()));
        }
        let (lo, hi) = self.sharpness;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::Param("sharpness range must satisfy 0 < lo <= hi".into()));
        }
        let (lo, hi) = self.event_rate;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::Param("event rate range must satisfy 0 < lo <= hi".into()));
        }
        Ok(())
    }
}

pub fn package_name(index: usize, vocab_size: usize) -> String {
    let width = vocab_size.saturating_sub(1).to_string().len();
    format!("com.synth.app{index:0width$}")
}

pub fn user_name(index: usize, n_users: usize) -> String {
    let width = n_users.saturating_sub(1).to_string().len().max(2);
    format!("user{index:0width$}")
}

fn dirichlet(rng: &mut rng::Rng, alpha: f64, n: usize) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha validated positive");
    let mut draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = draws.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        draws.iter_mut().for_each(|d| *d /= sum);
    } else {
        // every gamma draw underflowed: the limit of the distribution is a vertex
        draws.iter_mut().for_each(|d| *d = 0.0);
        draws[rng.random_range(0..n)] = 1.0;
    }
    draws
}

pub fn generate_profiles(config: &SynthConfig) -> Result<Vec<UserProfile>> {
    config.validate()?;
    let mut rng = rng::stream(config.seed, 0);
    let profiles = (0..config.n_users)
        .map(|u| {
            let preference = dirichlet(&mut rng, config.concentration, config.vocab_size);
            let n_bumps = rng.random_range(1..=3usize);
            let weights = dirichlet(&mut rng, 2.0, n_bumps);
            let (slo, shi) = config.sharpness;
            let diurnal = weights
                .into_iter()
                .map(|weight| DiurnalBump {
                    mean: rng.random_range(0.0..MINUTES_PER_DAY),
                    std_dev: if shi > slo { rng.random_range(slo..shi) } else { slo },
                    weight,
                })
                .collect();
            let (rlo, rhi) = config.event_rate;
            let daily_event_rate = if rhi > rlo { rng.random_range(rlo..rhi) } else { rlo };
            UserProfile { user_id: user_name(u, config.n_users), preference, diurnal, daily_event_rate }
        })
        .collect();
    Ok(profiles)
}

/// Draws a minute of day from the profile's wrapped Gaussian mixture.
pub fn sample_minute(profile: &UserProfile, rng: &mut rng::Rng) -> u32 {
    let mut u: f64 = rng.random();
    let mut bump = profile.diurnal.last().expect("validated non-empty");
    for b in &profile.diurnal {
        if u < b.weight {
            bump = b;
            break;
        }
        u -= b.weight;
    }
    let normal = Normal::new(bump.mean, bump.std_dev).expect("validated std_dev");
    let m = normal.sample(rng).rem_euclid(MINUTES_PER_DAY);
    (m.floor() as u32).min(1439)
}

fn sample_app(cdf: &[f64], rng: &mut rng::Rng) -> usize {
    let u: f64 = rng.random::<f64>() * cdf[cdf.len() - 1];
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

/// Generates `n_days` days of events starting 2012-01-02.
pub fn generate_log(profile: &UserProfile, n_days: usize, seed: u64) -> Result<EventLog> {
    let start = SynthConfig::default().start_date;
    generate_log_from(profile, start, n_days, seed)
}

pub fn generate_log_from(profile: &UserProfile, start: NaiveDate, n_days: usize, seed: u64) -> Result<EventLog> {
    profile.validate()?;
    let vocab_size = profile.preference.len();
    let mut cdf = profile.preference.clone();
    for i in 1..cdf.len() {
        cdf[i] += cdf[i - 1];
    }
    let poisson = Poisson::new(profile.daily_event_rate).map_err(|e| Error::Param(e.to_string()))?;
    let mut rng = rng::stream(seed, 0);
    let mut events = Vec::new();
    for d in 0..n_days {
        let date = start + Duration::days(d as i64);
        let count = poisson.sample(&mut rng) as usize;
        for _ in 0..count {
            let minute = sample_minute(profile, &mut rng);
            let app = sample_app(&cdf, &mut rng);
            let time = NaiveTime::from_hms_opt(minute / 60, minute % 60, 0).expect("minute < 1440");
            events.push(AppEvent::new(NaiveDateTime::new(date, time), package_name(app, vocab_size))?);
        }
    }
    Ok(EventLog::new(profile.user_id.clone(), events))
}

/// Profiles plus one log per user. User `i` is generated from
/// `rng::mix(seed, i + 1)`.
pub fn generate_dataset(config: &SynthConfig) -> Result<(Vec<UserProfile>, Vec<EventLog>)> {
    let profiles = generate_profiles(config)?;
    let logs = profiles
        .par_iter()
        .enumerate()
        .map(|(i, p)| generate_log_from(p, config.start_date, config.n_days, rng::mix(config.seed, i as u64 + 1)))
        .collect::<Result<Vec<_>>>()?;
    Ok((profiles, logs))
}

/// Writes `manifest.json`, `<user>.csv` per user and `profiles.json`.
/// Returns the manifest path.
pub fn write_dataset(dir: &Path, logs: &[EventLog], profiles: &[UserProfile]) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut manifest = Manifest::default();
    for log in logs {
        let file = format!("{}.csv", log.user_id);
        log.write_csv(BufWriter::new(File::create(dir.join(&file))?))?;
        manifest.users.push(ManifestEntry { id: log.user_id.clone(), path: PathBuf::from(file) });
    }
    let manifest_path = dir.join("manifest.json");
    manifest.save(&manifest_path)?;
    serde_json::to_writer_pretty(BufWriter::new(File::create(dir.join("profiles.json"))?), profiles)?;
    Ok(manifest_path)
}
