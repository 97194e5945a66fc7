//! Synthetic desk-scale corpus with known best forecasters.
//!
//! Three archetypes, each built so one forecaster family provably wins
//! its regime: weekly-periodic series favor weekly persistence,
//! covariate-linear series are an affine function of features the
//! linear model sees verbatim, and threshold-nonlinear series switch
//! regimes on temperature and hour where only trees can follow. All
//! randomness comes from `(seed, stream)` pairs, so corpora are
//! identical regardless of generation order, and every stochastic
//! component scales with the noise level: at noise 0 the weekly
//! archetype is exactly 336-periodic.

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::forecast::ModelKind;
use crate::ingest::{
    align_covariates, Corpus, LoadSeries, WeatherSeries, STEPS_PER_DAY, STEPS_PER_WEEK,
};

/// Ground-truth file written next to the corpus archive.
pub const TRUTH_FILE: &str = "truth.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Archetype {
    WeeklyPeriodic,
    CovariateLinear,
    ThresholdNonlinear,
}

impl Archetype {
    pub const ALL: [Archetype; 3] = [
        Archetype::WeeklyPeriodic,
        Archetype::CovariateLinear,
        Archetype::ThresholdNonlinear,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Archetype::WeeklyPeriodic => "weekly_periodic",
            Archetype::CovariateLinear => "covariate_linear",
            Archetype::ThresholdNonlinear => "threshold_nonlinear",
        }
    }

    /// The forecaster this archetype is constructed to favor.
    pub fn expected_winner(self) -> ModelKind {
        match self {
            Archetype::WeeklyPeriodic => ModelKind::WeeklyNaive,
            Archetype::CovariateLinear => ModelKind::LinReg,
            Archetype::ThresholdNonlinear => ModelKind::Gbm,
        }
    }

    fn tag(self) -> &'static str {
        match self {
            Archetype::WeeklyPeriodic => "weekly",
            Archetype::CovariateLinear => "linear",
            Archetype::ThresholdNonlinear => "switch",
        }
    }
}

impl std::fmt::Display for Archetype {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Synthetic-corpus parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    /// Number of buildings (default 30).
    pub n_buildings: usize,
    /// Relative archetype weights in [`Archetype::ALL`] order; counts
    /// are apportioned by largest remainder (default equal thirds).
    pub mix: [u32; 3],
    /// Scale of every stochastic component (default 1.0; 0 disables
    /// them entirely).
    pub noise: f64,
    /// Series length in whole weeks (default 10, minimum 8).
    pub weeks: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_buildings: 30,
            mix: [1, 1, 1],
            noise: 1.0,
            weeks: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub corpus: Corpus,
    /// Building id to the archetype it was generated from.
    pub truth: BTreeMap<String, Archetype>,
}

/// Deterministic per-purpose RNG: stream 0 is weather, stream `1 + i`
/// is building `i`.
fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut bytes = [0_u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&stream.to_le_bytes());
    ChaCha8Rng::from_seed(bytes)
}

/// Corpus start: a Monday midnight, so weeks align with calendar weeks.
fn corpus_start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2013, 1, 7, 0, 0, 0).unwrap()
}

/// Largest-remainder apportionment of `total` across `weights`.
fn apportion(total: usize, weights: [u32; 3]) -> [usize; 3] {
    let sum: u64 = weights.iter().map(|&w| u64::from(w)).sum();
    let mut counts = [0_usize; 3];
    let mut fractions = [(0_usize, 0.0_f64); 3];
    let mut assigned = 0;
    for (i, &w) in weights.iter().enumerate() {
        let quota = total as f64 * f64::from(w) / sum as f64;
        counts[i] = quota.floor() as usize;
        assigned += counts[i];
        fractions[i] = (i, quota - quota.floor());
    }
    fractions.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut short = total - assigned;
    while short > 0 {
        for &(i, _) in &fractions {
            if short > 0 {
                counts[i] += 1;
                short -= 1;
            }
        }
    }
    counts
}

/// Shared hourly weather: a bounded random walk plus a diurnal cycle,
/// kept inside [2, 22] degrees so downstream loads stay positive.
fn synth_weather(steps: usize, seed: u64) -> WeatherSeries {
    let mut rng = stream_rng(seed, 0);
    let wobble = Normal::new(0.0, 0.35).expect("valid sigma");
    let hours = steps.div_ceil(2) + 1;
    let mut temperature = Vec::with_capacity(hours);
    let mut dew_point = Vec::with_capacity(hours);
    let mut wind_speed = Vec::with_capacity(hours);
    let mut relative_humidity = Vec::with_capacity(hours);
    let mut walk = 0.0_f64;
    let mut gust = 0.0_f64;
    for h in 0..hours {
        walk = (walk + wobble.sample(&mut rng)).clamp(-4.5, 4.5);
        gust = (gust + wobble.sample(&mut rng)).clamp(-3.0, 3.0);
        let diurnal = 5.0 * (std::f64::consts::TAU * ((h % 24) as f64 - 8.5) / 24.0).sin();
        let temp = (12.0 + walk + diurnal).clamp(2.0, 22.0);
        temperature.push(temp);
        dew_point.push(temp - 3.0 - rng.gen_range(0.0..2.0));
        wind_speed.push((4.0 + gust + rng.gen_range(-1.0..1.0)).clamp(0.0, 15.0));
        relative_humidity.push((78.0 - 1.6 * (temp - 12.0) + rng.gen_range(-4.0..4.0)).clamp(25.0, 98.0));
    }
    WeatherSeries::new(
        corpus_start(),
        Duration::minutes(60),
        temperature,
        dew_point,
        wind_speed,
        relative_humidity,
    )
    .expect("constructed weather is well-formed")
}

/// A week-repeating load with faint white noise: distinct per-day-of-week
/// shapes (so daily persistence misses) and a half-hour parity zigzag
/// plus independent intraday harmonics per day (so the hour and day
/// one-hots cannot express the profile). Stationary on purpose: any
/// drifting level would leak into yesterday-anchored design columns and
/// hand the regression fresher level information than the weekly lag.
/// With the profile dominant and the noise faint, copying last week is
/// optimal and fitted models pay estimation error on top.
fn weekly_periodic_values(steps: usize, noise: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let gauss = Normal::new(0.0, 1.0).expect("unit normal");
    let base = 30.0 + rng.gen_range(0.0..8.0);
    let zig = rng.gen_range(1.5..3.0);
    let mut profile = [0.0_f64; STEPS_PER_WEEK];
    for day in 0..7 {
        let level = rng.gen_range(-5.0..5.0);
        let harmonics: Vec<(f64, f64, f64)> = (1..=3)
            .map(|k| {
                let amplitude = rng.gen_range(0.5..=(4.5 - k as f64));
                let phase = rng.gen_range(0.0..std::f64::consts::TAU);
                (k as f64, amplitude, phase)
            })
            .collect();
        for slot in 0..STEPS_PER_DAY {
            let mut v = base + level;
            for &(k, amplitude, phase) in &harmonics {
                v += amplitude
                    * (std::f64::consts::TAU * k * slot as f64 / STEPS_PER_DAY as f64 + phase)
                        .sin();
            }
            v += if slot % 2 == 0 { -zig } else { zig };
            profile[day * STEPS_PER_DAY + slot] = v;
        }
    }
    (0..steps)
        .map(|t| {
            let v = profile[t % STEPS_PER_WEEK] + noise * 0.05 * gauss.sample(rng);
            v.max(0.0)
        })
        .collect()
}

/// An affine function of exactly the regression design's columns:
/// temperature at `t`, hour-of-day and day-of-week one-hots, plus small
/// noise. The linear forecaster can represent it verbatim.
fn covariate_linear_values(
    temperature: &[f64],
    hours: &[u8],
    dows: &[u8],
    noise: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let gauss = Normal::new(0.0, 1.0).expect("unit normal");
    let intercept = 45.0 + rng.gen_range(0.0..15.0);
    let magnitude = rng.gen_range(0.9..1.6);
    let slope = if rng.gen_bool(0.5) { magnitude } else { -magnitude };
    let hour_coef: Vec<f64> = (0..24).map(|_| rng.gen_range(0.0..6.0)).collect();
    let dow_coef: Vec<f64> = (0..7).map(|_| rng.gen_range(-2.0..2.0)).collect();
    temperature
        .iter()
        .zip(hours)
        .zip(dows)
        .map(|((&temp, &hour), &dow)| {
            let v = intercept
                + slope * temp
                + hour_coef[hour as usize]
                + dow_coef[dow as usize]
                + noise * 0.4 * gauss.sample(rng);
            v.max(0.0)
        })
        .collect()
}

/// Piecewise heating/cooling ramps multiplied by an occupancy step on
/// the hour: the regime interaction is axis-aligned (temperature and
/// hour thresholds), which trees capture and a global affine fit
/// cannot.
fn threshold_nonlinear_values(
    temperature: &[f64],
    hours: &[u8],
    noise: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let gauss = Normal::new(0.0, 1.0).expect("unit normal");
    let heat_below = rng.gen_range(7.0..10.0);
    let cool_above = rng.gen_range(15.0..18.0);
    let heat_slope = rng.gen_range(1.4..2.2);
    let cool_slope = rng.gen_range(1.8..2.6);
    let band = 24.0 + rng.gen_range(0.0..6.0);
    let occupied_from = rng.gen_range(7..=9);
    let occupied_until = rng.gen_range(18..=21);
    let high = 1.5 + rng.gen_range(0.0..0.3);
    let low = 0.55 + rng.gen_range(0.0..0.1);
    temperature
        .iter()
        .zip(hours)
        .map(|(&temp, &hour)| {
            let regime = band
                + heat_slope * (heat_below - temp).max(0.0)
                + cool_slope * (temp - cool_above).max(0.0);
            let occupancy = if (occupied_from..occupied_until).contains(&i32::from(hour)) {
                high
            } else {
                low
            };
            let v = regime * occupancy + noise * 0.7 * gauss.sample(rng);
            v.max(0.0)
        })
        .collect()
}

/// Generate the corpus for `spec`; same spec and seed, same corpus.
pub fn synth_corpus(spec: &SynthSpec, seed: u64) -> Result<SynthCorpus, PipelineError> {
    if spec.n_buildings == 0 {
        return Err(PipelineError::Config(
            "synthetic corpus needs at least one building".into(),
        ));
    }
    if spec.weeks < 8 {
        return Err(PipelineError::Config(format!(
            "synthetic series need at least 8 weeks, got {}",
            spec.weeks
        )));
    }
    if !(spec.noise.is_finite() && spec.noise >= 0.0) {
        return Err(PipelineError::Config(format!(
            "noise level must be a finite non-negative number, got {}",
            spec.noise
        )));
    }
    if spec.mix.iter().all(|&w| w == 0) {
        return Err(PipelineError::Config(
            "archetype mix must have a positive weight".into(),
        ));
    }

    let steps = spec.weeks * STEPS_PER_WEEK;
    let weather = synth_weather(steps, seed);
    let start = corpus_start();

    // Covariates depend only on the timeline, which every building
    // shares, so align once against a throwaway series.
    let probe = LoadSeries::new("probe", start, vec![1.0; steps])
        .expect("probe series is well-formed");
    let frame = align_covariates(&probe, &weather)?;
    let hours: Vec<u8> = frame.calendar().iter().map(|c| c.hour_of_day).collect();
    let dows: Vec<u8> = frame.calendar().iter().map(|c| c.day_of_week).collect();

    let counts = apportion(spec.n_buildings, spec.mix);
    let mut corpus = Corpus::new();
    let mut truth = BTreeMap::new();
    let mut index = 0_usize;
    for (archetype, count) in Archetype::ALL.into_iter().zip(counts) {
        for _ in 0..count {
            let mut rng = stream_rng(seed, 1 + index as u64);
            let values = match archetype {
                Archetype::WeeklyPeriodic => {
                    weekly_periodic_values(steps, spec.noise, &mut rng)
                }
                Archetype::CovariateLinear => covariate_linear_values(
                    frame.temperature(),
                    &hours,
                    &dows,
                    spec.noise,
                    &mut rng,
                ),
                Archetype::ThresholdNonlinear => threshold_nonlinear_values(
                    frame.temperature(),
                    &hours,
                    spec.noise,
                    &mut rng,
                ),
            };
            let id = format!("b{index:04}_{}", archetype.tag());
            let series = LoadSeries::new(id.clone(), start, values)
                .expect("synthetic values are finite and non-negative");
            corpus.insert(series, frame.clone())?;
            truth.insert(id, archetype);
            index += 1;
        }
    }
    Ok(SynthCorpus { corpus, truth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::steps_since_midnight;

    fn tiny_spec() -> SynthSpec {
        SynthSpec {
            n_buildings: 6,
            mix: [1, 1, 1],
            noise: 1.0,
            weeks: 8,
        }
    }

    #[test]
    fn corpus_has_the_requested_shape() {
        let SynthCorpus { corpus, truth } = synth_corpus(&tiny_spec(), 42).unwrap();
        assert_eq!(corpus.len(), 6);
        assert_eq!(truth.len(), 6);
        let mut by_archetype = BTreeMap::new();
        for archetype in truth.values() {
            *by_archetype.entry(*archetype).or_insert(0) += 1;
        }
        for archetype in Archetype::ALL {
            assert_eq!(by_archetype[&archetype], 2, "{archetype}");
        }
        for (id, building) in corpus.iter() {
            assert_eq!(building.series.len(), 8 * STEPS_PER_WEEK, "{id}");
            assert_eq!(building.frame.len(), building.series.len());
            assert_eq!(steps_since_midnight(building.series.start()), Some(0));
            assert!(building.series.values().iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = synth_corpus(&tiny_spec(), 7).unwrap();
        let b = synth_corpus(&tiny_spec(), 7).unwrap();
        assert_eq!(a, b);
        let c = synth_corpus(&tiny_spec(), 8).unwrap();
        assert_ne!(a.corpus, c.corpus);
    }

    #[test]
    fn zero_noise_weekly_archetype_is_exactly_periodic() {
        let spec = SynthSpec {
            n_buildings: 2,
            mix: [1, 0, 0],
            noise: 0.0,
            weeks: 8,
        };
        let SynthCorpus { corpus, truth } = synth_corpus(&spec, 3).unwrap();
        assert!(truth.values().all(|a| *a == Archetype::WeeklyPeriodic));
        for (_, building) in corpus.iter() {
            let v = building.series.values();
            for t in STEPS_PER_WEEK..v.len() {
                assert_eq!(v[t], v[t - STEPS_PER_WEEK], "step {t}");
            }
        }
    }

    #[test]
    fn apportionment_respects_weights_and_total() {
        assert_eq!(apportion(120, [1, 1, 1]), [40, 40, 40]);
        assert_eq!(apportion(10, [1, 1, 1]), [4, 3, 3]);
        assert_eq!(apportion(5, [0, 1, 0]), [0, 5, 0]);
        assert_eq!(apportion(7, [2, 1, 1]), [3, 2, 2]);
        let counts = apportion(11, [3, 5, 7]);
        assert_eq!(counts.iter().sum::<usize>(), 11);
    }

    #[test]
    fn archetype_mix_weights_are_honored() {
        let spec = SynthSpec {
            n_buildings: 9,
            mix: [0, 2, 1],
            noise: 0.5,
            weeks: 8,
        };
        let SynthCorpus { truth, .. } = synth_corpus(&spec, 1).unwrap();
        let linear = truth
            .values()
            .filter(|a| **a == Archetype::CovariateLinear)
            .count();
        let nonlinear = truth
            .values()
            .filter(|a| **a == Archetype::ThresholdNonlinear)
            .count();
        assert_eq!((linear, nonlinear), (6, 3));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = tiny_spec();
        spec.n_buildings = 0;
        assert!(synth_corpus(&spec, 0).is_err());
        let mut spec = tiny_spec();
        spec.weeks = 7;
        assert!(synth_corpus(&spec, 0).is_err());
        let mut spec = tiny_spec();
        spec.noise = f64::NAN;
        assert!(synth_corpus(&spec, 0).is_err());
        let mut spec = tiny_spec();
        spec.mix = [0, 0, 0];
        assert!(synth_corpus(&spec, 0).is_err());
    }

    #[test]
    fn weather_covers_every_series_slot() {
        let SynthCorpus { corpus, .. } = synth_corpus(&tiny_spec(), 5).unwrap();
        for (_, building) in corpus.iter() {
            let temp = building.frame.temperature();
            assert_eq!(temp.len(), building.series.len());
            assert!(temp.iter().all(|t| (2.0..=22.0).contains(t)));
        }
    }
}
