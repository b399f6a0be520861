//! Synthetic CGM-like recordings.
//!
//! Not a physiological model. Each patient has a flat baseline, a daily
//! sinusoidal drift and meals that add a Gaussian bump followed by a
//! smaller, wider negative correction lobe; AR(1) sensor noise is added on
//! top and the result is rounded and clamped to the sensor range.

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::series::SAMPLE_MINUTES;
use super::GlucoseSeries;
use crate::error::{Error, Result};
use crate::quantize::{GLUCOSE_MAX, GLUCOSE_MIN};

const SAMPLES_PER_DAY: usize = (24 * 60 / SAMPLE_MINUTES) as usize;
const SESSION_SPACING_DAYS: i64 = 91;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub patients: usize,
    pub sessions_per_patient: usize,
    pub days_per_session: usize,
    /// Stationary standard deviation of the sensor noise (mg/dL).
    pub noise_sd: f64,
    pub noise_ar: f64,
    /// Main meals per day; zero disables meals and snacks.
    pub meals_per_day: usize,
    pub snack_probability: f64,
    /// Meal rise amplitude range (mg/dL).
    pub meal_amplitude: (f64, f64),
    /// Meal excursion duration range (hours).
    pub meal_hours: (f64, f64),
    /// Correction lobe depth as a fraction of the meal amplitude.
    pub correction_fraction: (f64, f64),
    /// Upper bound of the per-patient daily drift amplitude (mg/dL).
    pub circadian_amplitude: f64,
    pub baseline: (f64, f64),
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            patients: 20,
            sessions_per_patient: 4,
            days_per_session: 2,
            noise_sd: 2.0,
            noise_ar: 0.8,
            meals_per_day: 3,
            snack_probability: 0.4,
            meal_amplitude: (40.0, 150.0),
            meal_hours: (1.0, 3.0),
            correction_fraction: (0.0, 0.5),
            circadian_amplitude: 12.0,
            baseline: (90.0, 140.0),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("synthetic config: {m}")));
        if self.patients == 0 || self.sessions_per_patient == 0 || self.days_per_session == 0 {
            return bad("patients, sessions and days must be positive");
        }
        if self.noise_sd < 0.0 || !(0.0..1.0).contains(&self.noise_ar) {
            return bad("noise_sd >= 0 and 0 <= noise_ar < 1 required");
        }
        if !(0.0..=1.0).contains(&self.snack_probability) {
            return bad("snack_probability must lie in [0, 1]");
        }
        for (lo, hi) in [self.meal_amplitude, self.meal_hours, self.correction_fraction, self.baseline] {
            if !(lo <= hi) || lo < 0.0 {
                return bad("ranges must be non-negative with lo <= hi");
            }
        }
        if self.meal_hours.0 <= 0.0 && self.meals_per_day > 0 {
            return bad("meal duration must be positive");
        }
        Ok(())
    }

    pub fn samples_per_session(&self) -> usize {
        self.days_per_session * SAMPLES_PER_DAY
    }
}

struct Bump {
    center: f64,
    sd: f64,
    height: f64,
}

impl Bump {
    fn at(&self, t: f64) -> f64 {
        let u = (t - self.center) / self.sd;
        if u.abs() > 8.0 {
            0.0
        } else {
            self.height * (-0.5 * u * u).exp()
        }
    }
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

fn meal_bumps<R: Rng>(cfg: &SynthConfig, days: usize, rng: &mut R) -> Vec<Bump> {
    // breakfast, lunch, dinner: (mean hour, jitter); further meals fall anywhere
    const SLOTS: [(f64, f64); 3] = [(7.5, 0.75), (12.5, 0.75), (19.0, 1.0)];
    let steps_per_hour = 60.0 / SAMPLE_MINUTES as f64;
    let mut bumps = Vec::new();
    if cfg.meals_per_day == 0 {
        return bumps;
    }
    for day in 0..days {
        let mut times: Vec<f64> = (0..cfg.meals_per_day)
            .map(|m| match SLOTS.get(m) {
                Some(&(mean, jitter)) => mean + rng.gen_range(-jitter..=jitter),
                None => rng.gen_range(0.0..24.0),
            })
            .collect();
        if rng.gen_bool(cfg.snack_probability) {
            times.push(rng.gen_range(15.0..22.0));
        }
        for hour in times {
            let onset = (day as f64 * 24.0 + hour) * steps_per_hour;
            let duration = uniform(rng, cfg.meal_hours) * steps_per_hour;
            let amplitude = uniform(rng, cfg.meal_amplitude);
            let correction = uniform(rng, cfg.correction_fraction);
            let rise = Bump {
                center: onset + duration / 2.0,
                sd: duration / 3.0,
                height: amplitude,
            };
            bumps.push(Bump {
                center: onset + 1.25 * duration,
                sd: duration / 3.0,
                height: -correction * amplitude,
            });
            bumps.push(rise);
        }
    }
    bumps
}

/// Deterministic for a given `(config, seed)`.
pub fn synth_generate(cfg: &SynthConfig, seed: u64) -> Result<Vec<GlucoseSeries>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let epoch: NaiveDateTime = NaiveDate::from_ymd_opt(2017, 1, 2)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid epoch");
    let n = cfg.samples_per_session();
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");

    let mut out = Vec::with_capacity(cfg.patients * cfg.sessions_per_patient);
    for p in 0..cfg.patients {
        let baseline = uniform(&mut rng, cfg.baseline);
        let drift_amp = if cfg.circadian_amplitude > 0.0 {
            rng.gen_range(0.0..cfg.circadian_amplitude)
        } else {
            0.0
        };
        let drift_phase = rng.gen_range(0.0..std::f64::consts::TAU);
        let first_day = rng.gen_range(0..30);
        for s in 0..cfg.sessions_per_patient {
            let bumps = meal_bumps(cfg, cfg.days_per_session, &mut rng);
            let innovation = cfg.noise_sd * (1.0 - cfg.noise_ar * cfg.noise_ar).sqrt();
            let mut noise = cfg.noise_sd * std_normal.sample(&mut rng);
            let values = (0..n)
                .map(|i| {
                    let t = i as f64;
                    let drift = drift_amp * (std::f64::consts::TAU * t / SAMPLES_PER_DAY as f64 + drift_phase).sin();
                    let meals: f64 = bumps.iter().map(|b| b.at(t)).sum();
                    if i > 0 {
                        noise = cfg.noise_ar * noise + innovation * std_normal.sample(&mut rng);
                    }
                    let v = (baseline + drift + meals + noise).round().clamp(GLUCOSE_MIN, GLUCOSE_MAX);
                    v as u16
                })
                .collect();
            let start = epoch + Duration::days(first_day + s as i64 * SESSION_SPACING_DAYS);
            out.push(GlucoseSeries::new(format!("P{:03}", p + 1), format!("S{}", s + 1), start, values)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::clean::MAX_STEP_MGDL;

    #[test]
    fn same_seed_same_output() {
        let cfg = SynthConfig { patients: 3, ..Default::default() };
        assert_eq!(synth_generate(&cfg, 7).unwrap(), synth_generate(&cfg, 7).unwrap());
        assert_ne!(synth_generate(&cfg, 7).unwrap(), synth_generate(&cfg, 8).unwrap());
    }

    #[test]
    fn noiseless_mealless_is_constant() {
        let cfg = SynthConfig {
            patients: 2,
            noise_sd: 0.0,
            meals_per_day: 0,
            circadian_amplitude: 0.0,
            ..Default::default()
        };
        for s in synth_generate(&cfg, 1).unwrap() {
            assert!(s.values.iter().all(|&v| v == s.values[0]));
            assert!((90..=140).contains(&s.values[0]));
        }
    }

    #[test]
    fn default_parameters_stay_physiological() {
        for seed in 0..5 {
            for s in synth_generate(&SynthConfig::default(), seed).unwrap() {
                assert_eq!(s.len(), 576);
                assert!(s.values.iter().all(|&v| (40..=400).contains(&v)));
                assert!(s.values.windows(2).all(|w| w[0].abs_diff(w[1]) <= MAX_STEP_MGDL));
            }
        }
    }

    #[test]
    fn invalid_config() {
        assert!(synth_generate(&SynthConfig { patients: 0, ..Default::default() }, 0).is_err());
    }
}
