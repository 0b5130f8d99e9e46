//! Synthetic multi-device photovoltaic recordings.
//!
//! Each cell reads `ambient + activity waveform + lamp flicker + noise`,
//! clipped to the converter range and quantized to 10-bit counts, at the
//! nominal scan rate with a per-device clock offset and timing jitter.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_2_PI, PI, TAU};

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::ingest::{
    group_streams, synchronize, voltage_to_adc, Activity, DeviceStream, Environment, Placement, RawReading, Segment,
    SessionManifest, SyncedRecording, TimeOfDay,
};
use crate::{rng_from_seed, Error, Result, DEFAULT_RATE_HZ, V_REF};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Waveform {
    Sine,
    /// Zero-mean `|sin|` at the fundamental.
    RectifiedSine,
    /// Rises for fraction `rise` of each period, falls for the rest.
    Sawtooth { rise: f64 },
    Flat,
}

impl Waveform {
    /// Unit-amplitude sample at `phase` radians.
    pub fn sample(self, phase: f64) -> f64 {
        match self {
            Waveform::Sine => libm::sin(phase),
            Waveform::RectifiedSine => 2.0 * libm::fabs(libm::sin(phase / 2.0)) - 2.0 * FRAC_2_PI,
            Waveform::Sawtooth { rise } => {
                let u = phase / TAU - libm::floor(phase / TAU);
                if u < rise {
                    -1.0 + 2.0 * u / rise
                } else {
                    1.0 - 2.0 * (u - rise) / (1.0 - rise)
                }
            }
            Waveform::Flat => 0.0,
        }
    }
}

/// Signal signature of one activity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivityModel {
    pub activity: Activity,
    pub foot_hz: f64,
    pub wrist_hz: f64,
    pub foot_amplitude: f64,
    pub wrist_amplitude: f64,
    pub waveform: Waveform,
    /// Phase of the right side relative to the left, radians.
    pub lr_phase: f64,
}

impl ActivityModel {
    pub fn default_for(activity: Activity) -> Self {
        let (hz, foot, waveform) = match activity {
            Activity::Stand => (0.0, 0.0, Waveform::Flat),
            Activity::Cycle => (1.4, 0.35, Waveform::Sine),
            Activity::Walk => (1.9, 0.30, Waveform::RectifiedSine),
            Activity::Jog => (2.3, 0.40, Waveform::RectifiedSine),
            Activity::Run => (2.8, 0.50, Waveform::RectifiedSine),
            Activity::StairsUp => (1.6, 0.30, Waveform::Sawtooth { rise: 0.8 }),
            Activity::StairsDown => (1.6, 0.30, Waveform::Sawtooth { rise: 0.2 }),
        };
        Self {
            activity,
            foot_hz: hz,
            wrist_hz: hz,
            foot_amplitude: foot,
            wrist_amplitude: foot / 2.0,
            waveform,
            lr_phase: PI,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=4.0).contains(&self.foot_hz) || !(0.0..=4.0).contains(&self.wrist_hz) {
            return Err(Error::Generator(format!("{}: fundamentals must lie in [0, 4] Hz", self.activity)));
        }
        if self.foot_amplitude < 0.0 || self.wrist_amplitude < 0.0 {
            return Err(Error::Generator(format!("{}: negative amplitude", self.activity)));
        }
        if let Waveform::Sawtooth { rise } = self.waveform {
            if !(rise > 0.0 && rise < 1.0) {
                return Err(Error::Generator(format!("{}: sawtooth rise {rise} outside (0, 1)", self.activity)));
            }
        }
        Ok(())
    }
}

/// Lighting and sensor conditions of a recording session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub environment: Environment,
    /// Ambient level common to all cells, volts.
    pub ambient_base: f64,
    /// Linear ambient drift, volts per minute.
    pub ambient_drift: f64,
    pub noise_std: f64,
    pub flicker_hz: f64,
    pub flicker_amp: f64,
    pub timing_jitter_std: f64,
    pub seed: u64,
}

impl SceneConfig {
    pub fn new(environment: Environment, seed: u64) -> Self {
        let ambient_base = match environment {
            Environment::Outdoor => 2.0,
            Environment::Indoor => 1.0,
        };
        Self {
            environment,
            ambient_base,
            ambient_drift: 0.01,
            noise_std: 0.01,
            flicker_hz: 9.0,
            flicker_amp: 0.05,
            timing_jitter_std: 0.002,
            seed,
        }
    }
}

/// Per-subject variation: cadence, vigour, a phase shift and the lighting of
/// the day the subject was recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectProfile {
    pub subject_id: String,
    pub index: usize,
    pub tempo: f64,
    pub amplitude: f64,
    pub phase: f64,
    pub ambient_offset: f64,
    pub time_of_day: TimeOfDay,
}

impl SubjectProfile {
    /// Deterministic profile of subject `index` (0-based, id `S{index+1}`).
    pub fn sample(index: usize, difficulty: f64, seed: u64) -> Self {
        let mut rng = rng_from_seed(mix(seed, 0x050b_1ec7, index as u64));
        let spread = 0.04 + 0.10 * difficulty;
        let time_of_day = [TimeOfDay::Morning, TimeOfDay::Afternoon, TimeOfDay::Evening][index % 3];
        Self {
            subject_id: format!("S{}", index + 1),
            index,
            tempo: 1.0 + rng.random_range(-spread..spread),
            amplitude: 1.0 + rng.random_range(-0.15..0.15),
            phase: rng.random_range(0.0..TAU),
            ambient_offset: rng.random_range(-0.1..0.1),
            time_of_day,
        }
    }
}

fn mix(seed: u64, salt: u64, index: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ salt.wrapping_mul(0xBF58_476D_1CE4_E5B9)
        ^ index.wrapping_add(1).wrapping_mul(0x94D0_49BB_1331_11EB)
}

/// Readings of one subject's session plus its manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSession {
    pub readings: Vec<RawReading>,
    pub manifest: SessionManifest,
}

impl GeneratedSession {
    /// `S1_outdoor` style name.
    pub fn name(&self) -> String {
        format!("{}_{}", self.manifest.subject_id, self.manifest.environment)
    }

    pub fn streams(&self) -> Result<Vec<DeviceStream>> {
        group_streams(self.readings.clone())
    }

    pub fn synchronize(&self, rate_hz: f64) -> Result<SyncedRecording> {
        synchronize(&self.streams()?, rate_hz, self.manifest.clone())
    }
}

fn ambient_factor(tod: TimeOfDay) -> f64 {
    match tod {
        TimeOfDay::Morning => 1.0,
        TimeOfDay::Afternoon => 1.1,
        TimeOfDay::Evening => 0.8,
    }
}

/// Records `activities` back to back, `seconds_per_activity` each, with all
/// four placements.
pub fn generate_session(
    subject: &SubjectProfile,
    activities: &[Activity],
    seconds_per_activity: f64,
    scene: &SceneConfig,
    models: &[ActivityModel],
) -> Result<GeneratedSession> {
    if activities.is_empty() || seconds_per_activity.is_nan() || seconds_per_activity <= 0.0 {
        return Err(Error::Generator("need at least one activity and a positive duration".into()));
    }
    if !(scene.noise_std >= 0.0 && scene.timing_jitter_std >= 0.0 && scene.flicker_amp >= 0.0) {
        return Err(Error::Generator("noise, jitter and flicker must be non-negative".into()));
    }
    let lookup = |a: Activity| {
        models
            .iter()
            .find(|m| m.activity == a)
            .copied()
            .ok_or_else(|| Error::Generator(format!("no model for activity {a}")))
    };
    let plan = activities.iter().map(|&a| lookup(a)).collect::<Result<Vec<_>>>()?;
    for m in &plan {
        m.validate()?;
    }

    let duration = seconds_per_activity * activities.len() as f64;
    let ambient0 = scene.ambient_base * ambient_factor(subject.time_of_day) + subject.ambient_offset;
    let ambient_end = ambient0 + scene.ambient_drift * duration / 60.0;
    let swing = plan
        .iter()
        .map(|m| m.foot_amplitude.max(m.wrist_amplitude))
        .fold(0.0, f64::max)
        * subject.amplitude
        * 1.3
        + scene.flicker_amp
        + 4.0 * scene.noise_std;
    let (lo, hi) = (ambient0.min(ambient_end), ambient0.max(ambient_end));
    if lo - swing < 0.0 || hi + swing > V_REF {
        return Err(Error::Generator(format!(
            "signal range [{:.3}, {:.3}] V exceeds the converter range [0, {V_REF}] V",
            lo - swing,
            hi + swing
        )));
    }

    let noise = Normal::new(0.0, scene.noise_std).map_err(|e| Error::Generator(format!("{e}")))?;
    let jitter = Normal::new(0.0, scene.timing_jitter_std).map_err(|e| Error::Generator(format!("{e}")))?;
    let mut rng = rng_from_seed(mix(scene.seed, 0x5e55_1011, subject.index as u64));

    let period = 1.0 / DEFAULT_RATE_HZ;
    let mut per_device: Vec<Vec<RawReading>> = Vec::new();
    for &placement in Placement::ALL.iter() {
        let device_id = format!("{}-{}", subject.subject_id, placement.code());
        let clock_offset = rng.random_range(0.0..0.03);
        let flicker_phase = rng.random_range(0.0..TAU);
        let side_phase = if placement.is_left() { 0.0 } else { 1.0 };
        let limb_phase = if placement.is_foot() { 0.0 } else { 0.5 };
        let mut readings = Vec::new();
        let mut last_t = f64::NEG_INFINITY;
        let mut k = 0usize;
        loop {
            let nominal = clock_offset + k as f64 * period;
            if nominal > duration + 0.1 {
                break;
            }
            let t = (nominal + jitter.sample(&mut rng)).max(last_t + 1e-4).max(0.0);
            last_t = t;
            let seg = ((t / seconds_per_activity) as usize).min(plan.len() - 1);
            let m = &plan[seg];
            let (hz, amp) = if placement.is_foot() {
                (m.foot_hz, m.foot_amplitude)
            } else {
                (m.wrist_hz, m.wrist_amplitude)
            };
            let phase = TAU * hz * subject.tempo * t + subject.phase + side_phase * m.lr_phase + limb_phase;
            let activity = amp * subject.amplitude * m.waveform.sample(phase);
            let ambient = ambient0 + scene.ambient_drift * t / 60.0;
            let flicker = scene.flicker_amp * libm::sin(TAU * scene.flicker_hz * t + flicker_phase);
            let volts = (ambient + activity + flicker + noise.sample(&mut rng)).clamp(0.0, V_REF);
            readings.push(RawReading {
                device_id: device_id.clone(),
                placement,
                timestamp_s: t,
                adc_counts: voltage_to_adc(volts),
            });
            k += 1;
        }
        per_device.push(readings);
    }

    // Rows ordered by time across devices, as a collector would log them.
    let mut readings: Vec<RawReading> = per_device.into_iter().flatten().collect();
    readings.sort_by(|a, b| a.timestamp_s.total_cmp(&b.timestamp_s).then(a.placement.cmp(&b.placement)));

    let segments = activities
        .iter()
        .enumerate()
        .map(|(i, &a)| Segment {
            activity_label: a,
            t_start_s: i as f64 * seconds_per_activity,
            t_end_s: (i + 1) as f64 * seconds_per_activity,
        })
        .collect();
    Ok(GeneratedSession {
        readings,
        manifest: SessionManifest {
            subject_id: subject.subject_id.clone(),
            environment: scene.environment,
            time_of_day: subject.time_of_day,
            segments,
        },
    })
}

/// Shape of a whole synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    pub n_subjects: usize,
    pub activities: Vec<Activity>,
    pub seconds_per_activity: f64,
    /// One session per subject per environment.
    pub environments: Vec<Environment>,
    /// 0 is easiest; 1 squeezes activity fundamentals together and raises
    /// noise and subject variation.
    pub difficulty: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            n_subjects: 6,
            activities: Activity::first(4).to_vec(),
            seconds_per_activity: 180.0,
            environments: alloc::vec![Environment::Outdoor],
            difficulty: 0.0,
            seed: 42,
        }
    }
}

impl DatasetSpec {
    /// Activity models after applying the difficulty.
    pub fn models(&self) -> Vec<ActivityModel> {
        let d = self.difficulty.clamp(0.0, 1.0);
        let centre = 2.0;
        Activity::ALL
            .iter()
            .map(|&a| {
                let mut m = ActivityModel::default_for(a);
                if m.foot_hz > 0.0 {
                    m.foot_hz = centre + (m.foot_hz - centre) * (1.0 - 0.6 * d);
                    m.wrist_hz = m.foot_hz;
                }
                m
            })
            .collect()
    }

    pub fn scene(&self, environment: Environment) -> SceneConfig {
        let mut s = SceneConfig::new(environment, self.seed);
        s.noise_std *= 1.0 + 3.0 * self.difficulty.clamp(0.0, 1.0);
        s
    }
}

/// All sessions of a dataset, ordered by subject then environment.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<Vec<GeneratedSession>> {
    if spec.n_subjects == 0 || spec.environments.is_empty() {
        return Err(Error::Generator("need at least one subject and one environment".into()));
    }
    let models = spec.models();
    let mut out = Vec::new();
    for i in 0..spec.n_subjects {
        let subject = SubjectProfile::sample(i, spec.difficulty, spec.seed);
        for &env in &spec.environments {
            out.push(generate_session(
                &subject,
                &spec.activities,
                spec.seconds_per_activity,
                &spec.scene(env),
                &models,
            )?);
        }
    }
    Ok(out)
}

/// Default-sized outdoor dataset over the first `n_classes` activities.
pub fn make_separable_dataset(n_classes: usize, difficulty: f64, seed: u64) -> Result<Vec<GeneratedSession>> {
    if !(2..=7).contains(&n_classes) {
        return Err(Error::Generator(format!("n_classes {n_classes} outside 2..=7")));
    }
    generate_dataset(&DatasetSpec {
        activities: Activity::first(n_classes).to_vec(),
        difficulty,
        seed,
        ..DatasetSpec::default()
    })
}
