//! Device readings, session manifests and stream synchronization.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Matrix, Result, ADC_MAX, V_REF};

/// Body location of a photovoltaic cell. The declaration order is the
/// channel order of every synchronized recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Placement {
    #[serde(rename = "LW")]
    LeftWrist,
    #[serde(rename = "RW")]
    RightWrist,
    #[serde(rename = "LF")]
    LeftFoot,
    #[serde(rename = "RF")]
    RightFoot,
}

impl Placement {
    pub const ALL: [Placement; 4] = [
        Placement::LeftWrist,
        Placement::RightWrist,
        Placement::LeftFoot,
        Placement::RightFoot,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Placement::LeftWrist => "LW",
            Placement::RightWrist => "RW",
            Placement::LeftFoot => "LF",
            Placement::RightFoot => "RF",
        }
    }

    pub fn is_foot(self) -> bool {
        matches!(self, Placement::LeftFoot | Placement::RightFoot)
    }

    pub fn is_left(self) -> bool {
        matches!(self, Placement::LeftWrist | Placement::LeftFoot)
    }
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Placement {
    type Err = String;

    fn from_str(s: &str) -> core::result::Result<Self, Self::Err> {
        Placement::ALL
            .into_iter()
            .find(|p| p.code() == s.trim())
            .ok_or_else(|| format!("unknown placement '{s}' (expected LW, RW, LF or RF)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Environment {
    Indoor,
    Outdoor,
}

impl FromStr for Environment {
    type Err = String;

    fn from_str(s: &str) -> core::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "indoor" => Ok(Environment::Indoor),
            "outdoor" => Ok(Environment::Outdoor),
            _ => Err(format!("unknown environment '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TimeOfDay {
    Morning,
    Afternoon,
    Evening,
}

/// The seven recognised activities. The first four are the default
/// evaluation set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activity {
    Stand,
    Cycle,
    Walk,
    Run,
    Jog,
    StairsUp,
    StairsDown,
}

impl Activity {
    pub const ALL: [Activity; 7] = [
        Activity::Stand,
        Activity::Cycle,
        Activity::Walk,
        Activity::Run,
        Activity::Jog,
        Activity::StairsUp,
        Activity::StairsDown,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Activity::Stand => "stand",
            Activity::Cycle => "cycle",
            Activity::Walk => "walk",
            Activity::Run => "run",
            Activity::Jog => "jog",
            Activity::StairsUp => "stairs_up",
            Activity::StairsDown => "stairs_down",
        }
    }

    /// The first `n` activities of [`Activity::ALL`].
    pub fn first(n: usize) -> &'static [Activity] {
        &Activity::ALL[..n.min(Activity::ALL.len())]
    }
}

impl fmt::Display for Activity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activity {
    type Err = String;

    fn from_str(s: &str) -> core::result::Result<Self, Self::Err> {
        Activity::ALL
            .into_iter()
            .find(|a| a.name() == s.trim())
            .ok_or_else(|| format!("unknown activity '{s}'"))
    }
}

/// One sample from one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RawReading {
    pub device_id: String,
    pub placement: Placement,
    pub timestamp_s: f64,
    pub adc_counts: u16,
}

/// Converts a 10-bit count to volts.
pub fn adc_to_voltage(adc_counts: u16) -> Result<f64> {
    if adc_counts > ADC_MAX {
        return Err(Error::AdcRange {
            row: 0,
            value: adc_counts as i64,
        });
    }
    Ok(adc_counts as f64 / ADC_MAX as f64 * V_REF)
}

/// Nearest 10-bit count for a voltage, clamped to the converter range.
pub fn voltage_to_adc(volts: f64) -> u16 {
    let c = libm::round(volts / V_REF * ADC_MAX as f64);
    if c.is_nan() || c <= 0.0 {
        0
    } else if c >= ADC_MAX as f64 {
        ADC_MAX
    } else {
        c as u16
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceStream {
    pub device_id: String,
    pub placement: Placement,
    pub readings: Vec<RawReading>,
}

impl DeviceStream {
    /// Voltage samples of this stream.
    pub fn to_trace(&self) -> Result<VoltageTrace> {
        let mut times = Vec::with_capacity(self.readings.len());
        let mut volts = Vec::with_capacity(self.readings.len());
        for r in &self.readings {
            times.push(r.timestamp_s);
            volts.push(adc_to_voltage(r.adc_counts)?);
        }
        Ok(VoltageTrace {
            placement: self.placement,
            label: self.device_id.clone(),
            times,
            volts,
        })
    }
}

/// Splits readings into one stream per device, in order of first appearance.
///
/// Within a device, rows must carry strictly increasing timestamps; rows of
/// different devices may be interleaved. Error rows are 0-based indices into
/// `readings`.
pub fn group_streams(readings: Vec<RawReading>) -> Result<Vec<DeviceStream>> {
    let mut streams: Vec<DeviceStream> = Vec::new();
    for (row, r) in readings.into_iter().enumerate() {
        if r.adc_counts > ADC_MAX {
            return Err(Error::AdcRange {
                row,
                value: r.adc_counts as i64,
            });
        }
        if !r.timestamp_s.is_finite() {
            return Err(Error::NonFiniteTimestamp { row });
        }
        let idx = match streams.iter().position(|s| s.device_id == r.device_id) {
            Some(i) => i,
            None => {
                streams.push(DeviceStream {
                    device_id: r.device_id.clone(),
                    placement: r.placement,
                    readings: Vec::new(),
                });
                streams.len() - 1
            }
        };
        let stream = &mut streams[idx];
        if stream.placement != r.placement {
            return Err(Error::PlacementChanged {
                row,
                device: r.device_id,
            });
        }
        if let Some(last) = stream.readings.last() {
            if r.timestamp_s <= last.timestamp_s {
                return Err(Error::NonMonotoneTimestamp {
                    row,
                    device: r.device_id,
                    timestamp: r.timestamp_s,
                });
            }
        }
        stream.readings.push(r);
    }
    Ok(streams)
}

/// Time-stamped voltages of one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct VoltageTrace {
    pub placement: Placement,
    /// Device identifier, used in error messages.
    pub label: String,
    pub times: Vec<f64>,
    pub volts: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub activity_label: Activity,
    pub t_start_s: f64,
    pub t_end_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionManifest {
    pub subject_id: String,
    pub environment: Environment,
    pub time_of_day: TimeOfDay,
    pub segments: Vec<Segment>,
}

impl SessionManifest {
    pub fn validate(&self) -> Result<()> {
        for s in &self.segments {
            if !(s.t_start_s.is_finite() && s.t_end_s.is_finite()) || s.t_start_s >= s.t_end_s {
                return Err(Error::Manifest(format!(
                    "segment {} has start {} not before end {}",
                    s.activity_label, s.t_start_s, s.t_end_s
                )));
            }
        }
        let mut sorted: Vec<&Segment> = self.segments.iter().collect();
        sorted.sort_by(|a, b| a.t_start_s.total_cmp(&b.t_start_s));
        for w in sorted.windows(2) {
            if w[1].t_start_s < w[0].t_end_s {
                return Err(Error::Manifest(format!(
                    "segments starting at {} and {} overlap",
                    w[0].t_start_s, w[1].t_start_s
                )));
            }
        }
        Ok(())
    }
}

/// Channels resampled onto one uniform grid. Row `k` is the scan at
/// `t0_s + k / rate_hz`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncedRecording {
    pub channels: Vec<Placement>,
    pub rate_hz: f64,
    pub t0_s: f64,
    pub values: Matrix,
    pub manifest: SessionManifest,
}

impl SyncedRecording {
    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.rows() == 0
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0_s + k as f64 / self.rate_hz
    }

    /// Grid rows whose time lies in `[t_start_s, t_end_s)`.
    pub fn segment_range(&self, segment: &Segment) -> core::ops::Range<usize> {
        const TOL: f64 = 1e-9;
        let n = self.len();
        let to_index = |t: f64| {
            let x = libm::ceil((t - self.t0_s) * self.rate_hz - TOL);
            if x <= 0.0 {
                0
            } else {
                (x as usize).min(n)
            }
        };
        let lo = to_index(segment.t_start_s);
        let hi = to_index(segment.t_end_s);
        lo..hi.max(lo)
    }

    /// Column index of `placement`, if recorded.
    pub fn channel_index(&self, placement: Placement) -> Option<usize> {
        self.channels.iter().position(|&p| p == placement)
    }
}

/// Resamples device streams onto a shared grid by linear interpolation.
pub fn synchronize(
    streams: &[DeviceStream],
    grid_rate_hz: f64,
    manifest: SessionManifest,
) -> Result<SyncedRecording> {
    let traces = streams
        .iter()
        .map(DeviceStream::to_trace)
        .collect::<Result<Vec<_>>>()?;
    synchronize_traces(&traces, grid_rate_hz, manifest)
}

/// As [`synchronize`], on voltage traces.
///
/// The grid starts at the latest first timestamp and ends at the last grid
/// point not after the earliest final timestamp, so no value is extrapolated.
pub fn synchronize_traces(
    traces: &[VoltageTrace],
    grid_rate_hz: f64,
    manifest: SessionManifest,
) -> Result<SyncedRecording> {
    if traces.is_empty() {
        return Err(Error::NoStreams);
    }
    if !(grid_rate_hz.is_finite() && grid_rate_hz > 0.0) {
        return Err(Error::Config(format!("grid rate {grid_rate_hz} must be positive")));
    }
    manifest.validate()?;
    for t in traces {
        if t.times.len() < 2 {
            return Err(Error::TooFewReadings {
                device: t.label.clone(),
                count: t.times.len(),
            });
        }
        if t.times.len() != t.volts.len() {
            return Err(Error::Dimension(format!(
                "trace '{}' has {} times and {} values",
                t.label,
                t.times.len(),
                t.volts.len()
            )));
        }
        if t.times.windows(2).any(|w| w[1].partial_cmp(&w[0]) != Some(core::cmp::Ordering::Greater)) {
            return Err(Error::NonMonotoneTimestamp {
                row: 0,
                device: t.label.clone(),
                timestamp: f64::NAN,
            });
        }
        if t.volts.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("trace '{}'", t.label)));
        }
    }

    let mut order: Vec<&VoltageTrace> = traces.iter().collect();
    order.sort_by_key(|t| t.placement);
    for w in order.windows(2) {
        if w[0].placement == w[1].placement {
            return Err(Error::DuplicatePlacement(w[0].placement));
        }
    }

    let start = order
        .iter()
        .map(|t| t.times[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let end = order
        .iter()
        .map(|t| *t.times.last().unwrap())
        .fold(f64::INFINITY, f64::min);
    if start > end {
        return Err(Error::EmptyOverlap { start, end });
    }
    let n = libm::floor((end - start) * grid_rate_hz + 1e-9) as usize + 1;

    let m = order.len();
    let mut values = Matrix::zeros(n, m);
    for (c, trace) in order.iter().enumerate() {
        let mut j = 0;
        for k in 0..n {
            let t = (start + k as f64 / grid_rate_hz).min(end);
            while j + 2 < trace.times.len() && trace.times[j + 1] < t {
                j += 1;
            }
            let (t0, t1) = (trace.times[j], trace.times[j + 1]);
            let (v0, v1) = (trace.volts[j], trace.volts[j + 1]);
            let frac = (t - t0) / (t1 - t0);
            values.set(k, c, v0 + (v1 - v0) * frac);
        }
    }

    Ok(SyncedRecording {
        channels: order.iter().map(|t| t.placement).collect(),
        rate_hz: grid_rate_hz,
        t0_s: start,
        values,
        manifest,
    })
}

impl fmt::Display for TimeOfDay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TimeOfDay::Morning => "morning",
            TimeOfDay::Afternoon => "afternoon",
            TimeOfDay::Evening => "evening",
        };
        f.write_str(s)
    }
}

impl fmt::Display for Environment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Environment::Indoor => "indoor",
            Environment::Outdoor => "outdoor",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;
    use proptest::prelude::*;

    fn manifest() -> SessionManifest {
        SessionManifest {
            subject_id: "s1".to_string(),
            environment: Environment::Outdoor,
            time_of_day: TimeOfDay::Morning,
            segments: vec![],
        }
    }

    fn trace(p: Placement, times: &[f64], volts: &[f64]) -> VoltageTrace {
        VoltageTrace {
            placement: p,
            label: p.code().to_string(),
            times: times.to_vec(),
            volts: volts.to_vec(),
        }
    }

    fn reading(dev: &str, p: Placement, t: f64, c: u16) -> RawReading {
        RawReading {
            device_id: dev.to_string(),
            placement: p,
            timestamp_s: t,
            adc_counts: c,
        }
    }

    #[test]
    fn adc_conversion_fixtures() {
        assert_eq!(adc_to_voltage(0).unwrap(), 0.0);
        assert!((adc_to_voltage(1023).unwrap() - 3.3).abs() < 1e-15);
        assert!((adc_to_voltage(512).unwrap() - 512.0 / 1023.0 * 3.3).abs() < 1e-15);
        assert!((adc_to_voltage(512).unwrap() - 1.651_612).abs() < 1e-6);
        assert!(matches!(adc_to_voltage(1024), Err(Error::AdcRange { .. })));
    }

    #[test]
    fn adc_is_monotone_and_spans_range() {
        let mut prev = -1.0;
        for c in 0..=ADC_MAX {
            let v = adc_to_voltage(c).unwrap();
            assert!(v > prev);
            assert_eq!(voltage_to_adc(v), c);
            prev = v;
        }
        assert!((prev - V_REF).abs() < 1e-12);
    }

    #[test]
    fn grouping_rejects_bad_rows() {
        let bad = vec![
            reading("d1", Placement::LeftFoot, 0.0, 10),
            reading("d1", Placement::LeftFoot, 0.0, 11),
        ];
        assert!(matches!(
            group_streams(bad),
            Err(Error::NonMonotoneTimestamp { row: 1, .. })
        ));
        let bad = vec![
            reading("d1", Placement::LeftFoot, 0.0, 10),
            reading("d1", Placement::RightFoot, 0.1, 11),
        ];
        assert!(matches!(
            group_streams(bad),
            Err(Error::PlacementChanged { row: 1, .. })
        ));
        let bad = vec![reading("d1", Placement::LeftFoot, 0.0, 1024)];
        assert!(matches!(group_streams(bad), Err(Error::AdcRange { row: 0, .. })));
    }

    #[test]
    fn interpolation_of_single_ramp() {
        let t = trace(Placement::LeftWrist, &[0.0, 1.0], &[0.0, 10.0]);
        let rec = synchronize_traces(&[t], 2.0, manifest()).unwrap();
        assert_eq!(rec.values.column(0), vec![0.0, 5.0, 10.0]);
        assert_eq!(rec.t0_s, 0.0);
    }

    #[test]
    fn offset_streams_reproduce_ramps() {
        let times_a: Vec<f64> = (0..200).map(|i| i as f64 / 23.1).collect();
        let times_b: Vec<f64> = times_a.iter().map(|t| t + 0.01).collect();
        let f = |t: f64| 0.3 * t + 1.0;
        let g = |t: f64| -0.7 * t + 2.0;
        let a = trace(
            Placement::RightFoot,
            &times_a,
            &times_a.iter().map(|&t| f(t)).collect::<Vec<_>>(),
        );
        let b = trace(
            Placement::LeftWrist,
            &times_b,
            &times_b.iter().map(|&t| g(t)).collect::<Vec<_>>(),
        );
        let rec = synchronize_traces(&[a, b], 23.1, manifest()).unwrap();
        assert_eq!(rec.channels, vec![Placement::LeftWrist, Placement::RightFoot]);
        assert_eq!(rec.t0_s, 0.01);
        for k in 0..rec.len() {
            let t = rec.time(k);
            assert!((rec.values.get(k, 0) - g(t)).abs() < 1e-9);
            assert!((rec.values.get(k, 1) - f(t)).abs() < 1e-9);
        }
    }

    #[test]
    fn short_overlap_gives_single_scan_or_error() {
        // Overlap [0.9, 1.0] is shorter than the 0.5 s grid step.
        let a = trace(Placement::LeftWrist, &[0.0, 1.0], &[0.0, 1.0]);
        let b = trace(Placement::RightWrist, &[0.9, 2.0], &[0.0, 1.0]);
        let rec = synchronize_traces(&[a.clone(), b], 2.0, manifest()).unwrap();
        assert_eq!(rec.len(), 1);
        assert_eq!(rec.t0_s, 0.9);

        let c = trace(Placement::RightWrist, &[1.5, 2.0], &[0.0, 1.0]);
        assert!(matches!(
            synchronize_traces(&[a, c], 2.0, manifest()),
            Err(Error::EmptyOverlap { .. })
        ));
    }

    #[test]
    fn sync_errors() {
        let a = trace(Placement::LeftWrist, &[0.0], &[0.0]);
        assert!(matches!(
            synchronize_traces(&[a], 2.0, manifest()),
            Err(Error::TooFewReadings { count: 1, .. })
        ));
        assert!(matches!(
            synchronize_traces(&[], 2.0, manifest()),
            Err(Error::NoStreams)
        ));
        let a = trace(Placement::LeftWrist, &[0.0, 1.0], &[0.0, 1.0]);
        assert!(matches!(
            synchronize_traces(&[a.clone(), a], 2.0, manifest()),
            Err(Error::DuplicatePlacement(Placement::LeftWrist))
        ));
    }

    #[test]
    fn segment_ranges() {
        let t = trace(Placement::LeftWrist, &[0.0, 10.0], &[0.0, 1.0]);
        let rec = synchronize_traces(&[t], 10.0, manifest()).unwrap();
        let seg = |a: f64, b: f64| Segment {
            activity_label: Activity::Walk,
            t_start_s: a,
            t_end_s: b,
        };
        assert_eq!(rec.segment_range(&seg(0.0, 1.0)), 0..10);
        assert_eq!(rec.segment_range(&seg(1.0, 2.05)), 10..21);
        assert_eq!(rec.segment_range(&seg(9.5, 20.0)), 95..101);
        assert_eq!(rec.segment_range(&seg(20.0, 30.0)), 101..101);
    }

    #[test]
    fn manifest_validation() {
        let mut m = manifest();
        m.segments = vec![
            Segment {
                activity_label: Activity::Walk,
                t_start_s: 0.0,
                t_end_s: 2.0,
            },
            Segment {
                activity_label: Activity::Run,
                t_start_s: 1.0,
                t_end_s: 3.0,
            },
        ];
        assert!(m.validate().is_err());
        m.segments[1].t_start_s = 2.0;
        assert!(m.validate().is_ok());
        m.segments[1].t_end_s = 2.0;
        assert!(m.validate().is_err());
    }

    proptest! {
        #[test]
        fn linear_streams_are_exact(
            slope in -5.0f64..5.0,
            icpt in -3.0f64..3.0,
            offset in 0.0f64..0.05,
            steps in proptest::collection::vec(0.02f64..0.08, 5..60),
            rate in 5.0f64..50.0,
        ) {
            let mut times = vec![offset];
            for s in &steps { let t = *times.last().unwrap() + s; times.push(t); }
            let volts: Vec<f64> = times.iter().map(|t| slope * t + icpt).collect();
            let other: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
            let a = trace(Placement::LeftFoot, &times, &volts);
            let b = trace(Placement::RightFoot, &other, &other);
            match synchronize_traces(&[a, b], rate, manifest()) {
                Ok(rec) => {
                    for k in 0..rec.len() {
                        let t = rec.time(k);
                        prop_assert!(t >= times[0] - 1e-12 && t >= other[0]);
                        prop_assert!(t <= times.last().unwrap() + 1e-9 && t <= other.last().unwrap() + 1e-9);
                        prop_assert!((rec.values.get(k, 0) - (slope * t + icpt)).abs() < 1e-9);
                    }
                }
                Err(e) => { let empty = matches!(e, Error::EmptyOverlap { .. }); prop_assert!(empty) }
            }
        }
    }
}
