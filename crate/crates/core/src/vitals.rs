//! Cardiovascular parameters derived from a pulse waveform.

use std::collections::BTreeSet;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pos::{mean, pop_std, pos_pipeline, rms, PosConfig, PosError, PulseSignal};
use crate::trace::CombinedSeries;

pub const MIN_RR_MS: f64 = 250.0;
pub const MAX_RR_MS: f64 = 3000.0;
/// Shortest signal the spectral and beat analyses accept.
pub const MIN_DURATION_S: f64 = 10.0;
pub const WELCH_SEGMENT_S: f64 = 10.0;
/// Zero-padding factor applied to each Welch segment before the FFT.
const WELCH_PAD: usize = 8;
const PEAK_THRESHOLD_STD: f64 = 0.3;
const REFRACTORY_FRACTION: f64 = 0.6;
const PNN50_THRESHOLD_MS: f64 = 50.0;
pub const SI_MIN_INTERVALS: usize = 10;
const SI_BIN_MS: f64 = 50.0;
const SI_LO_MS: f64 = 300.0;
const SI_HI_MS: f64 = 2000.0;
const SI_MIN_RANGE_S: f64 = 0.05;
const NO_PULSE_RATIO: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VitalsError {
    #[error("signal of {0:.2} s is shorter than the 10 s minimum")]
    SignalTooShort(f64),
    #[error("no spectral peak stands out in the pulse band")]
    NoSpectralPeak,
    #[error("fewer than two beats detected")]
    NoPeaks,
    #[error("{got} RR intervals, at least {needed} required")]
    TooFewIntervals { needed: usize, got: usize },
    #[error("trace of {0:.2} s is shorter than the 10 s minimum")]
    TraceTooShort(f64),
    #[error("pulse signal is identically zero")]
    NoPulse,
    #[error("RR interval {0} ms outside [250, 3000] ms")]
    InvalidRrInterval(f64),
    #[error("sampling rate {fs} Hz is below twice the band edge {hi} Hz")]
    InsufficientSamplingRate { fs: f64, hi: f64 },
    #[error(transparent)]
    Pos(#[from] PosError),
}

impl VitalsError {
    pub fn name(&self) -> &'static str {
        match self {
            VitalsError::SignalTooShort(_) => "SignalTooShort",
            VitalsError::NoSpectralPeak => "NoSpectralPeak",
            VitalsError::NoPeaks => "NoPeaks",
            VitalsError::TooFewIntervals { .. } => "TooFewIntervals",
            VitalsError::TraceTooShort(_) => "TraceTooShort",
            VitalsError::NoPulse => "NoPulse",
            VitalsError::InvalidRrInterval(_) => "InvalidRrInterval",
            VitalsError::InsufficientSamplingRate { .. } => "InsufficientSamplingRate",
            VitalsError::Pos(e) => e.name(),
        }
    }
}

/// Pulse band used for spectral heart-rate search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub lo_hz: f64,
    pub hi_hz: f64,
}

impl Default for Band {
    fn default() -> Self {
        Band { lo_hz: 0.7, hi_hz: 4.0 }
    }
}

impl From<&PosConfig> for Band {
    fn from(cfg: &PosConfig) -> Self {
        Band { lo_hz: cfg.band_lo_hz, hi_hz: cfg.band_hi_hz }
    }
}

/// Inter-beat intervals in milliseconds, each within [250, 3000] ms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RrSeries {
    intervals_ms: Vec<f64>,
}

impl RrSeries {
    pub fn new(intervals_ms: Vec<f64>) -> Result<Self, VitalsError> {
        if intervals_ms.is_empty() {
            return Err(VitalsError::TooFewIntervals { needed: 1, got: 0 });
        }
        if let Some(&bad) = intervals_ms.iter().find(|v| !(MIN_RR_MS..=MAX_RR_MS).contains(*v)) {
            return Err(VitalsError::InvalidRrInterval(bad));
        }
        Ok(RrSeries { intervals_ms })
    }

    pub fn intervals_ms(&self) -> &[f64] {
        &self.intervals_ms
    }

    pub fn len(&self) -> usize {
        self.intervals_ms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals_ms.is_empty()
    }

    pub fn mean_ms(&self) -> f64 {
        mean(&self.intervals_ms)
    }
}

fn periodic_hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|k| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * k as f64 / len as f64).cos()))
        .collect()
}

/// Welch power spectrum: 10 s Hann segments, 50% overlap, per-segment mean removal.
/// Returns `(bin spacing in Hz, averaged power per bin up to Nyquist)`.
fn welch_psd(x: &[f64], fs: f64) -> (f64, Vec<f64>) {
    let seg = ((WELCH_SEGMENT_S * fs).round() as usize).min(x.len());
    let hop = (seg / 2).max(1);
    let nfft = (seg * WELCH_PAD).next_power_of_two();
    let window = periodic_hann(seg);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(nfft);

    let mut power = vec![0.0; nfft / 2 + 1];
    let mut segments = 0usize;
    let mut buf = vec![Complex::new(0.0, 0.0); nfft];
    let mut start = 0;
    while start + seg <= x.len() {
        let chunk = &x[start..start + seg];
        let m = mean(chunk);
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for ((slot, v), w) in buf.iter_mut().zip(chunk).zip(&window) {
            slot.re = (v - m) * w;
        }
        fft.process(&mut buf);
        for (p, c) in power.iter_mut().zip(&buf) {
            *p += c.norm_sqr();
        }
        segments += 1;
        start += hop;
    }
    power.iter_mut().for_each(|p| *p /= segments as f64);
    (fs / nfft as f64, power)
}

/// Spectral heart rate in beats per minute.
pub fn estimate_hr(pulse: &PulseSignal, band: Band) -> Result<f64, VitalsError> {
    let duration = pulse.duration_s();
    if duration < MIN_DURATION_S - 1e-9 {
        return Err(VitalsError::SignalTooShort(duration));
    }
    if pulse.fs < 2.0 * band.hi_hz {
        return Err(VitalsError::InsufficientSamplingRate { fs: pulse.fs, hi: band.hi_hz });
    }
    let (df, power) = welch_psd(&pulse.samples, pulse.fs);
    let lo_bin = (band.lo_hz / df).ceil() as usize;
    let hi_bin = ((band.hi_hz / df).floor() as usize).min(power.len() - 1);
    let in_band = &power[lo_bin..=hi_bin];

    let (offset, &peak) = in_band
        .iter()
        .enumerate()
        .fold((0, &f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
    let mut sorted = in_band.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    if !(peak > 0.0) || peak < 3.0 * median {
        return Err(VitalsError::NoSpectralPeak);
    }

    let k = lo_bin + offset;
    let shift = if k > 0 && k + 1 < power.len() {
        let (a, b, c) = (power[k - 1], power[k], power[k + 1]);
        let denom = a - 2.0 * b + c;
        if denom < 0.0 {
            (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
        } else {
            0.0
        }
    } else {
        0.0
    };
    let f = ((k as f64 + shift) * df).clamp(band.lo_hz, band.hi_hz);
    Ok(60.0 * f)
}

/// Beat positions and the RR series derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectedBeats {
    pub peak_indices: Vec<usize>,
    /// Sub-sample peak instants in seconds from the start of the signal.
    pub peak_times_s: Vec<f64>,
    pub rr: RrSeries,
    /// Intervals discarded for falling outside [250, 3000] ms.
    pub dropped_intervals: usize,
}

/// Finds beats as thresholded local maxima separated by a refractory period
/// derived from the expected heart rate.
pub fn detect_peaks(pulse: &PulseSignal, hr_hint_bpm: Option<f64>) -> Result<DetectedBeats, VitalsError> {
    let duration = pulse.duration_s();
    if duration < MIN_DURATION_S - 1e-9 {
        return Err(VitalsError::SignalTooShort(duration));
    }
    let hr = match hr_hint_bpm {
        Some(hr) if hr > 0.0 && hr.is_finite() => hr,
        _ => estimate_hr(pulse, Band::default()).map_err(|e| match e {
            VitalsError::NoSpectralPeak => VitalsError::NoPeaks,
            other => other,
        })?,
    };
    let x = &pulse.samples;
    let threshold = PEAK_THRESHOLD_STD * pop_std(x);
    let mut candidates: Vec<usize> =
        (1..x.len().saturating_sub(1)).filter(|&i| x[i - 1] < x[i] && x[i] > x[i + 1] && x[i] > threshold).collect();

    // Larger peaks claim their refractory neighbourhood first.
    candidates.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
    let refractory = REFRACTORY_FRACTION * 60.0 / hr * pulse.fs;
    let mut kept: BTreeSet<usize> = BTreeSet::new();
    for i in candidates {
        let before = kept.range(..i).next_back();
        let after = kept.range(i..).next();
        let clear = |j: Option<&usize>| j.is_none_or(|&j| (i as f64 - j as f64).abs() >= refractory);
        if clear(before) && clear(after) {
            kept.insert(i);
        }
    }
    if kept.len() < 2 {
        return Err(VitalsError::NoPeaks);
    }

    let peak_indices: Vec<usize> = kept.into_iter().collect();
    let peak_times_s: Vec<f64> = peak_indices
        .iter()
        .map(|&i| {
            let (a, b, c) = (x[i - 1], x[i], x[i + 1]);
            let denom = a - 2.0 * b + c;
            let shift = if denom < 0.0 { (0.5 * (a - c) / denom).clamp(-0.5, 0.5) } else { 0.0 };
            (i as f64 + shift) / pulse.fs
        })
        .collect();
    let all: Vec<f64> = peak_times_s.windows(2).map(|w| (w[1] - w[0]) * 1000.0).collect();
    let kept_rr: Vec<f64> = all.iter().copied().filter(|v| (MIN_RR_MS..=MAX_RR_MS).contains(v)).collect();
    let dropped_intervals = all.len() - kept_rr.len();
    let rr = RrSeries::new(kept_rr).map_err(|_| VitalsError::NoPeaks)?;
    Ok(DetectedBeats { peak_indices, peak_times_s, rr, dropped_intervals })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HrvMetrics {
    pub pnn50_pct: f64,
    pub rmssd_ms: f64,
    pub sdnn_ms: f64,
}

/// PNN50 (strictly above 50 ms), RMSSD and sample-standard-deviation SDNN.
pub fn hrv_metrics(rr: &RrSeries) -> Result<HrvMetrics, VitalsError> {
    let v = rr.intervals_ms();
    let n = v.len();
    if n < 2 {
        return Err(VitalsError::TooFewIntervals { needed: 2, got: n });
    }
    let diffs: Vec<f64> = v.windows(2).map(|w| w[1] - w[0]).collect();
    let over = diffs.iter().filter(|d| d.abs() > PNN50_THRESHOLD_MS).count();
    let pnn50_pct = 100.0 * over as f64 / diffs.len() as f64;
    let rmssd_ms = (diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64).sqrt();
    let m = mean(v);
    let sdnn_ms = (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64).sqrt();
    Ok(HrvMetrics { pnn50_pct, rmssd_ms, sdnn_ms })
}

/// Histogram statistics behind the Baevsky stress index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StressIndex {
    pub stress_index: f64,
    /// Midpoint of the modal 50 ms bin, seconds.
    pub mode_s: f64,
    /// Percentage of intervals in the modal bin.
    pub amo_pct: f64,
    /// RR range in seconds after clamping.
    pub mxdmn_s: f64,
    /// Set when the RR range was clamped up to 0.05 s.
    pub degenerate_variability: bool,
}

/// Baevsky stress index `AMo / (2 * Mo * MxDMn)` over 50 ms bins spanning
/// [0.3, 2.0] s. Intervals outside that span count toward the nearest edge bin;
/// the lowest bin wins ties for the mode.
pub fn baevsky_si(rr: &RrSeries) -> Result<StressIndex, VitalsError> {
    let v = rr.intervals_ms();
    if v.len() < SI_MIN_INTERVALS {
        return Err(VitalsError::TooFewIntervals { needed: SI_MIN_INTERVALS, got: v.len() });
    }
    let bins = ((SI_HI_MS - SI_LO_MS) / SI_BIN_MS) as usize;
    let mut counts = vec![0usize; bins];
    for &ms in v {
        let idx = ((ms - SI_LO_MS) / SI_BIN_MS).floor().clamp(0.0, (bins - 1) as f64) as usize;
        counts[idx] += 1;
    }
    let (modal, &count) = counts
        .iter()
        .enumerate()
        .fold((0, &0usize), |best, cur| if cur.1 > best.1 { cur } else { best });
    let mode_s = (SI_LO_MS + (modal as f64 + 0.5) * SI_BIN_MS) / 1000.0;
    let amo_pct = 100.0 * count as f64 / v.len() as f64;
    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let range_s = (hi - lo) / 1000.0;
    let degenerate_variability = range_s < SI_MIN_RANGE_S;
    let mxdmn_s = range_s.max(SI_MIN_RANGE_S);
    Ok(StressIndex {
        stress_index: amo_pct / (2.0 * mode_s * mxdmn_s),
        mode_s,
        amo_pct,
        mxdmn_s,
        degenerate_variability,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityFlag {
    Ok,
    DegenerateVariability,
    LowBeatCount,
}

/// Heart rate, HRV metrics and the flags explaining any absent metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VitalsReport {
    pub hr_bpm: f64,
    pub rr: Option<RrSeries>,
    pub pnn50_pct: Option<f64>,
    pub rmssd_ms: Option<f64>,
    pub sdnn_ms: Option<f64>,
    pub stress_index: Option<f64>,
    pub quality: Vec<QualityFlag>,
}

impl VitalsReport {
    pub fn is_ok(&self) -> bool {
        self.quality == [QualityFlag::Ok]
    }
}

/// Runs the whole chain from a combined RGB series to a vitals report.
pub fn compute_vitals(series: &CombinedSeries, cfg: &PosConfig) -> Result<VitalsReport, VitalsError> {
    compute_vitals_with_pulse(series, cfg).map(|(report, _)| report)
}

/// Like [`compute_vitals`], also returning the intermediate pulse signal.
pub fn compute_vitals_with_pulse(
    series: &CombinedSeries,
    cfg: &PosConfig,
) -> Result<(VitalsReport, PulseSignal), VitalsError> {
    let duration = series.duration_s();
    if duration < MIN_DURATION_S - 1e-9 {
        return Err(VitalsError::TraceTooShort(duration));
    }
    let pulse = pos_pipeline(series, cfg)?;

    // Reference level: the gain-free, mean-normalized input channels.
    let normalized: Vec<f64> = [&series.r, &series.g, &series.b]
        .into_iter()
        .flat_map(|c| {
            let m = mean(c);
            c.iter().map(move |v| v / m)
        })
        .collect();
    if pulse.rms() < NO_PULSE_RATIO * rms(&normalized) {
        return Err(VitalsError::NoPulse);
    }

    let hr_bpm = estimate_hr(&pulse, Band::from(cfg))?;
    let mut quality = BTreeSet::new();
    let rr = match detect_peaks(&pulse, Some(hr_bpm)) {
        Ok(beats) => Some(beats.rr),
        Err(VitalsError::NoPeaks) => None,
        Err(e) => return Err(e),
    };

    let hrv = rr.as_ref().and_then(|rr| hrv_metrics(rr).ok());
    let si = rr.as_ref().and_then(|rr| baevsky_si(rr).ok());
    if hrv.is_none() || si.is_none() {
        quality.insert(QualityFlag::LowBeatCount);
    }
    if si.is_some_and(|s| s.degenerate_variability) {
        quality.insert(QualityFlag::DegenerateVariability);
    }
    if quality.is_empty() {
        quality.insert(QualityFlag::Ok);
    }
    let report = VitalsReport {
        hr_bpm,
        rr,
        pnn50_pct: hrv.map(|h| h.pnn50_pct),
        rmssd_ms: hrv.map(|h| h.rmssd_ms),
        sdnn_ms: hrv.map(|h| h.sdnn_ms),
        stress_index: si.map(|s| s.stress_index),
        quality: quality.into_iter().collect(),
    };
    Ok((report, pulse))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synth_trace, SynthParams};
    use crate::trace::{combine_rois, RoiWeights};
    use std::f64::consts::PI;

    fn tone(f: f64, fs: f64, secs: f64) -> PulseSignal {
        let n = (fs * secs).round() as usize;
        PulseSignal { fs, t0: 0.0, samples: (0..n).map(|k| (2.0 * PI * f * k as f64 / fs).sin()).collect() }
    }

    fn rr(v: &[f64]) -> RrSeries {
        RrSeries::new(v.to_vec()).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn hr_from_pure_tones() {
        assert!(close(estimate_hr(&tone(1.25, 30.0, 30.0), Band::default()).unwrap(), 75.0, 1.0));
        assert!(close(estimate_hr(&tone(0.8, 30.0, 30.0), Band::default()).unwrap(), 48.0, 1.0));
    }

    #[test]
    fn hr_errors() {
        assert_eq!(estimate_hr(&tone(1.25, 30.0, 5.0), Band::default()), Err(VitalsError::SignalTooShort(5.0)));
        let flat = PulseSignal { fs: 30.0, t0: 0.0, samples: vec![0.0; 900] };
        assert_eq!(estimate_hr(&flat, Band::default()), Err(VitalsError::NoSpectralPeak));
        assert!(matches!(
            estimate_hr(&tone(1.0, 6.0, 30.0), Band::default()),
            Err(VitalsError::InsufficientSamplingRate { .. })
        ));
    }

    #[test]
    fn hr_tone_grid() {
        for i in 0..=44 {
            let f = 0.8 + 0.05 * i as f64;
            let hr = estimate_hr(&tone(f, 30.0, 30.0), Band::default()).unwrap();
            assert!(close(hr, 60.0 * f, 1.0), "f={f} hr={hr}");
        }
    }

    #[test]
    fn peaks_of_one_hertz_tone() {
        let beats = detect_peaks(&tone(1.0, 100.0, 10.0), None).unwrap();
        assert_eq!(beats.peak_indices.len(), 10);
        assert!(beats.rr.intervals_ms().iter().all(|&v| close(v, 1000.0, 10.0)));
        assert_eq!(beats.dropped_intervals, 0);
    }

    #[test]
    fn constant_signal_has_no_peaks() {
        let flat = PulseSignal { fs: 30.0, t0: 0.0, samples: vec![1.0; 600] };
        assert_eq!(detect_peaks(&flat, Some(60.0)), Err(VitalsError::NoPeaks));
        assert_eq!(detect_peaks(&flat, None), Err(VitalsError::NoPeaks));
    }

    #[test]
    fn refractory_keeps_larger_peak() {
        // Main beat at 1 Hz plus a small notch peak 0.3 s later.
        let fs = 100.0;
        let samples: Vec<f64> = (0..1200)
            .map(|k| {
                let t = k as f64 / fs;
                let phase = t.fract();
                (-((phase - 0.2) / 0.05).powi(2)).exp() + 0.4 * (-((phase - 0.5) / 0.05).powi(2)).exp()
            })
            .collect();
        let beats = detect_peaks(&PulseSignal { fs, t0: 0.0, samples }, Some(60.0)).unwrap();
        assert_eq!(beats.peak_indices.len(), 12);
        assert!(beats.rr.intervals_ms().iter().all(|&v| close(v, 1000.0, 1.0)));
    }

    #[test]
    fn synthetic_pulse_mean_rr() {
        let (trace, _) = synth_trace(&SynthParams::new(75.0, 30.0, 30.0)).unwrap();
        let series = combine_rois(&trace, &RoiWeights::uniform()).unwrap();
        let pulse = pos_pipeline(&series, &PosConfig::default()).unwrap();
        let beats = detect_peaks(&pulse, None).unwrap();
        assert!(close(beats.rr.mean_ms(), 800.0, 5.0), "{}", beats.rr.mean_ms());
    }

    #[test]
    fn hrv_constant_series() {
        let m = hrv_metrics(&rr(&[800.0; 10])).unwrap();
        assert_eq!((m.pnn50_pct, m.rmssd_ms, m.sdnn_ms), (0.0, 0.0, 0.0));
    }

    #[test]
    fn hrv_hand_values() {
        let m = hrv_metrics(&rr(&[800.0, 860.0, 900.0, 905.0])).unwrap();
        assert!(close(m.pnn50_pct, 100.0 / 3.0, 1e-9));
        assert!(close(m.rmssd_ms, (5225.0_f64 / 3.0).sqrt(), 1e-9));
        assert!(close(m.rmssd_ms, 41.73, 0.005));
        assert!(close(m.sdnn_ms, 48.54, 0.005));
        let m = hrv_metrics(&rr(&[800.0, 900.0])).unwrap();
        assert!(close(m.pnn50_pct, 100.0, 1e-12));
        assert!(close(m.rmssd_ms, 100.0, 1e-12));
        assert!(close(m.sdnn_ms, 100.0 / 2.0_f64.sqrt(), 1e-9));
    }

    #[test]
    fn pnn50_threshold_is_strict() {
        let m = hrv_metrics(&rr(&[800.0, 850.0, 900.0])).unwrap();
        assert_eq!(m.pnn50_pct, 0.0);
        assert_eq!(hrv_metrics(&rr(&[800.0])), Err(VitalsError::TooFewIntervals { needed: 2, got: 1 }));
    }

    #[test]
    fn baevsky_alternating() {
        let v: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { 700.0 } else { 900.0 }).collect();
        let si = baevsky_si(&rr(&v)).unwrap();
        assert!(close(si.mode_s, 0.725, 1e-12));
        assert!(close(si.amo_pct, 50.0, 1e-12));
        assert!(close(si.stress_index, 172.41, 0.01));
        assert!(!si.degenerate_variability);
    }

    #[test]
    fn baevsky_constant_clamps() {
        let si = baevsky_si(&rr(&[800.0; 10])).unwrap();
        assert!(si.degenerate_variability);
        assert!(close(si.stress_index, 1212.12, 0.01));
        assert_eq!(baevsky_si(&rr(&[800.0; 9])), Err(VitalsError::TooFewIntervals { needed: 10, got: 9 }));
    }

    #[test]
    fn baevsky_edge_bins() {
        let mut v = vec![260.0; 6];
        v.extend([2500.0; 4]);
        let si = baevsky_si(&rr(&v)).unwrap();
        assert!(close(si.mode_s, 0.325, 1e-12));
        assert!(close(si.amo_pct, 60.0, 1e-12));
    }

    #[test]
    fn rr_series_validation() {
        assert!(matches!(RrSeries::new(vec![]), Err(VitalsError::TooFewIntervals { .. })));
        assert_eq!(RrSeries::new(vec![800.0, 200.0]), Err(VitalsError::InvalidRrInterval(200.0)));
    }

    #[test]
    fn vitals_on_synthetic_trace() {
        let (trace, _) = synth_trace(&SynthParams::new(72.0, 60.0, 30.0)).unwrap();
        let series = combine_rois(&trace, &RoiWeights::uniform()).unwrap();
        let report = compute_vitals(&series, &PosConfig::default()).unwrap();
        assert!(close(report.hr_bpm, 72.0, 2.0));
        assert!(close(report.rr.as_ref().unwrap().mean_ms(), 833.0, 10.0));
        // Noiseless input is metronomic: the RR range clamp flags it.
        assert_eq!(report.quality, vec![QualityFlag::DegenerateVariability]);
        assert!(report.pnn50_pct.is_some() && report.stress_index.is_some());

        let (trace, _) = synth_trace(&SynthParams::new(72.0, 60.0, 30.0).noise(0.005).seed(5)).unwrap();
        let series = combine_rois(&trace, &RoiWeights::uniform()).unwrap();
        let report = compute_vitals(&series, &PosConfig::default()).unwrap();
        assert!(close(report.hr_bpm, 72.0, 3.0));
        assert!(report.is_ok(), "{:?}", report.quality);
    }

    #[test]
    fn vitals_errors() {
        let flat = CombinedSeries { t0: 0.0, fs: 30.0, r: vec![140.0; 900], g: vec![110.0; 900], b: vec![95.0; 900] };
        assert_eq!(compute_vitals(&flat, &PosConfig::default()), Err(VitalsError::NoPulse));
        let short = CombinedSeries { t0: 0.0, fs: 30.0, r: vec![140.0; 240], g: vec![110.0; 240], b: vec![95.0; 240] };
        assert!(matches!(compute_vitals(&short, &PosConfig::default()), Err(VitalsError::TraceTooShort(_))));
    }

    #[test]
    fn report_json_shape() {
        let report = VitalsReport {
            hr_bpm: 60.0,
            rr: None,
            pnn50_pct: None,
            rmssd_ms: None,
            sdnn_ms: None,
            stress_index: None,
            quality: vec![QualityFlag::LowBeatCount],
        };
        let v = serde_json::to_value(&report).unwrap();
        assert_eq!(v["quality"][0], "low_beat_count");
        assert!(v["stress_index"].is_null());
    }
}
