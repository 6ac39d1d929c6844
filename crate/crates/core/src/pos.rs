//! Plane-orthogonal-to-skin pulse extraction.
//!
//! Each sliding window is divided by its per-channel mean, projected onto the two
//! axes `G - B` and `G + B - 2R`, combined with the ratio of their standard
//! deviations and overlap-added into the output. The result is restricted to the
//! pulse band with a zero-phase FFT mask.

use std::fmt::Write as _;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::trace::CombinedSeries;

/// Width (Hz) of the raised-cosine transition outside each band edge.
pub const BAND_TAPER_HZ: f64 = 0.1;

/// Smallest window the projection is allowed to run on.
pub const MIN_WINDOW_FRAMES: usize = 8;

const SINGULAR_STD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PosError {
    #[error("window contains a non-positive sample")]
    NonPositiveSample,
    #[error("window shorter than two samples")]
    DegenerateWindow,
    #[error("trace of {len} frames is shorter than the {window}-frame window")]
    TraceTooShort { len: usize, window: usize },
    #[error("band [{lo}, {hi}] Hz is not inside (0, {nyquist}) Hz")]
    BandOutOfRange { lo: f64, hi: f64, nyquist: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl PosError {
    pub fn name(&self) -> &'static str {
        match self {
            PosError::NonPositiveSample => "NonPositiveSample",
            PosError::DegenerateWindow => "DegenerateWindow",
            PosError::TraceTooShort { .. } => "TraceTooShort",
            PosError::BandOutOfRange { .. } => "BandOutOfRange",
            PosError::InvalidConfig(_) => "InvalidConfig",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosConfig {
    pub window_seconds: f64,
    pub stride_frames: usize,
    pub band_lo_hz: f64,
    pub band_hi_hz: f64,
}

impl Default for PosConfig {
    fn default() -> Self {
        PosConfig { window_seconds: 1.6, stride_frames: 1, band_lo_hz: 0.7, band_hi_hz: 4.0 }
    }
}

impl PosConfig {
    /// Window length in frames at sampling rate `fs`.
    pub fn window_frames(&self, fs: f64) -> usize {
        (self.window_seconds * fs).round().max(0.0) as usize
    }

    pub fn validate(&self, fs: f64) -> Result<(), PosError> {
        if !(self.band_lo_hz > 0.0 && self.band_lo_hz < self.band_hi_hz) {
            return Err(PosError::InvalidConfig(format!(
                "band edges must satisfy 0 < lo < hi, got [{}, {}]",
                self.band_lo_hz, self.band_hi_hz
            )));
        }
        if self.stride_frames == 0 {
            return Err(PosError::InvalidConfig("stride must be at least one frame".into()));
        }
        if !(self.window_seconds.is_finite() && self.window_frames(fs) >= MIN_WINDOW_FRAMES) {
            return Err(PosError::InvalidConfig(format!(
                "window of {} s at {fs} Hz is shorter than {MIN_WINDOW_FRAMES} frames",
                self.window_seconds
            )));
        }
        Ok(())
    }
}

/// Uniformly sampled pulse waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSignal {
    pub fs: f64,
    pub t0: f64,
    pub samples: Vec<f64>,
}

impl PulseSignal {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }

    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }

    /// CSV `t,value` with a leading `# fs=<Hz>` comment.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# fs={}\nt,value\n", self.fs);
        for (k, v) in self.samples.iter().enumerate() {
            let _ = writeln!(out, "{},{}", self.t0 + k as f64 / self.fs, v);
        }
        out
    }
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population standard deviation.
pub(crate) fn pop_std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

pub(crate) fn rms(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

/// Channels of one window, each divided by its own window mean.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedWindow {
    pub r: Vec<f64>,
    pub g: Vec<f64>,
    pub b: Vec<f64>,
}

pub fn temporal_normalize(r: &[f64], g: &[f64], b: &[f64]) -> Result<NormalizedWindow, PosError> {
    if r.len() < 2 || g.len() != r.len() || b.len() != r.len() {
        return Err(PosError::DegenerateWindow);
    }
    let normalize = |c: &[f64]| -> Result<Vec<f64>, PosError> {
        if c.iter().any(|&v| !(v > 0.0)) {
            return Err(PosError::NonPositiveSample);
        }
        let m = mean(c);
        Ok(c.iter().map(|v| v / m).collect())
    };
    Ok(NormalizedWindow { r: normalize(r)?, g: normalize(g)?, b: normalize(b)? })
}

/// Projects a normalized window onto the plane orthogonal to the skin tone and
/// returns the mean-subtracted combined pulse chunk.
pub fn pos_project_window(w: &NormalizedWindow) -> Vec<f64> {
    let s1: Vec<f64> = w.g.iter().zip(&w.b).map(|(g, b)| g - b).collect();
    let s2: Vec<f64> = w.g.iter().zip(&w.b).zip(&w.r).map(|((g, b), r)| g + b - 2.0 * r).collect();
    let std2 = pop_std(&s2);
    let h: Vec<f64> = if std2 < SINGULAR_STD {
        s1
    } else {
        let alpha = pop_std(&s1) / std2;
        s1.iter().zip(&s2).map(|(a, b)| a + alpha * b).collect()
    };
    let m = mean(&h);
    h.into_iter().map(|v| v - m).collect()
}

/// Runs the sliding-window projection with overlap-add, then band-limits the result.
pub fn pos_pipeline(series: &CombinedSeries, cfg: &PosConfig) -> Result<PulseSignal, PosError> {
    cfg.validate(series.fs)?;
    let n = series.len();
    let window = cfg.window_frames(series.fs);
    if n < window {
        return Err(PosError::TraceTooShort { len: n, window });
    }
    let mut acc = vec![0.0; n];
    let mut coverage = vec![0u32; n];
    for start in (0..=n - window).step_by(cfg.stride_frames) {
        let end = start + window;
        let norm = temporal_normalize(&series.r[start..end], &series.g[start..end], &series.b[start..end])?;
        for (slot, v) in acc[start..end].iter_mut().zip(pos_project_window(&norm)) {
            *slot += v;
        }
        coverage[start..end].iter_mut().for_each(|c| *c += 1);
    }
    // Samples near the ends are covered by fewer windows; rescale them to the
    // interior level so edge beats are not attenuated.
    let full = coverage.iter().copied().max().unwrap_or(1) as f64;
    for (v, &c) in acc.iter_mut().zip(&coverage) {
        if c > 0 {
            *v *= full / c as f64;
        }
    }
    let samples = bandpass(&acc, series.fs, cfg.band_lo_hz, cfg.band_hi_hz)?;
    Ok(PulseSignal { fs: series.fs, t0: series.t0, samples })
}

/// Gain of the band mask at frequency `f`: one inside `[lo, hi]`, raised-cosine
/// roll-off over `BAND_TAPER_HZ` outside each edge, zero beyond.
pub fn band_mask(f: f64, lo: f64, hi: f64) -> f64 {
    let f = f.abs();
    if f >= lo && f <= hi {
        1.0
    } else if f < lo && f > lo - BAND_TAPER_HZ {
        0.5 * (1.0 + (std::f64::consts::PI * (lo - f) / BAND_TAPER_HZ).cos())
    } else if f > hi && f < hi + BAND_TAPER_HZ {
        0.5 * (1.0 + (std::f64::consts::PI * (f - hi) / BAND_TAPER_HZ).cos())
    } else {
        0.0
    }
}

/// Zero-phase band restriction by masking the discrete Fourier spectrum.
pub fn bandpass(signal: &[f64], fs: f64, lo: f64, hi: f64) -> Result<Vec<f64>, PosError> {
    let nyquist = fs / 2.0;
    if !(lo > 0.0 && lo < hi && hi < nyquist) {
        return Err(PosError::BandOutOfRange { lo, hi, nyquist });
    }
    let n = signal.len();
    if n < 4 {
        return Err(PosError::DegenerateWindow);
    }
    let mut planner = FftPlanner::<f64>::new();
    let mut spectrum: Vec<Complex<f64>> = signal.iter().map(|&x| Complex::new(x, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut spectrum);
    for (k, bin) in spectrum.iter_mut().enumerate() {
        // Bin k and bin n - k share the same |frequency|, keeping the output real.
        let folded = k.min(n - k);
        *bin *= band_mask(folded as f64 * fs / n as f64, lo, hi);
    }
    planner.plan_fft_inverse(n).process(&mut spectrum);
    let scale = 1.0 / n as f64;
    Ok(spectrum.into_iter().map(|c| c.re * scale).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tone(f: f64, fs: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| (2.0 * PI * f * k as f64 / fs).sin()).collect()
    }

    #[test]
    fn normalize_constant_and_pair() {
        let w = temporal_normalize(&[100.0; 48], &[50.0; 48], &[7.0; 48]).unwrap();
        assert!(w.r.iter().chain(&w.g).chain(&w.b).all(|&v| v == 1.0));
        let w = temporal_normalize(&[1.0, 1.0], &[90.0, 110.0], &[1.0, 1.0]).unwrap();
        assert!((w.g[0] - 0.9).abs() < 1e-15 && (w.g[1] - 1.1).abs() < 1e-15);
    }

    #[test]
    fn normalize_errors() {
        assert_eq!(temporal_normalize(&[1.0, 0.0], &[1.0, 1.0], &[1.0, 1.0]), Err(PosError::NonPositiveSample));
        assert_eq!(temporal_normalize(&[1.0], &[1.0], &[1.0]), Err(PosError::DegenerateWindow));
    }

    #[test]
    fn normalized_means_are_one() {
        let r: Vec<f64> = (0..37).map(|k| 50.0 + (k as f64).sin()).collect();
        let w = temporal_normalize(&r, &r, &r).unwrap();
        assert!((mean(&w.r) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projection_of_constant_window_is_zero() {
        let w = NormalizedWindow { r: vec![1.0; 16], g: vec![1.0; 16], b: vec![1.0; 16] };
        assert!(pos_project_window(&w).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn projection_fallback_when_s2_vanishes() {
        let a = 0.01;
        let s: Vec<f64> = (0..48).map(|k| (2.0 * PI * k as f64 / 24.0).sin()).collect();
        let w = NormalizedWindow {
            r: vec![1.0; 48],
            g: s.iter().map(|x| 1.0 + a * x).collect(),
            b: s.iter().map(|x| 1.0 - a * x).collect(),
        };
        let h = pos_project_window(&w);
        let m = mean(&s);
        for (hv, sv) in h.iter().zip(&s) {
            assert!((hv - 2.0 * a * (sv - m)).abs() < 1e-14);
        }
    }

    #[test]
    fn projection_alpha_one_case() {
        let a = 0.02;
        let s: Vec<f64> = (0..40).map(|k| (0.37 * k as f64).sin()).collect();
        let w = NormalizedWindow { r: vec![1.0; 40], g: s.iter().map(|x| 1.0 + a * x).collect(), b: vec![1.0; 40] };
        let h = pos_project_window(&w);
        let m = mean(&s);
        for (hv, sv) in h.iter().zip(&s) {
            assert!((hv - 2.0 * a * (sv - m)).abs() < 1e-14);
        }
    }

    #[test]
    fn bandpass_zero_in_zero_out() {
        let out = bandpass(&[0.0; 900], 30.0, 0.7, 4.0).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bandpass_stops_and_passes_tones() {
        let fs = 30.0;
        let low = tone(0.2, fs, 900);
        let out = bandpass(&low, fs, 0.7, 4.0).unwrap();
        assert!(rms(&out) < 0.01 * rms(&low));
        let mid = tone(1.5, fs, 900);
        let out = bandpass(&mid, fs, 0.7, 4.0).unwrap();
        assert!((rms(&out) / rms(&mid) - 1.0).abs() < 0.01);
        assert_eq!(out.len(), 900);
    }

    #[test]
    fn bandpass_rejects_band_above_nyquist() {
        assert!(matches!(bandpass(&[0.0; 100], 30.0, 0.7, 15.0), Err(PosError::BandOutOfRange { .. })));
        assert!(matches!(bandpass(&[0.0; 100], 30.0, 4.0, 0.7), Err(PosError::BandOutOfRange { .. })));
    }

    #[test]
    fn mask_shape() {
        assert_eq!(band_mask(0.7, 0.7, 4.0), 1.0);
        assert_eq!(band_mask(4.0, 0.7, 4.0), 1.0);
        assert!((band_mask(0.65, 0.7, 4.0) - 0.5).abs() < 1e-12);
        assert!((band_mask(4.05, 0.7, 4.0) - 0.5).abs() < 1e-12);
        assert_eq!(band_mask(0.6, 0.7, 4.0), 0.0);
        assert_eq!(band_mask(4.1, 0.7, 4.0), 0.0);
    }

    #[test]
    fn constant_series_gives_zero_pulse() {
        let s = CombinedSeries { t0: 0.0, fs: 30.0, r: vec![140.0; 600], g: vec![110.0; 600], b: vec![95.0; 600] };
        let p = pos_pipeline(&s, &PosConfig::default()).unwrap();
        assert_eq!(p.samples.len(), 600);
        assert!(p.samples.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn short_series_and_bad_config() {
        let s = CombinedSeries { t0: 0.0, fs: 30.0, r: vec![1.0; 40], g: vec![1.0; 40], b: vec![1.0; 40] };
        assert_eq!(pos_pipeline(&s, &PosConfig::default()), Err(PosError::TraceTooShort { len: 40, window: 48 }));
        let cfg = PosConfig { window_seconds: 0.2, ..PosConfig::default() };
        assert!(matches!(pos_pipeline(&s, &cfg), Err(PosError::InvalidConfig(_))));
        let cfg = PosConfig { stride_frames: 0, ..PosConfig::default() };
        assert!(matches!(pos_pipeline(&s, &cfg), Err(PosError::InvalidConfig(_))));
    }

    #[test]
    fn pulse_csv_header() {
        let p = PulseSignal { fs: 4.0, t0: 1.0, samples: vec![0.5, -0.5] };
        assert_eq!(p.to_csv(), "# fs=4\nt,value\n1,0.5\n1.25,-0.5\n");
    }
}
