//! Per-ROI mean RGB traces: CSV ingestion, uniform resampling and ROI combination.
//!
//! The trace document is long-form CSV with header `t,roi,r,g,b`, one row per
//! frame per region of interest. Lines starting with `#` are comments.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

/// Default largest inter-sample gap (s) that resampling will interpolate across.
pub const DEFAULT_GAP_LIMIT_S: f64 = 0.5;

const HEADER: [&str; 5] = ["t", "roi", "r", "g", "b"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TraceError {
    #[error("missing or invalid header, expected `t,roi,r,g,b`")]
    MissingHeader,
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("timestamps not strictly increasing for roi `{roi}` at line {line}")]
    NonMonotoneTimestamps { roi: String, line: usize },
    #[error("non-positive channel value at line {line}")]
    NonPositiveChannel { line: usize },
    #[error("trace contains no samples")]
    EmptyTrace,
    #[error("roi streams do not cover the same time span")]
    RoiSpanMismatch,
    #[error("roi `{roi}` has fewer than 2 samples")]
    TooFewSamples { roi: String },
    #[error("gap of {gap_s:.3} s in roi `{roi}` exceeds the {limit_s} s limit")]
    GapTooLarge { roi: String, gap_s: f64, limit_s: f64 },
    #[error("invalid target sampling rate {0}")]
    InvalidRate(f64),
    #[error("roi streams are not on a shared uniform grid")]
    RoiGridMismatch,
    #[error("roi weights sum to zero")]
    AllZeroWeights,
    #[error("invalid weight for roi `{0}`")]
    InvalidWeight(String),
}

impl TraceError {
    pub fn name(&self) -> &'static str {
        match self {
            TraceError::MissingHeader => "MissingHeader",
            TraceError::MalformedRow { .. } => "MalformedRow",
            TraceError::NonMonotoneTimestamps { .. } => "NonMonotoneTimestamps",
            TraceError::NonPositiveChannel { .. } => "NonPositiveChannel",
            TraceError::EmptyTrace => "EmptyTrace",
            TraceError::RoiSpanMismatch => "RoiSpanMismatch",
            TraceError::TooFewSamples { .. } => "TooFewSamples",
            TraceError::GapTooLarge { .. } => "GapTooLarge",
            TraceError::InvalidRate(_) => "InvalidRate",
            TraceError::RoiGridMismatch => "RoiGridMismatch",
            TraceError::AllZeroWeights => "AllZeroWeights",
            TraceError::InvalidWeight(_) => "InvalidWeight",
        }
    }

    /// True for errors raised while reading the document itself.
    pub fn is_parse_error(&self) -> bool {
        matches!(
            self,
            TraceError::MissingHeader
                | TraceError::MalformedRow { .. }
                | TraceError::NonMonotoneTimestamps { .. }
                | TraceError::NonPositiveChannel { .. }
                | TraceError::EmptyTrace
                | TraceError::RoiSpanMismatch
        )
    }
}

/// One ROI-averaged RGB value at one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbSample {
    pub t: f64,
    pub roi: String,
    pub r: f64,
    pub g: f64,
    pub b: f64,
}

/// The samples of a single ROI, column-wise and sorted by time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RoiStream {
    pub t: Vec<f64>,
    pub r: Vec<f64>,
    pub g: Vec<f64>,
    pub b: Vec<f64>,
}

impl RoiStream {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// `(n - 1) / (t_last - t_first)`, or `None` with fewer than two samples.
    pub fn estimated_fs(&self) -> Option<f64> {
        let n = self.t.len();
        if n < 2 {
            return None;
        }
        let span = self.t[n - 1] - self.t[0];
        (span > 0.0).then(|| (n - 1) as f64 / span)
    }

    fn push(&mut self, t: f64, r: f64, g: f64, b: f64) {
        self.t.push(t);
        self.r.push(r);
        self.g.push(g);
        self.b.push(b);
    }
}

/// Timestamped ROI-mean RGB series grouped by ROI label.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbTrace {
    streams: BTreeMap<String, RoiStream>,
    /// Nominal sampling rate; set once the trace is on a uniform grid.
    fs: Option<f64>,
}

impl RgbTrace {
    /// Builds a trace from samples in any order, validating the trace invariants.
    pub fn from_samples(samples: impl IntoIterator<Item = RgbSample>) -> Result<Self, TraceError> {
        let mut rows: Vec<(usize, RgbSample)> = samples.into_iter().enumerate().collect();
        rows.sort_by(|a, b| a.1.t.total_cmp(&b.1.t).then(a.0.cmp(&b.0)));
        let mut streams: BTreeMap<String, RoiStream> = BTreeMap::new();
        for (idx, s) in rows {
            if !(s.t.is_finite() && s.t >= 0.0) {
                return Err(TraceError::MalformedRow { line: idx + 1, reason: "bad timestamp".into() });
            }
            if !(s.r > 0.0 && s.g > 0.0 && s.b > 0.0) || !(s.r.is_finite() && s.g.is_finite() && s.b.is_finite()) {
                return Err(TraceError::NonPositiveChannel { line: idx + 1 });
            }
            let stream = streams.entry(s.roi.clone()).or_default();
            if stream.t.last().is_some_and(|&last| last >= s.t) {
                return Err(TraceError::NonMonotoneTimestamps { roi: s.roi, line: idx + 1 });
            }
            stream.push(s.t, s.r, s.g, s.b);
        }
        Self::from_streams(streams, None)
    }

    /// Builds a uniformly sampled single-ROI trace starting at `t0`.
    pub fn uniform(roi: &str, t0: f64, fs: f64, r: Vec<f64>, g: Vec<f64>, b: Vec<f64>) -> Result<Self, TraceError> {
        if !(fs.is_finite() && fs > 0.0) {
            return Err(TraceError::InvalidRate(fs));
        }
        if r.len() != g.len() || r.len() != b.len() {
            return Err(TraceError::RoiGridMismatch);
        }
        if r.iter().chain(&g).chain(&b).any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(TraceError::NonPositiveChannel { line: 0 });
        }
        let t = (0..r.len()).map(|k| t0 + k as f64 / fs).collect();
        let mut streams = BTreeMap::new();
        streams.insert(roi.to_string(), RoiStream { t, r, g, b });
        Self::from_streams(streams, Some(fs))
    }

    fn from_streams(streams: BTreeMap<String, RoiStream>, fs: Option<f64>) -> Result<Self, TraceError> {
        if streams.values().all(RoiStream::is_empty) {
            return Err(TraceError::EmptyTrace);
        }
        let trace = RgbTrace { streams, fs };
        trace.check_common_span()?;
        Ok(trace)
    }

    fn check_common_span(&self) -> Result<(), TraceError> {
        if self.streams.len() < 2 {
            return Ok(());
        }
        // Allowed slack: the longest frame period observed in any stream.
        let frame = self
            .streams
            .values()
            .filter_map(RoiStream::estimated_fs)
            .map(|fs| 1.0 / fs)
            .fold(0.0_f64, f64::max);
        let firsts = self.streams.values().map(|s| s.t[0]);
        let lasts = self.streams.values().map(|s| s.t[s.len() - 1]);
        let spread = |it: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            hi - lo
        };
        let tol = frame * (1.0 + 1e-9) + 1e-12;
        if spread(&mut firsts.into_iter()) > tol || spread(&mut lasts.into_iter()) > tol {
            return Err(TraceError::RoiSpanMismatch);
        }
        Ok(())
    }

    pub fn fs(&self) -> Option<f64> {
        self.fs
    }

    /// Mean of the per-ROI rate estimates.
    pub fn estimated_fs(&self) -> Option<f64> {
        let rates: Vec<f64> = self.streams.values().filter_map(RoiStream::estimated_fs).collect();
        (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64)
    }

    pub fn roi_set(&self) -> impl Iterator<Item = &str> {
        self.streams.keys().map(String::as_str)
    }

    pub fn stream(&self, roi: &str) -> Option<&RoiStream> {
        self.streams.get(roi)
    }

    pub fn streams(&self) -> &BTreeMap<String, RoiStream> {
        &self.streams
    }

    pub fn len(&self) -> usize {
        self.streams.values().map(RoiStream::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All samples in frame order (time, then ROI label).
    pub fn samples(&self) -> Vec<RgbSample> {
        let mut out: Vec<RgbSample> = self
            .streams
            .iter()
            .flat_map(|(roi, s)| {
                (0..s.len()).map(move |i| RgbSample { t: s.t[i], roi: roi.clone(), r: s.r[i], g: s.g[i], b: s.b[i] })
            })
            .collect();
        out.sort_by(|a, b| a.t.total_cmp(&b.t).then_with(|| a.roi.cmp(&b.roi)));
        out
    }

    /// Multiplies every channel value by `c`.
    pub fn scaled(&self, c: f64) -> RgbTrace {
        let mut out = self.clone();
        for s in out.streams.values_mut() {
            for v in s.r.iter_mut().chain(s.g.iter_mut()).chain(s.b.iter_mut()) {
                *v *= c;
            }
        }
        out
    }
}

fn parse_field(field: Option<&str>, line: usize, what: &str) -> Result<f64, TraceError> {
    let raw = field.ok_or_else(|| TraceError::MalformedRow { line, reason: format!("missing `{what}`") })?;
    raw.trim()
        .parse::<f64>()
        .map_err(|_| TraceError::MalformedRow { line, reason: format!("invalid `{what}` value `{}`", raw.trim()) })
}

/// Parses a trace CSV document. Line numbers in errors are 1-based and count
/// every physical line, comments included.
pub fn parse_trace(document: &str) -> Result<RgbTrace, TraceError> {
    let mut lines = document
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim_start().starts_with('#') && !l.trim().is_empty());

    let (_, header) = lines.next().ok_or(TraceError::EmptyTrace)?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols != HEADER {
        return Err(TraceError::MissingHeader);
    }

    let mut streams: BTreeMap<String, RoiStream> = BTreeMap::new();
    for (line, text) in lines {
        let mut fields = text.split(',');
        let t = parse_field(fields.next(), line, "t")?;
        let roi = fields
            .next()
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| TraceError::MalformedRow { line, reason: "missing `roi`".into() })?
            .to_string();
        let r = parse_field(fields.next(), line, "r")?;
        let g = parse_field(fields.next(), line, "g")?;
        let b = parse_field(fields.next(), line, "b")?;
        if fields.next().is_some() {
            return Err(TraceError::MalformedRow { line, reason: "too many fields".into() });
        }
        if !(t.is_finite() && t >= 0.0) {
            return Err(TraceError::MalformedRow { line, reason: "timestamp must be finite and non-negative".into() });
        }
        if !(r > 0.0 && g > 0.0 && b > 0.0 && r.is_finite() && g.is_finite() && b.is_finite()) {
            return Err(TraceError::NonPositiveChannel { line });
        }
        let stream = streams.entry(roi.clone()).or_default();
        if stream.t.last().is_some_and(|&last| last >= t) {
            return Err(TraceError::NonMonotoneTimestamps { roi, line });
        }
        stream.push(t, r, g, b);
    }
    RgbTrace::from_streams(streams, None)
}

/// Serializes a trace back into the CSV document format, rows in frame order.
/// Floats use the shortest representation that parses back to the same value.
pub fn serialize_trace(trace: &RgbTrace) -> String {
    let mut out = String::from("t,roi,r,g,b\n");
    if let Some(fs) = trace.fs {
        out = format!("# fs={fs}\n{out}");
    }
    for s in trace.samples() {
        let _ = writeln!(out, "{},{},{},{},{}", s.t, s.roi, s.r, s.g, s.b);
    }
    out
}

fn interpolate(t: &[f64], v: &[f64], grid: &[f64]) -> Vec<f64> {
    let mut j = 0;
    grid.iter()
        .map(|&x| {
            while j + 2 < t.len() && t[j + 1] <= x {
                j += 1;
            }
            let (t0, t1) = (t[j], t[j + 1]);
            if x == t0 {
                return v[j];
            }
            if x == t1 {
                return v[j + 1];
            }
            let w = (x - t0) / (t1 - t0);
            v[j] + w * (v[j + 1] - v[j])
        })
        .collect()
}

/// Linearly interpolates every ROI stream onto the shared grid `t0 + k / fs_target`,
/// where `[t0, t_end]` is the time span covered by all streams.
pub fn resample_uniform(trace: &RgbTrace, fs_target: f64, gap_limit_s: f64) -> Result<RgbTrace, TraceError> {
    if !(fs_target.is_finite() && fs_target > 0.0) {
        return Err(TraceError::InvalidRate(fs_target));
    }
    for (roi, s) in &trace.streams {
        if s.len() < 2 {
            return Err(TraceError::TooFewSamples { roi: roi.clone() });
        }
        if let Some(gap_s) = s.t.windows(2).map(|w| w[1] - w[0]).find(|&gap| gap > gap_limit_s) {
            return Err(TraceError::GapTooLarge { roi: roi.clone(), gap_s, limit_s: gap_limit_s });
        }
    }
    let t0 = trace.streams.values().map(|s| s.t[0]).fold(f64::NEG_INFINITY, f64::max);
    let t_end = trace.streams.values().map(|s| s.t[s.len() - 1]).fold(f64::INFINITY, f64::min);
    if t_end <= t0 {
        return Err(TraceError::RoiGridMismatch);
    }
    // Grid points land on t_end when the span is an exact multiple of the period.
    let steps = ((t_end - t0) * fs_target * (1.0 + 1e-12)).floor() as usize;
    let grid: Vec<f64> = (0..=steps).map(|k| (t0 + k as f64 / fs_target).min(t_end)).collect();

    let streams = trace
        .streams
        .iter()
        .map(|(roi, s)| {
            let stream = RoiStream {
                t: grid.clone(),
                r: interpolate(&s.t, &s.r, &grid),
                g: interpolate(&s.t, &s.g, &grid),
                b: interpolate(&s.t, &s.b, &grid),
            };
            (roi.clone(), stream)
        })
        .collect();
    Ok(RgbTrace { streams, fs: Some(fs_target) })
}

/// A single ROI-combined RGB stream on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedSeries {
    pub t0: f64,
    pub fs: f64,
    pub r: Vec<f64>,
    pub g: Vec<f64>,
    pub b: Vec<f64>,
}

impl CombinedSeries {
    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.fs
    }

    pub fn scaled(&self, c: f64) -> CombinedSeries {
        let scale = |v: &Vec<f64>| v.iter().map(|x| x * c).collect();
        CombinedSeries { t0: self.t0, fs: self.fs, r: scale(&self.r), g: scale(&self.g), b: scale(&self.b) }
    }
}

/// ROI weighting for [`combine_rois`]. ROIs absent from the map get weight 0
/// unless the map is empty, which means uniform weights.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoiWeights(pub BTreeMap<String, f64>);

impl RoiWeights {
    pub fn uniform() -> Self {
        RoiWeights::default()
    }
}

/// Per-timestamp weighted mean of each channel across ROIs.
pub fn combine_rois(trace: &RgbTrace, weights: &RoiWeights) -> Result<CombinedSeries, TraceError> {
    let fs = trace.fs.ok_or(TraceError::RoiGridMismatch)?;
    let mut streams = trace.streams.iter();
    let (_, first) = streams.next().ok_or(TraceError::EmptyTrace)?;
    if first.len() < 2 || streams.any(|(_, s)| s.t != first.t) {
        return Err(TraceError::RoiGridMismatch);
    }

    let raw: Vec<(&RoiStream, f64)> = trace
        .streams
        .iter()
        .map(|(roi, s)| {
            let w = if weights.0.is_empty() { 1.0 } else { weights.0.get(roi).copied().unwrap_or(0.0) };
            if !(w.is_finite() && w >= 0.0) {
                return Err(TraceError::InvalidWeight(roi.clone()));
            }
            Ok((s, w))
        })
        .collect::<Result<_, _>>()?;
    let total: f64 = raw.iter().map(|(_, w)| w).sum();
    if total <= 0.0 {
        return Err(TraceError::AllZeroWeights);
    }
    let active: Vec<(&RoiStream, f64)> = raw.into_iter().filter(|(_, w)| *w > 0.0).map(|(s, w)| (s, w / total)).collect();

    let n = first.len();
    let channel = |pick: fn(&RoiStream) -> &Vec<f64>| -> Vec<f64> {
        if let [(s, _)] = active.as_slice() {
            return pick(s).clone();
        }
        (0..n).map(|i| active.iter().map(|(s, w)| w * pick(s)[i]).sum()).collect()
    };
    Ok(CombinedSeries {
        t0: first.t[0],
        fs,
        r: channel(|s| &s.r),
        g: channel(|s| &s.g),
        b: channel(|s| &s.b),
    })
}
