//! End-to-end trace analysis and canonical JSON output.
//!
//! The CLI and the HTTP service both go through [`analyze_trace`] and
//! [`canonical_json`], so equal inputs give byte-identical reports.

use serde::Serialize;
use serde_json::Value;

use crate::error::Error;
use crate::pos::{pos_pipeline, PosConfig, PulseSignal};
use crate::trace::{combine_rois, parse_trace, resample_uniform, CombinedSeries, RoiWeights, DEFAULT_GAP_LIMIT_S};
use crate::vitals::{compute_vitals, VitalsReport};

/// Significant digits kept for every float in canonical JSON.
pub const CANONICAL_DIGITS: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    /// Resampling rate; `None` uses the rate estimated from the trace.
    pub fs: Option<f64>,
    pub pos: PosConfig,
    pub weights: RoiWeights,
    pub gap_limit_s: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig { fs: None, pos: PosConfig::default(), weights: RoiWeights::uniform(), gap_limit_s: DEFAULT_GAP_LIMIT_S }
    }
}

/// Parses, resamples and combines a trace document into one RGB series.
pub fn prepare_series(document: &str, cfg: &AnalysisConfig) -> Result<CombinedSeries, Error> {
    let trace = parse_trace(document)?;
    let fs = match cfg.fs {
        Some(fs) => fs,
        // Estimated rates are rounded to the microhertz so jittery timestamps
        // do not leak float noise into the grid.
        None => trace
            .estimated_fs()
            .map(|fs| (fs * 1e6).round() / 1e6)
            .ok_or_else(|| crate::trace::TraceError::TooFewSamples {
                roi: trace.roi_set().next().unwrap_or_default().to_string(),
            })?,
    };
    let uniform = resample_uniform(&trace, fs, cfg.gap_limit_s)?;
    Ok(combine_rois(&uniform, &cfg.weights)?)
}

pub fn analyze_trace(document: &str, cfg: &AnalysisConfig) -> Result<VitalsReport, Error> {
    let series = prepare_series(document, cfg)?;
    Ok(compute_vitals(&series, &cfg.pos)?)
}

pub fn extract_pulse(document: &str, cfg: &AnalysisConfig) -> Result<PulseSignal, Error> {
    let series = prepare_series(document, cfg)?;
    Ok(pos_pipeline(&series, &cfg.pos)?)
}

fn format_number(x: f64) -> String {
    if !x.is_finite() {
        return "null".into();
    }
    let rounded: f64 = format!("{:.*e}", CANONICAL_DIGITS - 1, x).parse().expect("scientific notation parses");
    // Display never uses exponents and prints integral values without a fraction.
    let text = format!("{rounded}");
    if text == "-0" {
        "0".into()
    } else {
        text
    }
}

fn write_value(v: &Value, out: &mut String) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => out.push_str(&i.to_string()),
            (_, Some(u)) => out.push_str(&u.to_string()),
            _ => out.push_str(&format_number(n.as_f64().unwrap_or(f64::NAN))),
        },
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string serializes")),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(key).expect("key serializes"));
                out.push(':');
                write_value(&map[key], out);
            }
            out.push('}');
        }
    }
}

/// Compact JSON with sorted keys and every float rounded to six significant
/// digits, terminated by a newline.
pub fn canonical_json<T: Serialize>(value: &T) -> String {
    let value = serde_json::to_value(value).expect("value serializes to JSON");
    let mut out = String::new();
    write_value(&value, &mut out);
    out.push('\n');
    out
}
