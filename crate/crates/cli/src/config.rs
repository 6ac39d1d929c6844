//! Optional TOML configuration file. Keys mirror the command-line flags:
//!
//! ```toml
//! fs = 30.0
//! window = 1.6
//! stride = 1
//! band = "0.7:4.0"
//! gallery = "gallery.jsonl"
//! bind = "127.0.0.1:8080"
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use pulsekit_core::AnalysisConfig;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub fs: Option<f64>,
    pub window: Option<f64>,
    pub stride: Option<usize>,
    pub band: Option<String>,
    pub gallery: Option<PathBuf>,
    pub bind: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))
    }
}

/// Parses a `lo:hi` band given in Hz.
pub fn parse_band(text: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = text.split_once(':').ok_or_else(|| format!("band `{text}` must look like lo:hi"))?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("invalid band edge `{lo}`"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("invalid band edge `{hi}`"))?;
    if !(lo > 0.0 && lo < hi && hi.is_finite()) {
        return Err(format!("band `{text}` must satisfy 0 < lo < hi"));
    }
    Ok((lo, hi))
}

/// Analysis overrides shared by the `compute`, `pos` and `serve` paths.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnalysisOverrides {
    pub fs: Option<f64>,
    pub window: Option<f64>,
    pub stride: Option<usize>,
    pub band: Option<(f64, f64)>,
}

impl AnalysisOverrides {
    /// Fills unset fields from the config file.
    pub fn with_file(mut self, file: &FileConfig) -> Result<Self, String> {
        self.fs = self.fs.or(file.fs);
        self.window = self.window.or(file.window);
        self.stride = self.stride.or(file.stride);
        if self.band.is_none() {
            self.band = file.band.as_deref().map(parse_band).transpose()?;
        }
        Ok(self)
    }

    pub fn build(&self) -> Result<AnalysisConfig, String> {
        let mut cfg = AnalysisConfig::default();
        if let Some(fs) = self.fs {
            if !(fs > 0.0 && fs.is_finite()) {
                return Err(format!("invalid sampling rate {fs}"));
            }
            cfg.fs = Some(fs);
        }
        if let Some(window) = self.window {
            if !(window > 0.0 && window.is_finite()) {
                return Err(format!("invalid window length {window}"));
            }
            cfg.pos.window_seconds = window;
        }
        if let Some(stride) = self.stride {
            if stride == 0 {
                return Err("stride must be at least 1".into());
            }
            cfg.pos.stride_frames = stride;
        }
        if let Some((lo, hi)) = self.band {
            cfg.pos.band_lo_hz = lo;
            cfg.pos.band_hi_hz = hi;
        }
        Ok(cfg)
    }
}
