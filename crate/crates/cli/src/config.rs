//! Flat key-value run configuration.
//!
//! Format: one `key = value` per line, `#` starts a comment, blank lines
//! ignored. Durations and delays take a unit suffix (`ps`, `ns`, `us`, `ms`,
//! `s`). Unknown keys and malformed values are reported with their line
//! number.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use homsim::event::{DetectorModel, SourceConfig};
use homsim::fock::{BeamsplitterParams, LossParams};
use homsim::wavepacket::{DelayScan, SpectralProfile};

/// Which experiment the config models; a label carried into outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Photonic,
    Plasmonic,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Experiment::Photonic => write!(f, "photonic"),
            Experiment::Plasmonic => write!(f, "plasmonic"),
        }
    }
}

/// Everything a run needs: source physics, scan grid and analysis window.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub experiment: Experiment,
    /// Template for per-delay stream configs (delay 0; the scan fills it in).
    pub source: SourceConfig,
    pub scan: DelayScan,
    pub window_s: f64,
}

#[derive(Debug)]
pub struct ConfigError {
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(message: impl Into<String>) -> ConfigError {
    ConfigError {
        message: message.into(),
    }
}

/// Parse `0.3ps`, `2ns`, `1.5us`, `3600s`, ... into seconds. Negative values
/// allowed (scan bounds).
pub fn parse_duration(text: &str) -> Result<f64, ConfigError> {
    let text = text.trim();
    let suffixes = [
        ("ps", 1e-12),
        ("ns", 1e-9),
        ("us", 1e-6),
        ("µs", 1e-6),
        ("ms", 1e-3),
        ("s", 1.0),
    ];
    for (suffix, scale) in suffixes {
        if let Some(number) = text.strip_suffix(suffix) {
            // `ps` must not match the `s` arm; iterate longest-first order
            // above handles it.
            let value: f64 = number
                .trim()
                .parse()
                .map_err(|_| err(format!("`{text}` is not a valid duration")))?;
            return Ok(value * scale);
        }
    }
    Err(err(format!(
        "`{text}` needs a time unit suffix (ps, ns, us, ms, s)"
    )))
}

struct RawConfig {
    values: BTreeMap<String, (usize, String)>,
    path: String,
}

impl RawConfig {
    fn parse(text: &str, path: &str) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let stripped = match line.find('#') {
                Some(pos) => &line[..pos],
                None => line,
            }
            .trim();
            if stripped.is_empty() {
                continue;
            }
            let Some((key, value)) = stripped.split_once('=') else {
                return Err(err(format!(
                    "{path}:{line_no}: expected `key = value`, found `{stripped}`"
                )));
            };
            let key = key.trim().to_string();
            if values
                .insert(key.clone(), (line_no, value.trim().to_string()))
                .is_some()
            {
                return Err(err(format!("{path}:{line_no}: duplicate key `{key}`")));
            }
        }
        Ok(Self {
            values,
            path: path.to_string(),
        })
    }

    fn take(&mut self, key: &str) -> Result<(usize, String), ConfigError> {
        self.values
            .remove(key)
            .ok_or_else(|| err(format!("{}: missing required key `{key}`", self.path)))
    }

    fn take_with<T>(
        &mut self,
        key: &str,
        parse: impl Fn(&str) -> Result<T, ConfigError>,
    ) -> Result<T, ConfigError> {
        let (line_no, value) = self.take(key)?;
        parse(&value).map_err(|e| err(format!("{}:{line_no}: field `{key}`: {e}", self.path)))
    }

    fn take_f64(&mut self, key: &str) -> Result<f64, ConfigError> {
        self.take_with(key, |v| {
            v.parse::<f64>()
                .map_err(|_| err(format!("`{v}` is not a number")))
        })
    }

    fn take_u64(&mut self, key: &str) -> Result<u64, ConfigError> {
        self.take_with(key, |v| {
            v.parse::<u64>()
                .map_err(|_| err(format!("`{v}` is not an unsigned integer")))
        })
    }

    fn take_time(&mut self, key: &str) -> Result<f64, ConfigError> {
        self.take_with(key, parse_duration)
    }

    fn finish(self) -> Result<(), ConfigError> {
        if let Some((key, (line_no, _))) = self.values.into_iter().next() {
            return Err(err(format!(
                "{}:{line_no}: unknown key `{key}`",
                self.path
            )));
        }
        Ok(())
    }
}

/// Load and validate a [`RunConfig`] from a config file.
pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| err(format!("cannot read {}: {e}", path.display())))?;
    parse(&text, &path.display().to_string())
}

pub fn parse(text: &str, path: &str) -> Result<RunConfig, ConfigError> {
    let mut raw = RawConfig::parse(text, path)?;

    let experiment = raw.take_with("experiment", |v| match v {
        "photonic" => Ok(Experiment::Photonic),
        "plasmonic" => Ok(Experiment::Plasmonic),
        other => Err(err(format!(
            "`{other}` is neither `photonic` nor `plasmonic`"
        ))),
    })?;

    let pair_rate_cps = raw.take_f64("pair_rate")?;
    let duration_s = raw.take_time("duration")?;
    let seed = raw.take_u64("seed")?;
    let mode_overlap = raw.take_f64("mode_overlap")?;

    let center_wavelength_nm = raw.take_f64("center_wavelength_nm")?;
    let bandwidth_nm = raw.take_f64("bandwidth_nm")?;
    let profile = SpectralProfile::top_hat(center_wavelength_nm, bandwidth_nm)
        .map_err(|e| err(format!("{path}: spectral profile: {e}")))?;

    let transmittance = raw.take_f64("transmittance")?;
    let bs = BeamsplitterParams::from_transmittance(transmittance)
        .map_err(|e| err(format!("{path}: beamsplitter: {e}")))?;

    let loss = LossParams::new(
        raw.take_f64("eta_in_a")?,
        raw.take_f64("eta_in_b")?,
        raw.take_f64("eta_out_1")?,
        raw.take_f64("eta_out_2")?,
    )
    .map_err(|e| err(format!("{path}: loss parameters: {e}")))?;

    let detector = DetectorModel {
        timing_resolution_s: raw.take_time("timing_resolution")?,
        dead_time_s: raw.take_time("dead_time")?,
        dark_rate_cps: raw.take_f64("dark_rate")?,
    };

    let scan_min = raw.take_time("scan_min")?;
    let scan_max = raw.take_time("scan_max")?;
    let scan_points = raw.take_u64("scan_points")? as usize;
    let scan = DelayScan::uniform(scan_min, scan_max, scan_points)
        .map_err(|e| err(format!("{path}: scan grid: {e}")))?;

    let window_s = raw.take_time("window")?;
    // NaN fails closed.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(window_s > 0.0) {
        return Err(err(format!("{path}: window must be positive")));
    }

    raw.finish()?;

    let source = SourceConfig {
        pair_rate_cps,
        duration_s,
        seed,
        delay_s: 0.0,
        mode_overlap,
        profile,
        bs,
        loss,
        detector,
    };
    source
        .validate()
        .map_err(|e| err(format!("{path}: {e}")))?;

    Ok(RunConfig {
        experiment,
        source,
        scan,
        window_s,
    })
}
