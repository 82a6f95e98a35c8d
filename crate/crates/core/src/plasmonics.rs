//! Plasmonic channel characterization: stripe-waveguide propagation loss and
//! the Bragg-reflector splitting ratio.
//!
//! Propagation is an intensity decay `exp(−x/l)` with `l` the length at which
//! the intensity drops to 1/e. The splitting ratio comes from relative output
//! intensities: `T` is the fraction of the total output intensity found at
//! the grating directly opposite the input, and `R = 1 − T`. The wavelength
//! dependence of `T` is lookup data; only the 808 nm anchor value 0.49 ships
//! as a built-in default.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{least_squares, FitOptions, FitPoint};

/// Gold stripe waveguide geometry and its measured propagation length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveguideSpec {
    pub width_um: f64,
    pub thickness_nm: f64,
    /// Distance between in-coupling and out-coupling gratings.
    pub grating_to_grating_um: f64,
    /// 1/e intensity decay length.
    pub propagation_length_um: f64,
    pub propagation_length_err_um: f64,
}

impl WaveguideSpec {
    /// The measured stripe: 2 µm wide, 70 nm thick, L = 12.5 µm between
    /// gratings, l = 12.4 ± 0.3 µm.
    pub fn gold_stripe() -> Self {
        Self {
            width_um: 2.0,
            thickness_nm: 70.0,
            grating_to_grating_um: 12.5,
            propagation_length_um: 12.4,
            propagation_length_err_um: 0.3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all_positive = self.width_um > 0.0
            && self.thickness_nm > 0.0
            && self.grating_to_grating_um > 0.0
            && self.propagation_length_um > 0.0;
        if !all_positive {
            return Err(Error::InvalidConfig(
                "waveguide lengths must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Bragg reflector: ridge period plus a transmission lookup table over
/// wavelength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BraggSpec {
    pub ridge_period_nm: f64,
    /// `(wavelength_nm, transmission)` samples, strictly increasing in
    /// wavelength.
    pub transmission_table: Vec<(f64, f64)>,
}

impl BraggSpec {
    pub fn new(ridge_period_nm: f64, transmission_table: Vec<(f64, f64)>) -> Result<Self> {
        let spec = Self {
            ridge_period_nm,
            transmission_table,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Three-ridge reflector with 500 nm period; the only built-in anchor is
    /// T = 0.49 at 808 nm. Wider tables are user-supplied.
    pub fn three_ridge_default() -> Self {
        Self {
            ridge_period_nm: 500.0,
            transmission_table: vec![(808.0, 0.49)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.transmission_table.is_empty()
            || self
                .transmission_table
                .iter()
                .any(|&(_, t)| !(0.0..=1.0).contains(&t))
            || self
                .transmission_table
                .windows(2)
                .any(|w| w[1].0 <= w[0].0)
        {
            return Err(Error::InvalidTable);
        }
        Ok(())
    }
}

/// Intensity transmission after propagating `distance_um` along the stripe,
/// `exp(−distance/l)`. Folded into the arm efficiencies.
pub fn propagation_transmission(spec: &WaveguideSpec, distance_um: f64) -> Result<f64> {
    spec.validate()?;
    if distance_um < 0.0 {
        return Err(Error::NegativeDistance(distance_um));
    }
    Ok((-distance_um / spec.propagation_length_um).exp())
}

/// Least-squares fit of `I(x) = A·exp(−x/l)` to out-coupled intensity
/// vs. waveguide length. Returns `(l, A, σ_l)` with the standard error from
/// the fit covariance scaled by the residual variance.
pub fn fit_propagation_length(samples: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    if samples.len() < 3 {
        return Err(Error::InsufficientPoints {
            needed: 3,
            got: samples.len(),
        });
    }
    if samples.iter().any(|&(x, y)| !x.is_finite() || y <= 0.0) {
        return Err(Error::DegenerateFit(
            "intensities must be positive and lengths finite".into(),
        ));
    }
    let x0 = samples[0].0;
    let y0 = samples[0].1;
    if samples.iter().all(|&(x, _)| x == x0) {
        return Err(Error::DegenerateFit("all lengths identical".into()));
    }
    if samples.iter().all(|&(_, y)| y == y0) {
        return Err(Error::DegenerateFit("constant intensity data".into()));
    }

    // Log-linear regression seeds the nonlinear fit.
    let n = samples.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in samples {
        let ly = y.ln();
        sx += x;
        sy += ly;
        sxx += x * x;
        sxy += x * ly;
    }
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return Err(Error::DegenerateFit("lengths do not span a range".into()));
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    if slope >= 0.0 {
        return Err(Error::DegenerateFit(
            "intensity does not decay with length".into(),
        ));
    }
    let init = [intercept.exp(), -1.0 / slope];

    let points: Vec<FitPoint> = samples
        .iter()
        .map(|&(x, y)| FitPoint { x, y, sigma: 1.0 })
        .collect();
    let mut outcome = least_squares(
        &points,
        init,
        FitOptions::default(),
        |x, p| p[0] * (-x / p[1]).exp(),
        |x, p| {
            let e = (-x / p[1]).exp();
            [e, p[0] * e * x / (p[1] * p[1])]
        },
    )?;
    outcome.scale_covariance_by_residual();
    let errors = outcome.std_errors();
    Ok((outcome.params[1], outcome.params[0], errors[1]))
}

/// Splitting ratio from output intensities: `T = I_opposite / (I_opposite +
/// I_adjacent)`, `R = 1 − T`.
pub fn relative_transmission(intensity_opposite: f64, intensity_adjacent: f64) -> Result<(f64, f64)> {
    if intensity_opposite < 0.0
        || intensity_adjacent < 0.0
        || (intensity_opposite == 0.0 && intensity_adjacent == 0.0)
        || !intensity_opposite.is_finite()
        || !intensity_adjacent.is_finite()
    {
        return Err(Error::InvalidIntensityPair);
    }
    let t = intensity_opposite / (intensity_opposite + intensity_adjacent);
    Ok((t, 1.0 - t))
}

/// Linear interpolation of the transmission table at `wavelength_nm`;
/// `R = 1 − T`. No extrapolation outside the tabulated range.
pub fn bragg_lookup(spec: &BraggSpec, wavelength_nm: f64) -> Result<(f64, f64)> {
    spec.validate()?;
    let table = &spec.transmission_table;
    let (min, max) = (table[0].0, table[table.len() - 1].0);
    if wavelength_nm < min || wavelength_nm > max || !wavelength_nm.is_finite() {
        return Err(Error::WavelengthOutOfRange {
            wavelength: wavelength_nm,
            min,
            max,
        });
    }
    let idx = table.partition_point(|&(w, _)| w < wavelength_nm);
    let t = if idx < table.len() && table[idx].0 == wavelength_nm {
        table[idx].1
    } else {
        let (w0, t0) = table[idx - 1];
        let (w1, t1) = table[idx];
        t0 + (t1 - t0) * (wavelength_nm - w0) / (w1 - w0)
    };
    Ok((t, 1.0 - t))
}

/// Parse a `wavelength_nm,transmission` CSV into table rows.
pub fn parse_transmission_csv(text: &str) -> Result<Vec<(f64, f64)>> {
    parse_two_column_csv(text, "wavelength_nm", "transmission")
}

/// Parse a `length_um,intensity` CSV into fit samples.
pub fn parse_propagation_csv(text: &str) -> Result<Vec<(f64, f64)>> {
    parse_two_column_csv(text, "length_um", "intensity")
}

fn parse_two_column_csv(text: &str, col_a: &str, col_b: &str) -> Result<Vec<(f64, f64)>> {
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, line)) if line.trim().is_empty() => continue,
            Some((n, line)) => break (n, line),
            None => {
                return Err(Error::MalformedCsv {
                    line: 1,
                    reason: "empty file".into(),
                })
            }
        }
    };
    let expected = format!("{col_a},{col_b}");
    if header.1.trim() != expected {
        return Err(Error::MalformedCsv {
            line: header.0 + 1,
            reason: format!("expected header `{expected}`, found `{}`", header.1.trim()),
        });
    }
    let mut rows = Vec::new();
    for (n, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let parse = |field: Option<&str>, n: usize| -> Result<f64> {
            field
                .map(str::trim)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| Error::MalformedCsv {
                    line: n + 1,
                    reason: format!("expected two numeric fields in `{line}`"),
                })
        };
        let a = parse(fields.next(), n)?;
        let b = parse(fields.next(), n)?;
        if fields.next().is_some() {
            return Err(Error::MalformedCsv {
                line: n + 1,
                reason: "too many fields".into(),
            });
        }
        rows.push((a, b));
    }
    if rows.is_empty() {
        return Err(Error::MalformedCsv {
            line: header.0 + 2,
            reason: "no data rows".into(),
        });
    }
    Ok(rows)
}
