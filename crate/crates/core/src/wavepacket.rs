//! Spectral description of the down-converted photons and the analytic
//! coincidence dip.
//!
//! The photons carry top-hat spectral amplitudes of angular-frequency full
//! width Δω around ω₀. Delaying one wavepacket by Δt reduces their overlap to
//! `|sinc(Δt·Δω/2)|` with `sinc(x) = sin(x)/x` (unnormalized argument), which
//! makes the coherence time `τ_c = 2π/Δω` the scale of the dip. The
//! coincidence probability follows as
//!
//! ```text
//! P(Δt) = η_pair · (R² + T² − 2RT·sinc²(Δt·Δω/2))
//! ```
//!
//! reducing to `(1 − sinc²)/2` for a balanced lossless splitter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{hom_output_state, BeamsplitterParams, LossParams, OverlapParam};
use crate::units::SPEED_OF_LIGHT;

/// Supported spectral amplitude shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralShape {
    /// Constant amplitude over the full width, zero outside. For a top-hat
    /// the FWHM equals the full width.
    TopHat,
}

/// Spectral profile of a single photon: shape, center wavelength and FWHM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralProfile {
    pub shape: SpectralShape,
    pub center_wavelength_nm: f64,
    pub fwhm_wavelength_nm: f64,
}

impl SpectralProfile {
    pub fn top_hat(center_wavelength_nm: f64, fwhm_wavelength_nm: f64) -> Result<Self> {
        let profile = Self {
            shape: SpectralShape::TopHat,
            center_wavelength_nm,
            fwhm_wavelength_nm,
        };
        profile.validate()?;
        Ok(profile)
    }

    /// 800 nm center, 22 nm bandwidth: the interference-filter selection of
    /// the down-converted photons.
    pub fn filtered_downconversion() -> Self {
        Self {
            shape: SpectralShape::TopHat,
            center_wavelength_nm: 800.0,
            fwhm_wavelength_nm: 22.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.center_wavelength_nm > 0.0) || !self.center_wavelength_nm.is_finite() {
            return Err(Error::InvalidProfile(format!(
                "center wavelength {} nm must be positive",
                self.center_wavelength_nm
            )));
        }
        if !(self.fwhm_wavelength_nm > 0.0) || !self.fwhm_wavelength_nm.is_finite() {
            return Err(Error::InvalidProfile(format!(
                "FWHM {} nm must be positive",
                self.fwhm_wavelength_nm
            )));
        }
        if self.fwhm_wavelength_nm >= 2.0 * self.center_wavelength_nm {
            return Err(Error::InvalidProfile(
                "bandwidth exceeds twice the center wavelength".into(),
            ));
        }
        Ok(())
    }

    /// Center angular frequency ω₀ = 2πc/λ₀, rad/s.
    pub fn center_omega(&self) -> f64 {
        2.0 * std::f64::consts::PI * SPEED_OF_LIGHT / (self.center_wavelength_nm * 1e-9)
    }

    /// Angular-frequency FWHM Δω = 2πc·Δλ/λ₀², rad/s.
    pub fn delta_omega(&self) -> f64 {
        2.0 * std::f64::consts::PI * SPEED_OF_LIGHT * (self.fwhm_wavelength_nm * 1e-9)
            / (self.center_wavelength_nm * 1e-9).powi(2)
    }

    /// Squared spectral amplitude |φ(ω)|², normalized so ∫|φ|²dω = 1.
    pub fn spectral_density(&self, omega: f64) -> f64 {
        let half_width = self.delta_omega() / 2.0;
        let detuning = omega - self.center_omega();
        match self.shape {
            SpectralShape::TopHat => {
                if detuning.abs() <= half_width {
                    1.0 / self.delta_omega()
                } else {
                    0.0
                }
            }
        }
    }
}

/// Ordered list of relative delays for a dip scan, with optional delay-stage
/// metadata (a stage displacement d maps to Δt = d/c).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayScan {
    delays_s: Vec<f64>,
    stage_step_m: Option<f64>,
}

impl DelayScan {
    pub fn new(delays_s: Vec<f64>) -> Result<Self> {
        if delays_s.is_empty() || delays_s.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidScan);
        }
        Ok(Self {
            delays_s,
            stage_step_m: None,
        })
    }

    /// Uniform grid of `points` delays spanning `[min_s, max_s]`.
    pub fn uniform(min_s: f64, max_s: f64, points: usize) -> Result<Self> {
        if points == 0 || (points > 1 && max_s <= min_s) {
            return Err(Error::InvalidScan);
        }
        if points == 1 {
            return Self::new(vec![min_s]);
        }
        let step = (max_s - min_s) / (points - 1) as f64;
        Self::new((0..points).map(|i| min_s + i as f64 * step).collect())
    }

    /// Grid from delay-stage displacements, Δt = d/c per step.
    pub fn from_stage(step_distance_m: f64, steps_each_side: usize) -> Result<Self> {
        let step_s = step_distance_m / SPEED_OF_LIGHT;
        let n = steps_each_side as i64;
        let mut scan = Self::new((-n..=n).map(|i| i as f64 * step_s).collect())?;
        scan.stage_step_m = Some(step_distance_m);
        Ok(scan)
    }

    pub fn delays(&self) -> &[f64] {
        &self.delays_s
    }

    pub fn len(&self) -> usize {
        self.delays_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delays_s.is_empty()
    }

    pub fn stage_step_m(&self) -> Option<f64> {
        self.stage_step_m
    }
}

/// sin(x)/x, stable near zero.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-6 {
        // Series keeps full f64 accuracy for |x| below the crossover.
        1.0 - x * x / 6.0 + x * x * x * x / 120.0
    } else {
        x.sin() / x
    }
}

/// Wavepacket overlap at relative delay `delta_t`: `|sinc(Δt·Δω/2)|`.
///
/// Even in Δt, equal to 1 at zero delay.
pub fn overlap(profile: &SpectralProfile, delta_t_s: f64) -> Result<OverlapParam> {
    profile.validate()?;
    let x = delta_t_s * profile.delta_omega() / 2.0;
    OverlapParam::new(sinc(x).abs().min(1.0))
}

/// Analytic coincidence probability per generated pair at delay `delta_t`.
///
/// `P = η_inA·η_inB·η_out1·η_out2 · (R² + T² − 2RT·sinc²(Δt·Δω/2))`; at a
/// balanced lossless splitter this is `(1 − sinc²)/2` with `P(0) = 0` and
/// `P(Δt ≫ τ_c) = 1/2`.
pub fn coincidence_probability(
    profile: &SpectralProfile,
    delta_t_s: f64,
    bs: BeamsplitterParams,
    loss: LossParams,
) -> Result<f64> {
    bs.validate()?;
    loss.validate()?;
    let mu = overlap(profile, delta_t_s)?;
    let p_coincidence = hom_output_state(bs, mu)?.probability(1, 1);
    Ok(loss.pair_efficiency() * p_coincidence)
}

/// Photon coherence time `τ_c = 2π/Δω`.
pub fn coherence_time(profile: &SpectralProfile) -> Result<f64> {
    profile.validate()?;
    Ok(2.0 * std::f64::consts::PI / profile.delta_omega())
}
