//! Analysis of time-tag streams: windowed coincidence counting, accidental
//! subtraction, visibility and the dip fit.
//!
//! Coincidence pairing is greedy earliest-match with each record used at most
//! once. Two records coincide when their separation is at most *half* the
//! coincidence window, so the Δt acceptance interval has total width equal to
//! the window and uncorrelated channels produce accidentals at the textbook
//! rate `r₁·r₂·window`. Rates are reported in counts/hour with Poisson
//! standard deviations.

use std::collections::VecDeque;
use std::io::Write as IoWrite;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::TimeTagRecord;
use crate::fit::{least_squares, FitOptions, FitPoint};
use crate::fock::BeamsplitterParams;
use crate::units::{cps_to_cph, PS_PER_S, S_PER_HOUR};
use crate::wavepacket::sinc;

/// A value with a one-standard-deviation uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub value: f64,
    pub sigma: f64,
}

impl Measured {
    pub fn new(value: f64, sigma: f64) -> Self {
        Self { value, sigma }
    }
}

/// Windowed coincidence counts for one stream, with accidental correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceResult {
    pub raw_coincidences: u64,
    pub duration_s: f64,
    pub window_s: f64,
    /// Raw coincidence rate, counts/hour, σ = √N scaled to rate units.
    pub rate_raw_cph: Measured,
    pub singles_b1_counts: u64,
    pub singles_b2_counts: u64,
    pub singles_b1_cph: f64,
    pub singles_b2_cph: f64,
    /// Estimated accidental rate `r₁·r₂·window`, counts/hour.
    pub accidental_cph: f64,
    /// `rate_raw − accidental`, with the singles uncertainty folded in.
    pub rate_corrected_cph: Measured,
    /// Set when the corrected rate is negative beyond 3σ, which a correct
    /// correction should not produce.
    pub negative_beyond_noise: bool,
}

/// Streaming greedy coincidence counter.
///
/// Feed records in non-decreasing timestamp order; [`finish`] turns the
/// tallies into rates. Pairing: on each record, queued records on the other
/// channel that can no longer match are evicted, then the earliest survivor
/// within half a window is consumed as this record's partner.
///
/// [`finish`]: CoincidenceCounter::finish
#[derive(Debug, Clone)]
pub struct CoincidenceCounter {
    window_ps: u64,
    pending: [VecDeque<u64>; 2],
    raw: u64,
    singles: [u64; 2],
    last_ts: Option<u64>,
}

impl CoincidenceCounter {
    pub fn new(window_s: f64) -> Result<Self> {
        if !(window_s > 0.0) || !window_s.is_finite() {
            return Err(Error::InvalidWindow(window_s));
        }
        let window_ps = (window_s * PS_PER_S).round() as u64;
        if window_ps == 0 {
            return Err(Error::InvalidWindow(window_s));
        }
        Ok(Self {
            window_ps,
            pending: [VecDeque::new(), VecDeque::new()],
            raw: 0,
            singles: [0, 0],
            last_ts: None,
        })
    }

    pub fn push(&mut self, record: TimeTagRecord) -> Result<()> {
        let t = record.timestamp_ps;
        if let Some(last) = self.last_ts {
            if t < last {
                return Err(Error::UnsortedStream {
                    previous: last,
                    timestamp: t,
                });
            }
        }
        self.last_ts = Some(t);

        let own = record.channel.index();
        let other = 1 - own;
        self.singles[own] += 1;

        // Drop partners that are already out of reach; future records only
        // move further away.
        let window = self.window_ps;
        for queue in &mut self.pending {
            while queue.front().is_some_and(|&s| 2 * (t - s) > window) {
                queue.pop_front();
            }
        }

        if self.pending[other].pop_front().is_some() {
            self.raw += 1;
        } else {
            self.pending[own].push_back(t);
        }
        Ok(())
    }

    /// Convert the tallies into rates for an acquisition of `duration_s`.
    pub fn finish(self, duration_s: f64) -> Result<CoincidenceResult> {
        if !(duration_s > 0.0) || !duration_s.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "duration {duration_s} s must be positive"
            )));
        }
        let window_s = self.window_ps as f64 / PS_PER_S;
        let hours = duration_s / S_PER_HOUR;

        let raw = self.raw as f64;
        let rate_raw_cph = Measured::new(raw / hours, raw.sqrt() / hours);

        let (n1, n2) = (self.singles[0] as f64, self.singles[1] as f64);
        let r1_cps = n1 / duration_s;
        let r2_cps = n2 / duration_s;
        let accidental_cph = cps_to_cph(accidental_rate(r1_cps, r2_cps, window_s));
        // Poisson error of the accidental estimate, from the singles counts.
        let sigma_accidental = if n1 > 0.0 && n2 > 0.0 {
            accidental_cph * (1.0 / n1 + 1.0 / n2).sqrt()
        } else {
            0.0
        };

        let corrected = rate_raw_cph.value - accidental_cph;
        let sigma_corrected =
            (rate_raw_cph.sigma.powi(2) + sigma_accidental.powi(2)).sqrt();
        let rate_corrected_cph = Measured::new(corrected, sigma_corrected);

        Ok(CoincidenceResult {
            raw_coincidences: self.raw,
            duration_s,
            window_s,
            rate_raw_cph,
            singles_b1_counts: self.singles[0],
            singles_b2_counts: self.singles[1],
            singles_b1_cph: cps_to_cph(r1_cps),
            singles_b2_cph: cps_to_cph(r2_cps),
            accidental_cph,
            rate_corrected_cph,
            negative_beyond_noise: corrected < -3.0 * sigma_corrected && sigma_corrected > 0.0,
        })
    }
}

/// Count windowed coincidences in a sorted stream acquired over
/// `duration_s`. Single linear pass; rejects unsorted input.
pub fn count_coincidences(
    stream: impl IntoIterator<Item = TimeTagRecord>,
    window_s: f64,
    duration_s: f64,
) -> Result<CoincidenceResult> {
    let mut counter = CoincidenceCounter::new(window_s)?;
    for record in stream {
        counter.push(record)?;
    }
    counter.finish(duration_s)
}

/// Accidental coincidence rate of two uncorrelated channels,
/// `r₁·r₂·window`, in counts/s.
pub fn accidental_rate(r1_cps: f64, r2_cps: f64, window_s: f64) -> f64 {
    debug_assert!(r1_cps >= 0.0 && r2_cps >= 0.0 && window_s >= 0.0);
    r1_cps * r2_cps * window_s
}

/// Dip visibility `V = (N_max − N_min)/N_max` with first-order error
/// propagation from the rate uncertainties.
pub fn visibility(n_max: Measured, n_min: Measured) -> Result<Measured> {
    if !(n_max.value > 0.0) {
        return Err(Error::NonPositiveBaseline(n_max.value));
    }
    let value = (n_max.value - n_min.value) / n_max.value;
    let sigma = ((n_min.sigma / n_max.value).powi(2)
        + (n_min.value * n_max.sigma / (n_max.value * n_max.value)).powi(2))
    .sqrt();
    Ok(Measured::new(value, sigma))
}

/// Classification of a dip against the classical interference bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    /// Visibility exceeds 0.5 by more than one standard deviation: only
    /// quantum interference produces this.
    #[serde(rename = "quantum")]
    Quantum,
    #[serde(rename = "classical-compatible")]
    ClassicalCompatible,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Quantum => write!(f, "quantum"),
            Verdict::ClassicalCompatible => write!(f, "classical-compatible"),
        }
    }
}

/// Fitted dip parameters for `N(Δt) = N_max·(1 − V·sinc²((Δt − Δt₀)·Δω/2))`.
#[derive(Debug, Clone, PartialEq)]
pub struct DipFit {
    pub n_max_cph: Measured,
    pub visibility: Measured,
    /// Spectral full width, rad/s.
    pub delta_omega: Measured,
    pub delay_offset_s: Measured,
    pub chi2_reduced: f64,
    pub iterations: usize,
    /// Set when the raw fit left [0, 1] and the reported visibility was
    /// clamped.
    pub visibility_clamped: bool,
    /// Set when fewer than two points sit clear of the dip, leaving the
    /// baseline poorly constrained.
    pub thin_baseline: bool,
}

impl DipFit {
    /// Coherence time `τ_c = 2π/Δω` of the fitted dip width.
    pub fn coherence_time_s(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.delta_omega.value
    }
}

fn dip_model(x: f64, p: &[f64; 4]) -> f64 {
    let chi = (x - p[3]) * p[2] / 2.0;
    let u = sinc(chi);
    p[0] * (1.0 - p[1] * u * u)
}

fn dip_gradient(x: f64, p: &[f64; 4]) -> [f64; 4] {
    let chi = (x - p[3]) * p[2] / 2.0;
    let u = sinc(chi);
    let du = if chi.abs() < 1e-6 {
        -chi / 3.0 + chi * chi * chi / 30.0
    } else {
        (chi.cos() - u) / chi
    };
    [
        1.0 - p[1] * u * u,
        -p[0] * u * u,
        -p[0] * p[1] * u * du * (x - p[3]),
        p[0] * p[1] * u * du * p[2],
    ]
}

/// Weighted fit of the dip model to `(delay, corrected rate ± σ)` points.
///
/// `delta_omega_init` seeds the width parameter; take it from the configured
/// spectral profile. The other starting values follow from the data: the
/// baseline from the outermost fifth of the points, the offset from the
/// lowest point (ties break toward zero delay), the visibility from the raw
/// min/max. Points with zero σ are weighted as one count at the smallest
/// positive σ.
pub fn fit_dip(points: &[(f64, Measured)], delta_omega_init: f64) -> Result<DipFit> {
    if points.len() < 5 {
        return Err(Error::InsufficientPoints {
            needed: 5,
            got: points.len(),
        });
    }
    if !(delta_omega_init > 0.0) || !delta_omega_init.is_finite() {
        return Err(Error::DegenerateFit(format!(
            "initial spectral width {delta_omega_init} must be positive"
        )));
    }

    // Argmin delay, ties toward the smallest |Δt|.
    let offset_init = points
        .iter()
        .min_by(|a, b| {
            a.1.value
                .total_cmp(&b.1.value)
                .then(a.0.abs().total_cmp(&b.0.abs()))
        })
        .expect("non-empty")
        .0;

    let mut by_distance: Vec<&(f64, Measured)> = points.iter().collect();
    by_distance.sort_by(|a, b| (a.0 - offset_init).abs().total_cmp(&(b.0 - offset_init).abs()));
    let outer = (points.len() / 5).max(2);
    let n_max_init = by_distance[points.len() - outer..]
        .iter()
        .map(|p| p.1.value)
        .sum::<f64>()
        / outer as f64;
    if !(n_max_init > 0.0) {
        return Err(Error::DegenerateFit(
            "baseline estimate is not positive".into(),
        ));
    }
    let min_rate = points
        .iter()
        .map(|p| p.1.value)
        .fold(f64::INFINITY, f64::min);
    let v_init = ((n_max_init - min_rate) / n_max_init).clamp(0.0, 1.0);

    let sigma_floor = points
        .iter()
        .map(|p| p.1.sigma)
        .filter(|&s| s > 0.0)
        .fold(f64::INFINITY, f64::min);
    let sigma_floor = if sigma_floor.is_finite() { sigma_floor } else { 1.0 };
    let fit_points: Vec<FitPoint> = points
        .iter()
        .map(|&(x, m)| FitPoint {
            x,
            y: m.value,
            sigma: if m.sigma > 0.0 { m.sigma } else { sigma_floor },
        })
        .collect();

    let outcome = least_squares(
        &fit_points,
        [n_max_init, v_init, delta_omega_init, offset_init],
        FitOptions::default(),
        dip_model,
        dip_gradient,
    )?;

    let errors = outcome.std_errors();
    let raw_v = outcome.params[1];
    let clamped = !(0.0..=1.0).contains(&raw_v);
    let delta_omega = outcome.params[2].abs();

    // Baseline coverage: points where the dip factor has decayed below 5%.
    let baseline_points = points
        .iter()
        .filter(|&&(x, _)| {
            let u = sinc((x - outcome.params[3]) * delta_omega / 2.0);
            u * u < 0.05
        })
        .count();

    Ok(DipFit {
        n_max_cph: Measured::new(outcome.params[0], errors[0]),
        visibility: Measured::new(raw_v.clamp(0.0, 1.0), errors[1]),
        delta_omega: Measured::new(delta_omega, errors[2]),
        delay_offset_s: Measured::new(outcome.params[3], errors[3]),
        chi2_reduced: outcome.chi2_reduced(),
        iterations: outcome.iterations,
        visibility_clamped: clamped,
        thin_baseline: baseline_points < 2,
    })
}

/// Quantum iff the visibility exceeds the classical bound 0.5 by more than
/// its standard deviation.
pub fn quantum_threshold_test(fit: &DipFit) -> Verdict {
    threshold_verdict(fit.visibility)
}

pub fn threshold_verdict(visibility: Measured) -> Verdict {
    if visibility.value - visibility.sigma > 0.5 {
        Verdict::Quantum
    } else {
        Verdict::ClassicalCompatible
    }
}

/// Monte Carlo visibility of two classical fields on the splitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalVisibility {
    pub visibility: f64,
    pub std_error: f64,
    pub trials: u64,
}

/// Intensity-correlation visibility attainable with classical light:
/// equal-amplitude fields with uniformly random relative phase interfere on
/// the splitter, and the dip contrast of `⟨I₁I₂⟩` against `⟨I₁⟩⟨I₂⟩` is
/// returned. Peaks at 1/2 for a balanced splitter: the threshold that
/// quantum interference must beat.
///
/// The quoted standard error covers the Monte Carlo average of `⟨I₁I₂⟩`
/// (the singles means are orders of magnitude tighter).
pub fn classical_visibility_oracle(
    bs: BeamsplitterParams,
    trials: u64,
    seed: u64,
) -> Result<ClassicalVisibility> {
    bs.validate()?;
    assert!(trials >= 10_000, "need at least 1e4 trials, got {trials}");

    let sqrt_r = bs.reflectance.sqrt();
    let sqrt_t = bs.transmittance.sqrt();
    let i_sqrt_r = Complex64::new(0.0, sqrt_r);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum1, mut sum2, mut sum12, mut sum12_sq) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..trials {
        let phase = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
        let field_b = Complex64::from_polar(1.0, phase);
        let out1 = i_sqrt_r + sqrt_t * field_b;
        let out2 = sqrt_t + i_sqrt_r * field_b;
        let i1 = out1.norm_sqr();
        let i2 = out2.norm_sqr();
        sum1 += i1;
        sum2 += i2;
        sum12 += i1 * i2;
        sum12_sq += (i1 * i2) * (i1 * i2);
    }
    let n = trials as f64;
    let mean1 = sum1 / n;
    let mean2 = sum2 / n;
    let mean12 = sum12 / n;
    let var12 = (sum12_sq / n - mean12 * mean12).max(0.0);

    let baseline = mean1 * mean2;
    Ok(ClassicalVisibility {
        visibility: 1.0 - mean12 / baseline,
        std_error: (var12 / n).sqrt() / baseline,
        trials,
    })
}

/// One row of an analyzed (or predicted) dip curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipPoint {
    pub delay_s: f64,
    pub raw_cph: f64,
    pub accidental_cph: f64,
    pub corrected_cph: Measured,
}

impl DipPoint {
    pub fn from_result(delay_s: f64, result: &CoincidenceResult) -> Self {
        Self {
            delay_s,
            raw_cph: result.rate_raw_cph.value,
            accidental_cph: result.accidental_cph,
            corrected_cph: result.rate_corrected_cph,
        }
    }
}

/// Write a dip curve as `delay_ps,rate_cph,sigma_cph,raw_cph,accidental_cph`.
pub fn write_dip_csv<W: IoWrite>(mut writer: W, points: &[DipPoint]) -> std::io::Result<()> {
    writeln!(writer, "delay_ps,rate_cph,sigma_cph,raw_cph,accidental_cph")?;
    for p in points {
        writeln!(
            writer,
            "{:.6},{:.6},{:.6},{:.6},{:.6}",
            p.delay_s * PS_PER_S,
            p.corrected_cph.value,
            p.corrected_cph.sigma,
            p.raw_cph,
            p.accidental_cph,
        )?;
    }
    Ok(())
}

/// Parse a dip-curve CSV produced by [`write_dip_csv`].
pub fn read_dip_csv(text: &str) -> Result<Vec<DipPoint>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "delay_ps,rate_cph,sigma_cph,raw_cph,accidental_cph" => {}
        Some((n, header)) => {
            return Err(Error::MalformedCsv {
                line: n + 1,
                reason: format!("unexpected header `{header}`"),
            })
        }
        None => {
            return Err(Error::MalformedCsv {
                line: 1,
                reason: "empty file".into(),
            })
        }
    }
    let mut points = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::MalformedCsv {
                line: n + 1,
                reason: e.to_string(),
            })?;
        if fields.len() != 5 {
            return Err(Error::MalformedCsv {
                line: n + 1,
                reason: format!("expected 5 fields, found {}", fields.len()),
            });
        }
        points.push(DipPoint {
            delay_s: fields[0] / PS_PER_S,
            corrected_cph: Measured::new(fields[1], fields[2]),
            raw_cph: fields[3],
            accidental_cph: fields[4],
        });
    }
    Ok(points)
}

/// Fit summary in the JSON report schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub n_max: f64,
    pub visibility: f64,
    pub sigma_visibility: f64,
    pub delta_omega: f64,
    pub coherence_time_ps: f64,
    pub delay_offset_ps: f64,
    pub chi2_reduced: f64,
    pub verdict: Verdict,
}

impl FitReport {
    pub fn from_fit(fit: &DipFit) -> Self {
        Self {
            n_max: fit.n_max_cph.value,
            visibility: fit.visibility.value,
            sigma_visibility: fit.visibility.sigma,
            delta_omega: fit.delta_omega.value,
            coherence_time_ps: fit.coherence_time_s() * PS_PER_S,
            delay_offset_ps: fit.delay_offset_s.value * PS_PER_S,
            chi2_reduced: fit.chi2_reduced,
            verdict: quantum_threshold_test(fit),
        }
    }
}

pub fn write_fit_json<W: IoWrite>(mut writer: W, report: &FitReport) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, report)?;
    writer.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::Channel;
    use rand::{Rng, SeedableRng};

    fn rec(channel: Channel, timestamp_ps: u64) -> TimeTagRecord {
        TimeTagRecord {
            channel,
            timestamp_ps,
        }
    }

    const WINDOW_2NS: f64 = 2e-9;

    #[test]
    fn pair_inside_window_counts_once() {
        let stream = vec![rec(Channel::B1, 100), rec(Channel::B2, 1100)];
        let result = count_coincidences(stream, WINDOW_2NS, 1.0).unwrap();
        assert_eq!(result.raw_coincidences, 1);
    }

    #[test]
    fn pair_outside_window_does_not_count() {
        let stream = vec![rec(Channel::B1, 0), rec(Channel::B2, 3000)];
        let result = count_coincidences(stream, WINDOW_2NS, 1.0).unwrap();
        assert_eq!(result.raw_coincidences, 0);

        // Just past half a window.
        let stream = vec![rec(Channel::B1, 0), rec(Channel::B2, 1001)];
        let result = count_coincidences(stream, WINDOW_2NS, 1.0).unwrap();
        assert_eq!(result.raw_coincidences, 0);
    }

    #[test]
    fn same_channel_records_never_pair() {
        let stream = vec![
            rec(Channel::B1, 0),
            rec(Channel::B1, 0),
            rec(Channel::B1, 500),
        ];
        let result = count_coincidences(stream, WINDOW_2NS, 1.0).unwrap();
        assert_eq!(result.raw_coincidences, 0);
        assert_eq!(result.singles_b1_counts, 3);
    }

    #[test]
    fn each_record_pairs_at_most_once() {
        // One B1 flanked by two candidate B2s: earliest wins, one coincidence.
        let stream = vec![
            rec(Channel::B2, 100),
            rec(Channel::B1, 400),
            rec(Channel::B2, 600),
        ];
        let result = count_coincidences(stream, WINDOW_2NS, 1.0).unwrap();
        assert_eq!(result.raw_coincidences, 1);
    }

    #[test]
    fn unsorted_stream_rejected() {
        let stream = vec![rec(Channel::B1, 500), rec(Channel::B2, 400)];
        assert!(matches!(
            count_coincidences(stream, WINDOW_2NS, 1.0),
            Err(Error::UnsortedStream { .. })
        ));
    }

    /// O(n²) reference counter with the same greedy one-use rule.
    fn brute_force_count(records: &[TimeTagRecord], window_ps: u64) -> u64 {
        let mut used = vec![false; records.len()];
        let mut count = 0;
        for i in 0..records.len() {
            if used[i] {
                continue;
            }
            for j in 0..i {
                if used[j]
                    || records[j].channel == records[i].channel
                    || 2 * (records[i].timestamp_ps - records[j].timestamp_ps) > window_ps
                {
                    continue;
                }
                used[i] = true;
                used[j] = true;
                count += 1;
                break;
            }
        }
        count
    }

    #[test]
    fn greedy_counter_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(0xc01c);
        for case in 0..1000 {
            let n = rng.random_range(0..40);
            let mut t = 0u64;
            let records: Vec<TimeTagRecord> = (0..n)
                .map(|_| {
                    t += rng.random_range(0..1500);
                    rec(
                        if rng.random::<bool>() {
                            Channel::B1
                        } else {
                            Channel::B2
                        },
                        t,
                    )
                })
                .collect();
            let fast = count_coincidences(records.clone(), WINDOW_2NS, 1.0)
                .unwrap()
                .raw_coincidences;
            let slow = brute_force_count(&records, 2000);
            assert_eq!(fast, slow, "case {case}: {records:?}");
        }
    }

    #[test]
    fn accidental_rate_formula() {
        let rate = accidental_rate(1527.8, 1527.8, WINDOW_2NS);
        assert!((rate - 4.668e-3).abs() < 2e-6);
        assert!((cps_to_cph(rate) - 16.8).abs() < 0.02);
        // Consistent with the observed 54.6 − 37.7 correction.
        assert!((cps_to_cph(rate) - (54.6 - 37.7)).abs() < 0.2);

        assert_eq!(accidental_rate(0.0, 1000.0, WINDOW_2NS), 0.0);
        assert!((accidental_rate(100.0, 200.0, 1e-9) - 2e-5).abs() < 1e-20);
    }

    #[test]
    fn independent_streams_accumulate_textbook_accidentals() {
        // Two uncorrelated channels at 1527.8 counts/s, counted with a 2 ns
        // window over 1e4 s, averaged across 20 seeds.
        let rate = 1527.8;
        let duration = 1e4;
        let mut total_raw = 0u64;
        let seeds = 20;
        for seed in 0..seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut records: Vec<TimeTagRecord> = Vec::new();
            for channel in [Channel::B1, Channel::B2] {
                let mut t_s = 0.0f64;
                loop {
                    t_s += -(1.0 - rng.random::<f64>()).ln() / rate;
                    if t_s >= duration {
                        break;
                    }
                    records.push(rec(channel, (t_s * PS_PER_S) as u64));
                }
            }
            records.sort_by_key(|r| r.timestamp_ps);
            total_raw += count_coincidences(records, WINDOW_2NS, duration)
                .unwrap()
                .raw_coincidences;
        }
        let measured_cph = total_raw as f64 / (seeds as f64 * duration / 3600.0);
        assert!(
            (measured_cph - 16.8).abs() / 16.8 < 0.15,
            "measured {measured_cph} cph"
        );
    }

    #[test]
    fn corrected_rate_closes_to_zero_for_uncorrelated_input() {
        let rate = 5000.0;
        let duration = 200.0;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut records: Vec<TimeTagRecord> = Vec::new();
        for channel in [Channel::B1, Channel::B2] {
            let mut t_s = 0.0f64;
            loop {
                t_s += -(1.0 - rng.random::<f64>()).ln() / rate;
                if t_s >= duration {
                    break;
                }
                records.push(rec(channel, (t_s * PS_PER_S) as u64));
            }
        }
        records.sort_by_key(|r| r.timestamp_ps);
        let result = count_coincidences(records, WINDOW_2NS, duration).unwrap();
        assert!(result.raw_coincidences > 0);
        let corrected = result.rate_corrected_cph;
        assert!(
            corrected.value.abs() <= 3.0 * corrected.sigma,
            "corrected {} ± {}",
            corrected.value,
            corrected.sigma
        );
        assert!(!result.negative_beyond_noise);
    }

    #[test]
    fn visibility_of_measured_dip() {
        let v = visibility(Measured::new(37.7, 1.0), Measured::new(10.7, 2.5)).unwrap();
        assert!((v.value - 0.716).abs() < 5e-4);
        // Propagated error reproduces the quoted ±0.07.
        assert!((v.sigma - 0.07).abs() < 0.005);
    }

    #[test]
    fn visibility_of_flat_data_is_zero() {
        let v = visibility(Measured::new(40.0, 1.0), Measured::new(40.0, 1.0)).unwrap();
        assert_eq!(v.value, 0.0);
    }

    #[test]
    fn uncorrected_visibility_understates_dip() {
        let v = visibility(Measured::new(54.6, 1.1), Measured::new(30.3, 1.2)).unwrap();
        assert!((v.value - 0.445).abs() < 5e-4);
    }

    #[test]
    fn visibility_requires_positive_baseline() {
        assert!(visibility(Measured::new(0.0, 1.0), Measured::new(0.0, 1.0)).is_err());
    }

    #[test]
    fn threshold_classification() {
        let quantum = |v, s| threshold_verdict(Measured::new(v, s));
        assert_eq!(quantum(0.72, 0.07), Verdict::Quantum);
        assert_eq!(quantum(0.67, 0.05), Verdict::Quantum);
        assert_eq!(quantum(0.50, 0.01), Verdict::ClassicalCompatible);
        assert_eq!(quantum(0.45, 0.02), Verdict::ClassicalCompatible);
    }

    const REF_DELTA_OMEGA: f64 = 6.4751e13;

    fn synthetic_dip(
        n_max: f64,
        v: f64,
        delta_omega: f64,
        offset_s: f64,
        sigma: f64,
    ) -> Vec<(f64, Measured)> {
        (0..21)
            .map(|i| {
                let dt = (i as f64 - 10.0) * 0.03e-12;
                let value = dip_model(dt, &[n_max, v, delta_omega, offset_s]);
                (dt, Measured::new(value, sigma))
            })
            .collect()
    }

    #[test]
    fn noiseless_fit_recovers_generating_parameters() {
        let points = synthetic_dip(37.7, 0.72, 6.48e13, 0.0, 1.0);
        let fit = fit_dip(&points, REF_DELTA_OMEGA).unwrap();
        assert!((fit.n_max_cph.value - 37.7).abs() / 37.7 < 1e-6);
        assert!((fit.visibility.value - 0.72).abs() / 0.72 < 1e-6);
        assert!((fit.delta_omega.value - 6.48e13).abs() / 6.48e13 < 1e-6);
        assert!(fit.delay_offset_s.value.abs() < 1e-18);
        assert!(!fit.visibility_clamped);
        assert!(!fit.thin_baseline);
    }

    #[test]
    fn fit_tolerates_shifted_dip_and_seed_width_error() {
        let points = synthetic_dip(37.7, 0.72, 6.48e13, 0.02e-12, 1.0);
        // Seed the width 30% off.
        let fit = fit_dip(&points, 0.7 * REF_DELTA_OMEGA).unwrap();
        assert!((fit.delay_offset_s.value - 0.02e-12).abs() < 1e-16);
        assert!((fit.visibility.value - 0.72).abs() < 1e-6);
    }

    /// Approximately Poisson counts via the normal approximation, adequate
    /// for synthetic rates of tens of counts and above.
    fn noisy_counts(rng: &mut ChaCha8Rng, mean: f64) -> f64 {
        let z: f64 = (0..12).map(|_| rng.random::<f64>()).sum::<f64>() - 6.0;
        (mean + z * mean.sqrt()).max(0.0)
    }

    fn noisy_reference_scan(rng: &mut ChaCha8Rng, hours_per_point: f64) -> Vec<(f64, Measured)> {
        synthetic_dip(37.7, 0.72, REF_DELTA_OMEGA, 0.0, 0.0)
            .into_iter()
            .map(|(dt, m)| {
                let counts = noisy_counts(rng, m.value * hours_per_point);
                let rate = counts / hours_per_point;
                let sigma = counts.max(1.0).sqrt() / hours_per_point;
                (dt, Measured::new(rate, sigma))
            })
            .collect()
    }

    #[test]
    fn noisy_fit_recovers_coherence_time_and_visibility() {
        let mut rng = ChaCha8Rng::seed_from_u64(0xd1b);
        let points = noisy_reference_scan(&mut rng, 10.0);
        let fit = fit_dip(&points, REF_DELTA_OMEGA).unwrap();
        let tau_ps = fit.coherence_time_s() * PS_PER_S;
        assert!(
            (tau_ps - 0.097).abs() / 0.097 < 0.30,
            "coherence time {tau_ps} ps"
        );
        assert!(
            (fit.visibility.value - 0.72).abs() < 0.07,
            "visibility {}",
            fit.visibility.value
        );
    }

    #[test]
    fn flat_data_fits_zero_visibility() {
        let mut rng = ChaCha8Rng::seed_from_u64(0xf1a7);
        let points: Vec<(f64, Measured)> = (0..21)
            .map(|i| {
                let dt = (i as f64 - 10.0) * 0.03e-12;
                let counts = noisy_counts(&mut rng, 400.0);
                (dt, Measured::new(counts / 10.0, counts.sqrt() / 10.0))
            })
            .collect();
        let fit = fit_dip(&points, REF_DELTA_OMEGA).unwrap();
        assert!(
            fit.visibility.value <= 2.0 * fit.visibility.sigma + 1e-9,
            "V = {} ± {}",
            fit.visibility.value,
            fit.visibility.sigma
        );
    }

    #[test]
    fn fit_is_unbiased_over_many_scans() {
        let mut rng = ChaCha8Rng::seed_from_u64(0xbead);
        let mut v_sum = 0.0;
        let mut sigma_sum = 0.0;
        let n = 100;
        for _ in 0..n {
            let points = noisy_reference_scan(&mut rng, 12.0);
            let fit = fit_dip(&points, REF_DELTA_OMEGA).unwrap();
            v_sum += fit.visibility.value;
            sigma_sum += fit.visibility.sigma;
        }
        let mean_v = v_sum / n as f64;
        let mean_sigma = sigma_sum / n as f64;
        assert!(
            (mean_v - 0.72).abs() < mean_sigma,
            "mean V {mean_v} vs 0.72 ± {mean_sigma}"
        );
    }

    #[test]
    fn visibility_error_matches_resampled_spread() {
        // Parametric resampling of the max/min counts; the propagated sigma
        // should track the empirical scatter.
        let mut rng = ChaCha8Rng::seed_from_u64(0xb007);
        let hours = 12.0;
        let (max_rate, min_rate) = (37.7, 10.7);
        let formula_sigma = visibility(
            Measured::new(max_rate, (max_rate * hours).sqrt() / hours),
            Measured::new(min_rate, (min_rate * hours).sqrt() / hours),
        )
        .unwrap()
        .sigma;

        let resamples = 200;
        let values: Vec<f64> = (0..resamples)
            .map(|_| {
                let max_counts = noisy_counts(&mut rng, max_rate * hours);
                let min_counts = noisy_counts(&mut rng, min_rate * hours);
                1.0 - (min_counts / hours) / (max_counts / hours)
            })
            .collect();
        let mean = values.iter().sum::<f64>() / resamples as f64;
        let var =
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (resamples - 1) as f64;
        let empirical = var.sqrt();
        assert!(
            (formula_sigma - empirical).abs() / empirical < 0.20,
            "formula {formula_sigma}, empirical {empirical}"
        );
    }

    #[test]
    fn too_few_fit_points_rejected() {
        let points = synthetic_dip(37.7, 0.72, 6.48e13, 0.0, 1.0);
        assert!(matches!(
            fit_dip(&points[..4], REF_DELTA_OMEGA),
            Err(Error::InsufficientPoints { .. })
        ));
    }

    #[test]
    fn classical_oracle_respects_half_bound() {
        let oracle =
            classical_visibility_oracle(BeamsplitterParams::balanced(), 1_000_000, 7).unwrap();
        assert!(
            (oracle.visibility - 0.5).abs() < 0.01,
            "V = {}",
            oracle.visibility
        );
        assert!(oracle.visibility <= 0.5 + 3.0 * oracle.std_error);
    }

    #[test]
    fn classical_oracle_mirror_has_no_interference() {
        let bs = BeamsplitterParams::new(1.0, 0.0).unwrap();
        let oracle = classical_visibility_oracle(bs, 100_000, 3).unwrap();
        assert!(oracle.visibility.abs() < 1e-12);
    }

    #[test]
    fn classical_oracle_unbalanced_stays_below_half() {
        let bs = BeamsplitterParams::new(0.3, 0.7).unwrap();
        let oracle = classical_visibility_oracle(bs, 200_000, 5).unwrap();
        // Analytic value 2RT = 0.42.
        assert!((oracle.visibility - 0.42).abs() < 0.01);
        assert!(oracle.visibility < 0.5);
    }

    #[test]
    fn dip_csv_round_trip() {
        let points = vec![
            DipPoint {
                delay_s: -3e-13,
                raw_cph: 54.2,
                accidental_cph: 16.8,
                corrected_cph: Measured::new(37.4, 6.1),
            },
            DipPoint {
                delay_s: 0.0,
                raw_cph: 27.9,
                accidental_cph: 16.8,
                corrected_cph: Measured::new(11.1, 4.4),
            },
        ];
        let mut buf = Vec::new();
        write_dip_csv(&mut buf, &points).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("delay_ps,rate_cph,sigma_cph,raw_cph,accidental_cph\n"));
        let parsed = read_dip_csv(&text).unwrap();
        assert_eq!(parsed.len(), 2);
        assert!((parsed[0].delay_s - -3e-13).abs() < 1e-19);
        assert!((parsed[1].corrected_cph.value - 11.1).abs() < 1e-9);

        assert!(read_dip_csv("nope\n1,2,3,4,5\n").is_err());
    }

    #[test]
    fn fit_report_schema() {
        let fit = DipFit {
            n_max_cph: Measured::new(37.7, 1.0),
            visibility: Measured::new(0.72, 0.07),
            delta_omega: Measured::new(6.48e13, 2e12),
            delay_offset_s: Measured::new(0.0, 1e-15),
            chi2_reduced: 1.02,
            iterations: 12,
            visibility_clamped: false,
            thin_baseline: false,
        };
        let report = FitReport::from_fit(&fit);
        assert_eq!(report.verdict, Verdict::Quantum);
        let mut buf = Vec::new();
        write_fit_json(&mut buf, &report).unwrap();
        let text = String::from_utf8(buf).unwrap();
        for key in [
            "n_max",
            "visibility",
            "sigma_visibility",
            "delta_omega",
            "coherence_time_ps",
            "delay_offset_ps",
            "chi2_reduced",
            "verdict",
        ] {
            assert!(text.contains(&format!("\"{key}\"")), "missing {key}");
        }
        assert!(text.contains("\"quantum\""));
        let parsed: FitReport = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed, report);
    }
}
