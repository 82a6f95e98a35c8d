//! Monte Carlo generation of time-tagged detection streams.
//!
//! A configured run is: pair source (Poisson at `pair_rate`) → input-arm loss
//! → splitter with delay-dependent interference → output-arm loss →
//! detectors. Both photons of a pair carry the same emission timestamp; the
//! sub-picosecond optical delay only changes how well the wavepackets
//! interfere, it is far below any realistic tag resolution.
//!
//! Per pair, the detected record pattern `(k1, k2)` (counts on B1/B2) has an
//! exact closed distribution, computed from the Fock model in
//! [`detection_model`]. The generator samples emission times of *productive*
//! pairs only, those that yield at least one record, at the thinned rate
//! `pair_rate · P(k1 + k2 ≥ 1)`, then draws the pattern conditioned on that.
//! Thinning a Poisson process by independent per-event marks is exact, so the
//! emitted streams are distributed identically to per-pair simulation while
//! staying tractable at path efficiencies of 1e-5. Dark counts are
//! independent Poisson processes per channel, merged in time order.
//!
//! Streams are deterministic in the seed. Scans derive one seed per delay
//! with [`mix_seed`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{apply_loss, hom_output_state, BeamsplitterParams, LossParams, OverlapParam};
use crate::units::PS_PER_S;
use crate::wavepacket::{overlap, DelayScan, SpectralProfile};

/// Detector identity of a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Channel {
    B1 = 0,
    B2 = 1,
}

impl Channel {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_u8(value: u8) -> Option<Self> {
        match value {
            0 => Some(Channel::B1),
            1 => Some(Channel::B2),
            _ => None,
        }
    }
}

/// One detection event: channel plus timestamp in integer picoseconds since
/// stream start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeTagRecord {
    pub channel: Channel,
    pub timestamp_ps: u64,
}

/// Detector behaviour. Defaults: 1 ps ticks, no dead time, no dark counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    /// Tick size of the emitted timestamps, seconds.
    pub timing_resolution_s: f64,
    /// Minimum separation between accepted records on one channel, seconds.
    pub dead_time_s: f64,
    /// Dark-count rate per channel, counts/s.
    pub dark_rate_cps: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self {
            timing_resolution_s: 1e-12,
            dead_time_s: 0.0,
            dark_rate_cps: 0.0,
        }
    }
}

impl DetectorModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.timing_resolution_s > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "timing resolution {} s must be positive",
                self.timing_resolution_s
            )));
        }
        if self.dead_time_s < 0.0 || self.dark_rate_cps < 0.0 {
            return Err(Error::InvalidConfig(
                "dead time and dark rate must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Full configuration of one simulated acquisition at a fixed delay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceConfig {
    /// Generated pairs per second at the source.
    pub pair_rate_cps: f64,
    /// Acquisition length, seconds.
    pub duration_s: f64,
    pub seed: u64,
    /// Relative delay between the two wavepackets, seconds.
    pub delay_s: f64,
    /// Delay-independent mode overlap in [0, 1]: spatial/polarization
    /// mismatch that caps the interference contrast. Multiplies the spectral
    /// overlap.
    pub mode_overlap: f64,
    pub profile: SpectralProfile,
    pub bs: BeamsplitterParams,
    pub loss: LossParams,
    pub detector: DetectorModel,
}

impl SourceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pair_rate_cps >= 0.0) || !self.pair_rate_cps.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "pair rate {} must be non-negative",
                self.pair_rate_cps
            )));
        }
        if !(self.duration_s > 0.0) || !self.duration_s.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "duration {} s must be positive",
                self.duration_s
            )));
        }
        if !self.delay_s.is_finite() {
            return Err(Error::InvalidConfig("delay must be finite".into()));
        }
        if !(0.0..=1.0).contains(&self.mode_overlap) {
            return Err(Error::InvalidOverlap(self.mode_overlap));
        }
        self.profile.validate()?;
        self.bs.validate()?;
        self.loss.validate()?;
        self.detector.validate()?;
        Ok(())
    }

    /// Effective wavepacket overlap at this config's delay.
    pub fn effective_overlap(&self) -> Result<OverlapParam> {
        let spectral = overlap(&self.profile, self.delay_s)?;
        OverlapParam::new(self.mode_overlap * spectral.value())
    }
}

/// Per-pair probabilities of each detected record pattern `(k1, k2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionModel {
    pub p_vacuum: f64,
    pub p_single_b1: f64,
    pub p_single_b2: f64,
    /// Both surviving photons on B1 (bunched).
    pub p_double_b1: f64,
    /// Both surviving photons on B2 (bunched).
    pub p_double_b2: f64,
    /// One record on each channel: a true coincidence.
    pub p_coincident: f64,
}

impl DetectionModel {
    /// Probability that a pair produces at least one record.
    pub fn p_productive(&self) -> f64 {
        1.0 - self.p_vacuum
    }

    /// Expected records per pair on B1 / B2.
    pub fn records_per_pair(&self) -> (f64, f64) {
        (
            self.p_single_b1 + 2.0 * self.p_double_b1 + self.p_coincident,
            self.p_single_b2 + 2.0 * self.p_double_b2 + self.p_coincident,
        )
    }

    /// Expected singles rates (B1, B2) in counts/s, before dead time, dark
    /// counts excluded.
    pub fn singles_rates_cps(&self, pair_rate_cps: f64) -> (f64, f64) {
        let (r1, r2) = self.records_per_pair();
        (pair_rate_cps * r1, pair_rate_cps * r2)
    }

    /// Rate of same-pair coincidences in counts/s.
    pub fn true_coincidence_cps(&self, pair_rate_cps: f64) -> f64 {
        pair_rate_cps * self.p_coincident
    }
}

/// Exact record-pattern distribution for one generated pair.
///
/// Composition: input-arm survival decides which photons reach the splitter;
/// a lone survivor scatters with probabilities R/T, a surviving pair
/// interferes per [`hom_output_state`] at the config's effective overlap;
/// output-arm survival is binomial per mode (via [`apply_loss`]).
pub fn detection_model(config: &SourceConfig) -> Result<DetectionModel> {
    config.validate()?;
    let mu = config.effective_overlap()?;
    let (r, t) = (config.bs.reflectance, config.bs.transmittance);
    let (a, b) = (config.loss.eta_in_a, config.loss.eta_in_b);

    let interfered = hom_output_state(config.bs, mu)?;

    // Mixture over input-survival branches, expressed as occupation
    // probabilities of the splitter output (phases are irrelevant from here
    // on; only photon counting follows).
    let mut pre_detection = crate::fock::TwoModeFockState::new(2)?;
    let both = a * b;
    let weights = [
        ((2usize, 0usize), both * interfered.probability(2, 0)),
        ((0, 2), both * interfered.probability(0, 2)),
        ((1, 1), both * interfered.probability(1, 1)),
        ((1, 0), a * (1.0 - b) * r + (1.0 - a) * b * t),
        ((0, 1), a * (1.0 - b) * t + (1.0 - a) * b * r),
        ((0, 0), (1.0 - a) * (1.0 - b)),
    ];
    for ((n1, n2), p) in weights {
        if p > 0.0 {
            pre_detection.set(n1, n2, num_complex::Complex64::new(p.sqrt(), 0.0))?;
        }
    }

    let detected = apply_loss(&pre_detection, config.loss)?;
    Ok(DetectionModel {
        p_vacuum: detected.probability(0, 0),
        p_single_b1: detected.probability(1, 0),
        p_single_b2: detected.probability(0, 1),
        p_double_b1: detected.probability(2, 0),
        p_double_b2: detected.probability(0, 2),
        p_coincident: detected.probability(1, 1),
    })
}

/// SplitMix64-style mixing of a base seed with a stream index; used to derive
/// independent, reproducible per-delay seeds.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add((index.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The config a scan uses for delay number `index`: same physics, that
/// delay, and seed `mix_seed(base.seed, index)`.
pub fn per_delay_config(base: &SourceConfig, delay_s: f64, index: u64) -> SourceConfig {
    SourceConfig {
        delay_s,
        seed: mix_seed(base.seed, index),
        ..base.clone()
    }
}

#[derive(Debug, Clone, Copy)]
enum Pattern {
    SingleB1,
    SingleB2,
    DoubleB1,
    DoubleB2,
    Coincident,
}

/// Lazy, ordered stream of [`TimeTagRecord`]s for one configuration.
///
/// Constant memory; iterate to drive the simulation. Records come out in
/// non-decreasing timestamp order, quantized to the detector tick.
#[derive(Debug, Clone)]
pub struct TimeTagStream {
    rng: ChaCha8Rng,
    duration_ps: u64,
    tick_ps: u64,
    dead_ps: u64,
    productive_rate_cps: f64,
    dark_rate_cps: f64,
    /// Cumulative probabilities of the productive patterns.
    pattern_cdf: [(f64, Pattern); 5],
    next_pair_ps: u64,
    next_dark_ps: [u64; 2],
    pending: Option<TimeTagRecord>,
    last_accepted_ps: [Option<u64>; 2],
}

impl TimeTagStream {
    fn new(config: &SourceConfig) -> Result<Self> {
        config.validate()?;
        let model = detection_model(config)?;
        let productive_rate_cps = config.pair_rate_cps * model.p_productive();

        let p = model.p_productive();
        let mut cdf = [(f64::INFINITY, Pattern::SingleB1); 5];
        if p > 0.0 {
            let mut acc = 0.0;
            for (slot, (prob, pattern)) in cdf.iter_mut().zip([
                (model.p_single_b1, Pattern::SingleB1),
                (model.p_single_b2, Pattern::SingleB2),
                (model.p_coincident, Pattern::Coincident),
                (model.p_double_b1, Pattern::DoubleB1),
                (model.p_double_b2, Pattern::DoubleB2),
            ]) {
                acc += prob / p;
                *slot = (acc, pattern);
            }
            cdf[4].0 = f64::INFINITY; // guard against rounding in the tail
        }

        let tick_ps = (config.detector.timing_resolution_s * PS_PER_S)
            .round()
            .max(1.0) as u64;
        let duration_ps = (config.duration_s * PS_PER_S).round() as u64;
        let dead_ps = (config.detector.dead_time_s * PS_PER_S).round() as u64;

        let mut stream = Self {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            duration_ps,
            tick_ps,
            dead_ps,
            productive_rate_cps,
            dark_rate_cps: config.detector.dark_rate_cps,
            pattern_cdf: cdf,
            next_pair_ps: u64::MAX,
            next_dark_ps: [u64::MAX; 2],
            pending: None,
            last_accepted_ps: [None; 2],
        };
        stream.next_pair_ps = stream.schedule(0, stream.productive_rate_cps);
        stream.next_dark_ps[0] = stream.schedule(0, stream.dark_rate_cps);
        stream.next_dark_ps[1] = stream.schedule(0, stream.dark_rate_cps);
        Ok(stream)
    }

    /// Next arrival of a rate-`rate_cps` Poisson clock after `from_ps`,
    /// quantized to the detector tick. `u64::MAX` means never.
    fn schedule(&mut self, from_ps: u64, rate_cps: f64) -> u64 {
        if rate_cps <= 0.0 {
            return u64::MAX;
        }
        let u: f64 = self.rng.random();
        let gap_s = -(1.0 - u).ln() / rate_cps;
        let gap_ticks = (gap_s * PS_PER_S / self.tick_ps as f64).round().max(0.0);
        if gap_ticks >= (u64::MAX / self.tick_ps) as f64 {
            return u64::MAX;
        }
        from_ps.saturating_add(gap_ticks as u64 * self.tick_ps)
    }

    fn sample_pattern(&mut self) -> Pattern {
        let u: f64 = self.rng.random();
        for &(cum, pattern) in &self.pattern_cdf {
            if u < cum {
                return pattern;
            }
        }
        self.pattern_cdf[4].1
    }

    /// Dead-time filter: accept the record unless the channel is still dead.
    fn accept(&mut self, record: TimeTagRecord) -> Option<TimeTagRecord> {
        let idx = record.channel.index();
        if self.dead_ps > 0 {
            if let Some(last) = self.last_accepted_ps[idx] {
                if record.timestamp_ps < last.saturating_add(self.dead_ps) {
                    return None;
                }
            }
        }
        self.last_accepted_ps[idx] = Some(record.timestamp_ps);
        Some(record)
    }

    fn record(channel: Channel, timestamp_ps: u64) -> TimeTagRecord {
        TimeTagRecord {
            channel,
            timestamp_ps,
        }
    }
}

impl Iterator for TimeTagStream {
    type Item = TimeTagRecord;

    fn next(&mut self) -> Option<TimeTagRecord> {
        loop {
            if let Some(record) = self.pending.take() {
                match self.accept(record) {
                    Some(record) => return Some(record),
                    None => continue,
                }
            }

            let t_pair = self.next_pair_ps;
            let t_d1 = self.next_dark_ps[0];
            let t_d2 = self.next_dark_ps[1];
            let t = t_pair.min(t_d1).min(t_d2);
            if t >= self.duration_ps {
                return None;
            }

            let candidate = if t == t_pair {
                self.next_pair_ps = self.schedule(t, self.productive_rate_cps);
                match self.sample_pattern() {
                    Pattern::SingleB1 => Self::record(Channel::B1, t),
                    Pattern::SingleB2 => Self::record(Channel::B2, t),
                    Pattern::DoubleB1 => {
                        self.pending = Some(Self::record(Channel::B1, t));
                        Self::record(Channel::B1, t)
                    }
                    Pattern::DoubleB2 => {
                        self.pending = Some(Self::record(Channel::B2, t));
                        Self::record(Channel::B2, t)
                    }
                    Pattern::Coincident => {
                        self.pending = Some(Self::record(Channel::B2, t));
                        Self::record(Channel::B1, t)
                    }
                }
            } else if t == t_d1 {
                self.next_dark_ps[0] = self.schedule(t, self.dark_rate_cps);
                Self::record(Channel::B1, t)
            } else {
                self.next_dark_ps[1] = self.schedule(t, self.dark_rate_cps);
                Self::record(Channel::B2, t)
            };

            match self.accept(candidate) {
                Some(record) => return Some(record),
                None => continue,
            }
        }
    }
}

/// Stream of detection records for one configuration. Deterministic in the
/// seed: identical configs give bit-identical streams.
pub fn simulate_stream(config: &SourceConfig) -> Result<TimeTagStream> {
    TimeTagStream::new(config)
}

/// One independent stream per scan delay, seeds derived per delay index.
/// Entry `i` is exactly `simulate_stream(per_delay_config(config, delay_i, i))`.
pub fn simulate_scan(config: &SourceConfig, scan: &DelayScan) -> Result<Vec<(f64, TimeTagStream)>> {
    config.validate()?;
    scan.delays()
        .iter()
        .enumerate()
        .map(|(i, &delay_s)| {
            let cfg = per_delay_config(config, delay_s, i as u64);
            Ok((delay_s, simulate_stream(&cfg)?))
        })
        .collect()
}

/// Pair rate and symmetric arm efficiencies that hit target singles and
/// same-pair coincidence rates.
///
/// Solves `r_singles = pair_rate·η_in·η_out` and
/// `r_coinc = pair_rate·(η_in·η_out)²·(R² + T²)` for the far-from-dip
/// (`mu = 0`) regime, splitting the path efficiency evenly between input and
/// output. Returns `(pair_rate_cps, loss)`.
pub fn calibrate_symmetric_source(
    singles_cps: f64,
    true_coincidence_cps: f64,
    bs: BeamsplitterParams,
) -> Result<(f64, LossParams)> {
    bs.validate()?;
    if !(singles_cps > 0.0) || !(true_coincidence_cps > 0.0) {
        return Err(Error::InvalidConfig(
            "calibration targets must be positive".into(),
        ));
    }
    let r2t2 = bs.reflectance * bs.reflectance + bs.transmittance * bs.transmittance;
    let eta_path = true_coincidence_cps / (singles_cps * r2t2);
    if eta_path > 1.0 {
        return Err(Error::InvalidConfig(format!(
            "targets imply path efficiency {eta_path} > 1"
        )));
    }
    let pair_rate_cps = singles_cps / eta_path;
    let eta_stage = eta_path.sqrt();
    Ok((pair_rate_cps, LossParams::symmetric(eta_stage, eta_stage)?))
}
