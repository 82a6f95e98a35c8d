//! Two-mode Fock-space model of a lossy scattering beamsplitter.
//!
//! The splitter maps input creation operators onto the output modes B1/B2 as
//!
//! ```text
//! a_A† -> i√R b1† + √T b2†
//! a_B† ->  √T b1† + i√R b2†
//! ```
//!
//! with the `i` phase on reflection. For a `|1⟩|1⟩` input this gives the
//! two-excitation output amplitudes `i√(2RT)` on `|2,0⟩` and `|0,2⟩` and
//! `(T − R)` on `|1,1⟩`; at R = T = 1/2 the coincidence term cancels and both
//! photons bunch. Observable probabilities do not depend on the phase
//! convention.
//!
//! Loss is modeled as independent per-photon survival (amplitude damping),
//! applied to the output arms by [`apply_loss`]. Bunching survives any loss:
//! damping never turns a `|2,0⟩`/`|0,2⟩` component into a coincidence, it only
//! reduces the rate.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest total photon number the expansion routines support.
///
/// Factorials up to 16! stay exactly representable in f64.
pub const MAX_PHOTONS: usize = 16;

const NORM_TOL: f64 = 1e-12;

/// Reflectance/transmittance of the splitter, relative coefficients with
/// R + T = 1. Radiative scattering loss at the splitting element is folded
/// into the output efficiencies, not into these.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamsplitterParams {
    pub reflectance: f64,
    pub transmittance: f64,
}

impl BeamsplitterParams {
    pub fn new(reflectance: f64, transmittance: f64) -> Result<Self> {
        let ok = (0.0..=1.0).contains(&reflectance)
            && (0.0..=1.0).contains(&transmittance)
            && (reflectance + transmittance - 1.0).abs() < NORM_TOL;
        if !ok {
            return Err(Error::InvalidBeamsplitter {
                r: reflectance,
                t: transmittance,
            });
        }
        Ok(Self {
            reflectance,
            transmittance,
        })
    }

    /// R = T = 1/2.
    pub fn balanced() -> Self {
        Self {
            reflectance: 0.5,
            transmittance: 0.5,
        }
    }

    /// Build from a measured transmittance, with R = 1 − T.
    pub fn from_transmittance(transmittance: f64) -> Result<Self> {
        Self::new(1.0 - transmittance, transmittance)
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.reflectance, self.transmittance).map(|_| ())
    }
}

/// Transmission probabilities of the four arms around the splitter.
///
/// `eta_in_*` act on the input arms before interference, `eta_out_*` on the
/// output arms after it. Each is the full path efficiency of its arm
/// (coupling, propagation and, for the outputs, detection).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParams {
    pub eta_in_a: f64,
    pub eta_in_b: f64,
    pub eta_out_1: f64,
    pub eta_out_2: f64,
}

impl LossParams {
    pub fn new(eta_in_a: f64, eta_in_b: f64, eta_out_1: f64, eta_out_2: f64) -> Result<Self> {
        let params = Self {
            eta_in_a,
            eta_in_b,
            eta_out_1,
            eta_out_2,
        };
        params.validate()?;
        Ok(params)
    }

    /// No loss anywhere.
    pub fn unit() -> Self {
        Self {
            eta_in_a: 1.0,
            eta_in_b: 1.0,
            eta_out_1: 1.0,
            eta_out_2: 1.0,
        }
    }

    /// Same input efficiency on both arms, same output efficiency on both arms.
    pub fn symmetric(eta_in: f64, eta_out: f64) -> Result<Self> {
        Self::new(eta_in, eta_in, eta_out, eta_out)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("eta_in_a", self.eta_in_a),
            ("eta_in_b", self.eta_in_b),
            ("eta_out_1", self.eta_out_1),
            ("eta_out_2", self.eta_out_2),
        ] {
            if !(0.0..=1.0).contains(&value) || !value.is_finite() {
                return Err(Error::InvalidEfficiency { name, value });
            }
        }
        Ok(())
    }

    /// Product of all four arm efficiencies: the per-pair survival factor in
    /// the coincidence probability.
    pub fn pair_efficiency(&self) -> f64 {
        self.eta_in_a * self.eta_in_b * self.eta_out_1 * self.eta_out_2
    }
}

/// Mode-overlap amplitude between the two single-excitation wavepackets.
///
/// Encapsulates all distinguishability: 1 means perfectly indistinguishable,
/// 0 fully distinguishable. Its delay dependence is supplied by
/// [`crate::wavepacket::overlap`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapParam(pub f64);

impl OverlapParam {
    pub fn new(mu: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&mu) || !mu.is_finite() {
            return Err(Error::InvalidOverlap(mu));
        }
        Ok(Self(mu))
    }

    /// Perfect indistinguishability.
    pub fn full() -> Self {
        Self(1.0)
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

/// State of the two output modes, as complex amplitudes over photon-number
/// occupations `(n1, n2)`.
///
/// Lossless evolutions keep this a pure state with unit norm. [`apply_loss`]
/// decoheres it: the returned amplitudes are square roots of the outcome
/// probabilities (phases between occupations are dropped there, they are not
/// observable in photon counting).
#[derive(Debug, Clone, PartialEq)]
pub struct TwoModeFockState {
    amplitudes: BTreeMap<(usize, usize), Complex64>,
    max_total: usize,
}

impl TwoModeFockState {
    pub fn new(max_total: usize) -> Result<Self> {
        if max_total > MAX_PHOTONS {
            return Err(Error::PhotonNumberOverflow {
                requested: max_total,
                max: MAX_PHOTONS,
            });
        }
        Ok(Self {
            amplitudes: BTreeMap::new(),
            max_total,
        })
    }

    /// Vacuum in both modes.
    pub fn vacuum(max_total: usize) -> Result<Self> {
        let mut state = Self::new(max_total)?;
        state.set(0, 0, Complex64::new(1.0, 0.0))?;
        Ok(state)
    }

    pub fn max_total(&self) -> usize {
        self.max_total
    }

    /// Set the amplitude of occupation `(n1, n2)`; zero amplitudes are pruned.
    pub fn set(&mut self, n1: usize, n2: usize, amplitude: Complex64) -> Result<()> {
        if n1 + n2 > self.max_total {
            return Err(Error::PhotonNumberOverflow {
                requested: n1 + n2,
                max: self.max_total,
            });
        }
        if amplitude.norm_sqr() == 0.0 {
            self.amplitudes.remove(&(n1, n2));
        } else {
            self.amplitudes.insert((n1, n2), amplitude);
        }
        Ok(())
    }

    pub fn amplitude(&self, n1: usize, n2: usize) -> Complex64 {
        self.amplitudes
            .get(&(n1, n2))
            .copied()
            .unwrap_or_else(|| Complex64::new(0.0, 0.0))
    }

    /// |amplitude|² of occupation `(n1, n2)`.
    pub fn probability(&self, n1: usize, n2: usize) -> f64 {
        self.amplitude(n1, n2).norm_sqr()
    }

    /// Sum of |amplitude|² over all occupations.
    pub fn total_probability(&self) -> f64 {
        self.amplitudes.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.total_probability() - 1.0).abs() <= tol
    }

    /// Occupations with non-zero amplitude, in deterministic order.
    pub fn occupations(&self) -> impl Iterator<Item = ((usize, usize), Complex64)> + '_ {
        self.amplitudes.iter().map(|(&occ, &amp)| (occ, amp))
    }

    /// Probabilities of the occupations with exactly `n` photons in total,
    /// renormalized within that sector. Empty if the sector has no weight.
    pub fn sector_probabilities(&self, n: usize) -> Vec<((usize, usize), f64)> {
        let sector: Vec<_> = self
            .amplitudes
            .iter()
            .filter(|((n1, n2), _)| n1 + n2 == n)
            .map(|(&occ, amp)| (occ, amp.norm_sqr()))
            .collect();
        let total: f64 = sector.iter().map(|(_, p)| p).sum();
        if total <= 0.0 {
            return Vec::new();
        }
        sector.into_iter().map(|(occ, p)| (occ, p / total)).collect()
    }
}

/// Output state of the splitter for one photon in each input, with overlap
/// `mu` between their wavepackets. Lossless; apply [`apply_loss`] separately.
///
/// Outcome probabilities are
/// `P(2,0) = P(0,2) = RT(1 + mu²)` and `P(1,1) = R² + T² − 2RT·mu²`.
/// For `mu = 1` the returned amplitudes are the exact pure-state ones; for
/// partial overlap they carry the correct magnitudes (the state then lives in
/// a larger mode space and only the occupation probabilities are meaningful).
pub fn hom_output_state(bs: BeamsplitterParams, mu: OverlapParam) -> Result<TwoModeFockState> {
    bs.validate()?;
    let mu = OverlapParam::new(mu.0)?.0;
    let (r, t) = (bs.reflectance, bs.transmittance);

    let p_bunch = r * t * (1.0 + mu * mu);
    let p_coinc = r * r + t * t - 2.0 * r * t * mu * mu;

    let mut state = TwoModeFockState::new(2)?;
    let bunch_amp = Complex64::new(0.0, p_bunch.sqrt());
    state.set(2, 0, bunch_amp)?;
    state.set(0, 2, bunch_amp)?;
    // Sign matches the exact (T − R) amplitude at mu = 1.
    let coinc_sign = if t >= r { 1.0 } else { -1.0 };
    state.set(1, 1, Complex64::new(coinc_sign * p_coinc.max(0.0).sqrt(), 0.0))?;
    Ok(state)
}

/// Independent per-photon survival on the two output arms.
///
/// Each photon in mode 1 survives with probability `eta_out_1`, each photon
/// in mode 2 with `eta_out_2` (input-arm efficiencies act upstream of the
/// splitter and are ignored here). The output is the full distribution over
/// survival patterns, including the vacuum and single-excitation sectors, and
/// stays normalized. Conditioned on both photons of a two-photon sector
/// surviving under equal arm efficiencies, the occupation probabilities are
/// unchanged.
pub fn apply_loss(state: &TwoModeFockState, loss: LossParams) -> Result<TwoModeFockState> {
    loss.validate()?;
    let (eta1, eta2) = (loss.eta_out_1, loss.eta_out_2);
    if eta1 == 1.0 && eta2 == 1.0 {
        return Ok(state.clone());
    }

    let mut probs: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for ((n1, n2), amp) in state.occupations() {
        let weight = amp.norm_sqr();
        for k1 in 0..=n1 {
            let b1 = binomial_prob(n1, k1, eta1);
            if b1 == 0.0 {
                continue;
            }
            for k2 in 0..=n2 {
                let b2 = binomial_prob(n2, k2, eta2);
                if b2 == 0.0 {
                    continue;
                }
                *probs.entry((k1, k2)).or_insert(0.0) += weight * b1 * b2;
            }
        }
    }

    let mut out = TwoModeFockState::new(state.max_total())?;
    for ((k1, k2), p) in probs {
        out.set(k1, k2, Complex64::new(p.sqrt(), 0.0))?;
    }
    Ok(out)
}

/// Exact splitter action on the Fock input `|n_A⟩|n_B⟩`, by direct expansion
/// of `(i√R b1† + √T b2†)^{n_A} (√T b1† + i√R b2†)^{n_B} |0⟩` with bosonic
/// normalization factors.
///
/// Serves as the brute-force oracle for [`hom_output_state`]; the two must
/// agree for `|1⟩|1⟩` inputs at `mu = 1`.
pub fn fock_unitary_oracle(
    n_a: usize,
    n_b: usize,
    bs: BeamsplitterParams,
) -> Result<TwoModeFockState> {
    bs.validate()?;
    let total = n_a + n_b;
    if total > MAX_PHOTONS {
        return Err(Error::PhotonNumberOverflow {
            requested: total,
            max: MAX_PHOTONS,
        });
    }

    let sqrt_r = bs.reflectance.sqrt();
    let sqrt_t = bs.transmittance.sqrt();
    let i_sqrt_r = Complex64::new(0.0, sqrt_r);

    let mut state = TwoModeFockState::new(total.max(2))?;
    let input_norm = (factorial(n_a) * factorial(n_b)).sqrt();

    let mut amplitudes: BTreeMap<(usize, usize), Complex64> = BTreeMap::new();
    for j in 0..=n_a {
        for k in 0..=n_b {
            let m = j + k; // photons ending in mode 1
            let p = total - m;
            let coeff = binomial(n_a, j)
                * binomial(n_b, k)
                * i_sqrt_r.powu((j + n_b - k) as u32)
                * Complex64::new(sqrt_t.powi((n_a - j + k) as i32), 0.0);
            // b1†^m b2†^p |0⟩ = √(m! p!) |m, p⟩
            let bosonic = (factorial(m) * factorial(p)).sqrt();
            *amplitudes.entry((m, p)).or_insert(Complex64::new(0.0, 0.0)) +=
                coeff * bosonic / input_norm;
        }
    }

    for ((m, p), amp) in amplitudes {
        state.set(m, p, amp)?;
    }
    Ok(state)
}

fn factorial(n: usize) -> f64 {
    debug_assert!(n <= MAX_PHOTONS);
    (1..=n).map(|k| k as f64).product()
}

fn binomial(n: usize, k: usize) -> Complex64 {
    let mut value = 1u128;
    for i in 0..k {
        value = value * (n - i) as u128 / (i + 1) as u128;
    }
    Complex64::new(value as f64, 0.0)
}

/// Binomial(n, k) success probability with per-trial probability `eta`.
fn binomial_prob(n: usize, k: usize, eta: f64) -> f64 {
    let mut choose = 1.0;
    for i in 0..k {
        choose = choose * (n - i) as f64 / (i + 1) as f64;
    }
    choose * eta.powi(k as i32) * (1.0 - eta).powi((n - k) as i32)
}
