#![allow(dead_code)]

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use num_complex::Complex64;

use homsim::analysis::{CoincidenceCounter, CoincidenceResult};
use homsim::event::{per_delay_config, simulate_stream, SourceConfig};
use homsim::wavepacket::{DelayScan, SpectralProfile};

/// Coincidence probability by brute-force double integral over the two-photon
/// spectral amplitude, midpoint rule on an n×n frequency grid.
///
/// For photons with densities `|φ(ω)|²` entering arms A and B (B delayed by
/// `delta_t`), the coincidence amplitude at detected frequencies `(ω1, ω2)`
/// is `φ(ω1)φ(ω2)·[T·e^{iω1Δt} − R·e^{iω2Δt}]`; integrating its modulus
/// squared gives the coincidence probability without ever forming the sinc²
/// closed form.
pub fn coincidence_by_quadrature(
    profile: &SpectralProfile,
    delta_t: f64,
    reflectance: f64,
    n: usize,
) -> f64 {
    let transmittance = 1.0 - reflectance;
    let center = profile.center_omega();
    let width = profile.delta_omega();
    let lo = center - width / 2.0;
    let h = width / n as f64;

    // Tabulated density and per-frequency delay phases.
    let omegas: Vec<f64> = (0..n).map(|i| lo + (i as f64 + 0.5) * h).collect();
    let density: Vec<f64> = omegas.iter().map(|&w| profile.spectral_density(w)).collect();
    let phases: Vec<Complex64> = omegas
        .iter()
        .map(|&w| Complex64::from_polar(1.0, w * delta_t))
        .collect();

    let mut total = 0.0;
    for i in 0..n {
        if density[i] == 0.0 {
            continue;
        }
        let through = transmittance * phases[i];
        for j in 0..n {
            if density[j] == 0.0 {
                continue;
            }
            let amp = through - reflectance * phases[j];
            total += density[i] * density[j] * amp.norm_sqr();
        }
    }
    total * h * h
}

pub struct ScanPoint {
    pub delay_s: f64,
    pub result: CoincidenceResult,
}

/// Simulate and count every delay of a scan, fanning the per-delay jobs over
/// `jobs` worker threads. Results come back in scan order.
pub fn run_scan(
    config: &SourceConfig,
    scan: &DelayScan,
    window_s: f64,
    jobs: usize,
) -> Vec<ScanPoint> {
    let delays: Vec<(usize, f64)> = scan.delays().iter().copied().enumerate().collect();
    let slots: Mutex<Vec<Option<ScanPoint>>> =
        Mutex::new((0..delays.len()).map(|_| None).collect());
    let cursor = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..jobs.max(1).min(delays.len()) {
            s.spawn(|| loop {
                let i = cursor.fetch_add(1, Ordering::SeqCst);
                if i >= delays.len() {
                    break;
                }
                let (index, delay_s) = delays[i];
                let cfg = per_delay_config(config, delay_s, index as u64);
                let mut counter = CoincidenceCounter::new(window_s).unwrap();
                for record in simulate_stream(&cfg).unwrap() {
                    counter.push(record).unwrap();
                }
                let result = counter.finish(cfg.duration_s).unwrap();
                slots.lock().unwrap()[index] = Some(ScanPoint { delay_s, result });
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|slot| slot.expect("every delay filled"))
        .collect()
}

pub fn worker_threads() -> usize {
    std::thread::available_parallelism().map_or(2, |n| n.get())
}
