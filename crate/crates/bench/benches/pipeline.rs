use criterion::{black_box, criterion_group, criterion_main, Criterion, Throughput};

use homsim::analysis::{fit_dip, CoincidenceCounter, Measured};
use homsim::event::{
    calibrate_symmetric_source, simulate_stream, DetectorModel, SourceConfig, TimeTagRecord,
};
use homsim::fock::{fock_unitary_oracle, BeamsplitterParams, LossParams};
use homsim::wavepacket::{sinc, SpectralProfile};

fn measured_config(duration_s: f64) -> SourceConfig {
    let bs = BeamsplitterParams::new(0.51, 0.49).unwrap();
    let (pair_rate_cps, loss) =
        calibrate_symmetric_source(5.5e6 / 3600.0, 37.7 / 3600.0, bs).unwrap();
    SourceConfig {
        pair_rate_cps,
        duration_s,
        seed: 1,
        delay_s: 0.3e-12,
        mode_overlap: 0.84886763,
        profile: SpectralProfile::filtered_downconversion(),
        bs,
        loss,
        detector: DetectorModel::default(),
    }
}

fn bench_stream_generation(c: &mut Criterion) {
    let config = measured_config(30.0);
    let records = simulate_stream(&config).unwrap().count() as u64;
    let mut group = c.benchmark_group("stream");
    group.throughput(Throughput::Elements(records));
    group.bench_function("generate_30s_measured_rates", |b| {
        b.iter(|| simulate_stream(black_box(&config)).unwrap().count())
    });
    group.finish();
}

fn bench_coincidence_counting(c: &mut Criterion) {
    let config = measured_config(30.0);
    let records: Vec<TimeTagRecord> = simulate_stream(&config).unwrap().collect();
    let mut group = c.benchmark_group("counting");
    group.throughput(Throughput::Elements(records.len() as u64));
    group.bench_function("count_2ns_window", |b| {
        b.iter(|| {
            let mut counter = CoincidenceCounter::new(2e-9).unwrap();
            for record in &records {
                counter.push(*record).unwrap();
            }
            counter.finish(config.duration_s).unwrap().raw_coincidences
        })
    });
    group.finish();
}

fn bench_dip_fit(c: &mut Criterion) {
    let profile = SpectralProfile::filtered_downconversion();
    let delta_omega = profile.delta_omega();
    let points: Vec<(f64, Measured)> = (0..21)
        .map(|i| {
            let dt = (i as f64 - 10.0) * 0.03e-12;
            let s = sinc(dt * delta_omega / 2.0);
            (
                dt,
                Measured::new(37.7 * (1.0 - 0.72 * s * s), 1.0),
            )
        })
        .collect();
    c.bench_function("fit_dip_21_points", |b| {
        b.iter(|| fit_dip(black_box(&points), black_box(delta_omega)).unwrap())
    });
}

fn bench_fock_oracle(c: &mut Criterion) {
    let bs = BeamsplitterParams::new(0.3, 0.7).unwrap();
    c.bench_function("fock_oracle_2_2", |b| {
        b.iter(|| fock_unitary_oracle(black_box(2), black_box(2), black_box(bs)).unwrap())
    });
    let state = fock_unitary_oracle(2, 2, bs).unwrap();
    let loss = LossParams::new(1.0, 1.0, 0.7, 0.4).unwrap();
    c.bench_function("apply_loss_4_photons", |b| {
        b.iter(|| homsim::fock::apply_loss(black_box(&state), black_box(loss)).unwrap())
    });
}

criterion_group!(
    benches,
    bench_stream_generation,
    bench_coincidence_counting,
    bench_dip_fit,
    bench_fock_oracle
);
criterion_main!(benches);
