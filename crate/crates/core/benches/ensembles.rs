use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use transmon_lab::pendulum::{self, EnsembleSpec};
use transmon_lab::rbm::RbmParams;
use transmon_lab::tlsdyn::{self, Drive, RbmStart, TlsInit};
use transmon_lab::{exec, params, qtransmon, ModelParams, PERIOD};

const MODES: [(&str, bool); 2] = [("sequential", true), ("parallel", false)];

fn pendulum_ensemble(c: &mut Criterion) {
    let p = ModelParams::reference();
    let spec = EnsembleSpec::husimi(256, 1);
    let mut g = c.benchmark_group("pendulum_ensemble");
    g.sample_size(10);
    for (name, seq) in MODES {
        exec::set_sequential(seq);
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(pendulum::ensemble_momentum_stats(&p, &spec, 20, 400).unwrap().sigma_bar))
        });
    }
    exec::set_sequential(false);
    g.finish();
}

fn rbm_ensemble(c: &mut Criterion) {
    let p = ModelParams::reference();
    let drive = Drive::Rbm {
        rbm: RbmParams { d: 0.0883, p_bar: 4.37, dt: PERIOD / 200.0, seed: 7 },
        n_paths: 256,
        start: RbmStart::Stationary,
    };
    let mut g = c.benchmark_group("rbm_tls_ensemble");
    g.sample_size(10);
    for (name, seq) in MODES {
        exec::set_sequential(seq);
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(tlsdyn::semiclassical_ensemble(&p, &drive, &TlsInit::EXCITED, 20, 1).unwrap().sz[20]))
        });
    }
    exec::set_sequential(false);
    g.finish();
}

fn n_g_sweep(c: &mut Criterion) {
    let p = ModelParams::reference();
    let grid = params::n_g_grid(4);
    let mut g = c.benchmark_group("quantum_n_g_sweep");
    g.sample_size(10);
    for (name, seq) in MODES {
        exec::set_sequential(seq);
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(qtransmon::quantum_spread(&p, &grid, 20, 100, 40, 128).unwrap().sigma_bar))
        });
    }
    exec::set_sequential(false);
    g.finish();
}

criterion_group!(benches, pendulum_ensemble, rbm_ensemble, n_g_sweep);
criterion_main!(benches);
