use criterion::{criterion_group, criterion_main, Criterion};
use spinbus::fidelity::GammaSet;
use spinbus::optimizer::uniform_grid;
use spinbus::robustness::DephasingModel;
use spinbus::{scan_time, ScanSettings, SystemSpec, TransferModel};

fn weak_coupling_spec() -> SystemSpec {
    SystemSpec::with_params(20, 0.04, 0.0, &[0.35, -0.25]).unwrap()
}

fn spectral_setup(c: &mut Criterion) {
    let spec = weak_coupling_spec();
    c.bench_function("transfer_model_n20_m2", |b| {
        b.iter(|| TransferModel::new(&spec).unwrap())
    });
}

fn average_series(c: &mut Criterion) {
    let model = TransferModel::new(&weak_coupling_spec()).unwrap();
    let times = uniform_grid(1.0, 500.0, 1.0);
    c.bench_function("average_series_500_points", |b| {
        b.iter(|| model.average_series(&times).unwrap())
    });
}

fn time_scan(c: &mut Criterion) {
    let spec = weak_coupling_spec();
    let scan = ScanSettings::default();
    c.bench_function("scan_time_n20_m2", |b| b.iter(|| scan_time(&spec, &scan).unwrap()));
}

fn dephasing(c: &mut Criterion) {
    let spec = SystemSpec::with_params(8, 0.04, 0.0, &[0.15, -0.05]).unwrap();
    let times = uniform_grid(1.0, 50.0, 1.0);
    let mut group = c.benchmark_group("dephasing");
    group.sample_size(10);
    group.bench_function("n8_m2_t50", |b| {
        b.iter(|| {
            DephasingModel::new(&spec, 1e-3, GammaSet::Average)
                .unwrap()
                .gamma_series(&times)
                .unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, spectral_setup, average_series, time_scan, dephasing);
criterion_main!(benches);
