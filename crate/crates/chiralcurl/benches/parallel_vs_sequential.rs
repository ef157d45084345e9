use std::hint::black_box;

use chiralcurl::continuation::{sweep, SweepOptions};
use chiralcurl::par::Execution;
use chiralcurl::spectral::SpectralOps;
use chiralcurl::{fixtures, Discretization, LatticeSpec, MaterialMask};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const MODES: [(&str, Execution); 2] = [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];

fn gamma_sweep(c: &mut Criterion) {
    let d = Discretization::new(LatticeSpec::simple_cubic([3, 3, 3], fixtures::K_FRAC).unwrap()).unwrap();
    let m = MaterialMask::from_nodes(d.spec().index_map(), &fixtures::star_nodes([2, 2, 2]), fixtures::EPS_I, fixtures::EPS_O).unwrap();
    let grid: Vec<f64> = (0..8).map(|i| 1.0 + 0.25 * i as f64).collect();
    let mut g = c.benchmark_group("sweep_3cubed_8_samples");
    g.sample_size(10);
    for (name, exec) in MODES {
        let opts = SweepOptions { exec, max_halvings: 0, ..Default::default() };
        g.bench_with_input(BenchmarkId::from_parameter(name), &opts, |b, o| b.iter(|| sweep(&d, &m, black_box(&grid), *o).unwrap()));
    }
    g.finish();
}

fn dense_basis(c: &mut Criterion) {
    let ops = SpectralOps::new(&LatticeSpec::simple_cubic([8, 8, 8], fixtures::K_FRAC).unwrap());
    let mut g = c.benchmark_group("dense_t_8cubed");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| ops.dense_t(black_box(exec))));
    }
    g.finish();
}

criterion_group!(benches, gamma_sweep, dense_basis);
criterion_main!(benches);
