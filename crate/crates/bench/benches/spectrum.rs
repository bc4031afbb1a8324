use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DMatrix;
use nearfocus::beamfocus::steering_basis;
use nearfocus::geometry::fraunhofer_distance;
use nearfocus::music::{
    hermitian_eigendecomposition, music_spectrum, music_spectrum_batch, music_spectrum_naive,
    music_spectrum_tabulated, MusicGrid, SteeringTable, SubspacePair,
};
use nearfocus::{CarrierConfig, Complex64, PolarLocation, UlaGeometry};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn subspaces(n: usize, c: &CarrierConfig, g: &UlaGeometry, count: usize) -> Vec<SubspacePair> {
    let rf = fraunhofer_distance(g, c);
    let users = [PolarLocation::new(rf / 8.0, 0.0).unwrap(), PolarLocation::new(rf / 2.0, 0.3).unwrap()];
    let b = steering_basis(&users, c, g);
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    (0..count)
        .map(|_| {
            let w = DMatrix::from_fn(n, n, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
            hermitian_eigendecomposition(&(&b * b.adjoint() + (&w * w.adjoint()).unscale(100.0)), 2).unwrap()
        })
        .collect()
}

fn bench_spectrum(crit: &mut Criterion) {
    let c = CarrierConfig::ghz(100.0).unwrap();
    let mut group = crit.benchmark_group("spectrum");
    group.sample_size(10);
    for n in [32usize, 128] {
        let g = UlaGeometry::with_spacing_in_wavelengths(n, 0.5, &c).unwrap();
        let grid = MusicGrid::default_region(&c, &g, 100.0 * c.wavelength(), 1.0).unwrap();
        let subs = subspaces(n, &c, &g, 7);
        let points = format!("N{n}_{}pts", grid.len());
        group.bench_function(BenchmarkId::new("fast", &points), |bch| {
            bch.iter(|| music_spectrum(&subs[0], &grid, &c, &g).unwrap())
        });
        group.bench_function(BenchmarkId::new("naive", &points), |bch| {
            bch.iter(|| music_spectrum_naive(&subs[0], &grid, &c, &g).unwrap())
        });
        let table = SteeringTable::new(&grid, &c, &g);
        group.bench_function(BenchmarkId::new("tabulated", &points), |bch| {
            bch.iter(|| music_spectrum_tabulated(&table, &subs[0]).unwrap())
        });
        group.bench_function(BenchmarkId::new("batch7", &points), |bch| {
            bch.iter(|| music_spectrum_batch(&subs, &grid, &c, &g).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_spectrum);
criterion_main!(benches);
