//! Seeded generators shared by unit tests across modules.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::space::MetricMeasureSpace;
use crate::tent::{TGrid, TentFunction};
use crate::weights::WeightFunction;

/// Random point cloud in `[0,10]^dim` with masses in `[0.5, 2)`.
pub fn random_space(seed: u64, n: usize, dim: usize) -> MetricMeasureSpace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| rng.gen_range(0.0..10.0)).collect())
        .collect();
    let mass: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
    MetricMeasureSpace::from_coords(coords, Some(mass)).expect("random space is a metric space")
}

/// Random weight with values in `[0.2, 5)`.
pub fn random_weight(n: usize, seed: u64) -> WeightFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    WeightFunction::new((0..n).map(|_| rng.gen_range(0.2..5.0)).collect()).expect("positive")
}

/// Random tent function on the default grid: each sample nonzero with the
/// given density, values in [-2, 2).
pub fn random_tent(space: &MetricMeasureSpace, seed: u64, density: f64) -> TentFunction {
    let grid = TGrid::default_for_space(space).expect("default grid");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = TentFunction::zeros(space.len(), grid.clone());
    for y in 0..space.len() {
        for m in 0..grid.len() {
            if rng.gen_bool(density) {
                f.set(y, m, rng.gen_range(-2.0..2.0));
            }
        }
    }
    f
}
