//! Seeded synthetic data: a fixed Gaussian mixture over the unit square with a
//! uniform background, and temporal datasets built on it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::ingest::{Instance, TemporalBivariateDataset};
use crate::Point;

struct Component {
    center: Point,
    sd: f64,
    weight: f64,
}

const COMPONENTS: [Component; 3] = [
    Component { center: [0.3, 0.35], sd: 0.06, weight: 0.5 },
    Component { center: [0.65, 0.6], sd: 0.08, weight: 0.3 },
    Component { center: [0.45, 0.8], sd: 0.04, weight: 0.15 },
];
/// Probability mass of the uniform background (the sparse tail).
const BACKGROUND: f64 = 0.05;

fn draw(rng: &mut ChaCha8Rng) -> Point {
    let pick: f64 = rng.random();
    if pick < BACKGROUND {
        return [rng.random(), rng.random()];
    }
    let mut acc = BACKGROUND;
    let scale = (1.0 - BACKGROUND) / COMPONENTS.iter().map(|c| c.weight).sum::<f64>();
    let comp = COMPONENTS
        .iter()
        .find(|c| {
            acc += c.weight * scale;
            pick < acc
        })
        .unwrap_or(&COMPONENTS[COMPONENTS.len() - 1]);
    let noise = Normal::new(0.0, comp.sd).expect("valid sd");
    [
        (comp.center[0] + noise.sample(rng)).clamp(0.0, 1.0),
        (comp.center[1] + noise.sample(rng)).clamp(0.0, 1.0),
    ]
}

/// `n` points from the mixture.
pub fn mixture_points(seed: u64, n: usize) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| draw(&mut rng)).collect()
}

/// Instance ids are zero-padded so id order equals index order.
pub fn instance_id(index: usize) -> String {
    format!("i{index:06}")
}

/// A temporal dataset: each instance starts at a mixture draw and takes a small
/// Gaussian random walk. About 2% of samples are missing.
pub fn mixture_dataset(seed: u64, instances: usize, timesteps: usize) -> TemporalBivariateDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = Normal::new(0.0, 0.01).expect("valid sd");
    let mut samples = Vec::with_capacity(instances);
    for _ in 0..instances {
        let mut pos = draw(&mut rng);
        let mut row = Vec::with_capacity(timesteps);
        for _ in 0..timesteps {
            pos = [
                (pos[0] + step.sample(&mut rng)).clamp(0.0, 1.0),
                (pos[1] + step.sample(&mut rng)).clamp(0.0, 1.0),
            ];
            let missing = rng.random::<f64>() < 0.02;
            row.push(if missing { None } else { Some([pos[0] * 100.0, pos[1] * 50.0]) });
        }
        samples.push(row);
    }
    TemporalBivariateDataset::new(
        ("x".to_string(), "y".to_string()),
        (0..instances)
            .map(|i| Instance { id: instance_id(i), label: instance_id(i) })
            .collect(),
        (0..timesteps).map(|t| format!("t{t:04}")).collect(),
        samples,
    )
    .expect("synthetic dataset is valid")
}

/// Random points uniform in the unit square.
pub fn uniform_points(seed: u64, n: usize) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| [rng.random(), rng.random()]).collect()
}

/// Single-timestep dataset from points given in raw units.
pub fn single_plot_dataset(points: &[Point]) -> TemporalBivariateDataset {
    multi_plot_dataset(&[points.to_vec()])
}

/// Dataset whose timestep `t` holds `plots[t]`; instance `i` is the `i`-th point
/// of every plot (shorter plots leave the tail absent).
pub fn multi_plot_dataset(plots: &[Vec<Point>]) -> TemporalBivariateDataset {
    let n = plots.iter().map(Vec::len).max().unwrap_or(0);
    TemporalBivariateDataset::new(
        ("x".to_string(), "y".to_string()),
        (0..n)
            .map(|i| Instance { id: instance_id(i), label: instance_id(i) })
            .collect(),
        (0..plots.len()).map(|t| format!("t{t:04}")).collect(),
        (0..n)
            .map(|i| plots.iter().map(|p| p.get(i).copied()).collect())
            .collect(),
    )
    .expect("valid plots")
}
