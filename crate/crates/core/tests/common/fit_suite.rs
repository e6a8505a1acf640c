//! Ellipse-fit accuracy against known parameters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use ringtrack::fit::angle_diff_mod_pi;
use ringtrack::{fit_ellipse, Ellipse};

pub fn random_ellipse(rng: &mut impl Rng) -> Ellipse {
    Ellipse::new(
        rng.random_range(-1000.0..1000.0),
        rng.random_range(-1000.0..1000.0),
        rng.random_range(10.0..300.0),
        rng.random_range(10.0..300.0),
        rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
    )
}

/// Boundary samples at roughly one per pixel of arc.
pub fn samples(e: &Ellipse) -> Vec<(f64, f64)> {
    let n = e.perimeter().ceil().max(16.0) as usize;
    (0..n)
        .map(|i| e.point_at(std::f64::consts::TAU * i as f64 / n as f64))
        .collect()
}

/// Largest parameter error; orientation enters as the boundary displacement
/// it causes, so near-circles are not penalized for an arbitrary angle.
pub fn parameter_error(fit: &Ellipse, truth: &Ellipse) -> f64 {
    let dtheta = angle_diff_mod_pi(fit.theta, truth.theta).abs() * (truth.a - truth.b).abs();
    [
        (fit.cx - truth.cx).abs(),
        (fit.cy - truth.cy).abs(),
        (fit.a - truth.a).abs(),
        (fit.b - truth.b).abs(),
        dtheta,
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

/// Worst error over `n` noiseless fits; `INFINITY` if any fit fails.
pub fn noiseless_worst(n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let e = random_ellipse(&mut rng);
        match fit_ellipse(&samples(&e)) {
            Ok(f) => worst = worst.max(parameter_error(&f, &e)),
            Err(_) => return f64::INFINITY,
        }
    }
    worst
}

/// Axes within 2% and center within 0.5 px under sigma = 0.5 px noise.
pub fn noisy_fit_passes(seed: u64) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e = random_ellipse(&mut rng);
    let noise = Normal::new(0.0, 0.5).expect("sigma");
    let pts: Vec<(f64, f64)> = samples(&e)
        .into_iter()
        .map(|(x, y)| (x + noise.sample(&mut rng), y + noise.sample(&mut rng)))
        .collect();
    let Ok(f) = fit_ellipse(&pts) else { return false };
    let center = ((f.cx - e.cx).powi(2) + (f.cy - e.cy).powi(2)).sqrt();
    center <= 0.5 && (f.a - e.a).abs() <= 0.02 * e.a && (f.b - e.b).abs() <= 0.02 * e.b
}

pub fn noisy_pass_rate(seeds: std::ops::Range<u64>) -> f64 {
    let n = seeds.end - seeds.start;
    seeds.filter(|&s| noisy_fit_passes(s)).count() as f64 / n as f64
}
