use curvpath::dynamics::{simulate_path_with_frame, simulate_with_increments, FrameState};
use curvpath::geometry::{ManifoldModel, Point};
use curvpath::linalg::{Matrix, Vector};
use curvpath::parallel::map_paths;
use curvpath::rng::NormalStream;
use curvpath::stats;

/// `E x_N²` of the Heun recursion for `dx = √2 dW − λx dt`, which is linear:
/// `x' = a x + b ΔW` with `a = 1 − λh + λ²h²/2`, `b = √2 (1 − λh/2)`.
fn heun_second_moment(x0: f64, lambda: f64, h: f64, steps: usize) -> f64 {
    let a = 1.0 - lambda * h + 0.5 * (lambda * h).powi(2);
    let b2 = 2.0 * (1.0 - 0.5 * lambda * h).powi(2);
    let mut m = x0 * x0;
    for _ in 0..steps {
        m = a * a * m + b2 * h;
    }
    m
}

#[test]
fn weak_error_shrinks_with_the_step() {
    let (lambda, x0, horizon, n) = (1.0, 0.5, 0.2, 1_000_000);
    let model = ManifoldModel::ornstein_uhlenbeck(1, lambda).unwrap();
    let exact = x0 * x0 * (-2.0 * lambda * horizon).exp() + (1.0 - (-2.0 * lambda * horizon).exp()) / lambda;
    let fine = 1e-3;
    let steps = (horizon / fine).round() as usize;
    let levels = [4usize, 2, 1];
    // the same Brownian path at all three resolutions
    let samples = map_paths(n, |i| {
        let mut stream = NormalStream::for_path(11, i as u64);
        let dw: Vec<Vector> = (0..steps).map(|_| stream.increment(1, fine)).collect();
        let mut out = [0.0; 3];
        for (slot, &m) in out.iter_mut().zip(&levels) {
            let coarse: Vec<Vector> = dw.chunks(m).map(|c| c.iter().fold(Vector::zeros(1), |a, b| a + *b)).collect();
            let start = FrameState::at(&model, Point::new(0, Vector::from_slice(&[x0]))).unwrap();
            let path = simulate_with_increments(&model, start, fine * m as f64, coarse).unwrap();
            *slot = path.terminal().u[0].powi(2);
        }
        Ok(out)
    })
    .unwrap();
    let mut errors = Vec::new();
    for (k, &m) in levels.iter().enumerate() {
        let xs: Vec<f64> = samples.iter().map(|s| s[k]).collect();
        let (mean, se) = stats::mean_stderr(&xs);
        let h = fine * m as f64;
        let discrete = heun_second_moment(x0, lambda, h, steps / m);
        assert!((mean - discrete).abs() < 4.0 * se, "dt = {h}: {mean} vs scheme {discrete} ± {se}");
        errors.push(((discrete - exact).abs(), mean - exact));
    }
    // deterministic part strictly decreasing, Monte Carlo part within bands
    assert!(errors[0].0 > errors[1].0 && errors[1].0 > errors[2].0, "{errors:?}");
    for k in 0..2 {
        let d: Vec<f64> = samples.iter().map(|s| s[k] - s[k + 1]).collect();
        let (_, se) = stats::mean_stderr(&d);
        assert!(errors[k + 1].1.abs() <= errors[k].1.abs() + 3.0 * se + 3.0 * (2.0 / n as f64).sqrt(), "{errors:?}");
    }
}

fn ks_distance(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn distance_law_ignores_the_initial_frame() {
    let model = ManifoldModel::sphere(2, 1.0).unwrap();
    let x = Point::new(0, Vector::from_slice(&[0.3, -0.2]));
    let n = 10_000;
    let base = FrameState::at(&model, x).unwrap();
    let (c, s) = (0.7f64.cos(), 0.7f64.sin());
    let rotation = Matrix::from_rows(&[&[c, -s], &[s, c]]);
    let rotated = FrameState::with_frame(&model, x, base.frame.mat_mul(&rotation)).unwrap();
    let law = |start: FrameState, seed| {
        map_paths(n, |i| {
            let path = simulate_path_with_frame(&model, start, 0.5, 1e-3, seed, i as u64)?;
            Ok(model.distance(&x, &path.terminal().point()))
        })
        .unwrap()
    };
    let d = ks_distance(law(base, 3), law(rotated, 4));
    // two-sample critical value at level 0.001
    let critical = 1.949 * (2.0 / n as f64).sqrt();
    assert!(d < critical, "KS distance {d} ≥ {critical}");
}
