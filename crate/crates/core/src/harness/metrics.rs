use nalgebra::DMatrix;

use crate::geometry::Point;

use super::HarnessError;

/// Polyline length divided by the straight-line start-goal distance.
pub fn metric_path_ratio(points: &[Point], start: Point, goal: Point) -> Result<f64, HarnessError> {
    let d = start.dist(goal);
    if d <= 1e-9 {
        return Err(HarnessError::DegenerateInstance);
    }
    let len: f64 = points.windows(2).map(|w| w[0].dist(w[1])).sum();
    Ok(len / d)
}

/// Mean magnitude of the second central difference divided by `dt^2`.
pub fn metric_acceleration(points: &[Point], dt: f64) -> Result<f64, HarnessError> {
    if points.len() < 3 {
        return Err(HarnessError::TooShort(points.len()));
    }
    let sum: f64 = points.windows(3).map(|w| (w[2] - w[1] * 2.0 + w[0]).norm()).sum();
    Ok(sum / (points.len() - 2) as f64 / (dt * dt))
}

/// Savitzky-Golay smoothing with a centered window of odd length; points
/// within half a window of either end use the nearest full window's fit.
/// The first and last points are kept.
pub fn smooth(points: &[Point], window: usize, order: usize) -> Result<Vec<Point>, HarnessError> {
    let n = points.len();
    if window % 2 == 0 || order >= window || window > n {
        return Err(HarnessError::BadWindow { window, order, len: n });
    }
    let m = window / 2;
    let scale = m.max(1) as f64;
    let vander = DMatrix::from_fn(window, order + 1, |i, j| ((i as f64 - m as f64) / scale).powi(j as i32));
    let pinv = vander
        .clone()
        .svd(true, true)
        .pseudo_inverse(1e-12)
        .map_err(|_| HarnessError::BadWindow { window, order, len: n })?;
    // Row of weights that evaluates the fitted polynomial at window offset `i`.
    let weights = |i: usize| {
        let row = DMatrix::from_fn(1, order + 1, |_, j| ((i as f64 - m as f64) / scale).powi(j as i32));
        row * &pinv
    };
    let centre = weights(m);
    let mut out = points.to_vec();
    for k in 1..n.saturating_sub(1) {
        let (lo, w) = if k < m {
            (0, weights(k))
        } else if k + m >= n {
            (n - window, weights(k + window - n))
        } else {
            (k - m, centre.clone())
        };
        let mut p = Point::new(0.0, 0.0);
        for i in 0..window {
            p += points[lo + i] * w[(0, i)];
        }
        out[k] = p;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> Point {
        Point::new(x, y)
    }

    #[test]
    fn path_ratio_examples() {
        let line: Vec<Point> = (0..=10).map(|k| p(k as f64 * 0.1, 0.0)).collect();
        assert!((metric_path_ratio(&line, p(0.0, 0.0), p(1.0, 0.0)).unwrap() - 1.0).abs() < 1e-12);
        let corner = [p(0.0, 0.0), p(1.0, 0.0), p(1.0, 1.0)];
        let r = metric_path_ratio(&corner, p(0.0, 0.0), p(1.0, 1.0)).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(metric_path_ratio(&corner, p(0.5, 0.5), p(0.5, 0.5)), Err(HarnessError::DegenerateInstance));
    }

    #[test]
    fn acceleration_examples() {
        let dt = 0.1;
        let line: Vec<Point> = (0..10).map(|k| p(k as f64 * 0.05, 0.0)).collect();
        assert!(metric_acceleration(&line, dt).unwrap().abs() < 1e-12);
        // constant speed v then hold: the single kink contributes v / dt
        let v = 0.5;
        let mut stop: Vec<Point> = (0..5).map(|k| p(k as f64 * v * dt, 0.0)).collect();
        stop.extend(std::iter::repeat_n(p(4.0 * v * dt, 0.0), 4));
        let a = metric_acceleration(&stop, dt).unwrap();
        assert!((a - (v / dt) / (stop.len() - 2) as f64).abs() < 1e-12);
        // circle of radius r sampled at angular rate w
        let (r, w) = (0.7, 1.3);
        let circle: Vec<Point> =
            (0..200).map(|k| p(r * (w * k as f64 * dt).cos(), r * (w * k as f64 * dt).sin())).collect();
        let a = metric_acceleration(&circle, dt).unwrap();
        assert!((a - w * w * r).abs() <= 0.05 * w * w * r);
        assert_eq!(metric_acceleration(&line[..2], dt), Err(HarnessError::TooShort(2)));
    }

    #[test]
    fn smoothing_reproduces_polynomials() {
        let cubic: Vec<Point> = (0..15)
            .map(|k| {
                let t = k as f64 * 0.1;
                p(t * t * t - t, 0.5 * t * t + 2.0)
            })
            .collect();
        let s = smooth(&cubic, 7, 3).unwrap();
        for (a, b) in s.iter().zip(&cubic) {
            assert!(a.dist(*b) < 1e-9);
        }
        let whole = smooth(&cubic[..5], 5, 2).unwrap();
        assert_eq!(whole[0], cubic[0]);
        assert_eq!(whole[4], cubic[4]);
    }

    #[test]
    fn smoothing_reduces_noise() {
        let noisy: Vec<Point> =
            (0..41).map(|k| p(k as f64 * 0.025, if k % 2 == 0 { 0.01 } else { -0.01 })).collect();
        let dev = |ps: &[Point]| ps[1..ps.len() - 1].iter().map(|q| q.y.abs()).fold(0.0, f64::max);
        let s = smooth(&noisy, 9, 2).unwrap();
        assert!(dev(&s) < dev(&noisy));
        assert_eq!(s[0], noisy[0]);
        assert_eq!(s[40], noisy[40]);
    }

    #[test]
    fn bad_windows_are_rejected() {
        let ps = vec![p(0.0, 0.0); 5];
        assert!(smooth(&ps, 4, 1).is_err());
        assert!(smooth(&ps, 3, 3).is_err());
        assert!(smooth(&ps, 7, 2).is_err());
    }
}
