use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::assignment::Subproblem;
use crate::geometry::{project_to_convex, Point};
use crate::trajectory::{Trajectory, TrajectorySet};

use super::{grad_penalty_agents_set, grad_penalty_obstacle, resample, ObstacleTerm, RegionFrame, ScoreModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub steps: usize,
    /// Step size factor: `eps_t = eta * sigma_t^2` in world units.
    pub eta: f64,
    pub guidance_weight: f64,
    pub warm_start: bool,
    /// Highest noise level (local frame) of a warm-started chain.
    pub warm_sigma: f64,
    pub seed: u64,
    /// Zero step size and no noise; only projection and clamping act.
    pub test_mode: bool,
    /// Replace the last iterate by the model's denoised estimate.
    pub final_denoise: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { steps: 25, eta: 1.0, guidance_weight: 1.0, warm_start: true, warm_sigma: 0.1, seed: 0, test_mode: false, final_denoise: true }
    }
}

fn normal<R: Rng>(rng: &mut R) -> Point {
    Point::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

fn project_and_clamp(sub: &Subproblem, xs: &mut [Vec<Point>]) {
    for (x, seg) in xs.iter_mut().zip(&sub.segments) {
        for p in x.iter_mut() {
            *p = project_to_convex(*p, &sub.polygon);
        }
        x[0] = seg.pos_enter;
        *x.last_mut().unwrap() = seg.pos_exit;
    }
}

/// Guided Langevin sampling of every segment of one subproblem.
///
/// Each step moves `x += eps/2 (s + J) + sqrt(eps) z` with the learned
/// score `s`, the guidance `J = -w t/T grad(d_o + d_a)` and fresh noise `z`
/// (omitted on the last step), then projects every waypoint onto the region
/// and pins segment endpoints to their handoff points.
pub fn sample_subproblem(
    sub: &Subproblem,
    model: &ScoreModel,
    cfg: &SamplerConfig,
    obstacles: &[ObstacleTerm],
) -> TrajectorySet {
    let dt = sub.limits.dt;
    if sub.segments.is_empty() {
        return TrajectorySet::new(dt, Vec::new());
    }
    let frame = RegionFrame::new(&sub.polygon);
    let sched = super::NoiseSchedule { steps: cfg.steps.max(1), ..model.schedule };
    let top = if cfg.warm_start { cfg.warm_sigma.max(sched.sigma_min) } else { sched.sigma_max };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut xs: Vec<Vec<Point>> = sub
        .segments
        .iter()
        .map(|seg| {
            if cfg.warm_start {
                seg.reference.clone()
            } else {
                (0..seg.len()).map(|_| frame.center + normal(&mut rng) * (top * frame.scale)).collect()
            }
        })
        .collect();
    project_and_clamp(sub, &mut xs);
    if cfg.test_mode {
        return to_set(sub, xs);
    }

    let h = model.horizon;
    let t_max = sched.steps;
    for t in (1..=t_max).rev() {
        let sigma = sched.sigma_between(t, top);
        let sw = sigma * frame.scale;
        let eps = cfg.eta * sw * sw;
        let local: Vec<Vec<Point>> =
            xs.iter().map(|x| resample(&x.iter().map(|&p| frame.to_local(p)).collect::<Vec<_>>(), h)).collect();
        let den = model.denoise(&local, sigma, &frame.descriptor);
        let ga = grad_penalty_agents_set(&to_set(sub, xs.clone()), sub.limits.r_agent);
        let w = cfg.guidance_weight * t as f64 / t_max as f64;
        for (i, x) in xs.iter_mut().enumerate() {
            let target: Vec<Point> = den[i].iter().map(|&p| frame.to_world(p)).collect();
            let target = resample(&target, x.len());
            let go = grad_penalty_obstacle(x, obstacles);
            for (k, p) in x.iter_mut().enumerate() {
                let score = (target[k] - *p) * (1.0 / (sw * sw));
                let guide = (go[k] + ga[i][k]) * (-w);
                *p += (score + guide) * (eps / 2.0);
                if t > 1 {
                    *p += normal(&mut rng) * eps.sqrt();
                }
            }
        }
        project_and_clamp(sub, &mut xs);
    }
    if cfg.final_denoise {
        let sigma = sched.sigma_between(1, top);
        let local: Vec<Vec<Point>> =
            xs.iter().map(|x| resample(&x.iter().map(|&p| frame.to_local(p)).collect::<Vec<_>>(), h)).collect();
        let den = model.denoise(&local, sigma, &frame.descriptor);
        for (x, d) in xs.iter_mut().zip(den) {
            let target: Vec<Point> = d.into_iter().map(|p| frame.to_world(p)).collect();
            *x = resample(&target, x.len());
        }
        project_and_clamp(sub, &mut xs);
    }
    to_set(sub, xs)
}

fn to_set(sub: &Subproblem, xs: Vec<Vec<Point>>) -> TrajectorySet {
    TrajectorySet::new(
        sub.limits.dt,
        xs.into_iter().zip(&sub.segments).map(|(x, s)| Trajectory::new(s.robot, s.k_enter, x)).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::{KinodynamicLimits, Segment};
    use crate::geometry::{signed_distance_convex, Polygon};
    use crate::diffusion::NoiseSchedule;

    fn square_sub(reference: Vec<Point>) -> Subproblem {
        let n = reference.len();
        Subproblem {
            region: 0,
            polygon: Polygon::rectangle(Point::new(0.0, 0.0), Point::new(1.0, 1.0)),
            segments: vec![Segment {
                robot: 0,
                k_enter: 3,
                k_exit: 3 + n - 1,
                pos_enter: reference[0],
                pos_exit: reference[n - 1],
                reference,
            }],
            limits: KinodynamicLimits::for_grid(0.25, 5, 0.04),
            substeps: 5,
        }
    }

    fn untrained() -> ScoreModel {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        ScoreModel::new(16, 16, 2, NoiseSchedule::default(), &mut rng)
    }

    #[test]
    fn test_mode_is_a_fixed_point() {
        let line = crate::diffusion::straight_line(Point::new(0.1, 0.2), Point::new(0.8, 0.7), 12);
        let sub = square_sub(line.clone());
        let cfg = SamplerConfig { test_mode: true, ..Default::default() };
        let out = sample_subproblem(&sub, &untrained(), &cfg, &[]);
        assert_eq!(out.trajectories[0].points, line);
        assert_eq!(out.trajectories[0].start, 3);
    }

    #[test]
    fn output_is_contained_clamped_and_deterministic() {
        let line = crate::diffusion::straight_line(Point::new(0.0, 0.3), Point::new(1.0, 0.6), 20);
        let sub = square_sub(line);
        let model = untrained();
        for warm in [true, false] {
            let cfg = SamplerConfig { warm_start: warm, seed: 9, ..Default::default() };
            let a = sample_subproblem(&sub, &model, &cfg, &[]);
            let t = &a.trajectories[0];
            assert!(t.points.iter().all(|&p| signed_distance_convex(&sub.polygon, p) <= 1e-9));
            assert_eq!(t.first(), Point::new(0.0, 0.3));
            assert_eq!(t.last(), Point::new(1.0, 0.6));
            assert_eq!(a, sample_subproblem(&sub, &model, &cfg, &[]));
        }
    }
}
