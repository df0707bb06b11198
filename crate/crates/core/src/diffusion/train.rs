use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::assignment::KinodynamicLimits;
use crate::decomposition::ConvexPartition;
use crate::geometry::{contains, Point, Polygon};

use super::{chord, resample, DiffusionError, NoiseSchedule, RegionFrame, ScoreModel, DESCRIPTOR_DIRS, MODEL_HORIZON};

/// One single-robot trajectory inside `regions[region]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub region: usize,
    pub points: Vec<Point>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    pub regions: Vec<Polygon>,
    pub samples: Vec<TrainingSample>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Appends another set, renumbering its regions.
    pub fn extend(&mut self, other: TrainingSet) {
        let off = self.regions.len();
        self.regions.extend(other.regions);
        self.samples.extend(other.samples.into_iter().map(|s| TrainingSample { region: s.region + off, ..s }));
    }
}

/// `n` evenly spaced points from `a` to `b`.
pub fn straight_line(a: Point, b: Point, n: usize) -> Vec<Point> {
    chord(a, b, n)
}

fn sample_interior<R: Rng>(region: &Polygon, rng: &mut R) -> Point {
    let bb = region.bbox();
    loop {
        let p = Point::new(rng.random_range(bb.min.x..=bb.max.x), rng.random_range(bb.min.y..=bb.max.y));
        if contains(region, p) {
            return p;
        }
    }
}

fn sample_boundary<R: Rng>(region: &Polygon, rng: &mut R) -> Point {
    let mut s = rng.random_range(0.0..region.perimeter());
    for (a, b) in region.edges() {
        let l = a.dist(b);
        if s <= l {
            return a.lerp(b, s / l);
        }
        s -= l;
    }
    region.vertices()[0]
}

/// Resamples a dense polyline to `n` points equally spaced in arc length.
fn by_arc_length(dense: &[Point], n: usize) -> Vec<Point> {
    let mut cum = vec![0.0];
    for w in dense.windows(2) {
        cum.push(cum.last().unwrap() + w[0].dist(w[1]));
    }
    let total = *cum.last().unwrap();
    if total == 0.0 {
        return vec![dense[0]; n];
    }
    let mut i = 0;
    (0..n)
        .map(|j| {
            if j == n - 1 {
                return *dense.last().unwrap();
            }
            let s = total * j as f64 / (n - 1) as f64;
            while cum[i + 1] < s {
                i += 1;
            }
            let seg = cum[i + 1] - cum[i];
            dense[i].lerp(dense[i + 1], if seg > 0.0 { (s - cum[i]) / seg } else { 0.0 })
        })
        .collect()
}

/// Synthetic constant-speed lines and quadratic Bezier arcs between random
/// endpoints, each endpoint on the boundary or in the interior with equal
/// odds. Waypoint counts grow with length so steps stay within the limits.
pub fn make_training_set(
    partition: &ConvexPartition,
    count: usize,
    seed: u64,
    limits: &KinodynamicLimits,
) -> TrainingSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let regions = partition.regions.clone();
    let mut samples = Vec::with_capacity(count);
    if regions.is_empty() {
        return TrainingSet { regions, samples };
    }
    let step = limits.step_max();
    while samples.len() < count {
        let region = rng.random_range(0..regions.len());
        let poly = &regions[region];
        let endpoint = |rng: &mut ChaCha8Rng| {
            if rng.random_bool(0.5) {
                sample_boundary(poly, rng)
            } else {
                sample_interior(poly, rng)
            }
        };
        let a = endpoint(&mut rng);
        let b = endpoint(&mut rng);
        let dense: Vec<Point> = if rng.random_bool(0.5) {
            straight_line(a, b, 2)
        } else {
            let c = sample_interior(poly, &mut rng);
            (0..=64)
                .map(|k| {
                    let s = k as f64 / 64.0;
                    a * ((1.0 - s) * (1.0 - s)) + c * (2.0 * s * (1.0 - s)) + b * (s * s)
                })
                .collect()
        };
        let len: f64 = dense.windows(2).map(|w| w[0].dist(w[1])).sum();
        let n = ((len / step).ceil() as usize + 1).max(8);
        let points = by_arc_length(&dense, n);
        if points.iter().all(|&p| contains(poly, p)) {
            samples.push(TrainingSample { region, points });
        }
    }
    TrainingSet { regions, samples }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    pub hidden: usize,
    pub depth: usize,
    /// Fraction of samples held out for evaluation.
    pub holdout: f64,
    pub schedule: NoiseSchedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch: 64,
            lr: 3e-4,
            seed: 0,
            hidden: 128,
            depth: 3,
            holdout: 0.1,
            schedule: NoiseSchedule::default(),
        }
    }
}

/// Denoising loss before training and after each epoch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial_train_loss: f64,
    pub initial_heldout_loss: Option<f64>,
    /// Train loss per epoch, evaluated on fixed noise draws.
    pub train_loss: Vec<f64>,
    pub heldout_loss: Vec<f64>,
}

impl TrainReport {
    pub fn final_train_loss(&self) -> f64 {
        self.train_loss.last().copied().unwrap_or(self.initial_train_loss)
    }
}

struct Example {
    x0: Vec<Point>,
    descriptor: [f64; DESCRIPTOR_DIRS],
}

/// Noise draws per example when evaluating a fixed loss.
const EVAL_DRAWS: usize = 4;

fn build_batch<R: Rng>(model: &ScoreModel, examples: &[&Example], rng: &mut R) -> (Array2<f64>, Array2<f64>) {
    let h = model.horizon;
    let mut input = Array2::zeros((examples.len(), ScoreModel::input_dim(h)));
    let mut target = Array2::zeros((examples.len(), 2 * h));
    for (i, ex) in examples.iter().enumerate() {
        let t = rng.random_range(1..=model.schedule.steps);
        let sigma = model.schedule.sigma(t);
        let mut xt = ex.x0.clone();
        for p in &mut xt[1..h - 1] {
            *p += Point::new(rng.sample(StandardNormal), rng.sample(StandardNormal)) * sigma;
        }
        model.features(&xt, sigma, &ex.descriptor, input.row_mut(i).as_slice_mut().unwrap());
        let pc = model.precond(sigma);
        let ch = chord(ex.x0[0], ex.x0[h - 1], h);
        for j in 0..h {
            let f = ((ex.x0[j] - ch[j]) - (xt[j] - ch[j]) * pc.c_skip) * (1.0 / pc.c_out);
            target[(i, 2 * j)] = f.x;
            target[(i, 2 * j + 1)] = f.y;
        }
    }
    (input, target)
}

fn eval_loss(model: &ScoreModel, examples: &[&Example], seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    let mut n = 0;
    for _ in 0..EVAL_DRAWS {
        for chunk in examples.chunks(256) {
            let (x, y) = build_batch(model, chunk, &mut rng);
            let out = model.net.forward(&x);
            total += (&out - &y).iter().map(|d| d * d).sum::<f64>();
            n += out.len();
        }
    }
    total / n as f64
}

/// Denoising score matching with Adam.
pub fn train_score(set: &TrainingSet, cfg: &TrainConfig) -> Result<(ScoreModel, TrainReport), DiffusionError> {
    if set.is_empty() {
        return Err(DiffusionError::EmptyDataset);
    }
    if cfg.batch == 0 || !(cfg.lr > 0.0) || cfg.depth == 0 || cfg.hidden == 0 || !cfg.schedule.is_valid() {
        return Err(DiffusionError::InvalidConfig("batch, lr, depth and hidden must be positive".into()));
    }
    if !(0.0..1.0).contains(&cfg.holdout) {
        return Err(DiffusionError::InvalidConfig("holdout must lie in [0, 1)".into()));
    }
    let h = MODEL_HORIZON;
    let frames: Vec<RegionFrame> = set.regions.iter().map(RegionFrame::new).collect();
    let examples: Vec<Example> = set
        .samples
        .iter()
        .map(|s| {
            let f = &frames[s.region];
            let local: Vec<Point> = s.points.iter().map(|&p| f.to_local(p)).collect();
            Example { x0: resample(&local, h), descriptor: f.descriptor }
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut rng);
    let n_hold = (examples.len() as f64 * cfg.holdout).floor() as usize;
    let (hold_idx, train_idx) = order.split_at(n_hold);
    let train: Vec<&Example> = train_idx.iter().map(|&i| &examples[i]).collect();
    let hold: Vec<&Example> = hold_idx.iter().map(|&i| &examples[i]).collect();

    let mut model = ScoreModel::new(h, cfg.hidden, cfg.depth, cfg.schedule, &mut rng);
    let (mut sq, mut cnt) = (0.0, 0usize);
    for ex in &train {
        let ch = chord(ex.x0[0], ex.x0[h - 1], h);
        for j in 1..h - 1 {
            sq += (ex.x0[j] - ch[j]).norm_sq() / 2.0;
            cnt += 1;
        }
    }
    model.sigma_data = (sq / cnt.max(1) as f64).sqrt().max(0.05);

    let eval_seed = cfg.seed ^ 0x5eed_e7a1;
    let mut report = TrainReport {
        initial_train_loss: eval_loss(&model, &train, eval_seed),
        initial_heldout_loss: (!hold.is_empty()).then(|| eval_loss(&model, &hold, eval_seed)),
        ..Default::default()
    };
    let mut opt = super::Adam::new(&model.net, cfg.lr);
    let mut shuffled = train.clone();
    for epoch in 1..=cfg.epochs {
        shuffled.shuffle(&mut rng);
        for chunk in shuffled.chunks(cfg.batch) {
            let (x, y) = build_batch(&model, chunk, &mut rng);
            let (loss, g) = model.net.mse_grad(&x, &y);
            if !loss.is_finite() {
                return Err(DiffusionError::DivergedTraining(epoch));
            }
            opt.step(&mut model.net, &g);
        }
        let tl = eval_loss(&model, &train, eval_seed);
        if !tl.is_finite() || !model.net.is_finite() {
            return Err(DiffusionError::DivergedTraining(epoch));
        }
        report.train_loss.push(tl);
        if !hold.is_empty() {
            report.heldout_loss.push(eval_loss(&model, &hold, eval_seed));
        }
    }
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Aabb, Workspace};

    fn unit_partition() -> ConvexPartition {
        let ws = Workspace::empty(Aabb::new(Point::new(0.0, 0.0), Point::new(1.0, 1.0)));
        crate::decomposition::pbd(&ws, None).unwrap()
    }

    fn limits() -> KinodynamicLimits {
        KinodynamicLimits::for_grid(0.25, 5, 0.04)
    }

    #[test]
    fn straight_line_example() {
        let pts = straight_line(Point::new(0.1, 0.1), Point::new(0.9, 0.9), 8);
        assert_eq!(pts.len(), 8);
        for (k, p) in pts.iter().enumerate() {
            let s = 0.1 + 0.8 * k as f64 / 7.0;
            assert!((p.x - s).abs() < 1e-15 && (p.y - s).abs() < 1e-15);
        }
    }

    #[test]
    fn samples_stay_inside_with_bounded_steps() {
        let part = unit_partition();
        let lim = limits();
        let set = make_training_set(&part, 200, 7, &lim);
        assert_eq!(set.len(), 200);
        for s in &set.samples {
            assert!(s.points.len() >= 8);
            assert!(s.points.iter().all(|&p| contains(&set.regions[s.region], p)));
            assert!(s.points.windows(2).all(|w| w[0].dist(w[1]) <= lim.step_max() + 1e-12));
        }
        assert_eq!(set, make_training_set(&part, 200, 7, &lim));
    }

    #[test]
    fn zero_epochs_returns_untrained_model() {
        let set = make_training_set(&unit_partition(), 20, 1, &limits());
        let cfg = TrainConfig { epochs: 0, hidden: 16, ..Default::default() };
        let (_, rep) = train_score(&set, &cfg).unwrap();
        assert!(rep.train_loss.is_empty());
        assert_eq!(rep.final_train_loss(), rep.initial_train_loss);
        assert_eq!(train_score(&TrainingSet::default(), &cfg).unwrap_err(), DiffusionError::EmptyDataset);
    }

    #[test]
    fn memorizes_a_single_sample() {
        let set = make_training_set(&unit_partition(), 1, 3, &limits());
        let cfg = TrainConfig { epochs: 200, ..Default::default() };
        let (_, rep) = train_score(&set, &cfg).unwrap();
        assert!(
            rep.final_train_loss() < 0.5 * rep.initial_train_loss,
            "{} vs {}",
            rep.final_train_loss(),
            rep.initial_train_loss
        );
    }
}
