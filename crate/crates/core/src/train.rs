//! Desk-scale training: template/search pair sampling from labeled
//! sequences and SGD with momentum.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bbox::BBox;
use crate::error::{HiftError, Result};
use crate::graph::Graph;
use crate::labels::{LabelConfig, LabelMaps};
use crate::loss::LossWeights;
use crate::model::Model;
use crate::param::ParamStore;
use crate::sequence::Sequence;
use crate::tensor::Tensor;
use crate::tracker::{crop_windows, CropWindow};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    /// Learning rate at the first step.
    pub lr: f64,
    /// Learning rate at the last step; interpolated geometrically.
    pub lr_end: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Global gradient-norm ceiling; `0` disables clipping.
    pub grad_clip: f64,
    pub seed: u64,
    /// Largest frame distance between template and search frames.
    pub max_gap: usize,
    /// Largest search-center offset from the target, in search-crop pixels.
    pub max_shift: f64,
    /// Relative jitter of the search-region scale.
    pub scale_jitter: f64,
    pub context: f64,
    pub labels: LabelConfig,
    pub weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 2,
            lr: 0.005,
            lr_end: 0.0005,
            momentum: 0.9,
            weight_decay: 1e-4,
            grad_clip: 10.0,
            seed: 0,
            max_gap: 8,
            max_shift: 16.0,
            scale_jitter: 0.05,
            context: 0.5,
            labels: LabelConfig::default(),
            weights: LossWeights::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HiftError::Config(msg));
        if self.steps == 0 || self.batch_size == 0 {
            return bad("steps and batch_size must be positive".into());
        }
        if !(self.lr >= 0.0 && self.lr_end >= 0.0 && self.lr.is_finite() && self.lr_end.is_finite()) {
            return bad(format!(
                "learning rates must be finite and >= 0 ({} -> {})",
                self.lr, self.lr_end
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0 && self.grad_clip >= 0.0 && self.max_shift >= 0.0) {
            return bad("weight_decay, grad_clip and max_shift must be >= 0".into());
        }
        if !(0.0..0.5).contains(&self.scale_jitter) || self.context.is_nan() || self.context < 0.0 {
            return bad("scale_jitter must be in [0, 0.5) and context >= 0".into());
        }
        self.weights.validate()
    }

    /// Learning rate at `step` (zero-based).
    pub fn lr_at(&self, step: usize) -> f64 {
        if self.steps <= 1 || self.lr == 0.0 || self.lr_end == 0.0 {
            return self.lr;
        }
        let t = step as f64 / (self.steps - 1) as f64;
        self.lr * (self.lr_end / self.lr).powf(t)
    }
}

/// One training example.
#[derive(Clone, Debug)]
pub struct Pair {
    pub sequence: usize,
    pub template_frame: usize,
    pub search_frame: usize,
    pub template: Tensor,
    pub search: Tensor,
    pub search_window: CropWindow,
    pub gt_in_search: BBox,
    pub labels: LabelMaps,
}

/// Sequences with at least one labeled frame, sampled uniformly.
pub struct PairSampler<'a> {
    model: &'a Model,
    data: &'a [Sequence],
    usable: Vec<usize>,
    config: &'a TrainConfig,
}

impl<'a> PairSampler<'a> {
    pub fn new(model: &'a Model, data: &'a [Sequence], config: &'a TrainConfig) -> Result<Self> {
        let usable: Vec<usize> = (0..data.len())
            .filter(|&i| data[i].groundtruth.len().min(data[i].frames.len()) > 0)
            .collect();
        if usable.is_empty() {
            return Err(HiftError::Contract("no labeled frames to train on".into()));
        }
        Ok(Self {
            model,
            data,
            usable,
            config,
        })
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Result<Pair> {
        const ATTEMPTS: usize = 100;
        for _ in 0..ATTEMPTS {
            let sequence = self.usable[rng.random_range(0..self.usable.len())];
            let seq = &self.data[sequence];
            let n = seq.groundtruth.len().min(seq.frames.len());
            let a = rng.random_range(0..n);
            let gap = self.config.max_gap.min(n - 1) as i64;
            let b = (a as i64 + rng.random_range(-gap..=gap)).clamp(0, n as i64 - 1) as usize;
            let (gt_a, gt_b) = (seq.groundtruth[a], seq.groundtruth[b]);
            if !gt_a.is_valid() || !gt_b.is_valid() {
                continue;
            }
            let (template_window, _) = crop_windows(self.model, &gt_a, self.config.context);
            let s = 1.0 + rng.random_range(-1.0..=1.0) * self.config.scale_jitter;
            let basis = BBox::new(gt_b.cx, gt_b.cy, gt_b.w * s, gt_b.h * s);
            let (_, mut search_window) = crop_windows(self.model, &basis, self.config.context);
            let shift = self.config.max_shift / search_window.scale();
            search_window.cx += rng.random_range(-1.0..=1.0) * shift;
            search_window.cy += rng.random_range(-1.0..=1.0) * shift;
            let gt_in_search = search_window.frame_to_crop(&gt_b);
            let label_seed = rng.random::<u64>();
            let labels = match self.model.labels(&gt_in_search, &self.config.labels, label_seed) {
                Ok(l) => l,
                Err(HiftError::DegenerateLabels(_)) => continue,
                Err(e) => return Err(e),
            };
            return Ok(Pair {
                sequence,
                template_frame: a,
                search_frame: b,
                template: template_window.sample(&seq.frames[a]),
                search: search_window.sample(&seq.frames[b]),
                search_window,
                gt_in_search,
                labels,
            });
        }
        Err(HiftError::Contract(format!(
            "could not draw a usable training pair in {ATTEMPTS} attempts"
        )))
    }
}

/// SGD with momentum and L2 weight decay: `v = mu v + (g + wd p)`, `p -= lr v`.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Tensor>,
}

impl Sgd {
    pub fn new(store: &ParamStore, momentum: f64, weight_decay: f64) -> Self {
        Self {
            momentum,
            weight_decay,
            velocity: store.iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
        }
    }

    pub fn step(&mut self, store: &mut ParamStore, lr: f64) {
        for (p, v) in store.iter_mut().zip(&mut self.velocity) {
            if !p.trainable {
                continue;
            }
            let (mu, wd) = (self.momentum, self.weight_decay);
            for ((vi, &gi), pi) in v.data_mut().iter_mut().zip(p.grad.data()).zip(p.value.data_mut()) {
                *vi = mu * *vi + gi + wd * *pi;
                *pi -= lr * *vi;
            }
        }
    }
}

/// L2 norm over the gradients of trainable parameters.
pub fn grad_norm(store: &ParamStore) -> f64 {
    store
        .iter()
        .filter(|p| p.trainable)
        .flat_map(|p| p.grad.data().iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLog {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    pub cls1: f64,
    pub cls2: f64,
    pub loc: f64,
}

pub const LOSS_CSV_HEADER: &str = "step,lr,loss,cls1,cls2,loc";

impl StepLog {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.step, self.lr, self.loss, self.cls1, self.cls2, self.loc
        )
    }
}

fn describe_batch(batch: &[Pair], data: &[Sequence], terms: &[[f64; 4]]) -> String {
    let mut s = String::from("non-finite loss; offending batch:\n");
    for (p, t) in batch.iter().zip(terms) {
        let _ = writeln!(
            s,
            "  sequence {} ({}) template frame {} search frame {} gt_in_search {} search window ({:.3},{:.3}) side {:.3} | total {} cls1 {} cls2 {} loc {}",
            p.sequence,
            data[p.sequence].name,
            p.template_frame,
            p.search_frame,
            p.gt_in_search,
            p.search_window.cx,
            p.search_window.cy,
            p.search_window.side,
            t[0],
            t[1],
            t[2],
            t[3]
        );
    }
    s
}

/// Trains `model` in place. `on_step` sees every logged step. A non-finite
/// loss or gradient aborts with a `Numerical` error describing the batch.
pub fn train(
    model: &mut Model,
    data: &[Sequence],
    config: &TrainConfig,
    mut on_step: impl FnMut(&StepLog),
) -> Result<Vec<StepLog>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut sgd = Sgd::new(&model.params, config.momentum, config.weight_decay);
    let mut logs = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let batch = {
            let sampler = PairSampler::new(model, data, config)?;
            (0..config.batch_size)
                .map(|_| sampler.sample(&mut rng))
                .collect::<Result<Vec<_>>>()?
        };
        model.params.zero_grad();
        let inv = 1.0 / config.batch_size as f64;
        let mut terms = Vec::with_capacity(batch.len());
        for pair in &batch {
            let mut g = Graph::new();
            let lt = model.pair_loss(&mut g, &pair.template, &pair.search, &pair.labels, &config.weights)?;
            let total = g.value(lt.total).item();
            terms.push([total, lt.cls1, lt.cls2, lt.loc]);
            if !total.is_finite() {
                return Err(HiftError::Numerical(describe_batch(&batch, data, &terms)));
            }
            let scaled = g.scale(lt.total, inv);
            g.backward(scaled, &mut model.params)?;
        }
        let norm = grad_norm(&model.params);
        if !norm.is_finite() {
            return Err(HiftError::Numerical(describe_batch(&batch, data, &terms)));
        }
        if config.grad_clip > 0.0 && norm > config.grad_clip {
            let k = config.grad_clip / norm;
            for p in model.params.iter_mut() {
                p.grad.data_mut().iter_mut().for_each(|g| *g *= k);
            }
        }
        let lr = config.lr_at(step);
        sgd.step(&mut model.params, lr);
        let mean = |j: usize| terms.iter().map(|t| t[j]).sum::<f64>() * inv;
        let log = StepLog {
            step,
            lr,
            loss: mean(0),
            cls1: mean(1),
            cls2: mean(2),
            loc: mean(3),
        };
        on_step(&log);
        logs.push(log);
    }
    Ok(logs)
}

/// Mean loss over the first `head` and the last `tail` steps.
pub fn loss_endpoints(logs: &[StepLog], head: usize, tail: usize) -> Option<(f64, f64)> {
    if logs.is_empty() {
        return None;
    }
    let mean = |s: &[StepLog]| s.iter().map(|l| l.loss).sum::<f64>() / s.len() as f64;
    let h = head.clamp(1, logs.len());
    let t = tail.clamp(1, logs.len());
    Some((mean(&logs[..h]), mean(&logs[logs.len() - t..])))
}
