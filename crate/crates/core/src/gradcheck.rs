//! Central finite-difference checks of the full training loss against the
//! reverse-mode gradients, one result per parameter tensor.

use std::fmt;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bbox::BBox;
use crate::error::Result;
use crate::graph::Graph;
use crate::labels::{LabelConfig, LabelMaps};
use crate::loss::LossWeights;
use crate::model::{Model, ModelConfig};
use crate::param::ParamId;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckConfig {
    pub model: ModelConfig,
    pub seed: u64,
    /// Finite-difference step.
    pub step: f64,
    pub tolerance: f64,
    /// Magnitude below which gradients are compared absolutely.
    pub abs_floor: f64,
    /// Coordinates sampled per parameter tensor; smaller tensors are checked in full.
    pub samples_per_param: usize,
    /// Modulation residual weight used during the check, so that the gated
    /// branch contributes to the loss.
    pub gamma: f64,
    /// Adds this offset to the analytic gradient of the named parameter.
    pub corrupt: Option<(String, f64)>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::tiny(),
            seed: 0,
            step: 1e-5,
            tolerance: 1e-4,
            abs_floor: 1e-6,
            samples_per_param: 6,
            gamma: 0.5,
            corrupt: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupResult {
    pub name: String,
    pub checked: usize,
    /// Coordinates whose stencil straddled a kink (ReLU, minimum) and were replaced.
    pub skipped: usize,
    pub max_rel_err: f64,
    /// Coordinate with the largest error: `(index, analytic, numeric)`.
    pub worst: Option<(usize, f64, f64)>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub seed: u64,
    pub tolerance: f64,
    pub loss: f64,
    pub groups: Vec<GroupResult>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.groups.iter().all(|g| g.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &GroupResult> {
        self.groups.iter().filter(|g| !g.passed)
    }

    pub fn max_rel_err(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_err).fold(0.0, f64::max)
    }
}

impl fmt::Display for GroupResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<40} checked {:>3} skipped {:>2} max_rel_err {:.3e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.checked,
            self.skipped,
            self.max_rel_err
        )?;
        if let (false, Some((i, a, n))) = (self.passed, self.worst) {
            write!(f, " (index {i}: analytic {a:.6e}, numeric {n:.6e})")?;
        }
        Ok(())
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "gradcheck seed {} loss {:.6} tolerance {:.1e}",
            self.seed, self.loss, self.tolerance
        )?;
        for g in &self.groups {
            writeln!(f, "{g}")?;
        }
        write!(
            f,
            "{} of {} parameter groups passed",
            self.groups.iter().filter(|g| g.passed).count(),
            self.groups.len()
        )
    }
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// A model plus one fixed image pair and label set.
pub struct Problem {
    pub model: Model,
    pub template: Tensor,
    pub search: Tensor,
    pub labels: LabelMaps,
    pub weights: LossWeights,
}

impl Problem {
    pub fn random(config: &GradCheckConfig) -> Result<Self> {
        let mut model = Model::new(config.model.clone(), config.seed)?;
        if let Some(m) = model.transformer.as_ref().and_then(|t| t.modulation.as_ref()) {
            model.params.get_mut(m.gamma).value = Tensor::scalar(config.gamma);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x6752_4144);
        let bc = &config.model.backbone;
        let template = Tensor::randn(&[3, bc.template_size, bc.template_size], 1.0, &mut rng);
        let search = Tensor::randn(&[3, bc.search_size, bc.search_size], 1.0, &mut rng);
        let geom = model.geometry();
        let (cx, cy) = geom.location_center(geom.center_index());
        let jitter = geom.stride;
        let gt = BBox::new(
            cx + rng.random_range(-jitter..jitter),
            cy + rng.random_range(-jitter..jitter),
            rng.random_range(3.0..5.0) * geom.stride,
            rng.random_range(3.0..5.0) * geom.stride,
        );
        let labels = model.labels(&gt, &LabelConfig::default(), rng.random())?;
        Ok(Self {
            model,
            template,
            search,
            labels,
            weights: LossWeights::default(),
        })
    }

    pub fn loss(&self) -> Result<f64> {
        let mut g = Graph::new();
        let t = self
            .model
            .pair_loss(&mut g, &self.template, &self.search, &self.labels, &self.weights)?;
        Ok(g.value(t.total).item())
    }

    /// Analytic gradients of every parameter, left in the parameter store.
    pub fn backward(&mut self) -> Result<f64> {
        self.model.params.zero_grad();
        let mut g = Graph::new();
        let t = self
            .model
            .pair_loss(&mut g, &self.template, &self.search, &self.labels, &self.weights)?;
        g.backward(t.total, &mut self.model.params)?;
        Ok(g.value(t.total).item())
    }

    fn loss_at(&mut self, id: ParamId, index: usize, value: f64) -> Result<f64> {
        let old = self.model.params.get(id).value.data()[index];
        self.model.params.get_mut(id).value.data_mut()[index] = value;
        let out = self.loss();
        self.model.params.get_mut(id).value.data_mut()[index] = old;
        out
    }
}

pub fn run(config: &GradCheckConfig) -> Result<GradCheckReport> {
    let mut problem = Problem::random(config)?;
    let loss = problem.backward()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x0C0_FFEE);
    let h = config.step;
    let ids: Vec<ParamId> = problem.model.params.ids().collect();
    let mut groups = Vec::with_capacity(ids.len());
    for id in ids {
        let name = problem.model.params.get(id).name.clone();
        let mut analytic = problem.model.params.get(id).grad.clone();
        if let Some((target, delta)) = &config.corrupt {
            if *target == name {
                analytic.data_mut().iter_mut().for_each(|g| *g += delta);
            }
        }
        let n = analytic.len();
        // Visit coordinates in a seeded order and stop once enough smooth
        // ones have been compared.
        let order = sample(&mut rng, n, n).into_vec();
        let want = config.samples_per_param.min(n);
        let (mut checked, mut skipped, mut max_rel, mut worst) = (0, 0, 0.0f64, None);
        for i in order {
            if checked == want {
                break;
            }
            let x = problem.model.params.get(id).value.data()[i];
            let fp = problem.loss_at(id, i, x + h)?;
            let fm = problem.loss_at(id, i, x - h)?;
            let forward = (fp - loss) / h;
            let backward = (loss - fm) / h;
            let numeric = (fp - fm) / (2.0 * h);
            let scale = numeric.abs().max(config.abs_floor);
            if (forward - backward).abs() > 1e-2 * scale.max(1e-3) {
                skipped += 1;
                continue;
            }
            let a = analytic.data()[i];
            let err = relative_error(a, numeric, config.abs_floor);
            if err >= max_rel {
                max_rel = err;
                worst = Some((i, a, numeric));
            }
            checked += 1;
        }
        groups.push(GroupResult {
            passed: checked > 0 && max_rel <= config.tolerance,
            name,
            checked,
            skipped,
            max_rel_err: max_rel,
            worst,
        });
    }
    Ok(GradCheckReport {
        seed: config.seed,
        tolerance: config.tolerance,
        loss,
        groups,
    })
}
