//! Run configuration: INI sections of `key = value` pairs layered over
//! built-in defaults.
//!
//! Every key has a default, so an empty file is a valid configuration.
//! Unknown sections or keys are rejected. [`RunConfig::to_ini`] writes the
//! complete effective configuration and parses back to an identical value.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use hift_core::backbone::BackboneConfig;
use hift_core::gradcheck::GradCheckConfig;
use hift_core::labels::LabelMode;
use hift_core::model::ModelConfig;
use hift_core::synth::Difficulty;
use hift_core::tracker::TrackerConfig;
use hift_core::train::TrainConfig;
use hift_core::transformer::{TransformerConfig, Variant};
use ini::Ini;

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSettings {
    pub train_sequences: usize,
    pub train_seed: u64,
    pub train_difficulty: Difficulty,
    pub eval_sequences: usize,
    pub eval_seed: u64,
    pub eval_difficulty: Difficulty,
    pub frames: usize,
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self {
            train_sequences: 20,
            train_seed: 1000,
            train_difficulty: Difficulty::Training,
            eval_sequences: 10,
            eval_seed: 9000,
            eval_difficulty: Difficulty::Easy,
            frames: 60,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckSettings {
    pub seeds: u64,
    pub step: f64,
    pub tolerance: f64,
    pub abs_floor: f64,
    pub samples_per_param: usize,
    pub gamma: f64,
}

impl Default for GradCheckSettings {
    fn default() -> Self {
        let d = GradCheckConfig::default();
        Self {
            seeds: 5,
            step: d.step,
            tolerance: d.tolerance,
            abs_floor: d.abs_floor,
            samples_per_param: d.samples_per_param,
            gamma: d.gamma,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblateSettings {
    /// Training steps per variant.
    pub steps: usize,
}

impl Default for AblateSettings {
    fn default() -> Self {
        Self { steps: 600 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub tracker: TrackerConfig,
    pub synth: SynthSettings,
    pub gradcheck: GradCheckSettings,
    pub ablate: AblateSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let tracker = TrackerConfig {
            context: train.context,
            ..TrackerConfig::default()
        };
        Self {
            seed: 0,
            model: ModelConfig::default(),
            train,
            tracker,
            synth: SynthSettings::default(),
            gradcheck: GradCheckSettings::default(),
            ablate: AblateSettings::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> CliResult<T>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| CliError::Config(format!("{key}: cannot parse {value:?}: {e}")))
}

fn parse_list<const N: usize>(key: &str, value: &str) -> CliResult<[usize; N]> {
    let items: Vec<usize> = value.split(',').map(|s| parse(key, s)).collect::<CliResult<_>>()?;
    items.try_into().map_err(|v: Vec<usize>| {
        CliError::Config(format!("{key}: expected {N} comma-separated values, got {}", v.len()))
    })
}

fn list(values: &[usize]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_variant(key: &str, value: &str) -> CliResult<Variant> {
    value.parse().map_err(|e| CliError::Config(format!("{key}: {e}")))
}

fn parse_mode(key: &str, value: &str) -> CliResult<LabelMode> {
    value.parse().map_err(|e| CliError::Config(format!("{key}: {e}")))
}

fn parse_difficulty(key: &str, value: &str) -> CliResult<Difficulty> {
    match value.trim().to_ascii_lowercase().as_str() {
        "easy" => Ok(Difficulty::Easy),
        "training" => Ok(Difficulty::Training),
        other => Err(CliError::Config(format!(
            "{key}: unknown difficulty {other:?} (expected easy or training)"
        ))),
    }
}

fn difficulty_name(d: Difficulty) -> &'static str {
    match d {
        Difficulty::Easy => "easy",
        Difficulty::Training => "training",
    }
}

fn variant_name(v: Variant) -> &'static str {
    match v {
        Variant::Hft => "hft",
        Variant::Ft => "ft",
        Variant::Ot => "ot",
        Variant::None => "none",
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_ini_str(&text)
    }

    pub fn from_ini_str(text: &str) -> CliResult<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| CliError::Config(format!("malformed config: {e}")))?;
        let mut cfg = Self::default();
        for (section, props) in ini.iter() {
            for (key, value) in props.iter() {
                cfg.set(section.unwrap_or(""), key, value)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one `section.key = value` setting.
    pub fn set(&mut self, section: &str, key: &str, value: &str) -> CliResult<()> {
        let name = format!("{section}.{key}");
        let k = name.as_str();
        let bb: &mut BackboneConfig = &mut self.model.backbone;
        let tf: &mut TransformerConfig = &mut self.model.transformer;
        let tr = &mut self.train;
        let tk = &mut self.tracker;
        let sy = &mut self.synth;
        let gc = &mut self.gradcheck;
        match k {
            "run.seed" => self.seed = parse(k, value)?,

            "backbone.stem_channels" => bb.stem_channels = parse_list(k, value)?,
            "backbone.channels_per_level" => bb.channels_per_level = parse_list(k, value)?,
            "backbone.kernel_sizes" => bb.kernel_sizes = parse_list(k, value)?,
            "backbone.strides" => bb.strides = parse_list(k, value)?,
            "backbone.template_size" => bb.template_size = parse(k, value)?,
            "backbone.search_size" => bb.search_size = parse(k, value)?,

            "heads.kernel" => self.model.head_kernel = parse(k, value)?,

            "transformer.variant" => tf.variant = parse_variant(k, value)?,
            "transformer.channels" => tf.channels = parse(k, value)?,
            "transformer.heads" => tf.heads = parse(k, value)?,
            "transformer.ffn_hidden" => tf.ffn_hidden = parse(k, value)?,
            "transformer.decoder_layers" => tf.decoder_layers = parse(k, value)?,
            "transformer.decoder_pe" => tf.decoder_pe = parse(k, value)?,
            "transformer.pe_init_std" => tf.pe_init_std = parse(k, value)?,

            "label.mode" => tr.labels.mode = parse_mode(k, value)?,
            "label.r_pos_strides" => tr.labels.r_pos_strides = parse(k, value)?,
            "label.r_ign_strides" => tr.labels.r_ign_strides = parse(k, value)?,
            "label.neg_cap_ratio" => tr.labels.neg_cap_ratio = parse(k, value)?,
            "label.neg_cap_floor" => tr.labels.neg_cap_floor = parse(k, value)?,

            "loss.lambda1" => tr.weights.lambda1 = parse(k, value)?,
            "loss.lambda2" => tr.weights.lambda2 = parse(k, value)?,
            "loss.lambda3" => tr.weights.lambda3 = parse(k, value)?,

            "train.steps" => tr.steps = parse(k, value)?,
            "train.batch_size" => tr.batch_size = parse(k, value)?,
            "train.lr" => tr.lr = parse(k, value)?,
            "train.lr_end" => tr.lr_end = parse(k, value)?,
            "train.momentum" => tr.momentum = parse(k, value)?,
            "train.weight_decay" => tr.weight_decay = parse(k, value)?,
            "train.grad_clip" => tr.grad_clip = parse(k, value)?,
            "train.max_gap" => tr.max_gap = parse(k, value)?,
            "train.max_shift" => tr.max_shift = parse(k, value)?,
            "train.scale_jitter" => tr.scale_jitter = parse(k, value)?,

            "tracker.window_influence" => tk.window_influence = parse(k, value)?,
            "tracker.size_lr" => tk.size_lr = parse(k, value)?,
            "tracker.context" => {
                tk.context = parse(k, value)?;
                tr.context = tk.context;
            }

            "synth.train_sequences" => sy.train_sequences = parse(k, value)?,
            "synth.train_seed" => sy.train_seed = parse(k, value)?,
            "synth.train_difficulty" => sy.train_difficulty = parse_difficulty(k, value)?,
            "synth.eval_sequences" => sy.eval_sequences = parse(k, value)?,
            "synth.eval_seed" => sy.eval_seed = parse(k, value)?,
            "synth.eval_difficulty" => sy.eval_difficulty = parse_difficulty(k, value)?,
            "synth.frames" => sy.frames = parse(k, value)?,

            "gradcheck.seeds" => gc.seeds = parse(k, value)?,
            "gradcheck.step" => gc.step = parse(k, value)?,
            "gradcheck.tolerance" => gc.tolerance = parse(k, value)?,
            "gradcheck.abs_floor" => gc.abs_floor = parse(k, value)?,
            "gradcheck.samples_per_param" => gc.samples_per_param = parse(k, value)?,
            "gradcheck.gamma" => gc.gamma = parse(k, value)?,

            "ablate.steps" => self.ablate.steps = parse(k, value)?,

            _ => return Err(CliError::Config(format!("unknown configuration key {name:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> CliResult<()> {
        self.model.validate()?;
        self.tracker.validate()?;
        self.train.validate()?;
        let s = &self.synth;
        if s.train_sequences == 0 || s.eval_sequences == 0 || s.frames < 2 {
            return Err(CliError::Config(
                "synth: sequence counts must be positive and frames at least 2".into(),
            ));
        }
        let g = &self.gradcheck;
        let positive = |v: f64| v > 0.0;
        if g.seeds == 0
            || !positive(g.step)
            || !positive(g.tolerance)
            || !positive(g.abs_floor)
            || g.samples_per_param == 0
        {
            return Err(CliError::Config(
                "gradcheck: seeds, step, tolerance, abs_floor and samples_per_param must be positive".into(),
            ));
        }
        if self.ablate.steps == 0 {
            return Err(CliError::Config("ablate.steps must be positive".into()));
        }
        Ok(())
    }

    /// Training settings with the run seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    /// Gradient-check settings for one seed. The model is the tiny
    /// gradient-check model with this run's transformer variant.
    pub fn gradcheck_config(&self, seed: u64) -> GradCheckConfig {
        let mut model = ModelConfig::tiny();
        model.transformer.variant = self.model.transformer.variant;
        model.transformer.decoder_pe = self.model.transformer.decoder_pe;
        GradCheckConfig {
            model,
            seed,
            step: self.gradcheck.step,
            tolerance: self.gradcheck.tolerance,
            abs_floor: self.gradcheck.abs_floor,
            samples_per_param: self.gradcheck.samples_per_param,
            gamma: self.gradcheck.gamma,
            corrupt: None,
        }
    }

    /// The complete effective configuration in INI form.
    pub fn to_ini(&self) -> String {
        let bb = &self.model.backbone;
        let tf = &self.model.transformer;
        let lb = &self.train.labels;
        let lw = &self.train.weights;
        let tr = &self.train;
        let tk = &self.tracker;
        let sy = &self.synth;
        let gc = &self.gradcheck;
        let mut s = String::new();
        let mut section = |name: &str, items: &[(&str, String)]| {
            let _ = writeln!(s, "[{name}]");
            for (k, v) in items {
                let _ = writeln!(s, "{k} = {v}");
            }
            s.push('\n');
        };
        section("run", &[("seed", self.seed.to_string())]);
        section(
            "backbone",
            &[
                ("stem_channels", list(&bb.stem_channels)),
                ("channels_per_level", list(&bb.channels_per_level)),
                ("kernel_sizes", list(&bb.kernel_sizes)),
                ("strides", list(&bb.strides)),
                ("template_size", bb.template_size.to_string()),
                ("search_size", bb.search_size.to_string()),
            ],
        );
        section(
            "transformer",
            &[
                ("variant", variant_name(tf.variant).to_string()),
                ("channels", tf.channels.to_string()),
                ("heads", tf.heads.to_string()),
                ("ffn_hidden", tf.ffn_hidden.to_string()),
                ("decoder_layers", tf.decoder_layers.to_string()),
                ("decoder_pe", tf.decoder_pe.to_string()),
                ("pe_init_std", tf.pe_init_std.to_string()),
            ],
        );
        section("heads", &[("kernel", self.model.head_kernel.to_string())]);
        section(
            "label",
            &[
                ("mode", lb.mode.to_string()),
                ("r_pos_strides", lb.r_pos_strides.to_string()),
                ("r_ign_strides", lb.r_ign_strides.to_string()),
                ("neg_cap_ratio", lb.neg_cap_ratio.to_string()),
                ("neg_cap_floor", lb.neg_cap_floor.to_string()),
            ],
        );
        section(
            "loss",
            &[
                ("lambda1", lw.lambda1.to_string()),
                ("lambda2", lw.lambda2.to_string()),
                ("lambda3", lw.lambda3.to_string()),
            ],
        );
        section(
            "train",
            &[
                ("steps", tr.steps.to_string()),
                ("batch_size", tr.batch_size.to_string()),
                ("lr", tr.lr.to_string()),
                ("lr_end", tr.lr_end.to_string()),
                ("momentum", tr.momentum.to_string()),
                ("weight_decay", tr.weight_decay.to_string()),
                ("grad_clip", tr.grad_clip.to_string()),
                ("max_gap", tr.max_gap.to_string()),
                ("max_shift", tr.max_shift.to_string()),
                ("scale_jitter", tr.scale_jitter.to_string()),
            ],
        );
        section(
            "tracker",
            &[
                ("window_influence", tk.window_influence.to_string()),
                ("size_lr", tk.size_lr.to_string()),
                ("context", tk.context.to_string()),
            ],
        );
        section(
            "synth",
            &[
                ("train_sequences", sy.train_sequences.to_string()),
                ("train_seed", sy.train_seed.to_string()),
                ("train_difficulty", difficulty_name(sy.train_difficulty).to_string()),
                ("eval_sequences", sy.eval_sequences.to_string()),
                ("eval_seed", sy.eval_seed.to_string()),
                ("eval_difficulty", difficulty_name(sy.eval_difficulty).to_string()),
                ("frames", sy.frames.to_string()),
            ],
        );
        section(
            "gradcheck",
            &[
                ("seeds", gc.seeds.to_string()),
                ("step", gc.step.to_string()),
                ("tolerance", gc.tolerance.to_string()),
                ("abs_floor", gc.abs_floor.to_string()),
                ("samples_per_param", gc.samples_per_param.to_string()),
                ("gamma", gc.gamma.to_string()),
            ],
        );
        section("ablate", &[("steps", self.ablate.steps.to_string())]);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::from_ini_str("").unwrap(), RunConfig::default());
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = RunConfig {
            seed: 17,
            ..RunConfig::default()
        };
        cfg.train.lr = 0.1 + 0.2;
        cfg.model.transformer.variant = Variant::Ot;
        cfg.train.labels.mode = LabelMode::Rectangle;
        cfg.synth.eval_difficulty = Difficulty::Training;
        cfg.model.backbone.stem_channels = [3, 5];
        let back = RunConfig::from_ini_str(&cfg.to_ini()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_ini(), cfg.to_ini());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in ["[train]\nstepz = 3\n", "[nope]\nx = 1\n", "seed = 3\n"] {
            let err = RunConfig::from_ini_str(text).unwrap_err();
            assert!(matches!(err, CliError::Config(_)), "{text}: {err}");
        }
    }

    #[test]
    fn bad_values_are_rejected() {
        for text in [
            "[train]\nsteps = many\n",
            "[backbone]\nstrides = 2,2\n",
            "[transformer]\nvariant = bert\n",
            "[tracker]\nsize_lr = 2\n",
            "[transformer]\nheads = 5\n",
        ] {
            assert!(RunConfig::from_ini_str(text).is_err(), "{text}");
        }
    }

    #[test]
    fn context_is_shared_by_training_and_tracking() {
        let cfg = RunConfig::from_ini_str("[tracker]\ncontext = 0.25\n").unwrap();
        assert_eq!(cfg.train.context, 0.25);
        assert_eq!(cfg.tracker.context, 0.25);
    }
}
