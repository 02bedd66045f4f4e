//! Synthetic single-target sequences: a patterned rectangle moving over a
//! static textured background, rendered with exact area coverage so the
//! ground truth matches the drawn target to sub-pixel precision.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bbox::BBox;
use crate::error::{HiftError, Result};
use crate::image::Image;
use crate::sequence::Sequence;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Pattern {
    Solid,
    Stripes(u32),
    Checker(u32),
    Ring,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Appearance {
    pub base: [f64; 3],
    pub accent: [f64; 3],
    pub pattern: Pattern,
}

impl Appearance {
    /// Color at normalized box coordinates `(u, v)` in `[0, 1]^2`.
    fn color(&self, u: f64, v: f64) -> [f64; 3] {
        let accent = match self.pattern {
            Pattern::Solid => false,
            Pattern::Stripes(n) => ((u * n as f64).floor() as i64) % 2 == 1,
            Pattern::Checker(n) => (((u * n as f64).floor() + (v * n as f64).floor()) as i64) % 2 == 1,
            Pattern::Ring => {
                let d = (u - 0.5).hypot(v - 0.5);
                (0.2..0.35).contains(&d)
            }
        };
        if accent {
            self.accent
        } else {
            self.base
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub canvas_width: usize,
    pub canvas_height: usize,
    pub frames: usize,
    pub target_w: f64,
    pub target_h: f64,
    /// Initial target center; drawn at random inside the canvas when `None`.
    pub start: Option<(f64, f64)>,
    /// Pixels per frame; reflected at the canvas borders.
    pub velocity: (f64, f64),
    /// Uniform per-frame positional jitter amplitude in pixels.
    pub jitter: f64,
    /// Multiplicative size change per frame.
    pub scale_drift: f64,
    /// `(first_frame, length)` intervals during which an occluder covers half the target.
    pub occlusions: Vec<(usize, usize)>,
    /// Amplitude of the static background texture.
    pub background_texture: f64,
    /// Per-frame sensor noise amplitude.
    pub noise: f64,
    /// Target appearance; drawn from the seed when `None`.
    pub appearance: Option<Appearance>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            canvas_width: 160,
            canvas_height: 160,
            frames: 60,
            target_w: 24.0,
            target_h: 24.0,
            start: None,
            velocity: (0.0, 0.0),
            jitter: 0.0,
            scale_drift: 0.0,
            occlusions: Vec::new(),
            background_texture: 24.0,
            noise: 4.0,
            appearance: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Difficulty {
    /// Slow motion, no scale change, no occlusion.
    Easy,
    /// Faster motion, jitter, scale drift and an occasional occlusion.
    Training,
}

impl SynthConfig {
    /// Draws motion, size and appearance parameters from `seed`.
    pub fn randomized(seed: u64, difficulty: Difficulty, frames: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_CAFE);
        let size = |rng: &mut ChaCha8Rng| rng.random_range(18.0..30.0f64).round();
        let (w, h) = (size(&mut rng), size(&mut rng));
        let mut cfg = Self {
            frames,
            target_w: w,
            target_h: h,
            seed,
            ..Self::default()
        };
        match difficulty {
            Difficulty::Easy => {
                cfg.velocity = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                cfg.jitter = 0.5;
            }
            Difficulty::Training => {
                cfg.velocity = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
                cfg.jitter = 1.5;
                cfg.scale_drift = rng.random_range(-0.004..0.004);
                if rng.random_bool(0.3) {
                    let start = rng.random_range(frames / 4..frames / 2 + 1);
                    cfg.occlusions.push((start, frames / 10 + 1));
                }
            }
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.canvas_width == 0 || self.canvas_height == 0 || self.frames == 0 {
            return Err(HiftError::Config("canvas and frame count must be positive".into()));
        }
        if !(self.target_w > 0.0 && self.target_h > 0.0) {
            return Err(HiftError::Config("target size must be positive".into()));
        }
        if self.target_w > self.canvas_width as f64 || self.target_h > self.canvas_height as f64 {
            return Err(HiftError::Config(format!(
                "target {}x{} larger than canvas {}x{}",
                self.target_w, self.target_h, self.canvas_width, self.canvas_height
            )));
        }
        Ok(())
    }
}

fn random_appearance(rng: &mut ChaCha8Rng) -> Appearance {
    let vivid = |rng: &mut ChaCha8Rng| -> [f64; 3] {
        let mut c = [0.0; 3];
        let hot = rng.random_range(0..3);
        for (i, v) in c.iter_mut().enumerate() {
            *v = if i == hot {
                rng.random_range(200.0..255.0)
            } else {
                rng.random_range(0.0..120.0)
            };
        }
        c
    };
    let base = vivid(rng);
    let accent = base.map(|v| 255.0 - v);
    let pattern = match rng.random_range(0..4) {
        0 => Pattern::Solid,
        1 => Pattern::Stripes(rng.random_range(2..5)),
        2 => Pattern::Checker(rng.random_range(2..4)),
        _ => Pattern::Ring,
    };
    Appearance { base, accent, pattern }
}

/// Overlap of pixel span `[p, p+1]` with `[lo, hi]`.
fn coverage(p: usize, lo: f64, hi: f64) -> f64 {
    let p = p as f64;
    ((p + 1.0).min(hi) - p.max(lo)).max(0.0)
}

fn paint_box(canvas: &mut [f64], width: usize, height: usize, b: &BBox, color: impl Fn(f64, f64) -> [f64; 3]) {
    let [x1, y1, x2, y2] = b.corners();
    let xs = x1.floor().max(0.0) as usize..(x2.ceil() as usize).min(width);
    let ys = y1.floor().max(0.0) as usize..(y2.ceil() as usize).min(height);
    for y in ys {
        let cy = coverage(y, y1, y2);
        for x in xs.clone() {
            let cov = coverage(x, x1, x2) * cy;
            if cov <= 0.0 {
                continue;
            }
            let u = ((x as f64 + 0.5 - x1) / b.w).clamp(0.0, 1.0);
            let v = ((y as f64 + 0.5 - y1) / b.h).clamp(0.0, 1.0);
            let fg = color(u, v);
            let i = (y * width + x) * 3;
            for c in 0..3 {
                canvas[i + c] = canvas[i + c] * (1.0 - cov) + fg[c] * cov;
            }
        }
    }
}

/// Renders a sequence; identical configs give bit-identical frames.
pub fn gen_sequence(cfg: &SynthConfig) -> Result<Sequence> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (cw, ch) = (cfg.canvas_width, cfg.canvas_height);
    let (cwf, chf) = (cw as f64, ch as f64);

    let bg_base = [rng.random_range(90.0..150.0); 3].map(|v: f64| v + rng.random_range(-15.0..15.0));
    let mut background = vec![0.0; cw * ch * 3];
    for px in background.chunks_mut(3) {
        let t = rng.random_range(-1.0..1.0) * cfg.background_texture;
        for c in 0..3 {
            px[c] = bg_base[c] + t;
        }
    }
    let appearance = cfg.appearance.unwrap_or_else(|| random_appearance(&mut rng));
    let occluder = bg_base.map(|v| v * 0.6);

    let (mut w, mut h) = (cfg.target_w, cfg.target_h);
    let (mut cx, mut cy) = cfg.start.unwrap_or_else(|| {
        (
            rng.random_range(w / 2.0 + 0.25 * cwf..0.75 * cwf - w / 2.0),
            rng.random_range(h / 2.0 + 0.25 * chf..0.75 * chf - h / 2.0),
        )
    });
    let (mut vx, mut vy) = cfg.velocity;

    let mut frames = Vec::with_capacity(cfg.frames);
    let mut gt = Vec::with_capacity(cfg.frames);
    for t in 0..cfg.frames {
        if t > 0 {
            let grow = 1.0 + cfg.scale_drift;
            w = (w * grow).clamp(4.0, cwf / 2.0);
            h = (h * grow).clamp(4.0, chf / 2.0);
            cx += vx;
            cy += vy;
            if cx - w / 2.0 < 0.0 || cx + w / 2.0 > cwf {
                vx = -vx;
                cx = cx.clamp(w / 2.0, cwf - w / 2.0);
            }
            if cy - h / 2.0 < 0.0 || cy + h / 2.0 > chf {
                vy = -vy;
                cy = cy.clamp(h / 2.0, chf - h / 2.0);
            }
        }
        let (jx, jy) = if cfg.jitter > 0.0 {
            (
                rng.random_range(-cfg.jitter..=cfg.jitter),
                rng.random_range(-cfg.jitter..=cfg.jitter),
            )
        } else {
            (0.0, 0.0)
        };
        let bx = (cx + jx).clamp(w / 2.0, cwf - w / 2.0);
        let by = (cy + jy).clamp(h / 2.0, chf - h / 2.0);
        let target = BBox::new(bx, by, w, h);

        let mut canvas = background.clone();
        paint_box(&mut canvas, cw, ch, &target, |u, v| appearance.color(u, v));
        if cfg.occlusions.iter().any(|&(s, len)| t >= s && t < s + len) {
            let occ = BBox::new(bx - w / 4.0, by, w / 2.0 + 2.0, h + 4.0);
            paint_box(&mut canvas, cw, ch, &occ, |_, _| occluder);
        }
        let data = canvas
            .iter()
            .map(|&v| {
                let n = if cfg.noise > 0.0 {
                    rng.random_range(-cfg.noise..=cfg.noise)
                } else {
                    0.0
                };
                (v + n).round().clamp(0.0, 255.0) as u8
            })
            .collect();
        frames.push(Image::new(cw, ch, data)?);
        gt.push(target);
    }
    Ok(Sequence {
        name: format!("synth-{}", cfg.seed),
        frames,
        groundtruth: gt,
    })
}

/// `count` randomized sequences with seeds `base_seed, base_seed + 1, ...`.
pub fn gen_suite(count: usize, base_seed: u64, difficulty: Difficulty, frames: usize) -> Result<Vec<Sequence>> {
    (0..count as u64)
        .map(|i| gen_sequence(&SynthConfig::randomized(base_seed.wrapping_add(i), difficulty, frames)))
        .collect()
}
