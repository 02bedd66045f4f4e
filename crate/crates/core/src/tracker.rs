//! Frame-by-frame tracking: template initialization, search cropping, score
//! fusion, box decoding and temporal size smoothing.

use crate::backbone::FeatureLevels;
use crate::bbox::BBox;
use crate::error::{HiftError, Result};
use crate::image::Image;
use crate::model::{Model, Prediction};

#[derive(Clone, Debug, PartialEq)]
pub struct TrackerConfig {
    /// Weight of the cosine window in the fused score.
    pub window_influence: f64,
    /// Exponential smoothing rate applied to the box size.
    pub size_lr: f64,
    /// Context margin around the target, as a fraction of `w + h`.
    pub context: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            window_influence: 0.35,
            size_lr: 0.3,
            context: 0.5,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.window_influence) || !unit(self.size_lr) || self.context.is_nan() || self.context < 0.0 {
            return Err(HiftError::Config(format!(
                "tracker settings out of range: window_influence {}, size_lr {}, context {}",
                self.window_influence, self.size_lr, self.context
            )));
        }
        Ok(())
    }
}

/// Side of the square template region (frame pixels) for a target of size `w x h`.
pub fn template_side(w: f64, h: f64, context: f64) -> f64 {
    let p = context * (w + h);
    ((w + p) * (h + p)).sqrt()
}

/// A square frame region resampled to `out x out` network pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CropWindow {
    pub cx: f64,
    pub cy: f64,
    /// Side in frame pixels.
    pub side: f64,
    /// Side in crop pixels.
    pub out: usize,
}

impl CropWindow {
    /// Crop pixels per frame pixel.
    pub fn scale(&self) -> f64 {
        self.out as f64 / self.side
    }

    pub fn frame_to_crop(&self, b: &BBox) -> BBox {
        let s = self.scale();
        let half = self.out as f64 / 2.0;
        BBox::new(
            (b.cx - self.cx) * s + half,
            (b.cy - self.cy) * s + half,
            b.w * s,
            b.h * s,
        )
    }

    pub fn crop_to_frame(&self, b: &BBox) -> BBox {
        let s = self.scale();
        let half = self.out as f64 / 2.0;
        BBox::new(
            (b.cx - half) / s + self.cx,
            (b.cy - half) / s + self.cy,
            b.w / s,
            b.h / s,
        )
    }

    pub fn sample(&self, frame: &Image) -> crate::tensor::Tensor {
        frame.crop_resize(self.cx, self.cy, self.side, self.out)
    }
}

/// Template and search windows for a target estimate.
pub fn crop_windows(model: &Model, target: &BBox, context: f64) -> (CropWindow, CropWindow) {
    let bc = &model.config.backbone;
    let sz = template_side(target.w, target.h, context);
    let template = CropWindow {
        cx: target.cx,
        cy: target.cy,
        side: sz,
        out: bc.template_size,
    };
    let search = CropWindow {
        side: sz * bc.search_size as f64 / bc.template_size as f64,
        out: bc.search_size,
        ..template
    };
    (template, search)
}

/// Separable raised-cosine window, row-major over a `width x height` map.
/// Odd sides peak at exactly 1 in the middle; all values lie in `(0, 1]`.
pub fn cosine_window(width: usize, height: usize) -> Vec<f64> {
    let hann = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * (i + 1) as f64 / (n + 1) as f64).cos())
            .collect()
    };
    let (wx, wy) = (hann(width), hann(height));
    wy.iter().flat_map(|y| wx.iter().map(move |x| x * y)).collect()
}

/// `(1 - w) * confidence + w * window` per location.
pub fn fuse_scores(prediction: &Prediction, window: &[f64], influence: f64) -> Vec<f64> {
    prediction
        .confidence()
        .iter()
        .zip(window)
        .map(|(c, win)| (1.0 - influence) * c + influence * win)
        .collect()
}

/// Index of the first maximal value.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Shrinks and shifts `b` so it lies inside a `width x height` frame with
/// sides of at least one pixel.
pub fn clamp_to_frame(b: &BBox, width: usize, height: usize) -> BBox {
    let (fw, fh) = (width as f64, height as f64);
    let w = b.w.clamp(1.0, fw);
    let h = b.h.clamp(1.0, fh);
    let cx = if b.cx.is_finite() { b.cx } else { fw / 2.0 };
    let cy = if b.cy.is_finite() { b.cy } else { fh / 2.0 };
    BBox::new(cx.clamp(w / 2.0, fw - w / 2.0), cy.clamp(h / 2.0, fh - h / 2.0), w, h)
}

#[derive(Clone, Debug)]
pub struct TrackState {
    pub template_features: FeatureLevels,
    pub current: BBox,
    pub window: Vec<f64>,
    pub config: TrackerConfig,
    /// Fused score map of the latest update, row-major.
    pub last_scores: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Tracker<'m> {
    pub model: &'m Model,
    pub config: TrackerConfig,
}

impl<'m> Tracker<'m> {
    pub fn new(model: &'m Model, config: TrackerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { model, config })
    }

    pub fn init(&self, frame: &Image, gt: &BBox) -> Result<TrackState> {
        let (fw, fh) = (frame.width as f64, frame.height as f64);
        if !gt.is_valid() || !(0.0..=fw).contains(&gt.cx) || !(0.0..=fh).contains(&gt.cy) {
            return Err(HiftError::Contract(format!(
                "initial box {gt} is not inside the {}x{} frame",
                frame.width, frame.height
            )));
        }
        let (template, _) = crop_windows(self.model, gt, self.config.context);
        let template_features = self.model.template_features(&template.sample(frame))?;
        let geom = self.model.geometry();
        Ok(TrackState {
            template_features,
            current: *gt,
            window: cosine_window(geom.width, geom.height),
            config: self.config.clone(),
            last_scores: Vec::new(),
        })
    }

    pub fn update(&self, state: &mut TrackState, frame: &Image) -> Result<BBox> {
        let (_, search) = crop_windows(self.model, &state.current, state.config.context);
        let prediction = self.model.predict(&state.template_features, &search.sample(frame))?;
        let scores = fuse_scores(&prediction, &state.window, state.config.window_influence);
        let best = argmax(&scores);
        let target = search.crop_to_frame(&prediction.decoded_box(best));
        let lr = state.config.size_lr;
        let prev = state.current;
        let smoothed = BBox::new(
            target.cx,
            target.cy,
            (1.0 - lr) * prev.w + lr * target.w,
            (1.0 - lr) * prev.h + lr * target.h,
        );
        let next = clamp_to_frame(&smoothed, frame.width, frame.height);
        state.current = next;
        state.last_scores = scores;
        Ok(next)
    }

    /// One-pass tracking from the first frame's box. The first output is `init_box`.
    pub fn run(
        &self,
        frames: &[Image],
        init_box: &BBox,
        mut on_scores: impl FnMut(usize, &[f64]),
    ) -> Result<Vec<BBox>> {
        let first = frames
            .first()
            .ok_or_else(|| HiftError::Contract("sequence has no frames".into()))?;
        let mut state = self.init(first, init_box)?;
        let mut out = vec![*init_box];
        for (i, frame) in frames.iter().enumerate().skip(1) {
            out.push(self.update(&mut state, frame)?);
            on_scores(i, &state.last_scores);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_peaks_at_center() {
        let w = cosine_window(17, 17);
        let c = 8 * 17 + 8;
        assert_eq!(w[c], 1.0);
        assert_eq!(argmax(&w), c);
        assert!(w.iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn crop_mapping_round_trips() {
        let win = CropWindow {
            cx: 50.0,
            cy: 40.0,
            side: 96.0,
            out: 128,
        };
        let b = BBox::new(57.0, 31.0, 20.0, 12.0);
        let c = win.frame_to_crop(&b);
        assert!((c.cx - (64.0 + 7.0 * 128.0 / 96.0)).abs() < 1e-12);
        let back = win.crop_to_frame(&c);
        assert!((back.cx - b.cx).abs() < 1e-12 && (back.w - b.w).abs() < 1e-12);
    }

    #[test]
    fn clamp_keeps_box_inside() {
        let b = clamp_to_frame(&BBox::new(-10.0, 500.0, 400.0, 0.0), 160, 120);
        assert_eq!(b, BBox::new(80.0, 119.5, 160.0, 1.0));
    }

    #[test]
    fn argmax_takes_first_tie() {
        assert_eq!(argmax(&[0.0, 2.0, 2.0, 1.0]), 1);
    }

    #[test]
    fn template_side_of_square() {
        assert!((template_side(24.0, 24.0, 0.5) - 48.0).abs() < 1e-12);
    }
}
