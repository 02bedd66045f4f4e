//! Per-location label computation, one location at a time.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ring {
    Positive,
    Ignore,
    Negative,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Location {
    pub in_box: bool,
    pub ring: Ring,
    pub ltrb: [f64; 4],
}

#[derive(Clone, Copy, Debug)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    pub stride: f64,
    pub offset: f64,
}

/// Labels for every location. `gt` is `(cx, cy, w, h)`. With `rectangle`
/// set, the ring label is in-box membership.
pub fn brute_force(
    gt: (f64, f64, f64, f64),
    grid: Grid,
    r_pos_steps: f64,
    r_ign_steps: f64,
    rectangle: bool,
) -> Vec<Location> {
    let (cx, cy, w, h) = gt;
    let left = cx - w / 2.0;
    let right = cx + w / 2.0;
    let top = cy - h / 2.0;
    let bottom = cy + h / 2.0;
    let short = if w < h { w } else { h };
    let mut r_pos = r_pos_steps * grid.stride;
    if r_pos > short / 2.0 {
        r_pos = short / 2.0;
    }
    let mut r_ign = r_ign_steps * grid.stride;
    if r_ign < r_pos {
        r_ign = r_pos;
    }
    let mut out = Vec::new();
    for y in 0..grid.height {
        for x in 0..grid.width {
            let px = grid.offset + grid.stride * (x as f64 + 0.5);
            let py = grid.offset + grid.stride * (y as f64 + 0.5);
            let in_box = px >= left && px <= right && py >= top && py <= bottom;
            let dist = ((px - cx) * (px - cx) + (py - cy) * (py - cy)).sqrt();
            let ring = if rectangle {
                if in_box {
                    Ring::Positive
                } else {
                    Ring::Negative
                }
            } else if dist <= r_pos {
                Ring::Positive
            } else if dist <= r_ign {
                Ring::Ignore
            } else {
                Ring::Negative
            };
            out.push(Location {
                in_box,
                ring,
                ltrb: [px - left, py - top, right - px, bottom - py],
            });
        }
    }
    out
}
