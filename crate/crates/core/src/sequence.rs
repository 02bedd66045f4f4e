//! Sequence directories: numbered PGM/PPM frames plus `groundtruth.txt`
//! with one `x,y,w,h` line (corner form, pixels) per frame.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::bbox::BBox;
use crate::error::{HiftError, Result};
use crate::image::Image;

pub const GROUNDTRUTH_FILE: &str = "groundtruth.txt";

#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub name: String,
    pub frames: Vec<Image>,
    /// One box per frame; may be shorter than `frames` for unlabeled data.
    pub groundtruth: Vec<BBox>,
}

/// Parses one `x,y,w,h` line. Commas, tabs and spaces are all accepted as separators.
pub fn parse_box_line(line: &str) -> Result<BBox> {
    let vals: Vec<f64> = line
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| HiftError::Format(format!("bad box line {line:?}: {e}")))?;
    if vals.len() != 4 {
        return Err(HiftError::Format(format!(
            "box line {line:?} has {} fields, expected 4",
            vals.len()
        )));
    }
    Ok(BBox::from_xywh(vals[0], vals[1], vals[2], vals[3]))
}

pub fn read_boxes(path: &Path) -> Result<Vec<BBox>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(parse_box_line)
        .collect()
}

pub fn format_box(b: &BBox) -> String {
    let [x, y, w, h] = b.to_xywh();
    format!("{x:.4},{y:.4},{w:.4},{h:.4}")
}

pub fn write_boxes(path: &Path, boxes: &[BBox]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for b in boxes {
        writeln!(f, "{}", format_box(b))?;
    }
    f.flush()?;
    Ok(())
}

/// Frame files in a directory, sorted by name.
pub fn frame_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .map(|e| matches!(e.to_ascii_lowercase().as_str(), "ppm" | "pgm" | "pnm"))
                .unwrap_or(false)
        })
        .collect();
    paths.sort();
    Ok(paths)
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let paths = frame_paths(dir)?;
        if paths.is_empty() {
            return Err(HiftError::Contract(format!("no PGM/PPM frames in {}", dir.display())));
        }
        let frames = paths.iter().map(|p| Image::load(p)).collect::<Result<Vec<_>>>()?;
        let gt_path = dir.join(GROUNDTRUTH_FILE);
        let groundtruth = if gt_path.exists() {
            read_boxes(&gt_path)?
        } else {
            Vec::new()
        };
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(Self {
            name,
            frames,
            groundtruth,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (i, f) in self.frames.iter().enumerate() {
            f.save_ppm(&dir.join(format!("{:08}.ppm", i + 1)))?;
        }
        write_boxes(&dir.join(GROUNDTRUTH_FILE), &self.groundtruth)
    }
}
