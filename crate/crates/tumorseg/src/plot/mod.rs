//! Training-curve charts rendered straight to RGB rasters.
//!
//! Each experiment gets two files: `curves_loss.png` and `curves_acc.png`,
//! each with a train and a validation series over epochs.

mod font;

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use tumorseg_core::trainer::TrainingHistory;

use crate::error::{Error, Result};
use crate::history::read_history;

pub const TRAIN_COLOR: Rgb<u8> = Rgb([31, 119, 180]);
pub const VAL_COLOR: Rgb<u8> = Rgb([255, 127, 14]);

const WIDTH: u32 = 720;
const HEIGHT: u32 = 450;
const LEFT: i64 = 80;
const RIGHT: i64 = 24;
const TOP: i64 = 44;
const BOTTOM: i64 = 56;

const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
const BLACK: Rgb<u8> = Rgb([0, 0, 0]);
const GRID: Rgb<u8> = Rgb([225, 225, 225]);

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub color: Rgb<u8>,
    pub values: Vec<f64>,
}

/// Everything drawn on one chart.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

/// Loss and accuracy chart data, in that order.
pub fn plot_data(history: &TrainingHistory, title: &str) -> [PlotData; 2] {
    let pick = |f: fn(&tumorseg_core::trainer::EpochRecord) -> f64| -> Vec<f64> {
        history.records.iter().map(f).collect()
    };
    let chart = |what: &str, train: Vec<f64>, val: Vec<f64>| PlotData {
        title: format!("{title}: {what}"),
        x_label: "Epoch".into(),
        y_label: what.into(),
        series: vec![
            Series {
                label: "train".into(),
                color: TRAIN_COLOR,
                values: train,
            },
            Series {
                label: "validation".into(),
                color: VAL_COLOR,
                values: val,
            },
        ],
    };
    [
        chart("Loss", pick(|r| r.train_loss), pick(|r| r.val_loss)),
        chart("Accuracy", pick(|r| r.train_accuracy), pick(|r| r.val_accuracy)),
    ]
}

/// Roughly `target` tick positions on a 1/2/5 grid covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64, target: usize) -> (Vec<f64>, usize) {
    let raw = (hi - lo) / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    ((first..=last).map(|i| i as f64 * step).collect(), decimals)
}

fn y_range(data: &PlotData) -> (f64, f64) {
    let (lo, hi) = data
        .series
        .iter()
        .flat_map(|s| s.values.iter().copied())
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = if hi - lo < 1e-12 {
        lo.abs().max(1.0) * 0.05
    } else {
        (hi - lo) * 0.05
    };
    (lo - pad, hi + pad)
}

struct Canvas {
    img: RgbImage,
}

impl Canvas {
    fn put(&mut self, x: i64, y: i64, c: Rgb<u8>) {
        if x >= 0 && y >= 0 && (x as u32) < self.img.width() && (y as u32) < self.img.height() {
            self.img.put_pixel(x as u32, y as u32, c);
        }
    }

    fn hline(&mut self, x0: i64, x1: i64, y: i64, c: Rgb<u8>) {
        for x in x0..=x1 {
            self.put(x, y, c);
        }
    }

    fn vline(&mut self, x: i64, y0: i64, y1: i64, c: Rgb<u8>) {
        for y in y0..=y1 {
            self.put(x, y, c);
        }
    }

    /// Bresenham line, two pixels thick.
    fn line(&mut self, (mut x0, mut y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb<u8>) {
        let dx = (x1 - x0).abs();
        let dy = -(y1 - y0).abs();
        let sx = if x0 < x1 { 1 } else { -1 };
        let sy = if y0 < y1 { 1 } else { -1 };
        let mut err = dx + dy;
        loop {
            self.put(x0, y0, c);
            self.put(x0 + 1, y0, c);
            self.put(x0, y0 + 1, c);
            if x0 == x1 && y0 == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x0 += sx;
            }
            if e2 <= dx {
                err += dx;
                y0 += sy;
            }
        }
    }

    fn text_width(s: &str) -> i64 {
        (s.chars().count() * font::GLYPH_WIDTH) as i64
    }

    /// Draws `s` with its top-left corner at `(x, y)`; `vertical` runs the
    /// text bottom-to-top with `(x, y)` as the bottom-left corner.
    fn text(&mut self, x: i64, y: i64, s: &str, c: Rgb<u8>, vertical: bool) {
        for (i, ch) in s.chars().enumerate() {
            let rows = font::glyph(ch);
            let off = (i * font::GLYPH_WIDTH) as i64;
            for (gy, bits) in rows.iter().enumerate() {
                for gx in 0..font::GLYPH_WIDTH {
                    if bits & (0x20 >> gx) == 0 {
                        continue;
                    }
                    let (gx, gy) = (gx as i64, gy as i64);
                    if vertical {
                        self.put(x + gy, y - off - gx, c);
                    } else {
                        self.put(x + off + gx, y + gy, c);
                    }
                }
            }
        }
    }
}

pub fn render(data: &PlotData) -> RgbImage {
    let mut cv = Canvas {
        img: RgbImage::from_pixel(WIDTH, HEIGHT, WHITE),
    };
    let (x0, x1) = (LEFT, WIDTH as i64 - RIGHT);
    let (y0, y1) = (TOP, HEIGHT as i64 - BOTTOM);
    let n = data.series.iter().map(|s| s.values.len()).max().unwrap_or(0).max(1);
    let (ex0, ex1) = if n == 1 { (0.5, 1.5) } else { (1.0, n as f64) };
    let (vy0, vy1) = y_range(data);
    let px = |epoch: f64| x0 + ((epoch - ex0) / (ex1 - ex0) * (x1 - x0) as f64).round() as i64;
    let py = |v: f64| y1 - ((v - vy0) / (vy1 - vy0) * (y1 - y0) as f64).round() as i64;

    let (yt, yd) = ticks(vy0, vy1, 6);
    for v in yt {
        let y = py(v);
        cv.hline(x0, x1, y, GRID);
        cv.hline(x0 - 5, x0, y, BLACK);
        let label = format!("{v:.yd$}");
        cv.text(x0 - 8 - Canvas::text_width(&label), y - 5, &label, BLACK, false);
    }
    let (xt, _) = ticks(ex0, ex1, 10);
    for e in xt.into_iter().filter(|e| e.fract() == 0.0) {
        let x = px(e);
        cv.vline(x, y0, y1, GRID);
        cv.vline(x, y1, y1 + 5, BLACK);
        let label = format!("{e:.0}");
        cv.text(x - Canvas::text_width(&label) / 2, y1 + 9, &label, BLACK, false);
    }
    cv.hline(x0, x1, y1, BLACK);
    cv.vline(x0, y0, y1, BLACK);
    cv.hline(x0, x1, y0, BLACK);
    cv.vline(x1, y0, y1, BLACK);

    for s in &data.series {
        let pts: Vec<(i64, i64)> = s
            .values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(i, &v)| (px((i + 1) as f64), py(v)))
            .collect();
        for w in pts.windows(2) {
            cv.line(w[0], w[1], s.color);
        }
        for &(x, y) in &pts {
            for d in -2..=2 {
                cv.put(x + d, y, s.color);
                cv.put(x, y + d, s.color);
            }
        }
    }

    let title_w = Canvas::text_width(&data.title);
    cv.text((WIDTH as i64 - title_w) / 2, 14, &data.title, BLACK, false);
    let xl_w = Canvas::text_width(&data.x_label);
    cv.text((x0 + x1 - xl_w) / 2, HEIGHT as i64 - 22, &data.x_label, BLACK, false);
    let yl_w = Canvas::text_width(&data.y_label);
    cv.text(14, (y0 + y1 + yl_w) / 2, &data.y_label, BLACK, true);

    let legend_w = data
        .series
        .iter()
        .map(|s| Canvas::text_width(&s.label))
        .max()
        .unwrap_or(0)
        + 40;
    let (lx, ly) = (x1 - legend_w - 10, y0 + 10);
    let lh = 18 * data.series.len() as i64 + 6;
    for y in ly..ly + lh {
        cv.hline(lx, lx + legend_w, y, WHITE);
    }
    cv.hline(lx, lx + legend_w, ly, BLACK);
    cv.hline(lx, lx + legend_w, ly + lh, BLACK);
    cv.vline(lx, ly, ly + lh, BLACK);
    cv.vline(lx + legend_w, ly, ly + lh, BLACK);
    for (i, s) in data.series.iter().enumerate() {
        let y = ly + 12 + 18 * i as i64;
        cv.line((lx + 6, y), (lx + 26, y), s.color);
        cv.text(lx + 32, y - 5, &s.label, BLACK, false);
    }
    cv.img
}

fn save(path: &Path, img: &RgbImage) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(Error::io(parent))?;
    }
    img.save(path).map_err(|source| Error::Decode {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `curves_loss.png` and `curves_acc.png` into `out_dir`.
pub fn write_curves(history: &TrainingHistory, title: &str, out_dir: &Path) -> Result<[PathBuf; 2]> {
    let [loss, acc] = plot_data(history, title);
    let paths = [out_dir.join("curves_loss.png"), out_dir.join("curves_acc.png")];
    save(&paths[0], &render(&loss))?;
    save(&paths[1], &render(&acc))?;
    Ok(paths)
}

/// Reads a history CSV and plots it next to the file (or into `out_dir`).
pub fn plot_curves(history_csv: &Path, out_dir: Option<&Path>) -> Result<[PathBuf; 2]> {
    let history = read_history(history_csv)?;
    let dir = out_dir
        .map(Path::to_path_buf)
        .or_else(|| history_csv.parent().map(Path::to_path_buf))
        .unwrap_or_default();
    let title = history_csv
        .parent()
        .and_then(|p| p.file_name())
        .and_then(|s| s.to_str())
        .unwrap_or("training");
    write_curves(&history, title, &dir)
}
