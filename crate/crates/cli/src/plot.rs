//! Learning-curve figures: episode length and accumulated reward against
//! environment steps, one panel each. Rendering is a pure function of the
//! curves, so regenerating from the same series yields the same bytes.

use std::path::Path;

use anyhow::{anyhow, Result};
use mazelab_core::trainer::EpisodeRecord;
use plotters::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub label: String,
    /// Palette slot; curves of one arm share it.
    pub color: usize,
    /// `(steps, episode length, accumulated reward)`, ordered by steps.
    pub points: Vec<(f64, f64, f64)>,
}

const PALETTE: [RGBColor; 4] = [RGBColor(31, 119, 180), RGBColor(214, 39, 40), RGBColor(44, 160, 44), RGBColor(148, 103, 189)];

/// Trailing mean over `window` episodes, one point per episode.
pub fn curve(label: &str, color: usize, episodes: &[EpisodeRecord], window: usize) -> Curve {
    let mut eps: Vec<&EpisodeRecord> = episodes.iter().collect();
    eps.sort_by_key(|e| e.step);
    let w = window.max(1);
    let mut points = Vec::with_capacity(eps.len());
    let (mut len_sum, mut rew_sum) = (0.0, 0.0);
    for (i, e) in eps.iter().enumerate() {
        len_sum += e.length as f64;
        rew_sum += e.reward;
        if i >= w {
            len_sum -= eps[i - w].length as f64;
            rew_sum -= eps[i - w].reward;
        }
        let n = (i + 1).min(w) as f64;
        points.push((e.step as f64, len_sum / n, rew_sum / n));
    }
    Curve {
        label: label.to_string(),
        color,
        points,
    }
}

/// Projects a `(step, length, reward)` point onto one axis.
type Coord = fn(&(f64, f64, f64)) -> f64;

fn bounds(curves: &[Curve], f: impl Fn(&(f64, f64, f64)) -> f64) -> (f64, f64) {
    let (lo, hi) = curves
        .iter()
        .flat_map(|c| c.points.iter().map(&f))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let lo = lo.min(0.0);
    if hi > lo {
        (lo, hi * 1.05)
    } else {
        (lo, lo + 1.0)
    }
}

/// SVG document with the length panel above the reward panel.
pub fn render(title: &str, curves: &[Curve]) -> Result<String> {
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (900, 700)).into_drawing_area();
        root.fill(&WHITE).map_err(|e| anyhow!("{e}"))?;
        let root = root.titled(title, ("sans-serif", 20)).map_err(|e| anyhow!("{e}"))?;
        let panels = root.split_evenly((2, 1));
        let (_, x_hi) = bounds(curves, |p| p.0);
        let y_of: [(&str, Coord); 2] =
            [("steps per episode", |p| p.1), ("accumulated reward", |p| p.2)];
        for (panel, (ylabel, y)) in panels.iter().zip(y_of) {
            let (y_lo, y_hi) = bounds(curves, y);
            let mut chart = ChartBuilder::on(panel)
                .margin(10)
                .x_label_area_size(35)
                .y_label_area_size(60)
                .build_cartesian_2d(0.0..x_hi, y_lo..y_hi)
                .map_err(|e| anyhow!("{e}"))?;
            chart
                .configure_mesh()
                .x_desc("environment steps")
                .y_desc(ylabel)
                .draw()
                .map_err(|e| anyhow!("{e}"))?;
            for c in curves {
                let color = PALETTE[c.color % PALETTE.len()];
                chart
                    .draw_series(LineSeries::new(c.points.iter().map(|p| (p.0, y(p))), &color))
                    .map_err(|e| anyhow!("{e}"))?
                    .label(c.label.clone())
                    .legend(move |(x, yy)| PathElement::new(vec![(x, yy), (x + 20, yy)], color));
            }
            if !curves.is_empty() {
                chart
                    .configure_series_labels()
                    .background_style(WHITE.mix(0.8))
                    .border_style(BLACK)
                    .draw()
                    .map_err(|e| anyhow!("{e}"))?;
            }
        }
        root.present().map_err(|e| anyhow!("{e}"))?;
    }
    Ok(svg)
}

pub fn write(path: &Path, title: &str, curves: &[Curve]) -> Result<()> {
    std::fs::write(path, render(title, curves)?)?;
    Ok(())
}
