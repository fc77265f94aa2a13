//! First-layer weight introspection and report emission.
//!
//! The row-convolution weights W1 have shape f1 × C × N. Summing absolute
//! values over the filters gives a per-ROI importance profile per channel;
//! summing over ROIs gives a per-filter profile. ROIs whose connectivity
//! differs between classes attract large absolute weights, so the top of the
//! ROI profile recovers the modified regions of a simulated dataset.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Ix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ModelKind, ModelSpec, ParamStore};
use crate::simulator::GroundTruth;

/// Per-channel ROI and filter importance profiles.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ImportanceProfile {
    /// `roi[c][j]` = sum over filters of |W1[f, c, j]|.
    pub roi: Vec<Vec<f64>>,
    /// `filter[c][f]` = sum over ROIs of |W1[f, c, j]|.
    pub filter: Vec<Vec<f64>>,
}

/// Per-channel ROI importance: absolute first-layer weights summed over
/// filters.
pub fn roi_importance(store: &ParamStore, spec: &ModelSpec) -> Result<Vec<Vec<f64>>> {
    let w1 = first_layer(store, spec)?;
    let (f1, channels, n) = w1.dim();
    let mut out = vec![vec![0.0; n]; channels];
    for f in 0..f1 {
        for c in 0..channels {
            for j in 0..n {
                out[c][j] += w1[[f, c, j]].abs();
            }
        }
    }
    Ok(out)
}

/// Per-channel filter importance: absolute first-layer weights summed over
/// ROIs.
pub fn filter_importance(store: &ParamStore, spec: &ModelSpec) -> Result<Vec<Vec<f64>>> {
    let w1 = first_layer(store, spec)?;
    let (f1, channels, n) = w1.dim();
    let mut out = vec![vec![0.0; f1]; channels];
    for f in 0..f1 {
        for c in 0..channels {
            for j in 0..n {
                out[c][f] += w1[[f, c, j]].abs();
            }
        }
    }
    Ok(out)
}

fn first_layer<'s>(
    store: &'s ParamStore,
    spec: &ModelSpec,
) -> Result<ndarray::ArrayView3<'s, f64>> {
    if spec.kind != ModelKind::Ccnn {
        return Err(Error::config("importance profiles require a ccnn parameter store"));
    }
    store.validate_shapes(spec)?;
    Ok(store
        .array("W1")
        .view()
        .into_dimensionality::<Ix3>()
        .expect("W1 is f1 x C x N"))
}

pub fn importance_profile(store: &ParamStore, spec: &ModelSpec) -> Result<ImportanceProfile> {
    Ok(ImportanceProfile {
        roi: roi_importance(store, spec)?,
        filter: filter_importance(store, spec)?,
    })
}

/// Indices of the k largest values; ties break toward the lower index.
pub fn top_k_indices(values: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .expect("finite importance values")
            .then(a.cmp(&b))
    });
    order.truncate(k);
    order
}

/// Count how many ground-truth ROIs appear among the top-k importance
/// indices.
pub fn recovery_score(importance: &[f64], truth: &GroundTruth, k: usize) -> (usize, Vec<usize>) {
    let top = top_k_indices(importance, k);
    let hits = top
        .iter()
        .filter(|i| truth.modified_roi_indices.contains(i))
        .count();
    (hits, top)
}

/// Recovery summary serialized next to the importance reports.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub channel: usize,
    pub top_k: Vec<usize>,
    pub hits: usize,
    pub truth: Vec<usize>,
}

/// Write an importance profile as CSV with header
/// `roi_index,channel,importance` (channel-major, ROI ascending).
pub fn write_importance_csv(profile: &ImportanceProfile, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "roi_index,channel,importance")?;
    for (c, channel) in profile.roi.iter().enumerate() {
        for (j, v) in channel.iter().enumerate() {
            writeln!(out, "{j},{c},{v:?}")?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Write any serializable report as pretty JSON.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text)?;
    Ok(())
}

/// One model's accuracy as a function of noise weight.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AccuracySeries {
    pub model: String,
    pub points: Vec<(f64, f64)>,
}

fn model_color(model: &str) -> &'static str {
    match model {
        "simple" => "#2ca02c",
        "deep" => "#1f77b4",
        "ccnn" => "#d62728",
        _ => "#7f7f7f",
    }
}

fn xml_escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Render accuracy-vs-noise curves with a dashed chance baseline as a
/// self-contained SVG (no external assets).
pub fn emit_accuracy_plot(series: &[AccuracySeries], baseline: f64, path: &Path) -> Result<()> {
    if series.is_empty() || series.iter().all(|s| s.points.is_empty()) {
        return Err(Error::data("nothing to plot"));
    }
    let (width, height) = (640.0, 440.0);
    let (left, right, top, bottom) = (64.0, 150.0, 24.0, 56.0);
    let plot_w = width - left - right;
    let plot_h = height - top - bottom;

    let xs: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
    let x_min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let x_max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let x_span = if x_max > x_min { x_max - x_min } else { 1.0 };
    let to_x = |v: f64| left + (v - x_min) / x_span * plot_w;
    let to_y = |v: f64| top + (1.0 - v.clamp(0.0, 1.0)) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
    ));
    svg.push_str(&format!(
        "  <rect x=\"0\" y=\"0\" width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"
    ));
    // axes
    svg.push_str(&format!(
        "  <line x1=\"{left}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\" stroke-width=\"1\"/>\n",
        top + plot_h,
        left + plot_w,
        top + plot_h
    ));
    svg.push_str(&format!(
        "  <line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{}\" stroke=\"black\" stroke-width=\"1\"/>\n",
        top + plot_h
    ));
    // y ticks every 0.25
    for i in 0..=4 {
        let v = i as f64 * 0.25;
        let y = to_y(v);
        svg.push_str(&format!(
            "  <line x1=\"{}\" y1=\"{y}\" x2=\"{left}\" y2=\"{y}\" stroke=\"black\" stroke-width=\"1\"/>\n",
            left - 5.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"end\">{v:.2}</text>\n",
            left - 8.0,
            y + 4.0
        ));
    }
    // x ticks at integer noise weights when the span is small, else 6 ticks
    let tick_count = if x_span <= 12.0 { x_span.round() as usize } else { 6 };
    for i in 0..=tick_count.max(1) {
        let v = x_min + x_span * i as f64 / tick_count.max(1) as f64;
        let x = to_x(v);
        svg.push_str(&format!(
            "  <line x1=\"{x}\" y1=\"{}\" x2=\"{x}\" y2=\"{}\" stroke=\"black\" stroke-width=\"1\"/>\n",
            top + plot_h,
            top + plot_h + 5.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{x}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{v:.0}</text>\n",
            top + plot_h + 20.0
        ));
    }
    // axis labels
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">noise weight</text>\n",
        left + plot_w / 2.0,
        height - 14.0
    ));
    svg.push_str(&format!(
        "  <text x=\"16\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">accuracy</text>\n",
        top + plot_h / 2.0,
        top + plot_h / 2.0
    ));
    // dashed chance baseline
    let by = to_y(baseline);
    svg.push_str(&format!(
        "  <line x1=\"{left}\" y1=\"{by}\" x2=\"{}\" y2=\"{by}\" stroke=\"black\" stroke-width=\"1\" stroke-dasharray=\"6 4\"/>\n",
        left + plot_w
    ));
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" font-size=\"11\">baseline {baseline:.4}</text>\n",
        left + plot_w + 6.0,
        by + 4.0
    ));
    // one polyline plus markers per model
    for (si, s) in series.iter().enumerate() {
        let color = model_color(&s.model);
        if s.points.len() > 1 {
            let pts: Vec<String> = s
                .points
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", to_x(x), to_y(y)))
                .collect();
            svg.push_str(&format!(
                "  <polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
                pts.join(" ")
            ));
        }
        for &(x, y) in &s.points {
            svg.push_str(&format!(
                "  <circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>\n",
                to_x(x),
                to_y(y)
            ));
        }
        let ly = top + 16.0 + si as f64 * 18.0;
        svg.push_str(&format!(
            "  <line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            left + plot_w + 6.0,
            left + plot_w + 30.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-size=\"12\">{}</text>\n",
            left + plot_w + 36.0,
            ly + 4.0,
            xml_escape(&s.model)
        ));
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg)?;
    Ok(())
}
