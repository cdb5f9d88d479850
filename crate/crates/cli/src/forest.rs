//! Deterministic SVG forest plots: one row per study (point at y_i, whiskers
//! at y_i ± z·sigma_i), plus a distinguished shrinkage row per target. Fixed
//! viewBox, anchored text, and two-decimal coordinates keep byte output
//! stable for identical inputs.

use shrinkbound::model::Dataset;
use shrinkbound::posterior::MarginalSummary;
use shrinkbound::quad;

#[derive(Debug, Clone, PartialEq)]
pub struct ForestRow {
    pub label: String,
    pub center: f64,
    pub lo: f64,
    pub hi: f64,
    pub is_shrinkage: bool,
}

#[derive(Debug, Clone)]
pub struct ForestLayout {
    pub rows: Vec<ForestRow>,
    pub x_min: f64,
    pub x_max: f64,
    pub level: f64,
}

/// Builds the rows: every study, then one shrinkage row per target summary.
pub fn layout(
    dataset: &Dataset,
    shrinkage: &[(String, MarginalSummary)],
    level: f64,
) -> ForestLayout {
    let z = quad::normal_quantile(0.5 * (1.0 + level)).expect("level in (0,1)");
    let mut rows: Vec<ForestRow> = dataset
        .studies()
        .iter()
        .map(|s| ForestRow {
            label: s.label().to_string(),
            center: s.y(),
            lo: s.y() - z * s.sigma(),
            hi: s.y() + z * s.sigma(),
            is_shrinkage: false,
        })
        .collect();
    for (label, summary) in shrinkage {
        rows.push(ForestRow {
            label: format!("shrinkage ({label})"),
            center: summary.mean,
            lo: summary.lo,
            hi: summary.hi,
            is_shrinkage: true,
        });
    }

    let mut x_min = 0.0f64;
    let mut x_max = 0.0f64;
    for row in &rows {
        x_min = x_min.min(row.lo);
        x_max = x_max.max(row.hi);
    }
    let pad = 0.04 * (x_max - x_min).max(1e-9);
    ForestLayout {
        rows,
        x_min: x_min - pad,
        x_max: x_max + pad,
        level,
    }
}

fn nice_ticks(min: f64, max: f64, target: usize) -> Vec<f64> {
    let range = (max - min).max(1e-12);
    let raw_step = range / target as f64;
    let magnitude = 10f64.powf(raw_step.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * magnitude)
        .find(|s| range / s <= target as f64)
        .unwrap_or(10.0 * magnitude);
    let mut ticks = Vec::new();
    let mut tick = (min / step).ceil() * step;
    while tick <= max + 1e-9 * step {
        // normalize negative zero for stable formatting
        ticks.push(if tick == 0.0 { 0.0 } else { tick });
        tick += step;
    }
    ticks
}

const WIDTH: f64 = 720.0;
const MARGIN_LEFT: f64 = 180.0;
const MARGIN_RIGHT: f64 = 30.0;
const MARGIN_TOP: f64 = 24.0;
const MARGIN_BOTTOM: f64 = 48.0;
const ROW_HEIGHT: f64 = 34.0;
const STUDY_COLOR: &str = "#333333";
const SHRINK_COLOR: &str = "#1f77b4";

pub fn render(layout: &ForestLayout) -> String {
    let height = MARGIN_TOP + ROW_HEIGHT * layout.rows.len() as f64 + MARGIN_BOTTOM;
    let plot_width = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let to_x = |value: f64| {
        MARGIN_LEFT + plot_width * (value - layout.x_min) / (layout.x_max - layout.x_min)
    };

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {height}\" \
         font-family=\"monospace\" font-size=\"13\">\n"
    ));
    svg.push_str(&format!(
        "  <rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{height}\" fill=\"white\"/>\n"
    ));

    // zero reference line when visible
    if layout.x_min < 0.0 && layout.x_max > 0.0 {
        let x = to_x(0.0);
        svg.push_str(&format!(
            "  <line x1=\"{x:.2}\" y1=\"{MARGIN_TOP}\" x2=\"{x:.2}\" y2=\"{:.2}\" \
             stroke=\"#bbbbbb\" stroke-dasharray=\"4 3\"/>\n",
            height - MARGIN_BOTTOM
        ));
    }

    for (i, row) in layout.rows.iter().enumerate() {
        let y = MARGIN_TOP + ROW_HEIGHT * (i as f64 + 0.5);
        let color = if row.is_shrinkage {
            SHRINK_COLOR
        } else {
            STUDY_COLOR
        };
        svg.push_str(&format!(
            "  <text x=\"{:.2}\" y=\"{y:.2}\" text-anchor=\"end\" dominant-baseline=\"middle\" \
             fill=\"{color}\">{}</text>\n",
            MARGIN_LEFT - 12.0,
            escape(&row.label)
        ));
        let (x_lo, x_hi, x_c) = (to_x(row.lo), to_x(row.hi), to_x(row.center));
        svg.push_str(&format!(
            "  <line x1=\"{x_lo:.2}\" y1=\"{y:.2}\" x2=\"{x_hi:.2}\" y2=\"{y:.2}\" \
             stroke=\"{color}\" stroke-width=\"1.5\"/>\n"
        ));
        for x in [x_lo, x_hi] {
            svg.push_str(&format!(
                "  <line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" \
                 stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
                y - 5.0,
                y + 5.0
            ));
        }
        if row.is_shrinkage {
            svg.push_str(&format!(
                "  <polygon points=\"{:.2},{y:.2} {x_c:.2},{:.2} {:.2},{y:.2} {x_c:.2},{:.2}\" \
                 fill=\"{color}\"/>\n",
                x_c - 6.0,
                y - 6.0,
                x_c + 6.0,
                y + 6.0
            ));
        } else {
            svg.push_str(&format!(
                "  <rect class=\"marker\" x=\"{:.2}\" y=\"{:.2}\" width=\"9\" height=\"9\" \
                 fill=\"{color}\"/>\n",
                x_c - 4.5,
                y - 4.5
            ));
        }
    }

    // axis
    let axis_y = height - MARGIN_BOTTOM + 8.0;
    svg.push_str(&format!(
        "  <line x1=\"{MARGIN_LEFT}\" y1=\"{axis_y:.2}\" x2=\"{:.2}\" y2=\"{axis_y:.2}\" \
         stroke=\"#333333\"/>\n",
        WIDTH - MARGIN_RIGHT
    ));
    for tick in nice_ticks(layout.x_min, layout.x_max, 6) {
        let x = to_x(tick);
        svg.push_str(&format!(
            "  <line x1=\"{x:.2}\" y1=\"{axis_y:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" \
             stroke=\"#333333\"/>\n",
            axis_y + 5.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{tick}</text>\n",
            axis_y + 20.0
        ));
    }
    svg.push_str(&format!(
        "  <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" fill=\"#666666\">effect \
         ({:.0}% intervals)</text>\n",
        MARGIN_LEFT + plot_width / 2.0,
        height - 8.0,
        100.0 * layout.level
    ));
    svg.push_str("</svg>\n");
    svg
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
