use std::fmt::Write as _;

use nalgebra::DVector;

use super::run::{Geometry, ResultRecord};
use crate::error::{Error, Result};

const PX_PER_UNIT: f64 = 100.0;
const MARGIN: f64 = 30.0;
const MAX_STROKE: f64 = 8.0;
const NODE_RADIUS: f64 = 4.0;

#[derive(Debug, Clone)]
pub struct Rendered {
    pub svg: String,
    /// Indices of the bars drawn.
    pub drawn: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Bars with `x_j < threshold * max x` are omitted; widths scale with
/// `x_j / max x`. Fixed nodes are black, free nodes white, the load node red.
pub fn render_design(geometry: &Geometry, x: &DVector<f64>, threshold: f64) -> Result<Rendered> {
    if x.len() != geometry.bars.len() {
        return Err(Error::DimensionMismatch { expected: geometry.bars.len(), got: x.len() });
    }
    if !(threshold >= 0.0 && threshold.is_finite()) {
        return Err(Error::InvalidConfig(format!("threshold must be nonnegative, got {threshold}")));
    }
    let nodes = &geometry.nodes;
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in nodes {
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    if nodes.is_empty() {
        (x0, x1, y0, y1) = (0.0, 0.0, 0.0, 0.0);
    }
    let width = (x1 - x0) * PX_PER_UNIT + 2.0 * MARGIN;
    let height = (y1 - y0) * PX_PER_UNIT + 2.0 * MARGIN;
    let px = |p: &[f64; 2]| ((p[0] - x0) * PX_PER_UNIT + MARGIN, (y1 - p[1]) * PX_PER_UNIT + MARGIN);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.1}" height="{height:.1}" viewBox="0 0 {width:.1} {height:.1}">"#
    );
    let _ = writeln!(
        svg,
        "<style>.bar{{stroke:#1f4e79;stroke-linecap:round}}.node{{stroke:#000;stroke-width:1}}\
         .fixed{{fill:#000}}.free{{fill:#fff}}.load{{fill:#d62728}}</style>"
    );

    let top = x.max();
    let mut drawn = Vec::new();
    let mut warnings = Vec::new();
    if top > 0.0 {
        let _ = writeln!(svg, r#"<g id="bars">"#);
        for (j, b) in geometry.bars.iter().enumerate() {
            if x[j] < threshold * top || x[j] <= 0.0 {
                continue;
            }
            let (ax, ay) = px(&nodes[b[0]]);
            let (bx, by) = px(&nodes[b[1]]);
            let w = MAX_STROKE * x[j] / top;
            let _ = writeln!(
                svg,
                r#"<line class="bar" data-bar="{j}" x1="{ax:.2}" y1="{ay:.2}" x2="{bx:.2}" y2="{by:.2}" stroke-width="{w:.4}"/>"#
            );
            drawn.push(j);
        }
        let _ = writeln!(svg, "</g>");
    }
    if drawn.is_empty() {
        warnings.push("empty design: every bar is below the display threshold".to_string());
    }

    let _ = writeln!(svg, r#"<g id="nodes">"#);
    for (i, p) in nodes.iter().enumerate() {
        let fixed = geometry.fixed_dofs.contains(&(2 * i)) || geometry.fixed_dofs.contains(&(2 * i + 1));
        let class = if i == geometry.load_node {
            "load"
        } else if fixed {
            "fixed"
        } else {
            "free"
        };
        let (cx, cy) = px(p);
        let _ = writeln!(
            svg,
            r#"<circle class="node {class}" data-node="{i}" cx="{cx:.2}" cy="{cy:.2}" r="{NODE_RADIUS}"/>"#
        );
    }
    let _ = writeln!(svg, "</g>");
    let _ = writeln!(svg, "</svg>");
    Ok(Rendered { svg, drawn, warnings })
}

pub fn render_svg(record: &ResultRecord, threshold: f64) -> Result<Rendered> {
    let geometry = record
        .model
        .geometry
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("result has no model geometry".into()))?;
    render_design(geometry, &record.report.x_final, threshold)
}
