//! Serialized artifacts: view documents, SVG drawings, hierarchy
//! documents and partition tables.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explorer::{StatMode, ViewDocument};
use crate::graph::Graph;
use crate::hierarchy::ClusterTree;

pub const HIERARCHY_FORMAT: &str = "clustervis-hierarchy";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Svg,
    ViewJson,
    HierarchyJson,
    PartitionTsv,
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "svg" => Ok(ExportFormat::Svg),
            "view-json" => Ok(ExportFormat::ViewJson),
            "hierarchy-json" => Ok(ExportFormat::HierarchyJson),
            "partition-tsv" => Ok(ExportFormat::PartitionTsv),
            other => Err(Error::InvalidParameter(format!("unknown export format `{other}`"))),
        }
    }
}

impl ExportFormat {
    pub fn content_type(self) -> &'static str {
        match self {
            ExportFormat::Svg => "image/svg+xml",
            ExportFormat::ViewJson | ExportFormat::HierarchyJson => "application/json",
            ExportFormat::PartitionTsv => "text/tab-separated-values",
        }
    }
}

/// Hierarchy document: the graph it was built on plus the whole tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyDocument {
    pub format: String,
    pub version: u32,
    pub graph: Graph,
    pub tree: ClusterTree,
}

impl HierarchyDocument {
    pub fn new(graph: Graph, tree: ClusterTree) -> Self {
        HierarchyDocument {
            format: HIERARCHY_FORMAT.into(),
            version: 1,
            graph,
            tree,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("hierarchy serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: HierarchyDocument = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        if doc.format != HIERARCHY_FORMAT {
            return Err(Error::InvalidParameter(format!(
                "not a hierarchy document (format `{}`)",
                doc.format
            )));
        }
        doc.tree.validate(doc.graph.node_count())?;
        Ok(doc)
    }
}

pub fn view_json(doc: &ViewDocument) -> String {
    serde_json::to_string_pretty(doc).expect("view serializes")
}

/// Gray level for a p-value: small p is dark.
fn gray(p: f64) -> String {
    let level = (p.clamp(0.0, 1.0) * 215.0 + 40.0).round() as u8;
    format!("#{level:02x}{level:02x}{level:02x}")
}

/// Blue for negative, white at zero, red for positive; saturates at ±3.
fn diverging(r: f64) -> String {
    let t = (r / 3.0).clamp(-1.0, 1.0);
    let fade = |t: f64| (255.0 * (1.0 - t.abs())).round() as u8;
    if t >= 0.0 {
        format!("#ff{0:02x}{0:02x}", fade(t))
    } else {
        format!("#{0:02x}{0:02x}ff", fade(t))
    }
}

/// SVG drawing in the document's viewbox: one line per edge (width grows
/// with weight), one circle per cluster.
pub fn svg(doc: &ViewDocument) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {w} {h}" width="{w}" height="{h}">"#,
        w = doc.width,
        h = doc.height
    );
    let _ = writeln!(out, r##"<g class="edges" stroke="#888888" stroke-opacity="0.7">"##);
    for e in &doc.edges {
        let (Some(a), Some(b)) = (
            doc.nodes.iter().find(|n| n.id == e.source),
            doc.nodes.iter().find(|n| n.id == e.target),
        ) else {
            continue;
        };
        let width = 1.0 + (e.weight as f64).log2();
        let _ = writeln!(
            out,
            r#"<line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke-width="{width:.3}"/>"#,
            a.x, a.y, b.x, b.y
        );
    }
    let _ = writeln!(out, "</g>");
    let _ = writeln!(out, r##"<g class="nodes" stroke="#333333">"##);
    let mode = doc.stat.as_ref().map(|s| s.mode);
    for n in &doc.nodes {
        let fill = match (mode, n.color) {
            (Some(StatMode::P), Some(p)) => gray(p),
            (Some(StatMode::Residual), Some(r)) => diverging(r),
            _ => "#6b8fc7".to_owned(),
        };
        let _ = writeln!(
            out,
            r#"<circle id="c{}" cx="{:.3}" cy="{:.3}" r="{:.6}" fill="{fill}" data-size="{}"/>"#,
            n.id, n.x, n.y, n.radius, n.size
        );
    }
    let _ = writeln!(out, "</g>");
    let _ = writeln!(out, "</svg>");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats_parse() {
        assert_eq!("svg".parse::<ExportFormat>().unwrap(), ExportFormat::Svg);
        assert_eq!(
            "partition-tsv".parse::<ExportFormat>().unwrap(),
            ExportFormat::PartitionTsv
        );
        assert!("png".parse::<ExportFormat>().is_err());
    }

    #[test]
    fn color_ramps() {
        assert_eq!(gray(0.0), "#282828");
        assert_eq!(gray(1.0), "#ffffff");
        assert_eq!(diverging(0.0), "#ffffff");
        assert_eq!(diverging(3.0), "#ff0000");
        assert_eq!(diverging(-9.0), "#0000ff");
    }
}
