//! Declarative chart descriptions.
//!
//! A chart is a list of named series of points. Every point carries an
//! element id that is registered with the objectives, unit and metric it
//! depicts, so a selection on a rendered chart can be mapped back to the
//! objective graph.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ObjectiveGraph, ObjectiveId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartKind {
    Line,
    Bar,
    Pie,
    RadialProgress,
    NodeLink,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
}

impl Axis {
    pub fn new(label: &str, unit: Option<&str>) -> Self {
        Axis {
            label: label.to_owned(),
            unit: unit.map(str::to_owned),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    pub element_id: String,
    /// Category label or interval label on the x axis.
    pub x: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSeries {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    pub points: Vec<ChartPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub target: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementTag {
    pub objectives: Vec<ObjectiveId>,
    pub unit_id: String,
    pub metric: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub source: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSpec {
    pub id: String,
    pub kind: ChartKind,
    pub title: String,
    pub x_axis: Axis,
    pub y_axis: Axis,
    /// Bars of different series at the same x are stacked rather than grouped.
    #[serde(default)]
    pub stacked: bool,
    pub series: Vec<ChartSeries>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub links: Vec<Link>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub annotations: Vec<Annotation>,
    pub elements: BTreeMap<String, ElementTag>,
}

impl ChartSpec {
    pub fn new(id: impl Into<String>, kind: ChartKind, title: impl Into<String>, x: Axis, y: Axis) -> Self {
        ChartSpec {
            id: id.into(),
            kind,
            title: title.into(),
            x_axis: x,
            y_axis: y,
            stacked: false,
            series: Vec::new(),
            links: Vec::new(),
            annotations: Vec::new(),
            elements: BTreeMap::new(),
        }
    }

    /// Appends a series; `points` are `(element id, x label, value, tag)`.
    pub fn push_series(
        &mut self,
        name: &str,
        unit: Option<&str>,
        points: impl IntoIterator<Item = (String, String, f64, ElementTag)>,
    ) {
        let mut series = ChartSeries {
            name: name.to_owned(),
            unit: unit.map(str::to_owned),
            points: Vec::new(),
        };
        for (element_id, x, value, tag) in points {
            self.elements.insert(element_id.clone(), tag);
            series.points.push(ChartPoint { element_id, x, value });
        }
        self.series.push(series);
    }

    pub fn annotate(&mut self, target: impl Into<String>, text: impl Into<String>) {
        self.annotations.push(Annotation {
            target: target.into(),
            text: text.into(),
        });
    }

    pub fn is_empty(&self) -> bool {
        self.series.iter().all(|s| s.points.is_empty())
    }

    /// Structural checks: every point and link end is registered, every
    /// annotation points at an element, every tag names known objectives,
    /// and grouped bar/line series share their length.
    pub fn validate(&self, graph: &ObjectiveGraph) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidData(format!("chart {}: {msg}", self.id)));
        for s in &self.series {
            for p in &s.points {
                if !self.elements.contains_key(&p.element_id) {
                    return bad(format!("point {} is not registered", p.element_id));
                }
                if !p.value.is_finite() {
                    return bad(format!("point {} has a non-finite value", p.element_id));
                }
            }
        }
        if matches!(self.kind, ChartKind::Bar) && !self.stacked {
            let lens: Vec<usize> = self.series.iter().map(|s| s.points.len()).collect();
            if lens.windows(2).any(|w| w[0] != w[1]) {
                return bad("series lengths differ".into());
            }
        }
        for l in &self.links {
            for end in [&l.source, &l.target] {
                if !self.elements.contains_key(end) {
                    return bad(format!("link end {end} is not registered"));
                }
            }
        }
        for a in &self.annotations {
            if !self.elements.contains_key(&a.target) {
                return bad(format!("annotation target {} does not exist", a.target));
            }
        }
        for (id, tag) in &self.elements {
            if tag.objectives.is_empty() {
                return bad(format!("element {id} carries no objective"));
            }
            if let Some(o) = tag.objectives.iter().find(|o| !graph.contains(o)) {
                return bad(format!("element {id} names unknown objective {o}"));
            }
        }
        Ok(())
    }
}
