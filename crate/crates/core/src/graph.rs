//! Match graph: which frame pairs enter the photometric objective.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ba::residual::PairGeometry;
use crate::cue::CuePyramid;
use crate::error::{Error, Result};
use crate::geometry::{relative, Pose};
use crate::sensor::SensorExtrinsics;

#[derive(Debug, Clone)]
pub struct FrameNode {
    pub id: usize,
    pub timestamp: f64,
    pub sensor_id: String,
    pub pose_guess: Pose,
    pub pyramid: CuePyramid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeKind {
    Covisibility,
    Odometry,
}

impl EdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Covisibility => "covisibility",
            EdgeKind::Odometry => "odometry",
        }
    }
}

impl FromStr for EdgeKind {
    type Err = ();
    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s {
            "covisibility" => Ok(EdgeKind::Covisibility),
            "odometry" => Ok(EdgeKind::Odometry),
            _ => Err(()),
        }
    }
}

/// Undirected edge, stored with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub kind: EdgeKind,
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.i, self.j, self.kind.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphCriteria {
    /// Radians.
    pub max_angle: f64,
    /// Meters.
    pub max_translation: f64,
    pub min_overlap_ratio: f64,
    /// Add edges between consecutive frames regardless of covisibility.
    pub sequential: bool,
    /// Pixel stride of the overlap count on the coarsest level.
    pub overlap_stride: usize,
}

impl Default for GraphCriteria {
    fn default() -> Self {
        GraphCriteria {
            max_angle: 30f64.to_radians(),
            max_translation: 1.0,
            min_overlap_ratio: 1.0 / 3.0,
            sequential: true,
            overlap_stride: 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MatchGraph {
    nodes: Vec<FrameNode>,
    edges: Vec<Edge>,
}

impl MatchGraph {
    /// Assembles a graph from explicit edges, validating endpoints.
    pub fn from_edges(nodes: Vec<FrameNode>, edges: impl IntoIterator<Item = Edge>) -> Result<Self> {
        check_nodes(&nodes)?;
        let mut map: BTreeMap<(usize, usize), EdgeKind> = BTreeMap::new();
        for e in edges {
            let (i, j) = (e.i.min(e.j), e.i.max(e.j));
            if i == j {
                return Err(Error::Config(format!("self-edge on node {i}")));
            }
            if j >= nodes.len() {
                return Err(Error::Config(format!(
                    "edge {i}-{j} references a missing node ({} nodes)",
                    nodes.len()
                )));
            }
            let kind = map.entry((i, j)).or_insert(e.kind);
            *kind = (*kind).min(e.kind);
        }
        let edges = map.into_iter().map(|((i, j), kind)| Edge { i, j, kind }).collect();
        Ok(MatchGraph { nodes, edges })
    }

    pub fn nodes(&self) -> &[FrameNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn num_levels(&self) -> usize {
        self.nodes.iter().map(|n| n.pyramid.num_levels()).min().unwrap_or(0)
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        let (a, b) = (i.min(j), i.max(j));
        self.edges.binary_search_by(|e| (e.i, e.j).cmp(&(a, b))).is_ok()
    }

    pub fn pose_guesses(&self) -> Vec<Pose> {
        self.nodes.iter().map(|n| n.pose_guess).collect()
    }

    /// Copy of this graph with every pyramid cut to its `n` finest levels.
    pub fn with_finest_levels(&self, n: usize) -> MatchGraph {
        MatchGraph {
            nodes: self
                .nodes
                .iter()
                .map(|node| FrameNode {
                    pyramid: node.pyramid.truncated_to_finest(n),
                    ..node.clone()
                })
                .collect(),
            edges: self.edges.clone(),
        }
    }

    pub fn with_pose_guesses(&self, poses: &[Pose]) -> MatchGraph {
        assert_eq!(poses.len(), self.nodes.len());
        MatchGraph {
            nodes: self
                .nodes
                .iter()
                .zip(poses)
                .map(|(n, p)| FrameNode {
                    pose_guess: *p,
                    ..n.clone()
                })
                .collect(),
            edges: self.edges.clone(),
        }
    }

    /// Connected components, each sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        components(self.nodes.len(), self.edges.iter().map(|e| (e.i, e.j)))
    }

    /// Line-oriented dump: one `i j kind` edge per line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            out.push_str(&e.to_string());
            out.push('\n');
        }
        out
    }
}

pub(crate) fn components(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut a: usize) -> usize {
        while parent[a] != a {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        a
    }
    for (i, j) in edges {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            parent[ri.max(rj)] = ri.min(rj);
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for v in 0..n {
        let r = find(&mut parent, v);
        groups.entry(r).or_default().push(v);
    }
    groups.into_values().collect()
}

/// Parses a graph dump back into edges.
pub fn parse_graph_dump(text: &str) -> Result<Vec<Edge>> {
    let mut edges = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::parse("graph dump", lineno + 1, "expected `i j kind`"));
        }
        let i = fields[0]
            .parse::<usize>()
            .map_err(|e| Error::parse("graph dump", lineno + 1, e.to_string()))?;
        let j = fields[1]
            .parse::<usize>()
            .map_err(|e| Error::parse("graph dump", lineno + 1, e.to_string()))?;
        let kind = fields[2]
            .parse::<EdgeKind>()
            .map_err(|_| Error::parse("graph dump", lineno + 1, format!("unknown edge kind `{}`", fields[2])))?;
        if i == j {
            return Err(Error::parse("graph dump", lineno + 1, "self-edge"));
        }
        edges.push(Edge {
            i: i.min(j),
            j: i.max(j),
            kind,
        });
    }
    Ok(edges)
}

fn check_nodes(nodes: &[FrameNode]) -> Result<()> {
    if nodes.is_empty() {
        return Err(Error::Config("match graph needs at least one node".into()));
    }
    for (k, n) in nodes.iter().enumerate() {
        if n.id != k {
            return Err(Error::Config(format!("node at position {k} has id {}", n.id)));
        }
    }
    Ok(())
}

/// Fraction of valid pixels of `src`'s pyramid level that reproject inside
/// the bounds of `dst`'s view at the same level.
pub fn overlap_ratio(src: &FrameNode, dst: &FrameNode, level: usize, ext: &SensorExtrinsics, stride: usize) -> f64 {
    let stride = stride.max(1);
    let s_img = src.pyramid.level(level);
    let d_k = dst.pyramid.level(level).intrinsics();
    let geom = PairGeometry::new(&src.pose_guess, &dst.pose_guess, ext);
    let k = s_img.intrinsics();
    let mut valid = 0usize;
    let mut inside = 0usize;
    for y in (0..s_img.height()).step_by(stride) {
        for x in (0..s_img.width()).step_by(stride) {
            let Some(d) = s_img.depth(x, y) else { continue };
            valid += 1;
            let p = k.unproject_unchecked(&Vector2::new(x as f64, y as f64), d);
            if d_k.project(&geom.transform(&p).p_bar).is_some() {
                inside += 1;
            }
        }
    }
    if valid == 0 {
        0.0
    } else {
        inside as f64 / valid as f64
    }
}

/// Builds the match graph from initial pose guesses.
///
/// A covisibility edge joins `i` and `j` when their relative rotation angle
/// and translation are below the thresholds and the overlap ratio, computed
/// on the coarsest level in both directions, reaches `min_overlap_ratio`.
pub fn build_graph(nodes: Vec<FrameNode>, ext: &SensorExtrinsics, criteria: &GraphCriteria) -> Result<MatchGraph> {
    check_nodes(&nodes)?;
    let n = nodes.len();
    let sensor_poses: Vec<Pose> = nodes.iter().map(|nd| nd.pose_guess * ext.offset).collect();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();

    let covisible: Vec<Edge> = pairs
        .par_iter()
        .filter_map(|&(i, j)| {
            let rel = relative(&sensor_poses[i], &sensor_poses[j]);
            if rel.rotation_angle() >= criteria.max_angle || rel.translation().norm() >= criteria.max_translation {
                return None;
            }
            let ov_ij = overlap_ratio(&nodes[i], &nodes[j], 0, ext, criteria.overlap_stride);
            if ov_ij < criteria.min_overlap_ratio {
                return None;
            }
            let ov_ji = overlap_ratio(&nodes[j], &nodes[i], 0, ext, criteria.overlap_stride);
            (ov_ji >= criteria.min_overlap_ratio).then_some(Edge {
                i,
                j,
                kind: EdgeKind::Covisibility,
            })
        })
        .collect();

    let odometry = criteria
        .sequential
        .then(|| {
            (1..n).map(|j| Edge {
                i: j - 1,
                j,
                kind: EdgeKind::Odometry,
            })
        })
        .into_iter()
        .flatten();

    MatchGraph::from_edges(nodes, covisible.into_iter().chain(odometry))
}
