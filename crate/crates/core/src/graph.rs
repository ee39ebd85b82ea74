//! Connected metric graphs with finite edges and truncated half-lines.
//!
//! Every edge carries an arclength coordinate `s ∈ [0, ℓ]` running from its
//! first endpoint to its second, and a planar polyline embedding of the same
//! length. Half-lines are cut at a configurable length and closed with a fresh
//! degree-1 cap vertex.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Point2 = [f64; 2];

const EMBED_TOL: f64 = 1e-12;
const LOOP_POLYGON_SIDES: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph has no vertices")]
    Empty,
    #[error("graph is disconnected: vertex {0} is unreachable from vertex 0")]
    Disconnected(usize),
    #[error("edge {edge}: length must be positive and finite, got {length}")]
    NonPositiveLength { edge: usize, length: f64 },
    #[error("edge {edge}: endpoint {vertex} does not exist")]
    DanglingEndpoint { edge: usize, vertex: usize },
    #[error("edge {edge}: {reason}")]
    Embedding { edge: usize, reason: String },
    #[error("truncation length must be positive, got {0}")]
    BadTruncation(f64),
    #[error("invalid edge id {0}")]
    InvalidEdge(usize),
    #[error("point s={s} lies outside edge {edge} of length {length}")]
    PointOutOfRange { edge: usize, s: f64, length: f64 },
    #[error("dilated point falls outside the truncated graph ({0})")]
    OutsideGraph(String),
}

/// A point on the graph: an edge and an arclength coordinate along it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphPoint {
    pub edge: usize,
    pub s: f64,
}

impl GraphPoint {
    pub fn new(edge: usize, s: f64) -> Self {
        Self { edge, s }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vertex {
    pub id: usize,
    pub position: Point2,
    /// Artificial endpoint of a truncated half-line.
    pub is_truncation_cap: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: usize,
    /// `endpoints.0` sits at `s = 0`, `endpoints.1` at `s = length`.
    pub endpoints: (usize, usize),
    pub length: f64,
    pub was_half_line: bool,
    pub polyline: Vec<Point2>,
}

impl Edge {
    pub fn is_loop(&self) -> bool {
        self.endpoints.0 == self.endpoints.1
    }

    /// Embedded position at arclength `s`.
    pub fn position_at(&self, s: f64) -> Point2 {
        let mut remaining = s.clamp(0.0, self.length);
        for w in self.polyline.windows(2) {
            let seg = dist2(w[0], w[1]);
            if remaining <= seg || seg == 0.0 {
                if seg == 0.0 {
                    continue;
                }
                let a = remaining / seg;
                return [w[0][0] + a * (w[1][0] - w[0][0]), w[0][1] + a * (w[1][1] - w[0][1])];
            }
            remaining -= seg;
        }
        *self.polyline.last().expect("polyline has at least two points")
    }
}

/// Which end of an edge touches a vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeEnd {
    Start,
    End,
}

// ---------------------------------------------------------------------------
// Input description

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VertexSpec {
    pub position: Point2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub from: usize,
    /// Absent for half-lines.
    #[serde(default)]
    pub to: Option<usize>,
    /// Ignored for half-lines (they are truncated at the graph's truncation length).
    #[serde(default)]
    pub length: Option<f64>,
    #[serde(default)]
    pub half_line: bool,
    /// Ray direction for half-lines, bulge direction for loops.
    #[serde(default)]
    pub direction: Option<Point2>,
    /// Explicit embedding; must start at `from`, end at `to` and have arclength `length`.
    #[serde(default)]
    pub polyline: Option<Vec<Point2>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OriginSpec {
    Vertex { vertex: usize },
    Point { edge: usize, s: f64 },
}

impl Default for OriginSpec {
    fn default() -> Self {
        OriginSpec::Vertex { vertex: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub vertices: Vec<VertexSpec>,
    pub edges: Vec<EdgeSpec>,
    pub truncation_length: f64,
    #[serde(default)]
    pub origin: OriginSpec,
}

impl GraphSpec {
    /// A single bounded edge `[0, length]` on the x-axis.
    pub fn interval(length: f64) -> Self {
        GraphSpec {
            vertices: vec![VertexSpec { position: [0.0, 0.0] }, VertexSpec { position: [length, 0.0] }],
            edges: vec![EdgeSpec {
                from: 0,
                to: Some(1),
                length: Some(length),
                half_line: false,
                direction: None,
                polyline: None,
            }],
            truncation_length: length.max(1.0),
            origin: OriginSpec::Vertex { vertex: 0 },
        }
    }

    /// `legs` half-lines leaving a center vertex at evenly spaced angles,
    /// leg `k` pointing at angle `2πk/legs`.
    pub fn star(legs: usize, truncation_length: f64) -> Self {
        let edges = (0..legs)
            .map(|k| {
                let angle = 2.0 * std::f64::consts::PI * k as f64 / legs as f64;
                EdgeSpec {
                    from: 0,
                    to: None,
                    length: None,
                    half_line: true,
                    direction: Some([angle.cos(), angle.sin()]),
                    polyline: None,
                }
            })
            .collect();
        GraphSpec {
            vertices: vec![VertexSpec { position: [0.0, 0.0] }],
            edges,
            truncation_length,
            origin: OriginSpec::Vertex { vertex: 0 },
        }
    }

    /// A loop of length `loop_length` with one half-line attached at the same vertex.
    pub fn tadpole(loop_length: f64, truncation_length: f64) -> Self {
        GraphSpec {
            vertices: vec![VertexSpec { position: [0.0, 0.0] }],
            edges: vec![
                EdgeSpec {
                    from: 0,
                    to: Some(0),
                    length: Some(loop_length),
                    half_line: false,
                    direction: Some([-1.0, 0.0]),
                    polyline: None,
                },
                EdgeSpec {
                    from: 0,
                    to: None,
                    length: None,
                    half_line: true,
                    direction: Some([1.0, 0.0]),
                    polyline: None,
                },
            ],
            truncation_length,
            origin: OriginSpec::Vertex { vertex: 0 },
        }
    }
}

// ---------------------------------------------------------------------------
// The graph

#[derive(Debug, Clone)]
pub struct MetricGraph {
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
    pub truncation_length: f64,
    pub origin: GraphPoint,
    incidence: Vec<Vec<(usize, EdgeEnd)>>,
    /// All-pairs shortest vertex distances.
    vdist: Vec<Vec<f64>>,
    /// `next_hop[a][b]`: first edge on a shortest path from `a` to `b`.
    next_hop: Vec<Vec<Option<usize>>>,
}

/// A piece of a path: traverse `edge` from coordinate `from_s` to `to_s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSegment {
    pub edge: usize,
    pub from_s: f64,
    pub to_s: f64,
}

impl PathSegment {
    fn len(&self) -> f64 {
        (self.to_s - self.from_s).abs()
    }
}

pub fn build_graph(spec: &GraphSpec) -> Result<MetricGraph, GraphError> {
    if spec.vertices.is_empty() {
        return Err(GraphError::Empty);
    }
    if !(spec.truncation_length > 0.0 && spec.truncation_length.is_finite()) {
        return Err(GraphError::BadTruncation(spec.truncation_length));
    }
    let mut vertices: Vec<Vertex> = spec
        .vertices
        .iter()
        .enumerate()
        .map(|(id, v)| Vertex { id, position: v.position, is_truncation_cap: false })
        .collect();
    let n_input = vertices.len();
    let mut edges = Vec::with_capacity(spec.edges.len());

    for (id, es) in spec.edges.iter().enumerate() {
        if es.from >= n_input {
            return Err(GraphError::DanglingEndpoint { edge: id, vertex: es.from });
        }
        let start = vertices[es.from].position;
        if es.half_line {
            let dir = normalize(es.direction.unwrap_or([1.0, 0.0])).ok_or_else(|| GraphError::Embedding {
                edge: id,
                reason: "half-line direction must be nonzero".into(),
            })?;
            let length = spec.truncation_length;
            let cap_pos = [start[0] + length * dir[0], start[1] + length * dir[1]];
            let cap = vertices.len();
            vertices.push(Vertex { id: cap, position: cap_pos, is_truncation_cap: true });
            edges.push(Edge { id, endpoints: (es.from, cap), length, was_half_line: true, polyline: vec![start, cap_pos] });
            continue;
        }
        let to = es.to.ok_or_else(|| GraphError::Embedding {
            edge: id,
            reason: "bounded edge needs a `to` endpoint".into(),
        })?;
        if to >= n_input {
            return Err(GraphError::DanglingEndpoint { edge: id, vertex: to });
        }
        let length = es.length.unwrap_or(f64::NAN);
        if !(length > 0.0 && length.is_finite()) {
            return Err(GraphError::NonPositiveLength { edge: id, length });
        }
        let end = vertices[to].position;
        let polyline = match &es.polyline {
            Some(pl) => {
                check_polyline(id, pl, start, end, length)?;
                pl.clone()
            }
            None if es.from == to => loop_polygon(start, length, es.direction.unwrap_or([0.0, 1.0]), id)?,
            None => bent_segment(start, end, length, id)?,
        };
        edges.push(Edge { id, endpoints: (es.from, to), length, was_half_line: false, polyline });
    }

    let mut incidence = vec![Vec::new(); vertices.len()];
    for e in &edges {
        incidence[e.endpoints.0].push((e.id, EdgeEnd::Start));
        incidence[e.endpoints.1].push((e.id, EdgeEnd::End));
    }

    // connectivity by BFS over incidence
    let mut seen = vec![false; vertices.len()];
    let mut queue = std::collections::VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(v) = queue.pop_front() {
        for &(e, _) in &incidence[v] {
            let (a, b) = edges[e].endpoints;
            for w in [a, b] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    if let Some(v) = seen.iter().position(|s| !s) {
        return Err(GraphError::Disconnected(v));
    }

    let (vdist, next_hop) = all_pairs(&vertices, &edges, &incidence);
    let mut g = MetricGraph {
        vertices,
        edges,
        truncation_length: spec.truncation_length,
        origin: GraphPoint::new(0, 0.0),
        incidence,
        vdist,
        next_hop,
    };
    g.origin = match spec.origin {
        OriginSpec::Vertex { vertex } => {
            if vertex >= n_input {
                return Err(GraphError::DanglingEndpoint { edge: usize::MAX, vertex });
            }
            g.vertex_point(vertex)
        }
        OriginSpec::Point { edge, s } => {
            let p = GraphPoint::new(edge, s);
            g.check_point(p)?;
            p
        }
    };
    Ok(g)
}

fn all_pairs(
    vertices: &[Vertex],
    edges: &[Edge],
    incidence: &[Vec<(usize, EdgeEnd)>],
) -> (Vec<Vec<f64>>, Vec<Vec<Option<usize>>>) {
    let n = vertices.len();
    let mut dist = vec![vec![f64::INFINITY; n]; n];
    let mut hop = vec![vec![None; n]; n];
    for src in 0..n {
        // Dijkstra; graphs here are tiny so a linear scan for the minimum is fine
        let d = &mut dist[src];
        let h = &mut hop[src];
        let mut done = vec![false; n];
        d[src] = 0.0;
        for _ in 0..n {
            let Some(u) = (0..n).filter(|&i| !done[i] && d[i].is_finite()).min_by(|&a, &b| d[a].total_cmp(&d[b]))
            else {
                break;
            };
            done[u] = true;
            for &(e, end) in &incidence[u] {
                let edge = &edges[e];
                let w = match end {
                    EdgeEnd::Start => edge.endpoints.1,
                    EdgeEnd::End => edge.endpoints.0,
                };
                let nd = d[u] + edge.length;
                if nd < d[w] {
                    d[w] = nd;
                    h[w] = if u == src { Some(e) } else { h[u] };
                }
            }
        }
    }
    (dist, hop)
}

impl MetricGraph {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn incident(&self, v: usize) -> &[(usize, EdgeEnd)] {
        &self.incidence[v]
    }

    /// Number of edge ends at `v` (a loop counts twice).
    pub fn degree(&self, v: usize) -> usize {
        self.incidence[v].len()
    }

    pub fn caps(&self) -> impl Iterator<Item = &Vertex> {
        self.vertices.iter().filter(|v| v.is_truncation_cap)
    }

    pub fn vertex_point(&self, v: usize) -> GraphPoint {
        let (e, end) = self.incidence[v][0];
        match end {
            EdgeEnd::Start => GraphPoint::new(e, 0.0),
            EdgeEnd::End => GraphPoint::new(e, self.edges[e].length),
        }
    }

    pub fn check_point(&self, p: GraphPoint) -> Result<(), GraphError> {
        let edge = self.edges.get(p.edge).ok_or(GraphError::InvalidEdge(p.edge))?;
        if !(p.s >= -EMBED_TOL * edge.length && p.s <= edge.length * (1.0 + EMBED_TOL)) {
            return Err(GraphError::PointOutOfRange { edge: p.edge, s: p.s, length: edge.length });
        }
        Ok(())
    }

    /// Embedded planar position of a graph point.
    pub fn position(&self, p: GraphPoint) -> Point2 {
        self.edges[p.edge].position_at(p.s)
    }

    /// Embedded position relative to the origin's embedded position.
    pub fn centered_position(&self, p: GraphPoint) -> Point2 {
        let x = self.position(p);
        let o = self.position(self.origin);
        [x[0] - o[0], x[1] - o[1]]
    }

    /// Sum of lengths of all edges that were bounded in the input graph.
    pub fn compact_core(&self) -> (Vec<usize>, f64) {
        let ids: Vec<usize> = self.edges.iter().filter(|e| !e.was_half_line).map(|e| e.id).collect();
        let total = ids.iter().map(|&e| self.edges[e].length).sum();
        (ids, total)
    }

    pub fn path_distance(&self, a: GraphPoint, b: GraphPoint) -> Result<f64, GraphError> {
        self.check_point(a)?;
        self.check_point(b)?;
        Ok(self.shortest_path(a, b).0)
    }

    /// Shortest path between two points as a list of edge traversals.
    pub fn shortest_path(&self, a: GraphPoint, b: GraphPoint) -> (f64, Vec<PathSegment>) {
        let ea = &self.edges[a.edge];
        let eb = &self.edges[b.edge];
        let mut best = f64::INFINITY;
        let mut best_path = Vec::new();
        if a.edge == b.edge {
            best = (a.s - b.s).abs();
            best_path = vec![PathSegment { edge: a.edge, from_s: a.s, to_s: b.s }];
        }
        let ends_a = [(ea.endpoints.0, 0.0), (ea.endpoints.1, ea.length)];
        let ends_b = [(eb.endpoints.0, 0.0), (eb.endpoints.1, eb.length)];
        for &(va, sa) in &ends_a {
            for &(vb, sb) in &ends_b {
                let d = (a.s - sa).abs() + self.vdist[va][vb] + (b.s - sb).abs();
                if d < best - 1e-15 * d.max(1.0) {
                    best = d;
                    let mut path = vec![PathSegment { edge: a.edge, from_s: a.s, to_s: sa }];
                    path.extend(self.vertex_path(va, vb));
                    path.push(PathSegment { edge: b.edge, from_s: sb, to_s: b.s });
                    path.retain(|seg| seg.len() > 0.0);
                    best_path = path;
                }
            }
        }
        (best, best_path)
    }

    fn vertex_path(&self, from: usize, to: usize) -> Vec<PathSegment> {
        let mut path = Vec::new();
        let mut cur = from;
        while cur != to {
            let e = self.next_hop[cur][to].expect("connected graph");
            let edge = &self.edges[e];
            let (seg, next) = if edge.endpoints.0 == cur
                && (self.vdist[edge.endpoints.1][to] + edge.length - self.vdist[cur][to]).abs()
                    <= 1e-12 * self.vdist[cur][to].max(1.0)
            {
                (PathSegment { edge: e, from_s: 0.0, to_s: edge.length }, edge.endpoints.1)
            } else {
                (PathSegment { edge: e, from_s: edge.length, to_s: 0.0 }, edge.endpoints.0)
            };
            path.push(seg);
            cur = next;
        }
        path
    }

    /// Point at arclength `r` along a path, clamped to its end.
    fn point_along(path: &[PathSegment], mut r: f64) -> Option<GraphPoint> {
        let last = path.last()?;
        for seg in path {
            let l = seg.len();
            if r <= l {
                let dir = (seg.to_s - seg.from_s).signum();
                return Some(GraphPoint::new(seg.edge, seg.from_s + dir * r));
            }
            r -= l;
        }
        Some(GraphPoint::new(last.edge, last.to_s))
    }

    /// The point `εx`: the point at distance `ε·d(0, x)` from the origin along a
    /// shortest path from the origin to `x`.
    pub fn dilate(&self, x: GraphPoint, eps: f64) -> GraphPoint {
        let (d, path) = self.shortest_path(self.origin, x);
        if path.is_empty() {
            return self.origin;
        }
        Self::point_along(&path, eps * d).unwrap_or(self.origin)
    }

    /// A point `y` with `εy = z`, found by continuing the geodesic from the
    /// origin to `z` along `z`'s own edge.
    pub fn undilate(&self, z: GraphPoint, eps: f64) -> Result<GraphPoint, GraphError> {
        self.check_point(z)?;
        let (d, path) = self.shortest_path(self.origin, z);
        if d == 0.0 {
            return Ok(z);
        }
        let extra = d / eps - d;
        let last = path.last().expect("nonempty path");
        let dir = if last.edge == z.edge { (last.to_s - last.from_s).signum() } else { 1.0 };
        let s = z.s + dir * extra;
        let len = self.edges[z.edge].length;
        if s < 0.0 || s > len {
            return Err(GraphError::OutsideGraph(format!(
                "edge {} would need s={s:.4} but has length {len:.4}; increase the truncation length or ε",
                z.edge
            )));
        }
        Ok(GraphPoint::new(z.edge, s))
    }
}

// ---------------------------------------------------------------------------
// embedding helpers

fn dist2(a: Point2, b: Point2) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn normalize(v: Point2) -> Option<Point2> {
    let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
    (n > 0.0 && n.is_finite()).then(|| [v[0] / n, v[1] / n])
}

pub fn polyline_length(pl: &[Point2]) -> f64 {
    pl.windows(2).map(|w| dist2(w[0], w[1])).sum()
}

fn check_polyline(edge: usize, pl: &[Point2], start: Point2, end: Point2, length: f64) -> Result<(), GraphError> {
    let err = |reason: String| GraphError::Embedding { edge, reason };
    if pl.len() < 2 {
        return Err(err("polyline needs at least two points".into()));
    }
    let tol = 1e-9 * length.max(1.0);
    if dist2(pl[0], start) > tol || dist2(pl[pl.len() - 1], end) > tol {
        return Err(err("polyline must start and end at the edge's vertex positions".into()));
    }
    let arc = polyline_length(pl);
    if (arc - length).abs() > EMBED_TOL * length {
        return Err(err(format!("polyline arclength {arc} differs from edge length {length}")));
    }
    Ok(())
}

/// Straight segment if the chord matches the length, otherwise an isosceles
/// two-piece path bulging to the left of the chord.
fn bent_segment(start: Point2, end: Point2, length: f64, edge: usize) -> Result<Vec<Point2>, GraphError> {
    let chord = dist2(start, end);
    if (chord - length).abs() <= EMBED_TOL * length {
        return Ok(vec![start, end]);
    }
    if chord > length {
        return Err(GraphError::Embedding {
            edge,
            reason: format!("vertex positions are {chord} apart but the edge has length {length}"),
        });
    }
    let mid = [(start[0] + end[0]) / 2.0, (start[1] + end[1]) / 2.0];
    let height = ((length / 2.0).powi(2) - (chord / 2.0).powi(2)).sqrt();
    let normal = if chord > 0.0 {
        [-(end[1] - start[1]) / chord, (end[0] - start[0]) / chord]
    } else {
        [0.0, 1.0]
    };
    Ok(vec![start, [mid[0] + height * normal[0], mid[1] + height * normal[1]], end])
}

/// Regular polygon of perimeter `length` through `at`, bulging towards `dir`.
fn loop_polygon(at: Point2, length: f64, dir: Point2, edge: usize) -> Result<Vec<Point2>, GraphError> {
    let dir = normalize(dir).ok_or_else(|| GraphError::Embedding { edge, reason: "loop direction must be nonzero".into() })?;
    let k = LOOP_POLYGON_SIDES;
    let radius = length / (2.0 * k as f64 * (std::f64::consts::PI / k as f64).sin());
    let center = [at[0] + radius * dir[0], at[1] + radius * dir[1]];
    let phase = (-dir[1]).atan2(-dir[0]);
    let mut pts: Vec<Point2> = (0..k)
        .map(|j| {
            let a = phase + 2.0 * std::f64::consts::PI * j as f64 / k as f64;
            [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
        })
        .collect();
    pts[0] = at;
    pts.push(at);
    Ok(pts)
}
