//! Sublevel filtration of a columnized slice and its 0-dimensional
//! persistence.
//!
//! The descriptor function is defined on pairs of vertices drawn from the
//! slice points, origins and terminations:
//!
//! * `f(a, b) = 0` when both are terminations;
//! * `f(a, b) = inf` when `a.x != b.x` or `|a.z - b.z| = eps2`;
//! * `f(a, b) = a.x + |a.y - b.y|` otherwise.
//!
//! A vertex enters the filtration at `f(v, v)` and an edge at `f(a, b)`.
//! Only finite edges are materialized. Connectivity inside a column and among
//! terminations is stored as a chain (sorted by y, resp. by column) rather than
//! as a clique: `|a.y - b.y|` is a 1-D metric, so consecutive-neighbour edges
//! produce exactly the same components as all pairs at every threshold.

use std::cmp::Ordering;
use std::fmt::Write as _;

use crate::cloud::Point3;
use crate::error::{Error, Result};
use crate::slicing::{ColumnizedSlice, SliceParams};

pub mod oracle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VertexKind {
    Slice,
    Origin,
    Termination,
}

impl VertexKind {
    /// Offset above the slice plane; z differences are compared on these
    /// offsets so the `eps2` test is exact.
    fn z_offset(self, params: &SliceParams) -> f64 {
        match self {
            VertexKind::Slice => 0.0,
            VertexKind::Origin => params.eps1,
            VertexKind::Termination => params.eps2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vertex {
    pub point: Point3,
    pub kind: VertexKind,
    /// Position of the vertex's column in `ColumnizedSlice::occupied_columns`.
    pub column: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FiltrationGraph {
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
}

/// The pairwise descriptor function.
pub fn eval_f(a: &Vertex, b: &Vertex, params: &SliceParams) -> f64 {
    if a.kind == VertexKind::Termination && b.kind == VertexKind::Termination {
        return 0.0;
    }
    let dz = (a.kind.z_offset(params) - b.kind.z_offset(params)).abs();
    if a.point.x != b.point.x || dz == params.eps2 {
        return f64::INFINITY;
    }
    a.point.x + (a.point.y - b.point.y).abs()
}

/// Vertices of a columnized slice in canonical order: slice points, then
/// origins, then terminations (both by column). Values are `f(v, v)`.
pub fn slice_vertices(cs: &ColumnizedSlice, params: &SliceParams) -> Vec<Vertex> {
    let mut vertices = Vec::with_capacity(cs.slice.points.len() + 2 * cs.column_count());
    let mut push = |point: Point3, kind: VertexKind, column: usize| {
        let mut v = Vertex {
            point,
            kind,
            column,
            value: 0.0,
        };
        v.value = eval_f(&v, &v, params);
        vertices.push(v);
    };
    for (p, &c) in cs.slice.points.iter().zip(&cs.point_columns) {
        push(*p, VertexKind::Slice, c);
    }
    for (c, o) in cs.origins.iter().enumerate() {
        push(*o, VertexKind::Origin, c);
    }
    for (c, t) in cs.terminations.iter().enumerate() {
        push(*t, VertexKind::Termination, c);
    }
    vertices
}

pub fn build_filtration(cs: &ColumnizedSlice, params: &SliceParams) -> FiltrationGraph {
    let vertices = slice_vertices(cs, params);
    let n_points = cs.slice.points.len();
    let n_cols = cs.column_count();
    let origin_of = |c: usize| n_points + c;
    let termination_of = |c: usize| n_points + n_cols + c;

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_cols];
    for (i, &c) in cs.point_columns.iter().enumerate() {
        members[c].push(i);
    }

    let mut edges = Vec::with_capacity(n_points + 3 * n_cols);
    let mut add = |u: usize, v: usize, vertices: &[Vertex]| {
        let value = eval_f(&vertices[u], &vertices[v], params);
        debug_assert!(value.is_finite());
        assert!(
            value >= vertices[u].value.max(vertices[v].value) - 1e-12,
            "edge enters the filtration before its endpoints"
        );
        edges.push(Edge { u, v, value });
    };

    for (c, column) in members.iter_mut().enumerate() {
        column.push(origin_of(c));
        column.sort_by(|&a, &b| {
            vertices[a]
                .point
                .y
                .total_cmp(&vertices[b].point.y)
                .then(a.cmp(&b))
        });
        for w in column.windows(2) {
            add(w[0], w[1], &vertices);
        }
        add(origin_of(c), termination_of(c), &vertices);
    }
    for c in 1..n_cols {
        add(termination_of(c - 1), termination_of(c), &vertices);
    }

    FiltrationGraph { vertices, edges }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PersistencePair {
    pub birth: f64,
    pub death: f64,
}

impl PersistencePair {
    pub fn new(birth: f64, death: f64) -> Self {
        Self { birth, death }
    }

    pub fn persistence(&self) -> f64 {
        self.death - self.birth
    }

    fn cmp_canonical(&self, other: &Self) -> Ordering {
        self.birth
            .total_cmp(&other.birth)
            .then(self.death.total_cmp(&other.death))
    }
}

/// Finite pairs sorted by `(birth, death)`, plus the births of the classes
/// that never die.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PersistenceDiagram {
    pub points: Vec<PersistencePair>,
    pub essential: Vec<f64>,
    /// Largest finite value in the filtration (0 for an empty one).
    pub max_value: f64,
}

impl PersistenceDiagram {
    pub fn from_points(mut points: Vec<PersistencePair>) -> Self {
        points.sort_by(PersistencePair::cmp_canonical);
        let max_value = points.iter().map(|p| p.death).fold(0.0, f64::max);
        Self {
            points,
            essential: Vec::new(),
            max_value,
        }
    }

    pub fn essential_count(&self) -> usize {
        self.essential.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// One `birth death` line per finite pair, 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for p in &self.points {
            let _ = writeln!(out, "{:.16e} {:.16e}", p.birth, p.death);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(Error::parse(i + 1, "expected 'birth death'"));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(i + 1, format!("invalid value '{s}'")))
            };
            let (birth, death) = (parse(fields[0])?, parse(fields[1])?);
            if death < birth {
                return Err(Error::parse(i + 1, "death precedes birth"));
            }
            points.push(PersistencePair::new(birth, death));
        }
        Ok(Self::from_points(points))
    }
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }

    /// Links two roots and returns the new root.
    fn link(&mut self, a: usize, b: usize) -> usize {
        match self.rank[a].cmp(&self.rank[b]) {
            Ordering::Less => {
                self.parent[a] = b;
                b
            }
            Ordering::Greater => {
                self.parent[b] = a;
                a
            }
            Ordering::Equal => {
                self.parent[b] = a;
                self.rank[a] = self.rank[a].saturating_add(1);
                a
            }
        }
    }
}

/// Which of two merging components survives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MergeRule {
    Elder,
    #[allow(dead_code)]
    Younger,
}

/// Standard sublevel H0: edges in nondecreasing value order, union-find with
/// the elder rule. Among equal births the component whose birth vertex has the
/// larger index dies.
pub fn persistence_h0(graph: &FiltrationGraph) -> PersistenceDiagram {
    persistence_with_rule(graph, MergeRule::Elder)
}

/// Deliberately broken variant (the younger component survives a merge) used
/// to check that the oracle harness detects faults.
#[doc(hidden)]
pub fn persistence_h0_mutant(graph: &FiltrationGraph) -> PersistenceDiagram {
    persistence_with_rule(graph, MergeRule::Younger)
}

fn persistence_with_rule(graph: &FiltrationGraph, rule: MergeRule) -> PersistenceDiagram {
    let n = graph.vertices.len();
    let mut uf = UnionFind::new(n);
    // Birth vertex of the component rooted at each root.
    let mut birth_vertex: Vec<usize> = (0..n).collect();
    let key = |v: usize| (graph.vertices[v].value, v);
    let older = |a: usize, b: usize| {
        let (ka, kb) = (key(a), key(b));
        ka.0.total_cmp(&kb.0).then(ka.1.cmp(&kb.1)) == Ordering::Less
    };

    let mut order: Vec<usize> = (0..graph.edges.len()).collect();
    order.sort_by(|&a, &b| {
        graph.edges[a]
            .value
            .total_cmp(&graph.edges[b].value)
            .then(a.cmp(&b))
    });

    let mut points = Vec::new();
    for e in order {
        let edge = graph.edges[e];
        let (ru, rv) = (uf.find(edge.u), uf.find(edge.v));
        if ru == rv {
            continue;
        }
        let (bu, bv) = (birth_vertex[ru], birth_vertex[rv]);
        let u_is_elder = older(bu, bv);
        let (survivor, dying) = match (rule, u_is_elder) {
            (MergeRule::Elder, true) | (MergeRule::Younger, false) => (bu, bv),
            _ => (bv, bu),
        };
        points.push(PersistencePair::new(graph.vertices[dying].value, edge.value));
        let root = uf.link(ru, rv);
        birth_vertex[root] = survivor;
    }

    let mut essential = Vec::new();
    for v in 0..n {
        if uf.find(v) == v {
            essential.push(graph.vertices[birth_vertex[v]].value);
        }
    }
    essential.sort_by(f64::total_cmp);

    let max_value = graph
        .vertices
        .iter()
        .map(|v| v.value)
        .chain(graph.edges.iter().map(|e| e.value))
        .fold(0.0, f64::max);

    let mut diagram = PersistenceDiagram::from_points(points);
    diagram.essential = essential;
    diagram.max_value = max_value;
    diagram
}

/// What to do with classes that never die before vectorization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EssentialPolicy {
    #[default]
    Drop,
    /// Close each essential class at the filtration's largest value.
    CapAtMax,
}

/// Keeps, for every distinct birth, only the pair with the largest death.
/// Pairs on the diagonal and essential classes are dropped.
pub fn filter_diagram(pd: &PersistenceDiagram) -> PersistenceDiagram {
    filter_diagram_with(pd, EssentialPolicy::Drop)
}

pub fn filter_diagram_with(pd: &PersistenceDiagram, policy: EssentialPolicy) -> PersistenceDiagram {
    let mut pairs = pd.points.clone();
    if policy == EssentialPolicy::CapAtMax {
        pairs.extend(
            pd.essential
                .iter()
                .map(|&b| PersistencePair::new(b, pd.max_value.max(b))),
        );
    }
    pairs.retain(|p| p.death > p.birth);
    pairs.sort_by(PersistencePair::cmp_canonical);
    let mut kept: Vec<PersistencePair> = Vec::new();
    for p in pairs {
        match kept.last_mut() {
            Some(last) if last.birth == p.birth => {
                if p.death > last.death {
                    *last = p;
                }
            }
            _ => kept.push(p),
        }
    }
    PersistenceDiagram {
        points: kept,
        essential: Vec::new(),
        max_value: pd.max_value,
    }
}

/// Columnize, filter and reduce one slice.
pub fn slice_diagram(
    cs: &ColumnizedSlice,
    params: &SliceParams,
    policy: EssentialPolicy,
) -> PersistenceDiagram {
    filter_diagram_with(&persistence_h0(&build_filtration(cs, params)), policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slicing::{columnize, Slice};

    fn params() -> SliceParams {
        SliceParams::new(0.1, 0.025).unwrap()
    }

    fn cs_of(points: &[(f64, f64)]) -> ColumnizedSlice {
        let slice = Slice {
            index: 0,
            points: points.iter().map(|&(x, y)| Point3::new(x, y, 0.0)).collect(),
        };
        columnize(&slice, &params()).unwrap()
    }

    fn vertex(x: f64, y: f64, kind: VertexKind) -> Vertex {
        Vertex {
            point: Point3::new(x, y, 0.0),
            kind,
            column: 0,
            value: 0.0,
        }
    }

    #[test]
    fn descriptor_function_cases() {
        let p = params();
        let t1 = vertex(0.025, 0.3, VertexKind::Termination);
        let t2 = vertex(0.075, 0.9, VertexKind::Termination);
        assert_eq!(eval_f(&t1, &t2, &p), 0.0);

        let s = vertex(0.025, 0.2, VertexKind::Slice);
        assert_eq!(eval_f(&s, &t1, &p), f64::INFINITY);

        let s2 = vertex(0.025, 0.5, VertexKind::Slice);
        assert_eq!(eval_f(&s, &s2, &p), 0.025 + (0.2f64 - 0.5).abs());
        assert!((eval_f(&s, &s2, &p) - 0.325).abs() < 1e-15);

        let o = vertex(0.025, 0.1, VertexKind::Origin);
        assert_eq!(eval_f(&o, &t1, &p), 0.025 + (0.1f64 - 0.3).abs());
        let far = vertex(0.05, 0.2, VertexKind::Slice);
        assert_eq!(eval_f(&s, &far, &p), f64::INFINITY);
    }

    #[test]
    fn single_point_graph() {
        let g = build_filtration(&cs_of(&[(0.01, 0.4)]), &params());
        assert_eq!(g.vertices.len(), 3);
        let kinds: Vec<VertexKind> = g.vertices.iter().map(|v| v.kind).collect();
        assert_eq!(
            kinds,
            [VertexKind::Slice, VertexKind::Origin, VertexKind::Termination]
        );
        assert_eq!(g.vertices[2].value, 0.0);
        assert_eq!(g.edges.len(), 2);
        assert_eq!((g.edges[0].u, g.edges[0].v, g.edges[0].value), (0, 1, 0.025));
        assert_eq!((g.edges[1].u, g.edges[1].v, g.edges[1].value), (1, 2, 0.025));
    }

    #[test]
    fn two_column_graph() {
        let g = build_filtration(&cs_of(&[(0.01, 0.4), (0.06, 0.1)]), &params());
        assert_eq!(g.vertices.len(), 6);
        assert_eq!(g.edges.len(), 5);
        let zero_edges: Vec<&Edge> = g.edges.iter().filter(|e| e.value == 0.0).collect();
        assert_eq!(zero_edges.len(), 1);
        assert_eq!(g.vertices[zero_edges[0].u].kind, VertexKind::Termination);
        assert_eq!(g.vertices[zero_edges[0].v].kind, VertexKind::Termination);
    }

    #[test]
    fn edge_count_is_within_clique_bound() {
        let pts: Vec<(f64, f64)> = (0..30)
            .map(|i| ((i % 7) as f64 * 0.013, (i as f64 * 0.37).sin()))
            .collect();
        let cs = cs_of(&pts);
        let g = build_filtration(&cs, &params());
        let mut m = vec![0usize; cs.column_count()];
        for &c in &cs.point_columns {
            m[c] += 1;
        }
        let bound: usize = m.iter().map(|&m| (m + 1) * m / 2).sum::<usize>()
            + cs.column_count()
            + (cs.column_count() - 1);
        assert!(g.edges.len() <= bound);
    }

    #[test]
    fn two_point_column_diagram() {
        // Column x = 0.025 with points at y = 0 and y = 1.
        let cs = cs_of(&[(0.01, 0.0), (0.02, 1.0)]);
        let pd = persistence_h0(&build_filtration(&cs, &params()));
        assert_eq!(pd.essential_count(), 1);
        assert_eq!(pd.essential, vec![0.0]);
        let d = 0.025 + 1.0;
        assert_eq!(
            pd.points,
            vec![
                PersistencePair::new(0.025, 0.025),
                PersistencePair::new(0.025, d),
                PersistencePair::new(0.025, d),
            ]
        );
        assert_eq!(filter_diagram(&pd).points, vec![PersistencePair::new(0.025, d)]);
    }

    #[test]
    fn lone_termination_has_empty_diagram() {
        let g = FiltrationGraph {
            vertices: vec![vertex(0.025, 0.0, VertexKind::Termination)],
            edges: vec![],
        };
        let pd = persistence_h0(&g);
        assert!(pd.is_empty());
        assert_eq!(pd.essential_count(), 1);
    }

    #[test]
    fn filter_keeps_longest_bar_per_birth() {
        let pd = PersistenceDiagram::from_points(vec![
            PersistencePair::new(0.1, 0.3),
            PersistencePair::new(0.1, 0.5),
            PersistencePair::new(0.2, 0.25),
        ]);
        assert_eq!(
            filter_diagram(&pd).points,
            vec![PersistencePair::new(0.1, 0.5), PersistencePair::new(0.2, 0.25)]
        );
        assert!(filter_diagram(&PersistenceDiagram::default()).is_empty());
    }

    #[test]
    fn cap_policy_closes_backbone() {
        let cs = cs_of(&[(0.01, 0.0), (0.02, 1.0)]);
        let pd = persistence_h0(&build_filtration(&cs, &params()));
        let capped = filter_diagram_with(&pd, EssentialPolicy::CapAtMax);
        assert_eq!(capped.points[0], PersistencePair::new(0.0, 1.025));
        assert_eq!(capped.points.len(), 2);
    }

    #[test]
    fn column_extents_become_bars() {
        let pts = [(0.01, 0.1), (0.015, 0.3), (0.02, 0.2), (0.06, 0.7), (0.07, 0.75)];
        let cs = cs_of(&pts);
        let pd = slice_diagram(&cs, &params(), EssentialPolicy::Drop);
        assert_eq!(
            pd.points,
            vec![
                PersistencePair::new(0.025, 0.025 + (0.3 - 0.1)),
                PersistencePair::new(params().column_x(2), params().column_x(2) + (0.75 - 0.7)),
            ]
        );
    }

    #[test]
    fn diagram_text_round_trip() {
        let pd = PersistenceDiagram::from_points(vec![
            PersistencePair::new(0.025, 1.0 / 3.0),
            PersistencePair::new(0.05, 0.05),
        ]);
        let text = pd.to_text();
        assert!(text.starts_with("2.5000000000000001e-2 3.3333333333333331e-1\n"));
        assert_eq!(PersistenceDiagram::from_text(&text).unwrap().points, pd.points);
        assert!(matches!(
            PersistenceDiagram::from_text("1 0\n"),
            Err(Error::Parse { line: 1, .. })
        ));
    }
}
