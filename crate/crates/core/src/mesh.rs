//! Conforming triangulations of the unit square and the unit disk.
//!
//! Boundary edges are oriented counterclockwise (domain on the left) and
//! chained into a single closed loop that starts at the boundary vertex
//! with the smallest index.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type Point = [f64; 2];

#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<[usize; 2]>,
    boundary_nodes: Vec<usize>,
    interior_nodes: Vec<usize>,
    h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeshQuality {
    pub min_angle: f64,
    pub max_angle: f64,
    pub non_obtuse: bool,
    pub h: f64,
}

/// A named mesh family member: `{"type": "square", "n": 32}` or
/// `{"type": "disk", "m": 128, "rings": 16}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum DomainSpec {
    Square { n: usize },
    Disk { m: usize, rings: usize },
}

impl DomainSpec {
    pub fn build(self) -> Result<Mesh> {
        match self {
            DomainSpec::Square { n } => build_square(n),
            DomainSpec::Disk { m, rings } => build_disk(m, rings),
        }
    }

    /// The same family at twice the resolution.
    pub fn refined(self) -> Self {
        match self {
            DomainSpec::Square { n } => DomainSpec::Square { n: 2 * n },
            DomainSpec::Disk { m, rings } => DomainSpec::Disk {
                m: 2 * m,
                rings: 2 * rings,
            },
        }
    }
}

/// Slack on the right-angle test; right isosceles elements count as non-obtuse.
pub const RIGHT_ANGLE_SLACK: f64 = 1e-12;

#[derive(Serialize)]
struct MeshDocument<'a> {
    vertices: &'a [Point],
    triangles: &'a [[usize; 3]],
    boundary: &'a [usize],
}

impl Mesh {
    /// Validates a triangulation and derives its boundary loop.
    pub fn new(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::InvalidMesh("no triangles".into()));
        }
        let nv = vertices.len();
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= nv) {
                return Err(Error::InvalidMesh(format!("triangle {t} references a missing vertex")));
            }
            let area = signed_area(&vertices, tri);
            if !(area > 0.0) {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} has non-positive signed area {area:e}"
                )));
            }
        }

        // Directed edge -> owning triangle count on the undirected edge.
        let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in &triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *edge_count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        if let Some((e, c)) = edge_count.iter().find(|(_, &c)| c > 2) {
            return Err(Error::InvalidMesh(format!("edge {e:?} shared by {c} triangles")));
        }

        let mut next: HashMap<usize, usize> = HashMap::new();
        for tri in &triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                if edge_count[&(a.min(b), a.max(b))] == 1 && next.insert(a, b).is_some() {
                    return Err(Error::InvalidMesh(format!(
                        "boundary is not a simple loop at vertex {a}"
                    )));
                }
            }
        }
        let start = *next
            .keys()
            .min()
            .ok_or_else(|| Error::InvalidMesh("mesh has no boundary".into()))?;
        let mut boundary_nodes = vec![start];
        let mut boundary_edges = Vec::with_capacity(next.len());
        let mut cur = start;
        loop {
            let nxt = next[&cur];
            boundary_edges.push([cur, nxt]);
            if nxt == start {
                break;
            }
            if boundary_nodes.len() > next.len() {
                return Err(Error::InvalidMesh("boundary walk does not close".into()));
            }
            boundary_nodes.push(nxt);
            cur = nxt;
        }
        if boundary_nodes.len() != next.len() {
            return Err(Error::InvalidMesh(format!(
                "boundary has {} components worth of edges; expected a single loop",
                if boundary_nodes.len() < next.len() {
                    "several"
                } else {
                    "inconsistent"
                }
            )));
        }

        let mut on_boundary = vec![false; nv];
        for &b in &boundary_nodes {
            on_boundary[b] = true;
        }
        let mut used = vec![false; nv];
        for tri in &triangles {
            for &v in tri {
                used[v] = true;
            }
        }
        if let Some(v) = used.iter().position(|&u| !u) {
            return Err(Error::InvalidMesh(format!("vertex {v} belongs to no triangle")));
        }
        let interior_nodes = (0..nv).filter(|&v| !on_boundary[v]).collect();

        let h = edge_count
            .keys()
            .map(|&(a, b)| dist(vertices[a], vertices[b]))
            .fold(0.0, f64::max);

        Ok(Self {
            vertices,
            triangles,
            boundary_edges,
            boundary_nodes,
            interior_nodes,
            h,
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Boundary edges in counterclockwise order along the boundary loop.
    pub fn boundary_edges(&self) -> &[[usize; 2]] {
        &self.boundary_edges
    }

    /// Boundary vertices in the order the loop visits them.
    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    /// Non-boundary vertices in increasing index order.
    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior_nodes
    }

    /// Maximum edge length.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        (3 * self.triangles.len() + self.boundary_edges.len()) / 2
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        signed_area(&self.vertices, &self.triangles[t])
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.triangles[t].map(|v| self.vertices[v]);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    pub fn boundary_length(&self) -> f64 {
        self.boundary_edges
            .iter()
            .map(|&[a, b]| dist(self.vertices[a], self.vertices[b]))
            .sum()
    }

    pub fn boundary_coords(&self) -> Vec<Point> {
        self.boundary_nodes.iter().map(|&v| self.vertices[v]).collect()
    }

    pub fn quality(&self) -> MeshQuality {
        let mut min_angle = f64::INFINITY;
        let mut max_angle = 0.0f64;
        for tri in &self.triangles {
            for k in 0..3 {
                let p = self.vertices[tri[k]];
                let q = self.vertices[tri[(k + 1) % 3]];
                let r = self.vertices[tri[(k + 2) % 3]];
                let u = [q[0] - p[0], q[1] - p[1]];
                let v = [r[0] - p[0], r[1] - p[1]];
                let cos = (u[0] * v[0] + u[1] * v[1]) / (norm(u) * norm(v));
                let angle = cos.clamp(-1.0, 1.0).acos();
                min_angle = min_angle.min(angle);
                max_angle = max_angle.max(angle);
            }
        }
        MeshQuality {
            min_angle,
            max_angle,
            non_obtuse: max_angle <= FRAC_PI_2 + RIGHT_ANGLE_SLACK,
            h: self.h,
        }
    }

    /// `{"vertices": [[x,y],...], "triangles": [[i,j,k],...], "boundary": [i0,i1,...]}`
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(MeshDocument {
            vertices: &self.vertices,
            triangles: &self.triangles,
            boundary: &self.boundary_nodes,
        })
        .expect("mesh document is always serializable")
    }
}

/// Uniform right-isosceles triangulation of `[0,1]^2` with `n` cells per side.
pub fn build_square(n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::InvalidArgument("square mesh needs n >= 1".into()));
    }
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([i as f64 / n as f64, j as f64 / n as f64]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (v00, v10, v11, v01) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    Mesh::new(vertices, triangles)
}

struct Ring {
    count: usize,
    radius: f64,
    phase: f64,
    halved: bool,
}

/// Triangulation of the regular `m`-gon inscribed in the unit circle.
///
/// Vertices sit on `rings` concentric rings (the outermost is the boundary)
/// around a center vertex. Going inward, a ring either keeps the vertex
/// count of its outer neighbour, staggered by half a step, or halves it.
/// Radii follow `k / rings` but are pulled inward where needed so that
/// every triangle is non-obtuse:
///
/// * equal counts `N`: `r_in <= (cos(pi/N) - sin(pi/N)) r_out`;
/// * halving to `N`: `r_in <= r_out / (cos(pi/N) + sin(pi/N))`.
pub fn build_disk(m: usize, rings: usize) -> Result<Mesh> {
    if m < 8 {
        return Err(Error::InvalidArgument(format!("disk mesh needs m >= 8, got {m}")));
    }
    if rings < 1 {
        return Err(Error::InvalidArgument("disk mesh needs at least one ring".into()));
    }

    // rings_desc[0] is the boundary ring.
    let mut rings_desc = vec![Ring {
        count: m,
        radius: 1.0,
        phase: 0.0,
        halved: false,
    }];
    for k in (1..rings).rev() {
        let outer = rings_desc.last().expect("at least the boundary ring");
        let target = k as f64 / rings as f64;
        let n = outer.count;
        let half = n / 2;
        let halve_limit = {
            let a = PI / half as f64;
            outer.radius / (a.cos() + a.sin())
        };
        // A ring of four cannot be followed by a staggered copy of itself.
        let min_half = if k == 1 { 4 } else { 8 };
        let ring = if n % 2 == 0 && half >= min_half && target <= halve_limit {
            Ring {
                count: half,
                radius: target,
                phase: outer.phase,
                halved: true,
            }
        } else {
            let a = PI / n as f64;
            let limit = outer.radius * (a.cos() - a.sin());
            Ring {
                count: n,
                radius: target.min(limit),
                phase: outer.phase + a,
                halved: false,
            }
        };
        rings_desc.push(ring);
    }
    rings_desc.reverse();

    let mut vertices = vec![[0.0, 0.0]];
    let mut offsets = Vec::with_capacity(rings_desc.len());
    let last = rings_desc.len() - 1;
    for (r, ring) in rings_desc.iter().enumerate() {
        offsets.push(vertices.len());
        for i in 0..ring.count {
            if r == last {
                let theta = 2.0 * PI * i as f64 / ring.count as f64;
                vertices.push([theta.cos(), theta.sin()]);
            } else {
                let theta = ring.phase + 2.0 * PI * i as f64 / ring.count as f64;
                vertices.push([ring.radius * theta.cos(), ring.radius * theta.sin()]);
            }
        }
    }

    let mut triangles = Vec::new();
    let mut push = |tri: [usize; 3], vs: &Vec<Point>| {
        if signed_area(vs, &tri) > 0.0 {
            triangles.push(tri);
        } else {
            triangles.push([tri[0], tri[2], tri[1]]);
        }
    };

    let first = &rings_desc[0];
    for i in 0..first.count {
        push([0, offsets[0] + i, offsets[0] + (i + 1) % first.count], &vertices);
    }
    for r in 1..rings_desc.len() {
        let (inner, outer) = (&rings_desc[r - 1], &rings_desc[r]);
        let (oi, oo) = (offsets[r - 1], offsets[r]);
        let ni = inner.count;
        let no = outer.count;
        if inner.halved {
            // inner vertex j sits below outer vertex 2j.
            for j in 0..ni {
                let (a, b, c) = (oo + 2 * j, oo + 2 * j + 1, oo + (2 * j + 2) % no);
                let (p, q) = (oi + j, oi + (j + 1) % ni);
                push([p, a, b], &vertices);
                push([q, b, c], &vertices);
                push([p, b, q], &vertices);
            }
        } else {
            // inner vertex i sits halfway between outer vertices i and i+1.
            for i in 0..no {
                let (a, b) = (oo + i, oo + (i + 1) % no);
                let (p, q) = (oi + i, oi + (i + 1) % ni);
                push([a, b, p], &vertices);
                push([p, b, q], &vertices);
            }
        }
    }
    Mesh::new(vertices, triangles)
}

fn signed_area(vertices: &[Point], tri: &[usize; 3]) -> f64 {
    let [a, b, c] = tri.map(|v| vertices[v]);
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn square_counts() {
        let m = build_square(1).unwrap();
        assert_eq!(
            (m.num_vertices(), m.triangles().len(), m.boundary_edges().len()),
            (4, 2, 4)
        );
        let m = build_square(2).unwrap();
        assert_eq!(
            (m.num_vertices(), m.triangles().len(), m.boundary_edges().len()),
            (9, 8, 8)
        );
        let q = m.quality();
        assert!((q.max_angle - FRAC_PI_2).abs() < 1e-12);
        assert!(q.non_obtuse);
        assert!((m.h() - 2f64.sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn square_rejects_zero() {
        assert!(build_square(0).is_err());
    }

    #[test]
    fn square_quality_angles() {
        let q = build_square(4).unwrap().quality();
        assert!(q.non_obtuse);
        assert!((q.min_angle - FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn square_area_is_one() {
        for n in [1, 2, 3, 7, 16, 33, 64] {
            let m = build_square(n).unwrap();
            assert!((m.area() - 1.0).abs() < 1e-12, "n = {n}");
        }
    }

    #[test]
    fn square_boundary_starts_at_origin_ccw() {
        let m = build_square(3).unwrap();
        assert_eq!(m.boundary_nodes()[0], 0);
        assert_eq!(m.boundary_nodes()[1], 1);
        assert_eq!(m.interior_nodes().len(), 4);
    }

    #[test]
    fn fan_disk() {
        let m = build_disk(8, 1).unwrap();
        assert_eq!(
            (m.num_vertices(), m.triangles().len(), m.boundary_edges().len()),
            (9, 8, 8)
        );
        let expected = 16.0 * (PI / 8.0).sin();
        assert!((m.boundary_length() - expected).abs() < 1e-12);
        assert!((expected - 6.1229).abs() < 1e-4);
    }

    #[test]
    fn fine_disk_perimeter() {
        let m = build_disk(256, 32).unwrap();
        assert!((m.boundary_length() - 2.0 * PI).abs() < 1e-3);
        for &b in m.boundary_nodes() {
            let [x, y] = m.vertices()[b];
            assert!((x * x + y * y - 1.0).abs() < 1e-12);
        }
        assert_eq!(m.boundary_nodes().len(), 256);
    }

    #[test]
    fn disk_rejects_bad_parameters() {
        assert!(build_disk(7, 2).is_err());
        assert!(build_disk(8, 0).is_err());
    }

    #[test]
    fn disks_are_non_obtuse() {
        for (m, rings) in [
            (8, 1),
            (8, 2),
            (9, 3),
            (16, 4),
            (32, 4),
            (64, 8),
            (12, 10),
            (128, 16),
            (256, 32),
        ] {
            let q = build_disk(m, rings).unwrap().quality();
            assert!(q.non_obtuse, "m={m} rings={rings} max angle {}", q.max_angle);
            assert!(q.min_angle > 0.0, "m={m} rings={rings} min angle {}", q.min_angle);
        }
    }

    #[test]
    fn euler_characteristic() {
        let meshes = [
            build_square(1).unwrap(),
            build_square(5).unwrap(),
            build_disk(8, 1).unwrap(),
            build_disk(24, 5).unwrap(),
            build_disk(64, 8).unwrap(),
        ];
        for m in &meshes {
            let (v, e, f) = (
                m.num_vertices() as i64,
                m.num_edges() as i64,
                m.triangles().len() as i64,
            );
            assert_eq!(v - e + f, 1);
        }
    }

    #[test]
    fn obtuse_triangle_detected() {
        let m = Mesh::new(vec![[0.0, 0.0], [1.0, 0.0], [0.5, 0.1]], vec![[0, 1, 2]]).unwrap();
        let q = m.quality();
        assert!(!q.non_obtuse);
        // law of cosines at the apex: cos = (0.26 + 0.26 - 1) / (2 * 0.26)
        let apex = ((0.26 + 0.26 - 1.0) / (2.0 * 0.26f64)).acos();
        assert!((q.max_angle - apex).abs() < 1e-12);
    }

    #[test]
    fn rejects_clockwise_triangle() {
        let err = Mesh::new(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]], vec![[0, 1, 2]]);
        assert!(matches!(err, Err(Error::InvalidMesh(_))));
    }

    #[test]
    fn rejects_two_boundary_loops() {
        let vertices = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [5.0, 0.0], [6.0, 0.0], [5.0, 1.0]];
        let err = Mesh::new(vertices, vec![[0, 1, 2], [3, 4, 5]]);
        assert!(err.is_err());
    }

    #[test]
    fn json_export_shape() {
        let m = build_square(1).unwrap();
        let v = m.to_json();
        assert_eq!(v["vertices"].as_array().unwrap().len(), 4);
        assert_eq!(v["triangles"][0], serde_json::json!([0, 1, 3]));
        assert_eq!(v["boundary"], serde_json::json!([0, 1, 3, 2]));
    }

    #[test]
    fn boundary_edge_owned_by_one_triangle() {
        let m = build_disk(16, 3).unwrap();
        for &[a, b] in m.boundary_edges() {
            let owners = m
                .triangles()
                .iter()
                .filter(|t| t.contains(&a) && t.contains(&b))
                .count();
            assert_eq!(owners, 1);
        }
    }
}
