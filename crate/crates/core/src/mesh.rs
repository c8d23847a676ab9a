//! Disk triangulations built from a refined hexagon fan mapped onto
//! concentric circles.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    /// Counterclockwise along the circle.
    pub boundary_nodes: Vec<usize>,
    pub boundary_edges: Vec<[usize; 2]>,
    /// Diameter of the domain.
    pub char_length: f64,
    /// Number of vertex rings; the boundary is ring `rings`.
    pub rings: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFrame {
    pub node: usize,
    pub n: [f64; 2],
    pub tau: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshQuality {
    pub min_angle_deg: f64,
    pub max_aspect_ratio: f64,
    pub h_max: f64,
    pub degenerate: usize,
}

/// Index of node `k` (taken mod `6j`) on ring `j`.
fn ring_index(j: usize, k: usize) -> usize {
    if j == 0 {
        0
    } else {
        1 + 3 * j * (j - 1) + k % (6 * j)
    }
}

fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

pub const MAX_REFINEMENT: usize = 8;

/// Builds the disk of diameter `ell` centered at the origin with `2^level` rings.
pub fn build_disk_mesh(level: usize, ell: f64) -> Result<Mesh> {
    if level > MAX_REFINEMENT {
        return Err(Error::InvalidInput(format!("refinement level {level} exceeds {MAX_REFINEMENT}")));
    }
    if !(ell > 0.0 && ell.is_finite()) {
        return Err(Error::InvalidInput(format!("ell must be positive, got {ell}")));
    }
    let n = 1usize << level;
    let half = ell / 2.0;
    let mut vertices = vec![[0.0, 0.0]];
    for j in 1..=n {
        let r = j as f64 / n as f64;
        for k in 0..6 * j {
            let t = 2.0 * PI * k as f64 / (6 * j) as f64;
            vertices.push([half * (r * t.cos()), half * (r * t.sin())]);
        }
    }
    let mut triangles = Vec::with_capacity(6 * n * n);
    for j in 0..n {
        for s in 0..6 {
            let inner = |i: usize| if j == 0 { 0 } else { ring_index(j, s * j + i) };
            let outer = |i: usize| ring_index(j + 1, s * (j + 1) + i);
            for i in 0..=j {
                triangles.push([outer(i), outer(i + 1), inner(i)]);
            }
            for i in 0..j {
                triangles.push([inner(i), outer(i + 1), inner(i + 1)]);
            }
        }
    }
    for t in &mut triangles {
        if signed_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]) < 0.0 {
            t.swap(1, 2);
        }
    }
    let boundary_nodes: Vec<usize> = (0..6 * n).map(|k| ring_index(n, k)).collect();
    let boundary_edges = (0..6 * n)
        .map(|k| [boundary_nodes[k], boundary_nodes[(k + 1) % (6 * n)]])
        .collect();
    Ok(Mesh { vertices, triangles, boundary_nodes, boundary_edges, char_length: ell, rings: n })
}

/// Outward unit normal at a point of the circle centered at the origin.
pub fn radial_frame(x: [f64; 2]) -> Option<([f64; 2], [f64; 2])> {
    let r = x[0].hypot(x[1]);
    if r == 0.0 || !r.is_finite() {
        return None;
    }
    let n = [x[0] / r, x[1] / r];
    Some((n, [-n[1], n[0]]))
}

impl Mesh {
    pub fn centroid(&self) -> [f64; 2] {
        let mut c = [0.0, 0.0];
        for v in &self.vertices {
            c[0] += v[0];
            c[1] += v[1];
        }
        let k = self.vertices.len() as f64;
        [c[0] / k, c[1] / k]
    }

    /// Boundary angle of boundary node `k` (position along the loop).
    pub fn boundary_angle(&self, k: usize) -> f64 {
        2.0 * PI * k as f64 / self.boundary_nodes.len() as f64
    }

    pub fn boundary_frames(&self) -> Result<Vec<BoundaryFrame>> {
        self.boundary_nodes
            .iter()
            .map(|&i| {
                let (n, tau) = radial_frame(self.vertices[i])
                    .ok_or_else(|| Error::Mesh(format!("boundary node {i} coincides with the centroid")))?;
                Ok(BoundaryFrame { node: i, n, tau })
            })
            .collect()
    }

    pub fn quality(&self) -> MeshQuality {
        let mut min_angle = f64::INFINITY;
        let mut max_aspect: f64 = 0.0;
        let mut h_max: f64 = 0.0;
        let mut degenerate = 0;
        for t in &self.triangles {
            let p = [self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]];
            let area = signed_area(p[0], p[1], p[2]);
            let len = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).hypot(a[1] - b[1]);
            let e = [len(p[1], p[2]), len(p[2], p[0]), len(p[0], p[1])];
            if area <= 0.0 {
                degenerate += 1;
                continue;
            }
            let longest = e.iter().cloned().fold(0.0, f64::max);
            h_max = h_max.max(longest);
            for i in 0..3 {
                let (a, b, c) = (e[i], e[(i + 1) % 3], e[(i + 2) % 3]);
                let cos = ((b * b + c * c - a * a) / (2.0 * b * c)).clamp(-1.0, 1.0);
                min_angle = min_angle.min(cos.acos().to_degrees());
            }
            // circumradius over twice the inradius; 1 for an equilateral triangle
            let s = 0.5 * (e[0] + e[1] + e[2]);
            let inr = area / s;
            let circ = e[0] * e[1] * e[2] / (4.0 * area);
            max_aspect = max_aspect.max(circ / (2.0 * inr));
        }
        MeshQuality { min_angle_deg: min_angle, max_aspect_ratio: max_aspect, h_max, degenerate }
    }

    /// Checks the structural invariants and returns a description of the first violation.
    pub fn validate(&self) -> Result<()> {
        let r = self.char_length / 2.0;
        for &b in &self.boundary_nodes {
            let v = self.vertices[b];
            if (v[0].hypot(v[1]) - r).abs() > 1e-12 * self.char_length {
                return Err(Error::Mesh(format!("boundary node {b} off the circle")));
            }
        }
        for (i, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&k| k >= self.vertices.len()) {
                return Err(Error::Mesh(format!("triangle {i} references a missing vertex")));
            }
            if signed_area(self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]) <= 0.0 {
                return Err(Error::Mesh(format!("triangle {i} is inverted or degenerate")));
            }
        }
        if !boundary_loop_closed(self) {
            return Err(Error::Mesh("boundary edges do not form a single closed loop".into()));
        }
        Ok(())
    }

    /// Text format: header, `x y` node lines, `i j k` triangle lines, `idx nx ny` boundary lines.
    pub fn to_text(&self) -> Result<String> {
        let frames = self.boundary_frames()?;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "nodes {} triangles {} boundary {} ell {:?}",
            self.vertices.len(),
            self.triangles.len(),
            self.boundary_nodes.len(),
            self.char_length
        );
        for v in &self.vertices {
            let _ = writeln!(s, "{:?} {:?}", v[0], v[1]);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
        }
        for f in &frames {
            let _ = writeln!(s, "{} {:?} {:?}", f.node, f.n[0], f.n[1]);
        }
        Ok(s)
    }

    pub fn from_text(text: &str) -> Result<Mesh> {
        let bad = |m: &str| Error::Format(format!("mesh file: {m}"));
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty"))?.split_whitespace().collect();
        if header.len() != 8 || header[0] != "nodes" || header[2] != "triangles" || header[4] != "boundary" || header[6] != "ell" {
            return Err(bad("malformed header"));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad count"));
        let (nn, nt, nb) = (num(header[1])?, num(header[3])?, num(header[5])?);
        let ell: f64 = header[7].parse().map_err(|_| bad("bad ell"))?;
        let float = |s: &str| s.parse::<f64>().map_err(|_| bad("bad float"));
        let mut vertices = Vec::with_capacity(nn);
        for _ in 0..nn {
            let f: Vec<&str> = lines.next().ok_or_else(|| bad("truncated nodes"))?.split_whitespace().collect();
            if f.len() != 2 {
                return Err(bad("node line"));
            }
            vertices.push([float(f[0])?, float(f[1])?]);
        }
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let f: Vec<&str> = lines.next().ok_or_else(|| bad("truncated triangles"))?.split_whitespace().collect();
            if f.len() != 3 {
                return Err(bad("triangle line"));
            }
            triangles.push([num(f[0])?, num(f[1])?, num(f[2])?]);
        }
        let mut boundary_nodes = Vec::with_capacity(nb);
        for _ in 0..nb {
            let f: Vec<&str> = lines.next().ok_or_else(|| bad("truncated boundary"))?.split_whitespace().collect();
            if f.len() != 3 {
                return Err(bad("boundary line"));
            }
            boundary_nodes.push(num(f[0])?);
        }
        let boundary_edges = (0..nb).map(|k| [boundary_nodes[k], boundary_nodes[(k + 1) % nb]]).collect();
        let rings = nb / 6;
        let mesh = Mesh { vertices, triangles, boundary_nodes, boundary_edges, char_length: ell, rings };
        mesh.validate()?;
        Ok(mesh)
    }
}

/// Walks the boundary edges from the first node and checks that every
/// boundary node is visited exactly once before returning to the start.
pub fn boundary_loop_closed(mesh: &Mesh) -> bool {
    let nb = mesh.boundary_nodes.len();
    if nb < 3 || mesh.boundary_edges.len() != nb {
        return false;
    }
    let next: std::collections::HashMap<usize, usize> = mesh.boundary_edges.iter().map(|e| (e[0], e[1])).collect();
    if next.len() != nb {
        return false;
    }
    let start = mesh.boundary_nodes[0];
    let mut seen = std::collections::HashSet::new();
    let mut cur = start;
    for _ in 0..nb {
        if !seen.insert(cur) {
            return false;
        }
        match next.get(&cur) {
            Some(&n) => cur = n,
            None => return false,
        }
    }
    cur == start && mesh.boundary_nodes.iter().all(|b| seen.contains(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_follow_ring_structure() {
        for level in 0..5 {
            let m = build_disk_mesh(level, 1.0).unwrap();
            let n = 1 << level;
            assert_eq!(m.vertices.len(), 1 + 3 * n * (n + 1));
            assert_eq!(m.triangles.len(), 6 * n * n);
            assert_eq!(m.boundary_nodes.len(), 6 * n);
            m.validate().unwrap();
        }
    }

    #[test]
    fn coarse_mesh_diameter() {
        let m = build_disk_mesh(0, 1.0).unwrap();
        let mut d: f64 = 0.0;
        for a in &m.vertices {
            for b in &m.vertices {
                d = d.max((a[0] - b[0]).hypot(a[1] - b[1]));
            }
        }
        assert!((d - 1.0).abs() < 1e-12);
        assert_eq!(m.char_length, 1.0);
    }

    #[test]
    fn frames_at_axis_points() {
        let m = build_disk_mesh(2, 1.0).unwrap();
        let frames = m.boundary_frames().unwrap();
        let at = |x: f64, y: f64| {
            frames
                .iter()
                .find(|f| {
                    let v = m.vertices[f.node];
                    (v[0] - x).abs() < 1e-12 && (v[1] - y).abs() < 1e-12
                })
                .copied()
                .unwrap()
        };
        let f = at(0.5, 0.0);
        assert_eq!(f.n, [1.0, 0.0]);
        assert_eq!(f.tau, [-0.0, 1.0]);
        let f = at(0.0, -0.5);
        assert!((f.n[0]).abs() < 1e-15 && (f.n[1] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_frame_is_an_error() {
        let mut m = build_disk_mesh(0, 1.0).unwrap();
        m.boundary_nodes[0] = 0;
        assert!(m.boundary_frames().is_err());
    }

    #[test]
    fn equilateral_aspect_is_one() {
        let h = 3f64.sqrt() / 2.0;
        let m = Mesh {
            vertices: vec![[0.0, 0.0], [1.0, 0.0], [0.5, h]],
            triangles: vec![[0, 1, 2]],
            boundary_nodes: vec![0, 1, 2],
            boundary_edges: vec![[0, 1], [1, 2], [2, 0]],
            char_length: 1.0,
            rings: 0,
        };
        let q = m.quality();
        assert!((q.max_aspect_ratio - 1.0).abs() < 1e-12);
        assert!((q.min_angle_deg - 60.0).abs() < 1e-9);
    }

    #[test]
    fn text_round_trip_is_exact() {
        let m = build_disk_mesh(2, 1.7).unwrap();
        let back = Mesh::from_text(&m.to_text().unwrap()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(build_disk_mesh(9, 1.0).is_err());
        assert!(build_disk_mesh(1, 0.0).is_err());
        assert!(build_disk_mesh(1, -1.0).is_err());
    }
}
