//! Taylor–Hood discretization on the disk: quadratic isoparametric velocity
//! with strong `u·n = 0`, linear pressure, the `H`/`V` inner products, the
//! divergence constraint, forcing, and the nonlinear forms.

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laws::{BoundaryLaw, ConstitutiveLaw, Mat2};
use crate::mesh::Mesh;
use crate::quadrature::{LineRule, TriangleRule};
use crate::sparse::{CsrMatrix, TripletBuilder};

/// Degrees of freedom carried by a quadratic node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeDof {
    Interior([usize; 2]),
    /// Tangential coefficient; the velocity is `u_τ·tau`.
    Boundary { dof: usize, n: [f64; 2], tau: [f64; 2] },
}

impl NodeDof {
    /// `(dof, coefficient)` of Cartesian component `c`.
    #[inline]
    pub fn component(&self, c: usize) -> (usize, f64) {
        match *self {
            NodeDof::Interior(d) => (d[c], 1.0),
            NodeDof::Boundary { dof, tau, .. } => (dof, tau[c]),
        }
    }
}

#[derive(Debug, Clone)]
struct QuadPoint {
    w: f64,
    x: [f64; 2],
    n: [f64; 6],
    grad: [[f64; 2]; 6],
    /// Linear pressure shapes.
    p1: [f64; 3],
}

#[derive(Debug, Clone)]
struct EdgePoint {
    w: f64,
    x: [f64; 2],
    n: [f64; 3],
}

/// Quadratic velocity space with the normal component eliminated on the boundary.
#[derive(Debug, Clone)]
pub struct VelocitySpace {
    pub mesh: Mesh,
    /// Vertices first, then edge midpoints.
    pub nodes: Vec<[f64; 2]>,
    /// Local order: three vertices, then midpoints of edges 01, 12, 20.
    pub elements: Vec<[usize; 6]>,
    pub node_dofs: Vec<NodeDof>,
    /// Boundary edges as (start vertex, midpoint, end vertex), counterclockwise.
    pub boundary_edges: Vec<[usize; 3]>,
    pub ndof: usize,
    pub nvert: usize,
    quad: Vec<Vec<QuadPoint>>,
    edge_quad: Vec<Vec<EdgePoint>>,
}

fn p2_shapes(xi: f64, eta: f64) -> ([f64; 6], [[f64; 2]; 6]) {
    let l = [1.0 - xi - eta, xi, eta];
    let dl = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
    let mut n = [0.0; 6];
    let mut g = [[0.0; 2]; 6];
    for i in 0..3 {
        n[i] = l[i] * (2.0 * l[i] - 1.0);
        for d in 0..2 {
            g[i][d] = (4.0 * l[i] - 1.0) * dl[i][d];
        }
    }
    for (k, (a, b)) in [(0, 1), (1, 2), (2, 0)].into_iter().enumerate() {
        n[3 + k] = 4.0 * l[a] * l[b];
        for d in 0..2 {
            g[3 + k][d] = 4.0 * (l[a] * dl[b][d] + l[b] * dl[a][d]);
        }
    }
    (n, g)
}

fn edge_shapes(s: f64) -> ([f64; 3], [f64; 3]) {
    (
        [(1.0 - s) * (1.0 - 2.0 * s), 4.0 * s * (1.0 - s), s * (2.0 * s - 1.0)],
        [4.0 * s - 3.0, 4.0 - 8.0 * s, 4.0 * s - 1.0],
    )
}

/// Symmetric gradient of the vector shape `N e_c` given `∇N`.
#[inline]
fn sym_grad_of(c: usize, g: [f64; 2]) -> Mat2 {
    let mut d = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let a = if i == c { g[j] } else { 0.0 };
            let b = if j == c { g[i] } else { 0.0 };
            d[i][j] = 0.5 * (a + b);
        }
    }
    d
}

/// Value and gradient (`grad[c][d] = ∂_d u_c`) of a field at a quadrature point.
#[derive(Debug, Clone, Copy, Default)]
pub struct PointValue {
    pub x: [f64; 2],
    pub w: f64,
    pub u: [f64; 2],
    pub grad: [[f64; 2]; 2],
}

impl PointValue {
    pub fn sym_grad(&self) -> Mat2 {
        let g = &self.grad;
        [[g[0][0], 0.5 * (g[0][1] + g[1][0])], [0.5 * (g[0][1] + g[1][0]), g[1][1]]]
    }
}

impl VelocitySpace {
    pub fn new(mesh: &Mesh) -> Result<Self> {
        mesh.validate()?;
        let rule = TriangleRule::degree6();
        let nvert = mesh.vertices.len();
        let half = mesh.char_length / 2.0;
        let nb = mesh.boundary_nodes.len();
        let mut nodes = mesh.vertices.clone();
        let mut edge_index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut boundary_mid: HashMap<(usize, usize), f64> = HashMap::new();
        for (k, e) in mesh.boundary_edges.iter().enumerate() {
            let key = (e[0].min(e[1]), e[0].max(e[1]));
            boundary_mid.insert(key, 2.0 * PI * (k as f64 + 0.5) / nb as f64);
        }
        let mut elements = Vec::with_capacity(mesh.triangles.len());
        for t in &mesh.triangles {
            let mut el = [t[0], t[1], t[2], 0, 0, 0];
            for (k, (a, b)) in [(0, 1), (1, 2), (2, 0)].into_iter().enumerate() {
                let key = (t[a].min(t[b]), t[a].max(t[b]));
                let id = *edge_index.entry(key).or_insert_with(|| {
                    let p = match boundary_mid.get(&key) {
                        Some(&th) => [half * th.cos(), half * th.sin()],
                        None => {
                            let (pa, pb) = (mesh.vertices[key.0], mesh.vertices[key.1]);
                            [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]
                        }
                    };
                    nodes.push(p);
                    nodes.len() - 1
                });
                el[3 + k] = id;
            }
            elements.push(el);
        }

        // boundary angles of quadratic boundary nodes
        let mut boundary_angle: HashMap<usize, f64> = HashMap::new();
        let mut boundary_edges = Vec::with_capacity(nb);
        for (k, e) in mesh.boundary_edges.iter().enumerate() {
            let key = (e[0].min(e[1]), e[0].max(e[1]));
            let mid = edge_index[&key];
            boundary_angle.insert(e[0], 2.0 * PI * k as f64 / nb as f64);
            boundary_angle.insert(mid, boundary_mid[&key]);
            boundary_edges.push([e[0], mid, e[1]]);
        }
        let mut node_dofs = Vec::with_capacity(nodes.len());
        let mut ndof = 0;
        for i in 0..nodes.len() {
            if let Some(&th) = boundary_angle.get(&i) {
                let n = [th.cos(), th.sin()];
                let x = nodes[i];
                if n[0] * x[0] + n[1] * x[1] <= 0.0 {
                    return Err(Error::Mesh(format!("degenerate boundary frame at node {i}")));
                }
                node_dofs.push(NodeDof::Boundary { dof: ndof, n, tau: [-n[1], n[0]] });
                ndof += 1;
            } else {
                node_dofs.push(NodeDof::Interior([ndof, ndof + 1]));
                ndof += 2;
            }
        }

        let mut quad = Vec::with_capacity(elements.len());
        for (ei, el) in elements.iter().enumerate() {
            let mut pts = Vec::with_capacity(rule.len());
            for (p, &w) in rule.points.iter().zip(&rule.weights) {
                let (n, g) = p2_shapes(p[0], p[1]);
                let mut x = [0.0; 2];
                let mut jac = [[0.0; 2]; 2];
                for a in 0..6 {
                    let xa = nodes[el[a]];
                    for i in 0..2 {
                        x[i] += n[a] * xa[i];
                        for j in 0..2 {
                            jac[i][j] += xa[i] * g[a][j];
                        }
                    }
                }
                let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
                if det <= 0.0 {
                    return Err(Error::Mesh(format!("non-positive Jacobian in element {ei}")));
                }
                // J^{-T}
                let inv_t = [[jac[1][1] / det, -jac[1][0] / det], [-jac[0][1] / det, jac[0][0] / det]];
                let mut grad = [[0.0; 2]; 6];
                for a in 0..6 {
                    for i in 0..2 {
                        grad[a][i] = inv_t[i][0] * g[a][0] + inv_t[i][1] * g[a][1];
                    }
                }
                let p1 = [1.0 - p[0] - p[1], p[0], p[1]];
                pts.push(QuadPoint { w: w * det, x, n, grad, p1 });
            }
            quad.push(pts);
        }

        let line = LineRule::gauss3();
        let mut edge_quad = Vec::with_capacity(boundary_edges.len());
        for e in &boundary_edges {
            let mut pts = Vec::with_capacity(line.points.len());
            for (&s, &w) in line.points.iter().zip(&line.weights) {
                let (n, dn) = edge_shapes(s);
                let mut x = [0.0; 2];
                let mut dx = [0.0; 2];
                for a in 0..3 {
                    for i in 0..2 {
                        x[i] += n[a] * nodes[e[a]][i];
                        dx[i] += dn[a] * nodes[e[a]][i];
                    }
                }
                pts.push(EdgePoint { w: w * dx[0].hypot(dx[1]), x, n });
            }
            edge_quad.push(pts);
        }

        Ok(Self { mesh: mesh.clone(), nodes, elements, node_dofs, boundary_edges, ndof, nvert, quad, edge_quad })
    }

    pub fn num_boundary_nodes(&self) -> usize {
        self.node_dofs.iter().filter(|d| matches!(d, NodeDof::Boundary { .. })).count()
    }

    /// Nodal Cartesian velocities of a coefficient vector.
    pub fn nodal_values(&self, u: &[f64]) -> Vec<[f64; 2]> {
        self.node_dofs
            .iter()
            .map(|d| {
                let (i0, c0) = d.component(0);
                let (i1, c1) = d.component(1);
                [c0 * u[i0], c1 * u[i1]]
            })
            .collect()
    }

    /// Nodal interpolant; on the boundary only the tangential part is kept.
    pub fn interpolate(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
        let mut u = vec![0.0; self.ndof];
        for (i, d) in self.node_dofs.iter().enumerate() {
            let v = f(self.nodes[i]);
            match *d {
                NodeDof::Interior([a, b]) => {
                    u[a] = v[0];
                    u[b] = v[1];
                }
                NodeDof::Boundary { dof, tau, .. } => u[dof] = v[0] * tau[0] + v[1] * tau[1],
            }
        }
        u
    }

    /// Local element coefficients: index `2a + c` for node `a`, component `c`.
    #[inline]
    fn local_map(&self, e: usize) -> [(usize, f64); 12] {
        let el = &self.elements[e];
        let mut m = [(0usize, 0.0f64); 12];
        for a in 0..6 {
            for c in 0..2 {
                m[2 * a + c] = self.node_dofs[el[a]].component(c);
            }
        }
        m
    }

    #[inline]
    fn edge_map(&self, k: usize) -> [(usize, f64); 6] {
        let e = &self.boundary_edges[k];
        let mut m = [(0usize, 0.0f64); 6];
        for a in 0..3 {
            for c in 0..2 {
                m[2 * a + c] = self.node_dofs[e[a]].component(c);
            }
        }
        m
    }

    /// Values and gradients of `u` at all quadrature points of element `e`.
    pub fn element_values(&self, e: usize, u: &[f64]) -> Vec<PointValue> {
        let map = self.local_map(e);
        let mut loc = [0.0; 12];
        for k in 0..12 {
            loc[k] = map[k].1 * u[map[k].0];
        }
        self.quad[e]
            .iter()
            .map(|q| {
                let mut pv = PointValue { x: q.x, w: q.w, ..Default::default() };
                for a in 0..6 {
                    for c in 0..2 {
                        let v = loc[2 * a + c];
                        pv.u[c] += q.n[a] * v;
                        pv.grad[c][0] += q.grad[a][0] * v;
                        pv.grad[c][1] += q.grad[a][1] * v;
                    }
                }
                pv
            })
            .collect()
    }

    /// Boundary trace values `(x, weight, u)` on edge `k`.
    pub fn edge_values(&self, k: usize, u: &[f64]) -> Vec<([f64; 2], f64, [f64; 2])> {
        let map = self.edge_map(k);
        self.edge_quad[k]
            .iter()
            .map(|q| {
                let mut v = [0.0; 2];
                for a in 0..3 {
                    for c in 0..2 {
                        v[c] += q.n[a] * map[2 * a + c].1 * u[map[2 * a + c].0];
                    }
                }
                (q.x, q.w, v)
            })
            .collect()
    }

    /// Sums `g` over all interior quadrature points.
    pub fn integrate(&self, u: &[f64], mut g: impl FnMut(&PointValue) -> f64) -> f64 {
        let mut acc = 0.0;
        for e in 0..self.elements.len() {
            for pv in self.element_values(e, u) {
                acc += pv.w * g(&pv);
            }
        }
        acc
    }

    /// Sums `g(x, u)` over all boundary quadrature points.
    pub fn integrate_boundary(&self, u: &[f64], mut g: impl FnMut([f64; 2], [f64; 2]) -> f64) -> f64 {
        let mut acc = 0.0;
        for k in 0..self.boundary_edges.len() {
            for (x, w, v) in self.edge_values(k, u) {
                acc += w * g(x, v);
            }
        }
        acc
    }

    pub fn area(&self) -> f64 {
        self.quad.iter().flatten().map(|q| q.w).sum()
    }

    pub fn perimeter(&self) -> f64 {
        self.edge_quad.iter().flatten().map(|q| q.w).sum()
    }

    /// Assembles `Σ_e Σ_q w · form(q, φ_k, φ_l)` over local component functions.
    fn assemble_matrix(&self, mut form: impl FnMut(usize, &QuadPoint, usize, usize) -> f64) -> CsrMatrix {
        let mut t = TripletBuilder::new(self.ndof, self.ndof);
        for e in 0..self.elements.len() {
            let map = self.local_map(e);
            let mut local = [[0.0; 12]; 12];
            for q in &self.quad[e] {
                for k in 0..12 {
                    for l in 0..12 {
                        local[k][l] += q.w * form(e, q, k, l);
                    }
                }
            }
            for k in 0..12 {
                for l in 0..12 {
                    t.push(map[k].0, map[l].0, map[k].1 * map[l].1 * local[k][l]);
                }
            }
        }
        t.build()
    }

    fn assemble_vector(&self, mut form: impl FnMut(usize, &QuadPoint, usize) -> f64) -> Vec<f64> {
        let mut v = vec![0.0; self.ndof];
        for e in 0..self.elements.len() {
            let map = self.local_map(e);
            let mut local = [0.0; 12];
            for q in &self.quad[e] {
                for (k, lk) in local.iter_mut().enumerate() {
                    *lk += q.w * form(e, q, k);
                }
            }
            for k in 0..12 {
                v[map[k].0] += map[k].1 * local[k];
            }
        }
        v
    }

    fn assemble_edge_matrix(&self, mut form: impl FnMut(&EdgePoint, usize, usize) -> f64) -> CsrMatrix {
        let mut t = TripletBuilder::new(self.ndof, self.ndof);
        for k in 0..self.boundary_edges.len() {
            let map = self.edge_map(k);
            let mut local = [[0.0; 6]; 6];
            for q in &self.edge_quad[k] {
                for i in 0..6 {
                    for j in 0..6 {
                        local[i][j] += q.w * form(q, i, j);
                    }
                }
            }
            for i in 0..6 {
                for j in 0..6 {
                    t.push(map[i].0, map[j].0, map[i].1 * map[j].1 * local[i][j]);
                }
            }
        }
        t.build()
    }

    fn assemble_edge_vector(&self, mut form: impl FnMut(&EdgePoint, usize) -> f64) -> Vec<f64> {
        let mut v = vec![0.0; self.ndof];
        for k in 0..self.boundary_edges.len() {
            let map = self.edge_map(k);
            let mut local = [0.0; 6];
            for q in &self.edge_quad[k] {
                for (i, li) in local.iter_mut().enumerate() {
                    *li += q.w * form(q, i);
                }
            }
            for i in 0..6 {
                v[map[i].0] += map[i].1 * local[i];
            }
        }
        v
    }

    /// `∫ u·φ`
    pub fn interior_mass(&self) -> CsrMatrix {
        self.assemble_matrix(|_, q, k, l| if k % 2 == l % 2 { q.n[k / 2] * q.n[l / 2] } else { 0.0 })
    }

    /// `∮ u·φ`
    pub fn boundary_mass(&self) -> CsrMatrix {
        self.assemble_edge_matrix(|q, i, j| if i % 2 == j % 2 { q.n[i / 2] * q.n[j / 2] } else { 0.0 })
    }

    /// `∫ Du:Dφ`
    pub fn strain_stiffness(&self) -> CsrMatrix {
        self.assemble_matrix(|_, q, k, l| {
            let dk = sym_grad_of(k % 2, q.grad[k / 2]);
            let dl = sym_grad_of(l % 2, q.grad[l / 2]);
            crate::laws::ddot(&dk, &dl)
        })
    }

    /// `∫ ∇u:∇φ`
    pub fn gradient_stiffness(&self) -> CsrMatrix {
        self.assemble_matrix(|_, q, k, l| {
            if k % 2 == l % 2 {
                let (a, b) = (q.grad[k / 2], q.grad[l / 2]);
                a[0] * b[0] + a[1] * b[1]
            } else {
                0.0
            }
        })
    }

    /// `∫ q div φ` with rows indexed by vertices (linear pressure).
    pub fn divergence(&self) -> CsrMatrix {
        let mut t = TripletBuilder::new(self.nvert, self.ndof);
        for e in 0..self.elements.len() {
            let map = self.local_map(e);
            let el = &self.elements[e];
            let mut local = [[0.0; 12]; 3];
            for q in &self.quad[e] {
                for (p, row) in local.iter_mut().enumerate() {
                    for (k, r) in row.iter_mut().enumerate() {
                        *r += q.w * q.p1[p] * q.grad[k / 2][k % 2];
                    }
                }
            }
            for p in 0..3 {
                for k in 0..12 {
                    t.push(el[p], map[k].0, map[k].1 * local[p][k]);
                }
            }
        }
        t.build()
    }

    /// `∫ f·φ + β∮ h·φ`
    pub fn load(&self, f: impl Fn([f64; 2]) -> [f64; 2], h: impl Fn([f64; 2]) -> [f64; 2], beta: f64) -> Vec<f64> {
        let mut v = self.assemble_vector(|_, q, k| f(q.x)[k % 2] * q.n[k / 2]);
        let b = self.assemble_edge_vector(|q, i| h(q.x)[i % 2] * q.n[i / 2]);
        for (vi, bi) in v.iter_mut().zip(b) {
            *vi += beta * bi;
        }
        v
    }

    /// Skew convection `½[b(u,v,φ) − b(u,φ,v)]` with `b(u,v,w) = ∫(u·∇)v·w`.
    pub fn convection_apply(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ndof];
        for e in 0..self.elements.len() {
            let map = self.local_map(e);
            let uv = self.element_values(e, u);
            let vv = self.element_values(e, v);
            let mut local = [0.0; 12];
            for ((q, pu), pv) in self.quad[e].iter().zip(&uv).zip(&vv) {
                let conv = [
                    pu.u[0] * pv.grad[0][0] + pu.u[1] * pv.grad[0][1],
                    pu.u[0] * pv.grad[1][0] + pu.u[1] * pv.grad[1][1],
                ];
                for (k, lk) in local.iter_mut().enumerate() {
                    let (a, c) = (k / 2, k % 2);
                    let u_grad_phi = pu.u[0] * q.grad[a][0] + pu.u[1] * q.grad[a][1];
                    *lk += q.w * 0.5 * (conv[c] * q.n[a] - u_grad_phi * pv.u[c]);
                }
            }
            for k in 0..12 {
                out[map[k].0] += map[k].1 * local[k];
            }
        }
        out
    }

    /// Raw convection `b(u, v, φ) = ∫(u·∇)v·φ`.
    pub fn convection_raw(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ndof];
        for e in 0..self.elements.len() {
            let map = self.local_map(e);
            let uv = self.element_values(e, u);
            let vv = self.element_values(e, v);
            let mut local = [0.0; 12];
            for ((q, pu), pv) in self.quad[e].iter().zip(&uv).zip(&vv) {
                for (k, lk) in local.iter_mut().enumerate() {
                    let (a, c) = (k / 2, k % 2);
                    let conv = pu.u[0] * pv.grad[c][0] + pu.u[1] * pv.grad[c][1];
                    *lk += q.w * conv * q.n[a];
                }
            }
            for k in 0..12 {
                out[map[k].0] += map[k].1 * local[k];
            }
        }
        out
    }

    /// Matrix of `U ↦ N(U,u) + N(u,U)`; with `include_first = false` the
    /// `N(U,u)` part is dropped.
    pub fn convection_jacobian(&self, u: &[f64], include_first: bool) -> CsrMatrix {
        let mut t = TripletBuilder::new(self.ndof, self.ndof);
        for e in 0..self.elements.len() {
            let map = self.local_map(e);
            let uv = self.element_values(e, u);
            let mut local = [[0.0; 12]; 12];
            for (q, pu) in self.quad[e].iter().zip(&uv) {
                for k in 0..12 {
                    let (a, c) = (k / 2, k % 2);
                    let u_grad_na = pu.u[0] * q.grad[a][0] + pu.u[1] * q.grad[a][1];
                    for l in 0..12 {
                        let (b, d) = (l / 2, l % 2);
                        let mut val = 0.0;
                        if c == d {
                            let u_grad_nb = pu.u[0] * q.grad[b][0] + pu.u[1] * q.grad[b][1];
                            val += 0.5 * (u_grad_nb * q.n[a] - u_grad_na * q.n[b]);
                        }
                        if include_first {
                            val += 0.5 * q.n[b] * (pu.grad[c][d] * q.n[a] - q.grad[a][d] * pu.u[c]);
                        }
                        local[k][l] += q.w * val;
                    }
                }
            }
            for k in 0..12 {
                for l in 0..12 {
                    t.push(map[k].0, map[l].0, map[k].1 * map[l].1 * local[k][l]);
                }
            }
        }
        t.build()
    }

    /// `∫ S(Du):Dφ`
    pub fn stress_apply(&self, law: &ConstitutiveLaw, u: &[f64]) -> Vec<f64> {
        self.stress_apply_shifted(law, 0.0, u)
    }

    /// `∫ (S(Du) − ν₀Du):Dφ`
    pub fn stress_apply_shifted(&self, law: &ConstitutiveLaw, nu0: f64, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ndof];
        for e in 0..self.elements.len() {
            let map = self.local_map(e);
            let uv = self.element_values(e, u);
            let mut local = [0.0; 12];
            for (q, pu) in self.quad[e].iter().zip(&uv) {
                let d = pu.sym_grad();
                let mut s = law.stress(&d);
                for i in 0..2 {
                    for j in 0..2 {
                        s[i][j] -= nu0 * d[i][j];
                    }
                }
                for (k, lk) in local.iter_mut().enumerate() {
                    let dk = sym_grad_of(k % 2, q.grad[k / 2]);
                    *lk += q.w * crate::laws::ddot(&s, &dk);
                }
            }
            for k in 0..12 {
                out[map[k].0] += map[k].1 * local[k];
            }
        }
        out
    }

    /// Matrix of `U ↦ ∫ (∂S(Du)DU − ν₀DU):Dφ`.
    pub fn stress_jacobian(&self, law: &ConstitutiveLaw, nu0: f64, u: &[f64]) -> CsrMatrix {
        let mut t = TripletBuilder::new(self.ndof, self.ndof);
        for e in 0..self.elements.len() {
            let map = self.local_map(e);
            let uv = self.element_values(e, u);
            let mut local = [[0.0; 12]; 12];
            for (q, pu) in self.quad[e].iter().zip(&uv) {
                let d = pu.sym_grad();
                for l in 0..12 {
                    let dl = sym_grad_of(l % 2, q.grad[l / 2]);
                    let mut s = law.stress_derivative(&d, &dl);
                    for i in 0..2 {
                        for j in 0..2 {
                            s[i][j] -= nu0 * dl[i][j];
                        }
                    }
                    for (k, row) in local.iter_mut().enumerate() {
                        let dk = sym_grad_of(k % 2, q.grad[k / 2]);
                        row[l] += q.w * crate::laws::ddot(&s, &dk);
                    }
                }
            }
            for k in 0..12 {
                for l in 0..12 {
                    t.push(map[k].0, map[l].0, map[k].1 * map[l].1 * local[k][l]);
                }
            }
        }
        t.build()
    }

    /// `∮ (s(u) − α₀u)·φ`
    pub fn boundary_apply_shifted(&self, law: &BoundaryLaw, alpha0: f64, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ndof];
        for k in 0..self.boundary_edges.len() {
            let map = self.edge_map(k);
            let vals = self.edge_values(k, u);
            let mut local = [0.0; 6];
            for (q, (_, _, v)) in self.edge_quad[k].iter().zip(&vals) {
                let s = law.eval(*v);
                for (i, li) in local.iter_mut().enumerate() {
                    let c = i % 2;
                    *li += q.w * (s[c] - alpha0 * v[c]) * q.n[i / 2];
                }
            }
            for i in 0..6 {
                out[map[i].0] += map[i].1 * local[i];
            }
        }
        out
    }

    /// Matrix of `U ↦ ∮ (s'(u) − α₀I)U·φ`.
    pub fn boundary_jacobian(&self, law: &BoundaryLaw, alpha0: f64, u: &[f64]) -> CsrMatrix {
        let mut t = TripletBuilder::new(self.ndof, self.ndof);
        for k in 0..self.boundary_edges.len() {
            let map = self.edge_map(k);
            let vals = self.edge_values(k, u);
            let mut local = [[0.0; 6]; 6];
            for (q, (_, _, v)) in self.edge_quad[k].iter().zip(&vals) {
                let mut j = law.derivative(*v);
                j[0][0] -= alpha0;
                j[1][1] -= alpha0;
                for i in 0..6 {
                    for l in 0..6 {
                        local[i][l] += q.w * q.n[i / 2] * q.n[l / 2] * j[i % 2][l % 2];
                    }
                }
            }
            for i in 0..6 {
                for l in 0..6 {
                    t.push(map[i].0, map[l].0, map[i].1 * map[l].1 * local[i][l]);
                }
            }
        }
        t.build()
    }

    /// Largest `|Du|` over quadrature points.
    pub fn max_strain(&self, u: &[f64]) -> f64 {
        let mut m: f64 = 0.0;
        for e in 0..self.elements.len() {
            for pv in self.element_values(e, u) {
                m = m.max(crate::laws::fro(&pv.sym_grad()));
            }
        }
        m
    }

    /// `(max|∇u|, max|u|)` over quadrature points.
    pub fn pointwise_maxima(&self, u: &[f64]) -> (f64, f64) {
        let (mut g, mut v): (f64, f64) = (0.0, 0.0);
        for e in 0..self.elements.len() {
            for pv in self.element_values(e, u) {
                g = g.max(crate::laws::fro(&pv.grad));
                v = v.max(pv.u[0].hypot(pv.u[1]));
            }
        }
        (g, v)
    }
}

/// The `H` and `V` inner products.
#[derive(Debug, Clone)]
pub struct InnerProducts {
    /// `∫u·φ + β∮u·φ`
    pub m_h: CsrMatrix,
    /// `∫Du:Dφ + α∮u·φ`
    pub k_v: CsrMatrix,
    pub alpha: f64,
    pub beta: f64,
}

/// Everything assembled once per mesh and parameter set.
#[derive(Debug, Clone)]
pub struct DiscreteSystem {
    pub space: VelocitySpace,
    pub inner: InnerProducts,
    pub m_omega: CsrMatrix,
    pub m_boundary: CsrMatrix,
    pub k_d: CsrMatrix,
    pub grad: CsrMatrix,
    pub b_div: CsrMatrix,
}

pub fn build_spaces(mesh: &Mesh, alpha: f64, beta: f64) -> Result<DiscreteSystem> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidInput(format!("alpha must be positive, got {alpha}")));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidInput(format!("beta must be positive, got {beta}")));
    }
    let space = VelocitySpace::new(mesh)?;
    let m_omega = space.interior_mass();
    let m_boundary = space.boundary_mass();
    let k_d = space.strain_stiffness();
    let grad = space.gradient_stiffness();
    let b_div = space.divergence();
    let m_h = m_omega.linear_combination(1.0, &m_boundary, beta);
    let k_v = k_d.linear_combination(1.0, &m_boundary, alpha);
    Ok(DiscreteSystem {
        space,
        inner: InnerProducts { m_h, k_v, alpha, beta },
        m_omega,
        m_boundary,
        k_d,
        grad,
        b_div,
    })
}

impl DiscreteSystem {
    pub fn ndof(&self) -> usize {
        self.space.ndof
    }

    pub fn ell(&self) -> f64 {
        self.space.mesh.char_length
    }

    pub fn alpha(&self) -> f64 {
        self.inner.alpha
    }

    pub fn beta(&self) -> f64 {
        self.inner.beta
    }

    pub fn h_norm_sq(&self, u: &[f64]) -> f64 {
        self.inner.m_h.bilinear(u, u)
    }

    pub fn h_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.inner.m_h.bilinear(u, v)
    }

    pub fn v_norm_sq(&self, u: &[f64]) -> f64 {
        self.inner.k_v.bilinear(u, u)
    }

    /// `ν∫Du:Dφ + α∮u·φ`, the linear Stokes operator.
    pub fn stokes_operator(&self, nu: f64) -> CsrMatrix {
        self.k_d.linear_combination(nu, &self.m_boundary, self.inner.alpha)
    }

    /// `∫ f·φ + β∮ h·φ`
    pub fn assemble_forcing(&self, f: &VectorField, h: &VectorField) -> Vec<f64> {
        self.space.load(|x| f.eval(x), |x| h.eval(x), self.inner.beta)
    }

    /// `(∫|f|² + β∮|h|²)^{1/2}` by quadrature.
    pub fn forcing_h_norm(&self, f: &VectorField, h: &VectorField) -> f64 {
        let zero = vec![0.0; self.ndof()];
        let fi = self.space.integrate(&zero, |p| {
            let v = f.eval(p.x);
            v[0] * v[0] + v[1] * v[1]
        });
        let hb = self.space.integrate_boundary(&zero, |x, _| {
            let v = h.eval(x);
            v[0] * v[0] + v[1] * v[1]
        });
        (fi + self.inner.beta * hb).sqrt()
    }
}

/// Closed-form vector fields used for forcing and initial data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VectorField {
    #[default]
    Zero,
    Constant { value: [f64; 2] },
    /// `A x + b`
    Affine { a: [[f64; 2]; 2], b: [f64; 2] },
    /// `amp (sin kx sin ky, cos kx cos ky)`, divergence free.
    TrigVortex { amp: f64, k: f64 },
    /// `amp (−y, x)`
    Rotation { amp: f64 },
}

impl VectorField {
    pub fn eval(&self, x: [f64; 2]) -> [f64; 2] {
        match *self {
            VectorField::Zero => [0.0, 0.0],
            VectorField::Constant { value } => value,
            VectorField::Affine { a, b } => {
                [a[0][0] * x[0] + a[0][1] * x[1] + b[0], a[1][0] * x[0] + a[1][1] * x[1] + b[1]]
            }
            VectorField::TrigVortex { amp, k } => {
                [amp * (k * x[0]).sin() * (k * x[1]).sin(), amp * (k * x[0]).cos() * (k * x[1]).cos()]
            }
            VectorField::Rotation { amp } => [-amp * x[1], amp * x[0]],
        }
    }

    /// The field `x ↦ factor · self(length · x)`.
    pub fn rescaled(&self, factor: f64, length: f64) -> VectorField {
        match *self {
            VectorField::Zero => VectorField::Zero,
            VectorField::Constant { value } => VectorField::Constant { value: [factor * value[0], factor * value[1]] },
            VectorField::Affine { a, b } => VectorField::Affine {
                a: [
                    [factor * length * a[0][0], factor * length * a[0][1]],
                    [factor * length * a[1][0], factor * length * a[1][1]],
                ],
                b: [factor * b[0], factor * b[1]],
            },
            VectorField::TrigVortex { amp, k } => VectorField::TrigVortex { amp: factor * amp, k: k * length },
            VectorField::Rotation { amp } => VectorField::Rotation { amp: factor * length * amp },
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            VectorField::Zero => true,
            VectorField::Constant { value } => value == [0.0, 0.0],
            VectorField::Affine { a, b } => a == [[0.0; 2]; 2] && b == [0.0, 0.0],
            VectorField::TrigVortex { amp, .. } | VectorField::Rotation { amp } => amp == 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_disk_mesh;
    use crate::sparse::dot;

    fn sys(level: usize) -> DiscreteSystem {
        build_spaces(&build_disk_mesh(level, 1.0).unwrap(), 1.0, 1.0).unwrap()
    }

    #[test]
    fn dof_counts() {
        let s = sys(4);
        assert_eq!(s.space.nodes.len(), 3169);
        assert_eq!(s.space.num_boundary_nodes(), 192);
        assert_eq!(s.ndof(), 2 * 3169 - 192);
        assert_eq!(s.b_div.nrows(), 817);
    }

    #[test]
    fn matrices_are_symmetric() {
        let s = sys(2);
        for m in [&s.inner.m_h, &s.inner.k_v, &s.k_d, &s.grad] {
            assert!(m.asymmetry() < 1e-13);
        }
    }

    #[test]
    fn area_and_perimeter_converge() {
        let s = sys(3);
        assert!((s.space.area() - PI / 4.0).abs() < 1e-5);
        assert!((s.space.perimeter() - PI).abs() < 1e-5);
    }

    #[test]
    fn constant_pressure_annihilates_divergence() {
        let s = sys(3);
        let ones = vec![1.0; s.b_div.nrows()];
        let col = s.b_div.matvec_transpose(&ones);
        let scale = s.b_div.triplets().map(|t| t.2.abs()).fold(0.0, f64::max);
        assert!(col.iter().all(|c| c.abs() < 1e-13 * scale.max(1.0)));
    }

    #[test]
    fn rigid_rotation_is_admissible() {
        let s = sys(3);
        let w = s.space.interpolate(|x| [-x[1], x[0]]);
        let bw = s.b_div.matvec(&w);
        assert!(bw.iter().all(|v| v.abs() < 1e-12));
        let e = s.space.integrate(&w, |p| crate::laws::ddot(&p.sym_grad(), &p.sym_grad()));
        assert!(e < 1e-24, "{e}");
    }

    #[test]
    fn skew_convection_is_neutral() {
        let s = sys(2);
        let u: Vec<f64> = (0..s.ndof()).map(|i| ((i * 7919) % 97) as f64 / 97.0 - 0.5).collect();
        let n = s.space.convection_apply(&u, &u);
        let scale = s.h_norm_sq(&u).powf(1.5).max(1.0);
        assert!(dot(&n, &u).abs() < 1e-12 * scale);
        assert!(s.space.convection_apply(&vec![0.0; s.ndof()], &u).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn convection_jacobian_matches_directional_derivative() {
        let s = sys(2);
        let u: Vec<f64> = (0..s.ndof()).map(|i| ((i * 31) % 17) as f64 / 17.0 - 0.5).collect();
        let d: Vec<f64> = (0..s.ndof()).map(|i| ((i * 13) % 11) as f64 / 11.0 - 0.5).collect();
        let j = s.space.convection_jacobian(&u, true);
        let jd = j.matvec(&d);
        // N is bilinear, so N(u+d,u+d) − N(u,u) − N(d,d) = N(d,u) + N(u,d) exactly
        let up: Vec<f64> = u.iter().zip(&d).map(|(a, b)| a + b).collect();
        let a = s.space.convection_apply(&up, &up);
        let b = s.space.convection_apply(&u, &u);
        let c = s.space.convection_apply(&d, &d);
        for i in 0..s.ndof() {
            assert!((a[i] - b[i] - c[i] - jd[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn stress_jacobian_matches_finite_difference() {
        let s = sys(1);
        let law = ConstitutiveLaw::new(crate::laws::StressModel::ExpThinning, 1.0);
        let u: Vec<f64> = (0..s.ndof()).map(|i| ((i * 31) % 17) as f64 / 17.0 - 0.5).collect();
        let d: Vec<f64> = (0..s.ndof()).map(|i| ((i * 13) % 11) as f64 / 11.0 - 0.5).collect();
        let jd = s.space.stress_jacobian(&law, 0.0, &u).matvec(&d);
        let h = 1e-6;
        let up: Vec<f64> = u.iter().zip(&d).map(|(a, b)| a + h * b).collect();
        let um: Vec<f64> = u.iter().zip(&d).map(|(a, b)| a - h * b).collect();
        let (a, b) = (s.space.stress_apply(&law, &up), s.space.stress_apply(&law, &um));
        for i in 0..s.ndof() {
            assert!(((a[i] - b[i]) / (2.0 * h) - jd[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn linear_stress_matches_strain_stiffness() {
        let s = sys(2);
        let law = ConstitutiveLaw::linear(2.5);
        let u: Vec<f64> = (0..s.ndof()).map(|i| (i as f64 * 0.37).sin()).collect();
        let a = s.space.stress_apply(&law, &u);
        let b = s.k_d.matvec(&u);
        for i in 0..s.ndof() {
            assert!((a[i] - 2.5 * b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn vector_field_rescaling() {
        let f = VectorField::Affine { a: [[1.0, 2.0], [3.0, 4.0]], b: [0.5, -0.5] };
        let g = f.rescaled(0.25, 2.0);
        let x = [0.3, -0.7];
        let fx = f.eval([2.0 * x[0], 2.0 * x[1]]);
        let gx = g.eval(x);
        assert!((gx[0] - 0.25 * fx[0]).abs() < 1e-15 && (gx[1] - 0.25 * fx[1]).abs() < 1e-15);
    }

    #[test]
    fn rejects_nonpositive_parameters() {
        let m = build_disk_mesh(1, 1.0).unwrap();
        assert!(build_spaces(&m, 1.0, 0.0).is_err());
        assert!(build_spaces(&m, 0.0, 1.0).is_err());
    }
}
