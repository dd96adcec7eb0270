//! Linear and quadratic simplices with vertices on lattice sites.

use crate::error::{QcError, Result};
use crate::geom::{is_even, isub, simplex_det};
use crate::lattice::{Cell, UnitCellTopology};
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Order {
    Linear,
    Quadratic,
}

pub const EDGES_2D: [(usize, usize); 3] = [(0, 1), (1, 2), (2, 0)];
pub const EDGES_3D: [(usize, usize); 6] = [(0, 1), (1, 2), (2, 0), (0, 3), (1, 3), (2, 3)];
pub const FACES_3D: [[usize; 3]; 4] = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];

pub fn edges(dim: usize) -> &'static [(usize, usize)] {
    if dim == 2 {
        &EDGES_2D
    } else {
        &EDGES_3D
    }
}

pub type Shape = SmallVec<[(Cell, f64); 10]>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Element {
    pub order: Order,
    /// Vertices (d+1), then edge midpoints for quadratic elements in the
    /// order of [`edges`].
    pub nodes: Vec<Cell>,
    /// Set when bisection failed; the element is not refined again.
    #[serde(default)]
    pub frozen: bool,
}

fn mid(a: Cell, b: Cell) -> Cell {
    [(a[0] + b[0]) / 2, (a[1] + b[1]) / 2, (a[2] + b[2]) / 2]
}

impl Element {
    /// Builds an element, reorienting it to positive volume.
    pub fn new(dim: usize, order: Order, verts: &[Cell]) -> Result<Self> {
        let mut v: Vec<Cell> = verts[..dim + 1].to_vec();
        let d = simplex_det(dim, &v);
        if d == 0 {
            return Err(QcError::DegenerateElement(0));
        }
        if d < 0 {
            v.swap(1, 2);
        }
        if order == Order::Quadratic {
            if let Some(p) = v.iter().find(|p| !is_even(**p)) {
                return Err(QcError::OddVertex(*p));
            }
            let m: Vec<Cell> = edges(dim).iter().map(|&(i, j)| mid(v[i], v[j])).collect();
            v.extend(m);
        }
        Ok(Element { order, nodes: v, frozen: false })
    }

    pub fn dim(&self) -> usize {
        match (self.order, self.nodes.len()) {
            (Order::Linear, 3) | (Order::Quadratic, 6) => 2,
            _ => 3,
        }
    }

    pub fn vertices(&self) -> &[Cell] {
        &self.nodes[..self.dim() + 1]
    }

    /// d! times the Bravais volume (positive).
    pub fn det(&self) -> i64 {
        simplex_det(self.dim(), self.vertices())
    }

    /// Every lattice site of the element is one of its nodes.
    pub fn is_fully_resolved(&self) -> bool {
        let d = self.det();
        match self.order {
            Order::Linear => d == 1,
            Order::Quadratic => d == 1 << self.dim(),
        }
    }

    /// Physical measure (area or volume).
    pub fn measure(&self, topo: &UnitCellTopology) -> f64 {
        let f = if self.dim() == 2 { 2.0 } else { 6.0 };
        self.det() as f64 * topo.cell_measure() / f
    }

    /// Barycentric coordinates of a lattice site, exact up to one division.
    pub fn barycentric(&self, p: Cell) -> SmallVec<[f64; 4]> {
        let d = self.dim();
        let tot = self.det() as f64;
        let mut w: SmallVec<[Cell; 4]> = self.vertices().iter().copied().collect();
        let mut out = SmallVec::new();
        for i in 0..=d {
            let keep = w[i];
            w[i] = p;
            out.push(simplex_det(d, &w) as f64 / tot);
            w[i] = keep;
        }
        out
    }

    /// Integer barycentric numerators (sign tells inside/outside).
    pub fn bary_numerators(&self, p: Cell) -> SmallVec<[i64; 4]> {
        let d = self.dim();
        let mut w: SmallVec<[Cell; 4]> = self.vertices().iter().copied().collect();
        let mut out = SmallVec::new();
        for i in 0..=d {
            let keep = w[i];
            w[i] = p;
            out.push(simplex_det(d, &w));
            w[i] = keep;
        }
        out
    }

    pub fn contains_closed(&self, p: Cell) -> bool {
        self.bary_numerators(p).iter().all(|&x| x >= 0)
    }

    pub fn contains_strict(&self, p: Cell) -> bool {
        self.bary_numerators(p).iter().all(|&x| x > 0)
    }

    /// Shape-function values at a site, as (node, N) pairs with N != 0.
    pub fn shape_at(&self, p: Cell) -> Shape {
        let l = self.barycentric(p);
        let mut s = Shape::new();
        match self.order {
            Order::Linear => {
                for (i, &li) in l.iter().enumerate() {
                    if li != 0.0 {
                        s.push((self.nodes[i], li));
                    }
                }
            }
            Order::Quadratic => {
                for (i, &li) in l.iter().enumerate() {
                    let n = li * (2.0 * li - 1.0);
                    if n != 0.0 {
                        s.push((self.nodes[i], n));
                    }
                }
                for (k, &(i, j)) in edges(self.dim()).iter().enumerate() {
                    let n = 4.0 * l[i] * l[j];
                    if n != 0.0 {
                        s.push((self.nodes[l.len() + k], n));
                    }
                }
            }
        }
        s
    }

    /// Physical gradients of the shape functions at the barycentre, one per node.
    pub fn shape_gradients_at_centroid(&self, topo: &UnitCellTopology) -> Vec<[f64; 3]> {
        let d = self.dim();
        let v = self.vertices();
        // J columns: physical edge vectors
        let mut j = [[0.0; 3]; 3];
        for k in 0..d {
            let e = topo.cell_vec(isub(v[k + 1], v[0]));
            for r in 0..3 {
                j[r][k] = e[r];
            }
        }
        if d == 2 {
            j[2][2] = 1.0;
        }
        let ji = crate::geom::inv3(j);
        let mut gl = vec![[0.0; 3]; d + 1];
        for k in 0..d {
            gl[k + 1] = [ji[k][0], ji[k][1], ji[k][2]];
            for r in 0..3 {
                gl[0][r] -= ji[k][r];
            }
        }
        if d == 2 {
            for g in gl.iter_mut() {
                g[2] = 0.0;
            }
        }
        let lam = 1.0 / (d + 1) as f64;
        match self.order {
            Order::Linear => gl,
            Order::Quadratic => {
                let mut out: Vec<[f64; 3]> = gl.iter().map(|g| g.map(|x| (4.0 * lam - 1.0) * x)).collect();
                for &(a, b) in edges(d) {
                    out.push([0, 1, 2].map(|r| 4.0 * lam * (gl[a][r] + gl[b][r])));
                }
                out
            }
        }
    }

    /// Physical length of the edge between two sites.
    pub fn edge_len2(topo: &UnitCellTopology, a: Cell, b: Cell) -> f64 {
        let v = topo.cell_vec(isub(b, a));
        v[0] * v[0] + v[1] * v[1] + v[2] * v[2]
    }

    /// Split a quadratic element into 2^d linear elements on its nodes.
    pub fn split_to_linear(&self, topo: &UnitCellTopology) -> Vec<Element> {
        let d = self.dim();
        let n = &self.nodes;
        let sets: Vec<[Cell; 4]> = if d == 2 {
            let (a, b, c, mab, mbc, mca) = (n[0], n[1], n[2], n[3], n[4], n[5]);
            vec![[a, mab, mca, [0; 3]], [mab, b, mbc, [0; 3]], [mca, mbc, c, [0; 3]], [mab, mbc, mca, [0; 3]]]
        } else {
            // edge midpoints m01, m12, m20, m03, m13, m23
            let (v0, v1, v2, v3) = (n[0], n[1], n[2], n[3]);
            let (m01, m12, m02, m03, m13, m23) = (n[4], n[5], n[6], n[7], n[8], n[9]);
            let mut s = vec![[v0, m01, m02, m03], [m01, v1, m12, m13], [m02, m12, v2, m23], [m03, m13, m23, v3]];
            let diags = [
                (m01, m23, [m02, m12, m13, m03]),
                (m02, m13, [m01, m12, m23, m03]),
                (m03, m12, [m01, m02, m23, m13]),
            ];
            let key = |p: Cell, q: Cell| {
                let l = Element::edge_len2(topo, p, q);
                ((l * 1e9).round() as i64, p.min(q), p.max(q))
            };
            let (p, q, ring) = diags.iter().min_by_key(|(p, q, _)| key(*p, *q)).copied().unwrap();
            for k in 0..4 {
                s.push([p, q, ring[k], ring[(k + 1) % 4]]);
            }
            s
        };
        sets.into_iter()
            .map(|v| Element::new(d, Order::Linear, &v[..d + 1]).expect("child of a valid element"))
            .collect()
    }

    /// Lattice sites in the closed element.
    pub fn closure_points(&self) -> Vec<Cell> {
        crate::weights::closed_points(self.dim(), self.vertices())
    }
}
