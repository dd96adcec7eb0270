//! Direct discrete-beam assembler used as an oracle: every physical beam of
//! the lattice, every cell with its own DOFs, dense matrices.
#![allow(dead_code)]

use qclat_core::beam::{topology_beams, Beam, BeamProperties, Material, Section, ShearModel};
use qclat_core::{Cell, DiscreteLattice};
use std::collections::HashMap;

pub fn props(dim: usize) -> BeamProperties {
    let m = Material { young: 430.0, poisson: 0.3, strength: 11.0, shear_factor: 1.2 };
    let sec = if dim == 2 { Section::Rect { thickness: 0.05 } } else { Section::Circle { diameter: 0.05 } };
    BeamProperties::new(&m, sec, ShearModel::EulerBernoulli).unwrap()
}

pub struct Direct {
    pub idx: HashMap<Cell, usize>,
    pub cells: Vec<Cell>,
    pub m: usize,
    pub nb: usize,
    beams: Vec<Beam>,
    list: Vec<(Cell, usize, Cell, usize, usize)>,
}

impl Direct {
    pub fn new(lat: &DiscreteLattice, p: &BeamProperties) -> Self {
        let cells = lat.cells_sorted();
        let idx = cells.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        Direct {
            idx,
            cells,
            m: lat.topo.dofs_per_node(),
            nb: lat.topo.n_nodes(),
            beams: topology_beams(&lat.topo, p),
            list: lat.physical_beams(),
        }
    }

    pub fn ndof(&self) -> usize {
        self.cells.len() * self.nb * self.m
    }

    pub fn dof(&self, c: Cell, node: usize, k: usize) -> usize {
        (self.idx[&c] * self.nb + node) * self.m + k
    }

    fn q(&self, u: &[f64], b: &(Cell, usize, Cell, usize, usize)) -> (Vec<usize>, Vec<f64>) {
        let mut ix = Vec::new();
        for (c, n) in [(b.0, b.1), (b.2, b.3)] {
            for k in 0..self.m {
                ix.push(self.dof(c, n, k));
            }
        }
        let q = ix.iter().map(|&i| u[i]).collect();
        (ix, q)
    }

    pub fn energy(&self, u: &[f64]) -> f64 {
        self.list.iter().map(|b| self.beams[b.4].energy_f64(&self.q(u, b).1)).sum()
    }

    pub fn eval(&self, u: &[f64]) -> (f64, Vec<f64>, Vec<Vec<f64>>) {
        let n = self.ndof();
        let mut g = vec![0.0; n];
        let mut h = vec![vec![0.0; n]; n];
        let mut e = 0.0;
        let nl = 2 * self.m;
        let mut gb = vec![0.0; nl];
        let mut hb = vec![0.0; nl * nl];
        for b in &self.list {
            let (ix, q) = self.q(u, b);
            e += self.beams[b.4].eval(&q, &mut gb, &mut hb);
            for i in 0..nl {
                g[ix[i]] += gb[i];
                for j in 0..nl {
                    h[ix[i]][ix[j]] += hb[i * nl + j];
                }
            }
        }
        (e, g, h)
    }

    /// Newton with dense Cholesky on the free DOFs.
    pub fn solve(&self, fixed: &[bool], f: &[f64], tol: f64) -> Vec<f64> {
        let n = self.ndof();
        let mut u = vec![0.0; n];
        let free: Vec<usize> = (0..n).filter(|&i| !fixed[i]).collect();
        for _ in 0..30 {
            let (_, g, h) = self.eval(&u);
            let r: Vec<f64> = free.iter().map(|&i| f[i] - g[i]).collect();
            let fmax = f.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            if r.iter().fold(0.0f64, |a, x| a.max(x.abs())) <= tol * fmax {
                break;
            }
            let a: Vec<Vec<f64>> = free.iter().map(|&i| free.iter().map(|&j| h[i][j]).collect()).collect();
            let d = cholesky_solve(a, r);
            for (k, &i) in free.iter().enumerate() {
                u[i] += d[k];
            }
        }
        u
    }
}

pub fn cholesky_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for j in 0..n {
        let s: f64 = (0..j).map(|k| a[j][k] * a[j][k]).sum();
        let d = (a[j][j] - s).sqrt();
        assert!(d.is_finite() && d > 0.0, "matrix not positive definite");
        a[j][j] = d;
        for i in j + 1..n {
            let s: f64 = (0..j).map(|k| a[i][k] * a[j][k]).sum();
            a[i][j] = (a[i][j] - s) / d;
        }
    }
    for i in 0..n {
        let s: f64 = (0..i).map(|k| a[i][k] * b[k]).sum();
        b[i] = (b[i] - s) / a[i][i];
    }
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[k][i] * b[k]).sum();
        b[i] = (b[i] - s) / a[i][i];
    }
    b
}

/// Affine translations u = G·X and a uniform rotation on every lattice node.
pub fn affine_full(lat: &DiscreteLattice, d: &Direct, g: [[f64; 3]; 3], rot: [f64; 3]) -> Vec<f64> {
    let dim = lat.dim();
    let mut u = vec![0.0; d.ndof()];
    for &c in &d.cells {
        for j in 0..d.nb {
            let x = lat.node_position(c, j);
            let o = d.dof(c, j, 0);
            for i in 0..dim {
                u[o + i] = (0..dim).map(|k| g[i][k] * x[k]).sum();
            }
            if dim == 2 {
                u[o + 2] = rot[2];
            } else {
                u[o + 3..o + 6].copy_from_slice(&rot);
            }
        }
    }
    u
}
