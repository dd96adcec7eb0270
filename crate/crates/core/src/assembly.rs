//! Sampled energy, gradient and sparse Hessian of the coarse-grained lattice.
//!
//! DOFs live on representative unit cells only: rep `r`, node `j`, component
//! `k` sits at `(r * n_nodes + j) * m + k`. Every other cell is interpolated
//! from the reps with the shape functions of its element, applied uniformly
//! to translations and rotations.

use crate::beam::{topology_beams, Beam, BeamProperties, BeamStress};
use crate::error::{QcError, Result};
use crate::geom::iadd;
use crate::lattice::{Cell, DiscreteLattice};
use crate::mesh::{Interp, QCMesh};
use crate::sampling::{build_scheme, SamplingMode, SamplingScheme};
use rayon::prelude::*;
use smallvec::SmallVec;
use std::collections::HashMap;

type Weights = SmallVec<[(u32, f64); 10]>;

const SKIP: u32 = u32::MAX;
const CHUNK: usize = 512;

/// One beam evaluated at one sampling point.
#[derive(Clone, Debug)]
struct Term {
    beam: u32,
    na: u32,
    nb: u32,
    ca: u32,
    cb: u32,
    w: f64,
    /// Offset into `slots`: block index for every (entry, entry) pair.
    slot: usize,
}

/// A point force or moment on one node DOF of a unit cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointLoad {
    pub cell: Cell,
    pub node: usize,
    pub dof: usize,
    pub value: f64,
}

#[derive(Clone, Debug, Default)]
pub struct EnergyReport {
    pub total: f64,
    pub internal: f64,
    pub external: f64,
    /// ω_s W_s for every sampling point, in scheme order.
    pub per_point: Vec<f64>,
}

/// Stress of one physical beam.
#[derive(Clone, Debug)]
pub struct BeamRecord {
    pub cell_a: Cell,
    pub node_a: usize,
    pub cell_b: Cell,
    pub node_b: usize,
    pub id: usize,
    pub stress: BeamStress,
}

/// Upper-triangular block storage of the Hessian: m×m blocks between node
/// groups `(gi, gj)`, `gi <= gj`, row-major.
#[derive(Clone, Debug)]
pub struct BlockHessian {
    pub m: usize,
    pub keys: Vec<(u32, u32)>,
    pub values: Vec<f64>,
}

impl BlockHessian {
    pub fn to_dense(&self, n: usize) -> Vec<Vec<f64>> {
        let m = self.m;
        let mut h = vec![vec![0.0; n]; n];
        for (b, &(gi, gj)) in self.keys.iter().enumerate() {
            let blk = &self.values[b * m * m..(b + 1) * m * m];
            for k in 0..m {
                for l in 0..m {
                    let (i, j) = (gi as usize * m + k, gj as usize * m + l);
                    h[i][j] = blk[k * m + l];
                    h[j][i] = blk[k * m + l];
                }
            }
        }
        h
    }

    pub fn diagonal(&self, n: usize) -> Vec<f64> {
        let m = self.m;
        let mut d = vec![0.0; n];
        for (b, &(gi, gj)) in self.keys.iter().enumerate() {
            if gi == gj {
                for k in 0..m {
                    d[gi as usize * m + k] = self.values[b * m * m + k * m + k];
                }
            }
        }
        d
    }

    /// y = H x
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; x.len()];
        for (b, &(gi, gj)) in self.keys.iter().enumerate() {
            let blk = &self.values[b * m * m..(b + 1) * m * m];
            let (oi, oj) = (gi as usize * m, gj as usize * m);
            for k in 0..m {
                for l in 0..m {
                    let v = blk[k * m + l];
                    y[oi + k] += v * x[oj + l];
                    if gi != gj {
                        y[oj + l] += v * x[oi + k];
                    }
                }
            }
        }
        y
    }
}

/// Compressed sparse column structure of the free-DOF Hessian (upper triangle).
#[derive(Clone, Debug)]
pub struct FreeSystem {
    /// Global index of every free DOF.
    pub free: Vec<usize>,
    /// Free index of every global DOF (usize::MAX if fixed).
    pub local: Vec<usize>,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    /// Position in the block storage of every nonzero.
    src: Vec<usize>,
}

impl FreeSystem {
    pub fn new(h: &BlockHessian, fixed: &[bool]) -> Self {
        let m = h.m;
        let mut local = vec![usize::MAX; fixed.len()];
        let mut free = Vec::new();
        for (i, &f) in fixed.iter().enumerate() {
            if !f {
                local[i] = free.len();
                free.push(i);
            }
        }
        let mut trip: Vec<(usize, usize, usize)> = Vec::new();
        for (b, &(gi, gj)) in h.keys.iter().enumerate() {
            for k in 0..m {
                for l in 0..m {
                    if gi == gj && k > l {
                        continue;
                    }
                    let (i, j) = (local[gi as usize * m + k], local[gj as usize * m + l]);
                    if i == usize::MAX || j == usize::MAX {
                        continue;
                    }
                    trip.push((j.max(i), j.min(i), b * m * m + k * m + l));
                }
            }
        }
        trip.sort_unstable();
        let n = free.len();
        let mut col_ptr = vec![0usize; n + 1];
        let mut row_idx = Vec::with_capacity(trip.len());
        let mut src = Vec::with_capacity(trip.len());
        for &(c, r, s) in &trip {
            col_ptr[c + 1] += 1;
            row_idx.push(r);
            src.push(s);
        }
        for c in 0..n {
            col_ptr[c + 1] += col_ptr[c];
        }
        FreeSystem { free, local, col_ptr, row_idx, src }
    }

    pub fn n(&self) -> usize {
        self.free.len()
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// Nonzero values in CSC order.
    pub fn values(&self, h: &BlockHessian) -> Vec<f64> {
        self.src.iter().map(|&s| h.values[s]).collect()
    }

    pub fn restrict(&self, v: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&i| v[i]).collect()
    }
}

fn lookup(interp: &Interp, ix: &mut HashMap<Cell, u32>, cells: &mut Vec<Weights>, c: Cell) -> Result<u32> {
    if let Some(&i) = ix.get(&c) {
        return Ok(i);
    }
    cells.push(interp.weights(c).ok_or(QcError::NotInDomain(c))?.clone());
    ix.insert(c, cells.len() as u32 - 1);
    Ok(cells.len() as u32 - 1)
}

/// A coarse-grained lattice model ready for evaluation.
#[derive(Clone, Debug)]
pub struct Model {
    pub lat: DiscreteLattice,
    pub mesh: QCMesh,
    pub interp: Interp,
    pub scheme: SamplingScheme,
    pub props: BeamProperties,
    pub beams: Vec<Beam>,
    cells: Vec<Weights>,
    terms: Vec<Term>,
    /// First term of every sampling point (plus a sentinel).
    point_start: Vec<usize>,
    slots: Vec<u32>,
    keys: Vec<(u32, u32)>,
}

impl Model {
    pub fn new(lat: DiscreteLattice, mesh: QCMesh, props: BeamProperties, mode: SamplingMode) -> Result<Self> {
        let scheme = build_scheme(&mesh, &lat, mode)?;
        let total = scheme.total_weight() as usize;
        if total != lat.n_cells() {
            return Err(QcError::NonConforming(format!(
                "sampling weights sum to {total}, lattice has {} cells",
                lat.n_cells()
            )));
        }
        let interp = mesh.interp();
        let topo = lat.topo.clone();
        let beams = topology_beams(&topo, &props);
        let nb = topo.n_nodes() as u32;
        let mut cell_ix: HashMap<Cell, u32> = HashMap::new();
        let mut cells: Vec<Weights> = Vec::new();
        let mut terms = Vec::new();
        let mut point_start = Vec::with_capacity(scheme.points.len() + 1);
        let mut slots = Vec::new();
        let mut block_ix: HashMap<(u32, u32), u32> = HashMap::new();
        let mut keys = Vec::new();
        for p in &scheme.points {
            point_start.push(terms.len());
            for b in topo.uc_beams() {
                if !lat.beam_active(p.cell, b) {
                    continue;
                }
                let ca = lookup(&interp, &mut cell_ix, &mut cells, iadd(p.cell, b.ca))?;
                let cb = lookup(&interp, &mut cell_ix, &mut cells, iadd(p.cell, b.cb))?;
                let ent: Vec<u32> = cells[ca as usize]
                    .iter()
                    .map(|&(r, _)| r * nb + b.na as u32)
                    .chain(cells[cb as usize].iter().map(|&(r, _)| r * nb + b.nb as u32))
                    .collect();
                let slot = slots.len();
                for &gi in &ent {
                    for &gj in &ent {
                        if gi > gj {
                            slots.push(SKIP);
                            continue;
                        }
                        let n = keys.len() as u32;
                        let s = *block_ix.entry((gi, gj)).or_insert_with(|| {
                            keys.push((gi, gj));
                            n
                        });
                        slots.push(s);
                    }
                }
                terms.push(Term {
                    beam: b.id as u32,
                    na: b.na as u32,
                    nb: b.nb as u32,
                    ca,
                    cb,
                    w: p.weight as f64 * b.weight,
                    slot,
                });
            }
        }
        point_start.push(terms.len());
        Ok(Model { lat, mesh, interp, scheme, props, beams, cells, terms, point_start, slots, keys })
    }

    pub fn dim(&self) -> usize {
        self.lat.dim()
    }

    pub fn dofs_per_node(&self) -> usize {
        self.lat.topo.dofs_per_node()
    }

    pub fn n_reps(&self) -> usize {
        self.interp.n_reps()
    }

    pub fn ndof(&self) -> usize {
        self.n_reps() * self.lat.topo.dofs_per_cell()
    }

    pub fn dof(&self, rep: usize, node: usize, k: usize) -> usize {
        (rep * self.lat.topo.n_nodes() + node) * self.dofs_per_node() + k
    }

    pub fn rep_index(&self, c: Cell) -> Option<usize> {
        self.interp.index.get(&c).map(|&i| i as usize)
    }

    /// Fraction of unit cells that are representatives.
    pub fn rep_density(&self) -> f64 {
        self.n_reps() as f64 / self.lat.n_cells() as f64
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    /// Interpolated DOFs (n_nodes × m) of any covered unit cell.
    pub fn interpolate_cell(&self, u: &[f64], c: Cell) -> Result<Vec<f64>> {
        let w = self.interp.weights(c).ok_or(QcError::NotInDomain(c))?;
        let per = self.lat.topo.dofs_per_cell();
        let mut out = vec![0.0; per];
        for &(r, n) in w {
            for (k, o) in out.iter_mut().enumerate() {
                *o += n * u[r as usize * per + k];
            }
        }
        Ok(out)
    }

    fn gather(&self, u: &[f64], t: &Term, q: &mut [f64]) {
        let m = self.dofs_per_node();
        let nb = self.lat.topo.n_nodes();
        q.iter_mut().for_each(|x| *x = 0.0);
        for (end, ci, node) in [(0, t.ca, t.na), (1, t.cb, t.nb)] {
            for &(r, n) in &self.cells[ci as usize] {
                let o = (r as usize * nb + node as usize) * m;
                for k in 0..m {
                    q[end * m + k] += n * u[o + k];
                }
            }
        }
    }

    fn term_energy(&self, u: &[f64], t: &Term) -> f64 {
        let mut q = [0.0; 12];
        let n = 2 * self.dofs_per_node();
        self.gather(u, t, &mut q[..n]);
        t.w * self.beams[t.beam as usize].energy_f64(&q[..n])
    }

    /// Internal sampled energy Σ ω_s W_s.
    pub fn energy(&self, u: &[f64]) -> f64 {
        let parts: Vec<f64> = self
            .terms
            .par_chunks(CHUNK)
            .map(|c| c.iter().map(|t| self.term_energy(u, t)).sum())
            .collect();
        parts.iter().sum()
    }

    pub fn energy_report(&self, u: &[f64], f: &[f64]) -> EnergyReport {
        let per_point: Vec<f64> = (0..self.scheme.points.len())
            .into_par_iter()
            .map(|s| self.terms[self.point_start[s]..self.point_start[s + 1]].iter().map(|t| self.term_energy(u, t)).sum())
            .collect();
        let internal: f64 = per_point.iter().sum();
        let external: f64 = f.iter().zip(u).map(|(a, b)| a * b).sum();
        EnergyReport { total: internal - external, internal, external, per_point }
    }

    /// Internal energy, gradient and (optionally) Hessian.
    pub fn assemble(&self, u: &[f64], with_hessian: bool) -> (f64, Vec<f64>, Option<BlockHessian>) {
        let m = self.dofs_per_node();
        let nb = self.lat.topo.n_nodes();
        let n = 2 * m;
        let stride = 1 + n + if with_hessian { n * n } else { 0 };
        let mut e = 0.0;
        let mut g = vec![0.0; u.len()];
        let mut h = if with_hessian { vec![0.0; self.keys.len() * m * m] } else { Vec::new() };
        let batch = CHUNK * rayon::current_num_threads().max(1) * 4;
        let mut ent: Vec<(usize, f64, usize)> = Vec::with_capacity(20);
        for terms in self.terms.chunks(batch) {
            let bufs: Vec<Vec<f64>> = terms
                .par_chunks(CHUNK)
                .map(|chunk| {
                    let mut out = vec![0.0; chunk.len() * stride];
                    let mut q = [0.0; 12];
                    let mut hb = [0.0; 144];
                    for (t, o) in chunk.iter().zip(out.chunks_mut(stride)) {
                        self.gather(u, t, &mut q[..n]);
                        let (head, rest) = o.split_at_mut(1 + n);
                        let beam = &self.beams[t.beam as usize];
                        if with_hessian {
                            head[0] = beam.eval(&q[..n], &mut head[1..], &mut hb[..n * n]);
                            rest.copy_from_slice(&hb[..n * n]);
                        } else {
                            head[0] = beam.eval_grad(&q[..n], &mut head[1..]);
                        }
                    }
                    out
                })
                .collect();
            for (chunk, buf) in terms.chunks(CHUNK).zip(&bufs) {
                for (t, o) in chunk.iter().zip(buf.chunks(stride)) {
                    e += t.w * o[0];
                    ent.clear();
                    for (end, ci, node) in [(0, t.ca, t.na), (1, t.cb, t.nb)] {
                        for &(r, nn) in &self.cells[ci as usize] {
                            ent.push(((r as usize * nb + node as usize) * m, nn, end));
                        }
                    }
                    for &(off, nn, end) in &ent {
                        let s = t.w * nn;
                        for k in 0..m {
                            g[off + k] += s * o[1 + end * m + k];
                        }
                    }
                    if !with_hessian {
                        continue;
                    }
                    let hb = &o[1 + n..];
                    let ne = ent.len();
                    for (i, &(_, ni, ei)) in ent.iter().enumerate() {
                        for (j, &(_, nj, ej)) in ent.iter().enumerate() {
                            let slot = self.slots[t.slot + i * ne + j];
                            if slot == SKIP {
                                continue;
                            }
                            let s = t.w * ni * nj;
                            let blk = &mut h[slot as usize * m * m..(slot as usize + 1) * m * m];
                            for k in 0..m {
                                let row = &hb[(ei * m + k) * n + ej * m..(ei * m + k) * n + ej * m + m];
                                for l in 0..m {
                                    blk[k * m + l] += s * row[l];
                                }
                            }
                        }
                    }
                }
            }
        }
        let hess = with_hessian.then(|| BlockHessian { m, keys: self.keys.clone(), values: h });
        (e, g, hess)
    }

    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        self.assemble(u, false).1
    }

    /// Consistent nodal load vector: a load on a non-representative cell is
    /// distributed to reps by the interpolation weights.
    pub fn load_vector(&self, loads: &[PointLoad]) -> Result<Vec<f64>> {
        let mut f = vec![0.0; self.ndof()];
        let m = self.dofs_per_node();
        for l in loads {
            if l.node >= self.lat.topo.n_nodes() || l.dof >= m {
                return Err(QcError::InvalidInput(format!("load on node {} dof {}", l.node, l.dof)));
            }
            let w = self.interp.weights(l.cell).ok_or(QcError::NotInDomain(l.cell))?;
            for &(r, n) in w {
                f[self.dof(r as usize, l.node, l.dof)] += n * l.value;
            }
        }
        Ok(f)
    }

    /// Stresses of every physical beam of the lattice.
    pub fn beam_stresses(&self, u: &[f64]) -> Result<Vec<BeamRecord>> {
        let m = self.dofs_per_node();
        let beams = self.lat.physical_beams();
        beams
            .par_iter()
            .map(|&(ca, na, cb, nb, id)| {
                let a = self.interpolate_cell(u, ca)?;
                let b = self.interpolate_cell(u, cb)?;
                let mut q = Vec::with_capacity(2 * m);
                q.extend_from_slice(&a[na * m..na * m + m]);
                q.extend_from_slice(&b[nb * m..nb * m + m]);
                let stress = self.beams[id].stress(&self.props, &q);
                Ok(BeamRecord { cell_a: ca, node_a: na, cell_b: cb, node_b: nb, id, stress })
            })
            .collect()
    }

    /// Displacement vector of an affine translation field u = G·X (rotations
    /// set to the skew part of G in 2D, zero in 3D unless `rot` is given).
    pub fn affine_field(&self, grad: [[f64; 3]; 3], rot: impl Fn([f64; 3]) -> [f64; 3]) -> Vec<f64> {
        let topo = &self.lat.topo;
        let (d, m, nb) = (self.dim(), self.dofs_per_node(), topo.n_nodes());
        let mut u = vec![0.0; self.ndof()];
        for (r, &c) in self.interp.reps.iter().enumerate() {
            for j in 0..nb {
                let x = self.lat.node_position(c, j);
                let o = self.dof(r, j, 0);
                for i in 0..d {
                    u[o + i] = (0..d).map(|k| grad[i][k] * x[k]).sum();
                }
                let th = rot(x);
                for k in d..m {
                    u[o + k] = th[if d == 2 { 2 } else { k - d }];
                }
            }
        }
        u
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beam::{Material, Section, ShearModel};
    use crate::element::Order;
    use crate::lattice::UnitCellTopology;
    use std::sync::Arc;

    fn props() -> BeamProperties {
        let m = Material { young: 430.0, poisson: 0.3, strength: 11.0, shear_factor: 1.2 };
        BeamProperties::new(&m, Section::Rect { thickness: 0.1 }, ShearModel::EulerBernoulli).unwrap()
    }

    fn model(name: &str, n: i64, h: i64, order: Order) -> Model {
        let t = Arc::new(UnitCellTopology::builtin(name).unwrap());
        let hi = [n, n, 0];
        let lat = DiscreteLattice::boxed(t.clone(), [0, 0, 0], hi).unwrap();
        let mut mesh = QCMesh::structured(t, [0, 0, 0], [n / h, n / h, 1], h, order, None).unwrap();
        mesh.attach(&lat).unwrap();
        Model::new(lat, mesh, props(), SamplingMode::Optimal).unwrap()
    }

    #[test]
    fn rest_state_is_stress_free() {
        let m = model("hexagonal", 8, 4, Order::Quadratic);
        let u = vec![0.0; m.ndof()];
        let (e, g, _) = m.assemble(&u, false);
        assert_eq!(e, 0.0);
        assert!(g.iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn translation_has_zero_gradient() {
        let m = model("triangular", 8, 4, Order::Quadratic);
        let u = m.affine_field([[0.0; 3]; 3], |_| [0.0; 3]);
        let mut u = u;
        for r in 0..m.n_reps() {
            for j in 0..m.lat.topo.n_nodes() {
                u[m.dof(r, j, 0)] = 0.3;
                u[m.dof(r, j, 1)] = -0.7;
            }
        }
        let (e, g, _) = m.assemble(&u, false);
        assert!(e.abs() < 1e-20);
        assert!(g.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn hessian_matches_gradient_differences() {
        let m = model("triangular", 8, 4, Order::Quadratic);
        let mut u = vec![0.0; m.ndof()];
        for (i, x) in u.iter_mut().enumerate() {
            *x = 1e-2 * ((i as f64 * 0.37).sin());
        }
        let (_, _, h) = m.assemble(&u, true);
        let h = h.unwrap().to_dense(m.ndof());
        let eps = 1e-6;
        for i in (0..m.ndof()).step_by(7) {
            let mut up = u.clone();
            let mut dn = u.clone();
            up[i] += eps;
            dn[i] -= eps;
            let (gp, gd) = (m.gradient(&up), m.gradient(&dn));
            for j in 0..m.ndof() {
                let fd = (gp[j] - gd[j]) / (2.0 * eps);
                assert!((fd - h[j][i]).abs() < 1e-5 * (1.0 + h[j][i].abs()), "{i} {j} {fd} {}", h[j][i]);
            }
        }
    }

    #[test]
    fn matvec_agrees_with_dense() {
        let m = model("square", 8, 4, Order::Linear);
        let u: Vec<f64> = (0..m.ndof()).map(|i| 1e-3 * (i as f64).cos()).collect();
        let h = m.assemble(&u, true).2.unwrap();
        let d = h.to_dense(m.ndof());
        let x: Vec<f64> = (0..m.ndof()).map(|i| (i as f64 * 0.1).sin()).collect();
        let y = h.matvec(&x);
        for i in 0..m.ndof() {
            let r: f64 = (0..m.ndof()).map(|j| d[i][j] * x[j]).sum();
            assert!((r - y[i]).abs() < 1e-10);
        }
    }
}
