//! Newton minimisation of the sampled energy with Dirichlet elimination and
//! the staged refine–solve loop.

use crate::assembly::{BlockHessian, FreeSystem, Model};
use crate::error::{QcError, Result};
use crate::lattice::Cell;
use crate::mesh::refinement_indicator;
use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu, SymbolicLlt, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{MatMut, Side};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveSettings {
    /// Free-gradient ∞-norm tolerance relative to the residual scale.
    pub tol: f64,
    pub max_iter: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// Steps larger than this multiple of the domain size mean a singular system.
    pub blowup: f64,
}

impl Default for SolveSettings {
    fn default() -> Self {
        SolveSettings { tol: 1e-9, max_iter: 30, armijo: 1e-4, backtrack: 0.5, max_backtracks: 40, blowup: 1e6 }
    }
}

/// Prescribed DOF values.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dirichlet {
    pub values: BTreeMap<usize, f64>,
}

impl Dirichlet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fix(&mut self, dof: usize, v: f64) {
        self.values.insert(dof, v);
    }

    /// Prescribe component `k` of node `node` of a representative cell.
    pub fn fix_node(&mut self, model: &Model, c: Cell, node: usize, k: usize, v: f64) -> Result<()> {
        let r = model.rep_index(c).ok_or(QcError::NotRepresentative(c))?;
        self.fix(model.dof(r, node, k), v);
        Ok(())
    }

    pub fn mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &i in self.values.keys() {
            m[i] = true;
        }
        m
    }

    pub fn apply(&self, u: &mut [f64]) {
        for (&i, &v) in &self.values {
            u[i] = v;
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterLog {
    pub iter: usize,
    pub energy: f64,
    pub residual: f64,
    pub step: f64,
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub converged: bool,
    pub u: Vec<f64>,
    pub iterations: usize,
    pub energy: f64,
    pub log: Vec<IterLog>,
}

impl SolveResult {
    pub fn residual(&self) -> f64 {
        self.log.last().map(|l| l.residual).unwrap_or(0.0)
    }
}

/// Sparse symmetric factorisation of the free block, reusing the symbolic
/// analysis across Newton iterations.
struct Factor {
    sys: FreeSystem,
    llt: Option<SymbolicLlt<usize>>,
    lu: Option<SymbolicLu<usize>>,
}

impl Factor {
    fn new(h: &BlockHessian, fixed: &[bool]) -> Result<Self> {
        let sys = FreeSystem::new(h, fixed);
        let sym = SymbolicSparseColMatRef::new_checked(sys.n(), sys.n(), &sys.col_ptr, None, &sys.row_idx);
        let llt = SymbolicLlt::try_new(sym, Side::Upper).ok();
        Ok(Factor { sys, llt, lu: None })
    }

    /// Solve H_ff x = b; falls back to LU (full pattern) for indefinite tangents.
    fn solve(&mut self, h: &BlockHessian, b: &[f64]) -> Option<Vec<f64>> {
        let n = self.sys.n();
        let vals = self.sys.values(h);
        let mut x = b.to_vec();
        if let Some(s) = &self.llt {
            let sym = SymbolicSparseColMatRef::new_checked(n, n, &self.sys.col_ptr, None, &self.sys.row_idx);
            let mat = SparseColMatRef::new(sym, &vals);
            if let Ok(f) = Llt::try_new_with_symbolic(s.clone(), mat, Side::Upper) {
                f.solve_in_place(MatMut::from_column_major_slice_mut(&mut x, n, 1));
                if x.iter().all(|v| v.is_finite()) {
                    return Some(x);
                }
            }
        }
        // full symmetric pattern for LU
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for c in 0..n {
            for p in self.sys.col_ptr[c]..self.sys.col_ptr[c + 1] {
                let r = self.sys.row_idx[p];
                cols[c].push((r, vals[p]));
                if r != c {
                    cols[r].push((c, vals[p]));
                }
            }
        }
        let mut cp = vec![0usize; n + 1];
        let mut ri = Vec::new();
        let mut vv = Vec::new();
        for (c, col) in cols.iter_mut().enumerate() {
            col.sort_unstable_by_key(|e| e.0);
            for &(r, v) in col.iter() {
                ri.push(r);
                vv.push(v);
            }
            cp[c + 1] = ri.len();
        }
        let sym = SymbolicSparseColMatRef::new_checked(n, n, &cp, None, &ri);
        if self.lu.is_none() {
            self.lu = SymbolicLu::try_new(sym).ok();
        }
        let s = self.lu.clone()?;
        let f = Lu::try_new_with_symbolic(s, SparseColMatRef::new(sym, &vv)).ok()?;
        x.copy_from_slice(b);
        f.solve_in_place(MatMut::from_column_major_slice_mut(&mut x, n, 1));
        x.iter().all(|v| v.is_finite()).then_some(x)
    }
}

fn inf_norm(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn domain_size(model: &Model) -> f64 {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &c in &model.interp.reps {
        let x = model.lat.cell_position(c);
        for k in 0..3 {
            lo[k] = lo[k].min(x[k]);
            hi[k] = hi[k].max(x[k]);
        }
    }
    (0..3).map(|k| hi[k] - lo[k]).fold(model.lat.topo.basis_length(), f64::max)
}

/// Minimise I(u) = Σ ω W(u) − f·u subject to the prescribed DOFs.
pub fn minimize(model: &Model, u0: &[f64], bcs: &Dirichlet, f: &[f64], settings: &SolveSettings) -> Result<SolveResult> {
    let n = model.ndof();
    if u0.len() != n || f.len() != n {
        return Err(QcError::InvalidInput(format!("state has {} entries, model {n}", u0.len())));
    }
    if let Some((&i, _)) = bcs.values.iter().next_back() {
        if i >= n {
            return Err(QcError::InvalidInput(format!("constraint on dof {i} of {n}")));
        }
    }
    let mut fixed = bcs.mask(n);
    let mut u = u0.to_vec();
    bcs.apply(&mut u);
    let total = |u: &[f64]| model.energy(u) - f.iter().zip(u).map(|(a, b)| a * b).sum::<f64>();
    let mut log = Vec::new();
    let mut factor: Option<Factor> = None;
    let size = domain_size(model);
    let mut scale = inf_norm(f.iter().copied());
    let mut step = 0.0;
    for it in 0..=settings.max_iter {
        let (ei, gi, h) = model.assemble(&u, true);
        let h = h.expect("hessian requested");
        if it == 0 {
            // nodes without a single attached beam store no energy; hold them
            let mut loose = 0;
            for (i, d) in h.diagonal(n).into_iter().enumerate() {
                if d == 0.0 && !fixed[i] {
                    fixed[i] = true;
                    loose += 1;
                }
            }
            if loose > 0 {
                log::debug!("holding {loose} unconnected dofs");
            }
        }
        let e = ei - f.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>();
        let g: Vec<f64> = gi.iter().zip(f).map(|(a, b)| a - b).collect();
        let r = inf_norm((0..n).filter(|&i| !fixed[i]).map(|i| g[i]));
        if it == 0 {
            scale = scale.max(r);
        }
        log.push(IterLog { iter: it, energy: e, residual: r, step });
        log::debug!("iter {it} energy {e:.12e} residual {r:.3e} step {step:.3e}");
        if r <= settings.tol * scale || scale == 0.0 {
            return Ok(SolveResult { converged: true, u, iterations: it, energy: e, log });
        }
        if it == settings.max_iter {
            break;
        }
        let fac = match &mut factor {
            Some(fc) => fc,
            None => factor.insert(Factor::new(&h, &fixed)?),
        };
        let rhs: Vec<f64> = fac.sys.restrict(&g).iter().map(|x| -x).collect();
        let dx = fac.solve(&h, &rhs).ok_or(QcError::SingularStiffness)?;
        let dmax = inf_norm(dx.iter().copied());
        if dmax > settings.blowup * size {
            return Err(QcError::SingularStiffness);
        }
        let mut d = vec![0.0; n];
        for (k, &i) in fac.sys.free.iter().enumerate() {
            d[i] = dx[k];
        }
        let slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        // ascent direction from an indefinite tangent: fall back to steepest descent
        if slope >= 0.0 {
            let gmax = inf_norm(g.iter().copied()).max(f64::MIN_POSITIVE);
            for i in 0..n {
                d[i] = if fixed[i] { 0.0 } else { -g[i] * dmax / gmax };
            }
        }
        let slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        let mut alpha = 1.0;
        let mut accepted = false;
        let mut trial = u.clone();
        for _ in 0..settings.max_backtracks {
            for i in 0..n {
                trial[i] = u[i] + alpha * d[i];
            }
            let et = total(&trial);
            if et.is_finite() && et <= e + settings.armijo * alpha * slope + 1e-14 * e.abs().max(f64::MIN_POSITIVE) {
                accepted = true;
                break;
            }
            alpha *= settings.backtrack;
        }
        if !accepted {
            // a step below round-off means we are at the minimum to machine precision
            if alpha * dmax <= 1e-12 * size {
                log::debug!("line search stalled at round-off level, residual {r:.3e}");
                return Ok(SolveResult { converged: r <= 1e-6 * scale, u, iterations: it, energy: e, log });
            }
            return Err(QcError::LineSearchFailed(it));
        }
        step = alpha * inf_norm(d.iter().copied());
        u.copy_from_slice(&trial);
        bcs.apply(&mut u);
        if step <= 1e-15 * size {
            let e = total(&u);
            let (_, g, _) = model.assemble(&u, false);
            let r = inf_norm((0..n).filter(|&i| !fixed[i]).map(|i| g[i] - f[i]));
            log.push(IterLog { iter: it + 1, energy: e, residual: r, step });
            return Ok(SolveResult { converged: r <= 1e-6 * scale, u, iterations: it + 1, energy: e, log });
        }
    }
    let last = log.last().map(|l| l.residual).unwrap_or(f64::NAN);
    Err(QcError::NoConvergence(settings.max_iter, last))
}

/// Adaptive refinement schedule: elements with indicator above `r0` are
/// bisected, then `r0` is reduced by `factor`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineSchedule {
    pub r0: f64,
    pub factor: f64,
    /// Number of refinement steps (0 = single solve).
    pub stages: usize,
}

impl Default for RefineSchedule {
    fn default() -> Self {
        RefineSchedule { r0: 0.01, factor: 0.8, stages: 0 }
    }
}

/// Boundary conditions and loads for a model; rebuilt for every stage
/// because the representatives change.
pub trait Problem {
    fn constraints(&self, model: &Model) -> Result<(Dirichlet, Vec<f64>)>;
}

impl<F: Fn(&Model) -> Result<(Dirichlet, Vec<f64>)>> Problem for F {
    fn constraints(&self, model: &Model) -> Result<(Dirichlet, Vec<f64>)> {
        self(model)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StageRecord {
    pub stage: usize,
    pub r0: f64,
    pub n_reps: usize,
    pub rep_density: f64,
    pub energy: f64,
    pub max_stress: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// Solve, refine, transfer, repeat. Returns the final model, its solution
/// and one record per stage.
pub fn staged_solve(
    mut model: Model,
    problem: &dyn Problem,
    schedule: &RefineSchedule,
    settings: &SolveSettings,
) -> Result<(Model, SolveResult, Vec<StageRecord>)> {
    let mut records = Vec::new();
    let mut u = vec![0.0; model.ndof()];
    let mut r0 = schedule.r0;
    let mut stage = 0;
    loop {
        let (bcs, f) = problem.constraints(&model)?;
        let res = minimize(&model, &u, &bcs, &f, settings)?;
        let max_stress = model.beam_stresses(&res.u)?.iter().map(|b| b.stress.total).fold(0.0, f64::max);
        records.push(StageRecord {
            stage,
            r0,
            n_reps: model.n_reps(),
            rep_density: model.rep_density(),
            energy: res.energy,
            max_stress,
            iterations: res.iterations,
            residual: res.residual(),
        });
        log::info!(
            "stage {stage}: {} reps ({:.4}), energy {:.6e}, max stress {:.6e}",
            model.n_reps(),
            model.rep_density(),
            res.energy,
            max_stress
        );
        if stage >= schedule.stages {
            return Ok((model, res, records));
        }
        let ind = refinement_indicator(&model.mesh, &model.interp, &res.u);
        let targets: Vec<usize> = ind.iter().enumerate().filter(|(_, &v)| v > r0).map(|(i, _)| i).collect();
        let mut mesh = model.mesh.clone();
        let rep = mesh.refine(&model.lat, &targets)?;
        stage += 1;
        r0 *= schedule.factor;
        if rep.bisected == 0 && rep.split == 0 {
            u = res.u;
            continue;
        }
        let next = Model::new(model.lat.clone(), mesh, model.props, model.scheme.mode)?;
        u = transfer(&model, &res.u, &next)?;
        model = next;
    }
}

/// Interpolate a solution onto the representatives of another model of the
/// same lattice.
pub fn transfer(from: &Model, u: &[f64], to: &Model) -> Result<Vec<f64>> {
    let per = to.lat.topo.dofs_per_cell();
    let mut out = vec![0.0; to.ndof()];
    for (r, &c) in to.interp.reps.iter().enumerate() {
        let v = from.interpolate_cell(u, c)?;
        out[r * per..(r + 1) * per].copy_from_slice(&v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::PointLoad;
    use crate::beam::{BeamProperties, Material, Section, ShearModel};
    use crate::element::Order;
    use crate::lattice::{DiscreteLattice, UnitCellTopology};
    use crate::mesh::QCMesh;
    use crate::sampling::SamplingMode;
    use std::sync::Arc;

    fn cantilever(order: Order, h: i64) -> Model {
        let t = Arc::new(UnitCellTopology::builtin("triangular").unwrap());
        let lat = DiscreteLattice::boxed(t.clone(), [0, 0, 0], [16, 4, 0]).unwrap();
        let mut mesh = QCMesh::structured(t, [0, 0, 0], [16 / h, 4 / h, 1], h, order, None).unwrap();
        mesh.attach(&lat).unwrap();
        let m = Material { young: 430.0, poisson: 0.3, strength: 11.0, shear_factor: 1.2 };
        let p = BeamProperties::new(&m, Section::Rect { thickness: 0.1 }, ShearModel::EulerBernoulli).unwrap();
        Model::new(lat, mesh, p, SamplingMode::Optimal).unwrap()
    }

    fn clamp(model: &Model) -> Dirichlet {
        let mut d = Dirichlet::new();
        for (r, c) in model.interp.reps.iter().enumerate() {
            if c[0] == 0 {
                for k in 0..3 {
                    d.fix(model.dof(r, 0, k), 0.0);
                }
            }
        }
        d
    }

    #[test]
    fn rest_state_converges_immediately() {
        let m = cantilever(Order::Linear, 1);
        let u = vec![0.0; m.ndof()];
        let f = vec![0.0; m.ndof()];
        let r = minimize(&m, &u, &clamp(&m), &f, &SolveSettings::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 0);
        assert_eq!(r.energy, 0.0);
    }

    #[test]
    fn small_load_matches_one_linear_solve() {
        let m = cantilever(Order::Linear, 1);
        let f = m.load_vector(&[PointLoad { cell: [16, 4, 0], node: 0, dof: 1, value: -1e-7 }]).unwrap();
        let bcs = clamp(&m);
        let u0 = vec![0.0; m.ndof()];
        let r = minimize(&m, &u0, &bcs, &f, &SolveSettings { tol: 1e-12, ..Default::default() }).unwrap();
        assert!(r.converged && r.iterations <= 2, "{:?}", r.log);
        // one linear solve with the rest stiffness
        let h = m.assemble(&u0, true).2.unwrap();
        let mut fac = Factor::new(&h, &bcs.mask(m.ndof())).unwrap();
        let x = fac.solve(&h, &fac.sys.restrict(&f)).unwrap();
        for (k, &i) in fac.sys.free.clone().iter().enumerate() {
            assert!((x[k] - r.u[i]).abs() <= 1e-6 * inf_norm(x.iter().copied()), "{i}");
        }
    }

    #[test]
    fn unconstrained_load_is_singular() {
        let m = cantilever(Order::Linear, 1);
        let f = m.load_vector(&[PointLoad { cell: [16, 4, 0], node: 0, dof: 1, value: -1e-3 }]).unwrap();
        let e = minimize(&m, &vec![0.0; m.ndof()], &Dirichlet::new(), &f, &SolveSettings::default());
        assert!(matches!(e, Err(QcError::SingularStiffness) | Err(QcError::LineSearchFailed(_))), "{e:?}");
    }

    #[test]
    fn energy_never_increases() {
        let m = cantilever(Order::Linear, 1);
        let f = m.load_vector(&[PointLoad { cell: [16, 4, 0], node: 0, dof: 1, value: -2e-3 }]).unwrap();
        let r = minimize(&m, &vec![0.0; m.ndof()], &clamp(&m), &f, &SolveSettings::default()).unwrap();
        assert!(r.converged);
        for w in r.log.windows(2) {
            assert!(w[1].energy <= w[0].energy + 1e-14 * w[0].energy.abs());
        }
    }

    #[test]
    fn transfer_is_exact_for_refinement() {
        let m = cantilever(Order::Quadratic, 4);
        let u = m.affine_field([[1e-3, 2e-3, 0.0], [0.0, -1e-3, 0.0], [0.0; 3]], |_| [0.0; 3]);
        let mut mesh = m.mesh.clone();
        mesh.fully_resolve(&m.lat, |c| c[0] < 4).unwrap();
        let next = Model::new(m.lat.clone(), mesh, m.props, SamplingMode::Optimal).unwrap();
        let v = transfer(&m, &u, &next).unwrap();
        let w = next.affine_field([[1e-3, 2e-3, 0.0], [0.0, -1e-3, 0.0], [0.0; 3]], |_| [0.0; 3]);
        for (a, b) in v.iter().zip(&w) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
