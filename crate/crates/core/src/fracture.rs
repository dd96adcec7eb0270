//! Cracks, boundary-layer K-field loading, homogenised moduli and
//! toughness extraction.

use crate::assembly::{BeamRecord, Model};
use crate::beam::{topology_beams, BeamProperties, Material, Section, ShearModel};
use crate::element::Order;
use crate::error::{QcError, Result};
use crate::geom::{self, iadd, Vec3};
use crate::lattice::{Cell, DiscreteLattice, UnitCellTopology};
use crate::mesh::QCMesh;
use crate::sampling::SamplingMode;
use crate::solver::{minimize, staged_solve, Dirichlet, RefineSchedule, SolveSettings, StageRecord};
use faer::{Mat, Side};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

/// Mode-I crack-tip displacement field.
///
/// u = K/(2μ) √(r/2π) (κ − cos θ) [cos(θ/2), sin(θ/2)], κ = (3 − ν)/(1 + ν),
/// with ν the in-plane Poisson ratio of the homogenised lattice.
pub fn kfield_displacement(r: f64, theta: f64, k: f64, mu: f64, nu: f64) -> Result<[f64; 2]> {
    if !(r > 0.0) {
        return Err(QcError::InvalidInput(format!("K-field evaluated at r = {r}")));
    }
    if !(mu > 0.0) {
        return Err(QcError::InvalidInput("shear modulus must be positive".into()));
    }
    let kappa = (3.0 - nu) / (1.0 + nu);
    let a = k / (2.0 * mu) * (r / (2.0 * PI)).sqrt() * (kappa - theta.cos());
    Ok([a * (theta / 2.0).cos(), a * (theta / 2.0).sin()])
}

/// Effective elastic constants of the periodic lattice.
#[derive(Clone, Debug, Serialize)]
pub struct Homogenized {
    /// Stiffness per unit area (2D) or volume (3D), Voigt notation with
    /// engineering shear strains.
    pub voigt: Vec<Vec<f64>>,
    pub shear: f64,
    /// In-plane Poisson ratio C12 / C11.
    pub poisson: f64,
    /// In-plane Young's modulus C11 (1 − ν²) in 2D.
    pub young: f64,
    /// Smallest over largest eigenvalue of the stiffness.
    pub eig_ratio: f64,
    /// A near-mechanism (eig_ratio below 1e-2).
    pub soft: bool,
}

fn voigt_pairs(d: usize) -> Vec<(usize, usize)> {
    if d == 2 {
        vec![(0, 0), (1, 1), (0, 1)]
    } else {
        vec![(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)]
    }
}

/// Periodic unit-cell homogenisation with the rest stiffness of the beams:
/// macroscopic strain applied affinely, nodal fluctuations condensed out.
pub fn homogenize(topo: &UnitCellTopology, props: &BeamProperties) -> Result<Homogenized> {
    let d = topo.dim;
    let m = topo.dofs_per_node();
    let nb = topo.n_nodes();
    let nw = nb * m;
    let pairs = voigt_pairs(d);
    let ne = pairs.len();
    let n = nw + ne;
    let beams = topology_beams(topo, props);
    let mut k = vec![vec![0.0; n]; n];
    for (b, &(na, nbn, o)) in beams.iter().zip(topo.forward_beams().iter()) {
        let nl = 2 * m;
        // q = T [w; ε]
        let mut t = vec![vec![0.0; n]; nl];
        for (end, node, cell) in [(0, na, [0; 3]), (1, nbn, o)] {
            let x = topo.node_offset(node, cell);
            for i in 0..m {
                t[end * m + i][node * m + i] = 1.0;
            }
            for (v, &(p, q)) in pairs.iter().enumerate() {
                if p == q {
                    t[end * m + p][nw + v] += x[p];
                } else {
                    t[end * m + p][nw + v] += 0.5 * x[q];
                    t[end * m + q][nw + v] += 0.5 * x[p];
                }
            }
        }
        let mut g = vec![0.0; nl];
        let mut h = vec![0.0; nl * nl];
        b.eval(&vec![0.0; nl], &mut g, &mut h);
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for a in 0..nl {
                    if t[a][i] == 0.0 {
                        continue;
                    }
                    for c in 0..nl {
                        s += t[a][i] * h[a * nl + c] * t[c][j];
                    }
                }
                k[i][j] += s;
            }
        }
    }
    // node 0 translations fixed (rigid translation)
    let free: Vec<usize> = (d..nw).collect();
    let kww = Mat::<f64>::from_fn(free.len(), free.len(), |i, j| k[free[i]][free[j]]);
    let kwe = Mat::<f64>::from_fn(free.len(), ne, |i, j| k[free[i]][nw + j]);
    let llt = kww
        .llt(Side::Lower)
        .map_err(|_| QcError::Homogenization("unit cell has an internal mechanism (rank-deficient stiffness)".into()))?;
    let x = faer::linalg::solvers::Solve::solve(&llt, &kwe);
    let vol = topo.cell_measure();
    let mut c = vec![vec![0.0; ne]; ne];
    for i in 0..ne {
        for j in 0..ne {
            let mut s = k[nw + i][nw + j];
            for a in 0..free.len() {
                s -= kwe[(a, i)] * x[(a, j)];
            }
            c[i][j] = s / vol;
        }
    }
    let cm = Mat::<f64>::from_fn(ne, ne, |i, j| 0.5 * (c[i][j] + c[j][i]));
    let ev = cm
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|_| QcError::Homogenization("eigenvalue computation failed".into()))?;
    let (lo, hi) = ev.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x.abs())));
    let eig_ratio = lo / hi;
    let poisson = c[0][1] / c[0][0];
    let shear = c[ne - 1][ne - 1];
    let young = c[0][0] * (1.0 - poisson * poisson);
    if !(hi > 0.0) {
        return Err(QcError::Homogenization("zero stiffness".into()));
    }
    Ok(Homogenized { voigt: c, shear, poisson, young, eig_ratio, soft: eig_ratio < 1e-2 })
}

/// Total strut length per unit cell (each physical beam once).
pub fn strut_length_per_cell(topo: &UnitCellTopology) -> f64 {
    topo.forward_beams()
        .iter()
        .map(|&(a, b, o)| geom::norm(geom::sub(topo.node_offset(b, o), topo.node_offset(a, [0; 3]))))
        .sum()
}

/// Strut thickness (2D, rectangular) or diameter (3D, circular) giving a
/// relative density ρ̄ to first order (joint overlaps ignored):
/// 2D: ρ̄ = t ΣL / A, 3D: ρ̄ = (π d²/4) ΣL / V.
pub fn relative_density_to_thickness(topo: &UnitCellTopology, rho: f64) -> Result<f64> {
    if !(rho >= 0.0) || rho >= 1.0 {
        return Err(QcError::InvalidInput(format!("relative density {rho} outside [0, 1)")));
    }
    if rho > 0.2 {
        log::warn!("relative density {rho} is beyond the slender-strut regime");
    }
    let s = strut_length_per_cell(topo);
    let v = topo.cell_measure();
    Ok(if topo.dim == 2 { rho * v / s } else { (4.0 * rho * v / (PI * s)).sqrt() })
}

pub fn thickness_to_relative_density(topo: &UnitCellTopology, t: f64) -> f64 {
    let s = strut_length_per_cell(topo);
    let v = topo.cell_measure();
    if topo.dim == 2 {
        t * s / v
    } else {
        PI * t * t / 4.0 * s / v
    }
}

/// Section giving relative density ρ̄ for the topology's dimension.
pub fn section_for_density(topo: &UnitCellTopology, rho: f64) -> Result<Section> {
    let t = relative_density_to_thickness(topo, rho)?;
    Ok(if topo.dim == 2 { Section::Rect { thickness: t } } else { Section::Circle { diameter: t } })
}

/// Fractional coordinate along the second basis vector at which a straight
/// crack runs: the middle of the widest gap between node levels, so that a
/// triangular lattice is cut between rows and a hexagonal one through its
/// internal struts.
pub fn crack_level(topo: &UnitCellTopology) -> f64 {
    let mut f: Vec<f64> = topo.nodes.iter().map(|p| p[1].rem_euclid(1.0)).collect();
    f.sort_by(|a, b| a.partial_cmp(b).unwrap());
    f.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let mut best = (0.0, 0.0);
    for i in 0..f.len() {
        let a = f[i];
        let b = if i + 1 < f.len() { f[i + 1] } else { f[0] + 1.0 };
        if b - a > best.0 + 1e-12 {
            best = (b - a, 0.5 * (a + b));
        }
    }
    best.1
}

/// A straight crack along y = `y` (physical) from the left boundary up to
/// `x_tip`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Crack {
    pub y: f64,
    pub x_tip: f64,
}

impl Crack {
    pub fn tip(&self) -> Vec3 {
        [self.x_tip, self.y, 0.0]
    }

    /// Beams cut by the crack, as (cell, forward beam id).
    pub fn cut_beams(&self, lat: &DiscreteLattice) -> Vec<(Cell, usize)> {
        let mut out = Vec::new();
        for (ca, na, cb, nb, id) in lat.physical_beams() {
            let a = lat.node_position(ca, na);
            let b = lat.node_position(cb, nb);
            if (a[1] - self.y) * (b[1] - self.y) >= 0.0 {
                continue;
            }
            let s = (self.y - a[1]) / (b[1] - a[1]);
            let x = a[0] + s * (b[0] - a[0]);
            if x < self.x_tip {
                out.push((ca, id));
            }
        }
        out
    }
}

/// Remove the given beams; both end cells must be fully resolved.
pub fn insert_crack(lat: &mut DiscreteLattice, mesh: &QCMesh, beams: &[(Cell, usize)]) -> Result<()> {
    let topo = lat.topo.clone();
    let fwd = topo.forward_beams();
    for &(c, id) in beams {
        let o = fwd.get(id).ok_or_else(|| QcError::InvalidInput(format!("no beam {id}")))?.2;
        for cell in [c, iadd(c, o)] {
            if !lat.contains(cell) {
                return Err(QcError::NotInDomain(cell));
            }
            if !mesh.in_linear_region(cell) || !mesh.reps().binary_search(&cell).is_ok() {
                return Err(QcError::CrackInCoarseRegion(cell));
            }
        }
        let b = topo
            .uc_beams()
            .iter()
            .find(|b| b.id == id && b.ca == [0; 3])
            .expect("forward image of every beam");
        lat.remove_beam(c, b);
    }
    Ok(())
}

/// Log-log least squares fit K̄ = D ρ̄^d.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToughnessFit {
    pub prefactor: f64,
    pub exponent: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
    pub samples: Vec<(f64, f64)>,
}

pub fn fit_toughness_scaling(samples: &[(f64, f64)]) -> Result<ToughnessFit> {
    if samples.len() < 2 {
        return Err(QcError::InvalidInput("at least two samples are needed for a fit".into()));
    }
    if samples.iter().any(|&(r, k)| !(r > 0.0) || !(k > 0.0)) {
        return Err(QcError::InvalidInput("toughness samples must be positive".into()));
    }
    let n = samples.len() as f64;
    let xs: Vec<f64> = samples.iter().map(|s| s.0.ln()).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return Err(QcError::InvalidInput("samples need distinct densities".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let d = sxy / sxx;
    let a = my - d * mx;
    let res = (xs.iter().zip(&ys).map(|(x, y)| (y - a - d * x).powi(2)).sum::<f64>() / n).sqrt();
    Ok(ToughnessFit { prefactor: a.exp(), exponent: d, residual: res, samples: samples.to_vec() })
}

/// Histogram of σ/σ_max over `bins` equal bins on [0, 1].
pub fn stress_histogram(values: &[f64], bins: usize) -> Vec<usize> {
    let mut h = vec![0; bins];
    let max = values.iter().fold(0.0f64, |a, &v| a.max(v));
    if max <= 0.0 {
        if !values.is_empty() {
            h[0] = values.len();
        }
        return h;
    }
    for &v in values {
        let k = ((v / max) * bins as f64).floor() as usize;
        h[k.min(bins - 1)] += 1;
    }
    h
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OrderMode {
    /// Linear elements everywhere.
    First,
    /// Quadratic elements everywhere they are not fully resolved.
    Second,
    /// Linear where fully resolved, quadratic elsewhere.
    #[default]
    Mixed,
}

impl OrderMode {
    pub fn coarse_order(&self) -> Order {
        match self {
            OrderMode::First => Order::Linear,
            _ => Order::Quadratic,
        }
    }
}

/// A 2D boundary-layer fracture run.
/// Which nodes of the boundary unit cells receive the K-field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryNodes {
    /// Every node of every boundary cell.
    All,
    /// The first node of each boundary cell only; the remaining sublattices
    /// relax, as they do in the homogenised continuum.
    #[default]
    Sublattice,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FractureCase {
    pub topology: String,
    pub relative_density: f64,
    pub boundary_nodes: BoundaryNodes,
    /// Domain radius in unit cells.
    pub radius: i64,
    /// Initial coarse element size (unit cells, even).
    pub element_size: i64,
    /// Half-width of the fully resolved band around the crack (unit cells).
    pub resolve_width: i64,
    /// Applied stress intensity; chosen automatically when absent.
    pub k_applied: Option<f64>,
    pub material: Material,
    pub shear_model: ShearModel,
    pub order: OrderMode,
    pub sampling: SamplingMode,
    pub schedule: RefineSchedule,
    /// Interpret `schedule.r0` relative to the largest indicator of the first solve.
    pub relative_threshold: bool,
    pub solver: SolveSettings,
    /// Skip the doubled-load linearity check.
    pub skip_linearity_check: bool,
}

impl Default for FractureCase {
    fn default() -> Self {
        FractureCase {
            topology: "triangular".into(),
            relative_density: 0.01,
            boundary_nodes: BoundaryNodes::Sublattice,
            radius: 32,
            element_size: 8,
            resolve_width: 4,
            k_applied: None,
            material: Material::default(),
            shear_model: ShearModel::EulerBernoulli,
            order: OrderMode::Mixed,
            sampling: SamplingMode::Optimal,
            schedule: RefineSchedule { r0: 0.2, factor: 0.8, stages: 6 },
            relative_threshold: true,
            solver: SolveSettings::default(),
            skip_linearity_check: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BoundaryLayerResult {
    pub model: Model,
    pub u: Vec<f64>,
    pub crack: Crack,
    pub moduli: Homogenized,
    pub k_applied: f64,
    pub max_stress: f64,
    /// Critical stress intensity K_IC = K σ_f / σ_max.
    pub k_ic: f64,
    /// Normalised toughness K_IC / (σ_f √l).
    pub k_ic_bar: f64,
    pub critical: BeamRecord,
    /// Distance of the critical beam's midpoint from the crack tip, in unit cells.
    pub tip_distance: f64,
    pub stages: Vec<StageRecord>,
    /// σ_max(2K) / (2 σ_max(K)).
    pub linearity: f64,
    pub beams: Vec<BeamRecord>,
}

fn is_hexagonal_basis(topo: &UnitCellTopology) -> bool {
    let (a, b) = (topo.basis[0], topo.basis[1]);
    let c = geom::dot(a, b) / (geom::norm(a) * geom::norm(b));
    (c - 0.5).abs() < 1e-9
}

/// Cells on the outer boundary of the domain (a stencil neighbour is missing).
pub fn outer_boundary(lat: &DiscreteLattice) -> Vec<Cell> {
    let offs = lat.topo.stencil_offsets();
    lat.cells_sorted().into_iter().filter(|&c| offs.iter().any(|&o| !lat.contains(iadd(c, o)))).collect()
}

fn beam_midpoint(lat: &DiscreteLattice, b: &BeamRecord) -> Vec3 {
    geom::scale(geom::add(lat.node_position(b.cell_a, b.node_a), lat.node_position(b.cell_b, b.node_b)), 0.5)
}

pub fn critical_beam(beams: &[BeamRecord]) -> Option<&BeamRecord> {
    beams.iter().max_by(|a, b| a.stress.total.partial_cmp(&b.stress.total).unwrap())
}

/// Lattice, mesh and crack of a boundary-layer case (before solving).
pub fn boundary_layer_setup(case: &FractureCase) -> Result<(Model, Crack, Homogenized)> {
    let topo = Arc::new(UnitCellTopology::builtin(&case.topology)?);
    if topo.dim != 2 {
        return Err(QcError::InvalidInput("boundary-layer runs are two-dimensional".into()));
    }
    let h = case.element_size;
    if h < 2 || h % 2 != 0 || case.radius % h != 0 {
        return Err(QcError::InvalidInput("element size must be even and divide the radius".into()));
    }
    let section = section_for_density(&topo, case.relative_density)?;
    let props = BeamProperties::new(&case.material, section, case.shear_model)?;
    let moduli = homogenize(&topo, &props)?;
    let r = case.radius;
    let order = case.order.coarse_order();
    let mut mesh = if is_hexagonal_basis(&topo) {
        QCMesh::kuhn_hexagon(topo.clone(), r, h, order)?
    } else {
        QCMesh::structured(topo.clone(), [-r, -r, 0], [2 * r / h, 2 * r / h, 1], h, order, None)?
    };
    let mut cells = std::collections::BTreeSet::new();
    for e in &mesh.elements {
        cells.extend(e.closure_points());
    }
    let mut lat = DiscreteLattice::from_cells(topo.clone(), cells)?;
    mesh.attach(&lat)?;
    let a2y = topo.basis[1][1];
    let crack = Crack { y: crack_level(&topo) * a2y, x_tip: topo.node_centroid()[0] };
    let l = topo.basis_length();
    let w = case.resolve_width as f64 * l;
    let near = |c: Cell| {
        let x = lat.cell_position(c);
        let p = geom::add(x, topo.node_centroid());
        p[0] <= crack.x_tip + w && (p[1] - crack.y).abs() <= w + l
    };
    mesh.fully_resolve(&lat, near)?;
    let cut = crack.cut_beams(&lat);
    insert_crack(&mut lat, &mesh, &cut)?;
    let model = Model::new(lat, mesh, props, case.sampling)?;
    Ok((model, crack, moduli))
}

/// Dirichlet conditions of the K-field on the outer boundary
/// representatives (translations only).
pub fn kfield_constraints(
    model: &Model,
    crack: &Crack,
    k: f64,
    moduli: &Homogenized,
    nodes: BoundaryNodes,
) -> Result<Dirichlet> {
    let mut d = Dirichlet::new();
    let tip = crack.tip();
    let nb = match nodes {
        BoundaryNodes::All => model.lat.topo.n_nodes(),
        BoundaryNodes::Sublattice => 1,
    };
    for c in outer_boundary(&model.lat) {
        let Some(r) = model.rep_index(c) else { continue };
        for j in 0..nb {
            let x = geom::sub(model.lat.node_position(c, j), tip);
            let u = kfield_displacement(x[0].hypot(x[1]), x[1].atan2(x[0]), k, moduli.shear, moduli.poisson)?;
            d.fix(model.dof(r, j, 0), u[0]);
            d.fix(model.dof(r, j, 1), u[1]);
        }
    }
    Ok(d)
}

/// Largest refinement indicator over elements that can still be refined.
pub fn max_refinable_indicator(model: &Model, u: &[f64]) -> f64 {
    let ind = crate::mesh::refinement_indicator(&model.mesh, &model.interp, u);
    model
        .mesh
        .elements
        .iter()
        .zip(ind)
        .filter(|(e, _)| !e.is_fully_resolved() && !e.frozen)
        .fold(0.0f64, |a, (_, v)| a.max(v))
}

/// Staged K-field solve and linear extraction of the critical stress intensity.
pub fn run_boundary_layer(case: &FractureCase) -> Result<BoundaryLayerResult> {
    let (model, crack, moduli) = boundary_layer_setup(case)?;
    let topo = model.lat.topo.clone();
    let l = topo.basis_length();
    let radius = case.radius as f64 * l;
    let kappa = (3.0 - moduli.poisson) / (1.0 + moduli.poisson);
    // boundary opening of 1e-4 unit cells at the crack flank
    let k = case
        .k_applied
        .unwrap_or(1e-4 * l * 2.0 * moduli.shear / ((kappa + 1.0) * (radius / (2.0 * PI)).sqrt()));
    let mut schedule = case.schedule.clone();
    if case.relative_threshold && schedule.stages > 0 {
        let d = kfield_constraints(&model, &crack, k, &moduli, case.boundary_nodes)?;
        let res = minimize(&model, &vec![0.0; model.ndof()], &d, &vec![0.0; model.ndof()], &case.solver)?;
        schedule.r0 *= max_refinable_indicator(&model, &res.u);
    }
    let problem = |m: &Model| -> Result<(Dirichlet, Vec<f64>)> {
        Ok((kfield_constraints(m, &crack, k, &moduli, case.boundary_nodes)?, vec![0.0; m.ndof()]))
    };
    let (model, res, stages) = staged_solve(model, &problem, &schedule, &case.solver)?;
    let beams = model.beam_stresses(&res.u)?;
    let critical = critical_beam(&beams).ok_or(QcError::EmptyDomain)?.clone();
    let max_stress = critical.stress.total;
    let linearity = if case.skip_linearity_check {
        1.0
    } else {
        let d = kfield_constraints(&model, &crack, 2.0 * k, &moduli, case.boundary_nodes)?;
        let u2: Vec<f64> = res.u.iter().map(|x| 2.0 * x).collect();
        let r2 = minimize(&model, &u2, &d, &vec![0.0; model.ndof()], &case.solver)?;
        let s2 = model.beam_stresses(&r2.u)?.iter().map(|b| b.stress.total).fold(0.0, f64::max);
        let ratio = s2 / (2.0 * max_stress);
        if (ratio - 1.0).abs() > 1e-3 {
            return Err(QcError::NonlinearRegime(ratio));
        }
        ratio
    };
    let k_ic = k * case.material.strength / max_stress;
    let k_ic_bar = k_ic / (case.material.strength * l.sqrt());
    let mid = beam_midpoint(&model.lat, &critical);
    let tip_distance = geom::norm(geom::sub(mid, crack.tip())) / l;
    Ok(BoundaryLayerResult {
        u: res.u,
        crack,
        moduli,
        k_applied: k,
        max_stress,
        k_ic,
        k_ic_bar,
        critical,
        tip_distance,
        stages,
        linearity,
        beams,
        model,
    })
}

/// A 3D through-thickness cracked plate under opposing displacements.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThroughThicknessCase {
    pub topology: String,
    pub relative_density: f64,
    /// In-plane extent in unit cells (multiple of the element size).
    pub width: i64,
    /// Unit-cell layers through the thickness (odd, at least 3).
    pub thickness: i64,
    /// Crack length in unit cells.
    pub crack: i64,
    /// Opposing displacement of the top and bottom faces.
    pub displacement: f64,
    pub element_size: i64,
    pub resolve_width: i64,
    pub material: Material,
    pub shear_model: ShearModel,
    pub order: OrderMode,
    pub sampling: SamplingMode,
    pub schedule: RefineSchedule,
    pub relative_threshold: bool,
    pub solver: SolveSettings,
}

impl Default for ThroughThicknessCase {
    fn default() -> Self {
        ThroughThicknessCase {
            topology: "octet".into(),
            relative_density: 0.01,
            width: 32,
            thickness: 3,
            crack: 12,
            displacement: 1e-4,
            element_size: 8,
            resolve_width: 2,
            material: Material::default(),
            shear_model: ShearModel::EulerBernoulli,
            order: OrderMode::Mixed,
            sampling: SamplingMode::Optimal,
            schedule: RefineSchedule { r0: 0.2, factor: 0.8, stages: 0 },
            relative_threshold: true,
            solver: SolveSettings::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ThroughThicknessResult {
    pub model: Model,
    pub u: Vec<f64>,
    pub max_stress: f64,
    pub critical: BeamRecord,
    /// Critical face displacement u σ_f / σ_max, in units of the cell size.
    pub critical_displacement: f64,
    /// The critical beam touches the first or last layer of cells.
    pub on_surface: bool,
    pub stages: Vec<StageRecord>,
    pub beams: Vec<BeamRecord>,
}

pub fn through_thickness_setup(case: &ThroughThicknessCase) -> Result<Model> {
    let topo = Arc::new(UnitCellTopology::builtin(&case.topology)?);
    if topo.dim != 3 {
        return Err(QcError::InvalidInput("through-thickness cases need a 3D topology".into()));
    }
    if case.thickness < 3 || case.thickness % 2 == 0 {
        return Err(QcError::InvalidInput(format!(
            "thickness must be odd and at least 3 unit cells for quadratic tetrahedra, got {}",
            case.thickness
        )));
    }
    let (n, h) = (case.width, case.element_size);
    if h < 2 || h % 2 != 0 || n % h != 0 || (n / 2) % 2 != 0 {
        return Err(QcError::InvalidInput("width must be a multiple of the (even) element size and of 4".into()));
    }
    if case.crack < 1 || case.crack >= n {
        return Err(QcError::InvalidInput("crack must lie inside the plate".into()));
    }
    let section = section_for_density(&topo, case.relative_density)?;
    let props = BeamProperties::new(&case.material, section, case.shear_model)?;
    let base_topo = Arc::new(UnitCellTopology::builtin("square")?);
    let base = QCMesh::structured(base_topo, [0; 3], [n / h, n / h, 1], h, case.order.coarse_order(), None)?;
    let levels: Vec<i64> = (0..=case.thickness / 2).map(|k| 2 * k).collect();
    let mut mesh = QCMesh::extrude(topo.clone(), &base, &levels)?;
    let mut lat = DiscreteLattice::boxed(topo.clone(), [0; 3], [n, n, case.thickness - 1])?;
    mesh.attach(&lat)?;
    let yc = n / 2;
    let w = case.resolve_width;
    mesh.fully_resolve(&lat, |c| c[0] <= case.crack + w && (c[1] - yc).abs() <= w)?;
    for x in 0..case.crack {
        for z in 0..case.thickness {
            mesh.remove_unit_cell(&mut lat, [x, yc, z])?;
        }
    }
    Model::new(lat, mesh, props, case.sampling)
}

pub fn through_thickness_constraints(model: &Model, n: i64, nz: i64, u: f64) -> Result<Dirichlet> {
    let mut d = Dirichlet::new();
    let nb = model.lat.topo.n_nodes();
    let mut anchored = false;
    for (r, &c) in model.interp.reps.iter().enumerate() {
        for j in 0..nb {
            if c[1] == 0 || c[1] == n {
                d.fix(model.dof(r, j, 1), if c[1] == n { u } else { -u });
            }
            if c[2] == 0 || c[2] == nz - 1 {
                d.fix(model.dof(r, j, 2), 0.0);
            }
        }
        if !anchored && c[1] == 0 && c[0] == n {
            d.fix(model.dof(r, 0, 0), 0.0);
            anchored = true;
        }
    }
    Ok(d)
}

pub fn run_through_thickness(case: &ThroughThicknessCase) -> Result<ThroughThicknessResult> {
    let model = through_thickness_setup(case)?;
    let (n, nz, u) = (case.width, case.thickness, case.displacement);
    let mut schedule = case.schedule.clone();
    if case.relative_threshold && schedule.stages > 0 {
        let d = through_thickness_constraints(&model, n, nz, u)?;
        let res = minimize(&model, &vec![0.0; model.ndof()], &d, &vec![0.0; model.ndof()], &case.solver)?;
        schedule.r0 *= max_refinable_indicator(&model, &res.u);
    }
    let problem = |m: &Model| -> Result<(Dirichlet, Vec<f64>)> {
        Ok((through_thickness_constraints(m, n, nz, u)?, vec![0.0; m.ndof()]))
    };
    let (model, res, stages) = staged_solve(model, &problem, &schedule, &case.solver)?;
    let beams = model.beam_stresses(&res.u)?;
    let critical = critical_beam(&beams).ok_or(QcError::EmptyDomain)?.clone();
    let max_stress = critical.stress.total;
    let on_surface = [critical.cell_a[2], critical.cell_b[2]].iter().any(|&z| z == 0 || z == nz - 1);
    let l = model.lat.topo.basis_length();
    Ok(ThroughThicknessResult {
        critical_displacement: u * case.material.strength / max_stress / l,
        u: res.u,
        max_stress,
        critical,
        on_surface,
        stages,
        beams,
        model,
    })
}
