//! End-to-end acceptance checks, one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so that every line is printed even when
//! an earlier criterion fails; the process exits non-zero if any fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use common::{affine_full, props, Direct};
use qclat::config::RunConfig;
use qclat::runner;
use qclat_core::assembly::Model;
use qclat_core::beam::topology_beams;
use qclat_core::element::{Element, Order};
use qclat_core::fracture::OrderMode;
use qclat_core::mesh::QCMesh;
use qclat_core::sampling::{build_scheme, place_sampling_ucs, SamplingMode};
use qclat_core::solver::{minimize, Dirichlet, SolveSettings};
use qclat_core::{weights, Cell, DiscreteLattice, QcError, UnitCellTopology};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

type Outcome = Result<String, String>;

/// Meshes whose sampling weights were summed, and how many missed N.
static MESHES: AtomicUsize = AtomicUsize::new(0);
static WEIGHT_MISSES: AtomicUsize = AtomicUsize::new(0);

fn conserve(mesh: &QCMesh, lat: &DiscreteLattice) -> Result<(), String> {
    let s = build_scheme(mesh, lat, SamplingMode::Optimal).map_err(|e| e.to_string())?;
    MESHES.fetch_add(1, Ordering::Relaxed);
    if s.total_weight() as usize != lat.n_cells() {
        WEIGHT_MISSES.fetch_add(1, Ordering::Relaxed);
        return Err(format!("sum of weights {} != {} cells", s.total_weight(), lat.n_cells()));
    }
    Ok(())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn boxed(name: &str, n: i64) -> DiscreteLattice {
    let t = Arc::new(UnitCellTopology::builtin(name).unwrap());
    let hi = if t.dim == 2 { [n, n, 0] } else { [n, n, n] };
    DiscreteLattice::boxed(t, [0, 0, 0], hi).unwrap()
}

// ---------------------------------------------------------------- 1

fn det(dim: usize, v: &[[i64; 3]]) -> i128 {
    let d = |a: [i64; 3], b: [i64; 3]| [0, 1, 2].map(|k| (b[k] - a[k]) as i128);
    if dim == 2 {
        let (a, b) = (d(v[0], v[1]), d(v[0], v[2]));
        a[0] * b[1] - a[1] * b[0]
    } else {
        let (a, b, c) = (d(v[0], v[1]), d(v[0], v[2]), d(v[0], v[3]));
        a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0]) + a[2] * (b[0] * c[1] - b[1] * c[0])
    }
}

/// Brute force: every lattice point of the bounding box, classified by the
/// set of vertices with a positive barycentric coordinate.
fn classify(dim: usize, v: &[[i64; 3]]) -> BTreeMap<Vec<usize>, BTreeSet<Cell>> {
    let nv = dim + 1;
    let s = det(dim, v).signum();
    let lo = [0, 1, 2].map(|k| v.iter().map(|p| p[k]).min().unwrap());
    let hi = [0, 1, 2].map(|k| v.iter().map(|p| p[k]).max().unwrap());
    let mut out: BTreeMap<Vec<usize>, BTreeSet<Cell>> = BTreeMap::new();
    for x in lo[0]..=hi[0] {
        for y in lo[1]..=hi[1] {
            for z in lo[2]..=hi[2] {
                let p = [x, y, z];
                let lam: Vec<i128> = (0..nv)
                    .map(|i| {
                        let mut w = v.to_vec();
                        w[i] = p;
                        det(dim, &w) * s
                    })
                    .collect();
                if lam.iter().any(|&l| l < 0) {
                    continue;
                }
                let support: Vec<usize> = (0..nv).filter(|&i| lam[i] > 0).collect();
                out.entry(support).or_default().insert(p);
            }
        }
    }
    out
}

fn random_simplex(rng: &mut ChaCha8Rng, dim: usize) -> Vec<[i64; 3]> {
    loop {
        let v: Vec<[i64; 3]> = (0..=dim)
            .map(|_| {
                let z = if dim == 3 { rng.gen_range(0..=16) } else { 0 };
                [rng.gen_range(0..=16), rng.gen_range(0..=16), z]
            })
            .collect();
        if det(dim, &v) != 0 {
            return v;
        }
    }
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let t2 = Arc::new(UnitCellTopology::builtin("square").unwrap());
    let t3 = Arc::new(UnitCellTopology::builtin("octet").unwrap());
    let (mut n, mut mismatches, mut entities) = (0, 0usize, 0usize);
    let mut first = None;
    for k in 0..1200 {
        let dim = if k % 2 == 0 { 2 } else { 3 };
        let v = random_simplex(&mut rng, dim);
        let cls = classify(dim, &v);
        let get = |s: &[usize]| cls.get(s).cloned().unwrap_or_default();
        let mut check = |what: &str, w: u64, pts: Vec<Cell>, truth: BTreeSet<Cell>| {
            entities += 1;
            let got: BTreeSet<Cell> = pts.into_iter().collect();
            if w as usize != truth.len() || got != truth {
                mismatches += 1;
                first.get_or_insert(format!("{what} of {v:?}: {w} vs {}", truth.len()));
            }
        };
        for i in 0..=dim {
            for j in i + 1..=dim {
                let w = weights::edge_weight(v[i], v[j]).unwrap();
                check("edge", w, weights::edge_points(v[i], v[j]), get(&[i, j]));
            }
        }
        if dim == 3 {
            for f in [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]] {
                let (a, b, c) = (v[f[0]], v[f[1]], v[f[2]]);
                let w = weights::face_weight(a, b, c).unwrap();
                check("face", w, weights::face_points(a, b, c).unwrap(), get(&f));
            }
        }
        let all: Vec<usize> = (0..=dim).collect();
        let w = weights::interior_weight(dim, &v).unwrap();
        check("barycenter", w, weights::interior_points(dim, &v), get(&all));
        // per-element rule: vertices + edges (+ faces) + barycenter = closed count
        let verts = if det(dim, &v) > 0 { v.clone() } else { [v[1], v[0]].into_iter().chain(v[2..].iter().copied()).collect() };
        let e = Element::new(dim, Order::Linear, &verts).unwrap();
        let mesh = QCMesh::new(if dim == 2 { t2.clone() } else { t3.clone() }, vec![e]);
        let total: u64 = place_sampling_ucs(&mesh, 0).unwrap().iter().map(|p| p.weight).sum();
        let closed: usize = cls.values().map(|s| s.len()).sum();
        entities += 1;
        if total as usize != closed {
            mismatches += 1;
            first.get_or_insert(format!("element rule of {v:?}: {total} vs {closed}"));
        }
        n += 1;
    }
    if mismatches == 0 {
        Ok(format!("{n} simplices, {entities} entities, 0 mismatches"))
    } else {
        Err(format!("{mismatches} mismatches; first: {}", first.unwrap()))
    }
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for name in qclat_core::lattice::catalog_names() {
        let t = UnitCellTopology::builtin(name).unwrap();
        let (n, h) = match (t.dim, name) {
            (2, _) => (16, 4),
            (_, "tetrakaidecahedral") => (4, 2),
            _ => (8, 2),
        };
        let lat = boxed(name, n);
        let p = props(lat.dim());
        let direct = Direct::new(&lat, &p);
        for order in [Order::Linear, Order::Quadratic] {
            let mut mesh = QCMesh::structured(lat.topo.clone(), [0, 0, 0], [n / h; 3], h, order, None).unwrap();
            mesh.attach(&lat).unwrap();
            conserve(&mesh, &lat)?;
            let model = Model::new(lat.clone(), mesh, p, SamplingMode::Optimal).map_err(|e| e.to_string())?;
            for _ in 0..20 {
                let mut g = [[0.0; 3]; 3];
                for row in g.iter_mut().take(lat.dim()) {
                    for x in row.iter_mut().take(lat.dim()) {
                        *x = rng.gen_range(-0.05..0.05);
                    }
                }
                let r = [rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)];
                let r = if lat.dim() == 2 { [0.0, 0.0, r[2]] } else { r };
                let e = model.energy(&model.affine_field(g, |_| r));
                let exact = direct.energy(&affine_full(&lat, &direct, g, r));
                worst = worst.max(rel(e, exact));
                cases += 1;
            }
        }
    }
    let msg = format!("{cases} affine states, 6 topologies x 2 orders, max rel err {worst:.2e}");
    if worst < 1e-9 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = [0.0f64; 4];
    let patches = [
        ("square", 16),
        ("triangular", 16),
        ("hexagonal", 12),
        ("star", 10),
        ("octet", 4),
        ("tetrakaidecahedral", 3),
    ];
    for (name, n) in patches {
        let lat = boxed(name, n);
        if lat.n_cells() > 500 {
            return Err(format!("{name} patch has {} cells", lat.n_cells()));
        }
        let p = props(lat.dim());
        let direct = Direct::new(&lat, &p);
        let mesh = QCMesh::atomistic(&lat).map_err(|e| e.to_string())?;
        conserve(&mesh, &lat)?;
        let model = Model::new(lat.clone(), mesh, p, SamplingMode::Optimal).map_err(|e| e.to_string())?;
        let per = lat.topo.dofs_per_cell();
        let map: Vec<usize> =
            (0..model.ndof()).map(|i| direct.idx[&model.interp.reps[i / per]] * per + i % per).collect();
        let u: Vec<f64> = (0..model.ndof()).map(|_| rng.gen_range(-0.02..0.02)).collect();
        let mut v = vec![0.0; direct.ndof()];
        for i in 0..u.len() {
            v[map[i]] = u[i];
        }
        let (e, g, h) = model.assemble(&u, true);
        let h = h.unwrap().to_dense(model.ndof());
        let (eo, go, ho) = direct.eval(&v);
        let gs = go.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let hs = ho.iter().flatten().fold(0.0f64, |a, x| a.max(x.abs()));
        worst[0] = worst[0].max(rel(e, eo));
        for i in 0..u.len() {
            worst[1] = worst[1].max((g[i] - go[map[i]]).abs() / gs);
            for j in 0..u.len() {
                worst[2] = worst[2].max((h[i][j] - ho[map[i]][map[j]]).abs() / hs);
            }
        }
        // equilibrium: clamp x = 0, pull a far corner
        let (m, nb) = (lat.topo.dofs_per_node(), lat.topo.n_nodes());
        let corner = if lat.dim() == 2 { [n, n, 0] } else { [n, n, n] };
        let load = qclat_core::assembly::PointLoad { cell: corner, node: 0, dof: 1, value: -1e-6 };
        let mut bcs = Dirichlet::new();
        let mut fixed = vec![false; direct.ndof()];
        for &c in &direct.cells {
            if c[0] == 0 {
                for j in 0..nb {
                    for k in 0..m {
                        bcs.fix_node(&model, c, j, k, 0.0).unwrap();
                        fixed[direct.dof(c, j, k)] = true;
                    }
                }
            }
        }
        let f = model.load_vector(&[load]).unwrap();
        let mut fo = vec![0.0; direct.ndof()];
        fo[direct.dof(corner, 0, 1)] = load.value;
        let settings = SolveSettings { tol: 1e-13, ..Default::default() };
        let res = minimize(&model, &vec![0.0; model.ndof()], &bcs, &f, &settings).map_err(|e| format!("{name}: {e}"))?;
        // nodes without beams (star patch edges) carry no stiffness
        let (_, _, h0) = direct.eval(&vec![0.0; direct.ndof()]);
        for (i, row) in h0.iter().enumerate() {
            if row.iter().all(|&x| x == 0.0) {
                fixed[i] = true;
            }
        }
        let uo = direct.solve(&fixed, &fo, 1e-13);
        let umax = uo.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        for (i, &x) in res.u.iter().enumerate() {
            worst[3] = worst[3].max((x - uo[map[i]]).abs() / umax);
        }
    }
    let msg = format!(
        "6 patches <= 500 UCs; rel err energy {:.1e}, gradient {:.1e}, Hessian {:.1e}, solution {:.1e}",
        worst[0], worst[1], worst[2], worst[3]
    );
    if worst.iter().all(|&w| w < 1e-8) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (mut g_err, mut h_err, mut asym) = (0.0f64, 0.0f64, 0.0f64);
    for (name, n, hh) in [("triangular", 8, 4), ("hexagonal", 8, 4), ("star", 8, 4), ("octet", 8, 4)] {
        let lat = boxed(name, n);
        let mut mesh = QCMesh::structured(lat.topo.clone(), [0, 0, 0], [n / hh; 3], hh, Order::Quadratic, None).unwrap();
        mesh.attach(&lat).unwrap();
        mesh.fully_resolve(&lat, |c| c[0] < 2 && c[1] < 2).map_err(|e| e.to_string())?;
        conserve(&mesh, &lat)?;
        let model = Model::new(lat.clone(), mesh, props(lat.dim()), SamplingMode::Optimal).map_err(|e| e.to_string())?;
        let nd = model.ndof();
        for _ in 0..3 {
            let u: Vec<f64> = (0..nd).map(|_| rng.gen_range(-0.05..0.05)).collect();
            let (_, g, h) = model.assemble(&u, true);
            let h = h.unwrap().to_dense(nd);
            let gs = g.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            let hs = h.iter().flatten().fold(0.0f64, |a, x| a.max(x.abs()));
            let eps = 1e-6;
            let mut w = u.clone();
            // a sample of coordinates keeps the cost linear in the model size
            for i in (0..nd).step_by((nd / 24).max(1)) {
                w[i] = u[i] + eps;
                let (ep, gp) = (model.energy(&w), model.gradient(&w));
                w[i] = u[i] - eps;
                let (em, gm) = (model.energy(&w), model.gradient(&w));
                w[i] = u[i];
                g_err = g_err.max(((ep - em) / (2.0 * eps) - g[i]).abs() / gs);
                for j in 0..nd {
                    h_err = h_err.max(((gp[j] - gm[j]) / (2.0 * eps) - h[j][i]).abs() / hs);
                }
            }
        }
    }
    // symmetry of the per-beam tangents that feed the assembly
    for name in qclat_core::lattice::catalog_names() {
        let t = UnitCellTopology::builtin(name).unwrap();
        let m = t.dofs_per_node();
        for b in topology_beams(&t, &props(t.dim)) {
            let nl = 2 * m;
            let q: Vec<f64> = (0..nl).map(|_| rng.gen_range(-0.1..0.1)).collect();
            let (mut gb, mut hb) = (vec![0.0; nl], vec![0.0; nl * nl]);
            b.eval(&q, &mut gb, &mut hb);
            let hs = hb.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            for i in 0..nl {
                for j in 0..nl {
                    asym = asym.max((hb[i * nl + j] - hb[j * nl + i]).abs() / hs);
                }
            }
        }
    }
    let msg = format!("FD gradient {g_err:.1e}, FD Hessian {h_err:.1e}, |H-H^T|/|H| {asym:.1e}");
    if g_err < 1e-6 && h_err < 1e-6 && asym < 1e-10 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

// ---------------------------------------------------------------- 5

fn criterion_5(root: &Path) -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for topo in ["hexagonal", "star"] {
        let text = format!(
            "benchmark = \"cook\"\nname = \"cook-{topo}\"\nvtk = false\n[cook]\ntopology = \"{topo}\"\nsize = 72\n\
             [compare]\nspacings = [4, 6, 8, 12, 16]\n"
        );
        let cfg = RunConfig::parse(&text).map_err(|e| e.to_string())?;
        let dom = cfg.cook().domain().map_err(|e| e.to_string())?;
        if !(3000..=6000).contains(&dom.lat.n_cells()) {
            return Err(format!("{topo} membrane has {} UCs", dom.lat.n_cells()));
        }
        for h in [4, 6, 8, 12, 16] {
            for o in [OrderMode::First, OrderMode::Mixed] {
                conserve(&dom.mesh(h, o).map_err(|e| e.to_string())?, &dom.lat)?;
            }
        }
        let (_, s) = runner::compare_orders(&cfg, Some(root), 4).map_err(|e| e.to_string())?;
        let mut matched = 0;
        for h in [4, 6, 8, 12, 16] {
            let first = s.rows.iter().find(|r| r.spacing == h && r.order == OrderMode::First).unwrap();
            let mixed = s.rows.iter().find(|r| r.spacing == h && r.order == OrderMode::Mixed).unwrap();
            if first.rep_density > 0.10 {
                continue;
            }
            matched += 1;
            ok &= first.rep_density == mixed.rep_density && mixed.error <= 0.5 * first.error;
            lines.push(format!(
                "{topo} rho_rep {:.3}: {:.1}% vs {:.1}%",
                first.rep_density,
                100.0 * first.error,
                100.0 * mixed.error
            ));
        }
        ok &= matched > 0;
        lines.push(format!("{topo} {} UCs", s.n_cells));
    }
    let msg = lines.join("; ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

// ---------------------------------------------------------------- 6, 7

fn fracture_sweeps(root: &Path) -> Result<Vec<(String, runner::SweepSummary)>, String> {
    ["triangular", "hexagonal"]
        .iter()
        .map(|topo| {
            let text = format!(
                "benchmark = \"fracture\"\nname = \"toughness-{topo}\"\nvtk = false\n[fracture]\ntopology = \"{topo}\"\n\
                 radius = 40\n[sweep]\ndensities = [0.005, 0.01, 0.02, 0.05]\n"
            );
            let cfg = RunConfig::parse(&text).map_err(|e| e.to_string())?;
            let (_, s) = runner::sweep(&cfg, Some(root), 4).map_err(|e| e.to_string())?;
            for p in &s.points {
                MESHES.fetch_add(1, Ordering::Relaxed);
                if p.total_weight as usize != p.n_cells {
                    WEIGHT_MISSES.fetch_add(1, Ordering::Relaxed);
                }
            }
            Ok((topo.to_string(), s))
        })
        .collect()
}

fn criterion_6(sweeps: &[(String, runner::SweepSummary)]) -> Outcome {
    let mut ok = true;
    let mut lines = Vec::new();
    for (topo, s) in sweeps {
        let fit = s.fit.as_ref().ok_or("sweep produced no fit")?;
        let (d0, dd, dtol) = if topo == "triangular" { (0.5437, 0.99, 0.10) } else { (0.814, 2.01, 0.20) };
        let pass = (fit.exponent - dd).abs() <= dtol && rel(fit.prefactor, d0) <= 0.25;
        ok &= pass && s.points.len() == 4;
        lines.push(format!(
            "{topo}: d = {:.3} (target {dd} +/- {dtol}), D = {:.4} ({:+.1}% vs {d0})",
            fit.exponent,
            fit.prefactor,
            100.0 * (fit.prefactor / d0 - 1.0)
        ));
    }
    let msg = lines.join("; ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_7(sweeps: &[(String, runner::SweepSummary)]) -> Outcome {
    let mut ok = true;
    let mut lines = Vec::new();
    for (topo, s) in sweeps {
        let far = s.points.iter().filter_map(|p| p.fracture.as_ref()).map(|f| f.tip_distance).fold(0.0, f64::max);
        ok &= far <= 2.0;
        lines.push(format!("{topo}: farthest critical beam {far:.2} UCs from the tip"));
    }
    let msg = lines.join("; ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

// ---------------------------------------------------------------- 8

fn criterion_8(root: &Path) -> Outcome {
    let text = "benchmark = \"through-thickness\"\nname = \"through-thickness\"\nvtk = false\n\
                [through_thickness]\ntopology = \"octet\"\nwidth = 32\n[sweep]\nthicknesses = [3, 5, 7]\n";
    let cfg = RunConfig::parse(text).map_err(|e| e.to_string())?;
    let (_, s) = runner::sweep(&cfg, Some(root), 3).map_err(|e| e.to_string())?;
    let mut surface = true;
    let mut parts = Vec::new();
    for p in &s.points {
        MESHES.fetch_add(1, Ordering::Relaxed);
        if p.total_weight as usize != p.n_cells {
            WEIGHT_MISSES.fetch_add(1, Ordering::Relaxed);
        }
        let t = p.through_thickness.as_ref().ok_or("missing through-thickness summary")?;
        surface &= t.on_surface;
        parts.push(format!("T={} u_c={:.4} surface={}", t.thickness, t.critical_displacement, t.on_surface));
    }
    let var = s.variation.ok_or("no variation reported")?;
    let msg = format!("{}; variation {:.2}%", parts.join(", "), 100.0 * var);
    if surface && var < 0.05 && s.points.len() == 3 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

// ---------------------------------------------------------------- 9

/// One random sequence of mesh operations; every intermediate mesh must
/// validate and conserve weight.
fn mesh_sequence(seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let three_d = rng.gen_bool(0.15);
    let name = if three_d {
        "octet"
    } else {
        ["triangular", "square", "hexagonal", "star"][rng.gen_range(0..4)]
    };
    let topo = Arc::new(UnitCellTopology::builtin(name).unwrap());
    let (blocks, h) = if three_d { (rng.gen_range(1..=2), 2) } else { (rng.gen_range(1..=3), [2, 4][rng.gen_range(0..2)]) };
    let n = blocks * h;
    let hi = if three_d { [n, n, n] } else { [n, n, 0] };
    let mut lat = DiscreteLattice::boxed(topo.clone(), [0, 0, 0], hi).unwrap();
    let order = if rng.gen_bool(0.7) { Order::Quadratic } else { Order::Linear };
    let mut mesh = QCMesh::structured(topo, [0, 0, 0], [blocks; 3], h, order, None).map_err(|e| e.to_string())?;
    mesh.attach(&lat).map_err(|e| e.to_string())?;
    let check = |mesh: &QCMesh, lat: &DiscreteLattice, what: &str| -> Result<(), String> {
        mesh.validate(lat).map_err(|e| format!("seed {seed} after {what}: {e}"))?;
        conserve(mesh, lat).map_err(|e| format!("seed {seed} after {what}: {e}"))
    };
    check(&mesh, &lat, "construction")?;
    let mut checked = 1;
    let cell = |rng: &mut ChaCha8Rng| -> Cell { [rng.gen_range(0..=n), rng.gen_range(0..=n), if three_d { rng.gen_range(0..=n) } else { 0 }] };
    for _ in 0..rng.gen_range(2..=6) {
        let what = match rng.gen_range(0..4) {
            0 => {
                let k = mesh.elements.len();
                if k == 0 {
                    continue;
                }
                let t: Vec<usize> = (0..rng.gen_range(1..=3)).map(|_| rng.gen_range(0..k)).collect();
                mesh.refine(&lat, &t).map_err(|e| format!("seed {seed} refine: {e}"))?;
                "refine"
            }
            1 => {
                let c = cell(&mut rng);
                let r = rng.gen_range(0..=2);
                mesh.fully_resolve(&lat, |p| (0..3).all(|k| (p[k] - c[k]).abs() <= r))
                    .map_err(|e| format!("seed {seed} resolve: {e}"))?;
                "resolve"
            }
            2 => {
                let c = cell(&mut rng);
                if lat.n_cells() <= 1 {
                    continue;
                }
                match mesh.remove_unit_cell(&mut lat, c) {
                    Ok(()) | Err(QcError::InQuadraticRegion(_)) | Err(QcError::NotInDomain(_)) => {}
                    Err(e) => return Err(format!("seed {seed} remove {c:?}: {e}")),
                }
                "remove"
            }
            _ => {
                mesh = mesh.to_first_order();
                "first-order split"
            }
        };
        check(&mesh, &lat, what)?;
        checked += 1;
    }
    Ok(checked)
}

fn criterion_9() -> Outcome {
    let results: Vec<Result<usize, String>> = (0..10_000u64).into_par_iter().map(|s| mesh_sequence(9_000 + s)).collect();
    let meshes: usize = results.iter().filter_map(|r| r.as_ref().ok()).sum();
    let failures: Vec<&String> = results.iter().filter_map(|r| r.as_ref().err()).collect();
    if failures.is_empty() {
        Ok(format!("10000 sequences, {meshes} meshes validated"))
    } else {
        Err(format!("{} of 10000 sequences failed; first: {}", failures.len(), failures[0]))
    }
}

// ---------------------------------------------------------------- 10

fn criterion_10() -> Outcome {
    let (n, miss) = (MESHES.load(Ordering::Relaxed), WEIGHT_MISSES.load(Ordering::Relaxed));
    let msg = format!("{n} meshes summed, {miss} violations (models refuse a mesh with sum != N)");
    if miss == 0 && n > 0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// `ACCEPTANCE_ONLY=3,4` restricts the run to the listed criteria.
fn selected(id: usize) -> bool {
    std::env::var("ACCEPTANCE_ONLY").map_or(true, |v| v.split(',').any(|x| x.trim() == id.to_string()))
}

fn report(id: usize, title: &str, limit: f64, f: impl FnOnce() -> Outcome) -> bool {
    if !selected(id) {
        return true;
    }
    let t = Instant::now();
    let r = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f))
        .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into())));
    let secs = t.elapsed().as_secs_f64();
    let (ok, detail) = match r {
        Ok(d) if secs <= limit => (true, d),
        Ok(d) => (false, format!("{d} (over the {limit:.0} s budget)")),
        Err(d) => (false, d),
    };
    println!("criterion {id:>2} {} {title}: {detail} [{secs:.1} s]", if ok { "PASS" } else { "FAIL" });
    ok
}

fn main() {
    // `cargo test -- --list` and filters from the harness are accepted and ignored
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let dir = tempfile::tempdir().expect("temporary output root");
    let root = dir.path();
    let mut ok = true;
    ok &= report(1, "weight oracles", 60.0, criterion_1);
    ok &= report(2, "zeroth-order consistency", 120.0, criterion_2);
    ok &= report(3, "exact-limit recovery", 120.0, criterion_3);
    ok &= report(4, "gradient/Hessian consistency", 60.0, criterion_4);
    ok &= report(5, "stretch-locking resolution", 1800.0, || criterion_5(root));
    let t = Instant::now();
    let sweeps = if selected(6) || selected(7) { fracture_sweeps(root) } else { Ok(Vec::new()) };
    let elapsed = t.elapsed().as_secs_f64();
    ok &= report(6, "fracture-toughness scaling", 3600.0 - elapsed, || criterion_6(sweeps.as_ref().map_err(|e| e.clone())?));
    ok &= report(7, "critical-beam location", f64::INFINITY, || criterion_7(sweeps.as_ref().map_err(|e| e.clone())?));
    ok &= report(8, "3D surface failure", 3600.0, || criterion_8(root));
    ok &= report(9, "mixed-order mesh legality", 300.0, criterion_9);
    ok &= report(10, "global weight conservation", f64::INFINITY, criterion_10);
    if !ok {
        std::process::exit(1);
    }
}
