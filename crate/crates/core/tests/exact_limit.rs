mod common;

use common::{affine_full, props, Direct};
use qclat_core::assembly::{Model, PointLoad};
use qclat_core::element::Order;
use qclat_core::mesh::QCMesh;
use qclat_core::sampling::SamplingMode;
use qclat_core::solver::{minimize, Dirichlet, SolveSettings};
use qclat_core::{DiscreteLattice, UnitCellTopology};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

fn boxed(name: &str, n: i64) -> DiscreteLattice {
    let t = Arc::new(UnitCellTopology::builtin(name).unwrap());
    let hi = if t.dim == 2 { [n, n, 0] } else { [n, n, n] };
    DiscreteLattice::boxed(t, [0, 0, 0], hi).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn affine_fields_are_sampled_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for name in qclat_core::lattice::catalog_names() {
        let lat = boxed(name, if name == "tetrakaidecahedral" { 4 } else if lat_dim(name) == 2 { 16 } else { 8 });
        let p = props(lat.dim());
        let direct = Direct::new(&lat, &p);
        for order in [Order::Linear, Order::Quadratic] {
            let n = if lat.dim() == 2 { 16 } else if name == "tetrakaidecahedral" { 4 } else { 8 };
            let h = if lat.dim() == 2 { 4 } else { 2 };
            let blocks = [n / h, n / h, n / h];
            let mut mesh = QCMesh::structured(lat.topo.clone(), [0, 0, 0], blocks, h, order, None).unwrap();
            mesh.attach(&lat).unwrap();
            let model = Model::new(lat.clone(), mesh, p, SamplingMode::Optimal).unwrap();
            for _ in 0..5 {
                let mut g = [[0.0; 3]; 3];
                for row in g.iter_mut().take(lat.dim()) {
                    for x in row.iter_mut().take(lat.dim()) {
                        *x = rng.gen_range(-0.05..0.05);
                    }
                }
                let rot = [rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)];
                let r = if lat.dim() == 2 { [0.0, 0.0, rot[2]] } else { rot };
                let u = model.affine_field(g, |_| r);
                let full = affine_full(&lat, &direct, g, r);
                let (a, b) = (model.energy(&u), direct.energy(&full));
                assert!(rel(a, b) < 1e-9, "{name} {order:?}: {a} vs {b}");
            }
        }
    }
}

fn lat_dim(name: &str) -> usize {
    UnitCellTopology::builtin(name).unwrap().dim
}

#[test]
fn fully_resolved_matches_direct_assembly() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (name, n) in [("triangular", 8), ("hexagonal", 6), ("star", 5), ("octet", 3)] {
        let lat = boxed(name, n);
        let p = props(lat.dim());
        let direct = Direct::new(&lat, &p);
        let mesh = QCMesh::atomistic(&lat).unwrap();
        let model = Model::new(lat.clone(), mesh, p, SamplingMode::Optimal).unwrap();
        assert_eq!(model.n_reps(), lat.n_cells());
        // model DOF -> direct DOF
        let per = lat.topo.dofs_per_cell();
        let map: Vec<usize> = (0..model.ndof())
            .map(|i| direct.idx[&model.interp.reps[i / per]] * per + i % per)
            .collect();
        let u: Vec<f64> = (0..model.ndof()).map(|_| rng.gen_range(-0.02..0.02)).collect();
        let mut v = vec![0.0; direct.ndof()];
        for i in 0..u.len() {
            v[map[i]] = u[i];
        }
        let (e, g, h) = model.assemble(&u, true);
        let h = h.unwrap().to_dense(model.ndof());
        let (eo, go, ho) = direct.eval(&v);
        assert!(rel(e, eo) < 1e-12, "{name} energy {e} {eo}");
        let gs = go.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let hs = ho.iter().flatten().fold(0.0f64, |a, x| a.max(x.abs()));
        for i in 0..u.len() {
            assert!((g[i] - go[map[i]]).abs() < 1e-10 * gs, "{name} grad {i}");
            for j in 0..u.len() {
                assert!((h[i][j] - ho[map[i]][map[j]]).abs() < 1e-10 * hs, "{name} hess {i} {j}");
            }
        }
    }
}

#[test]
fn fully_resolved_equilibrium_matches_direct_solution() {
    for (name, n) in [("triangular", 10), ("hexagonal", 8), ("octet", 3)] {
        let lat = boxed(name, n);
        let p = props(lat.dim());
        let direct = Direct::new(&lat, &p);
        let mesh = QCMesh::atomistic(&lat).unwrap();
        let model = Model::new(lat.clone(), mesh, p, SamplingMode::Optimal).unwrap();
        let (m, nb) = (lat.topo.dofs_per_node(), lat.topo.n_nodes());
        let corner = if lat.dim() == 2 { [n, n, 0] } else { [n, n, n] };
        let load = PointLoad { cell: corner, node: 0, dof: 1, value: -1e-6 };
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
        let res = minimize(&model, &vec![0.0; model.ndof()], &bcs, &f, &settings).unwrap();
        assert!(res.converged);
        let uo = direct.solve(&fixed, &fo, 1e-13);
        let umax = uo.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let per = lat.topo.dofs_per_cell();
        for (i, &x) in res.u.iter().enumerate() {
            let o = direct.idx[&model.interp.reps[i / per]] * per + i % per;
            assert!((x - uo[o]).abs() < 1e-8 * umax, "{name} dof {i}: {x} vs {}", uo[o]);
        }
    }
}
