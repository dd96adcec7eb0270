//! Cook's membrane: a tapered quadrilateral clamped on the left and sheared
//! by a distributed load on the right edge.

use qclat_core::assembly::{Model, PointLoad};
use qclat_core::beam::{BeamProperties, Material, Section, ShearModel};
use qclat_core::element::Order;
use qclat_core::fracture::OrderMode;
use qclat_core::mesh::QCMesh;
use qclat_core::sampling::SamplingMode;
use qclat_core::solver::{Dirichlet, RefineSchedule, SolveSettings};
use qclat_core::{Cell, DiscreteLattice, QcError, Result, UnitCellTopology};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Corners of the classical membrane (length 48, left height 44, right
/// height 16), counter-clockwise.
pub const COOK_CORNERS: [[f64; 2]; 4] = [[0.0, 0.0], [48.0, 44.0], [48.0, 60.0], [0.0, 44.0]];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CookConfig {
    pub topology: String,
    /// Horizontal extent in unit-cell basis lengths (the classical 48 units).
    pub size: f64,
    /// Unit-cell layers through the thickness (3D topologies only; odd, ≥ 3).
    pub layers: i64,
    /// Vertex spacing of the coarse mesh, in unit cells (even).
    pub spacing: i64,
    /// Spacing of the boundary sites along the slanted edges, in unit cells.
    pub boundary_spacing: i64,
    /// Total vertical force on the right edge.
    pub load: f64,
    /// Strut thickness (2D) or diameter (3D) in strut-length units.
    pub thickness: Option<f64>,
    /// Alternative to `thickness`.
    pub relative_density: Option<f64>,
    pub material: Material,
    pub shear_model: ShearModel,
    pub order: OrderMode,
    pub sampling: SamplingMode,
    pub schedule: RefineSchedule,
    pub solver: SolveSettings,
    /// Optional custom quadrilateral (counter-clockwise, in the same units as `size`/48).
    pub corners: Option<[[f64; 2]; 4]>,
}

impl Default for CookConfig {
    fn default() -> Self {
        CookConfig {
            topology: "hexagonal".into(),
            size: 48.0,
            layers: 3,
            spacing: 8,
            boundary_spacing: 4,
            load: 1e-5,
            thickness: None,
            relative_density: None,
            material: Material::default(),
            shear_model: ShearModel::EulerBernoulli,
            order: OrderMode::Mixed,
            sampling: SamplingMode::Optimal,
            schedule: RefineSchedule { stages: 0, ..Default::default() },
            solver: SolveSettings::default(),
            corners: None,
        }
    }
}

/// A generated membrane: lattice, boundary sets and physical extents.
#[derive(Clone, Debug)]
pub struct CookDomain {
    pub topo: Arc<UnitCellTopology>,
    pub lat: DiscreteLattice,
    pub props: BeamProperties,
    /// Closed boundary polygon in in-plane lattice coordinates
    /// (counter-clockwise, even sites).
    pub boundary: Vec<[i64; 2]>,
    /// Cells whose nodes are clamped (the left edge).
    pub clamped: Vec<Cell>,
    /// Cells whose nodes carry the edge load (the right edge).
    pub loaded: Vec<Cell>,
}

fn cross(o: [i64; 2], a: [i64; 2], b: [i64; 2]) -> i128 {
    (a[0] - o[0]) as i128 * (b[1] - o[1]) as i128 - (a[1] - o[1]) as i128 * (b[0] - o[0]) as i128
}

/// Closed (boundary-inclusive) point-in-polygon test in exact arithmetic.
fn in_polygon(poly: &[[i64; 2]], p: [i64; 2]) -> bool {
    let n = poly.len();
    let mut inside = false;
    for k in 0..n {
        let (a, b) = (poly[k], poly[(k + 1) % n]);
        if cross(a, b, p) == 0
            && p[0] >= a[0].min(b[0])
            && p[0] <= a[0].max(b[0])
            && p[1] >= a[1].min(b[1])
            && p[1] <= a[1].max(b[1])
        {
            return true;
        }
        if (a[1] > p[1]) != (b[1] > p[1]) {
            // crossing to the right of p
            let c = cross(a, b, p);
            if (c > 0) == (b[1] > a[1]) {
                inside = !inside;
            }
        }
    }
    inside
}

struct Plane {
    a: [f64; 2],
    b: [f64; 2],
}

impl Plane {
    fn new(topo: &UnitCellTopology) -> Self {
        Plane { a: [topo.basis[0][0], topo.basis[0][1]], b: [topo.basis[1][0], topo.basis[1][1]] }
    }

    fn phys(&self, c: [i64; 2]) -> [f64; 2] {
        let (i, j) = (c[0] as f64, c[1] as f64);
        [i * self.a[0] + j * self.b[0], i * self.a[1] + j * self.b[1]]
    }

    /// Nearest even site to a physical point.
    fn even_site(&self, x: [f64; 2]) -> [i64; 2] {
        let det = self.a[0] * self.b[1] - self.a[1] * self.b[0];
        let f = [(x[0] * self.b[1] - x[1] * self.b[0]) / det, (self.a[0] * x[1] - self.a[1] * x[0]) / det];
        let base = f.map(|v| 2 * (v / 2.0).floor() as i64);
        let mut best = (f64::INFINITY, base);
        for di in [0, 2] {
            for dj in [0, 2] {
                let c = [base[0] + di, base[1] + dj];
                let p = self.phys(c);
                let d = (p[0] - x[0]).powi(2) + (p[1] - x[1]).powi(2);
                if d < best.0 {
                    best = (d, c);
                }
            }
        }
        best.1
    }

    /// Shortest lattice vector along +y.
    fn vertical(&self) -> Option<[i64; 2]> {
        let mut best: Option<(f64, [i64; 2])> = None;
        for p in -6i64..=6 {
            for q in 1i64..=6 {
                let x = self.phys([p, q]);
                if x[0].abs() < 1e-9 && x[1] > 0.0 && best.is_none_or(|b| x[1] < b.0 - 1e-12) {
                    best = Some((x[1], [p, q]));
                }
            }
        }
        best.map(|b| b.1)
    }
}

fn seg_dist(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let t = (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / (d[0] * d[0] + d[1] * d[1])).clamp(0.0, 1.0);
    ((p[0] - a[0] - t * d[0]).powi(2) + (p[1] - a[1] - t * d[1]).powi(2)).sqrt()
}

impl CookConfig {
    pub fn section(&self, topo: &UnitCellTopology) -> Result<Section> {
        match (self.thickness, self.relative_density) {
            (Some(_), Some(_)) => Err(QcError::InvalidInput("give either thickness or relative_density, not both".into())),
            (None, Some(rho)) => qclat_core::fracture::section_for_density(topo, rho),
            (t, None) => {
                let t = t.unwrap_or(0.1);
                Ok(if topo.dim == 2 { Section::Rect { thickness: t } } else { Section::Circle { diameter: t } })
            }
        }
    }

    pub fn polygon(&self, topo: &UnitCellTopology) -> [[f64; 2]; 4] {
        let s = self.size * topo.basis_length() / 48.0;
        self.corners.unwrap_or(COOK_CORNERS).map(|p| [p[0] * s, p[1] * s])
    }

    /// Lattice polygon approximating the membrane: the clamped and loaded
    /// edges run along a vertical lattice direction through even sites, the
    /// slanted edges through even sites every `boundary_spacing` cells.
    pub fn domain(&self) -> Result<CookDomain> {
        let topo = Arc::new(UnitCellTopology::builtin(&self.topology)?);
        let d = topo.dim;
        if d == 3 && (self.layers < 3 || self.layers % 2 == 0) {
            return Err(QcError::InvalidInput(format!("layers must be odd and at least 3, got {}", self.layers)));
        }
        if self.spacing < 2 || self.spacing % 2 != 0 {
            return Err(QcError::InvalidInput("spacing must be even and at least 2".into()));
        }
        if self.boundary_spacing < 1 {
            return Err(QcError::InvalidInput("boundary_spacing must be positive".into()));
        }
        if !self.load.is_finite() {
            return Err(QcError::InvalidInput("load must be finite".into()));
        }
        let plane = Plane::new(&topo);
        let l = topo.basis_length();
        let v = plane
            .vertical()
            .ok_or_else(|| QcError::InvalidInput(format!("{} has no short vertical lattice vector", topo.name)))?;
        let v2 = [2 * v[0], 2 * v[1]];
        let step = plane.phys(v2)[1];
        let p = self.polygon(&topo);
        let c0 = plane.even_site(p[0]);
        let c1 = plane.even_site(p[1]);
        let k_left = ((p[3][1] - p[0][1]) / step).round() as i64;
        let k_right = ((p[2][1] - p[1][1]) / step).round() as i64;
        let c3 = [c0[0] + k_left * v2[0], c0[1] + k_left * v2[1]];
        let c2 = [c1[0] + k_right * v2[0], c1[1] + k_right * v2[1]];
        let across = [k_left as f64 * step, k_right as f64 * step, plane.phys(c1)[0] - plane.phys(c0)[0]];
        if across.iter().any(|&x| x < 3.0 * l) {
            return Err(QcError::InvalidInput(format!(
                "membrane is only {:.1} unit cells across; at least 3 are needed",
                across.iter().fold(f64::INFINITY, |a, &b| a.min(b)) / l
            )));
        }
        let slanted = |from: [i64; 2], to: [i64; 2]| -> Vec<[i64; 2]> {
            let (x, y) = (plane.phys(from), plane.phys(to));
            let len = ((y[0] - x[0]).powi(2) + (y[1] - x[1]).powi(2)).sqrt();
            let n = ((len / (self.boundary_spacing as f64 * l)).round() as usize).max(1);
            let mut out: Vec<[i64; 2]> = Vec::new();
            for k in 0..n {
                let t = k as f64 / n as f64;
                let c = if k == 0 { from } else { plane.even_site([x[0] + t * (y[0] - x[0]), x[1] + t * (y[1] - x[1])]) };
                if out.last() != Some(&c) {
                    out.push(c);
                }
            }
            out
        };
        let mut boundary = slanted(c0, c1);
        boundary.extend((0..k_right).map(|k| [c1[0] + k * v2[0], c1[1] + k * v2[1]]));
        boundary.extend(slanted(c2, c3));
        boundary.extend((0..k_left).map(|k| [c3[0] - k * v2[0], c3[1] - k * v2[1]]));
        let (lo, hi) = boundary.iter().fold(([i64::MAX; 2], [i64::MIN; 2]), |(lo, hi), c| {
            ([lo[0].min(c[0]), lo[1].min(c[1])], [hi[0].max(c[0]), hi[1].max(c[1])])
        });
        let zhi = if d == 3 { self.layers - 1 } else { 0 };
        let lat = DiscreteLattice::from_predicate(topo.clone(), [lo[0], lo[1], 0], [hi[0], hi[1], zhi], |c, _| {
            in_polygon(&boundary, [c[0], c[1]])
        })?;
        let column = |from: [i64; 2], k: i64| -> Vec<Cell> {
            let mut out = Vec::new();
            for z in 0..=zhi {
                for t in 0..=2 * k {
                    out.push([from[0] + t * v[0], from[1] + t * v[1], z]);
                }
            }
            out
        };
        let clamped = column(c0, k_left);
        let loaded = column(c1, k_right);
        let props = BeamProperties::new(&self.material, self.section(&topo)?, self.shear_model)?;
        Ok(CookDomain { topo, lat, props, boundary, clamped, loaded })
    }
}

impl CookDomain {
    /// Coarse mesh of the given order mode: constrained Delaunay of the
    /// boundary polygon plus an even `spacing` grid (extruded in 3D).
    /// Every clamped and loaded cell is a representative.
    pub fn mesh(&self, spacing: i64, mode: OrderMode) -> Result<QCMesh> {
        let d = self.topo.dim;
        let plane = Plane::new(&self.topo);
        let n = self.boundary.len();
        let bx: Vec<[f64; 2]> = self.boundary.iter().map(|&c| plane.phys(c)).collect();
        let clear = 0.6 * spacing as f64 * self.topo.basis_length();
        let interior: Vec<Cell> = self
            .lat
            .cells()
            .filter(|c| c[2] == 0 && c[0].rem_euclid(spacing) == 0 && c[1].rem_euclid(spacing) == 0)
            .filter(|c| {
                let x = plane.phys([c[0], c[1]]);
                (0..n).all(|k| seg_dist(x, bx[k], bx[(k + 1) % n]) >= clear)
            })
            .map(|c| [c[0], c[1], 0])
            .collect();
        let carrier = if d == 2 { self.topo.clone() } else { Arc::new(carrier_2d(&self.topo)) };
        let bnd: Vec<Cell> = self.boundary.iter().map(|c| [c[0], c[1], 0]).collect();
        let base = QCMesh::delaunay_polygon(carrier, &bnd, &interior, Order::Quadratic)?;
        let mut mesh = if d == 2 {
            base
        } else {
            let top = self.lat.cells().map(|c| c[2]).max().unwrap_or(0);
            let levels: Vec<i64> = (0..=top / 2).map(|k| 2 * k).collect();
            QCMesh::extrude(self.topo.clone(), &base, &levels)?
        };
        mesh.attach(&self.lat)?;
        Ok(match mode {
            OrderMode::First => mesh.to_first_order(),
            _ => mesh,
        })
    }

    pub fn atomistic_mesh(&self) -> Result<QCMesh> {
        QCMesh::atomistic(&self.lat)
    }

    /// Clamp every DOF of the clamped cells.
    pub fn constraints(&self, model: &Model) -> Result<Dirichlet> {
        let mut d = Dirichlet::new();
        let m = model.dofs_per_node();
        for &c in &self.clamped {
            for j in 0..self.topo.n_nodes() {
                for k in 0..m {
                    d.fix_node(model, c, j, k, 0.0)?;
                }
            }
        }
        Ok(d)
    }

    /// Total force `load` split evenly over the loaded-cell nodes held by at
    /// least two struts, +y.
    pub fn loads(&self, load: f64) -> Vec<PointLoad> {
        let beams = self.topo.uc_beams();
        // a node held by a single strut (possible at the corners) is not part
        // of the load-bearing edge
        let attached = |c: Cell, j: usize| {
            beams
                .iter()
                .filter(|b| {
                    ((b.na == j && b.ca == [0; 3]) || (b.nb == j && b.cb == [0; 3])) && self.lat.beam_active(c, b)
                })
                .count()
                >= 2
        };
        let nodes: Vec<(Cell, usize)> = self
            .loaded
            .iter()
            .flat_map(|&c| (0..self.topo.n_nodes()).map(move |j| (c, j)))
            .filter(|&(c, j)| attached(c, j))
            .collect();
        let per = load / nodes.len() as f64;
        nodes.into_iter().map(|(cell, node)| PointLoad { cell, node, dof: 1, value: per }).collect()
    }
}

/// Planar carrier topology with the same in-plane basis, for meshing the
/// base of an extruded 3D domain.
fn carrier_2d(topo: &UnitCellTopology) -> UnitCellTopology {
    let b = topo.basis;
    let text = format!(
        "name = \"{}-plane\"\ndim = 2\nbasis = [[{}, {}], [{}, {}]]\nnodes = [[0.0, 0.0]]\n",
        topo.name, b[0][0], b[0][1], b[1][0], b[1][1]
    );
    UnitCellTopology::from_toml(&text).expect("valid planar carrier")
}

/// Largest y-displacement over all lattice nodes (interpolated).
pub fn max_y_displacement(model: &Model, u: &[f64]) -> Result<f64> {
    let nb = model.lat.topo.n_nodes();
    let m = model.dofs_per_node();
    let mut best = f64::NEG_INFINITY;
    for &c in model.lat.cells() {
        let v = model.interpolate_cell(u, c)?;
        for j in 0..nb {
            best = best.max(v[j * m + 1]);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hexagonal_fill_is_valid() {
        let cfg = CookConfig { size: 24.0, spacing: 4, ..Default::default() };
        let dom = cfg.domain().unwrap();
        assert!(dom.lat.n_cells() > 100);
        assert!(!dom.clamped.is_empty() && !dom.loaded.is_empty());
        let mesh = dom.mesh(4, OrderMode::Mixed).unwrap();
        mesh.validate(&dom.lat).unwrap();
        let model = Model::new(dom.lat.clone(), mesh, dom.props, SamplingMode::Optimal).unwrap();
        assert!(model.rep_density() < 1.0);
        dom.constraints(&model).unwrap();
    }

    #[test]
    fn octet_with_three_layers_is_valid() {
        let cfg = CookConfig { topology: "octet".into(), size: 16.0, spacing: 4, layers: 3, ..Default::default() };
        let dom = cfg.domain().unwrap();
        let mesh = dom.mesh(4, OrderMode::Mixed).unwrap();
        mesh.validate(&dom.lat).unwrap();
        assert_eq!(dom.lat.cells().map(|c| c[2]).max(), Some(2));
    }

    #[test]
    fn narrow_domain_is_rejected() {
        let cfg = CookConfig { size: 4.0, ..Default::default() };
        assert!(matches!(cfg.domain(), Err(QcError::InvalidInput(_))));
        let cfg = CookConfig { topology: "octet".into(), layers: 2, ..Default::default() };
        assert!(cfg.domain().is_err());
    }

    #[test]
    fn load_sums_to_total() {
        let cfg = CookConfig { size: 24.0, ..Default::default() };
        let dom = cfg.domain().unwrap();
        let s: f64 = dom.loads(2.5).iter().map(|l| l.value).sum();
        assert!((s - 2.5).abs() < 1e-12);
    }
}
