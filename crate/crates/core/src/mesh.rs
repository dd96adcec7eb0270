//! Mixed-order simplicial meshes over a lattice.
//!
//! Vertices are lattice sites; quadratic elements keep their vertices on
//! even sites so that edge midpoints are lattice sites too. Elements whose
//! lattice sites are all nodes are "fully resolved"; minimal quadratic ones
//! are split into linear children, so the fine region is always linear.

use crate::element::{edges, Element, Order, Shape};
use crate::error::{QcError, Result};
use crate::geom::{iadd, is_even, isub};
use crate::lattice::{Cell, DiscreteLattice, KuhnDiagonal, UnitCellTopology};
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::Arc;

pub use crate::element::Order as ElementOrder;

#[derive(Clone, Debug)]
pub struct QCMesh {
    pub dim: usize,
    pub topo: Arc<UnitCellTopology>,
    pub elements: Vec<Element>,
    /// Representative cells not covered by any element.
    isolated: BTreeSet<Cell>,
}

/// Representative-cell numbering and the interpolation of every lattice
/// cell from representatives.
#[derive(Clone, Debug, Default)]
pub struct Interp {
    pub reps: Vec<Cell>,
    pub index: HashMap<Cell, u32>,
    pub map: HashMap<Cell, SmallVec<[(u32, f64); 10]>>,
}

impl Interp {
    pub fn n_reps(&self) -> usize {
        self.reps.len()
    }

    pub fn weights(&self, c: Cell) -> Option<&SmallVec<[(u32, f64); 10]>> {
        self.map.get(&c)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RefineReport {
    pub bisected: usize,
    pub frozen: usize,
    pub split: usize,
}

/// Serializable mesh description.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshDoc {
    pub topology: String,
    pub dim: usize,
    pub elements: Vec<Element>,
    #[serde(default)]
    pub isolated: Vec<Cell>,
    /// Occupied cells, when they differ from the element closures.
    #[serde(default)]
    pub cells: Option<Vec<Cell>>,
}

fn edge_key(a: Cell, b: Cell) -> (Cell, Cell) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl QCMesh {
    pub fn new(topo: Arc<UnitCellTopology>, elements: Vec<Element>) -> Self {
        QCMesh { dim: topo.dim, topo, elements, isolated: BTreeSet::new() }
    }

    /// Kuhn mesh of a box made of `blocks` cubes (squares) of edge `h`
    /// starting at `lo`.
    pub fn structured(
        topo: Arc<UnitCellTopology>,
        lo: Cell,
        blocks: [i64; 3],
        h: i64,
        order: Order,
        diag: Option<KuhnDiagonal>,
    ) -> Result<Self> {
        let d = topo.dim;
        let mut els = Vec::new();
        let diag = diag.unwrap_or(topo.kuhn_diagonal);
        if d == 2 {
            for j in 0..blocks[1] {
                for i in 0..blocks[0] {
                    let p = |di: i64, dj: i64| [lo[0] + (i + di) * h, lo[1] + (j + dj) * h, 0];
                    let tris = match diag {
                        KuhnDiagonal::Main => [[p(0, 0), p(1, 0), p(1, 1)], [p(0, 0), p(1, 1), p(0, 1)]],
                        KuhnDiagonal::Anti => [[p(0, 0), p(1, 0), p(0, 1)], [p(1, 0), p(1, 1), p(0, 1)]],
                    };
                    for t in tris {
                        els.push(Element::new(2, order, &t)?);
                    }
                }
            }
        } else {
            let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
            for k in 0..blocks[2] {
                for j in 0..blocks[1] {
                    for i in 0..blocks[0] {
                        let p0 = [lo[0] + i * h, lo[1] + j * h, lo[2] + k * h];
                        for pm in perms {
                            let mut v = [p0; 4];
                            for s in 0..3 {
                                v[s + 1] = v[s];
                                v[s + 1][pm[s]] += h;
                            }
                            els.push(Element::new(3, order, &v)?);
                        }
                    }
                }
            }
        }
        Ok(Self::new(topo, els))
    }

    /// Hexagon |c1|, |c2|, |c1 + c2| <= r meshed with anti-diagonal Kuhn
    /// triangles of size `h` (r must be a multiple of h).
    pub fn kuhn_hexagon(topo: Arc<UnitCellTopology>, r: i64, h: i64, order: Order) -> Result<Self> {
        if r % h != 0 {
            return Err(QcError::InvalidInput("hexagon radius must be a multiple of the element size".into()));
        }
        let n = 2 * r / h;
        let full = Self::structured(topo.clone(), [-r, -r, 0], [n, n, 1], h, order, Some(KuhnDiagonal::Anti))?;
        let els = full
            .elements
            .into_iter()
            .filter(|e| e.vertices().iter().all(|v| (v[0] + v[1]).abs() <= r))
            .collect();
        Ok(Self::new(topo, els))
    }

    /// Mesh in which every lattice cell is a node (the exact limit).
    pub fn atomistic(lat: &DiscreteLattice) -> Result<Self> {
        let topo = lat.topo.clone();
        let cells = lat.cells_sorted();
        let lo = [0, 1, 2].map(|k| cells.iter().map(|c| c[k]).min().unwrap());
        let hi = [0, 1, 2].map(|k| cells.iter().map(|c| c[k]).max().unwrap());
        let blocks = [0, 1, 2].map(|k| (hi[k] - lo[k]).max(if k < topo.dim { 0 } else { 1 }));
        let mut m = if blocks[..topo.dim].contains(&0) {
            Self::new(topo.clone(), Vec::new())
        } else {
            Self::structured(topo.clone(), lo, blocks, 1, Order::Linear, None)?
        };
        m.elements.retain(|e| e.vertices().iter().all(|v| lat.contains(*v)));
        m.attach(lat)?;
        Ok(m)
    }

    /// Delaunay triangulation (2D) of the given lattice sites.
    pub fn delaunay(topo: Arc<UnitCellTopology>, points: &[Cell], order: Order) -> Result<Self> {
        use spade::{DelaunayTriangulation, Point2, Triangulation};
        if topo.dim != 2 {
            return Err(QcError::InvalidInput("Delaunay meshing is only available in 2D".into()));
        }
        let mut t: DelaunayTriangulation<Point2<f64>> = DelaunayTriangulation::new();
        let mut ids = HashMap::new();
        // integer-rounded scaled basis: collinear lattice sites stay exactly
        // collinear, so no zero-area slivers appear
        let a = topo.basis[0].map(|v| (v * 1e6).round());
        let b = topo.basis[1].map(|v| (v * 1e6).round());
        for &c in points {
            let (i, j) = (c[0] as f64, c[1] as f64);
            let x = [i * a[0] + j * b[0], i * a[1] + j * b[1]];
            let h = t
                .insert(Point2::new(x[0], x[1]))
                .map_err(|e| QcError::InvalidInput(format!("bad point {c:?}: {e:?}")))?;
            ids.insert(h.index(), c);
        }
        let mut els = Vec::new();
        for (k, f) in t.inner_faces().enumerate() {
            let v = f.vertices().map(|h| ids[&h.fix().index()]);
            els.push(Element::new(2, order, &v).map_err(|e| match e {
                QcError::DegenerateElement(_) => QcError::DegenerateElement(k),
                e => e,
            })?);
        }
        if els.is_empty() {
            return Err(QcError::DegenerateElement(0));
        }
        Ok(Self::new(topo, els))
    }

    /// Constrained Delaunay triangulation (2D) of the closed lattice polygon
    /// `boundary` (consecutive sites, either orientation) with additional
    /// `interior` sites. Only triangles inside the polygon are kept, so the
    /// mesh covers exactly the closed polygon.
    pub fn delaunay_polygon(topo: Arc<UnitCellTopology>, boundary: &[Cell], interior: &[Cell], order: Order) -> Result<Self> {
        use spade::{ConstrainedDelaunayTriangulation, Point2, Triangulation};
        if topo.dim != 2 {
            return Err(QcError::InvalidInput("Delaunay meshing is only available in 2D".into()));
        }
        if boundary.len() < 3 {
            return Err(QcError::InvalidInput("a polygon needs at least three sites".into()));
        }
        let a = topo.basis[0].map(|v| (v * 1e6).round());
        let b = topo.basis[1].map(|v| (v * 1e6).round());
        let map = |c: Cell| {
            let (i, j) = (c[0] as f64, c[1] as f64);
            [i * a[0] + j * b[0], i * a[1] + j * b[1]]
        };
        let mut t: ConstrainedDelaunayTriangulation<Point2<f64>> = ConstrainedDelaunayTriangulation::new();
        let mut ids = HashMap::new();
        let mut handles = Vec::new();
        for &c in boundary.iter().chain(interior) {
            let x = map(c);
            let h = t
                .insert(Point2::new(x[0], x[1]))
                .map_err(|e| QcError::InvalidInput(format!("bad point {c:?}: {e:?}")))?;
            ids.insert(h.index(), c);
            handles.push(h);
        }
        let n = boundary.len();
        for k in 0..n {
            let (p, q) = (handles[k], handles[(k + 1) % n]);
            if !t.can_add_constraint(p, q) {
                return Err(QcError::InvalidInput("boundary polygon intersects itself".into()));
            }
            t.add_constraint(p, q);
        }
        let poly: Vec<[f64; 2]> = boundary.iter().map(|&c| map(c)).collect();
        let inside = |p: [f64; 2]| {
            let mut wind = false;
            for k in 0..n {
                let (u, v) = (poly[k], poly[(k + 1) % n]);
                if (u[1] > p[1]) != (v[1] > p[1]) {
                    let x = u[0] + (p[1] - u[1]) / (v[1] - u[1]) * (v[0] - u[0]);
                    if p[0] < x {
                        wind = !wind;
                    }
                }
            }
            wind
        };
        let mut els = Vec::new();
        for f in t.inner_faces() {
            let v = f.vertices().map(|h| ids[&h.fix().index()]);
            let x = v.map(map);
            let cen = [(x[0][0] + x[1][0] + x[2][0]) / 3.0, (x[0][1] + x[1][1] + x[2][1]) / 3.0];
            if !inside(cen) {
                continue;
            }
            let k = els.len();
            els.push(Element::new(2, order, &v).map_err(|e| match e {
                QcError::DegenerateElement(_) => QcError::DegenerateElement(k),
                e => e,
            })?);
        }
        if els.is_empty() {
            return Err(QcError::DegenerateElement(0));
        }
        Ok(Self::new(topo, els))
    }

    /// Extrude a 2D mesh through the given (even, increasing) z levels,
    /// three tetrahedra per prism with conforming diagonals.
    pub fn extrude(topo3: Arc<UnitCellTopology>, base: &QCMesh, levels: &[i64]) -> Result<Self> {
        if topo3.dim != 3 || base.dim != 2 {
            return Err(QcError::InvalidInput("extrusion maps a 2D mesh to 3D".into()));
        }
        let mut els = Vec::new();
        for e in &base.elements {
            let mut v: Vec<Cell> = e.vertices().to_vec();
            v.sort();
            for w in levels.windows(2) {
                let b = |i: usize| [v[i][0], v[i][1], w[0]];
                let t = |i: usize| [v[i][0], v[i][1], w[1]];
                for tet in [[b(0), b(1), b(2), t(2)], [b(0), b(1), t(1), t(2)], [b(0), t(0), t(1), t(2)]] {
                    els.push(Element::new(3, e.order, &tet)?);
                }
            }
        }
        Ok(Self::new(topo3, els))
    }

    pub fn from_doc(doc: &MeshDoc) -> Result<(Self, DiscreteLattice)> {
        let topo = Arc::new(UnitCellTopology::builtin(&doc.topology)?);
        if topo.dim != doc.dim {
            return Err(QcError::InvalidInput("mesh dimension does not match topology".into()));
        }
        let mut els = Vec::new();
        for (k, e) in doc.elements.iter().enumerate() {
            let mut ne = Element::new(doc.dim, e.order, &e.nodes).map_err(|err| match err {
                QcError::DegenerateElement(_) => QcError::DegenerateElement(k),
                err => err,
            })?;
            ne.frozen = e.frozen;
            els.push(ne);
        }
        let mut m = Self::new(topo.clone(), els);
        let cells: Vec<Cell> = match &doc.cells {
            Some(c) => c.clone(),
            None => {
                let mut s: BTreeSet<Cell> = doc.isolated.iter().copied().collect();
                for e in &m.elements {
                    s.extend(e.closure_points());
                }
                s.into_iter().collect()
            }
        };
        let lat = DiscreteLattice::from_cells(topo, cells)?;
        m.attach(&lat)?;
        Ok((m, lat))
    }

    pub fn to_doc(&self, lat: &DiscreteLattice, with_cells: bool) -> MeshDoc {
        MeshDoc {
            topology: self.topo.name.clone(),
            dim: self.dim,
            elements: self.elements.clone(),
            isolated: self.isolated.iter().copied().collect(),
            cells: with_cells.then(|| lat.cells_sorted()),
        }
    }

    /// Check that all element sites belong to the lattice and record the
    /// cells not covered by any element as isolated representatives.
    pub fn attach(&mut self, lat: &DiscreteLattice) -> Result<()> {
        let mut covered = HashSet::new();
        for e in &self.elements {
            for p in e.closure_points() {
                if !lat.contains(p) {
                    return Err(QcError::NotALatticeSite(p));
                }
                covered.insert(p);
            }
        }
        self.isolated = lat.cells().filter(|c| !covered.contains(*c)).copied().collect();
        Ok(())
    }

    pub fn isolated(&self) -> &BTreeSet<Cell> {
        &self.isolated
    }

    /// Representative cells in lexicographic order.
    pub fn reps(&self) -> Vec<Cell> {
        let mut s: BTreeSet<Cell> = self.isolated.clone();
        for e in &self.elements {
            s.extend(e.nodes.iter().copied());
        }
        s.into_iter().collect()
    }

    pub fn n_reps(&self) -> usize {
        self.reps().len()
    }

    /// Build the interpolation of every covered cell from the representatives.
    pub fn interp(&self) -> Interp {
        let reps = self.reps();
        let index: HashMap<Cell, u32> = reps.iter().enumerate().map(|(i, &c)| (c, i as u32)).collect();
        let mut map: HashMap<Cell, SmallVec<[(u32, f64); 10]>> = HashMap::new();
        for (&c, &i) in &index {
            map.insert(c, smallvec::smallvec![(i, 1.0)]);
        }
        for e in &self.elements {
            for p in e.closure_points() {
                if map.contains_key(&p) {
                    continue;
                }
                let s = e.shape_at(p);
                map.insert(p, s.iter().map(|&(c, n)| (index[&c], n)).collect());
            }
        }
        Interp { reps, index, map }
    }

    pub fn total_measure(&self) -> f64 {
        self.elements.iter().map(|e| e.measure(&self.topo)).sum()
    }

    pub fn count_order(&self, o: Order) -> usize {
        self.elements.iter().filter(|e| e.order == o).count()
    }

    /// Convert every quadratic element into 2^d linear ones on the same nodes.
    pub fn to_first_order(&self) -> Self {
        let mut els = Vec::new();
        for e in &self.elements {
            match e.order {
                Order::Linear => els.push(e.clone()),
                Order::Quadratic => els.extend(e.split_to_linear(&self.topo)),
            }
        }
        QCMesh { dim: self.dim, topo: self.topo.clone(), elements: els, isolated: self.isolated.clone() }
    }

    // ---------------- refinement ----------------

    /// Bisect the given elements (longest-edge bisection with conforming
    /// propagation). Minimal quadratic elements are split into linear ones.
    pub fn refine(&mut self, lat: &DiscreteLattice, targets: &[usize]) -> Result<RefineReport> {
        let mut w = Work::new(self, lat);
        let ids: Vec<usize> = targets.to_vec();
        let mut rep = RefineReport::default();
        for &t in &ids {
            if t >= w.els.len() {
                return Err(QcError::InvalidInput(format!("no element {t}")));
            }
            let Some(e) = w.els[t].clone() else { continue };
            if e.order == Order::Quadratic && e.is_fully_resolved() {
                w.split(t);
                rep.split += 1;
            } else if e.is_fully_resolved() || e.frozen {
                continue;
            } else if w.bisect(t, 0) {
                rep.bisected += 1;
            } else {
                rep.frozen += 1;
            }
        }
        w.finish(self);
        self.attach(lat)?;
        Ok(rep)
    }

    /// Refine until every element touching the region is fully resolved
    /// and linear.
    pub fn fully_resolve(&mut self, lat: &DiscreteLattice, pred: impl Fn(Cell) -> bool) -> Result<RefineReport> {
        self.resolve_region(lat, pred, false)
    }

    /// As [`fully_resolve`], but elements that cannot be bisected onto
    /// lattice sites are removed; their cells become isolated (exact)
    /// representatives.
    pub fn fully_resolve_or_release(&mut self, lat: &DiscreteLattice, pred: impl Fn(Cell) -> bool) -> Result<RefineReport> {
        self.resolve_region(lat, pred, true)
    }

    fn resolve_region(&mut self, lat: &DiscreteLattice, pred: impl Fn(Cell) -> bool, release: bool) -> Result<RefineReport> {
        let mut rep = RefineReport::default();
        let mut w = Work::new(self, lat);
        loop {
            let mut progressed = false;
            let n = w.els.len();
            for i in 0..n {
                let Some(e) = w.els[i].clone() else { continue };
                if e.order == Order::Linear && e.is_fully_resolved() {
                    continue;
                }
                if !e.closure_points().into_iter().any(&pred) {
                    continue;
                }
                if e.is_fully_resolved() {
                    w.split(i);
                    rep.split += 1;
                    progressed = true;
                } else if w.bisect(i, 0) {
                    rep.bisected += 1;
                    progressed = true;
                } else if release && w.els[i].is_some() {
                    w.remove(i);
                    rep.frozen += 1;
                    progressed = true;
                } else if let Some(e) = w.els[i].clone() {
                    w.finish(self);
                    return Err(QcError::NonConforming(format!(
                        "element with vertices {:?} cannot be bisected onto lattice sites",
                        e.vertices()
                    )));
                } else {
                    progressed = true;
                }
            }
            if !progressed {
                break;
            }
        }
        w.finish(self);
        self.attach(lat)?;
        Ok(rep)
    }

    /// Delete a unit cell from a fully resolved (linear) region together
    /// with its incident elements.
    pub fn remove_unit_cell(&mut self, lat: &mut DiscreteLattice, c: Cell) -> Result<()> {
        if !lat.contains(c) {
            return Err(QcError::NotInDomain(c));
        }
        let mut incident = Vec::new();
        for (i, e) in self.elements.iter().enumerate() {
            if !e.contains_closed(c) {
                continue;
            }
            if e.order == Order::Quadratic || !e.is_fully_resolved() {
                return Err(QcError::InQuadraticRegion(c));
            }
            incident.push(i);
        }
        let drop: HashSet<usize> = incident.into_iter().collect();
        let mut k = 0;
        self.elements.retain(|_| {
            let keep = !drop.contains(&k);
            k += 1;
            keep
        });
        lat.remove_cell(c);
        self.attach(lat)
    }

    /// Whether `c` lies in the fully resolved, linear part of the mesh.
    pub fn in_linear_region(&self, c: Cell) -> bool {
        self.elements
            .iter()
            .filter(|e| e.contains_closed(c))
            .all(|e| e.order == Order::Linear && e.is_fully_resolved())
    }

    // ---------------- validation ----------------

    /// Exhaustive conformity check on lattice sites: every site in an
    /// element closure is either one of its nodes or interpolated from
    /// them identically by every element containing it, and no site is
    /// interior to two elements.
    pub fn validate(&self, lat: &DiscreteLattice) -> Result<()> {
        let reps: HashSet<Cell> = self.reps().into_iter().collect();
        let mut interior_owner: HashMap<Cell, usize> = HashMap::new();
        let mut shapes: HashMap<Cell, Shape> = HashMap::new();
        for (i, e) in self.elements.iter().enumerate() {
            if e.det() <= 0 {
                return Err(QcError::DegenerateElement(i));
            }
            if e.order == Order::Quadratic {
                if let Some(v) = e.vertices().iter().find(|v| !is_even(**v)) {
                    return Err(QcError::OddVertex(*v));
                }
            }
            for p in e.closure_points() {
                if !lat.contains(p) {
                    return Err(QcError::NotALatticeSite(p));
                }
                let is_node = e.nodes.contains(&p);
                if e.contains_strict(p) {
                    if let Some(j) = interior_owner.insert(p, i) {
                        return Err(QcError::Overlap(j));
                    }
                }
                if reps.contains(&p) {
                    if !is_node {
                        return Err(QcError::NonConforming(format!(
                            "representative {p:?} hangs inside element {i}"
                        )));
                    }
                    continue;
                }
                let mut s = e.shape_at(p);
                s.sort_by_key(|a| a.0);
                if let Some(prev) = shapes.get(&p) {
                    let same = prev.len() == s.len()
                        && prev.iter().zip(s.iter()).all(|(a, b)| a.0 == b.0 && (a.1 - b.1).abs() < 1e-12);
                    if !same {
                        return Err(QcError::NonConforming(format!("interpolation of {p:?} differs between elements")));
                    }
                } else {
                    shapes.insert(p, s);
                }
            }
        }
        for (&p, &i) in &interior_owner {
            // an interior site of one element must not appear in another closure
            for (j, e) in self.elements.iter().enumerate() {
                if j != i && e.contains_closed(p) && !self.elements[i].nodes.contains(&p) {
                    return Err(QcError::Overlap(j));
                }
            }
        }
        for c in lat.cells() {
            if !shapes.contains_key(c) && !reps.contains(c) {
                return Err(QcError::NonConforming(format!("cell {c:?} is not represented")));
            }
        }
        Ok(())
    }

    /// Cheaper variant of [`validate`] for large meshes: checks node
    /// placement and the face-matching rule without enumerating sites.
    pub fn check_nodes(&self, lat: &DiscreteLattice) -> Result<()> {
        for (i, e) in self.elements.iter().enumerate() {
            if e.det() <= 0 {
                return Err(QcError::DegenerateElement(i));
            }
            for &n in &e.nodes {
                if !lat.contains(n) {
                    return Err(QcError::NotALatticeSite(n));
                }
            }
        }
        Ok(())
    }
}

/// Mutable working set for refinement with an edge → elements index.
struct Work<'a> {
    topo: Arc<UnitCellTopology>,
    dim: usize,
    lat: &'a DiscreteLattice,
    els: Vec<Option<Element>>,
    edge_map: HashMap<(Cell, Cell), Vec<usize>>,
}

impl<'a> Work<'a> {
    fn new(m: &QCMesh, lat: &'a DiscreteLattice) -> Self {
        let mut w = Work { topo: m.topo.clone(), dim: m.dim, lat, els: Vec::new(), edge_map: HashMap::new() };
        for e in &m.elements {
            w.add(e.clone());
        }
        w
    }

    fn add(&mut self, e: Element) -> usize {
        let i = self.els.len();
        for &(a, b) in edges(self.dim) {
            self.edge_map.entry(edge_key(e.nodes[a], e.nodes[b])).or_default().push(i);
        }
        self.els.push(Some(e));
        i
    }

    fn remove(&mut self, i: usize) -> Element {
        let e = self.els[i].take().expect("live element");
        for &(a, b) in edges(self.dim) {
            let k = edge_key(e.nodes[a], e.nodes[b]);
            let v = self.edge_map.get_mut(&k).unwrap();
            v.retain(|&x| x != i);
            if v.is_empty() {
                self.edge_map.remove(&k);
            }
        }
        e
    }

    fn finish(self, m: &mut QCMesh) {
        m.elements = self.els.into_iter().flatten().collect();
    }

    fn split(&mut self, i: usize) {
        let e = self.remove(i);
        for k in e.split_to_linear(&self.topo) {
            self.add(k);
        }
    }

    /// Edges whose midpoint is an even lattice site come first (they can be
    /// split without snapping in either order), then by length.
    fn edge_rank(&self, a: Cell, b: Cell) -> (bool, i64, Cell, Cell) {
        let l = Element::edge_len2(&self.topo, a, b);
        let (p, q) = edge_key(a, b);
        let s = iadd(a, b);
        let clean = s.iter().all(|x| x.rem_euclid(4) == 0);
        (clean, (l * 1e9).round() as i64, p, q)
    }

    fn longest(&self, i: usize) -> (Cell, Cell) {
        let e = self.els[i].as_ref().unwrap();
        let (a, b) = edges(self.dim)
            .iter()
            .map(|&(a, b)| (e.nodes[a], e.nodes[b]))
            .max_by_key(|&(a, b)| self.edge_rank(a, b))
            .unwrap();
        edge_key(a, b)
    }

    fn snap(&self, a: Cell, b: Cell, even: bool) -> Cell {
        let s = iadd(a, b);
        if s.iter().all(|x| x % 2 == 0) {
            let m = [s[0] / 2, s[1] / 2, s[2] / 2];
            if !even || is_even(m) {
                return m;
            }
        }
        let base = [s[0].div_euclid(2), s[1].div_euclid(2), s[2].div_euclid(2)];
        let r = if self.dim == 2 { [2, 2, 0] } else { [2, 2, 2] };
        let mut best: Option<((i64, Cell), Cell)> = None;
        for i in -r[0]..=r[0] {
            for j in -r[1]..=r[1] {
                for k in -r[2]..=r[2] {
                    let c = [base[0] + i, base[1] + j, base[2] + k];
                    if even && !is_even(c) {
                        continue;
                    }
                    let d = self.topo.cell_vec(isub([2 * c[0], 2 * c[1], 2 * c[2]], s));
                    let key = (((d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) * 1e9).round() as i64, c);
                    if best.as_ref().is_none_or(|b| key < b.0) {
                        best = Some((key, c));
                    }
                }
            }
        }
        best.unwrap().1
    }

    /// Longest-edge bisection of element `i`; returns false if the element
    /// had to be frozen.
    fn bisect(&mut self, i: usize, depth: usize) -> bool {
        if depth > 200 {
            return false;
        }
        loop {
            let Some(e) = self.els[i].as_ref() else { return true };
            if e.frozen || e.is_fully_resolved() {
                return false;
            }
            let (a, b) = self.longest(i);
            let sharing = self.edge_map[&(a, b)].clone();
            let mut blocked = None;
            for &n in &sharing {
                if n != i && self.longest(n) != (a, b) {
                    blocked = Some(n);
                    break;
                }
            }
            if let Some(n) = blocked {
                if !self.bisect(n, depth + 1) {
                    self.els[i].as_mut().unwrap().frozen = true;
                    return false;
                }
                continue;
            }
            let even = sharing.iter().any(|&n| self.els[n].as_ref().unwrap().order == Order::Quadratic);
            if sharing.iter().any(|&n| self.els[n].as_ref().unwrap().is_fully_resolved()) {
                self.els[i].as_mut().unwrap().frozen = true;
                return false;
            }
            let m = self.snap(a, b, even);
            match self.children(&sharing, a, b, m) {
                Some(kids) => {
                    for &n in &sharing {
                        self.remove(n);
                    }
                    for k in kids {
                        self.add(k);
                    }
                    return true;
                }
                None => {
                    self.els[i].as_mut().unwrap().frozen = true;
                    return false;
                }
            }
        }
    }

    fn children(&self, sharing: &[usize], a: Cell, b: Cell, m: Cell) -> Option<Vec<Element>> {
        if m == a || m == b || !self.lat.contains(m) {
            return None;
        }
        let on_edge = {
            let d = isub(b, a);
            let p = isub(m, a);
            crate::geom::icross(d, p) == [0, 0, 0]
        };
        if !on_edge && !self.interior_edge(sharing, a, b) {
            return None;
        }
        let mut kids = Vec::new();
        for &n in sharing {
            let e = self.els[n].as_ref().unwrap();
            let v = e.vertices();
            if v.contains(&m) {
                return None;
            }
            for repl in [a, b] {
                let w: Vec<Cell> = v.iter().map(|&x| if x == repl { m } else { x }).collect();
                if crate::geom::simplex_det(self.dim, &w) <= 0 {
                    return None;
                }
                kids.push(Element::new(self.dim, e.order, &w).ok()?);
            }
        }
        Some(kids)
    }

    /// Every face of the edge star is shared by two of its elements.
    fn interior_edge(&self, sharing: &[usize], a: Cell, b: Cell) -> bool {
        let mut count: HashMap<Vec<Cell>, usize> = HashMap::new();
        for &n in sharing {
            let e = self.els[n].as_ref().unwrap();
            for &x in e.vertices() {
                if x == a || x == b {
                    continue;
                }
                let mut f = vec![a, b, x];
                f.sort();
                *count.entry(f).or_default() += 1;
            }
        }
        count.values().all(|&c| c == 2)
    }
}

/// Refinement indicator V^{1/d} |I2(F) - I2(1)| for every element, with F
/// built from the mean nodal translation of each representative.
pub fn refinement_indicator(mesh: &QCMesh, interp: &Interp, u: &[f64]) -> Vec<f64> {
    let topo = &mesh.topo;
    let d = mesh.dim;
    let m = topo.dofs_per_node();
    let nb = topo.n_nodes();
    let per = nb * m;
    let mean_u = |r: u32| -> [f64; 3] {
        let mut s = [0.0; 3];
        for j in 0..nb {
            for k in 0..d {
                s[k] += u[r as usize * per + j * m + k];
            }
        }
        s.map(|x| x / nb as f64)
    };
    let i2 = |f: &[[f64; 3]; 3]| {
        let tr: f64 = (0..d).map(|i| f[i][i]).sum();
        let mut tr2 = 0.0;
        for i in 0..d {
            for j in 0..d {
                tr2 += f[i][j] * f[j][i];
            }
        }
        0.5 * (tr * tr - tr2)
    };
    let i2_id = if d == 2 { 1.0 } else { 3.0 };
    mesh.elements
        .iter()
        .map(|e| {
            let g = e.shape_gradients_at_centroid(topo);
            let mut f = [[0.0; 3]; 3];
            for i in 0..d {
                f[i][i] = 1.0;
            }
            for (k, &c) in e.nodes.iter().enumerate() {
                let uc = mean_u(interp.index[&c]);
                for i in 0..d {
                    for j in 0..d {
                        f[i][j] += uc[i] * g[k][j];
                    }
                }
            }
            e.measure(topo).powf(1.0 / d as f64) * (i2(&f) - i2_id).abs()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn topo(n: &str) -> Arc<UnitCellTopology> {
        Arc::new(UnitCellTopology::builtin(n).unwrap())
    }

    fn box_case(n: &str, blocks: i64, h: i64, order: Order) -> (QCMesh, DiscreteLattice) {
        let t = topo(n);
        let hi = blocks * h;
        let lat = if t.dim == 2 {
            DiscreteLattice::boxed(t.clone(), [0, 0, 0], [hi, hi, 0]).unwrap()
        } else {
            DiscreteLattice::boxed(t.clone(), [0, 0, 0], [hi, hi, hi]).unwrap()
        };
        let mut m = QCMesh::structured(t, [0, 0, 0], [blocks, blocks, blocks], h, order, None).unwrap();
        m.attach(&lat).unwrap();
        (m, lat)
    }

    #[test]
    fn structured_meshes_validate() {
        for (n, o) in [("triangular", Order::Quadratic), ("square", Order::Linear), ("octet", Order::Quadratic)] {
            let (m, lat) = box_case(n, 2, 4, o);
            m.validate(&lat).unwrap();
            let expect = lat.n_cells();
            assert_eq!(m.interp().map.len(), expect);
        }
    }

    #[test]
    fn fully_resolve_gives_linear_region() {
        let (mut m, lat) = box_case("triangular", 2, 8, Order::Quadratic);
        m.fully_resolve(&lat, |c| c[0] <= 3 && c[1] <= 3).unwrap();
        m.validate(&lat).unwrap();
        assert!(m.in_linear_region([1, 1, 0]));
        assert!(!m.in_linear_region([12, 12, 0]));
        let (mut m3, lat3) = box_case("octet", 2, 4, Order::Quadratic);
        m3.fully_resolve(&lat3, |c| c == [1, 1, 1]).unwrap();
        m3.validate(&lat3).unwrap();
        assert!(m3.in_linear_region([1, 1, 1]));
    }

    #[test]
    fn refinement_increases_reps_and_stays_valid() {
        let (mut m, lat) = box_case("square", 2, 8, Order::Quadratic);
        let before = m.n_reps();
        let r = m.refine(&lat, &[0, 1, 2]).unwrap();
        assert!(r.bisected > 0);
        m.validate(&lat).unwrap();
        assert!(m.n_reps() > before);
    }

    #[test]
    fn remove_cell_rules() {
        let (mut m, mut lat) = box_case("triangular", 2, 8, Order::Quadratic);
        assert!(matches!(m.remove_unit_cell(&mut lat, [8, 8, 0]), Err(QcError::InQuadraticRegion(_))));
        m.fully_resolve(&lat, |c| c[0] <= 5 && c[1] <= 5).unwrap();
        let deg = lat.cell_degree([3, 2, 0]);
        m.remove_unit_cell(&mut lat, [2, 2, 0]).unwrap();
        assert_eq!(lat.cell_degree([3, 2, 0]), deg - 1);
        m.validate(&lat).unwrap();
        assert!(matches!(m.remove_unit_cell(&mut lat, [2, 2, 0]), Err(QcError::NotInDomain(_))));
    }

    #[test]
    fn hexagon_and_delaunay() {
        let t = topo("hexagonal");
        let r = 8;
        let lat = DiscreteLattice::from_predicate(t.clone(), [-r, -r, 0], [r, r, 0], |c, _| (c[0] + c[1]).abs() <= r).unwrap();
        let mut m = QCMesh::kuhn_hexagon(t.clone(), r, 4, Order::Quadratic).unwrap();
        m.attach(&lat).unwrap();
        m.validate(&lat).unwrap();
        assert!(m.isolated().is_empty());
        let pts: Vec<Cell> = lat.cells_sorted().into_iter().filter(|c| c[0] % 4 == 0 && c[1] % 4 == 0 && (c[0] + c[1]).abs() <= r).collect();
        let d = QCMesh::delaunay(t, &pts, Order::Quadratic).unwrap();
        assert!(d.elements.len() >= 2);
    }

    #[test]
    fn extrusion_is_conforming_and_minimal() {
        let t2 = topo("triangular");
        let t3 = topo("octet");
        let base = QCMesh::structured(t2, [0, 0, 0], [2, 2, 1], 2, Order::Quadratic, Some(KuhnDiagonal::Main)).unwrap();
        let mut m = QCMesh::extrude(t3.clone(), &base, &[0, 2, 4]).unwrap();
        let lat = DiscreteLattice::boxed(t3, [0, 0, 0], [4, 4, 4]).unwrap();
        m.attach(&lat).unwrap();
        m.validate(&lat).unwrap();
        assert!(m.elements.iter().all(|e| e.is_fully_resolved()));
    }

    #[test]
    fn atomistic_mesh_represents_every_cell() {
        let t = topo("hexagonal");
        let lat = DiscreteLattice::from_predicate(t, [-4, -4, 0], [4, 4, 0], |c, _| (c[0] + c[1]).abs() <= 4).unwrap();
        let m = QCMesh::atomistic(&lat).unwrap();
        assert_eq!(m.n_reps(), lat.n_cells());
        m.validate(&lat).unwrap();
    }

    #[test]
    fn indicator_vanishes_for_rigid_translation() {
        let (m, _) = box_case("triangular", 2, 4, Order::Quadratic);
        let ip = m.interp();
        let u: Vec<f64> = (0..ip.n_reps()).flat_map(|_| [0.3, -0.1, 0.0]).collect();
        assert!(refinement_indicator(&m, &ip, &u).iter().all(|x| x.abs() < 1e-12));
    }
}
