//! Unit-cell topologies and finite lattices built from them.

use crate::error::{QcError, Result};
use crate::geom::{self, Vec3};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::Arc;

/// Integer Bravais coordinate of a unit cell (third entry is 0 in 2D).
pub type Cell = [i64; 3];

const CATALOG: &[(&str, &str)] = &[
    ("square", include_str!("../catalog/square.toml")),
    ("triangular", include_str!("../catalog/triangular.toml")),
    ("hexagonal", include_str!("../catalog/hexagonal.toml")),
    ("star", include_str!("../catalog/star.toml")),
    ("octet", include_str!("../catalog/octet.toml")),
    ("tetrakaidecahedral", include_str!("../catalog/tetrakaidecahedral.toml")),
];

pub fn catalog_names() -> Vec<&'static str> {
    CATALOG.iter().map(|(n, _)| *n).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KuhnDiagonal {
    /// Split squares along (1, 1).
    #[default]
    Main,
    /// Split squares along (1, -1).
    Anti,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologyDoc {
    name: String,
    dim: usize,
    #[serde(default)]
    description: String,
    basis: Vec<Vec<f64>>,
    nodes: Vec<Vec<f64>>,
    #[serde(default)]
    kuhn_diagonal: KuhnDiagonal,
    #[serde(default)]
    internal: Vec<[usize; 2]>,
    #[serde(default)]
    neighbor: Vec<NeighborDoc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NeighborDoc {
    from: usize,
    to: usize,
    offset: Vec<i64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NeighborBeam {
    pub from: usize,
    pub to: usize,
    pub offset: Cell,
}

/// A beam as seen from one unit cell: end `a` is node `na` of cell `ca`,
/// end `b` is node `nb` of cell `cb` (cells relative to the owning cell).
#[derive(Clone, Debug, PartialEq)]
pub struct UcBeam {
    pub na: usize,
    pub ca: Cell,
    pub nb: usize,
    pub cb: Cell,
    /// 1 for internal beams, 1/2 for each image of a shared beam.
    pub weight: f64,
    /// Index into the forward beam list (internal beams first).
    pub id: usize,
}

#[derive(Clone, Debug)]
pub struct UnitCellTopology {
    pub name: String,
    pub description: String,
    pub dim: usize,
    /// Basis vectors as rows; unused rows/columns are zero in 2D.
    pub basis: [[f64; 3]; 3],
    /// Fractional node offsets.
    pub nodes: Vec<Vec3>,
    pub internal: Vec<(usize, usize)>,
    pub neighbor: Vec<NeighborBeam>,
    pub kuhn_diagonal: KuhnDiagonal,
    uc_beams: Vec<UcBeam>,
}

impl UnitCellTopology {
    pub fn builtin(name: &str) -> Result<Self> {
        let (_, doc) = CATALOG
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| QcError::UnknownTopology(name.to_string()))?;
        Self::from_toml(doc)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let doc: TopologyDoc = toml::from_str(text).map_err(|e| QcError::Topology(e.to_string()))?;
        let d = doc.dim;
        if d != 2 && d != 3 {
            return Err(QcError::Topology(format!("dimension must be 2 or 3, got {d}")));
        }
        let fix = |v: &[f64], what: &str| -> Result<Vec3> {
            if v.len() != d {
                return Err(QcError::Topology(format!("{what} must have {d} entries")));
            }
            let mut o = [0.0; 3];
            o[..d].copy_from_slice(v);
            Ok(o)
        };
        if doc.basis.len() != d {
            return Err(QcError::Topology(format!("basis must have {d} vectors")));
        }
        let mut basis = [[0.0; 3]; 3];
        for (i, b) in doc.basis.iter().enumerate() {
            basis[i] = fix(b, "basis vector")?;
        }
        if d == 2 {
            basis[2] = [0.0, 0.0, 1.0];
        }
        if geom::det3(basis).abs() < 1e-12 {
            return Err(QcError::Topology("basis vectors are linearly dependent".into()));
        }
        if doc.nodes.is_empty() {
            return Err(QcError::Topology("unit cell has no nodes".into()));
        }
        let nodes = doc.nodes.iter().map(|n| fix(n, "node")).collect::<Result<Vec<_>>>()?;
        let nn = nodes.len();
        let mut neighbor = Vec::new();
        for nb in &doc.neighbor {
            if nb.offset.len() != d {
                return Err(QcError::Topology(format!("offset must have {d} entries")));
            }
            let mut o = [0i64; 3];
            o[..d].copy_from_slice(&nb.offset);
            if o == [0; 3] {
                return Err(QcError::Topology("neighbor beam with zero offset".into()));
            }
            neighbor.push(NeighborBeam { from: nb.from, to: nb.to, offset: o });
        }
        let internal: Vec<_> = doc.internal.iter().map(|p| (p[0], p[1])).collect();
        let mut topo = UnitCellTopology {
            name: doc.name,
            description: doc.description,
            dim: d,
            basis,
            nodes,
            internal,
            neighbor,
            kuhn_diagonal: doc.kuhn_diagonal,
            uc_beams: Vec::new(),
        };
        // validation: indices, zero length, duplicates
        let mut seen = HashSet::new();
        for (a, b, o) in topo.forward_beams() {
            if a >= nn || b >= nn {
                return Err(QcError::Topology(format!("beam references node {} of {nn}", a.max(b))));
            }
            if geom::norm(geom::sub(topo.node_offset(b, o), topo.node_offset(a, [0; 3]))) < 1e-12 {
                return Err(QcError::Topology(format!("zero-length beam {a}-{b}")));
            }
            let key = std::cmp::min((a, b, o), (b, a, neg(o)));
            if !seen.insert(key) {
                return Err(QcError::Topology(format!("duplicate beam {a}-{b} offset {o:?}")));
            }
        }
        topo.uc_beams = topo.build_uc_beams();
        Ok(topo)
    }

    /// Rescale so that the basis is multiplied by `s`.
    pub fn scaled(mut self, s: f64) -> Self {
        for i in 0..self.dim {
            for k in 0..3 {
                self.basis[i][k] *= s;
            }
        }
        self
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Degrees of freedom per node: 3 in 2D (u, v, θ), 6 in 3D.
    pub fn dofs_per_node(&self) -> usize {
        if self.dim == 2 {
            3
        } else {
            6
        }
    }

    pub fn dofs_per_cell(&self) -> usize {
        self.n_nodes() * self.dofs_per_node()
    }

    /// (from, to, offset) for every forward beam, internal ones first.
    pub fn forward_beams(&self) -> Vec<(usize, usize, Cell)> {
        self.internal
            .iter()
            .map(|&(a, b)| (a, b, [0; 3]))
            .chain(self.neighbor.iter().map(|n| (n.from, n.to, n.offset)))
            .collect()
    }

    pub fn n_forward_beams(&self) -> usize {
        self.internal.len() + self.neighbor.len()
    }

    fn build_uc_beams(&self) -> Vec<UcBeam> {
        let mut v = Vec::new();
        for (k, &(a, b)) in self.internal.iter().enumerate() {
            v.push(UcBeam { na: a, ca: [0; 3], nb: b, cb: [0; 3], weight: 1.0, id: k });
        }
        let ni = self.internal.len();
        for (k, n) in self.neighbor.iter().enumerate() {
            v.push(UcBeam { na: n.from, ca: [0; 3], nb: n.to, cb: n.offset, weight: 0.5, id: ni + k });
            v.push(UcBeam { na: n.from, ca: neg(n.offset), nb: n.to, cb: [0; 3], weight: 0.5, id: ni + k });
        }
        v
    }

    /// Beam stencil of one unit cell (internal beams plus both images of
    /// every shared beam).
    pub fn uc_beams(&self) -> &[UcBeam] {
        &self.uc_beams
    }

    /// Stencil cells touched by a unit cell's beams (including the cell itself).
    pub fn stencil_offsets(&self) -> Vec<Cell> {
        let mut s: BTreeSet<Cell> = BTreeSet::new();
        s.insert([0; 3]);
        for b in &self.uc_beams {
            s.insert(b.ca);
            s.insert(b.cb);
        }
        s.into_iter().collect()
    }

    /// Physical offset of node `j` in the cell at Bravais offset `c`.
    pub fn node_offset(&self, j: usize, c: Cell) -> Vec3 {
        let f = self.nodes[j];
        let mut x = [0.0; 3];
        for i in 0..self.dim {
            let w = f[i] + c[i] as f64;
            for k in 0..3 {
                x[k] += w * self.basis[i][k];
            }
        }
        x
    }

    /// Physical vector of a Bravais (possibly fractional) coordinate.
    pub fn to_physical(&self, c: [f64; 3]) -> Vec3 {
        let mut x = [0.0; 3];
        for i in 0..self.dim {
            for k in 0..3 {
                x[k] += c[i] * self.basis[i][k];
            }
        }
        x
    }

    pub fn cell_vec(&self, c: Cell) -> Vec3 {
        self.to_physical([c[0] as f64, c[1] as f64, c[2] as f64])
    }

    /// Area (2D) or volume (3D) of the unit cell.
    pub fn cell_measure(&self) -> f64 {
        geom::det3(self.basis).abs()
    }

    /// Length of the first basis vector.
    pub fn basis_length(&self) -> f64 {
        geom::norm(self.basis[0])
    }

    pub fn beam_length(&self, b: &UcBeam) -> f64 {
        geom::norm(geom::sub(self.node_offset(b.nb, b.cb), self.node_offset(b.na, b.ca)))
    }

    /// Shortest beam in the unit cell.
    pub fn strut_length(&self) -> f64 {
        self.uc_beams.iter().map(|b| self.beam_length(b)).fold(f64::INFINITY, f64::min)
    }

    /// Mean fractional node position, a representative "centre" offset.
    pub fn node_centroid(&self) -> Vec3 {
        let mut c = [0.0; 3];
        for j in 0..self.n_nodes() {
            c = geom::add(c, self.node_offset(j, [0; 3]));
        }
        geom::scale(c, 1.0 / self.n_nodes() as f64)
    }
}

fn neg(o: Cell) -> Cell {
    [-o[0], -o[1], -o[2]]
}

/// A finite set of unit cells of one topology.
#[derive(Clone, Debug)]
pub struct DiscreteLattice {
    pub topo: Arc<UnitCellTopology>,
    /// Rigid shift applied to all cells.
    pub shift: Vec3,
    cells: HashSet<Cell>,
    removed: HashSet<(Cell, usize)>,
}

impl DiscreteLattice {
    pub fn from_cells(topo: Arc<UnitCellTopology>, cells: impl IntoIterator<Item = Cell>) -> Result<Self> {
        let cells: HashSet<Cell> = cells.into_iter().collect();
        if cells.is_empty() {
            return Err(QcError::EmptyDomain);
        }
        Ok(Self { topo, shift: [0.0; 3], cells, removed: HashSet::new() })
    }

    /// All cells with `lo <= c <= hi` (inclusive, per component) whose
    /// physical position satisfies `pred`.
    pub fn from_predicate(
        topo: Arc<UnitCellTopology>,
        lo: Cell,
        hi: Cell,
        pred: impl Fn(Cell, Vec3) -> bool,
    ) -> Result<Self> {
        let d = topo.dim;
        let hi3 = if d == 2 { 0 } else { hi[2] };
        let lo3 = if d == 2 { 0 } else { lo[2] };
        let mut cells = Vec::new();
        for k in lo3..=hi3 {
            for j in lo[1]..=hi[1] {
                for i in lo[0]..=hi[0] {
                    let c = [i, j, k];
                    if pred(c, topo.cell_vec(c)) {
                        cells.push(c);
                    }
                }
            }
        }
        Self::from_cells(topo, cells)
    }

    pub fn boxed(topo: Arc<UnitCellTopology>, lo: Cell, hi: Cell) -> Result<Self> {
        Self::from_predicate(topo, lo, hi, |_, _| true)
    }

    pub fn dim(&self) -> usize {
        self.topo.dim
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn contains(&self, c: Cell) -> bool {
        self.cells.contains(&c)
    }

    /// Cells in lexicographic order.
    pub fn cells_sorted(&self) -> Vec<Cell> {
        let mut v: Vec<_> = self.cells.iter().copied().collect();
        v.sort();
        v
    }

    pub fn cells(&self) -> impl Iterator<Item = &Cell> {
        self.cells.iter()
    }

    pub fn cell_position(&self, c: Cell) -> Vec3 {
        geom::add(self.topo.cell_vec(c), self.shift)
    }

    pub fn node_position(&self, c: Cell, j: usize) -> Vec3 {
        geom::add(self.topo.node_offset(j, c), self.shift)
    }

    pub fn remove_cell(&mut self, c: Cell) -> bool {
        self.cells.remove(&c)
    }

    /// Canonical identity of a stencil beam seen from cell `c`.
    pub fn beam_key(c: Cell, b: &UcBeam) -> (Cell, usize) {
        (geom::iadd(c, b.ca), b.id)
    }

    /// Mark a beam as removed (e.g. a crack face). The flag is shared by
    /// both unit cells that see the beam.
    pub fn remove_beam(&mut self, c: Cell, b: &UcBeam) {
        self.removed.insert(Self::beam_key(c, b));
    }

    pub fn removed_beams(&self) -> &HashSet<(Cell, usize)> {
        &self.removed
    }

    /// A stencil beam is present if both end cells exist and it was not removed.
    pub fn beam_active(&self, c: Cell, b: &UcBeam) -> bool {
        self.contains(geom::iadd(c, b.ca))
            && self.contains(geom::iadd(c, b.cb))
            && !self.removed.contains(&Self::beam_key(c, b))
    }

    /// Number of distinct physical beams.
    pub fn n_beams(&self) -> usize {
        let fwd = self.topo.forward_beams();
        let mut n = 0;
        for &c in &self.cells {
            for (k, &(_, _, o)) in fwd.iter().enumerate() {
                if self.contains(geom::iadd(c, o)) && !self.removed.contains(&(c, k)) {
                    n += 1;
                }
            }
        }
        n
    }

    /// Physical beams (each listed once) as (cell_a, node_a, cell_b, node_b, forward id).
    pub fn physical_beams(&self) -> Vec<(Cell, usize, Cell, usize, usize)> {
        let fwd = self.topo.forward_beams();
        let mut out = Vec::new();
        for c in self.cells_sorted() {
            for (k, &(a, b, o)) in fwd.iter().enumerate() {
                let cb = geom::iadd(c, o);
                if self.contains(cb) && !self.removed.contains(&(c, k)) {
                    out.push((c, a, cb, b, k));
                }
            }
        }
        out
    }

    /// Number of active beams attached to cell `c` (shared beams counted once).
    pub fn cell_degree(&self, c: Cell) -> usize {
        self.topo.uc_beams().iter().filter(|b| self.beam_active(c, b)).count()
    }

    /// Dense index of each cell in lexicographic order.
    pub fn index_map(&self) -> HashMap<Cell, usize> {
        self.cells_sorted().into_iter().enumerate().map(|(i, c)| (c, i)).collect()
    }
}
