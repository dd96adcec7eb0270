//! Sampling unit cells and their weights.
//!
//! In the optimal scheme every mesh entity (vertex, edge, face, element
//! interior) contributes one sampling unit cell whose weight is the number
//! of lattice cells strictly inside the entity, so the weights sum to the
//! number of unit cells.

use crate::element::{edges, Order, FACES_3D};
use crate::error::{QcError, Result};
use crate::geom::{isub, ICell};
use crate::lattice::{Cell, DiscreteLattice};
use crate::mesh::QCMesh;
use crate::weights;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::io::Write;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Vertex,
    Edge,
    Face,
    Interior,
}

impl Category {
    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Vertex => "vertex",
            Category::Edge => "edge",
            Category::Face => "face",
            Category::Interior => "interior",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    /// Weighted sampling with one point per mesh entity.
    #[default]
    Optimal,
    /// Every unit cell is a sampling point with weight 1.
    Exact,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplingPoint {
    /// Unit cell whose beams are evaluated.
    pub cell: Cell,
    pub weight: u64,
    pub category: Category,
    /// Owning element (first element found for shared entities).
    pub element: Option<usize>,
}

#[derive(Clone, Debug, Default)]
pub struct SamplingScheme {
    pub mode: SamplingMode,
    pub points: Vec<SamplingPoint>,
}

impl SamplingScheme {
    pub fn total_weight(&self) -> u64 {
        self.points.iter().map(|p| p.weight).sum()
    }

    pub fn count(&self, c: Category) -> usize {
        self.points.iter().filter(|p| p.category == c).count()
    }

    /// CSV with one row per sampling point: element, category, coordinate, weight.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "element,category,c1,c2,c3,weight")?;
        for p in &self.points {
            let e = p.element.map(|e| e.to_string()).unwrap_or_else(|| "-1".into());
            writeln!(w, "{},{},{},{},{},{}", e, p.category.as_str(), p.cell[0], p.cell[1], p.cell[2], p.weight)?;
        }
        Ok(())
    }
}

/// Nearest candidate to the rational point `num / den` in the physical metric,
/// ties broken lexicographically.
fn nearest(mesh: &QCMesh, cands: impl IntoIterator<Item = ICell>, num: ICell, den: i64) -> Option<ICell> {
    cands
        .into_iter()
        .map(|c| {
            let d = mesh.topo.cell_vec(isub([c[0] * den, c[1] * den, c[2] * den], num));
            let l = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
            (((l * 1e6).round() as i64), c)
        })
        .min()
        .map(|x| x.1)
}

fn sum_cells(v: &[Cell]) -> ICell {
    v.iter().fold([0; 3], |a, b| [a[0] + b[0], a[1] + b[1], a[2] + b[2]])
}

/// The 3 + 3 + 1 (2D) or 4 + 6 + 4 + 1 (3D) sampling cells of one element
/// with their raw weights, before sharing between elements.
pub fn place_sampling_ucs(mesh: &QCMesh, elem: usize) -> Result<Vec<SamplingPoint>> {
    let e = mesh.elements.get(elem).ok_or_else(|| QcError::InvalidInput(format!("no element {elem}")))?;
    let d = mesh.dim;
    let v = e.vertices();
    let mut out: Vec<SamplingPoint> = v
        .iter()
        .map(|&c| SamplingPoint { cell: c, weight: 1, category: Category::Vertex, element: Some(elem) })
        .collect();
    for &(i, j) in edges(d) {
        let w = weights::edge_weight(v[i], v[j])?;
        let pts = weights::edge_points(v[i], v[j]);
        let site = nearest(mesh, pts, sum_cells(&[v[i], v[j]]), 2).unwrap_or(v[i]);
        out.push(SamplingPoint { cell: site, weight: w, category: Category::Edge, element: Some(elem) });
    }
    if d == 3 {
        for f in FACES_3D {
            let (a, b, c) = (v[f[0]], v[f[1]], v[f[2]]);
            let w = weights::face_weight(a, b, c)?;
            let pts = weights::face_points(a, b, c)?;
            let site = nearest(mesh, pts, sum_cells(&[a, b, c]), 3).unwrap_or(a);
            out.push(SamplingPoint { cell: site, weight: w, category: Category::Face, element: Some(elem) });
        }
    }
    let w = weights::interior_weight(d, v)?;
    let pts = weights::interior_points(d, v);
    let site = nearest(mesh, pts, sum_cells(v), (d + 1) as i64).unwrap_or(v[0]);
    out.push(SamplingPoint { cell: site, weight: w, category: Category::Interior, element: Some(elem) });
    Ok(out)
}

/// Build the sampling scheme for a mesh. Shared vertices, edges and faces
/// are sampled once; lattice sites on an entity that are vertices of other
/// elements (mixed-order interfaces) are not counted twice.
pub fn build_scheme(mesh: &QCMesh, lat: &DiscreteLattice, mode: SamplingMode) -> Result<SamplingScheme> {
    if mode == SamplingMode::Exact {
        let reps: HashSet<Cell> = mesh.reps().into_iter().collect();
        let points = lat
            .cells_sorted()
            .into_iter()
            .map(|c| SamplingPoint {
                cell: c,
                weight: 1,
                category: if reps.contains(&c) { Category::Vertex } else { Category::Interior },
                element: None,
            })
            .collect();
        return Ok(SamplingScheme { mode, points });
    }
    let d = mesh.dim;
    let mut verts: BTreeMap<Cell, Option<usize>> = BTreeMap::new();
    for &c in mesh.isolated() {
        verts.insert(c, None);
    }
    for (i, e) in mesh.elements.iter().enumerate() {
        for &c in e.vertices() {
            verts.entry(c).or_insert(Some(i));
        }
    }
    let vset: HashSet<Cell> = verts.keys().copied().collect();
    let mut points: Vec<SamplingPoint> = verts
        .iter()
        .map(|(&c, &e)| SamplingPoint { cell: c, weight: 1, category: Category::Vertex, element: e })
        .collect();
    let mut seen_edges = HashSet::new();
    let mut seen_faces = HashSet::new();
    for (i, e) in mesh.elements.iter().enumerate() {
        let v = e.vertices();
        for &(a, b) in edges(d) {
            let key = if v[a] < v[b] { (v[a], v[b]) } else { (v[b], v[a]) };
            if !seen_edges.insert(key) {
                continue;
            }
            let w = weights::edge_weight(v[a], v[b])?;
            if w == 0 {
                continue;
            }
            let pts: Vec<Cell> = weights::edge_points(v[a], v[b]).into_iter().filter(|p| !vset.contains(p)).collect();
            let w = w - (w as usize - pts.len()) as u64;
            let preferred = if e.order == Order::Quadratic { Some(e.nodes[v.len() + edge_pos(d, a, b)]) } else { None };
            let site = match preferred {
                Some(m) if pts.contains(&m) => Some(m),
                _ => nearest(mesh, pts.iter().copied(), sum_cells(&[v[a], v[b]]), 2),
            };
            if let Some(s) = site {
                points.push(SamplingPoint { cell: s, weight: w, category: Category::Edge, element: Some(i) });
            }
        }
        if d == 3 {
            for f in FACES_3D {
                let mut key = [v[f[0]], v[f[1]], v[f[2]]];
                key.sort();
                if !seen_faces.insert(key) {
                    continue;
                }
                let w = weights::face_weight(key[0], key[1], key[2])?;
                if w == 0 {
                    continue;
                }
                let pts: Vec<Cell> =
                    weights::face_points(key[0], key[1], key[2])?.into_iter().filter(|p| !vset.contains(p)).collect();
                let w = w - (w as usize - pts.len()) as u64;
                if let Some(s) = nearest(mesh, pts, sum_cells(&key), 3) {
                    points.push(SamplingPoint { cell: s, weight: w, category: Category::Face, element: Some(i) });
                }
            }
        }
        let w = weights::interior_weight(d, v)?;
        if w > 0 {
            let pts = weights::interior_points(d, v);
            debug_assert_eq!(pts.len() as u64, w);
            let s = nearest(mesh, pts, sum_cells(v), (d + 1) as i64).unwrap();
            points.push(SamplingPoint { cell: s, weight: w, category: Category::Interior, element: Some(i) });
        }
    }
    Ok(SamplingScheme { mode, points })
}

fn edge_pos(d: usize, a: usize, b: usize) -> usize {
    edges(d).iter().position(|&e| e == (a, b)).unwrap()
}

/// Brute-force count of lattice cells covered by the mesh plus isolated
/// representatives; equals the total sampling weight for a valid mesh.
pub fn covered_cells(mesh: &QCMesh) -> usize {
    let mut s: HashSet<Cell> = mesh.isolated().iter().copied().collect();
    for e in &mesh.elements {
        s.extend(e.closure_points());
    }
    s.len()
}
