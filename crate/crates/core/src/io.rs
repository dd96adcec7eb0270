//! Legacy-VTK and CSV exports.
//!
//! Mesh files are `UNSTRUCTURED_GRID` ASCII with cell types 5 (triangle),
//! 22 (quadratic triangle), 10 (tetrahedron) and 24 (quadratic
//! tetrahedron). Quadratic nodes follow the vertices in edge order
//! (0-1, 1-2, 2-0[, 0-3, 1-3, 2-3]), which is VTK's own ordering. Points
//! are unit-cell origins shifted to the node centroid. Lattice files use
//! lines (type 3), one per physical beam.

use crate::assembly::{BeamRecord, Model};
use crate::element::Order;
use crate::error::Result;
use crate::lattice::Cell;
use crate::sampling::SamplingScheme;
use std::collections::BTreeMap;
use std::io::Write;

fn vtk_type(dim: usize, order: Order) -> u8 {
    match (dim, order) {
        (2, Order::Linear) => 5,
        (2, Order::Quadratic) => 22,
        (_, Order::Linear) => 10,
        (_, Order::Quadratic) => 24,
    }
}

fn header(w: &mut impl Write, title: &str) -> std::io::Result<()> {
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{title}")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")
}

/// Mean nodal translation of a unit cell.
fn cell_displacement(model: &Model, u: &[f64], c: Cell) -> Result<[f64; 3]> {
    let v = model.interpolate_cell(u, c)?;
    let (nb, m, d) = (model.lat.topo.n_nodes(), model.dofs_per_node(), model.dim());
    let mut s = [0.0; 3];
    for j in 0..nb {
        for k in 0..d {
            s[k] += v[j * m + k] / nb as f64;
        }
    }
    Ok(s)
}

/// Mesh with element order as cell data and, if given, the displacement of
/// every element node.
pub fn write_mesh_vtk(mut w: impl Write, model: &Model, u: Option<&[f64]>) -> Result<()> {
    let mesh = &model.mesh;
    let shift = model.lat.topo.node_centroid();
    let mut ids: BTreeMap<Cell, usize> = BTreeMap::new();
    for e in &mesh.elements {
        for &c in &e.nodes {
            let n = ids.len();
            ids.entry(c).or_insert(n);
        }
    }
    let mut pts = vec![[0i64; 3]; ids.len()];
    for (&c, &i) in &ids {
        pts[i] = c;
    }
    header(&mut w, "qclat mesh")?;
    writeln!(w, "POINTS {} double", pts.len())?;
    for &c in &pts {
        let x = model.lat.cell_position(c);
        writeln!(w, "{} {} {}", x[0] + shift[0], x[1] + shift[1], x[2] + shift[2])?;
    }
    let size: usize = mesh.elements.iter().map(|e| e.nodes.len() + 1).sum();
    writeln!(w, "CELLS {} {}", mesh.elements.len(), size)?;
    for e in &mesh.elements {
        write!(w, "{}", e.nodes.len())?;
        for c in &e.nodes {
            write!(w, " {}", ids[c])?;
        }
        writeln!(w)?;
    }
    writeln!(w, "CELL_TYPES {}", mesh.elements.len())?;
    for e in &mesh.elements {
        writeln!(w, "{}", vtk_type(mesh.dim, e.order))?;
    }
    writeln!(w, "CELL_DATA {}", mesh.elements.len())?;
    writeln!(w, "SCALARS order int 1\nLOOKUP_TABLE default")?;
    for e in &mesh.elements {
        writeln!(w, "{}", if e.order == Order::Linear { 1 } else { 2 })?;
    }
    if let Some(u) = u {
        writeln!(w, "POINT_DATA {}", pts.len())?;
        writeln!(w, "VECTORS displacement double")?;
        for &c in &pts {
            let d = cell_displacement(model, u, c)?;
            writeln!(w, "{:e} {:e} {:e}", d[0], d[1], d[2])?;
        }
    }
    Ok(())
}

/// Every physical beam as a line, with nodal displacements and beam stresses.
pub fn write_lattice_vtk(mut w: impl Write, model: &Model, u: &[f64], beams: &[BeamRecord]) -> Result<()> {
    let lat = &model.lat;
    let nb = lat.topo.n_nodes();
    let m = model.dofs_per_node();
    let cells = lat.cells_sorted();
    let index: BTreeMap<Cell, usize> = cells.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    header(&mut w, "qclat lattice")?;
    writeln!(w, "POINTS {} double", cells.len() * nb)?;
    for &c in &cells {
        for j in 0..nb {
            let x = lat.node_position(c, j);
            writeln!(w, "{} {} {}", x[0], x[1], x[2])?;
        }
    }
    writeln!(w, "CELLS {} {}", beams.len(), 3 * beams.len())?;
    for b in beams {
        writeln!(w, "2 {} {}", index[&b.cell_a] * nb + b.node_a, index[&b.cell_b] * nb + b.node_b)?;
    }
    writeln!(w, "CELL_TYPES {}", beams.len())?;
    for _ in beams {
        writeln!(w, "3")?;
    }
    writeln!(w, "CELL_DATA {}", beams.len())?;
    writeln!(w, "SCALARS sigma_t double 1\nLOOKUP_TABLE default")?;
    for b in beams {
        writeln!(w, "{:e}", b.stress.total)?;
    }
    writeln!(w, "SCALARS sigma_axial double 1\nLOOKUP_TABLE default")?;
    for b in beams {
        writeln!(w, "{:e}", b.stress.axial)?;
    }
    writeln!(w, "POINT_DATA {}", cells.len() * nb)?;
    writeln!(w, "VECTORS displacement double")?;
    for &c in &cells {
        let v = model.interpolate_cell(u, c)?;
        for j in 0..nb {
            let mut d = [0.0; 3];
            d[..model.dim()].copy_from_slice(&v[j * m..j * m + model.dim()]);
            writeln!(w, "{:e} {:e} {:e}", d[0], d[1], d[2])?;
        }
    }
    Ok(())
}

/// Per-sampling-point energy ω_s W_s.
pub fn write_point_energy_csv(mut w: impl Write, scheme: &SamplingScheme, per_point: &[f64]) -> std::io::Result<()> {
    writeln!(w, "element,category,c1,c2,c3,weight,energy")?;
    for (p, e) in scheme.points.iter().zip(per_point) {
        let el = p.element.map(|e| e.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{el},{},{},{},{},{},{:e}",
            p.category.as_str(),
            p.cell[0],
            p.cell[1],
            p.cell[2],
            p.weight,
            e
        )?;
    }
    Ok(())
}

/// Histogram of σ_t/σ_max; bins on [0, 1].
pub fn write_histogram_csv(mut w: impl Write, counts: &[usize]) -> std::io::Result<()> {
    writeln!(w, "lo,hi,count")?;
    let n = counts.len() as f64;
    for (i, c) in counts.iter().enumerate() {
        writeln!(w, "{},{},{c}", i as f64 / n, (i + 1) as f64 / n)?;
    }
    Ok(())
}

pub fn write_beams_csv(mut w: impl Write, beams: &[BeamRecord]) -> std::io::Result<()> {
    writeln!(w, "a1,a2,a3,node_a,b1,b2,b3,node_b,axial,bending_a,bending_b,sigma_t")?;
    for b in beams {
        let (a, c) = (b.cell_a, b.cell_b);
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{:e},{:e},{:e},{:e}",
            a[0], a[1], a[2], b.node_a, c[0], c[1], c[2], b.node_b, b.stress.axial, b.stress.bending_a, b.stress.bending_b,
            b.stress.total
        )?;
    }
    Ok(())
}
