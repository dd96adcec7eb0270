//! Exact lattice-point counting on simplices in Bravais coordinates.
//!
//! Edge and face weights count the unit cells strictly inside an edge or a
//! triangular face; the interior weight counts cells strictly inside a
//! triangle (2D) or tetrahedron (3D).

use crate::error::{QcError, Result};
use crate::geom::{ext_gcd, gcd, gcd3, iadd, icross, idot, isub, simplex_det, ICell};

/// Number of lattice points strictly between `a` and `b`.
pub fn edge_weight(a: ICell, b: ICell) -> Result<u64> {
    let g = gcd3(isub(b, a));
    if g == 0 {
        return Err(QcError::CoincidentPoints);
    }
    Ok((g - 1) as u64)
}

/// Lattice points strictly inside the segment, ordered from `a` to `b`.
pub fn edge_points(a: ICell, b: ICell) -> Vec<ICell> {
    let d = isub(b, a);
    let g = gcd3(d);
    if g <= 1 {
        return Vec::new();
    }
    let s = [d[0] / g, d[1] / g, d[2] / g];
    (1..g).map(|k| [a[0] + k * s[0], a[1] + k * s[1], a[2] + k * s[2]]).collect()
}

/// Primitive normal of the plane through three points.
pub fn primitive_normal(a: ICell, b: ICell, c: ICell) -> Result<ICell> {
    let n = icross(isub(b, a), isub(c, a));
    let g = gcd3(n);
    if g == 0 {
        return Err(QcError::DegenerateFace);
    }
    Ok([n[0] / g, n[1] / g, n[2] / g])
}

/// Integer basis (λ1, λ2) of the 2D sublattice {x ∈ Z³ : n·x = 0} for a
/// primitive normal `n`.
pub fn face_basis(n: ICell) -> (ICell, ICell) {
    // choose a component order so the first two normal entries are not both 0
    let perm: [usize; 3] = if n[0] != 0 || n[1] != 0 {
        [0, 1, 2]
    } else {
        [1, 2, 0]
    };
    let m = [n[perm[0]], n[perm[1]], n[perm[2]]];
    let g = gcd(m[0], m[1]);
    let l1 = [-m[1] / g, m[0] / g, 0];
    let (_, y1, y2) = ext_gcd(m[0], m[1]);
    let raw = [m[2] * y1, m[2] * y2, -g];
    let h = gcd3(raw);
    let l2 = [raw[0] / h, raw[1] / h, raw[2] / h];
    let mut a = [0; 3];
    let mut b = [0; 3];
    for k in 0..3 {
        a[perm[k]] = l1[k];
        b[perm[k]] = l2[k];
    }
    (a, b)
}

/// Coordinates of an in-plane vector `v` in the basis (l1, l2).
fn plane_coords(v: ICell, l1: ICell, l2: ICell) -> [i64; 2] {
    let m = icross(l1, l2);
    let mm = idot(m, m);
    let z1 = idot(icross(v, l2), m);
    let z2 = idot(icross(l1, v), m);
    debug_assert!(z1 % mm == 0 && z2 % mm == 0);
    [z1 / mm, z2 / mm]
}

/// Number of lattice points strictly inside the triangle (a, b, c) in Z³,
/// via the planar sublattice basis and Pick's theorem.
pub fn face_weight(a: ICell, b: ICell, c: ICell) -> Result<u64> {
    let n = primitive_normal(a, b, c)?;
    let (l1, l2) = face_basis(n);
    let zb = plane_coords(isub(b, a), l1, l2);
    let zc = plane_coords(isub(c, a), l1, l2);
    Ok(pick_interior([0, 0], zb, zc))
}

/// Pick's theorem for a lattice triangle in Z²: I = A - B/2 + 1.
fn pick_interior(p: [i64; 2], q: [i64; 2], r: [i64; 2]) -> u64 {
    let twice_area = ((q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])).abs();
    let bnd = gcd(q[0] - p[0], q[1] - p[1]) + gcd(r[0] - q[0], r[1] - q[1]) + gcd(p[0] - r[0], p[1] - r[1]);
    ((twice_area - bnd + 2) / 2) as u64
}

/// Lattice points strictly inside a triangular face in Z³.
pub fn face_points(a: ICell, b: ICell, c: ICell) -> Result<Vec<ICell>> {
    let n = primitive_normal(a, b, c)?;
    let (l1, l2) = face_basis(n);
    let z = [[0, 0], plane_coords(isub(b, a), l1, l2), plane_coords(isub(c, a), l1, l2)];
    let pts = triangle_points_2d(z);
    Ok(pts.into_iter().map(|p| iadd(a, [p[0] * l1[0] + p[1] * l2[0], p[0] * l1[1] + p[1] * l2[1], p[0] * l1[2] + p[1] * l2[2]])).collect())
}

fn orient2(a: [i64; 2], b: [i64; 2], c: [i64; 2]) -> i64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Strict interior points of a 2D lattice triangle.
fn triangle_points_2d(z: [[i64; 2]; 3]) -> Vec<[i64; 2]> {
    let s = orient2(z[0], z[1], z[2]).signum();
    let lo = [0, 1].map(|k| z.iter().map(|p| p[k]).min().unwrap());
    let hi = [0, 1].map(|k| z.iter().map(|p| p[k]).max().unwrap());
    let mut out = Vec::new();
    for x in lo[0]..=hi[0] {
        for y in lo[1]..=hi[1] {
            let p = [x, y];
            if s * orient2(z[0], z[1], p) > 0 && s * orient2(z[1], z[2], p) > 0 && s * orient2(z[2], z[0], p) > 0 {
                out.push(p);
            }
        }
    }
    out
}

/// Number of lattice points strictly inside a simplex (triangle in 2D,
/// tetrahedron in 3D).
pub fn interior_weight(dim: usize, v: &[ICell]) -> Result<u64> {
    if simplex_det(dim, v) == 0 {
        return Err(QcError::DegenerateFace);
    }
    if dim == 2 {
        let p = |i: usize| [v[i][0], v[i][1]];
        return Ok(pick_interior(p(0), p(1), p(2)));
    }
    let mut n = 0u64;
    scan_tet(v, |_| n += 1);
    Ok(n)
}

/// Strict interior lattice points of a simplex.
pub fn interior_points(dim: usize, v: &[ICell]) -> Vec<ICell> {
    if dim == 2 {
        let p = |i: usize| [v[i][0], v[i][1]];
        return triangle_points_2d([p(0), p(1), p(2)]).into_iter().map(|q| [q[0], q[1], 0]).collect();
    }
    let mut out = Vec::new();
    scan_tet(v, |c| out.push(c));
    out
}

fn floor_div(a: i64, b: i64) -> i64 {
    let q = a / b;
    if (a % b != 0) && ((a < 0) != (b < 0)) {
        q - 1
    } else {
        q
    }
}

fn ceil_div(a: i64, b: i64) -> i64 {
    -floor_div(-a, b)
}

/// Visit every point strictly inside the tetrahedron, column by column.
fn scan_tet(v: &[ICell], mut f: impl FnMut(ICell)) {
    // inward normals: n_f · x > c_f strictly
    let mut planes = Vec::with_capacity(4);
    for i in 0..4 {
        let o: Vec<ICell> = (0..4).filter(|&j| j != i).map(|j| v[j]).collect();
        let mut n = icross(isub(o[1], o[0]), isub(o[2], o[0]));
        if idot(n, isub(v[i], o[0])) < 0 {
            n = [-n[0], -n[1], -n[2]];
        }
        planes.push((n, idot(n, o[0])));
    }
    let lo = [0, 1, 2].map(|k| v.iter().map(|p| p[k]).min().unwrap());
    let hi = [0, 1, 2].map(|k| v.iter().map(|p| p[k]).max().unwrap());
    for x in lo[0]..=hi[0] {
        'col: for y in lo[1]..=hi[1] {
            let (mut zl, mut zh) = (lo[2], hi[2]);
            for &(n, c) in &planes {
                let r = c - n[0] * x - n[1] * y;
                if n[2] > 0 {
                    zl = zl.max(floor_div(r, n[2]) + 1);
                } else if n[2] < 0 {
                    zh = zh.min(ceil_div(r, n[2]) - 1);
                } else if r >= 0 {
                    continue 'col;
                }
            }
            for z in zl..=zh {
                f([x, y, z]);
            }
        }
    }
}

/// All lattice points in the closed simplex.
pub fn closed_points(dim: usize, v: &[ICell]) -> Vec<ICell> {
    let nv = dim + 1;
    let s = simplex_det(dim, v).signum();
    let lo = [0, 1, 2].map(|k| v[..nv].iter().map(|p| p[k]).min().unwrap());
    let hi = [0, 1, 2].map(|k| v[..nv].iter().map(|p| p[k]).max().unwrap());
    let mut out = Vec::new();
    let mut w = v[..nv].to_vec();
    for x in lo[0]..=hi[0] {
        for y in lo[1]..=hi[1] {
            for z in lo[2]..=hi[2] {
                let p = [x, y, z];
                let inside = (0..nv).all(|i| {
                    let keep = w[i];
                    w[i] = p;
                    let d = simplex_det(dim, &w);
                    w[i] = keep;
                    d * s >= 0
                });
                if inside {
                    out.push(p);
                }
            }
        }
    }
    out
}
