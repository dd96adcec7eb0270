//! Corotational Euler–Bernoulli / Timoshenko beam elements.
//!
//! Energies are generic over [`Scalar`]; gradients and Hessians come from
//! evaluating the same code with [`Jet2`]. 2D beams carry (u, v, θ) per
//! node, 3D beams carry a translation and a rotation vector per node.

use crate::error::{QcError, Result};
use crate::geom::{self, Vec3};
use crate::lattice::UnitCellTopology;
use crate::scalar::{Jet1, Jet2, Scalar};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Material {
    pub young: f64,
    pub poisson: f64,
    /// Tensile failure stress of the parent material.
    pub strength: f64,
    /// Shear correction factor (used by Timoshenko beams).
    #[serde(default = "default_kappa")]
    pub shear_factor: f64,
}

fn default_kappa() -> f64 {
    1.2
}

impl Default for Material {
    fn default() -> Self {
        Material { young: 430.0, poisson: 0.3, strength: 11.0, shear_factor: 1.2 }
    }
}

impl Material {
    pub fn shear_modulus(&self) -> f64 {
        self.young / (2.0 * (1.0 + self.poisson))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ShearModel {
    #[default]
    EulerBernoulli,
    Timoshenko,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Section {
    /// In-plane thickness `t`, unit out-of-plane width.
    Rect { thickness: f64 },
    /// Solid circular strut.
    Circle { diameter: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BeamProperties {
    pub young: f64,
    pub shear: f64,
    pub area: f64,
    pub inertia: f64,
    pub polar: f64,
    /// Distance from the neutral axis to the outer fibre.
    pub fiber: f64,
    pub kappa: f64,
    pub model: ShearModel,
}

impl BeamProperties {
    pub fn new(mat: &Material, sec: Section, model: ShearModel) -> Result<Self> {
        if !(mat.young > 0.0) || !(mat.poisson > -1.0 && mat.poisson < 0.5) {
            return Err(QcError::InvalidInput("invalid material constants".into()));
        }
        let (area, inertia, polar, fiber) = match sec {
            Section::Rect { thickness: t } if t > 0.0 => (t, t.powi(3) / 12.0, t.powi(3) / 3.0, t / 2.0),
            Section::Circle { diameter: d } if d > 0.0 => {
                let i = std::f64::consts::PI * d.powi(4) / 64.0;
                (std::f64::consts::PI * d * d / 4.0, i, 2.0 * i, d / 2.0)
            }
            _ => return Err(QcError::InvalidInput("section size must be positive".into())),
        };
        Ok(BeamProperties {
            young: mat.young,
            shear: mat.shear_modulus(),
            area,
            inertia,
            polar,
            fiber,
            kappa: mat.shear_factor,
            model,
        })
    }

    /// 2x2 end-rotation bending stiffness for a beam of length `l`.
    pub fn bending_matrix(&self, l: f64) -> [[f64; 2]; 2] {
        let ei = self.young * self.inertia;
        let phi = match self.model {
            ShearModel::EulerBernoulli => 0.0,
            ShearModel::Timoshenko => 12.0 * ei * self.kappa / (self.shear * self.area * l * l),
        };
        let s = ei / (l * (1.0 + phi));
        [[s * (4.0 + phi), s * (2.0 - phi)], [s * (2.0 - phi), s * (4.0 + phi)]]
    }
}

#[derive(Clone, Debug)]
pub struct Beam2 {
    pub d0: [f64; 2],
    pub l0: f64,
    pub ea: f64,
    pub kb: [[f64; 2]; 2],
}

#[derive(Clone, Debug)]
pub struct Beam3 {
    pub d0: Vec3,
    pub l0: f64,
    pub ea: f64,
    pub gj: f64,
    pub kb: [[f64; 2]; 2],
    /// Reference frame vectors e1 (axis), e2, e3.
    pub e: [Vec3; 3],
}

/// Per-node local rotations and chord stretch of a deformed beam.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BeamStrains {
    pub stretch: f64,
    /// Local rotations at end a / end b: [torsion, bend about e2, bend about e3].
    pub rot_a: Vec3,
    pub rot_b: Vec3,
}

#[inline]
fn quad2<T: Scalar>(k: &[[f64; 2]; 2], a: T, b: T) -> T {
    a * a * T::cst(0.5 * k[0][0]) + a * b * T::cst(k[0][1]) + b * b * T::cst(0.5 * k[1][1])
}

impl Beam2 {
    pub fn new(d0: [f64; 2], props: &BeamProperties) -> Self {
        let l0 = (d0[0] * d0[0] + d0[1] * d0[1]).sqrt();
        Beam2 { d0, l0, ea: props.young * props.area / l0, kb: props.bending_matrix(l0) }
    }

    /// Chord stretch, and end rotations relative to the chord.
    pub fn strains<T: Scalar>(&self, q: &[T; 6]) -> (T, T, T) {
        let dux = q[3] - q[0];
        let duy = q[4] - q[1];
        let dx = dux + T::cst(self.d0[0]);
        let dy = duy + T::cst(self.d0[1]);
        let l = (dx * dx + dy * dy).sqrt();
        // l - l0 written without cancellation
        let num = (dux * T::cst(2.0 * self.d0[0]) + dux * dux) + (duy * T::cst(2.0 * self.d0[1]) + duy * duy);
        let ubar = num / (l + T::cst(self.l0));
        // d0 x d and d0 . d, with the d0 x d0 and |d0|^2 parts taken exactly
        let cr = duy * T::cst(self.d0[0]) - dux * T::cst(self.d0[1]);
        let dt = dux * T::cst(self.d0[0]) + duy * T::cst(self.d0[1]) + T::cst(self.l0 * self.l0);
        let beta = cr.atan2(dt);
        (ubar, q[2] - beta, q[5] - beta)
    }

    pub fn energy<T: Scalar>(&self, q: &[T; 6]) -> T {
        let (u, ta, tb) = self.strains(q);
        u * u * T::cst(0.5 * self.ea) + quad2(&self.kb, ta, tb)
    }

    pub fn eval(&self, q: &[f64; 6]) -> (f64, [f64; 6], [[f64; 6]; 6]) {
        let j = self.energy(&Jet2::<6>::seed(q));
        (j.v, j.g, j.hessian())
    }

    pub fn eval_grad(&self, q: &[f64; 6]) -> (f64, [f64; 6]) {
        let j = self.energy(&Jet1::<6>::seed(q));
        (j.v, j.g)
    }

    pub fn beam_strains(&self, q: &[f64; 6]) -> BeamStrains {
        let (u, a, b) = self.strains(q);
        BeamStrains { stretch: u, rot_a: [0.0, 0.0, a], rot_b: [0.0, 0.0, b] }
    }
}

type M3<T> = [[T; 3]; 3];

/// Rotation matrix exp([θ]×), with a series branch near zero so that jets
/// stay finite at the reference state.
pub fn expmap<T: Scalar>(t: &[T; 3]) -> M3<T> {
    let mut r = expmap_minus_identity(t);
    for (i, row) in r.iter_mut().enumerate() {
        row[i] += T::cst(1.0);
    }
    r
}

/// exp([θ]×) − I, accurate for small rotations.
fn expmap_minus_identity<T: Scalar>(t: &[T; 3]) -> M3<T> {
    let s = t[0] * t[0] + t[1] * t[1] + t[2] * t[2];
    let (a, b) = if s.re() < 1e-8 {
        let s2 = s * s;
        (
            T::cst(1.0) - s * T::cst(1.0 / 6.0) + s2 * T::cst(1.0 / 120.0) - s2 * s * T::cst(1.0 / 5040.0),
            T::cst(0.5) - s * T::cst(1.0 / 24.0) + s2 * T::cst(1.0 / 720.0) - s2 * s * T::cst(1.0 / 40320.0),
        )
    } else {
        let n = s.sqrt();
        (n.sin() / n, (T::cst(1.0) - n.cos()) / s)
    };
    let k = [[T::cst(0.0), -t[2], t[1]], [t[2], T::cst(0.0), -t[0]], [-t[1], t[0], T::cst(0.0)]];
    let mut r = [[T::cst(0.0); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            // K^2 = t t^T - s I
            let k2 = t[i] * t[j] - if i == j { s } else { T::cst(0.0) };
            r[i][j] = k[i][j] * a + k2 * b;
        }
    }
    r
}

/// Rotation vector of an orthogonal matrix (angle below π).
pub fn logmap<T: Scalar>(r: &M3<T>) -> [T; 3] {
    let mut d = *r;
    for (i, row) in d.iter_mut().enumerate() {
        row[i] -= T::cst(1.0);
    }
    logmap_of_increment(&d)
}

/// Rotation vector of I + r for an orthogonal I + r.
fn logmap_of_increment<T: Scalar>(r: &M3<T>) -> [T; 3] {
    let w = [
        (r[2][1] - r[1][2]) * T::cst(0.5),
        (r[0][2] - r[2][0]) * T::cst(0.5),
        (r[1][0] - r[0][1]) * T::cst(0.5),
    ];
    let c = (r[0][0] + r[1][1] + r[2][2]) * T::cst(0.5) + T::cst(1.0);
    let s = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
    let f = if s.re() < 1e-8 && c.re() > 0.0 {
        // asin(x)/x as a series in x^2
        let s2 = s * s;
        T::cst(1.0) + s * T::cst(1.0 / 6.0) + s2 * T::cst(3.0 / 40.0) + s2 * s * T::cst(5.0 / 112.0)
            + s2 * s2 * T::cst(35.0 / 1152.0)
    } else {
        let n = s.sqrt();
        n.atan2(c) / n
    };
    [w[0] * f, w[1] * f, w[2] * f]
}

#[inline]
fn mv<T: Scalar>(m: &M3<T>, v: Vec3) -> [T; 3] {
    let mut o = [T::cst(0.0); 3];
    for i in 0..3 {
        o[i] = m[i][0] * T::cst(v[0]) + m[i][1] * T::cst(v[1]) + m[i][2] * T::cst(v[2]);
    }
    o
}

#[inline]
fn tcross<T: Scalar>(a: &[T; 3], b: &[T; 3]) -> [T; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[inline]
fn tdot<T: Scalar>(a: &[T; 3], b: &[T; 3]) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

impl Beam3 {
    pub fn new(d0: Vec3, props: &BeamProperties) -> Self {
        let l0 = geom::norm(d0);
        let e1 = geom::scale(d0, 1.0 / l0);
        let helper = if e1[2].abs() < 0.9 { [0.0, 0.0, 1.0] } else { [1.0, 0.0, 0.0] };
        let p = geom::sub(helper, geom::scale(e1, geom::dot(helper, e1)));
        let e2 = geom::scale(p, 1.0 / geom::norm(p));
        let e3 = geom::cross(e1, e2);
        Beam3 {
            d0,
            l0,
            ea: props.young * props.area / l0,
            gj: props.shear * props.polar / l0,
            kb: props.bending_matrix(l0),
            e: [e1, e2, e3],
        }
    }

    pub fn strains<T: Scalar>(&self, q: &[T; 12]) -> (T, [T; 3], [T; 3]) {
        let mut du = [T::cst(0.0); 3];
        let mut d = [T::cst(0.0); 3];
        for k in 0..3 {
            du[k] = q[6 + k] - q[k];
            d[k] = du[k] + T::cst(self.d0[k]);
        }
        let l = tdot(&d, &d).sqrt();
        let mut num = T::cst(0.0);
        for k in 0..3 {
            num += du[k] * T::cst(2.0 * self.d0[k]) + du[k] * du[k];
        }
        let ubar = num / (l + T::cst(self.l0));
        // Everything below is carried as a deviation from the reference
        // triad so that small rotations keep full relative precision.
        let il = l.recip();
        let e = self.e.map(|v| v.map(T::cst));
        let ub = ubar * il * T::cst(1.0 / self.l0);
        let d1: [T; 3] = [0, 1, 2].map(|k| du[k] * il - e[0][k] * ub * T::cst(self.l0));
        let aa = expmap_minus_identity(&[q[3], q[4], q[5]]);
        let ab = expmap_minus_identity(&[q[9], q[10], q[11]]);
        let ta: [[T; 3]; 3] = [mv(&aa, self.e[0]), mv(&aa, self.e[1]), mv(&aa, self.e[2])];
        let tb: [[T; 3]; 3] = [mv(&ab, self.e[0]), mv(&ab, self.e[1]), mv(&ab, self.e[2])];
        let dq: [T; 3] = [0, 1, 2].map(|k| (ta[1][k] + tb[1][k]) * T::cst(0.5));
        // c = (e1 + d1) x (e2 + dq) = e3 + dc
        let x1 = tcross(&d1, &e[1]);
        let x2 = tcross(&e[0], &dq);
        let x3 = tcross(&d1, &dq);
        let dc: [T; 3] = [0, 1, 2].map(|k| x1[k] + x2[k] + x3[k]);
        let n2m1 = tdot(&e[2], &dc) * T::cst(2.0) + tdot(&dc, &dc);
        let nc = (n2m1 + T::cst(1.0)).sqrt();
        let inv_m1 = -n2m1 / (nc * (nc + T::cst(1.0)));
        let inc = nc.recip();
        let d3: [T; 3] = [0, 1, 2].map(|k| dc[k] * inc + e[2][k] * inv_m1);
        // r2 = r3 x r1 = e2 + e3 x d1 + d3 x e1 + d3 x d1
        let y1 = tcross(&e[2], &d1);
        let y2 = tcross(&d3, &e[0]);
        let y3 = tcross(&d3, &d1);
        let d2: [T; 3] = [0, 1, 2].map(|k| y1[k] + y2[k] + y3[k]);
        let dr = [d1, d2, d3];
        // (rr^T (I + A) E) - I, entry (i, j) = e_i.A e_j + d_i.e_j + d_i.A e_j
        let local = |t: &[[T; 3]; 3]| {
            let mut m = [[T::cst(0.0); 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    m[i][j] = tdot(&e[i], &t[j]) + tdot(&dr[i], &e[j]) + tdot(&dr[i], &t[j]);
                }
            }
            logmap_of_increment(&m)
        };
        (ubar, local(&ta), local(&tb))
    }

    pub fn energy<T: Scalar>(&self, q: &[T; 12]) -> T {
        let (u, a, b) = self.strains(q);
        let tw = b[0] - a[0];
        u * u * T::cst(0.5 * self.ea)
            + tw * tw * T::cst(0.5 * self.gj)
            + quad2(&self.kb, a[1], b[1])
            + quad2(&self.kb, a[2], b[2])
    }

    pub fn eval(&self, q: &[f64; 12]) -> (f64, [f64; 12], [[f64; 12]; 12]) {
        let j = self.energy(&Jet2::<12>::seed(q));
        (j.v, j.g, j.hessian())
    }

    pub fn eval_grad(&self, q: &[f64; 12]) -> (f64, [f64; 12]) {
        let j = self.energy(&Jet1::<12>::seed(q));
        (j.v, j.g)
    }

    pub fn beam_strains(&self, q: &[f64; 12]) -> BeamStrains {
        let (u, a, b) = self.strains(q);
        BeamStrains { stretch: u, rot_a: a, rot_b: b }
    }
}

#[derive(Clone, Debug)]
pub enum Beam {
    D2(Beam2),
    D3(Beam3),
}

/// Stress measures of one beam.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct BeamStress {
    pub axial: f64,
    pub bending_a: f64,
    pub bending_b: f64,
    /// max(|σ_a + σ_b| at either end)
    pub total: f64,
}

impl Beam {
    pub fn new(dim: usize, d0: Vec3, props: &BeamProperties) -> Self {
        if dim == 2 {
            Beam::D2(Beam2::new([d0[0], d0[1]], props))
        } else {
            Beam::D3(Beam3::new(d0, props))
        }
    }

    pub fn ndof(&self) -> usize {
        match self {
            Beam::D2(_) => 6,
            Beam::D3(_) => 12,
        }
    }

    pub fn rest_length(&self) -> f64 {
        match self {
            Beam::D2(b) => b.l0,
            Beam::D3(b) => b.l0,
        }
    }

    pub fn energy_f64(&self, q: &[f64]) -> f64 {
        match self {
            Beam::D2(b) => b.energy(&<[f64; 6]>::try_from(q).unwrap()),
            Beam::D3(b) => b.energy(&<[f64; 12]>::try_from(q).unwrap()),
        }
    }

    /// Energy, gradient and row-major Hessian.
    pub fn eval(&self, q: &[f64], g: &mut [f64], h: &mut [f64]) -> f64 {
        match self {
            Beam::D2(b) => {
                let (w, gg, hh) = b.eval(&<[f64; 6]>::try_from(q).unwrap());
                g.copy_from_slice(&gg);
                for i in 0..6 {
                    h[i * 6..i * 6 + 6].copy_from_slice(&hh[i]);
                }
                w
            }
            Beam::D3(b) => {
                let (w, gg, hh) = b.eval(&<[f64; 12]>::try_from(q).unwrap());
                g.copy_from_slice(&gg);
                for i in 0..12 {
                    h[i * 12..i * 12 + 12].copy_from_slice(&hh[i]);
                }
                w
            }
        }
    }

    /// Energy and gradient only.
    pub fn eval_grad(&self, q: &[f64], g: &mut [f64]) -> f64 {
        match self {
            Beam::D2(b) => {
                let (w, gg) = b.eval_grad(&<[f64; 6]>::try_from(q).unwrap());
                g.copy_from_slice(&gg);
                w
            }
            Beam::D3(b) => {
                let (w, gg) = b.eval_grad(&<[f64; 12]>::try_from(q).unwrap());
                g.copy_from_slice(&gg);
                w
            }
        }
    }

    pub fn strains(&self, q: &[f64]) -> BeamStrains {
        match self {
            Beam::D2(b) => b.beam_strains(&<[f64; 6]>::try_from(q).unwrap()),
            Beam::D3(b) => b.beam_strains(&<[f64; 12]>::try_from(q).unwrap()),
        }
    }

    /// Axial plus outer-fibre bending stress at both ends.
    pub fn stress(&self, props: &BeamProperties, q: &[f64]) -> BeamStress {
        let s = self.strains(q);
        let (ea, kb, l0) = match self {
            Beam::D2(b) => (b.ea, b.kb, b.l0),
            Beam::D3(b) => (b.ea, b.kb, b.l0),
        };
        let _ = l0;
        let axial = ea * s.stretch / props.area;
        let moment = |axis: usize| {
            let (a, b) = (s.rot_a[axis], s.rot_b[axis]);
            (kb[0][0] * a + kb[0][1] * b, kb[1][0] * a + kb[1][1] * b)
        };
        let (ma, mb) = match self {
            Beam::D2(_) => {
                let (a, b) = moment(2);
                (a.abs(), b.abs())
            }
            Beam::D3(_) => {
                let (a2, b2) = moment(1);
                let (a3, b3) = moment(2);
                (a2.hypot(a3), b2.hypot(b3))
            }
        };
        let sb = |m: f64| m * props.fiber / props.inertia;
        let (ba, bb) = (sb(ma), sb(mb));
        let sl = (axial + ba).max(axial - ba);
        let sr = (axial + bb).max(axial - bb);
        BeamStress { axial, bending_a: ba, bending_b: bb, total: sl.abs().max(sr.abs()) }
    }
}

/// Reference beams for every forward beam of a topology.
pub fn topology_beams(topo: &UnitCellTopology, props: &BeamProperties) -> Vec<Beam> {
    topo.forward_beams()
        .iter()
        .map(|&(a, b, o)| {
            let d0 = geom::sub(topo.node_offset(b, o), topo.node_offset(a, [0; 3]));
            Beam::new(topo.dim, d0, props)
        })
        .collect()
}
