//! Scalar abstraction used by the beam kernels.
//!
//! Beam energies are written once against [`Scalar`] and evaluated either in
//! plain floating point (`f32`/`f64`) or with [`Jet1`] (gradient only) or [`Jet2`], a forward-mode
//! second-order jet that carries the full gradient and Hessian with respect
//! to `N` seed variables.

use num_traits::Float;
use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

pub trait Scalar:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    fn cst(v: f64) -> Self;
    /// Value part, used for branch decisions.
    fn re(&self) -> f64;
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn atan2(self, x: Self) -> Self;
    fn recip(self) -> Self {
        Self::cst(1.0) / self
    }
    fn powi(self, n: i32) -> Self {
        let mut acc = Self::cst(1.0);
        for _ in 0..n.unsigned_abs() {
            acc *= self;
        }
        if n < 0 {
            acc.recip()
        } else {
            acc
        }
    }
}

macro_rules! float_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            #[inline]
            fn cst(v: f64) -> Self {
                v as $t
            }
            #[inline]
            fn re(&self) -> f64 {
                *self as f64
            }
            #[inline]
            fn sqrt(self) -> Self {
                Float::sqrt(self)
            }
            #[inline]
            fn sin(self) -> Self {
                Float::sin(self)
            }
            #[inline]
            fn cos(self) -> Self {
                Float::cos(self)
            }
            #[inline]
            fn atan2(self, x: Self) -> Self {
                Float::atan2(self, x)
            }
        }
    };
}

float_scalar!(f64);
float_scalar!(f32);

/// Second-order forward jet over `N` variables.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet2<const N: usize> {
    pub v: f64,
    pub g: [f64; N],
    /// Only the lower triangle (`j <= i`) is maintained; see [`Jet2::hessian`].
    pub h: [[f64; N]; N],
}

impl<const N: usize> Jet2<N> {
    pub fn constant(v: f64) -> Self {
        Self { v, g: [0.0; N], h: [[0.0; N]; N] }
    }

    /// Seed variable `i` with value `v`.
    pub fn var(v: f64, i: usize) -> Self {
        let mut j = Self::constant(v);
        j.g[i] = 1.0;
        j
    }

    pub fn seed(x: &[f64; N]) -> [Self; N] {
        let mut out = [Self::constant(0.0); N];
        for i in 0..N {
            out[i] = Self::var(x[i], i);
        }
        out
    }

    /// Full symmetric Hessian.
    pub fn hessian(&self) -> [[f64; N]; N] {
        let mut h = self.h;
        for i in 0..N {
            for j in 0..i {
                h[j][i] = h[i][j];
            }
        }
        h
    }

    /// Unary chain rule given f, f', f''.
    #[inline]
    fn chain(&self, f: f64, d1: f64, d2: f64) -> Self {
        let mut r = Self::constant(f);
        for i in 0..N {
            r.g[i] = d1 * self.g[i];
        }
        for i in 0..N {
            let gi = d2 * self.g[i];
            for j in 0..=i {
                r.h[i][j] = d1 * self.h[i][j] + gi * self.g[j];
            }
        }
        r
    }

    /// Binary chain rule given partials of f(a, b).
    #[inline]
    #[allow(clippy::too_many_arguments)]
    fn chain2(a: &Self, b: &Self, f: f64, fa: f64, fb: f64, faa: f64, fab: f64, fbb: f64) -> Self {
        let mut r = Self::constant(f);
        for i in 0..N {
            r.g[i] = fa * a.g[i] + fb * b.g[i];
        }
        for i in 0..N {
            for j in 0..=i {
                r.h[i][j] = fa * a.h[i][j]
                    + fb * b.h[i][j]
                    + faa * a.g[i] * a.g[j]
                    + fbb * b.g[i] * b.g[j]
                    + fab * (a.g[i] * b.g[j] + b.g[i] * a.g[j]);
            }
        }
        r
    }
}

impl<const N: usize> Add for Jet2<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, o: Self) -> Self {
        self += o;
        self
    }
}

impl<const N: usize> AddAssign for Jet2<N> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        self.v += o.v;
        for i in 0..N {
            self.g[i] += o.g[i];
            for j in 0..=i {
                self.h[i][j] += o.h[i][j];
            }
        }
    }
}

impl<const N: usize> Sub for Jet2<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, o: Self) -> Self {
        self -= o;
        self
    }
}

impl<const N: usize> SubAssign for Jet2<N> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        self.v -= o.v;
        for i in 0..N {
            self.g[i] -= o.g[i];
            for j in 0..=i {
                self.h[i][j] -= o.h[i][j];
            }
        }
    }
}

impl<const N: usize> Mul for Jet2<N> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let mut r = Self::constant(self.v * o.v);
        for i in 0..N {
            r.g[i] = self.g[i] * o.v + o.g[i] * self.v;
        }
        for i in 0..N {
            for j in 0..=i {
                r.h[i][j] = self.h[i][j] * o.v
                    + o.h[i][j] * self.v
                    + self.g[i] * o.g[j]
                    + o.g[i] * self.g[j];
            }
        }
        r
    }
}

impl<const N: usize> MulAssign for Jet2<N> {
    #[inline]
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}

impl<const N: usize> Div for Jet2<N> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        self * o.recip()
    }
}

impl<const N: usize> Neg for Jet2<N> {
    type Output = Self;
    #[inline]
    fn neg(mut self) -> Self {
        self.v = -self.v;
        for i in 0..N {
            self.g[i] = -self.g[i];
            for j in 0..=i {
                self.h[i][j] = -self.h[i][j];
            }
        }
        self
    }
}

impl<const N: usize> Add<f64> for Jet2<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, c: f64) -> Self {
        self.v += c;
        self
    }
}

impl<const N: usize> Mul<f64> for Jet2<N> {
    type Output = Self;
    #[inline]
    fn mul(mut self, c: f64) -> Self {
        self.v *= c;
        for i in 0..N {
            self.g[i] *= c;
            for j in 0..=i {
                self.h[i][j] *= c;
            }
        }
        self
    }
}

impl<const N: usize> Scalar for Jet2<N> {
    #[inline]
    fn cst(v: f64) -> Self {
        Self::constant(v)
    }
    #[inline]
    fn re(&self) -> f64 {
        self.v
    }
    #[inline]
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * self.v))
    }
    #[inline]
    fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }
    #[inline]
    fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }
    #[inline]
    fn recip(self) -> Self {
        let r = 1.0 / self.v;
        self.chain(r, -r * r, 2.0 * r * r * r)
    }
    fn atan2(self, x: Self) -> Self {
        let (y0, x0) = (self.v, x.v);
        let r2 = x0 * x0 + y0 * y0;
        let r4 = r2 * r2;
        Self::chain2(
            &self,
            &x,
            y0.atan2(x0),
            x0 / r2,
            -y0 / r2,
            -2.0 * x0 * y0 / r4,
            (y0 * y0 - x0 * x0) / r4,
            2.0 * x0 * y0 / r4,
        )
    }
}

/// First-order forward jet: value and gradient over `N` variables.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet1<const N: usize> {
    pub v: f64,
    pub g: [f64; N],
}

impl<const N: usize> Jet1<N> {
    pub fn constant(v: f64) -> Self {
        Self { v, g: [0.0; N] }
    }

    pub fn seed(x: &[f64; N]) -> [Self; N] {
        let mut out = [Self::constant(0.0); N];
        for i in 0..N {
            out[i] = Self::constant(x[i]);
            out[i].g[i] = 1.0;
        }
        out
    }

    #[inline]
    fn chain(&self, f: f64, d1: f64) -> Self {
        Self { v: f, g: self.g.map(|x| d1 * x) }
    }
}

impl<const N: usize> Add for Jet1<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, o: Self) -> Self {
        self += o;
        self
    }
}

impl<const N: usize> AddAssign for Jet1<N> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        self.v += o.v;
        for i in 0..N {
            self.g[i] += o.g[i];
        }
    }
}

impl<const N: usize> Sub for Jet1<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, o: Self) -> Self {
        self -= o;
        self
    }
}

impl<const N: usize> SubAssign for Jet1<N> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        self.v -= o.v;
        for i in 0..N {
            self.g[i] -= o.g[i];
        }
    }
}

impl<const N: usize> Mul for Jet1<N> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let mut r = Self::constant(self.v * o.v);
        for i in 0..N {
            r.g[i] = self.g[i] * o.v + o.g[i] * self.v;
        }
        r
    }
}

impl<const N: usize> MulAssign for Jet1<N> {
    #[inline]
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}

impl<const N: usize> Div for Jet1<N> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        self * o.recip()
    }
}

impl<const N: usize> Neg for Jet1<N> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self { v: -self.v, g: self.g.map(|x| -x) }
    }
}

impl<const N: usize> Scalar for Jet1<N> {
    #[inline]
    fn cst(v: f64) -> Self {
        Self::constant(v)
    }
    #[inline]
    fn re(&self) -> f64 {
        self.v
    }
    #[inline]
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s)
    }
    #[inline]
    fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c)
    }
    #[inline]
    fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s)
    }
    #[inline]
    fn recip(self) -> Self {
        let r = 1.0 / self.v;
        self.chain(r, -r * r)
    }
    fn atan2(self, x: Self) -> Self {
        let (y0, x0) = (self.v, x.v);
        let r2 = x0 * x0 + y0 * y0;
        let mut r = Self::constant(y0.atan2(x0));
        for i in 0..N {
            r.g[i] = (x0 * self.g[i] - y0 * x.g[i]) / r2;
        }
        r
    }
}
