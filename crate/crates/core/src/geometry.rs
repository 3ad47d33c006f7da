//! Affine phase-space linear algebra: vectors vs covectors, the metric
//! pairing, the discontinuity hyperplane and momentum decomposition.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::DishamError;

/// Element of the model vector space V (configuration displacements).
#[derive(Debug, Clone, PartialEq)]
pub struct Vector(pub DVector<f64>);

/// Element of the dual space V* (momenta, forces).
#[derive(Debug, Clone, PartialEq)]
pub struct Covector(pub DVector<f64>);

macro_rules! linear_impls {
    ($t:ident) => {
        impl $t {
            pub fn zeros(n: usize) -> Self {
                $t(DVector::zeros(n))
            }

            pub fn from_slice(v: &[f64]) -> Self {
                $t(DVector::from_column_slice(v))
            }

            pub fn dim(&self) -> usize {
                self.0.len()
            }

            pub fn scale(&self, k: f64) -> Self {
                $t(&self.0 * k)
            }

            pub fn norm_inf(&self) -> f64 {
                self.0.amax()
            }
        }

        impl Add for &$t {
            type Output = $t;
            fn add(self, rhs: &$t) -> $t {
                $t(&self.0 + &rhs.0)
            }
        }

        impl Sub for &$t {
            type Output = $t;
            fn sub(self, rhs: &$t) -> $t {
                $t(&self.0 - &rhs.0)
            }
        }

        impl Neg for &$t {
            type Output = $t;
            fn neg(self) -> $t {
                $t(-&self.0)
            }
        }

        impl Mul<f64> for &$t {
            type Output = $t;
            fn mul(self, k: f64) -> $t {
                self.scale(k)
            }
        }
    };
}

linear_impls!(Vector);
linear_impls!(Covector);

impl Covector {
    /// Natural pairing `<b, v>` of a covector with a vector. No metric involved.
    pub fn dot(&self, v: &Vector) -> f64 {
        self.0.dot(&v.0)
    }
}

/// Dimension plus the SPD metric tensor `g: V -> V*` and its inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSpace {
    n: usize,
    g: DMatrix<f64>,
    g_inv: DMatrix<f64>,
}

impl MetricSpace {
    /// Builds the space, factorizing `g` once. Fails if `g` is not
    /// symmetric positive definite.
    pub fn new(g: DMatrix<f64>) -> Result<Self, DishamError> {
        let n = g.nrows();
        if g.ncols() != n || n == 0 {
            return Err(DishamError::InvalidArgument(format!(
                "metric must be square and nonempty, got {}x{}",
                g.nrows(),
                g.ncols()
            )));
        }
        let sym_dev = (&g - g.transpose()).amax();
        if sym_dev > 1e-12 * g.amax().max(1.0) {
            return Err(DishamError::NotPositiveDefinite);
        }
        let chol = Cholesky::new(g.clone()).ok_or(DishamError::NotPositiveDefinite)?;
        let g_inv = chol.inverse();
        let residual = (&g * &g_inv - DMatrix::identity(n, n)).amax();
        if residual > 1e-12 * g.amax().max(1.0) {
            return Err(DishamError::NotPositiveDefinite);
        }
        Ok(Self { n, g, g_inv })
    }

    /// Euclidean space of dimension `n` with the identity metric.
    pub fn euclidean(n: usize) -> Self {
        Self::new(DMatrix::identity(n, n)).expect("identity metric is SPD")
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn metric(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn metric_inv(&self) -> &DMatrix<f64> {
        &self.g_inv
    }

    /// `g(v)`: lower an index.
    pub fn lower(&self, v: &Vector) -> Covector {
        Covector(&self.g * &v.0)
    }

    /// `g^-1(b)`: raise an index.
    pub fn raise(&self, b: &Covector) -> Vector {
        Vector(&self.g_inv * &b.0)
    }

    /// Inverse-metric pairing `<b, g^-1(p)>` of two covectors.
    pub fn pairing(&self, b: &Covector, p: &Covector) -> Result<f64, DishamError> {
        self.check_dim(b.dim())?;
        self.check_dim(p.dim())?;
        Ok(b.0.dot(&(&self.g_inv * &p.0)))
    }

    /// Metric pairing `<g(a), a'>` of two vectors.
    pub fn vector_pairing(&self, a: &Vector, a2: &Vector) -> Result<f64, DishamError> {
        self.check_dim(a.dim())?;
        self.check_dim(a2.dim())?;
        Ok(a.0.dot(&(&self.g * &a2.0)))
    }

    /// Kinetic energy `<p, g^-1(p)> / (2m)`.
    pub fn kinetic(&self, p: &Covector, mass: f64) -> f64 {
        p.0.dot(&(&self.g_inv * &p.0)) / (2.0 * mass)
    }

    pub fn check_dim(&self, got: usize) -> Result<(), DishamError> {
        if got != self.n {
            return Err(DishamError::DimensionMismatch {
                expected: self.n,
                got,
            });
        }
        Ok(())
    }
}

/// Point (q, p) of the phase space P = Q x V*.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub q: Vector,
    pub p: Covector,
}

impl PhasePoint {
    pub fn new(q: Vector, p: Covector) -> Self {
        Self { q, p }
    }
}

/// Point (q, p, t, e) of the extended phase space P x R x R.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedPhasePoint {
    pub q: Vector,
    pub p: Covector,
    pub t: f64,
    pub e: f64,
}

impl ExtendedPhasePoint {
    pub fn new(q: Vector, p: Covector, t: f64, e: f64) -> Self {
        Self { q, p, t, e }
    }

    pub fn phase(&self) -> PhasePoint {
        PhasePoint::new(self.q.clone(), self.p.clone())
    }
}

/// The discontinuity hyperplane: zero set of the affine function
/// `A(q, p) = <b, q - q0> + <p - p0, a>`, with (a, b) unit-normalized in
/// the combined metric. The configuration-only case has `a = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseHyperplane {
    pub q0: Vector,
    pub p0: Covector,
    pub a: Vector,
    pub b: Covector,
}

/// Normalizes raw (a, b) data so that `<g(a), a> + <b, g^-1(b)> = 1`,
/// leaving the zero set of A unchanged.
pub fn normalize_surface(
    q0: Vector,
    p0: Covector,
    a_raw: Vector,
    b_raw: Covector,
    space: &MetricSpace,
) -> Result<PhaseHyperplane, DishamError> {
    space.check_dim(q0.dim())?;
    space.check_dim(p0.dim())?;
    let quad = space.vector_pairing(&a_raw, &a_raw)? + space.pairing(&b_raw, &b_raw)?;
    if !(quad > 0.0) || !quad.is_finite() {
        return Err(DishamError::ZeroNormal);
    }
    let c = quad.sqrt().recip();
    Ok(PhaseHyperplane {
        q0,
        p0,
        a: a_raw.scale(c),
        b: b_raw.scale(c),
    })
}

impl PhaseHyperplane {
    /// Evaluates the affine function A at a phase point.
    pub fn eval(&self, x: &PhasePoint) -> f64 {
        self.eval_qp(&x.q, &x.p)
    }

    pub fn eval_qp(&self, q: &Vector, p: &Covector) -> f64 {
        self.b.dot(&(q - &self.q0)) + (p - &self.p0).dot(&self.a)
    }

    pub fn eval_extended(&self, x: &ExtendedPhasePoint) -> f64 {
        self.eval_qp(&x.q, &x.p)
    }

    /// Normalization defect `<g(a), a> + <b, g^-1(b)> - 1`.
    pub fn normalization_defect(&self, space: &MetricSpace) -> f64 {
        let quad = space.vector_pairing(&self.a, &self.a).unwrap_or(f64::NAN)
            + space.pairing(&self.b, &self.b).unwrap_or(f64::NAN);
        quad - 1.0
    }
}

/// Splits a momentum into its component along `b` (normal) and the
/// remainder (tangential): `p = tangential + normal_coeff * b`.
/// Requires `b` unit-normalized in the inverse metric.
pub fn momentum_split(
    p: &Covector,
    b: &Covector,
    space: &MetricSpace,
) -> Result<(f64, Covector), DishamError> {
    let b_norm = space.pairing(b, b)?;
    let deviation = (b_norm - 1.0).abs();
    if deviation > 1e-9 {
        return Err(DishamError::UnnormalizedCovector { deviation });
    }
    let normal_coeff = space.pairing(b, p)?;
    let tangential = p - &b.scale(normal_coeff);
    Ok((normal_coeff, tangential))
}
