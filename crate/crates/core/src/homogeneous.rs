//! Homogeneous formulation: generating families, outer-oriented level
//! sets in extended phase space, region classification of the limit set
//! and directed characteristic directions.

use crate::error::DishamError;
use crate::geometry::{Covector, ExtendedPhasePoint, Vector};
use crate::hamiltonian::{DiscontinuousPair, SmoothHamiltonian};
use crate::EPS_REGION;

/// Gradient of a level function on the extended phase space.
pub struct LevelGradient {
    pub dq: Covector,
    pub dp: Vector,
    pub dt: f64,
    pub de: f64,
}

/// Level function whose zero set carries the dynamics. Its derivative
/// with respect to the energy coordinate must be positive on the zero set.
pub trait LevelFunction {
    fn value(&self, x: &ExtendedPhasePoint) -> f64;
    fn gradient(&self, x: &ExtendedPhasePoint) -> LevelGradient;
}

/// The canonical level function `F = e - H(q, p)`, which has dF/de = 1.
pub struct OnShell<'a>(pub &'a dyn SmoothHamiltonian);

impl LevelFunction for OnShell<'_> {
    fn value(&self, x: &ExtendedPhasePoint) -> f64 {
        x.e - self.0.value(&x.q, &x.p)
    }

    fn gradient(&self, x: &ExtendedPhasePoint) -> LevelGradient {
        LevelGradient {
            dq: (-&self.0.grad_q(&x.q, &x.p)),
            dp: (-&self.0.grad_p(&x.q, &x.p)),
            dt: 0.0,
            de: 1.0,
        }
    }
}

/// Component of the limit set N that an extended phase point belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitRegionLabel {
    NMinus,
    NPlus,
    M,
    MMinusEdge,
    MPlusEdge,
    Outside,
}

/// Direction in the extended tangent space (q', p', t', e').
#[derive(Debug, Clone, PartialEq)]
pub struct CharacteristicDirection {
    pub dq: Vector,
    pub dp: Covector,
    pub dt: f64,
    pub de: f64,
}

impl CharacteristicDirection {
    pub fn scale(&self, k: f64) -> Self {
        Self {
            dq: self.dq.scale(k),
            dp: self.dp.scale(k),
            dt: self.dt * k,
            de: self.de * k,
        }
    }
}

/// `(H(q, p) - e) * tau`, the fibre value of the generating family.
pub fn generating_family_eval(
    h: &dyn SmoothHamiltonian,
    x: &ExtendedPhasePoint,
    tau: f64,
) -> Result<f64, DishamError> {
    if !(tau > 0.0) {
        return Err(DishamError::InvalidArgument(format!(
            "generating family parameter tau must be positive, got {tau}"
        )));
    }
    Ok((h.value(&x.q, &x.p) - x.e) * tau)
}

/// Classifies an extended phase point against the limit set of the
/// mollified models: the two smooth sheets, the vertical band M over the
/// surface, and its two edges.
pub fn classify_limit_region(pair: &DiscontinuousPair, x: &ExtendedPhasePoint) -> LimitRegionLabel {
    let a_val = pair.surface.eval_extended(x);
    let hm = pair.minus.value(&x.q, &x.p);
    let hp = pair.plus.value(&x.q, &x.p);
    if a_val < -EPS_REGION {
        if (x.e - hm).abs() <= EPS_REGION {
            return LimitRegionLabel::NMinus;
        }
        return LimitRegionLabel::Outside;
    }
    if a_val > EPS_REGION {
        if (x.e - hp).abs() <= EPS_REGION {
            return LimitRegionLabel::NPlus;
        }
        return LimitRegionLabel::Outside;
    }
    // On the surface: edges first, then the open band between the sheets.
    if (x.e - hm).abs() <= EPS_REGION {
        return LimitRegionLabel::MMinusEdge;
    }
    if (x.e - hp).abs() <= EPS_REGION {
        return LimitRegionLabel::MPlusEdge;
    }
    let lo = hm.min(hp);
    let hi = hm.max(hp);
    if x.e > lo + EPS_REGION && x.e < hi - EPS_REGION {
        return LimitRegionLabel::M;
    }
    LimitRegionLabel::Outside
}

/// Directed characteristic of the labelled component at `x`: the
/// time-normalized Hamilton direction on the smooth sheets, the oriented
/// jump direction on M.
pub fn characteristic_direction(
    pair: &DiscontinuousPair,
    label: LimitRegionLabel,
    x: &ExtendedPhasePoint,
) -> Result<CharacteristicDirection, DishamError> {
    match label {
        LimitRegionLabel::NMinus | LimitRegionLabel::NPlus => {
            let h: &dyn SmoothHamiltonian = if label == LimitRegionLabel::NMinus {
                pair.minus.as_ref()
            } else {
                pair.plus.as_ref()
            };
            Ok(CharacteristicDirection {
                dq: h.grad_p(&x.q, &x.p),
                dp: (-&h.grad_q(&x.q, &x.p)),
                dt: 1.0,
                de: 0.0,
            })
        }
        LimitRegionLabel::M => {
            let hm = pair.minus.value(&x.q, &x.p);
            let hp = pair.plus.value(&x.q, &x.p);
            if (hp - hm).abs() <= EPS_REGION {
                return Err(DishamError::DegenerateDiscontinuity);
            }
            let sigma = if hp > hm { 1.0 } else { -1.0 };
            Ok(CharacteristicDirection {
                dq: pair.surface.a.scale(sigma),
                dp: pair.surface.b.scale(-sigma),
                dt: 0.0,
                de: 0.0,
            })
        }
        other => Err(DishamError::InvalidArgument(format!(
            "no characteristic direction on region {other:?}"
        ))),
    }
}

/// Whether a displacement lies in the positive side of the outer
/// orientation defined by a level function at a point of its zero set.
pub fn orientation_contains(
    f: &dyn LevelFunction,
    x: &ExtendedPhasePoint,
    dx: &CharacteristicDirection,
) -> bool {
    let g = f.gradient(x);
    g.dq.dot(&dx.dq) + dx.dp.dot(&g.dp) + g.dt * dx.dt + g.de * dx.de > 0.0
}

/// Whether `(x, v)` solves the positive-homogeneous dynamics equation of
/// the Hamiltonian: on-shell energy, forward time, constant energy, and
/// the Hamilton proportionality between the rates and the gradients.
pub fn is_dynamics_solution(
    h: &dyn SmoothHamiltonian,
    x: &ExtendedPhasePoint,
    v: &CharacteristicDirection,
) -> bool {
    if (x.e - h.value(&x.q, &x.p)).abs() > EPS_REGION {
        return false;
    }
    if !(v.dt > 0.0) {
        return false;
    }
    let tol = 1e-10;
    if v.de.abs() > tol * v.dt.abs().max(1.0) {
        return false;
    }
    let expect_dq = h.grad_p(&x.q, &x.p).scale(v.dt);
    let expect_dp = h.grad_q(&x.q, &x.p).scale(-v.dt);
    let scale = v.dt.abs().max(expect_dq.norm_inf()).max(expect_dp.norm_inf()).max(1.0);
    (&v.dq - &expect_dq).norm_inf() <= tol * scale && (&v.dp - &expect_dp).norm_inf() <= tol * scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{normalize_surface, MetricSpace};
    use crate::hamiltonian::NaturalHamiltonian;
    use std::sync::Arc;

    fn pair_1d(u_minus: f64, u_plus: f64) -> DiscontinuousPair {
        let space = MetricSpace::euclidean(1);
        let surface = normalize_surface(
            Vector::from_slice(&[0.0]),
            Covector::from_slice(&[0.0]),
            Vector::from_slice(&[0.0]),
            Covector::from_slice(&[1.0]),
            &space,
        )
        .unwrap();
        DiscontinuousPair {
            minus: Arc::new(NaturalHamiltonian::constant(space.clone(), 1.0, u_minus)),
            plus: Arc::new(NaturalHamiltonian::constant(space.clone(), 1.0, u_plus)),
            surface,
            space,
        }
    }

    fn ext(q: f64, p: f64, t: f64, e: f64) -> ExtendedPhasePoint {
        ExtendedPhasePoint::new(Vector::from_slice(&[q]), Covector::from_slice(&[p]), t, e)
    }

    #[test]
    fn generating_family_examples() {
        let pair = pair_1d(0.0, 1.0);
        // On-shell: zero for any tau.
        let x = ext(-1.0, 1.0, 0.0, 0.5);
        assert_eq!(generating_family_eval(pair.minus.as_ref(), &x, 7.0).unwrap(), 0.0);
        // H - e = 3 with tau = 2.
        let x = ext(-1.0, 2.0, 0.0, -1.0);
        assert_eq!(generating_family_eval(pair.minus.as_ref(), &x, 2.0).unwrap(), 6.0);
        // Linear in tau.
        let v1 = generating_family_eval(pair.minus.as_ref(), &x, 1.0).unwrap();
        let v5 = generating_family_eval(pair.minus.as_ref(), &x, 5.0).unwrap();
        assert_eq!(v5, 5.0 * v1);
        assert!(generating_family_eval(pair.minus.as_ref(), &x, 0.0).is_err());
        assert!(generating_family_eval(pair.minus.as_ref(), &x, -1.0).is_err());
    }

    #[test]
    fn classify_regions() {
        let pair = pair_1d(0.0, 1.0);
        // A < 0 on-shell for H^-.
        assert_eq!(classify_limit_region(&pair, &ext(-1.0, 1.0, 0.0, 0.5)), LimitRegionLabel::NMinus);
        // A > 0 on-shell for H^+.
        assert_eq!(classify_limit_region(&pair, &ext(1.0, 1.0, 0.0, 1.5)), LimitRegionLabel::NPlus);
        // On the surface, strictly between the sheets.
        assert_eq!(classify_limit_region(&pair, &ext(0.0, 1.0, 0.0, 1.0)), LimitRegionLabel::M);
        // Edges.
        assert_eq!(classify_limit_region(&pair, &ext(0.0, 1.0, 0.0, 0.5)), LimitRegionLabel::MMinusEdge);
        assert_eq!(classify_limit_region(&pair, &ext(0.0, 1.0, 0.0, 1.5)), LimitRegionLabel::MPlusEdge);
        // Off-shell points.
        assert_eq!(classify_limit_region(&pair, &ext(-1.0, 1.0, 0.0, 2.0)), LimitRegionLabel::Outside);
        assert_eq!(classify_limit_region(&pair, &ext(0.0, 1.0, 0.0, 3.0)), LimitRegionLabel::Outside);
    }

    #[test]
    fn characteristic_on_smooth_sheet_is_free_flight() {
        let pair = pair_1d(0.0, 1.0);
        let x = ext(-1.0, 2.0, 0.0, 2.0);
        let v = characteristic_direction(&pair, LimitRegionLabel::NMinus, &x).unwrap();
        assert_eq!(v.dq.0[0], 2.0);
        assert_eq!(v.dp.0[0], 0.0);
        assert_eq!(v.dt, 1.0);
        assert_eq!(v.de, 0.0);
        assert!(is_dynamics_solution(pair.minus.as_ref(), &x, &v));
    }

    #[test]
    fn m_direction_sign_rules() {
        // Uphill: direction (a, -b).
        let pair = pair_1d(0.0, 1.0);
        let x = ext(0.0, 1.0, 0.0, 1.0);
        let v = characteristic_direction(&pair, LimitRegionLabel::M, &x).unwrap();
        assert_eq!(v.dq.0[0], 0.0);
        assert_eq!(v.dp.0[0], -1.0);
        assert_eq!((v.dt, v.de), (0.0, 0.0));
        // Downhill: direction (-a, b).
        let pair = pair_1d(1.0, 0.0);
        let x = ext(0.0, 1.0, 0.0, 1.0);
        let v = characteristic_direction(&pair, LimitRegionLabel::M, &x).unwrap();
        assert_eq!(v.dp.0[0], 1.0);
        // Degenerate discontinuity is refused.
        let pair = pair_1d(1.0, 1.0);
        assert!(matches!(
            characteristic_direction(&pair, LimitRegionLabel::M, &ext(0.0, 1.0, 0.0, 1.2)),
            Err(DishamError::DegenerateDiscontinuity)
        ));
    }

    #[test]
    fn m_direction_stays_on_surface() {
        let space = MetricSpace::euclidean(2);
        let surface = normalize_surface(
            Vector::from_slice(&[0.0, 0.0]),
            Covector::from_slice(&[0.0, 0.0]),
            Vector::from_slice(&[0.3, -0.1]),
            Covector::from_slice(&[0.8, 0.4]),
            &space,
        )
        .unwrap();
        let pair = DiscontinuousPair {
            minus: Arc::new(NaturalHamiltonian::constant(space.clone(), 1.0, 0.0)),
            plus: Arc::new(NaturalHamiltonian::constant(space.clone(), 1.0, 2.0)),
            surface,
            space,
        };
        let q0 = Vector::from_slice(&[0.0, 0.0]);
        let p0 = Covector::from_slice(&[1.0, 0.2]);
        let a0 = pair.surface.eval_qp(&q0, &p0);
        for k in 0..20 {
            let s = 0.1 * k as f64;
            let q = &q0 + &pair.surface.a.scale(s);
            let p = &p0 - &pair.surface.b.scale(s);
            assert!((pair.surface.eval_qp(&q, &p) - a0).abs() < 1e-12);
        }
    }

    #[test]
    fn orientation_examples() {
        let pair = pair_1d(0.0, 1.0);
        let on_shell = OnShell(pair.minus.as_ref());
        let x = ext(-1.0, 1.0, 0.0, 0.5);
        let up = CharacteristicDirection {
            dq: Vector::zeros(1),
            dp: Covector::zeros(1),
            dt: 0.0,
            de: 1.0,
        };
        assert!(orientation_contains(&on_shell, &x, &up));
        assert!(!orientation_contains(&on_shell, &x, &up.scale(-1.0)));
        // Tangent displacement: Hamilton direction lies in the level set.
        let tangent = characteristic_direction(&pair, LimitRegionLabel::NMinus, &x).unwrap();
        assert!(!orientation_contains(&on_shell, &x, &tangent));
    }

    #[test]
    fn dynamics_solution_homogeneity() {
        let pair = pair_1d(0.0, 1.0);
        let x = ext(-1.0, 2.0, 0.0, 2.0);
        let v = characteristic_direction(&pair, LimitRegionLabel::NMinus, &x).unwrap();
        assert!(is_dynamics_solution(pair.minus.as_ref(), &x, &v));
        assert!(is_dynamics_solution(pair.minus.as_ref(), &x, &v.scale(2.0)));
        assert!(!is_dynamics_solution(pair.minus.as_ref(), &x, &v.scale(-1.0)));
        // Off-shell point fails.
        let off = ext(-1.0, 2.0, 0.0, 5.0);
        assert!(!is_dynamics_solution(pair.minus.as_ref(), &off, &v));
    }

    #[test]
    fn smooth_direction_satisfies_orientation_inequality() {
        // <p', dq> - <dp, q'> - e' dt + t' de > 0 for the class vector (0,0,0,1).
        let pair = pair_1d(0.0, 1.0);
        let x = ext(-1.0, 2.0, 0.0, 2.0);
        let v = characteristic_direction(&pair, LimitRegionLabel::NMinus, &x).unwrap();
        let (dq, dp, dt, de) = (Vector::zeros(1), Covector::zeros(1), 0.0, 1.0);
        let lhs = v.dp.dot(&dq) - dp.dot(&v.dq) - v.de * dt + v.dt * de;
        assert!(lhs > 0.0);
    }
}
