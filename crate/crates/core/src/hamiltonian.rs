//! Hamiltonian evaluators: smooth natural Hamiltonians, discontinuous
//! pairs, the mollified model with analytic gradients, and piecewise
//! step-potential builders.

use std::sync::Arc;

use crate::error::DishamError;
use crate::geometry::{Covector, MetricSpace, PhaseHyperplane, Vector};
use crate::mollifier::{chi_step, dchi_step, StepProfile};

/// Smooth Hamiltonian contract: a value plus its analytic gradients.
pub trait SmoothHamiltonian: Send + Sync {
    fn value(&self, q: &Vector, p: &Covector) -> f64;
    /// dH/dq, a covector.
    fn grad_q(&self, q: &Vector, p: &Covector) -> Covector;
    /// dH/dp, a vector.
    fn grad_p(&self, q: &Vector, p: &Covector) -> Vector;
}

/// Scalar field on the configuration space with an analytic gradient.
pub trait Potential: Send + Sync {
    fn value(&self, q: &Vector) -> f64;
    fn grad(&self, q: &Vector) -> Covector;
}

pub struct ConstantPotential {
    pub level: f64,
    dim: usize,
}

impl ConstantPotential {
    pub fn new(level: f64, dim: usize) -> Self {
        Self { level, dim }
    }
}

impl Potential for ConstantPotential {
    fn value(&self, _q: &Vector) -> f64 {
        self.level
    }

    fn grad(&self, _q: &Vector) -> Covector {
        Covector::zeros(self.dim)
    }
}

/// `U(q) = k/2 <g(q - c), q - c>`.
pub struct HarmonicPotential {
    pub stiffness: f64,
    pub center: Vector,
    pub space: MetricSpace,
}

impl Potential for HarmonicPotential {
    fn value(&self, q: &Vector) -> f64 {
        let d = q - &self.center;
        0.5 * self.stiffness * self.space.vector_pairing(&d, &d).expect("dimension checked")
    }

    fn grad(&self, q: &Vector) -> Covector {
        self.space.lower(&(q - &self.center)).scale(self.stiffness)
    }
}

/// Piecewise blend of constant levels U^0 .. U^k across ordered,
/// disjoint step layers: constant between layers, smooth everywhere.
#[derive(Debug, Clone)]
pub struct StepChainPotential {
    levels: Vec<f64>,
    layers: Vec<StepProfile>,
}

impl StepChainPotential {
    pub fn new(levels: Vec<f64>, layers: Vec<StepProfile>) -> Result<Self, DishamError> {
        if levels.len() < 2 || layers.len() != levels.len() - 1 {
            return Err(DishamError::InvalidArgument(format!(
                "step chain needs k+1 levels for k >= 1 layers, got {} levels and {} layers",
                levels.len(),
                layers.len()
            )));
        }
        for w in layers.windows(2) {
            if w[1].lower() < w[0].upper() {
                return Err(DishamError::InvalidArgument(
                    "step chain layers must be disjoint and increasing".into(),
                ));
            }
        }
        Ok(Self { levels, layers })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn layers(&self) -> &[StepProfile] {
        &self.layers
    }

    /// Value of the chain at coordinate `s` along the surface normal.
    pub fn value(&self, s: f64) -> f64 {
        for (i, layer) in self.layers.iter().enumerate() {
            if s < layer.upper() {
                let c = chi_step(*layer, s);
                return 0.5 * (1.0 - c) * self.levels[i] + 0.5 * (1.0 + c) * self.levels[i + 1];
            }
        }
        *self.levels.last().expect("validated nonempty")
    }

    /// Slope of the chain at coordinate `s`.
    pub fn slope(&self, s: f64) -> f64 {
        for (i, layer) in self.layers.iter().enumerate() {
            if s < layer.upper() {
                let dc = dchi_step(*layer, s);
                return 0.5 * dc * (self.levels[i + 1] - self.levels[i]);
            }
        }
        0.0
    }
}

/// A step-chain potential laid across the planar surface `B(q) = <b, q - q0>`.
pub struct PlanarStepChain {
    pub chain: StepChainPotential,
    pub q0: Vector,
    pub b: Covector,
}

impl Potential for PlanarStepChain {
    fn value(&self, q: &Vector) -> f64 {
        self.chain.value(self.b.dot(&(q - &self.q0)))
    }

    fn grad(&self, q: &Vector) -> Covector {
        self.b.scale(self.chain.slope(self.b.dot(&(q - &self.q0))))
    }
}

/// `H(q, p) = <p, g^-1(p)> / (2m) + U(q)`.
pub struct NaturalHamiltonian {
    pub space: MetricSpace,
    pub mass: f64,
    pub potential: Arc<dyn Potential>,
}

impl NaturalHamiltonian {
    pub fn new(space: MetricSpace, mass: f64, potential: Arc<dyn Potential>) -> Result<Self, DishamError> {
        if !(mass > 0.0) {
            return Err(DishamError::InvalidArgument(format!("mass must be positive, got {mass}")));
        }
        Ok(Self { space, mass, potential })
    }

    /// Constant-potential shortcut.
    pub fn constant(space: MetricSpace, mass: f64, level: f64) -> Self {
        let dim = space.dim();
        Self::new(space, mass, Arc::new(ConstantPotential::new(level, dim))).expect("mass > 0")
    }
}

impl SmoothHamiltonian for NaturalHamiltonian {
    fn value(&self, q: &Vector, p: &Covector) -> f64 {
        self.space.kinetic(p, self.mass) + self.potential.value(q)
    }

    fn grad_q(&self, q: &Vector, _p: &Covector) -> Covector {
        self.potential.grad(q)
    }

    fn grad_p(&self, _q: &Vector, p: &Covector) -> Vector {
        self.space.raise(p).scale(self.mass.recip())
    }
}

/// A pair of globally-defined smooth Hamiltonians separated by a
/// phase-space hyperplane.
#[derive(Clone)]
pub struct DiscontinuousPair {
    pub minus: Arc<dyn SmoothHamiltonian>,
    pub plus: Arc<dyn SmoothHamiltonian>,
    pub surface: PhaseHyperplane,
    pub space: MetricSpace,
}

impl DiscontinuousPair {
    pub fn h_minus(&self, q: &Vector, p: &Covector) -> f64 {
        self.minus.value(q, p)
    }

    pub fn h_plus(&self, q: &Vector, p: &Covector) -> f64 {
        self.plus.value(q, p)
    }
}

/// The mollified model: a smooth blend of the two Hamiltonians across a
/// finite-width layer in the values of A.
#[derive(Clone)]
pub struct MollifiedHamiltonian {
    pub pair: DiscontinuousPair,
    pub delta: f64,
    pub layer: StepProfile,
    /// Argument shift `g^-1(b) * delta` applied to q.
    q_shift: Vector,
    /// Argument shift `g(a) * delta` applied to p.
    p_shift: Covector,
}

impl MollifiedHamiltonian {
    /// Default layer `(-delta, delta)` over the values of A.
    pub fn new(pair: DiscontinuousPair, delta: f64) -> Result<Self, DishamError> {
        let layer = StepProfile::new(-delta, delta)?;
        Self::with_layer(pair, delta, layer)
    }

    /// The one-sided `(0, delta)` layer variant.
    pub fn one_sided(pair: DiscontinuousPair, delta: f64) -> Result<Self, DishamError> {
        let layer = StepProfile::new(0.0, delta)?;
        Self::with_layer(pair, delta, layer)
    }

    pub fn with_layer(pair: DiscontinuousPair, delta: f64, layer: StepProfile) -> Result<Self, DishamError> {
        if !(delta > 0.0) {
            return Err(DishamError::InvalidArgument(format!("delta must be positive, got {delta}")));
        }
        let q_shift = pair.space.raise(&pair.surface.b).scale(delta);
        let p_shift = pair.space.lower(&pair.surface.a).scale(delta);
        Ok(Self { pair, delta, layer, q_shift, p_shift })
    }

    fn shifted_args(&self, q: &Vector, p: &Covector) -> (Vector, Covector, Vector, Covector) {
        (
            q + &self.q_shift,
            p + &self.p_shift,
            q - &self.q_shift,
            p - &self.p_shift,
        )
    }

    /// The blended Hamiltonian value.
    pub fn value(&self, q: &Vector, p: &Covector) -> f64 {
        let a_val = self.pair.surface.eval_qp(q, p);
        let c = chi_step(self.layer, a_val);
        let (qm, pm, qp, pp) = self.shifted_args(q, p);
        0.5 * (1.0 - c) * self.pair.minus.value(&qm, &pm)
            + 0.5 * (1.0 + c) * self.pair.plus.value(&qp, &pp)
    }

    /// Analytic gradient of [`MollifiedHamiltonian::value`] together with
    /// the divergent blend factor K. Outside the layer K is exactly zero.
    pub fn grad_with_k(&self, q: &Vector, p: &Covector) -> (Covector, Vector, f64) {
        let a_val = self.pair.surface.eval_qp(q, p);
        let c = chi_step(self.layer, a_val);
        let dc = dchi_step(self.layer, a_val);
        let (qm, pm, qp, pp) = self.shifted_args(q, p);
        let wm = 0.5 * (1.0 - c);
        let wp = 0.5 * (1.0 + c);
        let hm = self.pair.minus.value(&qm, &pm);
        let hp = self.pair.plus.value(&qp, &pp);
        let k = 0.5 * (hp - hm) * dc;
        let mut dq = &self.pair.minus.grad_q(&qm, &pm).scale(wm)
            + &self.pair.plus.grad_q(&qp, &pp).scale(wp);
        let mut dp = &self.pair.minus.grad_p(&qm, &pm).scale(wm)
            + &self.pair.plus.grad_p(&qp, &pp).scale(wp);
        if k != 0.0 {
            dq = &dq + &self.pair.surface.b.scale(k);
            dp = &dp + &self.pair.surface.a.scale(k);
        }
        (dq, dp, k)
    }
}

impl SmoothHamiltonian for MollifiedHamiltonian {
    fn value(&self, q: &Vector, p: &Covector) -> f64 {
        MollifiedHamiltonian::value(self, q, p)
    }

    fn grad_q(&self, q: &Vector, p: &Covector) -> Covector {
        self.grad_with_k(q, p).0
    }

    fn grad_p(&self, q: &Vector, p: &Covector) -> Vector {
        self.grad_with_k(q, p).1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::normalize_surface;
    use approx::assert_relative_eq;

    fn step_pair_1d(u_minus: f64, u_plus: f64, mass: f64) -> DiscontinuousPair {
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
            minus: Arc::new(NaturalHamiltonian::constant(space.clone(), mass, u_minus)),
            plus: Arc::new(NaturalHamiltonian::constant(space.clone(), mass, u_plus)),
            surface,
            space,
        }
    }

    fn fd_check<H: SmoothHamiltonian>(h: &H, q: &Vector, p: &Covector, tol: f64) {
        let step = 1e-6;
        let n = q.dim();
        let gq = h.grad_q(q, p);
        let gp = h.grad_p(q, p);
        for i in 0..n {
            let mut qp_ = q.clone();
            let mut qm_ = q.clone();
            qp_.0[i] += step;
            qm_.0[i] -= step;
            let fd = (h.value(&qp_, p) - h.value(&qm_, p)) / (2.0 * step);
            let scale = fd.abs().max(1.0);
            assert!((gq.0[i] - fd).abs() / scale < tol, "grad_q[{i}]: {} vs {}", gq.0[i], fd);

            let mut pp_ = p.clone();
            let mut pm_ = p.clone();
            pp_.0[i] += step;
            pm_.0[i] -= step;
            let fd = (h.value(q, &pp_) - h.value(q, &pm_)) / (2.0 * step);
            let scale = fd.abs().max(1.0);
            assert!((gp.0[i] - fd).abs() / scale < tol, "grad_p[{i}]: {} vs {}", gp.0[i], fd);
        }
    }

    #[test]
    fn natural_hamiltonian_value_and_gradients() {
        let space = MetricSpace::euclidean(2);
        let h = NaturalHamiltonian::new(
            space.clone(),
            2.0,
            Arc::new(HarmonicPotential {
                stiffness: 3.0,
                center: Vector::zeros(2),
                space: space.clone(),
            }),
        )
        .unwrap();
        let q = Vector::from_slice(&[1.0, -0.5]);
        let p = Covector::from_slice(&[0.4, 2.0]);
        assert_relative_eq!(
            h.value(&q, &p),
            (0.16 + 4.0) / 4.0 + 1.5 * 1.25,
            epsilon = 1e-14
        );
        fd_check(&h, &q, &p, 1e-5);
    }

    #[test]
    fn mollified_value_outside_layer_is_shifted_side() {
        let pair = step_pair_1d(0.0, 1.0, 1.0);
        let hd = MollifiedHamiltonian::new(pair, 0.1).unwrap();
        let p = Covector::from_slice(&[2.0]);
        // Deep in the minus region.
        let q = Vector::from_slice(&[-1.0]);
        assert_relative_eq!(hd.value(&q, &p), 2.0, epsilon = 1e-15);
        // Deep in the plus region.
        let q = Vector::from_slice(&[1.0]);
        assert_relative_eq!(hd.value(&q, &p), 3.0, epsilon = 1e-15);
    }

    #[test]
    fn mollified_entry_state_matches_unshifted_minus() {
        // H_delta at the shifted entry point equals H^- at the base point.
        let pair = step_pair_1d(0.3, 1.7, 1.5);
        let delta = 0.07;
        let hd = MollifiedHamiltonian::new(pair.clone(), delta).unwrap();
        let q0 = Vector::from_slice(&[0.0]);
        let p0 = Covector::from_slice(&[1.2]);
        let q_entry = &q0 - &pair.space.raise(&pair.surface.b).scale(delta);
        let p_entry = &p0 - &pair.space.lower(&pair.surface.a).scale(delta);
        assert_relative_eq!(
            hd.value(&q_entry, &p_entry),
            pair.minus.value(&q0, &p0),
            epsilon = 1e-14
        );
    }

    #[test]
    fn mollified_midpoint_is_average_for_step_potential() {
        let pair = step_pair_1d(0.0, 1.0, 1.0);
        let hd = MollifiedHamiltonian::new(pair, 0.1).unwrap();
        let q = Vector::from_slice(&[0.0]);
        let p = Covector::from_slice(&[2.0]);
        assert_relative_eq!(hd.value(&q, &p), 2.0 + 0.5, epsilon = 1e-14);
    }

    #[test]
    fn mollified_gradient_matches_finite_differences() {
        let pair = step_pair_1d(0.0, 1.0, 1.0);
        let hd = MollifiedHamiltonian::new(pair, 0.1).unwrap();
        // Interior points of the layer.
        for k in 0..20 {
            let a_val = -0.09 + 0.009 * k as f64;
            let q = Vector::from_slice(&[a_val]);
            let p = Covector::from_slice(&[1.0 + 0.1 * k as f64]);
            fd_check(&hd, &q, &p, 1e-5);
        }
        // Outside the layer the gradient reduces to the side gradient and K = 0.
        let (dq, dp, k) = hd.grad_with_k(&Vector::from_slice(&[-0.5]), &Covector::from_slice(&[2.0]));
        assert_eq!(k, 0.0);
        assert!(dq.norm_inf() < 1e-15);
        assert_relative_eq!(dp.0[0], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn k_magnitude_diverges_as_delta_shrinks() {
        let mut prev = 0.0;
        for delta in [0.1, 0.01, 0.001] {
            let pair = step_pair_1d(0.0, 1.0, 1.0);
            let hd = MollifiedHamiltonian::new(pair, delta).unwrap();
            let (_, _, k) = hd.grad_with_k(&Vector::from_slice(&[0.0]), &Covector::from_slice(&[1.0]));
            assert!(k.abs() > prev, "K not increasing at delta = {delta}");
            prev = k.abs();
        }
    }

    #[test]
    fn mollified_pointwise_limit() {
        let pair = step_pair_1d(0.0, 1.0, 1.0);
        let q = Vector::from_slice(&[0.05]);
        let p = Covector::from_slice(&[2.0]);
        let target = pair.plus.value(&q, &p);
        let mut prev = f64::INFINITY;
        for delta in [0.1, 0.01, 0.001] {
            let hd = MollifiedHamiltonian::new(pair.clone(), delta).unwrap();
            let err = (hd.value(&q, &p) - target).abs();
            assert!(err <= prev, "not decreasing at delta = {delta}");
            prev = err;
        }
        assert!(prev < 1e-12);
    }

    #[test]
    fn identical_pair_has_no_discontinuity() {
        let pair = step_pair_1d(0.7, 0.7, 1.0);
        for delta in [0.1, 0.01, 0.001] {
            let hd = MollifiedHamiltonian::new(pair.clone(), delta).unwrap();
            let q = Vector::from_slice(&[0.0]);
            let p = Covector::from_slice(&[1.3]);
            assert_relative_eq!(hd.value(&q, &p), pair.minus.value(&q, &p), epsilon = 1e-14);
            let (_, _, k) = hd.grad_with_k(&q, &p);
            assert_eq!(k, 0.0);
        }
    }

    #[test]
    fn step_chain_validation() {
        let l1 = StepProfile::new(0.0, 0.5).unwrap();
        let l2 = StepProfile::new(0.5, 1.0).unwrap();
        assert!(StepChainPotential::new(vec![0.0, 1.0, 0.0], vec![l1, l2]).is_ok());
        assert!(StepChainPotential::new(vec![0.0], vec![]).is_err());
        let overlapping = StepProfile::new(0.4, 1.0).unwrap();
        assert!(StepChainPotential::new(vec![0.0, 1.0, 0.0], vec![l1, overlapping]).is_err());
    }

    #[test]
    fn step_chain_single_step_values() {
        let layer = StepProfile::new(0.0, 0.1).unwrap();
        let chain = StepChainPotential::new(vec![-2.0, 3.0], vec![layer]).unwrap();
        assert_eq!(chain.value(-0.5), -2.0);
        assert_eq!(chain.value(0.0), -2.0);
        assert_eq!(chain.value(0.2), 3.0);
        assert_relative_eq!(chain.value(0.05), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn step_chain_two_layer_junction() {
        // Two-layer model with junction at delta/2: both blends saturate there.
        let delta = 0.2;
        let l1 = StepProfile::new(0.0, delta / 2.0).unwrap();
        let l2 = StepProfile::new(delta / 2.0, delta).unwrap();
        let chain = StepChainPotential::new(vec![0.0, 1.0, 0.3], vec![l1, l2]).unwrap();
        assert_eq!(chain.value(delta / 2.0), 1.0);
        assert_relative_eq!(chain.value(delta / 4.0), 0.5, epsilon = 1e-14);
        assert_relative_eq!(chain.value(3.0 * delta / 4.0), 0.65, epsilon = 1e-14);
        assert_eq!(chain.value(2.0 * delta), 0.3);
    }

    #[test]
    fn step_chain_constant_outside_layers() {
        let l1 = StepProfile::new(0.0, 0.1).unwrap();
        let l2 = StepProfile::new(0.3, 0.4).unwrap();
        let chain = StepChainPotential::new(vec![1.0, 5.0, 2.0], vec![l1, l2]).unwrap();
        for s in [-10.0, -0.001, 0.0] {
            assert_eq!(chain.value(s), 1.0);
            assert_eq!(chain.slope(s), 0.0);
        }
        for s in [0.1, 0.2, 0.3] {
            assert_eq!(chain.value(s), 5.0);
            assert_eq!(chain.slope(s), 0.0);
        }
        for s in [0.4, 1.0, 100.0] {
            assert_eq!(chain.value(s), 2.0);
            assert_eq!(chain.slope(s), 0.0);
        }
    }
}
