//! Simulation and verification library for Hamiltonian trajectories that
//! cross a hypersurface where the Hamiltonian itself is discontinuous.
//!
//! The library offers two complementary models of the crossing and the
//! machinery to compare them:
//!
//! * a **mollified model** — the two Hamiltonians are blended across a
//!   finite layer of width controlled by `delta`, producing an ordinary
//!   smooth flow that can be integrated numerically; and
//! * a **limit model** — the layer is collapsed; the trajectory follows a
//!   jump characteristic along the surface normal, with reflection or
//!   transmission decided by where the characteristic meets an energy
//!   border.
//!
//! Supporting modules provide the mollifier family used for the blending,
//! the phase-space geometry (vectors vs covectors, the metric pairing and
//! the discontinuity hyperplane), the homogeneous formulation on the
//! extended phase space, an adaptive integrator with event localization,
//! and closed-form oracles for step potentials.

pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod hamiltonian;
pub mod homogeneous;
pub mod mollifier;
pub mod transition;

/// Region classification tolerance on values of A and on energy defects.
pub const EPS_REGION: f64 = 1e-9;
/// Threshold below which a surface-crossing speed counts as tangential.
pub const EPS_TRANSVERSAL: f64 = 1e-8;
/// Threshold for declaring a grazing contact of the jump characteristic.
pub const EPS_GRAZE: f64 = 1e-9;
/// Stiffness threshold on |K| that switches the adaptive layer field to
/// the renormalized parameterization.
pub const K_THRESHOLD: f64 = 1e3;

pub use dynamics::{
    ArcKind, ExitSide, IntegratorConfig, LayerFieldMode, ParamKind, SampledArc, Trajectory,
};
pub use error::DishamError;
pub use geometry::{
    momentum_split, normalize_surface, Covector, ExtendedPhasePoint, MetricSpace, PhaseHyperplane,
    PhasePoint, Vector,
};
pub use hamiltonian::{
    ConstantPotential, DiscontinuousPair, HarmonicPotential, MollifiedHamiltonian,
    NaturalHamiltonian, PlanarStepChain, Potential, SmoothHamiltonian, StepChainPotential,
};
pub use homogeneous::{
    CharacteristicDirection, LevelFunction, LevelGradient, LimitRegionLabel, OnShell,
};
pub use mollifier::StepProfile;
pub use transition::{
    cascade, decisive_points, jump_arc, prolong_modified, prolong_vinogradov,
    simulate_limit_scenario, step_closed_form, CascadeOutcome, ConstantStepSystem, DecisiveBranch,
    DecisivePoint, ImpactState, Side, StepOutcome, TransitionKind, TransitionOutcome,
};
pub use dynamics::{
    detect_crossing, integrate_layer, integrate_layer_mode, integrate_smooth,
    simulate_smooth_scenario,
};
