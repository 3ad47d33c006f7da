//! The limit model of a surface crossing: the jump characteristic, its
//! terminal points on the energy borders, closed-form oracles for
//! constant-potential steps, and the two competing prolongation rules.

use crate::dynamics::{surface_speed, ArcKind, IntegratorConfig, ParamKind, SampledArc, Trajectory};
use crate::error::DishamError;
use crate::geometry::{
    momentum_split, normalize_surface, Covector, ExtendedPhasePoint, MetricSpace, PhaseHyperplane,
    Vector,
};
use crate::hamiltonian::{DiscontinuousPair, MollifiedHamiltonian, NaturalHamiltonian, SmoothHamiltonian};
use crate::{EPS_GRAZE, EPS_REGION, EPS_TRANSVERSAL};

/// Which side of the surface a state belongs to (sign of A).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Minus,
    Plus,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Minus => Side::Plus,
            Side::Plus => Side::Minus,
        }
    }
}

/// A validated state on the discontinuity surface about to transition:
/// on the surface, on the energy shell of the incoming side, and
/// approaching the surface transversally.
#[derive(Debug, Clone)]
pub struct ImpactState {
    pub point: ExtendedPhasePoint,
    pub side: Side,
}

impl ImpactState {
    pub fn new(
        pair: &DiscontinuousPair,
        point: ExtendedPhasePoint,
        side: Side,
    ) -> Result<Self, DishamError> {
        let a_val = pair.surface.eval_qp(&point.q, &point.p);
        if a_val.abs() > EPS_REGION {
            return Err(DishamError::InvalidState(format!(
                "impact point is off the surface: A = {a_val:e}"
            )));
        }
        let h_in = match side {
            Side::Minus => pair.minus.value(&point.q, &point.p),
            Side::Plus => pair.plus.value(&point.q, &point.p),
        };
        let defect = (point.e - h_in).abs();
        if defect > EPS_REGION * point.e.abs().max(1.0) {
            return Err(DishamError::InvalidState(format!(
                "impact energy is off the incoming shell by {defect:e}"
            )));
        }
        let h: &dyn SmoothHamiltonian = match side {
            Side::Minus => pair.minus.as_ref(),
            Side::Plus => pair.plus.as_ref(),
        };
        let speed = surface_speed(h, &pair.surface, &point.q, &point.p);
        let toward = match side {
            Side::Minus => speed,
            Side::Plus => -speed,
        };
        if toward < EPS_TRANSVERSAL {
            return Err(DishamError::GrazingContact {
                context: "incoming surface speed at the impact point",
                value: speed,
            });
        }
        Ok(Self { point, side })
    }
}

/// How the limit model resolves a surface crossing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionKind {
    Reflected,
    Transmitted,
    Grazing,
}

/// A resolved crossing: the terminal state, the characteristic parameter
/// at which it was reached, and the sampled jump arc.
#[derive(Debug, Clone)]
pub struct TransitionOutcome {
    pub kind: TransitionKind,
    pub terminal: ExtendedPhasePoint,
    pub s1: f64,
    pub jump_arc: SampledArc,
}

/// Which branch shell a decisive point lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecisiveBranch {
    Minus,
    Plus,
}

/// An admissible terminal point of the characteristic line through the
/// impact point, in the unsigned parameterization `(q0 + s a, p0 + s b)`.
#[derive(Debug, Clone)]
pub struct DecisivePoint {
    pub branch: DecisiveBranch,
    pub s: f64,
    pub point: ExtendedPhasePoint,
    /// True when the characteristic is tangent to the shell here.
    pub tangential: bool,
}

// ---------------------------------------------------------------------------
// Root scanning along the characteristic line
// ---------------------------------------------------------------------------

struct ScanRoot {
    s: f64,
    tangential: bool,
}

/// Finds the zeros of `f` on `[s_lo, s_hi]` by grid scanning with step
/// `h`: sign-change roots are bisected, and local minima of |f| that
/// reach (near) zero are reported as tangential roots.
fn scan_roots(
    f: &dyn Fn(f64) -> f64,
    s_lo: f64,
    s_hi: f64,
    h: f64,
    arm_tol: f64,
    graze_tol: f64,
) -> Vec<ScanRoot> {
    let steps = ((s_hi - s_lo) / h).ceil() as usize;
    let grid: Vec<(f64, f64)> = (0..=steps)
        .map(|k| {
            let s = (s_lo + k as f64 * h).min(s_hi);
            (s, f(s))
        })
        .collect();

    let mut roots: Vec<ScanRoot> = Vec::new();
    let mut armed: Option<f64> = None;
    for k in 0..grid.len() {
        let (s_k, f_k) = grid[k];
        match armed {
            None => {
                if f_k.abs() > arm_tol {
                    armed = Some(f_k.signum());
                }
            }
            Some(sign) => {
                if f_k == 0.0 || f_k.signum() != sign {
                    // Bisect on [s_{k-1}, s_k].
                    let (mut lo, _) = grid[k - 1];
                    let mut hi = s_k;
                    for _ in 0..200 {
                        let mid = 0.5 * (lo + hi);
                        let v = f(mid);
                        if v == 0.0 {
                            lo = mid;
                            hi = mid;
                            break;
                        }
                        if v.signum() == sign {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                        if hi - lo < 1e-13 * hi.abs().max(1.0) {
                            break;
                        }
                    }
                    roots.push(ScanRoot {
                        s: 0.5 * (lo + hi),
                        tangential: false,
                    });
                    armed = Some(-sign);
                }
            }
        }
        // Tangency: strict local minimum of |f| that dips toward zero
        // without a sign change around it.
        if k >= 2 {
            let (_, f_a) = grid[k - 2];
            let (s_b, f_b) = grid[k - 1];
            if f_b.abs() < f_a.abs()
                && f_b.abs() < f_k.abs()
                && f_a.signum() == f_k.signum()
                && f_b.signum() == f_a.signum()
                && f_b.abs() > 0.0
            {
                // Ternary search for the minimum of |f|.
                let (mut lo, mut hi) = (grid[k - 2].0, s_k);
                for _ in 0..200 {
                    let m1 = lo + (hi - lo) / 3.0;
                    let m2 = hi - (hi - lo) / 3.0;
                    if f(m1).abs() <= f(m2).abs() {
                        hi = m2;
                    } else {
                        lo = m1;
                    }
                }
                let s_min = 0.5 * (lo + hi);
                if f(s_min).abs() <= graze_tol {
                    roots.push(ScanRoot {
                        s: s_min,
                        tangential: true,
                    });
                }
                let _ = s_b;
            }
        }
    }
    roots.sort_by(|a, b| a.s.total_cmp(&b.s));
    // A pair of crossings much closer than the scan step is a tangency
    // that roundoff in f split into two roots: merge it back.
    let merge_tol = 1e-4 * h;
    let mut merged: Vec<ScanRoot> = Vec::new();
    for r in roots {
        match merged.last_mut() {
            Some(prev) if (r.s - prev.s).abs() < merge_tol => {
                prev.s = 0.5 * (prev.s + r.s);
                prev.tangential = true;
            }
            _ => merged.push(r),
        }
    }
    merged
}

fn characteristic_scales(p0: &Covector) -> (f64, f64) {
    let p_scale = p0.norm_inf().max(1.0);
    let h_s = 0.01 * p_scale;
    let s_max = 10.0 * (1.0 + p0.norm_inf());
    (h_s, s_max)
}

// ---------------------------------------------------------------------------
// The jump arc
// ---------------------------------------------------------------------------

/// Follows the jump characteristic from the impact point until it first
/// meets an energy border, classifying the crossing as reflection,
/// transmission or grazing. `s_max` bounds the characteristic parameter;
/// pass a non-positive value to use the default `10 (1 + |p0|)`.
pub fn jump_arc(
    pair: &DiscontinuousPair,
    impact: &ImpactState,
    s_max: f64,
) -> Result<TransitionOutcome, DishamError> {
    let x0 = &impact.point;
    let e0 = x0.e;
    let e_scale = e0.abs().max(1.0);
    let hm0 = pair.minus.value(&x0.q, &x0.p);
    let hp0 = pair.plus.value(&x0.q, &x0.p);
    let gap = hp0 - hm0;
    if gap.abs() <= EPS_REGION * e_scale {
        return Err(DishamError::DegenerateDiscontinuity);
    }
    let sigma = gap.signum();

    let (h_s, s_max_default) = characteristic_scales(&x0.p);
    let s_max = if s_max > 0.0 { s_max } else { s_max_default };

    let point_at = |s: f64| -> (Vector, Covector) {
        (
            &x0.q + &pair.surface.a.scale(s * sigma),
            &x0.p - &pair.surface.b.scale(s * sigma),
        )
    };
    let fm = |s: f64| {
        let (q, p) = point_at(s);
        pair.minus.value(&q, &p) - e0
    };
    let fp = |s: f64| {
        let (q, p) = point_at(s);
        pair.plus.value(&q, &p) - e0
    };

    let arm_tol = EPS_REGION * e_scale;
    let graze_tol = EPS_GRAZE * e_scale;
    let impact_tol = 1e-9 * (1.0 + h_s);

    let mut candidates: Vec<(ScanRoot, DecisiveBranch)> = Vec::new();
    for r in scan_roots(&fm, 0.0, s_max, h_s, arm_tol, graze_tol) {
        if r.s > impact_tol {
            candidates.push((r, DecisiveBranch::Minus));
        }
    }
    for r in scan_roots(&fp, 0.0, s_max, h_s, arm_tol, graze_tol) {
        if r.s > impact_tol {
            candidates.push((r, DecisiveBranch::Plus));
        }
    }
    candidates.sort_by(|a, b| a.0.s.total_cmp(&b.0.s));
    let (root, branch) = match candidates.into_iter().next() {
        Some(c) => c,
        None => return Err(DishamError::UnboundedCharacteristic { s_max }),
    };
    let s1 = root.s;

    // The characteristic must stay inside the energy band up to s1.
    let band_tol = 1e-7 * e_scale;
    let mut s = h_s;
    while s < s1 - h_s {
        if sigma * fm(s) > band_tol || sigma * fp(s) < -band_tol {
            return Err(DishamError::BandViolation { s });
        }
        s += h_s;
    }

    let (q1, p1) = point_at(s1);
    let exit_h: &dyn SmoothHamiltonian = match branch {
        DecisiveBranch::Minus => pair.minus.as_ref(),
        DecisiveBranch::Plus => pair.plus.as_ref(),
    };
    let exit_speed = surface_speed(exit_h, &pair.surface, &q1, &p1);
    let kind = if root.tangential || exit_speed.abs() < EPS_TRANSVERSAL {
        TransitionKind::Grazing
    } else {
        // The exit must move into the exit branch's region.
        let outward = match branch {
            DecisiveBranch::Minus => -exit_speed,
            DecisiveBranch::Plus => exit_speed,
        };
        if outward <= 0.0 {
            return Err(DishamError::TransitionInconsistent(format!(
                "first border point at s = {s1} does not exit toward its own region"
            )));
        }
        let exits_incoming = matches!(
            (branch, impact.side),
            (DecisiveBranch::Minus, Side::Minus) | (DecisiveBranch::Plus, Side::Plus)
        );
        if exits_incoming {
            TransitionKind::Reflected
        } else {
            TransitionKind::Transmitted
        }
    };

    // Terminal energy consistency.
    let e1 = exit_h.value(&q1, &p1);
    if (e1 - e0).abs() > 1e-8 * e_scale {
        return Err(DishamError::TransitionInconsistent(format!(
            "terminal point is off-shell by {:e}",
            e1 - e0
        )));
    }

    let terminal = ExtendedPhasePoint::new(q1, p1, x0.t, e0);
    let jump_arc = sample_segment(x0, &point_at, s1, h_s);
    Ok(TransitionOutcome {
        kind,
        terminal,
        s1,
        jump_arc,
    })
}

/// Samples the characteristic segment `[0, s1]` as a jump arc.
fn sample_segment(
    x0: &ExtendedPhasePoint,
    point_at: &dyn Fn(f64) -> (Vector, Covector),
    s1: f64,
    h_s: f64,
) -> SampledArc {
    let mut samples = Vec::new();
    let mut s = 0.0;
    while s < s1 {
        let (q, p) = point_at(s);
        samples.push((s, ExtendedPhasePoint::new(q, p, x0.t, x0.e)));
        s += h_s;
    }
    let (q, p) = point_at(s1);
    samples.push((s1, ExtendedPhasePoint::new(q, p, x0.t, x0.e)));
    SampledArc {
        kind: ArcKind::Jump,
        parameterization: ParamKind::SParam,
        samples,
    }
}

// ---------------------------------------------------------------------------
// Closed forms for constant-potential steps
// ---------------------------------------------------------------------------

/// Closed-form resolution of one constant step, reduced to the normal
/// momentum coefficient.
#[derive(Debug, Clone, Copy)]
pub struct StepOutcome {
    pub kind: TransitionKind,
    /// Characteristic parameter consumed by the step.
    pub s1: f64,
    /// Normal momentum coefficient after the step.
    pub nu1: f64,
}

/// Resolves a single step `u_minus -> u_plus` hit with incoming normal
/// momentum `nu > 0` by the closed-form border intersection.
pub fn step_closed_form(
    nu: f64,
    mass: f64,
    u_minus: f64,
    u_plus: f64,
) -> Result<StepOutcome, DishamError> {
    if !(nu > 0.0) {
        return Err(DishamError::InvalidArgument(format!(
            "incoming normal momentum must be positive, got {nu}"
        )));
    }
    if !(mass > 0.0) {
        return Err(DishamError::InvalidArgument(format!(
            "mass must be positive, got {mass}"
        )));
    }
    let du = u_plus - u_minus;
    let disc = nu * nu - 2.0 * mass * du;
    if disc.abs() <= EPS_GRAZE * (nu * nu).max(1.0) {
        return Ok(StepOutcome {
            kind: TransitionKind::Grazing,
            s1: nu,
            nu1: 0.0,
        });
    }
    if disc < 0.0 {
        return Ok(StepOutcome {
            kind: TransitionKind::Reflected,
            s1: 2.0 * nu,
            nu1: -nu,
        });
    }
    let nu1 = disc.sqrt();
    let s1 = (nu - nu1) * if du >= 0.0 { 1.0 } else { -1.0 };
    Ok(StepOutcome {
        kind: TransitionKind::Transmitted,
        s1,
        nu1,
    })
}

/// Outcome of a cascade of constant steps resolved one after another.
#[derive(Debug, Clone)]
pub struct CascadeOutcome {
    pub kind: TransitionKind,
    /// Final normal momentum coefficient (signed; negative = reflected).
    pub nu_final: f64,
    pub stages: Vec<StepOutcome>,
}

/// Resolves a chain of constant levels one step at a time. A reflection
/// at any stage sends the trajectory back through the earlier steps,
/// recovering the reversed incoming momentum.
pub fn cascade(nu0: f64, mass: f64, levels: &[f64]) -> Result<CascadeOutcome, DishamError> {
    if levels.len() < 2 {
        return Err(DishamError::InvalidArgument(format!(
            "cascade needs at least two levels, got {}",
            levels.len()
        )));
    }
    let mut stages = Vec::new();
    let mut nu = nu0;
    for w in levels.windows(2) {
        let out = step_closed_form(nu, mass, w[0], w[1])?;
        stages.push(out);
        match out.kind {
            TransitionKind::Transmitted => nu = out.nu1,
            TransitionKind::Reflected => {
                return Ok(CascadeOutcome {
                    kind: TransitionKind::Reflected,
                    nu_final: -nu0,
                    stages,
                });
            }
            TransitionKind::Grazing => {
                return Ok(CascadeOutcome {
                    kind: TransitionKind::Grazing,
                    nu_final: 0.0,
                    stages,
                });
            }
        }
    }
    Ok(CascadeOutcome {
        kind: TransitionKind::Transmitted,
        nu_final: nu,
        stages,
    })
}

/// A one-step constant-potential system across an axis-aligned surface:
/// the workhorse fixture for comparing the mollified and limit models.
#[derive(Clone)]
pub struct ConstantStepSystem {
    pub space: MetricSpace,
    pub mass: f64,
    pub u_minus: f64,
    pub u_plus: f64,
    pub surface: PhaseHyperplane,
}

impl ConstantStepSystem {
    /// Builds the system in dimension `dim` with the surface at the zero
    /// set of the first coordinate.
    pub fn axis(dim: usize, mass: f64, u_minus: f64, u_plus: f64) -> Result<Self, DishamError> {
        let space = MetricSpace::euclidean(dim);
        let mut b = vec![0.0; dim];
        b[0] = 1.0;
        let surface = normalize_surface(
            Vector::zeros(dim),
            Covector::zeros(dim),
            Vector::zeros(dim),
            Covector::from_slice(&b),
            &space,
        )?;
        if !(mass > 0.0) {
            return Err(DishamError::InvalidArgument(format!(
                "mass must be positive, got {mass}"
            )));
        }
        Ok(Self {
            space,
            mass,
            u_minus,
            u_plus,
            surface,
        })
    }

    pub fn pair(&self) -> DiscontinuousPair {
        DiscontinuousPair {
            minus: std::sync::Arc::new(NaturalHamiltonian::constant(
                self.space.clone(),
                self.mass,
                self.u_minus,
            )),
            plus: std::sync::Arc::new(NaturalHamiltonian::constant(
                self.space.clone(),
                self.mass,
                self.u_plus,
            )),
            surface: self.surface.clone(),
            space: self.space.clone(),
        }
    }

    pub fn mollified(&self, delta: f64) -> Result<MollifiedHamiltonian, DishamError> {
        MollifiedHamiltonian::new(self.pair(), delta)
    }

    /// An impact state on the surface with momentum `p` at time `t`. The
    /// incoming side is inferred from the sign of the normal momentum.
    pub fn impact(&self, p: Covector, t: f64) -> Result<ImpactState, DishamError> {
        let (nu, _) = momentum_split(&p, &self.surface.b, &self.space)?;
        let side = if nu >= 0.0 { Side::Minus } else { Side::Plus };
        let q = self.surface.q0.clone();
        let u_in = match side {
            Side::Minus => self.u_minus,
            Side::Plus => self.u_plus,
        };
        let e = self.space.kinetic(&p, self.mass) + u_in;
        ImpactState::new(&self.pair(), ExtendedPhasePoint::new(q, p, t, e), side)
    }
}

// ---------------------------------------------------------------------------
// Decisive points and prolongation rules
// ---------------------------------------------------------------------------

/// All admissible terminal points of the characteristic line through
/// the impact point: intersections with either branch shell whose exit
/// velocity points into (or is tangent to) that branch's own region.
/// The impact point itself is excluded.
pub fn decisive_points(
    pair: &DiscontinuousPair,
    impact: &ImpactState,
    s_max: f64,
) -> Result<Vec<DecisivePoint>, DishamError> {
    let x0 = &impact.point;
    let e0 = x0.e;
    let e_scale = e0.abs().max(1.0);
    let (h_s, s_max_default) = characteristic_scales(&x0.p);
    let s_max = if s_max > 0.0 { s_max } else { s_max_default };

    let point_at = |s: f64| -> (Vector, Covector) {
        (
            &x0.q + &pair.surface.a.scale(s),
            &x0.p + &pair.surface.b.scale(s),
        )
    };
    let arm_tol = EPS_REGION * e_scale;
    let graze_tol = EPS_GRAZE * e_scale;

    let mut out = Vec::new();
    for branch in [DecisiveBranch::Minus, DecisiveBranch::Plus] {
        let h: &dyn SmoothHamiltonian = match branch {
            DecisiveBranch::Minus => pair.minus.as_ref(),
            DecisiveBranch::Plus => pair.plus.as_ref(),
        };
        let f = |s: f64| {
            let (q, p) = point_at(s);
            h.value(&q, &p) - e0
        };
        // The impact point itself (s = 0) is always a root of the
        // incoming branch; the direction filter below rejects it there,
        // while on the other branch (levels agreeing) it is a genuine
        // transparent continuation.
        for r in scan_roots(&f, -s_max, s_max, h_s, arm_tol, graze_tol) {
            let (q, p) = point_at(r.s);
            let speed = surface_speed(h, &pair.surface, &q, &p);
            let tangential = r.tangential || speed.abs() < EPS_TRANSVERSAL;
            let admissible = tangential
                || match branch {
                    DecisiveBranch::Minus => speed < 0.0,
                    DecisiveBranch::Plus => speed > 0.0,
                };
            if admissible {
                out.push(DecisivePoint {
                    branch,
                    s: r.s,
                    point: ExtendedPhasePoint::new(q, p, x0.t, e0),
                    tangential,
                });
            }
        }
    }
    out.sort_by(|a, b| a.s.total_cmp(&b.s));
    Ok(out)
}

/// The permissive prolongation rule: every decisive point yields a
/// prolongation, so a single impact may split into several outcomes (and
/// yields a spurious reflection even when the two levels agree).
pub fn prolong_vinogradov(
    pair: &DiscontinuousPair,
    impact: &ImpactState,
    s_max: f64,
) -> Result<Vec<TransitionOutcome>, DishamError> {
    let x0 = &impact.point;
    let points = decisive_points(pair, impact, s_max)?;
    let (h_s, _) = characteristic_scales(&x0.p);
    let mut out = Vec::new();
    for d in points {
        let kind = if d.tangential {
            TransitionKind::Grazing
        } else {
            let exits_incoming = matches!(
                (d.branch, impact.side),
                (DecisiveBranch::Minus, Side::Minus) | (DecisiveBranch::Plus, Side::Plus)
            );
            if exits_incoming {
                TransitionKind::Reflected
            } else {
                TransitionKind::Transmitted
            }
        };
        // Reparameterize the segment by nonnegative arc parameter.
        let s_dec = d.s;
        let dir = s_dec.signum();
        let point_at = |s: f64| -> (Vector, Covector) {
            (
                &x0.q + &pair.surface.a.scale(s * dir),
                &x0.p + &pair.surface.b.scale(s * dir),
            )
        };
        let arc = sample_segment(x0, &point_at, s_dec.abs(), h_s);
        out.push(TransitionOutcome {
            kind,
            terminal: d.point,
            s1: s_dec.abs(),
            jump_arc: arc,
        });
    }
    Ok(out)
}

/// The modified prolongation rule: exactly one outcome, selected by the
/// first border point of the jump characteristic. When the two
/// Hamiltonians agree at the impact point the crossing is transparent.
pub fn prolong_modified(
    pair: &DiscontinuousPair,
    impact: &ImpactState,
    s_max: f64,
) -> Result<TransitionOutcome, DishamError> {
    let x0 = &impact.point;
    let gap = pair.plus.value(&x0.q, &x0.p) - pair.minus.value(&x0.q, &x0.p);
    if gap.abs() <= EPS_REGION * x0.e.abs().max(1.0) {
        // Transparent crossing: a zero-length jump.
        let arc = SampledArc {
            kind: ArcKind::Jump,
            parameterization: ParamKind::SParam,
            samples: vec![(0.0, x0.clone())],
        };
        return Ok(TransitionOutcome {
            kind: TransitionKind::Transmitted,
            terminal: x0.clone(),
            s1: 0.0,
            jump_arc: arc,
        });
    }
    jump_arc(pair, impact, s_max)
}

/// Simulates the limit model: smooth flow on either side of the surface,
/// with crossings resolved by the modified prolongation rule.
pub fn simulate_limit_scenario(
    pair: &DiscontinuousPair,
    x0: &ExtendedPhasePoint,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, DishamError> {
    cfg.validate()?;
    let a0 = pair.surface.eval_qp(&x0.q, &x0.p);
    if a0.abs() <= EPS_REGION {
        return Err(DishamError::InvalidState(
            "initial state lies on the discontinuity surface".into(),
        ));
    }
    let mut side = if a0 < 0.0 { Side::Minus } else { Side::Plus };
    let mut x = x0.clone();
    let mut trajectory = Trajectory::default();
    let interrupted = |source: DishamError, partial: Trajectory| DishamError::Interrupted {
        source: Box::new(source),
        partial,
    };

    // Validate the initial shell.
    let h0 = match side {
        Side::Minus => pair.minus.value(&x.q, &x.p),
        Side::Plus => pair.plus.value(&x.q, &x.p),
    };
    if (x.e - h0).abs() > EPS_REGION * x.e.abs().max(1.0) {
        return Err(DishamError::InvalidState(format!(
            "initial energy is off-shell by {:e}",
            x.e - h0
        )));
    }

    for _ in 0..1000 {
        if x.t >= t_end - 1e-12 * t_end.abs().max(1.0) {
            break;
        }
        let h: &dyn SmoothHamiltonian = match side {
            Side::Minus => pair.minus.as_ref(),
            Side::Plus => pair.plus.as_ref(),
        };
        let kind = match side {
            Side::Minus => ArcKind::SmoothMinus,
            Side::Plus => ArcKind::SmoothPlus,
        };
        match crate::dynamics::crossing_to_surface(h, &x, &pair.surface, 0.0, t_end, cfg, kind, false)
        {
            Ok((Some(event), arc)) => {
                trajectory.arcs.push(arc);
                let speed = surface_speed(h, &pair.surface, &event.q, &event.p);
                if speed.abs() < EPS_TRANSVERSAL {
                    return Err(interrupted(
                        DishamError::GrazingContact {
                            context: "surface speed dA/dt at crossing",
                            value: speed,
                        },
                        trajectory,
                    ));
                }
                let impact = match ImpactState::new(pair, event, side) {
                    Ok(i) => i,
                    Err(e) => return Err(interrupted(e, trajectory)),
                };
                let outcome = match prolong_modified(pair, &impact, 0.0) {
                    Ok(o) => o,
                    Err(e) => return Err(interrupted(e, trajectory)),
                };
                trajectory.arcs.push(outcome.jump_arc.clone());
                match outcome.kind {
                    TransitionKind::Reflected => {}
                    TransitionKind::Transmitted => side = side.other(),
                    TransitionKind::Grazing => {
                        return Err(interrupted(
                            DishamError::GrazingContact {
                                context: "jump characteristic tangent to the exit border",
                                value: outcome.s1,
                            },
                            trajectory,
                        ));
                    }
                }
                x = outcome.terminal;
            }
            Ok((None, arc)) => {
                trajectory.arcs.push(arc);
                break;
            }
            Err(e) => return Err(interrupted(e, trajectory)),
        }
    }

    let mismatch = trajectory.max_junction_mismatch();
    if mismatch > 1e-9 {
        return Err(DishamError::TransitionInconsistent(format!(
            "trajectory junction mismatch {mismatch:e} exceeds 1e-9"
        )));
    }
    Ok(trajectory)
}
