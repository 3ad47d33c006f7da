//! Numerical integration: adaptive Runge-Kutta flows with event
//! detection of hypersurface crossings, and integration of the mollified
//! model through the transition layer.

use std::cell::Cell;

use nalgebra::DVector;

use crate::error::DishamError;
use crate::geometry::{Covector, ExtendedPhasePoint, PhaseHyperplane, Vector};
use crate::hamiltonian::{MollifiedHamiltonian, SmoothHamiltonian};
use crate::{EPS_REGION, EPS_TRANSVERSAL, K_THRESHOLD};

/// Tolerances and budgets for the adaptive integrator.
#[derive(Debug, Clone)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    /// Tolerance on the event function at event localization.
    pub event_tol: f64,
    /// Parameter-span budget for a single integration.
    pub max_time: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-11,
            max_step: 0.1,
            event_tol: 1e-12,
            max_time: 1e3,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), DishamError> {
        let ok = self.rel_tol > 0.0
            && self.abs_tol > 0.0
            && self.max_step > 0.0
            && self.event_tol > 0.0
            && self.max_time > 0.0
            && self.event_tol <= self.abs_tol;
        if !ok {
            return Err(DishamError::InvalidArgument(
                "integrator config requires positive tolerances with event_tol <= abs_tol".into(),
            ));
        }
        Ok(())
    }
}

/// What a sampled arc represents within a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArcKind {
    SmoothMinus,
    SmoothPlus,
    Layer,
    Jump,
}

/// How the arc samples are parameterized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Parameter is the time coordinate of each state.
    Time,
    /// Arclength-like parameter of a renormalized or jump arc.
    SParam,
}

/// One integrated (or analytic) arc, sampled at accepted steps.
#[derive(Debug, Clone)]
pub struct SampledArc {
    pub kind: ArcKind,
    pub parameterization: ParamKind,
    pub samples: Vec<(f64, ExtendedPhasePoint)>,
}

impl SampledArc {
    pub fn first(&self) -> &ExtendedPhasePoint {
        &self.samples.first().expect("arc has samples").1
    }

    pub fn last(&self) -> &ExtendedPhasePoint {
        &self.samples.last().expect("arc has samples").1
    }
}

/// Ordered list of typed arcs forming one trajectory in extended phase space.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub arcs: Vec<SampledArc>,
}

impl Trajectory {
    pub fn final_state(&self) -> Option<&ExtendedPhasePoint> {
        self.arcs.last().map(|a| a.last())
    }

    pub fn initial_state(&self) -> Option<&ExtendedPhasePoint> {
        self.arcs.first().map(|a| a.first())
    }

    /// Largest junction mismatch between consecutive arcs, in the max norm
    /// over (q, p, t, e).
    pub fn max_junction_mismatch(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for w in self.arcs.windows(2) {
            let a = w[0].last();
            let b = w[1].first();
            let gap = (&a.q - &b.q)
                .norm_inf()
                .max((&a.p - &b.p).norm_inf())
                .max((a.t - b.t).abs())
                .max((a.e - b.e).abs());
            worst = worst.max(gap);
        }
        worst
    }
}

// ---------------------------------------------------------------------------
// Dormand-Prince 5(4) core
// ---------------------------------------------------------------------------

const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];

const ERR: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct Stepper<'a, F: Fn(&DVector<f64>) -> DVector<f64>> {
    rhs: F,
    cfg: &'a IntegratorConfig,
    /// Previous error norm for the PI controller.
    err_prev: f64,
}

impl<'a, F: Fn(&DVector<f64>) -> DVector<f64>> Stepper<'a, F> {
    fn new(rhs: F, cfg: &'a IntegratorConfig) -> Self {
        Self {
            rhs,
            cfg,
            err_prev: 1.0,
        }
    }

    /// One embedded step of size `h` from `(s, y)` with derivative `f0`.
    /// Returns the 5th-order solution, its derivative (FSAL), and the
    /// scaled error norm.
    fn try_step(&self, y: &DVector<f64>, f0: &DVector<f64>, h: f64) -> (DVector<f64>, DVector<f64>, f64) {
        let mut k: Vec<DVector<f64>> = Vec::with_capacity(7);
        k.push(f0.clone());
        for stage in 0..6 {
            let mut yi = y.clone();
            for (j, kj) in k.iter().enumerate() {
                let c = A[stage][j];
                if c != 0.0 {
                    yi.axpy(h * c, kj, 1.0);
                }
            }
            k.push((self.rhs)(&yi));
        }
        // Stage 6 argument is already the 5th-order solution (FSAL).
        let mut y_new = y.clone();
        for (j, kj) in k.iter().take(6).enumerate() {
            let c = A[5][j];
            if c != 0.0 {
                y_new.axpy(h * c, kj, 1.0);
            }
        }
        let f_new = k[6].clone();
        let mut err_sq = 0.0;
        let n = y.len();
        for i in 0..n {
            let mut e = 0.0;
            for (j, kj) in k.iter().enumerate() {
                e += ERR[j] * kj[i];
            }
            e *= h;
            let scale = self.cfg.abs_tol + self.cfg.rel_tol * y[i].abs().max(y_new[i].abs());
            err_sq += (e / scale) * (e / scale);
        }
        let err = (err_sq / n as f64).sqrt();
        (y_new, f_new, err)
    }

    /// Advance from `(s, y)` by at most `h_max`, adapting the step size.
    /// Returns the accepted step `(h, y_new, f_new)`.
    fn step(
        &mut self,
        s: f64,
        y: &DVector<f64>,
        f0: &DVector<f64>,
        h_init: f64,
        h_cap: f64,
    ) -> Result<(f64, DVector<f64>, DVector<f64>), DishamError> {
        let mut h = h_init.min(h_cap).min(self.cfg.max_step);
        for _ in 0..200 {
            if h < 1e-14 * s.abs().max(1.0) {
                return Err(DishamError::StepSizeUnderflow { param: s });
            }
            let (y_new, f_new, err) = self.try_step(y, f0, h);
            if err <= 1.0 || h <= 1e-14 * s.abs().max(1.0) {
                self.err_prev = err.max(1e-10);
                return Ok((h, y_new, f_new));
            }
            let factor = (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            h *= factor;
        }
        Err(DishamError::StepSizeUnderflow { param: s })
    }

    /// PI step-size proposal after an accepted step of size `h` with error `err`.
    fn propose(&self, h: f64, err: f64) -> f64 {
        let err = err.max(1e-10);
        let factor = (0.9 * err.powf(-0.7 / 5.0) * self.err_prev.powf(0.4 / 5.0)).clamp(0.2, 5.0);
        (h * factor).min(self.cfg.max_step)
    }

    /// Error-controlled integration across a fixed span, discarding samples.
    fn run_span(&mut self, y0: &DVector<f64>, span: f64) -> Result<DVector<f64>, DishamError> {
        let mut y = y0.clone();
        let mut f = (self.rhs)(&y);
        let mut s = 0.0;
        let mut h = span.min(self.cfg.max_step);
        while s < span {
            let cap = span - s;
            let (h_acc, y_new, f_new) = self.step(s, &y, &f, h, cap)?;
            let (_, _, err) = self.try_step(&y, &f, h_acc);
            h = self.propose(h_acc, err);
            y = y_new;
            f = f_new;
            s += h_acc;
        }
        Ok(y)
    }
}

// ---------------------------------------------------------------------------
// Driver with events
// ---------------------------------------------------------------------------

enum DriveOutcome {
    /// Reached the end of the requested span.
    Completed,
    /// An event function crossed zero; `index` identifies which one.
    Event { index: usize },
}

struct DriveResult {
    samples: Vec<(f64, DVector<f64>)>,
    outcome: DriveOutcome,
}

/// Integrate from `(s0, y0)` to `s_end`, stopping early when any event
/// function crosses zero. Events arm once their magnitude exceeds
/// `event_tol`, so starting exactly on an event surface is fine.
fn drive<F>(
    rhs: F,
    s0: f64,
    y0: DVector<f64>,
    s_end: f64,
    cfg: &IntegratorConfig,
    events: &[&dyn Fn(&DVector<f64>) -> f64],
    monitor: Option<(&dyn Fn(&DVector<f64>) -> f64, f64)>,
) -> Result<DriveResult, DishamError>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + Copy,
{
    let mut stepper = Stepper::new(rhs, cfg);
    let mut samples = vec![(s0, y0.clone())];
    let mut s = s0;
    let mut y = y0;
    let mut f = rhs(&y);
    let mut h = cfg.max_step.min((s_end - s0).abs().max(1e-6));

    let mut armed: Vec<Option<f64>> = events
        .iter()
        .map(|g| {
            let v = g(&samples[0].1);
            (v.abs() > cfg.event_tol).then(|| v.signum())
        })
        .collect();

    while s < s_end - 1e-14 * s_end.abs().max(1.0) {
        let cap = s_end - s;
        // A step may be error-accurate yet skip structure the monitored
        // quantity must resolve (a thin layer crossed in one stride):
        // halve the step until its change per step is within bounds.
        let mut h_try = h;
        let (h_acc, y_new, f_new) = loop {
            let (h_acc, y_new, f_new) = stepper.step(s, &y, &f, h_try, cap)?;
            if let Some((g, limit)) = monitor {
                if (g(&y_new) - g(&y)).abs() > limit && h_acc > 1e-12 {
                    h_try = h_acc / 2.0;
                    continue;
                }
            }
            break (h_acc, y_new, f_new);
        };
        let (_, _, err) = stepper.try_step(&y, &f, h_acc);

        // Event scan over the accepted step.
        let mut hit: Option<(usize, f64)> = None;
        for (i, g) in events.iter().enumerate() {
            let v = g(&y_new);
            match armed[i] {
                None => {
                    if v.abs() > cfg.event_tol {
                        armed[i] = Some(v.signum());
                    }
                }
                Some(sign) => {
                    if v == 0.0 || v.signum() != sign {
                        hit = Some((i, sign));
                        break;
                    }
                }
            }
        }

        if let Some((index, sign_a)) = hit {
            let g = events[index];
            // Bisect on the fraction of the accepted step, evaluating the
            // state by error-controlled re-integration from the step start.
            let mut lo = 0.0_f64;
            let mut hi = 1.0_f64;
            let mut y_ev = y_new.clone();
            for _ in 0..120 {
                let mid = 0.5 * (lo + hi);
                let mut probe = Stepper::new(rhs, cfg);
                let y_mid = probe.run_span(&y, mid * h_acc)?;
                let v = g(&y_mid);
                if v.abs() <= cfg.event_tol {
                    y_ev = y_mid;
                    hi = mid;
                    break;
                }
                if v.signum() == sign_a {
                    lo = mid;
                } else {
                    hi = mid;
                    y_ev = y_mid;
                }
            }
            let s_ev = s + hi * h_acc;
            samples.push((s_ev, y_ev));
            return Ok(DriveResult {
                samples,
                outcome: DriveOutcome::Event { index },
            });
        }

        h = stepper.propose(h_acc, err);
        s += h_acc;
        y = y_new;
        f = f_new;
        samples.push((s, y.clone()));
    }

    Ok(DriveResult {
        samples,
        outcome: DriveOutcome::Completed,
    })
}

// ---------------------------------------------------------------------------
// State packing
// ---------------------------------------------------------------------------

fn pack(x: &ExtendedPhasePoint) -> DVector<f64> {
    let n = x.q.dim();
    let mut y = DVector::zeros(2 * n + 2);
    y.rows_mut(0, n).copy_from(&x.q.0);
    y.rows_mut(n, n).copy_from(&x.p.0);
    y[2 * n] = x.t;
    y[2 * n + 1] = x.e;
    y
}

fn unpack(n: usize, y: &DVector<f64>) -> ExtendedPhasePoint {
    ExtendedPhasePoint {
        q: Vector(y.rows(0, n).into_owned()),
        p: Covector(y.rows(n, n).into_owned()),
        t: y[2 * n],
        e: y[2 * n + 1],
    }
}

fn arc_from_samples(
    n: usize,
    kind: ArcKind,
    parameterization: ParamKind,
    samples: &[(f64, DVector<f64>)],
) -> SampledArc {
    SampledArc {
        kind,
        parameterization,
        samples: samples
            .iter()
            .map(|(s, y)| {
                let x = unpack(n, y);
                // For time-parameterized arcs the parameter is the time
                // coordinate itself, bit for bit.
                let s = if parameterization == ParamKind::Time { x.t } else { *s };
                (s, x)
            })
            .collect(),
    }
}

/// Hamilton right-hand side in extended variables: `(dH/dp, -dH/dq, 1, 0)`.
fn hamilton_rhs(h: &dyn SmoothHamiltonian, n: usize, y: &DVector<f64>) -> DVector<f64> {
    let q = Vector(y.rows(0, n).into_owned());
    let p = Covector(y.rows(n, n).into_owned());
    let gq = h.grad_q(&q, &p);
    let gp = h.grad_p(&q, &p);
    let mut dy = DVector::zeros(2 * n + 2);
    dy.rows_mut(0, n).copy_from(&gp.0);
    dy.rows_mut(n, n).copy_from(&(-gq.0));
    dy[2 * n] = 1.0;
    dy[2 * n + 1] = 0.0;
    dy
}

/// Rate of change of A along the Hamilton flow: `<b, dH/dp> - <dH/dq, a>`.
pub fn surface_speed(h: &dyn SmoothHamiltonian, surface: &PhaseHyperplane, q: &Vector, p: &Covector) -> f64 {
    surface.b.dot(&h.grad_p(q, p)) - h.grad_q(q, p).dot(&surface.a)
}

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

/// Integrate a smooth Hamiltonian flow from `x0` until time `t_end`.
pub fn integrate_smooth(
    h: &dyn SmoothHamiltonian,
    x0: &ExtendedPhasePoint,
    t_end: f64,
    cfg: &IntegratorConfig,
    kind: ArcKind,
) -> Result<SampledArc, DishamError> {
    cfg.validate()?;
    if !(t_end > x0.t) {
        return Err(DishamError::InvalidArgument(format!(
            "t_end = {t_end} must exceed the initial time {}",
            x0.t
        )));
    }
    if t_end - x0.t > cfg.max_time {
        return Err(DishamError::InvalidArgument(format!(
            "integration span {} exceeds the max_time budget {}",
            t_end - x0.t,
            cfg.max_time
        )));
    }
    let e_defect = (x0.e - h.value(&x0.q, &x0.p)).abs();
    if e_defect > EPS_REGION * x0.e.abs().max(1.0) {
        return Err(DishamError::InvalidState(format!(
            "initial energy is off-shell by {e_defect:e}"
        )));
    }
    let n = x0.q.dim();
    let rhs = |y: &DVector<f64>| hamilton_rhs(h, n, y);
    let result = drive(&rhs, x0.t, pack(x0), t_end, cfg, &[], None)?;
    Ok(arc_from_samples(n, kind, ParamKind::Time, &result.samples))
}

/// Integrate until the surface function A reaches `target_a`, localizing
/// the event by bisection. Returns the event state and the arc up to it.
pub fn detect_crossing(
    h: &dyn SmoothHamiltonian,
    x0: &ExtendedPhasePoint,
    surface: &PhaseHyperplane,
    target_a: f64,
    cfg: &IntegratorConfig,
) -> Result<(ExtendedPhasePoint, SampledArc), DishamError> {
    cfg.validate()?;
    let n = x0.q.dim();
    let a0 = surface.eval_extended(x0);
    let kind = if a0 < target_a {
        ArcKind::SmoothMinus
    } else {
        ArcKind::SmoothPlus
    };
    match crossing_to_surface(h, x0, surface, target_a, x0.t + cfg.max_time, cfg, kind, true)? {
        (Some(event), arc) => Ok((event, arc)),
        (None, _) => Err(DishamError::NoCrossing {
            t_max: x0.t + cfg.max_time,
        }),
    }
    .and_then(|(event, arc)| {
        let speed = surface_speed(h, surface, &event.q, &event.p);
        if speed.abs() < EPS_TRANSVERSAL && arc.samples.len() > 1 {
            return Err(DishamError::GrazingContact {
                context: "surface speed dA/dt at crossing",
                value: speed,
            });
        }
        let _ = n;
        Ok((event, arc))
    })
}

/// Like [`detect_crossing`] but reports "no crossing before `t_cap`" as a
/// completed arc instead of an error. With `accept_initial` a start
/// already on the target surface returns immediately; without it the
/// search looks for the next crossing.
pub(crate) fn crossing_to_surface(
    h: &dyn SmoothHamiltonian,
    x0: &ExtendedPhasePoint,
    surface: &PhaseHyperplane,
    target_a: f64,
    t_cap: f64,
    cfg: &IntegratorConfig,
    kind: ArcKind,
    accept_initial: bool,
) -> Result<(Option<ExtendedPhasePoint>, SampledArc), DishamError> {
    let n = x0.q.dim();
    let a0 = surface.eval_extended(x0);
    if accept_initial && (a0 - target_a).abs() <= cfg.event_tol {
        let arc = SampledArc {
            kind,
            parameterization: ParamKind::Time,
            samples: vec![(x0.t, x0.clone())],
        };
        return Ok((Some(x0.clone()), arc));
    }
    let rhs = |y: &DVector<f64>| hamilton_rhs(h, n, y);
    let event = |y: &DVector<f64>| {
        let x = unpack(n, y);
        surface.eval_extended(&x) - target_a
    };
    let ev: &dyn Fn(&DVector<f64>) -> f64 = &event;
    let result = drive(&rhs, x0.t, pack(x0), t_cap, cfg, &[ev], None)?;
    let arc = arc_from_samples(n, kind, ParamKind::Time, &result.samples);
    match result.outcome {
        DriveOutcome::Event { .. } => {
            let event_state = arc.last().clone();
            Ok((Some(event_state), arc))
        }
        DriveOutcome::Completed => Ok((None, arc)),
    }
}

/// Which layer boundary an in-layer integration exited through.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitSide {
    Minus,
    Plus,
}

/// Field used while integrating through the transition layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerFieldMode {
    /// The extended Hamiltonian field itself.
    Extended,
    /// The renormalized field, rescaled by 1/max(|K|, 1).
    Renormalized,
    /// Extended field while |K| is moderate, renormalized once |K|
    /// exceeds the stiffness threshold.
    Adaptive,
}

/// Integrate the mollified model through the transition layer until the
/// value of A exits the layer interval on either side.
pub fn integrate_layer(
    hd: &MollifiedHamiltonian,
    x_entry: &ExtendedPhasePoint,
    cfg: &IntegratorConfig,
) -> Result<(ExtendedPhasePoint, SampledArc, ExitSide), DishamError> {
    integrate_layer_mode(hd, x_entry, cfg, LayerFieldMode::Adaptive)
}

/// [`integrate_layer`] with an explicit choice of layer field.
pub fn integrate_layer_mode(
    hd: &MollifiedHamiltonian,
    x_entry: &ExtendedPhasePoint,
    cfg: &IntegratorConfig,
    mode: LayerFieldMode,
) -> Result<(ExtendedPhasePoint, SampledArc, ExitSide), DishamError> {
    cfg.validate()?;
    let n = x_entry.q.dim();
    let surface = &hd.pair.surface;
    let lower = hd.layer.lower();
    let upper = hd.layer.upper();
    let a0 = surface.eval_extended(x_entry);
    if a0 < lower - 1e-9 || a0 > upper + 1e-9 {
        return Err(DishamError::InvalidState(format!(
            "entry point has A = {a0}, outside the layer [{lower}, {upper}]"
        )));
    }
    let e_defect = (x_entry.e - hd.value(&x_entry.q, &x_entry.p)).abs();
    if e_defect > 1e-7 * x_entry.e.abs().max(1.0) {
        return Err(DishamError::InvalidState(format!(
            "entry energy is off the mollified shell by {e_defect:e}"
        )));
    }

    let max_k_seen = Cell::new(0.0_f64);
    let rhs = |y: &DVector<f64>| {
        let q = Vector(y.rows(0, n).into_owned());
        let p = Covector(y.rows(n, n).into_owned());
        let (dq, dp, k) = hd.grad_with_k(&q, &p);
        if k.abs() > max_k_seen.get() {
            max_k_seen.set(k.abs());
        }
        let scale = match mode {
            LayerFieldMode::Extended => 1.0,
            LayerFieldMode::Renormalized => k.abs().max(1.0).recip(),
            LayerFieldMode::Adaptive => (K_THRESHOLD / k.abs().max(K_THRESHOLD)).min(1.0),
        };
        let mut dy = DVector::zeros(2 * n + 2);
        dy.rows_mut(0, n).copy_from(&(dp.0 * scale));
        dy.rows_mut(n, n).copy_from(&(dq.0 * -scale));
        dy[2 * n] = scale;
        dy[2 * n + 1] = 0.0;
        dy
    };
    let exit_minus = |y: &DVector<f64>| {
        let x = unpack(n, y);
        surface.eval_extended(&x) - lower
    };
    let exit_plus = |y: &DVector<f64>| {
        let x = unpack(n, y);
        surface.eval_extended(&x) - upper
    };
    let evs: [&dyn Fn(&DVector<f64>) -> f64; 2] = [&exit_minus, &exit_plus];

    // The field is flat outside the transition band, so a wide step can
    // sail across a thin layer with a tiny embedded error estimate while
    // skipping the barrier entirely. Bound the surface-function change per
    // step to a fraction of the layer width so the band is resolved.
    let a_progress = |y: &DVector<f64>| {
        let x = unpack(n, y);
        surface.eval_extended(&x)
    };
    let a_limit = 0.2 * (upper - lower);
    let s0 = x_entry.t;
    let result = drive(
        &rhs,
        s0,
        pack(x_entry),
        s0 + cfg.max_time,
        cfg,
        &evs,
        Some((&a_progress, a_limit)),
    )?;
    let param = match mode {
        LayerFieldMode::Extended => ParamKind::Time,
        LayerFieldMode::Renormalized => ParamKind::SParam,
        LayerFieldMode::Adaptive => {
            if max_k_seen.get() > K_THRESHOLD {
                ParamKind::SParam
            } else {
                ParamKind::Time
            }
        }
    };
    let arc = arc_from_samples(n, ArcKind::Layer, param, &result.samples);
    match result.outcome {
        DriveOutcome::Event { index } => {
            let exit_side = if index == 0 { ExitSide::Minus } else { ExitSide::Plus };
            let exit = arc.last().clone();
            Ok((exit, arc, exit_side))
        }
        DriveOutcome::Completed => Err(DishamError::TrappedInLayer {
            budget: cfg.max_time,
            partial: arc,
        }),
    }
}

/// Simulate the mollified model from a state outside the layer until
/// `t_end`, chaining smooth arcs, layer-boundary crossings and in-layer
/// integration into a typed trajectory.
pub fn simulate_smooth_scenario(
    hd: &MollifiedHamiltonian,
    x0: &ExtendedPhasePoint,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, DishamError> {
    cfg.validate()?;
    let surface = &hd.pair.surface;
    let lower = hd.layer.lower();
    let upper = hd.layer.upper();
    let a0 = surface.eval_extended(x0);
    if a0 >= lower && a0 <= upper {
        return Err(DishamError::InvalidState(format!(
            "initial state has A = {a0}, inside the layer [{lower}, {upper}]"
        )));
    }

    let mut trajectory = Trajectory::default();
    let mut x = x0.clone();
    let interrupted = |source: DishamError, partial: Trajectory| DishamError::Interrupted {
        source: Box::new(source),
        partial,
    };

    for _ in 0..10_000 {
        if x.t >= t_end - 1e-12 * t_end.abs().max(1.0) {
            break;
        }
        let a_val = surface.eval_qp(&x.q, &x.p);
        let inside = a_val > lower + cfg.event_tol && a_val < upper - cfg.event_tol;
        let at_boundary = (a_val - lower).abs() <= cfg.event_tol || (a_val - upper).abs() <= cfg.event_tol;
        let entering = at_boundary && {
            // Moving into the layer?
            let speed = surface_speed(hd, surface, &x.q, &x.p);
            ((a_val - lower).abs() <= cfg.event_tol && speed > 0.0)
                || ((a_val - upper).abs() <= cfg.event_tol && speed < 0.0)
        };
        if inside || entering {
            match integrate_layer(hd, &x, cfg) {
                Ok((exit, arc, _side)) => {
                    trajectory.arcs.push(arc);
                    x = exit;
                }
                Err(e) => return Err(interrupted(e, trajectory)),
            }
        } else {
            // Boundary values can land a hair on either side of the edge
            // after event localization; classify by the layer midpoint.
            let (kind, target) = if a_val < 0.5 * (lower + upper) {
                (ArcKind::SmoothMinus, lower)
            } else {
                (ArcKind::SmoothPlus, upper)
            };
            match crossing_to_surface(hd, &x, surface, target, t_end, cfg, kind, false) {
                Ok((Some(event), arc)) => {
                    trajectory.arcs.push(arc);
                    x = event;
                }
                Ok((None, arc)) => {
                    trajectory.arcs.push(arc);
                    break;
                }
                Err(e) => return Err(interrupted(e, trajectory)),
            }
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{normalize_surface, MetricSpace};
    use crate::hamiltonian::{DiscontinuousPair, NaturalHamiltonian, Potential};
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn ext(q: f64, p: f64, t: f64, e: f64) -> ExtendedPhasePoint {
        ExtendedPhasePoint::new(Vector::from_slice(&[q]), Covector::from_slice(&[p]), t, e)
    }

    fn step_pair_1d(u_minus: f64, u_plus: f64) -> DiscontinuousPair {
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

    struct Harmonic;

    impl Potential for Harmonic {
        fn value(&self, q: &Vector) -> f64 {
            0.5 * q.0[0] * q.0[0]
        }
        fn grad(&self, q: &Vector) -> Covector {
            Covector::from_slice(&[q.0[0]])
        }
    }

    #[test]
    fn free_particle_is_exact() {
        let space = MetricSpace::euclidean(1);
        let h = NaturalHamiltonian::constant(space, 1.0, 0.0);
        let x0 = ext(-1.0, 1.5, 0.0, 1.125);
        let arc = integrate_smooth(&h, &x0, 2.0, &IntegratorConfig::default(), ArcKind::SmoothMinus).unwrap();
        let end = arc.last();
        assert_relative_eq!(end.q.0[0], -1.0 + 1.5 * 2.0, epsilon = 1e-10);
        assert_relative_eq!(end.p.0[0], 1.5, epsilon = 1e-12);
        assert_relative_eq!(end.t, 2.0, epsilon = 1e-12);
        // Energy constant along samples and param equals t.
        for (s, state) in &arc.samples {
            assert_eq!(*s, state.t);
            assert!((state.e - 1.125).abs() < 1e-12);
        }
    }

    #[test]
    fn harmonic_oscillator_period() {
        let space = MetricSpace::euclidean(1);
        let h = NaturalHamiltonian::new(space, 1.0, Arc::new(Harmonic)).unwrap();
        let x0 = ext(1.0, 0.0, 0.0, 0.5);
        let arc = integrate_smooth(&h, &x0, 2.0 * std::f64::consts::PI, &IntegratorConfig::default(), ArcKind::SmoothMinus).unwrap();
        let end = arc.last();
        assert!((end.q.0[0] - 1.0).abs() < 1e-6);
        assert!(end.p.0[0].abs() < 1e-6);
        // Energy drift along samples.
        for (_, state) in &arc.samples {
            let e = h.value(&state.q, &state.p);
            assert!((e - 0.5).abs() < 1e-8);
        }
    }

    #[test]
    fn integrate_smooth_rejects_off_shell_start() {
        let space = MetricSpace::euclidean(1);
        let h = NaturalHamiltonian::constant(space, 1.0, 0.0);
        let x0 = ext(-1.0, 1.0, 0.0, 3.0);
        assert!(matches!(
            integrate_smooth(&h, &x0, 1.0, &IntegratorConfig::default(), ArcKind::SmoothMinus),
            Err(DishamError::InvalidState(_))
        ));
    }

    #[test]
    fn detect_crossing_free_particle() {
        let pair = step_pair_1d(0.0, 1.0);
        let x0 = ext(-1.0, 1.0, 0.0, 0.5);
        let (event, arc) =
            detect_crossing(pair.minus.as_ref(), &x0, &pair.surface, 0.0, &IntegratorConfig::default()).unwrap();
        assert_relative_eq!(event.t, 1.0, epsilon = 1e-9);
        assert!(event.q.0[0].abs() <= 1e-12);
        assert!(arc.samples.len() >= 2);
    }

    #[test]
    fn detect_crossing_already_on_surface() {
        let pair = step_pair_1d(0.0, 1.0);
        let x0 = ext(0.0, 1.0, 0.25, 0.5);
        let (event, arc) =
            detect_crossing(pair.minus.as_ref(), &x0, &pair.surface, 0.0, &IntegratorConfig::default()).unwrap();
        assert_eq!(event.t, 0.25);
        assert_eq!(arc.samples.len(), 1);
    }

    #[test]
    fn detect_crossing_moving_away_errors() {
        let pair = step_pair_1d(0.0, 1.0);
        let x0 = ext(-1.0, -1.0, 0.0, 0.5);
        let cfg = IntegratorConfig {
            max_time: 5.0,
            ..IntegratorConfig::default()
        };
        assert!(matches!(
            detect_crossing(pair.minus.as_ref(), &x0, &pair.surface, 0.0, &cfg),
            Err(DishamError::NoCrossing { .. })
        ));
    }

    fn layer_entry(hd: &MollifiedHamiltonian, p0: f64) -> ExtendedPhasePoint {
        let q = Vector::from_slice(&[hd.layer.lower()]);
        let p = Covector::from_slice(&[p0]);
        let e = hd.value(&q, &p);
        ExtendedPhasePoint::new(q, p, 0.0, e)
    }

    #[test]
    fn layer_with_no_jump_is_transparent() {
        let pair = step_pair_1d(0.5, 0.5);
        let hd = MollifiedHamiltonian::new(pair, 0.05).unwrap();
        let entry = layer_entry(&hd, 1.3);
        let (exit, _arc, side) = integrate_layer(&hd, &entry, &IntegratorConfig::default()).unwrap();
        assert_eq!(side, ExitSide::Plus);
        assert!((exit.p.0[0] - 1.3).abs() < 1e-8);
    }

    #[test]
    fn layer_transmission_matches_closed_form() {
        let pair = step_pair_1d(0.0, 1.0);
        let hd = MollifiedHamiltonian::new(pair, 0.05).unwrap();
        let entry = layer_entry(&hd, 2.0);
        let (exit, _arc, side) = integrate_layer(&hd, &entry, &IntegratorConfig::default()).unwrap();
        assert_eq!(side, ExitSide::Plus);
        assert!((exit.p.0[0] - 2.0_f64.sqrt()).abs() < 2e-2);
    }

    #[test]
    fn layer_reflection_matches_closed_form() {
        let pair = step_pair_1d(0.0, 1.0);
        let hd = MollifiedHamiltonian::new(pair, 0.05).unwrap();
        let entry = layer_entry(&hd, 1.0);
        let (exit, _arc, side) = integrate_layer(&hd, &entry, &IntegratorConfig::default()).unwrap();
        assert_eq!(side, ExitSide::Minus);
        assert!((exit.p.0[0] - (-1.0)).abs() < 2e-2);
    }

    #[test]
    fn renormalized_field_preserves_the_orbit() {
        let pair = step_pair_1d(0.0, 1.0);
        let hd = MollifiedHamiltonian::new(pair, 0.05).unwrap();
        let entry = layer_entry(&hd, 2.0);
        let cfg = IntegratorConfig::default();
        let (exit_x, _, _) = integrate_layer_mode(&hd, &entry, &cfg, LayerFieldMode::Extended).unwrap();
        let (exit_z, arc_z, _) = integrate_layer_mode(&hd, &entry, &cfg, LayerFieldMode::Renormalized).unwrap();
        assert!((exit_x.q.0[0] - exit_z.q.0[0]).abs() < 1e-6);
        assert!((exit_x.p.0[0] - exit_z.p.0[0]).abs() < 1e-6);
        assert!((exit_x.t - exit_z.t).abs() < 1e-6);
        assert_eq!(arc_z.parameterization, ParamKind::SParam);
    }

    #[test]
    fn smooth_scenario_no_discontinuity() {
        let pair = step_pair_1d(0.5, 0.5);
        let hd = MollifiedHamiltonian::new(pair, 0.05).unwrap();
        let q = Vector::from_slice(&[-1.0]);
        let p = Covector::from_slice(&[1.0]);
        let e = hd.value(&q, &p);
        let x0 = ExtendedPhasePoint::new(q, p, 0.0, e);
        let traj = simulate_smooth_scenario(&hd, &x0, 2.5, &IntegratorConfig::default()).unwrap();
        let end = traj.final_state().unwrap();
        assert!((end.p.0[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn smooth_scenario_reflection() {
        let pair = step_pair_1d(0.0, 1.0);
        let hd = MollifiedHamiltonian::new(pair, 0.05).unwrap();
        let q = Vector::from_slice(&[-1.0]);
        let p = Covector::from_slice(&[1.0]);
        let e = hd.value(&q, &p);
        let x0 = ExtendedPhasePoint::new(q, p, 0.0, e);
        let traj = simulate_smooth_scenario(&hd, &x0, 3.0, &IntegratorConfig::default()).unwrap();
        let last = traj.arcs.last().unwrap();
        assert_eq!(last.kind, ArcKind::SmoothMinus);
        assert!(last.last().p.0[0] < 0.0);
        assert!((last.last().p.0[0] - (-1.0)).abs() < 2e-2);
    }

    #[test]
    fn smooth_scenario_transmission() {
        let pair = step_pair_1d(0.0, 1.0);
        let hd = MollifiedHamiltonian::new(pair, 0.05).unwrap();
        let q = Vector::from_slice(&[-1.0]);
        let p = Covector::from_slice(&[2.0]);
        let e = hd.value(&q, &p);
        let x0 = ExtendedPhasePoint::new(q, p, 0.0, e);
        let traj = simulate_smooth_scenario(&hd, &x0, 2.0, &IntegratorConfig::default()).unwrap();
        let last = traj.arcs.last().unwrap();
        assert_eq!(last.kind, ArcKind::SmoothPlus);
        assert!((last.last().p.0[0] - 2.0_f64.sqrt()).abs() < 2e-2);
        // Energy conserved across the whole trajectory.
        for arc in &traj.arcs {
            for (_, state) in &arc.samples {
                assert!((hd.value(&state.q, &state.p) - x0.e).abs() < 1e-8);
            }
        }
    }
}
