//! Drives the simulation pipelines from a parsed scenario and emits
//! trajectory CSV files and comparison reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use disham_core::{
    detect_crossing, integrate_smooth, prolong_modified, prolong_vinogradov,
    simulate_limit_scenario, simulate_smooth_scenario, ArcKind, ConstantPotential, Covector,
    DecisiveBranch, DishamError, DiscontinuousPair, ExtendedPhasePoint, ImpactState,
    MollifiedHamiltonian, NaturalHamiltonian, ParamKind, PlanarStepChain, SampledArc, Side,
    SmoothHamiltonian, StepChainPotential, StepProfile, Trajectory, TransitionKind,
};

use crate::scenario::{Mode, Scenario};

/// A failed run, carrying the process exit code.
#[derive(Debug)]
pub struct RunFailure {
    pub code: i32,
    pub message: String,
}

impl RunFailure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

/// Exit code for a simulation error: 2 for grazing contacts, 3 when the
/// trajectory never reaches the surface, 1 otherwise.
pub fn exit_code_for(e: &DishamError) -> i32 {
    match e.root() {
        DishamError::GrazingContact { .. } => 2,
        DishamError::NoCrossing { .. } => 3,
        _ => 1,
    }
}

fn failure(e: &DishamError) -> RunFailure {
    RunFailure::new(exit_code_for(e), e.to_string())
}

// ---------------------------------------------------------------------------
// Model construction
// ---------------------------------------------------------------------------

pub fn build_pair(s: &Scenario) -> DiscontinuousPair {
    let u_minus = s.levels[0];
    let u_plus = *s.levels.last().expect("validated nonempty");
    DiscontinuousPair {
        minus: Arc::new(
            NaturalHamiltonian::new(
                s.space.clone(),
                s.mass,
                Arc::new(ConstantPotential::new(u_minus, s.dim)),
            )
            .expect("mass validated"),
        ),
        plus: Arc::new(
            NaturalHamiltonian::new(
                s.space.clone(),
                s.mass,
                Arc::new(ConstantPotential::new(u_plus, s.dim)),
            )
            .expect("mass validated"),
        ),
        surface: s.surface.clone(),
        space: s.space.clone(),
    }
}

/// The smooth model at width `delta`: a mollified pair for two levels, a
/// chained step potential for longer cascades.
enum SmoothModel {
    Mollified(MollifiedHamiltonian),
    Chain(NaturalHamiltonian),
}

fn build_smooth_model(s: &Scenario, delta: f64) -> Result<SmoothModel, RunFailure> {
    if s.levels.len() == 2 {
        let hd = MollifiedHamiltonian::new(build_pair(s), delta)
            .map_err(|e| RunFailure::new(1, e.to_string()))?;
        return Ok(SmoothModel::Mollified(hd));
    }
    if s.surface.a.norm_inf() > 0.0 {
        return Err(RunFailure::new(
            1,
            "multi-level scenarios need a configuration-only surface (surface.a = 0)",
        ));
    }
    // Divide (-delta, delta) into equal sub-layers, one per step.
    let k = s.levels.len() - 1;
    let width = 2.0 * delta / k as f64;
    let layers: Result<Vec<StepProfile>, _> = (0..k)
        .map(|i| StepProfile::new(-delta + i as f64 * width, -delta + (i + 1) as f64 * width))
        .collect();
    let chain = StepChainPotential::new(s.levels.clone(), layers.map_err(|e| RunFailure::new(1, e.to_string()))?)
        .map_err(|e| RunFailure::new(1, e.to_string()))?;
    let potential = PlanarStepChain {
        chain,
        q0: s.surface.q0.clone(),
        b: s.surface.b.clone(),
    };
    let h = NaturalHamiltonian::new(s.space.clone(), s.mass, Arc::new(potential))
        .map_err(|e| RunFailure::new(1, e.to_string()))?;
    Ok(SmoothModel::Chain(h))
}

/// Initial state re-shelled onto the given Hamiltonian.
fn on_shell(h: &dyn SmoothHamiltonian, x: &ExtendedPhasePoint) -> ExtendedPhasePoint {
    ExtendedPhasePoint::new(x.q.clone(), x.p.clone(), x.t, h.value(&x.q, &x.p))
}

// ---------------------------------------------------------------------------
// CSV emission
// ---------------------------------------------------------------------------

fn arc_kind_tag(kind: ArcKind) -> &'static str {
    match kind {
        ArcKind::SmoothMinus => "SMOOTH_MINUS",
        ArcKind::SmoothPlus => "SMOOTH_PLUS",
        ArcKind::Layer => "LAYER",
        ArcKind::Jump => "JUMP",
    }
}

fn param_kind_tag(kind: ParamKind) -> &'static str {
    match kind {
        ParamKind::Time => "TIME",
        ParamKind::SParam => "S",
    }
}

fn csv_header(dim: usize) -> String {
    let mut h = String::from("arc_id,arc_kind,param_kind,param");
    for i in 0..dim {
        let _ = write!(h, ",q{i}");
    }
    for i in 0..dim {
        let _ = write!(h, ",p{i}");
    }
    h.push_str(",t,e\n");
    h
}

fn render_trajectory(dim: usize, arcs: &[SampledArc], trailer: Option<&str>) -> String {
    let mut out = csv_header(dim);
    for (arc_id, arc) in arcs.iter().enumerate() {
        for (param, x) in &arc.samples {
            let _ = write!(
                out,
                "{arc_id},{},{},{param}",
                arc_kind_tag(arc.kind),
                param_kind_tag(arc.parameterization)
            );
            for v in x.q.0.iter() {
                let _ = write!(out, ",{v}");
            }
            for v in x.p.0.iter() {
                let _ = write!(out, ",{v}");
            }
            let _ = writeln!(out, ",{},{}", x.t, x.e);
        }
    }
    if let Some(msg) = trailer {
        let _ = writeln!(out, "# error: {msg}");
    }
    out
}

fn check_continuity(traj: &Trajectory) -> Result<(), RunFailure> {
    let gap = traj.max_junction_mismatch();
    if gap > 1e-9 {
        return Err(RunFailure::new(
            1,
            format!("trajectory junction mismatch {gap:e} exceeds 1e-9"),
        ));
    }
    Ok(())
}

fn write_file(path: &Path, content: &str) -> Result<(), RunFailure> {
    fs::write(path, content)
        .map_err(|e| RunFailure::new(1, format!("cannot write {}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// Pipelines
// ---------------------------------------------------------------------------

/// Normal component of a momentum with respect to the surface covector.
fn normal_momentum(s: &Scenario, p: &Covector) -> f64 {
    let bb = s.space.pairing(&s.surface.b, &s.surface.b).expect("dims validated");
    s.space.pairing(&s.surface.b, p).expect("dims validated") / bb
}

pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub stdout: String,
}

/// Runs the scenario's pipeline, writing outputs under `out_dir`.
pub fn run(s: &Scenario, out_dir: &Path) -> Result<RunReport, RunFailure> {
    fs::create_dir_all(out_dir)
        .map_err(|e| RunFailure::new(1, format!("cannot create {}: {e}", out_dir.display())))?;
    match s.mode {
        Mode::Smooth => run_smooth(s, out_dir),
        Mode::Limit => run_limit(s, out_dir),
        Mode::Vinogradov => run_vinogradov(s, out_dir),
        Mode::Compare => run_compare(s, out_dir),
    }
}

fn smooth_trajectory(s: &Scenario, delta: f64) -> Result<Trajectory, DishamError> {
    match build_smooth_model(s, delta) {
        Ok(SmoothModel::Mollified(hd)) => {
            let x0 = on_shell(&hd, &s.init);
            simulate_smooth_scenario(&hd, &x0, s.t_end, &s.cfg)
        }
        Ok(SmoothModel::Chain(h)) => {
            let x0 = on_shell(&h, &s.init);
            let side = if s.surface.eval_qp(&x0.q, &x0.p) < 0.0 {
                ArcKind::SmoothMinus
            } else {
                ArcKind::SmoothPlus
            };
            let arc = integrate_smooth(&h, &x0, s.t_end, &s.cfg, side)?;
            Ok(Trajectory { arcs: vec![arc] })
        }
        Err(f) => Err(DishamError::InvalidArgument(f.message)),
    }
}

fn run_smooth(s: &Scenario, out_dir: &Path) -> Result<RunReport, RunFailure> {
    let mut files = Vec::new();
    for &delta in &s.deltas {
        let path = out_dir.join(format!("{}_smooth_d{delta}.csv", s.name));
        match smooth_trajectory(s, delta) {
            Ok(traj) => {
                check_continuity(&traj)?;
                write_file(&path, &render_trajectory(s.dim, &traj.arcs, None))?;
                files.push(path);
            }
            Err(e) => {
                if let DishamError::Interrupted { partial, .. } = &e {
                    write_file(
                        &path,
                        &render_trajectory(s.dim, &partial.arcs, Some(&e.to_string())),
                    )?;
                }
                return Err(failure(&e));
            }
        }
    }
    Ok(RunReport {
        files,
        stdout: String::new(),
    })
}

fn run_limit(s: &Scenario, out_dir: &Path) -> Result<RunReport, RunFailure> {
    if s.levels.len() != 2 {
        return Err(RunFailure::new(
            1,
            "LIMIT mode handles a single discontinuity (two levels); use the cascade oracle for chains",
        ));
    }
    let pair = build_pair(s);
    let path = out_dir.join(format!("{}_limit.csv", s.name));
    match simulate_limit_scenario(&pair, &s.init, s.t_end, &s.cfg) {
        Ok(traj) => {
            check_continuity(&traj)?;
            write_file(&path, &render_trajectory(s.dim, &traj.arcs, None))?;
            Ok(RunReport {
                files: vec![path],
                stdout: String::new(),
            })
        }
        Err(e) => {
            if let DishamError::Interrupted { partial, .. } = &e {
                write_file(
                    &path,
                    &render_trajectory(s.dim, &partial.arcs, Some(&e.to_string())),
                )?;
            }
            Err(failure(&e))
        }
    }
}

/// The incoming crossing shared by the Vinogradov and comparison modes:
/// smooth flow from the initial state to the surface plus the impact.
fn incoming_impact(
    s: &Scenario,
    pair: &DiscontinuousPair,
) -> Result<(SampledArc, ImpactState, Side), DishamError> {
    let a0 = s.surface.eval_qp(&s.init.q, &s.init.p);
    let side = if a0 < 0.0 { Side::Minus } else { Side::Plus };
    let h: &dyn SmoothHamiltonian = match side {
        Side::Minus => pair.minus.as_ref(),
        Side::Plus => pair.plus.as_ref(),
    };
    let (event, arc) = detect_crossing(h, &s.init, &s.surface, 0.0, &s.cfg)?;
    let impact = ImpactState::new(pair, event, side)?;
    Ok((arc, impact, side))
}

fn run_vinogradov(s: &Scenario, out_dir: &Path) -> Result<RunReport, RunFailure> {
    if s.levels.len() != 2 {
        return Err(RunFailure::new(1, "VINOGRADOV mode handles two levels"));
    }
    let pair = build_pair(s);
    let (incoming, impact, side) = incoming_impact(s, &pair).map_err(|e| failure(&e))?;
    let outcomes = prolong_vinogradov(&pair, &impact, 0.0).map_err(|e| failure(&e))?;
    if outcomes.is_empty() {
        return Err(RunFailure::new(3, "no decisive points: no prolongation exists"));
    }
    let mut files = Vec::new();
    let mut saw_grazing = false;
    let mut stdout = String::new();
    for (i, outcome) in outcomes.iter().enumerate() {
        let mut arcs = vec![incoming.clone(), outcome.jump_arc.clone()];
        match outcome.kind {
            TransitionKind::Grazing => saw_grazing = true,
            kind => {
                let exit_side = if kind == TransitionKind::Reflected {
                    side
                } else {
                    side.other()
                };
                let h: &dyn SmoothHamiltonian = match exit_side {
                    Side::Minus => pair.minus.as_ref(),
                    Side::Plus => pair.plus.as_ref(),
                };
                if s.t_end > outcome.terminal.t {
                    let arc_kind = match exit_side {
                        Side::Minus => ArcKind::SmoothMinus,
                        Side::Plus => ArcKind::SmoothPlus,
                    };
                    let tail = integrate_smooth(h, &outcome.terminal, s.t_end, &s.cfg, arc_kind)
                        .map_err(|e| failure(&e))?;
                    arcs.push(tail);
                }
            }
        }
        let traj = Trajectory { arcs };
        check_continuity(&traj)?;
        let path = out_dir.join(format!("{}_vinogradov_branch{i}.csv", s.name));
        write_file(&path, &render_trajectory(s.dim, &traj.arcs, None))?;
        let _ = writeln!(
            stdout,
            "branch {i}: {:?} terminal normal momentum {}",
            outcome.kind,
            normal_momentum(s, &outcome.terminal.p)
        );
        files.push(path);
    }
    if saw_grazing {
        return Err(RunFailure::new(2, "a prolongation branch is grazing"));
    }
    Ok(RunReport { files, stdout })
}

fn run_compare(s: &Scenario, out_dir: &Path) -> Result<RunReport, RunFailure> {
    if s.levels.len() != 2 {
        return Err(RunFailure::new(1, "COMPARE mode handles two levels"));
    }
    let pair = build_pair(s);
    let (_, impact, _) = incoming_impact(s, &pair).map_err(|e| failure(&e))?;
    let oracle = prolong_modified(&pair, &impact, 0.0).map_err(|e| failure(&e))?;
    if oracle.kind == TransitionKind::Grazing {
        return Err(RunFailure::new(
            2,
            format!(
                "the limit rule grazes at s = {}; no definite outcome to compare against",
                oracle.s1
            ),
        ));
    }
    let limit_p = normal_momentum(s, &oracle.terminal.p);

    let mut rows = Vec::new();
    for &delta in &s.deltas {
        let traj = smooth_trajectory(s, delta).map_err(|e| failure(&e))?;
        check_continuity(&traj)?;
        let end = traj
            .final_state()
            .ok_or_else(|| RunFailure::new(1, "empty trajectory"))?
            .clone();
        let exit_p = normal_momentum(s, &end.p);
        rows.push((delta, exit_p, (exit_p - limit_p).abs()));
    }

    let mut csv = String::from("delta,exit_p,limit_p,abs_error\n");
    for (delta, exit_p, err) in &rows {
        let _ = writeln!(csv, "{delta},{exit_p},{limit_p},{err}");
    }
    let path = out_dir.join(format!("{}_compare.csv", s.name));
    write_file(&path, &csv)?;

    let mut table = String::new();
    let _ = writeln!(
        table,
        "limit rule: {:?}, terminal normal momentum {limit_p}",
        oracle.kind
    );
    let _ = writeln!(table, "{:>10}  {:>24}  {:>12}", "delta", "exit momentum", "error");
    for (delta, exit_p, err) in &rows {
        let _ = writeln!(table, "{delta:>10}  {exit_p:>24.16}  {err:>12.3e}");
    }
    let decisive =
        disham_core::decisive_points(&pair, &impact, 0.0).map_err(|e| failure(&e))?;
    let _ = writeln!(table, "decisive points:");
    for d in &decisive {
        let tag = match d.branch {
            DecisiveBranch::Minus => "H-",
            DecisiveBranch::Plus => "H+",
        };
        let _ = writeln!(
            table,
            "  {tag} branch at s = {}, normal momentum {}{}",
            d.s,
            normal_momentum(s, &d.point.p),
            if d.tangential { " (tangential)" } else { "" }
        );
    }

    Ok(RunReport {
        files: vec![path],
        stdout: table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::parse_scenario;

    fn scenario(text: &str) -> Scenario {
        parse_scenario(text, "t").unwrap()
    }

    #[test]
    fn limit_reflection_csv_final_momentum() {
        let s = scenario(
            "dim = 1\nsurface.b = 1\nlevels = 0, 1\ninit.q = -1\ninit.p = 1\nt_end = 3\nmode = LIMIT\n",
        );
        let dir = std::env::temp_dir().join("disham_runner_test_limit");
        let report = run(&s, &dir).unwrap();
        let content = fs::read_to_string(&report.files[0]).unwrap();
        let last = content.lines().last().unwrap();
        let p_final: f64 = last.split(',').nth(5).unwrap().parse().unwrap();
        assert!((p_final + 1.0).abs() < 1e-8, "final p = {p_final}");
    }

    #[test]
    fn vinogradov_zero_step_emits_two_files() {
        let s = scenario(
            "dim = 1\nsurface.b = 1\nlevels = 0, 0\ninit.q = -1\ninit.p = 1\nt_end = 3\nmode = VINOGRADOV\n",
        );
        let dir = std::env::temp_dir().join("disham_runner_test_vin");
        let report = run(&s, &dir).unwrap();
        assert_eq!(report.files.len(), 2);
    }

    #[test]
    fn deterministic_output() {
        let s = scenario(
            "dim = 1\nsurface.b = 1\nlevels = 0, 1\ninit.q = -1\ninit.p = 2\nt_end = 2\nmode = LIMIT\n",
        );
        let dir = std::env::temp_dir().join("disham_runner_test_det");
        let r1 = run(&s, &dir).unwrap();
        let c1 = fs::read_to_string(&r1.files[0]).unwrap();
        let r2 = run(&s, &dir).unwrap();
        let c2 = fs::read_to_string(&r2.files[0]).unwrap();
        assert_eq!(c1, c2);
    }
}
