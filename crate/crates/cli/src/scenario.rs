//! Flat key-value scenario files: one `key = value` per line, arrays as
//! comma-separated lists, `#` comments. Parsing re-validates every model
//! invariant and reports schema problems with the offending line number.

use std::collections::BTreeMap;
use std::fmt;

use disham_core::{
    normalize_surface, Covector, ExtendedPhasePoint, IntegratorConfig, MetricSpace,
    PhaseHyperplane, Vector,
};
use nalgebra::DMatrix;

/// Which pipeline the scenario drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Smooth,
    Limit,
    Vinogradov,
    Compare,
}

impl Mode {
    pub fn parse(s: &str) -> Option<Mode> {
        match s.to_ascii_uppercase().as_str() {
            "SMOOTH" => Some(Mode::Smooth),
            "LIMIT" => Some(Mode::Limit),
            "VINOGRADOV" => Some(Mode::Vinogradov),
            "COMPARE" => Some(Mode::Compare),
            _ => None,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Mode::Smooth => "smooth",
            Mode::Limit => "limit",
            Mode::Vinogradov => "vinogradov",
            Mode::Compare => "compare",
        }
    }
}

/// Schema violation with the line it came from (when known).
#[derive(Debug)]
pub struct SchemaError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(n) => write!(f, "line {n}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for SchemaError {}

fn err(line: Option<usize>, message: impl Into<String>) -> SchemaError {
    SchemaError {
        line,
        message: message.into(),
    }
}

/// A fully validated scenario, ready to run.
#[derive(Debug)]
pub struct Scenario {
    pub name: String,
    pub dim: usize,
    pub space: MetricSpace,
    pub mass: f64,
    pub surface: PhaseHyperplane,
    pub levels: Vec<f64>,
    pub deltas: Vec<f64>,
    pub init: ExtendedPhasePoint,
    pub t_end: f64,
    pub mode: Mode,
    pub cfg: IntegratorConfig,
    /// True when the raw (a, b) surface data needed rescaling.
    pub normalized_surface_data: bool,
}

struct RawDoc {
    entries: BTreeMap<String, (usize, String)>,
}

impl RawDoc {
    fn parse(text: &str) -> Result<Self, SchemaError> {
        let mut entries = BTreeMap::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(Some(line_no), "expected `key = value`"))?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if value.is_empty() {
                return Err(err(Some(line_no), format!("empty value for key `{key}`")));
            }
            if entries.insert(key.clone(), (line_no, value)).is_some() {
                return Err(err(Some(line_no), format!("duplicate key `{key}`")));
            }
        }
        Ok(Self { entries })
    }

    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.remove(key)
    }

    fn require(&mut self, key: &str) -> Result<(usize, String), SchemaError> {
        self.take(key)
            .ok_or_else(|| err(None, format!("missing required key `{key}`")))
    }
}

fn parse_f64(line: usize, key: &str, v: &str) -> Result<f64, SchemaError> {
    v.parse::<f64>()
        .map_err(|_| err(Some(line), format!("key `{key}`: `{v}` is not a number")))
}

fn parse_list(line: usize, key: &str, v: &str) -> Result<Vec<f64>, SchemaError> {
    v.split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>()
                .map_err(|_| err(Some(line), format!("key `{key}`: `{t}` is not a number")))
        })
        .collect()
}

fn parse_vec(
    line: usize,
    key: &str,
    v: &str,
    dim: usize,
) -> Result<Vec<f64>, SchemaError> {
    let list = parse_list(line, key, v)?;
    if list.len() != dim {
        return Err(err(
            Some(line),
            format!("key `{key}`: expected {dim} entries, got {}", list.len()),
        ));
    }
    Ok(list)
}

/// Parses and validates a scenario document. `name` labels output files,
/// usually the file stem.
pub fn parse_scenario(text: &str, name: &str) -> Result<Scenario, SchemaError> {
    let mut doc = RawDoc::parse(text)?;

    let (dim_line, dim_str) = doc.require("dim")?;
    let dim: usize = dim_str
        .parse()
        .map_err(|_| err(Some(dim_line), format!("`{dim_str}` is not a dimension")))?;
    if dim == 0 {
        return Err(err(Some(dim_line), "dimension must be at least 1"));
    }

    let space = match doc.take("metric") {
        Some((line, v)) => {
            let entries = parse_list(line, "metric", &v)?;
            if entries.len() != dim * dim {
                return Err(err(
                    Some(line),
                    format!(
                        "key `metric`: expected {} entries for dim {dim}, got {}",
                        dim * dim,
                        entries.len()
                    ),
                ));
            }
            let g = DMatrix::from_row_slice(dim, dim, &entries);
            MetricSpace::new(g).map_err(|e| err(Some(line), format!("key `metric`: {e}")))?
        }
        None => MetricSpace::euclidean(dim),
    };

    let mass = match doc.take("mass") {
        Some((line, v)) => {
            let m = parse_f64(line, "mass", &v)?;
            if !(m > 0.0) {
                return Err(err(Some(line), format!("mass must be positive, got {m}")));
            }
            m
        }
        None => 1.0,
    };

    let vec_or_zero = |doc: &mut RawDoc, key: &str| -> Result<Vec<f64>, SchemaError> {
        match doc.take(key) {
            Some((line, v)) => parse_vec(line, key, &v, dim),
            None => Ok(vec![0.0; dim]),
        }
    };
    let sq0 = vec_or_zero(&mut doc, "surface.q0")?;
    let sp0 = vec_or_zero(&mut doc, "surface.p0")?;
    let sa = vec_or_zero(&mut doc, "surface.a")?;
    let (sb_line, sb_str) = doc.require("surface.b").or_else(|_| {
        Err(err(
            None,
            "missing required key `surface.b` (the surface needs normal data)",
        ))
    })?;
    let sb = parse_vec(sb_line, "surface.b", &sb_str, dim)?;

    let a_raw = Vector::from_slice(&sa);
    let b_raw = Covector::from_slice(&sb);
    let surface = normalize_surface(
        Vector::from_slice(&sq0),
        Covector::from_slice(&sp0),
        a_raw.clone(),
        b_raw.clone(),
        &space,
    )
    .map_err(|e| err(Some(sb_line), format!("surface data: {e}")))?;
    let normalized_surface_data = (&surface.a - &a_raw).norm_inf() > 1e-12
        || (&surface.b - &b_raw).norm_inf() > 1e-12;

    let (lv_line, lv_str) = doc.require("levels")?;
    let levels = parse_list(lv_line, "levels", &lv_str)?;
    if levels.len() < 2 {
        return Err(err(
            Some(lv_line),
            format!("key `levels`: need at least 2 levels, got {}", levels.len()),
        ));
    }

    let deltas = match doc.take("deltas") {
        Some((line, v)) => {
            let list = parse_list(line, "deltas", &v)?;
            if list.iter().any(|d| !(*d > 0.0)) {
                return Err(err(Some(line), "key `deltas`: every delta must be positive"));
            }
            list
        }
        None => vec![0.05],
    };

    let (iq_line, iq_str) = doc.require("init.q")?;
    let iq = parse_vec(iq_line, "init.q", &iq_str, dim)?;
    let (ip_line, ip_str) = doc.require("init.p")?;
    let ip = parse_vec(ip_line, "init.p", &ip_str, dim)?;
    let t0 = match doc.take("init.t") {
        Some((line, v)) => parse_f64(line, "init.t", &v)?,
        None => 0.0,
    };

    let (te_line, te_str) = doc.require("t_end")?;
    let t_end = parse_f64(te_line, "t_end", &te_str)?;
    if !(t_end > t0) {
        return Err(err(
            Some(te_line),
            format!("t_end = {t_end} must exceed the initial time {t0}"),
        ));
    }

    let mode = match doc.take("mode") {
        Some((line, v)) => Mode::parse(&v).ok_or_else(|| {
            err(
                Some(line),
                format!("key `mode`: `{v}` is not one of SMOOTH, LIMIT, VINOGRADOV, COMPARE"),
            )
        })?,
        None => Mode::Limit,
    };

    let mut cfg = IntegratorConfig::default();
    if let Some((line, v)) = doc.take("tol.rel") {
        cfg.rel_tol = parse_f64(line, "tol.rel", &v)?;
    }
    if let Some((line, v)) = doc.take("tol.abs") {
        cfg.abs_tol = parse_f64(line, "tol.abs", &v)?;
    }
    cfg.validate()
        .map_err(|e| err(None, format!("integrator tolerances: {e}")))?;

    if let Some((key, (line, _))) = doc.entries.iter().next() {
        return Err(err(Some(*line), format!("unknown key `{key}`")));
    }

    // The starting side decides which level enters the initial energy.
    let q = Vector::from_slice(&iq);
    let p = Covector::from_slice(&ip);
    let a_val = surface.eval_qp(&q, &p);
    if a_val.abs() <= 1e-9 {
        return Err(err(
            Some(iq_line),
            "initial state lies on the discontinuity surface",
        ));
    }
    let u0 = if a_val < 0.0 {
        levels[0]
    } else {
        *levels.last().expect("validated nonempty")
    };
    let e = space.kinetic(&p, mass) + u0;
    let init = ExtendedPhasePoint::new(q, p, t0, e);
    let _ = ip_line;

    Ok(Scenario {
        name: name.to_string(),
        dim,
        space,
        mass,
        surface,
        levels,
        deltas,
        init,
        t_end,
        mode,
        cfg,
        normalized_surface_data,
    })
}
