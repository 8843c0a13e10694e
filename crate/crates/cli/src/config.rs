//! Flat key=value run configuration: file parsing, --set overrides, and
//! resolution into the typed pieces the pipeline consumes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use tikhoflow_core::flows::{FlowKind, IntegratorConfig, Method};
use tikhoflow_core::problems::{builtin_problem, Params, ProblemSpec};
use tikhoflow_core::schedules::{ScheduleFamily, ScheduleSpec};
use tikhoflow_core::{Error, Result};

/// Every key the config language understands. Anything else is a typo and
/// gets rejected with this list in the message.
const KNOWN_KEYS: &[&str] = &[
    "problem.name",
    "problem.a",
    "problem.A",
    "problem.b",
    "problem.dim",
    "flow.kind",
    "flow.c",
    "flow.alpha",
    "schedule.family",
    "schedule.m",
    "schedule.p",
    "schedule.gamma",
    "schedule.r",
    "schedule.scale",
    "integrator.rel_tol",
    "integrator.abs_tol",
    "integrator.h_init",
    "integrator.h_min",
    "integrator.max_steps",
    "integrator.method",
    "run.t0",
    "run.t_end",
    "run.x0",
    "run.v0",
    "run.samples",
    "run.mu",
    "run.label",
];

/// An ordered bag of raw key=value entries. Later inserts win, so layering
/// preset < config file < --set falls out of insertion order.
#[derive(Debug, Clone, Default)]
pub struct FlatConfig {
    entries: BTreeMap<String, String>,
}

impl FlatConfig {
    pub fn new() -> FlatConfig {
        FlatConfig::default()
    }

    pub fn from_pairs(pairs: &[(&str, &str)]) -> FlatConfig {
        let mut cfg = FlatConfig::new();
        for (k, v) in pairs {
            cfg.set(k, v);
        }
        cfg
    }

    pub fn parse_file(path: &Path) -> Result<FlatConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config file {}: {e}", path.display()))
        })?;
        let mut cfg = FlatConfig::new();
        cfg.merge_text(&text, &path.display().to_string())?;
        Ok(cfg)
    }

    pub fn merge_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "{origin}:{}: expected key = value, got {line:?}",
                    lineno + 1
                ))
            })?;
            self.set(key.trim(), value.trim());
        }
        Ok(())
    }

    /// Applies one --set KEY=VALUE argument.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (key, value) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {spec:?}")))?;
        self.set(key.trim(), value.trim());
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn merge_from(&mut self, other: &FlatConfig) {
        for (k, v) in &other.entries {
            self.set(k, v);
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn check_known_keys(&self) -> Result<()> {
        for key in self.entries.keys() {
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!(
                    "unknown config key {key:?}; known keys: {}",
                    KNOWN_KEYS.join(", ")
                )));
            }
        }
        Ok(())
    }

    fn real(&self, key: &str) -> Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(s) => s
                .parse::<f64>()
                .map(Some)
                .map_err(|_| Error::Config(format!("{key} must be a number, got {s:?}"))),
        }
    }

    fn real_req(&self, key: &str) -> Result<f64> {
        self.real(key)?
            .ok_or_else(|| Error::Config(format!("missing required key {key}")))
    }

    fn vector(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.get(key) {
            None => Ok(None),
            Some(s) => parse_vector(s)
                .map(Some)
                .map_err(|e| Error::Config(format!("{key}: {e}"))),
        }
    }

    fn matrix(&self, key: &str) -> Result<Option<Vec<Vec<f64>>>> {
        match self.get(key) {
            None => Ok(None),
            Some(s) => {
                let mut rows = Vec::new();
                for row in s.split(';') {
                    rows.push(
                        parse_vector(row).map_err(|e| Error::Config(format!("{key}: {e}")))?,
                    );
                }
                Ok(Some(rows))
            }
        }
    }
}

fn parse_vector(s: &str) -> std::result::Result<Vec<f64>, String> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        if part.is_empty() {
            return Err(format!("empty entry in {s:?}"));
        }
        out.push(
            part.parse::<f64>()
                .map_err(|_| format!("{part:?} is not a number"))?,
        );
    }
    if out.is_empty() {
        return Err("empty vector".into());
    }
    Ok(out)
}

fn format_vector(v: &[f64]) -> String {
    let mut s = String::new();
    for (i, x) in v.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let _ = write!(s, "{x}");
    }
    s
}

/// A fully resolved single-run request. `schedule` and `c` are only
/// meaningful for the configurable first-order kind; the comparator kinds
/// carry their own fixed coefficients.
#[derive(Debug)]
pub struct RunSetup {
    pub label: String,
    pub problem: ProblemSpec,
    pub kind: FlowKind,
    pub schedule: Option<ScheduleSpec>,
    pub c: f64,
    pub integrator: IntegratorConfig,
    pub t0: f64,
    pub t_end: f64,
    pub x0: Vec<f64>,
    pub v0: Option<Vec<f64>>,
    pub mu: Option<f64>,
    /// canonical config echo; feeding it back reproduces the run
    pub echo: BTreeMap<String, String>,
}

pub fn resolve(cfg: &FlatConfig) -> Result<RunSetup> {
    cfg.check_known_keys()?;
    let mut echo = BTreeMap::new();

    let problem = resolve_problem(cfg, &mut echo)?;
    let kind = match cfg.get("flow.kind") {
        None => FlowKind::TikhonovFirstOrder,
        Some(name) => FlowKind::from_name(name)?,
    };
    echo.insert("flow.kind".into(), kind.name().into());

    let (schedule, c) = if kind == FlowKind::TikhonovFirstOrder {
        let schedule = resolve_schedule(cfg, &mut echo)?;
        let c = cfg.real("flow.c")?.unwrap_or(5.0);
        if cfg.get("flow.alpha").is_some() {
            return Err(Error::Config(
                "flow.alpha only applies to the second-order comparator systems".into(),
            ));
        }
        echo.insert("flow.c".into(), format!("{c}"));
        (Some(schedule), c)
    } else {
        for key in ["flow.c", "flow.alpha", "schedule.family", "schedule.m", "schedule.p",
                    "schedule.gamma", "schedule.r", "schedule.scale"]
        {
            if cfg.get(key).is_some() {
                return Err(Error::Config(format!(
                    "{key} cannot be set for {}: its coefficients are fixed",
                    kind.name()
                )));
            }
        }
        (None, f64::NAN)
    };

    let integrator = resolve_integrator(cfg, &mut echo)?;

    // The reference schedule decides the default horizon: exponential
    // weights outgrow f64 long before the polylog ones do.
    let horizon_family = match (kind, &schedule) {
        (FlowKind::TikhonovFirstOrder, Some(s)) => s.family,
        _ => reference_family(kind),
    };
    let default_t_end = match horizon_family {
        ScheduleFamily::PowerLog { .. } => 1e4,
        ScheduleFamily::PowerExp { .. } => 1e2,
    };

    let t0 = cfg.real("run.t0")?.unwrap_or(1.0);
    let t_end = cfg.real("run.t_end")?.unwrap_or(default_t_end);
    let samples = match cfg.real("run.samples")?.unwrap_or(500.0) {
        n if n >= 2.0 && n.fract() == 0.0 && n <= 1e7 => n as usize,
        n => {
            return Err(Error::Config(format!(
                "run.samples must be an integer >= 2, got {n}"
            )))
        }
    };

    let x0 = match cfg.vector("run.x0")? {
        Some(v) => v,
        None => vec![1.0; problem.dimension],
    };
    if x0.len() != problem.dimension {
        return Err(Error::Config(format!(
            "run.x0 has {} entries but {} has dimension {}",
            x0.len(),
            problem.name,
            problem.dimension
        )));
    }
    if !problem.in_domain(&x0) {
        return Err(Error::Config(format!(
            "run.x0 = {} lies outside the domain of {}",
            format_vector(&x0),
            problem.name
        )));
    }

    let v0 = cfg.vector("run.v0")?;
    if let Some(v) = &v0 {
        if !kind.is_second_order() {
            return Err(Error::Config(format!(
                "run.v0 only applies to second-order systems, not {}",
                kind.name()
            )));
        }
        if v.len() != problem.dimension {
            return Err(Error::Config(format!(
                "run.v0 has {} entries, expected {}",
                v.len(),
                problem.dimension
            )));
        }
    }

    let mu = cfg.real("run.mu")?;
    if let Some(m) = mu {
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::Config(format!("run.mu must be positive, got {m}")));
        }
        echo.insert("run.mu".into(), format!("{m}"));
    }

    let label = match cfg.get("run.label") {
        Some(l) => l.to_string(),
        None => default_label(kind, &schedule),
    };
    if label.is_empty()
        || !label
            .chars()
            .all(|ch| ch.is_ascii_alphanumeric() || matches!(ch, '_' | '-' | '.'))
    {
        return Err(Error::Config(format!(
            "run.label {label:?} must be nonempty and use only letters, digits, '_', '-', '.'"
        )));
    }

    let mut integrator = integrator;
    integrator.samples = samples;
    integrator.validate()?;

    echo.insert("run.t0".into(), format!("{t0}"));
    echo.insert("run.t_end".into(), format!("{t_end}"));
    echo.insert("run.samples".into(), format!("{samples}"));
    echo.insert("run.x0".into(), format_vector(&x0));
    if let Some(v) = &v0 {
        echo.insert("run.v0".into(), format_vector(v));
    }
    echo.insert("run.label".into(), label.clone());

    Ok(RunSetup {
        label,
        problem,
        kind,
        schedule,
        c,
        integrator,
        t0,
        t_end,
        x0,
        v0,
        mu,
        echo,
    })
}

fn resolve_problem(cfg: &FlatConfig, echo: &mut BTreeMap<String, String>) -> Result<ProblemSpec> {
    let name = cfg
        .get("problem.name")
        .ok_or_else(|| Error::Config("missing required key problem.name".into()))?;
    echo.insert("problem.name".into(), name.into());

    let mut params = Params::new();
    if let Some(a) = cfg.vector("problem.a")? {
        echo.insert("problem.a".into(), format_vector(&a));
        params = params.set_vector("a", a);
    }
    if let Some(rows) = cfg.matrix("problem.A")? {
        let joined: Vec<String> = rows.iter().map(|r| format_vector(r)).collect();
        echo.insert("problem.A".into(), joined.join(";"));
        params = params.set_matrix("A", rows);
    }
    if let Some(b) = cfg.vector("problem.b")? {
        echo.insert("problem.b".into(), format_vector(&b));
        params = params.set_vector("b", b);
    }
    if let Some(dim) = cfg.real("problem.dim")? {
        echo.insert("problem.dim".into(), format!("{dim}"));
        params = params.set_real("dim", dim);
    }
    builtin_problem(name, &params)
}

pub fn resolve_schedule(cfg: &FlatConfig, echo: &mut BTreeMap<String, String>) -> Result<ScheduleSpec> {
    let family = cfg
        .get("schedule.family")
        .ok_or_else(|| Error::Config("missing required key schedule.family".into()))?;
    echo.insert("schedule.family".into(), family.into());

    let spec = match family {
        "power_log" => {
            for key in ["schedule.gamma", "schedule.r"] {
                if cfg.get(key).is_some() {
                    return Err(Error::Config(format!("{key} does not apply to power_log")));
                }
            }
            let m = cfg.real("schedule.m")?.unwrap_or(0.0);
            let p = cfg.real("schedule.p")?.unwrap_or(0.0);
            echo.insert("schedule.m".into(), format!("{m}"));
            echo.insert("schedule.p".into(), format!("{p}"));
            ScheduleSpec::power_log(m, p)?
        }
        "power_exp" => {
            if cfg.get("schedule.p").is_some() {
                return Err(Error::Config("schedule.p does not apply to power_exp".into()));
            }
            let m = cfg.real("schedule.m")?.unwrap_or(0.0);
            let gamma = cfg.real_req("schedule.gamma")?;
            let r = cfg.real_req("schedule.r")?;
            echo.insert("schedule.m".into(), format!("{m}"));
            echo.insert("schedule.gamma".into(), format!("{gamma}"));
            echo.insert("schedule.r".into(), format!("{r}"));
            ScheduleSpec::power_exp(m, gamma, r)?
        }
        other => {
            return Err(Error::Config(format!(
                "schedule.family must be power_log or power_exp, got {other:?}"
            )))
        }
    };
    let scale = cfg.real("schedule.scale")?.unwrap_or(1.0);
    echo.insert("schedule.scale".into(), format!("{scale}"));
    spec.with_scale(scale)
}

/// What the schedule checker needs from a config. A full run config is
/// accepted; keys other than schedule.*, flow.c, and run.mu are ignored so
/// the same file can drive both `run` and `checkschedule`.
#[derive(Debug, Clone)]
pub struct CheckSetup {
    pub schedule: ScheduleSpec,
    pub c: f64,
    pub mu: Option<f64>,
}

pub fn resolve_check(cfg: &FlatConfig) -> Result<CheckSetup> {
    cfg.check_known_keys()?;
    let mut echo = BTreeMap::new();
    let schedule = resolve_schedule(cfg, &mut echo)?;
    let c = cfg.real("flow.c")?.unwrap_or(5.0);
    let mu = cfg.real("run.mu")?;
    Ok(CheckSetup { schedule, c, mu })
}

fn resolve_integrator(cfg: &FlatConfig, echo: &mut BTreeMap<String, String>) -> Result<IntegratorConfig> {
    let mut integ = IntegratorConfig::default();
    if let Some(v) = cfg.real("integrator.rel_tol")? {
        integ.rel_tol = v;
    }
    if let Some(v) = cfg.real("integrator.abs_tol")? {
        integ.abs_tol = v;
    }
    if let Some(v) = cfg.real("integrator.h_init")? {
        integ.h_init = v;
    }
    if let Some(v) = cfg.real("integrator.h_min")? {
        integ.h_min = v;
    }
    if let Some(v) = cfg.real("integrator.max_steps")? {
        if !(v >= 1.0 && v.fract() == 0.0 && v <= 1e15) {
            return Err(Error::Config(format!(
                "integrator.max_steps must be a positive integer, got {v}"
            )));
        }
        integ.max_steps = v as u64;
    }
    if let Some(name) = cfg.get("integrator.method") {
        integ.method = Method::from_name(name)?;
    }
    echo.insert("integrator.rel_tol".into(), format!("{}", integ.rel_tol));
    echo.insert("integrator.abs_tol".into(), format!("{}", integ.abs_tol));
    echo.insert("integrator.h_init".into(), format!("{}", integ.h_init));
    echo.insert("integrator.h_min".into(), format!("{}", integ.h_min));
    echo.insert("integrator.max_steps".into(), format!("{}", integ.max_steps));
    echo.insert("integrator.method".into(), integ.method.name().into());
    Ok(integ)
}

fn reference_family(kind: FlowKind) -> ScheduleFamily {
    match kind {
        FlowKind::Trae | FlowKind::Trisae => ScheduleFamily::PowerExp {
            m: 2.0,
            gamma: 2.0,
            r: 0.9,
        },
        _ => ScheduleFamily::PowerLog { m: 2.0, p: 2.0 },
    }
}

fn default_label(kind: FlowKind, schedule: &Option<ScheduleSpec>) -> String {
    match (kind, schedule) {
        (FlowKind::TikhonovFirstOrder, Some(s)) => match s.family {
            ScheduleFamily::PowerLog { .. } => "first_order_log".into(),
            ScheduleFamily::PowerExp { .. } => "first_order_exp".into(),
        },
        _ => kind.name().into(),
    }
}
