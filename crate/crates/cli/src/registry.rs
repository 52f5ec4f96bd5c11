//! Built-in systems and inline systems from the expression grammar.

use std::sync::Arc;

use guarantee_core::{bilinear, BoundingBox, CompactSet, Dynamics};

use crate::config::{SetConfig, SystemConfig};
use crate::error::{invalid, CliError, CliResult};
use crate::expr::Expr;

pub type TerminalCost = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

pub struct SystemSetup {
    /// Registered id, or the name of an inline system.
    pub id: String,
    pub dyn_: Dynamics,
    pub terminal: TerminalCost,
    pub z0: Vec<f64>,
    pub default_u_star: Option<Vec<f64>>,
    /// Box used for value grids when the config gives none.
    pub grid_box: Option<(Vec<f64>, Vec<f64>)>,
}

pub const REGISTERED: &[&str] = &[bilinear::SYSTEM_ID];

pub fn resolve_system(cfg: &SystemConfig) -> CliResult<SystemSetup> {
    let setup = match cfg.id.as_str() {
        bilinear::SYSTEM_ID => {
            if cfg.rhs.is_some() || cfg.control.is_some() || cfg.disturbance.is_some() || cfg.cost.is_some() {
                return invalid("system: a registered system takes no inline fields (rhs, control, disturbance, cost)");
            }
            let res = cfg.control_resolution.unwrap_or(bilinear::CONTROL_RESOLUTION);
            if res < 2 {
                return invalid("system.control_resolution must be at least 2");
            }
            SystemSetup {
                id: bilinear::SYSTEM_ID.into(),
                dyn_: bilinear::system_with_resolution(res),
                terminal: Arc::new(bilinear::terminal_cost),
                z0: cfg.z0.clone(),
                default_u_star: Some(bilinear::U_STAR.to_vec()),
                grid_box: Some((vec![-1.5; 2], vec![1.5; 2])),
            }
        }
        "inline" => inline_system(cfg)?,
        other => {
            return invalid(format!(
                "system.id: unknown system `{other}`; known: {REGISTERED:?} or `inline`"
            ))
        }
    };
    if setup.z0.len() != setup.dyn_.n() {
        return invalid(format!(
            "system.z0 has {} components, the system has {}",
            setup.z0.len(),
            setup.dyn_.n()
        ));
    }
    if let Some(b) = setup.dyn_.bounds() {
        if !b.contains(&setup.z0) {
            return invalid("system.z0 lies outside the bounding box");
        }
    }
    Ok(setup)
}

fn compact_set(field: &str, s: &SetConfig) -> CliResult<CompactSet> {
    let set = match (&s.points, &s.lower, &s.upper) {
        (Some(p), None, None) => CompactSet::finite(p.clone()),
        (None, Some(l), Some(u)) => CompactSet::boxed(l.clone(), u.clone(), s.resolution.unwrap_or(3)),
        _ => return invalid(format!("system.{field}: give either `points` or both `lower` and `upper`")),
    };
    set.map_err(|e| CliError::Validation(format!("system.{field}: {e}")))
}

fn parse_expr(field: &str, src: &str) -> CliResult<Expr> {
    Expr::parse(src).map_err(|e| CliError::Validation(format!("{field}: `{src}` {e}")))
}

fn inline_system(cfg: &SystemConfig) -> CliResult<SystemSetup> {
    let (Some(rhs), Some(control), Some(disturbance), Some(cost)) = (&cfg.rhs, &cfg.control, &cfg.disturbance, &cfg.cost)
    else {
        return invalid("system: inline systems need `rhs`, `control`, `disturbance` and `cost`");
    };
    let n = rhs.len();
    if n == 0 {
        return invalid("system.rhs is empty");
    }
    let control = compact_set("control", control)?;
    let disturbance = compact_set("disturbance", disturbance)?;
    let (p, q) = (control.dim(), disturbance.dim());
    let exprs = rhs
        .iter()
        .enumerate()
        .map(|(k, s)| parse_expr(&format!("system.rhs[{k}]"), s))
        .collect::<CliResult<Vec<_>>>()?;
    for (k, e) in exprs.iter().enumerate() {
        let a = e.arity();
        if a.x > n || a.u > p || a.v > q {
            return invalid(format!(
                "system.rhs[{k}] references a component beyond n={n}, p={p}, q={q}"
            ));
        }
    }
    let cost = parse_expr("system.cost", cost)?;
    let a = cost.arity();
    if a.u > 0 || a.v > 0 || a.x > n {
        return invalid("system.cost may only use t and x1..xn");
    }
    let [t0, theta] = cfg.horizon.unwrap_or([0.0, 1.0]);
    let rhs_fn = move |t: f64, x: &[f64], u: &[f64], v: &[f64], dx: &mut [f64]| {
        for (d, e) in dx.iter_mut().zip(&exprs) {
            *d = e.eval(t, x, u, v);
        }
    };
    let mut dyn_ = Dynamics::new(n, rhs_fn, control, disturbance, (t0, theta))
        .map_err(|e| CliError::Validation(format!("system: {e}")))?;
    let grid_box = match (&cfg.bounds_lower, &cfg.bounds_upper) {
        (Some(l), Some(u)) => {
            let b = BoundingBox::with_margin(l.clone(), u.clone())
                .map_err(|e| CliError::Validation(format!("system.bounds: {e}")))?;
            dyn_ = dyn_
                .with_bounds(b)
                .map_err(|e| CliError::Validation(format!("system.bounds: {e}")))?;
            Some((l.clone(), u.clone()))
        }
        (None, None) => None,
        _ => return invalid("system: give both bounds_lower and bounds_upper or neither"),
    };
    Ok(SystemSetup {
        id: cfg.name.clone().unwrap_or_else(|| "inline".into()),
        dyn_,
        terminal: Arc::new(move |x: &[f64]| cost.eval(theta, x, &[], &[])),
        z0: cfg.z0.clone(),
        default_u_star: None,
        grid_box,
    })
}
