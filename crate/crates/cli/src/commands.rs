//! The four subcommands. Each returns its main result so that tests can
//! drive them without going through the binary.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::json;

use guarantee_core::evaluation::{
    chain_check, convergence_study, estimate_guaranteed_result, AdversaryMode, ChainReport, DisturbanceEnsemble,
    EstimateOptions, Reference, StudySpec,
};
use guarantee_core::export::{write_run_csv, write_signal_csv, write_trajectory_csv};
use guarantee_core::inversion::{
    check_assumption1, check_assumption2, check_saddle, default_tol_f, state_grid, unit_directions, CheckReport,
};
use guarantee_core::oracle::{
    dp_quasi_value, exact_projection_oracle_for, GridSpec, TargetOracle, ValueGradientOracle, ValueTable,
};
use guarantee_core::strategies::{
    epsilon_net, simulate_closed_loop, ConstantFeedback, EpsilonFeedback, EpsilonStrategyConfig, FullMemoryFeedback,
    UStarConfig, UStarFeedback,
};
use guarantee_core::{bilinear, evaluation::random_bang_bang_signal, CompactSet, Partition, Signal, Trajectory};

use crate::config::{ExperimentConfig, GridConfig, ShiftSet, StrategyConfig};
use crate::error::{invalid, CliError, CliResult};
use crate::registry::{resolve_system, SystemSetup};

type Family = Box<dyn Fn(Option<f64>, &Partition) -> guarantee_core::Result<Box<dyn FullMemoryFeedback>> + Sync>;

/// Creates `path` and writes the digest line followed by `body`.
fn write_file(path: &Path, digest: &str, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# config_sha256={digest}")?;
    body(&mut w)?;
    w.flush()?;
    Ok(())
}

fn out_dir(cfg: &ExperimentConfig, out: Option<&Path>) -> CliResult<PathBuf> {
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn grid_spec(grid: Option<&GridConfig>, setup: &SystemSetup, field: &str) -> CliResult<GridSpec> {
    let default = GridConfig {
        time_steps: 100,
        lower: None,
        upper: None,
        nodes: 41,
    };
    let g = grid.unwrap_or(&default);
    let (lower, upper) = match (&g.lower, &g.upper, &setup.grid_box) {
        (Some(l), Some(u), _) => (l.clone(), u.clone()),
        (None, None, Some((l, u))) => (l.clone(), u.clone()),
        _ => return invalid(format!("{field}: give `lower` and `upper` (the system has no default box)")),
    };
    if lower.len() != setup.dyn_.n() || upper.len() != setup.dyn_.n() {
        return invalid(format!("{field}: box dimension differs from the state dimension"));
    }
    Ok(GridSpec {
        time_steps: g.time_steps,
        nodes: vec![g.nodes; lower.len()],
        lower,
        upper,
    })
}

fn value_table(setup: &SystemSetup, spec: &GridSpec) -> CliResult<ValueTable> {
    let cost = setup.terminal.clone();
    Ok(dp_quasi_value(&setup.dyn_, &move |x: &[f64]| cost(x), spec)?)
}

fn strategy_cfg(cfg: &ExperimentConfig) -> CliResult<&StrategyConfig> {
    cfg.strategy.as_ref().ok_or_else(|| CliError::Validation("missing [strategy] section".into()))
}

fn check_points(field: &str, points: &[Vec<f64>], set: &CompactSet) -> CliResult<()> {
    match points.iter().find(|u| !set.contains(u, 1e-12)) {
        Some(bad) => invalid(format!("{field}: {bad:?} is not in the control set")),
        None if points.is_empty() => invalid(format!("{field} is empty")),
        None => Ok(()),
    }
}

fn build_oracle(cfg: &ExperimentConfig, setup: &SystemSetup) -> CliResult<Arc<dyn TargetOracle>> {
    match cfg.oracle.kind.as_str() {
        "value-gradient" => {
            let spec = grid_spec(cfg.oracle.grid.as_ref(), setup, "oracle.grid")?;
            Ok(Arc::new(ValueGradientOracle::new(Arc::new(value_table(setup, &spec)?))))
        }
        "exact" => {
            let o = exact_projection_oracle_for(&setup.id).map_err(|e| CliError::Validation(format!("oracle: {e}")))?;
            if !o.uses_projection() {
                return invalid(format!("oracle: `{}` has no projection; use strategy `explicit`", setup.id));
            }
            Ok(Arc::new(o))
        }
        other => invalid(format!("oracle.kind: unknown oracle `{other}`")),
    }
}

/// Feedback factory for the configured strategy, indexed by `eps`.
pub fn build_family(cfg: &ExperimentConfig, setup: &SystemSetup) -> CliResult<Family> {
    let s = strategy_cfg(cfg)?;
    let d = setup.dyn_.clone();
    let set = d.control_set().clone();
    let u_star = s.u_star.clone().or_else(|| setup.default_u_star.clone());
    if let Some(u) = &u_star {
        check_points("strategy.u_star", std::slice::from_ref(u), &set)?;
    }
    let shift_set = match &s.shift_set {
        None => d.controls().to_vec(),
        Some(ShiftSet::Named(n)) if n == "signs" => CompactSet::signs(d.p()).enumerate(),
        Some(ShiftSet::Named(n)) => return invalid(format!("strategy.shift_set: unknown set `{n}`")),
        Some(ShiftSet::Points(p)) => p.clone(),
    };
    let eps_default = s.eps;
    match s.id.as_str() {
        "constant" => {
            let u = s.u.clone().ok_or_else(|| CliError::Validation("strategy.u is required for `constant`".into()))?;
            check_points("strategy.u", std::slice::from_ref(&u), &set)?;
            Ok(Box::new(move |_, _| Ok(Box::new(ConstantFeedback { u: u.clone() }) as Box<dyn FullMemoryFeedback>)))
        }
        "explicit" => {
            if setup.id != bilinear::SYSTEM_ID {
                return invalid(format!("strategy `explicit` is only registered for `{}`", bilinear::SYSTEM_ID));
            }
            Ok(Box::new(|_, _| Ok(Box::new(bilinear::ExplicitFeedback::new()) as Box<dyn FullMemoryFeedback>)))
        }
        "ustar" => {
            check_points("strategy.shift_set", &shift_set, &set)?;
            let oracle = build_oracle(cfg, setup)?;
            let conf = UStarConfig {
                shift_set,
                oracle,
                substeps: cfg.partition.substeps,
                u_star,
                v_star: s.v_star.clone(),
            };
            Ok(Box::new(move |_, _| {
                Ok(Box::new(UStarFeedback::new(d.clone(), conf.clone())?) as Box<dyn FullMemoryFeedback>)
            }))
        }
        "ue" | "ubar" => {
            check_points("strategy.shift_set", &shift_set, &set)?;
            let tests = if s.id == "ubar" {
                let t = s
                    .test_set
                    .clone()
                    .ok_or_else(|| CliError::Validation("strategy.test_set is required for `ubar`".into()))?;
                check_points("strategy.test_set", &t, &set)?;
                t
            } else {
                let net = s.net.or(eps_default).ok_or_else(|| {
                    CliError::Validation("strategy.net or strategy.eps is required for `ue`".into())
                })?;
                epsilon_net(&set, net).map_err(|e| CliError::Validation(format!("strategy.net: {e}")))?
            };
            let oracle = build_oracle(cfg, setup)?;
            let base = EpsilonStrategyConfig {
                eps: eps_default.unwrap_or(0.0),
                test_controls: tests,
                shift_set,
                oracle,
                substeps: cfg.partition.substeps,
                u_star,
                v_star: s.v_star.clone(),
            };
            Ok(Box::new(move |eps, _| {
                let eps = eps.or(eps_default).ok_or_else(|| {
                    guarantee_core::Error::Invalid("strategy.eps is required for test-window strategies".into())
                })?;
                let conf = EpsilonStrategyConfig { eps, ..base.clone() };
                Ok(Box::new(EpsilonFeedback::new(d.clone(), conf)?.named(if base.test_controls.len() == 1 {
                    "ubar"
                } else {
                    "ue"
                })) as Box<dyn FullMemoryFeedback>)
            }))
        }
        other => invalid(format!(
            "strategy.id: unknown strategy `{other}`; expected ue, ubar, ustar, explicit or constant"
        )),
    }
}

fn uses_eps(cfg: &ExperimentConfig) -> bool {
    cfg.strategy.as_ref().is_some_and(|s| s.id == "ue" || s.id == "ubar")
}

fn partition(cfg: &ExperimentConfig, setup: &SystemSetup, steps: usize) -> CliResult<Partition> {
    if steps == 0 {
        return invalid("partition.steps must be positive");
    }
    if cfg.partition.substeps == 0 {
        return invalid("partition.substeps must be positive");
    }
    Ok(Partition::uniform(setup.dyn_.t0(), setup.dyn_.theta(), steps)?)
}

fn open_loop_disturbance(cfg: &ExperimentConfig, setup: &SystemSetup) -> CliResult<Signal> {
    let d = cfg
        .disturbance
        .as_ref()
        .ok_or_else(|| CliError::Validation("missing [disturbance] section".into()))?;
    let (t0, theta) = (setup.dyn_.t0(), setup.dyn_.theta());
    let sig = match d.kind.as_str() {
        "constant" => {
            let v = d.value.clone().ok_or_else(|| CliError::Validation("disturbance.value is required".into()))?;
            Signal::constant(t0, theta, v)
        }
        "pieces" => match (&d.breakpoints, &d.values) {
            (Some(b), Some(v)) => Signal::from_pieces(b.clone(), v.clone()),
            _ => return invalid("disturbance: `pieces` needs breakpoints and values"),
        },
        "random" => {
            let rate = d.rate.ok_or_else(|| CliError::Validation("disturbance.rate is required".into()))?;
            let seed = d.seed.ok_or_else(|| CliError::Validation("disturbance.seed is required".into()))?;
            random_bang_bang_signal(&setup.dyn_, rate, seed, d.index)
        }
        other => return invalid(format!("disturbance.kind: unknown kind `{other}`")),
    }
    .map_err(|e| CliError::Validation(format!("disturbance: {e}")))?;
    sig.validate_in(setup.dyn_.disturbance_set(), t0, theta)
        .map_err(|e| CliError::Validation(format!("disturbance: {e}")))?;
    Ok(sig)
}

pub struct SimulateOutput {
    pub files: Vec<PathBuf>,
    pub trajectory: Trajectory,
}

pub fn cmd_simulate(cfg: &ExperimentConfig, out: Option<&Path>) -> CliResult<SimulateOutput> {
    let setup = resolve_system(&cfg.system)?;
    let family = build_family(cfg, &setup)?;
    let part = partition(cfg, &setup, cfg.partition.steps)?;
    let v = open_loop_disturbance(cfg, &setup)?;
    let mut fb = family(None, &part)?;
    let run = simulate_closed_loop(&setup.dyn_, &part, fb.as_mut(), &v, &setup.z0, cfg.partition.substeps)?;
    let dir = out_dir(cfg, out)?;
    let digest = cfg.digest();
    let files = vec![
        dir.join("trajectory.csv"),
        dir.join("control.csv"),
        dir.join("disturbance.csv"),
        dir.join("run.csv"),
    ];
    write_file(&files[0], &digest, |w| write_trajectory_csv(&run.trajectory, w))?;
    write_file(&files[1], &digest, |w| write_signal_csv(&run.control, "u", w))?;
    write_file(&files[2], &digest, |w| write_signal_csv(&run.disturbance, "v", w))?;
    write_file(&files[3], &digest, |w| write_run_csv(&run, &part, w))?;
    Ok(SimulateOutput {
        files,
        trajectory: run.trajectory,
    })
}

/// Writes the lower-value table and returns `V(t0, z0)`.
pub fn cmd_value(cfg: &ExperimentConfig, out: Option<&Path>) -> CliResult<f64> {
    let setup = resolve_system(&cfg.system)?;
    let spec = grid_spec(cfg.grid.as_ref(), &setup, "grid")?;
    let table = value_table(&setup, &spec)?;
    let v = table.value(setup.dyn_.t0(), &setup.z0)?;
    let dir = out_dir(cfg, out)?;
    write_file(&dir.join("value_table.csv"), &cfg.digest(), |w| table.write_csv(w))?;
    Ok(v)
}

pub fn cmd_check(cfg: &ExperimentConfig, out: Option<&Path>) -> CliResult<CheckReport> {
    let setup = resolve_system(&cfg.system)?;
    let c = cfg
        .check
        .as_ref()
        .ok_or_else(|| CliError::Validation("missing [check] section".into()))?;
    let d = &setup.dyn_;
    if c.lower.len() != d.n() || c.upper.len() != d.n() || c.per_axis == 0 {
        return invalid("check: lower/upper must match the state dimension and per_axis must be positive");
    }
    let states = state_grid(&c.lower, &c.upper, c.per_axis);
    let tx: Vec<(f64, Vec<f64>)> = c
        .times
        .iter()
        .flat_map(|&t| states.iter().map(move |x| (t, x.clone())))
        .collect();
    if let Some(bad) = c.directions.iter().flatten().find(|s| s.len() != d.n()) {
        return invalid(format!("check.directions: {bad:?} has the wrong dimension"));
    }
    let dirs = c.directions.clone().unwrap_or_else(|| unit_directions(d.n()));
    let txs = || -> Vec<(f64, Vec<f64>, Vec<f64>)> {
        tx.iter()
            .flat_map(|(t, x)| dirs.iter().map(move |s| (*t, x.clone(), s.clone())))
            .collect()
    };
    let tol_f = c.tol_f.unwrap_or_else(|| default_tol_f(d, &tx));
    let report = match c.kind.as_str() {
        "assumption1" => {
            let tests = c
                .test_set
                .as_ref()
                .ok_or_else(|| CliError::Validation("check.test_set is required".into()))?;
            check_assumption1(d, tests, &tx, d.controls(), tol_f)?
        }
        "assumption2" => {
            let p_bar = c.p_bar.as_ref().ok_or_else(|| CliError::Validation("check.p_bar is required".into()))?;
            check_assumption2(d, p_bar, &txs(), tol_f)?
        }
        "saddle" => check_saddle(d, &txs(), c.saddle_tol),
        other => return invalid(format!("check.kind: unknown check `{other}`")),
    };
    let dir = out_dir(cfg, out)?;
    let digest = cfg.digest();
    let mut rec = serde_json::to_value(&report).expect("report serializes");
    rec["config_sha256"] = json!(digest);
    let mut w = BufWriter::new(File::create(dir.join("check.json"))?);
    writeln!(w, "{rec}")?;
    w.flush()?;
    Ok(report)
}

/// Adversary parts parsed from the ensemble config.
fn adversary_modes(names: &[String]) -> CliResult<Vec<AdversaryMode>> {
    names
        .iter()
        .map(|n| match n.as_str() {
            "best-response" => Ok(AdversaryMode::BestResponse),
            "lagged-control" => Ok(AdversaryMode::LaggedControl),
            other => invalid(format!("ensemble.adversary: unknown mode `{other}`")),
        })
        .collect()
}

fn adversaries(modes: &[AdversaryMode], table: &Arc<ValueTable>) -> Vec<DisturbanceEnsemble> {
    modes
        .iter()
        .map(|m| {
            let id = match m {
                AdversaryMode::BestResponse => "adv",
                AdversaryMode::LaggedControl => "adv-lag",
            };
            DisturbanceEnsemble::adversarial(id, table.clone(), *m)
        })
        .collect()
}

/// Open-loop part of the configured ensemble: random bank and listed signals.
fn open_loop_bank(cfg: &ExperimentConfig, setup: &SystemSetup) -> CliResult<Option<DisturbanceEnsemble>> {
    let e = cfg
        .ensemble
        .as_ref()
        .ok_or_else(|| CliError::Validation("missing [ensemble] section".into()))?;
    let mut parts = Vec::new();
    if let Some(r) = &e.random {
        let seed = r
            .seed
            .ok_or_else(|| CliError::Validation("ensemble.random.seed is required (no implicit seeds)".into()))?;
        if r.count == 0 {
            return invalid("ensemble.random.count must be positive");
        }
        parts.push(DisturbanceEnsemble::random_bang_bang("rbb", r.count, r.rate, seed));
    }
    if !e.signals.is_empty() {
        let signals = e
            .signals
            .iter()
            .map(|p| Signal::from_pieces(p.breakpoints.clone(), p.values.clone()))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|err| CliError::Validation(format!("ensemble.signals: {err}")))?;
        for s in &signals {
            s.validate_in(setup.dyn_.disturbance_set(), setup.dyn_.t0(), setup.dyn_.theta())
                .map_err(|err| CliError::Validation(format!("ensemble.signals: {err}")))?;
        }
        parts.push(DisturbanceEnsemble::open_loop("bank", signals));
    }
    Ok(match parts.len() {
        0 => None,
        1 => parts.pop(),
        _ => Some(DisturbanceEnsemble::union("open-loop", parts)),
    })
}

pub struct StudyOutput {
    pub summary: serde_json::Value,
    pub gq: f64,
    pub chain: Option<ChainReport>,
}

pub fn cmd_study(cfg: &ExperimentConfig, out: Option<&Path>) -> CliResult<StudyOutput> {
    let setup = resolve_system(&cfg.system)?;
    let st = cfg
        .study
        .as_ref()
        .ok_or_else(|| CliError::Validation("missing [study] section".into()))?;
    let e = cfg
        .ensemble
        .as_ref()
        .ok_or_else(|| CliError::Validation("missing [ensemble] section".into()))?;
    let modes = adversary_modes(&e.adversary)?;
    let open = open_loop_bank(cfg, &setup)?;
    let family = build_family(cfg, &setup)?;
    for &s in &st.steps {
        partition(cfg, &setup, s)?;
    }

    let spec = grid_spec(cfg.grid.as_ref(), &setup, "grid")?;
    let table = Arc::new(value_table(&setup, &spec)?);
    let gq = table.value(setup.dyn_.t0(), &setup.z0)?;

    let constants = DisturbanceEnsemble::constants("const", &setup.dyn_)?;
    let mut parts: Vec<DisturbanceEnsemble> = open.iter().cloned().collect();
    if e.constants {
        parts.push(constants.clone());
    }
    parts.extend(adversaries(&modes, &table));
    if parts.is_empty() {
        return invalid("ensemble: no members configured");
    }
    let ensemble = DisturbanceEnsemble::union("ensemble", parts);

    let eps: Vec<Option<f64>> = if !uses_eps(cfg) {
        vec![None]
    } else if st.eps.is_empty() {
        vec![strategy_cfg(cfg)?.eps]
    } else {
        st.eps.iter().copied().map(Some).collect()
    };
    let spec = StudySpec {
        strategy: strategy_cfg(cfg)?.id.clone(),
        eps,
        steps: st.steps.clone(),
        coupled: st.coupled,
        substeps: cfg.partition.substeps,
        reference: Some(Reference {
            value: gq,
            trend_tol: st.trend_tol,
            lower_tol: st.lower_tol,
        }),
    };
    let cost_fn = setup.terminal.clone();
    let cost = move |t: &Trajectory| cost_fn(t.last_state());
    let table_out = convergence_study(&setup.dyn_, &cost, &family, &ensemble, &spec, &setup.z0)
        .map_err(|err| match err {
            guarantee_core::Error::Invalid(m) => CliError::Validation(format!("study: {m}")),
            other => CliError::from(other),
        })?;

    let chain = if st.chain {
        let Some(open) = open.clone() else {
            return invalid("study.chain needs an open-loop bank in [ensemble]");
        };
        let steps = *st.steps.last().expect("validated nonempty");
        let part = partition(cfg, &setup, steps)?;
        let eps = *spec.eps.last().expect("nonempty");
        let factory = || family(eps, &part);
        let opts = EstimateOptions {
            strategy: &spec.strategy,
            eps,
            substeps: cfg.partition.substeps,
        };
        let est = |ens: &DisturbanceEnsemble| -> CliResult<f64> {
            Ok(estimate_guaranteed_result(&setup.dyn_, &cost, &factory, ens, &part, &setup.z0, opts)?.sup_cost)
        };
        let closed = DisturbanceEnsemble::union("compact", vec![open.clone(), constants]);
        let mut s_parts = vec![closed.clone()];
        s_parts.extend(adversaries(
            &[AdversaryMode::BestResponse, AdversaryMode::LaggedControl],
            &table,
        ));
        let arbitrary = DisturbanceEnsemble::union("arbitrary", s_parts);
        let (gp, gc, gs) = (est(&open)?, est(&closed)?, est(&arbitrary)?);
        Some(chain_check(gq, gp, gc, gs, st.chain_tol))
    } else {
        None
    };

    let digest = cfg.digest();
    let extra = json!({
        "config_sha256": digest,
        "gq": gq,
        "chain": chain,
    });
    let dir = out_dir(cfg, out)?;
    let mut w = BufWriter::new(File::create(dir.join("study.jsonl"))?);
    table_out.write_jsonl(&mut w, extra)?;
    w.flush()?;
    write_file(&dir.join("study.csv"), &digest, |w| table_out.write_csv(w))?;

    let text = std::fs::read_to_string(dir.join("study.jsonl"))?;
    let summary: serde_json::Value =
        serde_json::from_str(text.lines().last().expect("summary line")).expect("summary is json");
    Ok(StudyOutput { summary, gq, chain })
}
