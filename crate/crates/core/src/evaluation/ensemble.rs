use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::inversion::improves;
use crate::oracle::ValueTable;
use crate::partition::Partition;
use crate::signal::Signal;
use crate::strategies::DisturbanceProcess;
use crate::system::{lex_grid, CompactSet, Dynamics};
use crate::trajectory::Trajectory;

/// What the adversary assumes the controller does on the coming block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AdversaryMode {
    /// The controller answers the disturbance optimally (max-min, the
    /// information pattern of the lower value).
    #[default]
    BestResponse,
    /// The controller repeats the control it applied last.
    LaggedControl,
}

#[derive(Debug, Clone)]
pub enum EnsembleKind {
    OpenLoopBank(Vec<Signal>),
    RandomBangBang {
        count: usize,
        /// Expected number of switches per unit time.
        switch_rate: f64,
        seed: u64,
    },
    AdversarialFeedback {
        table: Arc<ValueTable>,
        mode: AdversaryMode,
    },
    Union(Vec<DisturbanceEnsemble>),
}

#[derive(Debug, Clone)]
pub struct DisturbanceEnsemble {
    pub id: String,
    pub kind: EnsembleKind,
}

/// A resolved ensemble member.
#[derive(Debug, Clone)]
pub enum Member {
    OpenLoop(Signal),
    Adversary { table: Arc<ValueTable>, mode: AdversaryMode },
}

impl DisturbanceEnsemble {
    pub fn open_loop(id: &str, signals: Vec<Signal>) -> Self {
        Self {
            id: id.into(),
            kind: EnsembleKind::OpenLoopBank(signals),
        }
    }

    pub fn random_bang_bang(id: &str, count: usize, switch_rate: f64, seed: u64) -> Self {
        Self {
            id: id.into(),
            kind: EnsembleKind::RandomBangBang {
                count,
                switch_rate,
                seed,
            },
        }
    }

    pub fn adversarial(id: &str, table: Arc<ValueTable>, mode: AdversaryMode) -> Self {
        Self {
            id: id.into(),
            kind: EnsembleKind::AdversarialFeedback { table, mode },
        }
    }

    /// Every constant signal with a value in the enumerated disturbance set.
    pub fn constants(id: &str, dyn_: &Dynamics) -> Result<Self> {
        let signals = dyn_
            .disturbances()
            .iter()
            .map(|v| Signal::constant(dyn_.t0(), dyn_.theta(), v.clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::open_loop(id, signals))
    }

    pub fn union(id: &str, parts: Vec<DisturbanceEnsemble>) -> Self {
        Self {
            id: id.into(),
            kind: EnsembleKind::Union(parts),
        }
    }

    /// Members with their ids, in a fixed order. Union members are
    /// prefixed with the id of the part they come from.
    pub fn members(&self, dyn_: &Dynamics) -> Result<Vec<(String, Member)>> {
        match &self.kind {
            EnsembleKind::OpenLoopBank(signals) => signals
                .iter()
                .enumerate()
                .map(|(k, s)| {
                    s.validate_in(dyn_.disturbance_set(), dyn_.t0(), dyn_.theta())?;
                    Ok((format!("{k}"), Member::OpenLoop(s.clone())))
                })
                .collect(),
            EnsembleKind::RandomBangBang {
                count,
                switch_rate,
                seed,
            } => (0..*count)
                .map(|k| {
                    let s = random_bang_bang_signal(dyn_, *switch_rate, *seed, k as u64)?;
                    Ok((format!("{k}"), Member::OpenLoop(s)))
                })
                .collect(),
            EnsembleKind::AdversarialFeedback { table, mode } => {
                if table.dim() != dyn_.n() {
                    return Err(Error::Dimension {
                        what: "adversary value table",
                        expected: dyn_.n(),
                        got: table.dim(),
                    });
                }
                let tag = match mode {
                    AdversaryMode::BestResponse => "best-response",
                    AdversaryMode::LaggedControl => "lagged-control",
                };
                Ok(vec![(
                    tag.to_string(),
                    Member::Adversary {
                        table: table.clone(),
                        mode: *mode,
                    },
                )])
            }
            EnsembleKind::Union(parts) => {
                let mut out = Vec::new();
                for p in parts {
                    for (id, m) in p.members(dyn_)? {
                        out.push((format!("{}/{id}", p.id), m));
                    }
                }
                Ok(out)
            }
        }
    }
}

/// Extreme points of the disturbance set: the listed points of a finite
/// set, the corners of a box.
fn bang_values(set: &CompactSet) -> Vec<Vec<f64>> {
    match set {
        CompactSet::Finite(points) => points.clone(),
        CompactSet::Box { lower, upper, .. } => {
            let axes: Vec<Vec<f64>> = lower
                .iter()
                .zip(upper)
                .map(|(&l, &u)| if l == u { vec![l] } else { vec![l, u] })
                .collect();
            lex_grid(&axes)
        }
    }
}

/// Member `index` of a random bang-bang bank: switching times form a
/// Poisson process of rate `switch_rate`; each value is drawn uniformly
/// among the extreme points, never repeating the previous one.
pub fn random_bang_bang_signal(dyn_: &Dynamics, switch_rate: f64, seed: u64, index: u64) -> Result<Signal> {
    if !(switch_rate >= 0.0) || !switch_rate.is_finite() {
        return Err(Error::Invalid(format!("switch rate must be finite and >= 0, got {switch_rate}")));
    }
    let values = bang_values(dyn_.disturbance_set());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let (t0, theta) = (dyn_.t0(), dyn_.theta());
    let mut current = rng.random_range(0..values.len());
    let mut t = t0;
    let mut sig: Option<Signal> = None;
    loop {
        let next = if switch_rate > 0.0 {
            let u: f64 = rng.random();
            t - (1.0 - u).ln() / switch_rate
        } else {
            f64::INFINITY
        };
        let end = next.min(theta);
        if end > t {
            match sig.as_mut() {
                Some(s) => s.push(end, values[current].clone())?,
                None => sig = Some(Signal::constant(t, end, values[current].clone())?),
            }
        }
        if next >= theta {
            break;
        }
        t = next;
        if values.len() > 1 {
            let step = rng.random_range(1..values.len());
            current = (current + step) % values.len();
        }
    }
    sig.ok_or_else(|| Error::Invalid("empty horizon".into()))
}

/// Greedy one-block-ahead maximizer of an interpolated value table.
pub struct Adversary<'a> {
    pub dyn_: &'a Dynamics,
    pub table: &'a ValueTable,
    pub mode: AdversaryMode,
}

impl Adversary<'_> {
    fn lookahead(&self, t: f64, t_next: f64, x: &[f64], u: &[f64], v: &[f64]) -> Result<f64> {
        let h = t_next - t;
        let f = self.dyn_.f(t, x, u, v);
        let spec = self.table.spec();
        let y: Vec<f64> = x
            .iter()
            .zip(&f)
            .enumerate()
            .map(|(a, (xi, fi))| (xi + h * fi).clamp(spec.lower[a], spec.upper[a]))
            .collect();
        self.table.value(t_next, &y)
    }

    /// Disturbance value for the block `[t, t_next)` from state `x`.
    pub fn choose(&self, t: f64, t_next: f64, x: &[f64], last_u: Option<&[f64]>) -> Result<Vec<f64>> {
        let mut best: Option<(usize, f64)> = None;
        for (k, v) in self.dyn_.disturbances().iter().enumerate() {
            let score = match (self.mode, last_u) {
                (AdversaryMode::LaggedControl, Some(u)) => self.lookahead(t, t_next, x, u, v)?,
                _ => {
                    let mut worst = f64::INFINITY;
                    for u in self.dyn_.controls() {
                        worst = worst.min(self.lookahead(t, t_next, x, u, v)?);
                    }
                    worst
                }
            };
            match best {
                Some((_, b)) if !improves(-score, -b) => {}
                _ => best = Some((k, score)),
            }
        }
        let (k, _) = best.ok_or(Error::EmptyEnumeration)?;
        Ok(self.dyn_.disturbances()[k].clone())
    }
}

impl DisturbanceProcess for Adversary<'_> {
    fn disturbance_block(
        &mut self,
        part: &Partition,
        history: &Trajectory,
        applied: Option<&Signal>,
        i: usize,
    ) -> Result<Signal> {
        let (a, b) = (part.time(i), part.time(i + 1));
        let last_u = applied.map(|s| s.values().last().expect("signals are nonempty").as_slice());
        let v = self.choose(a, b, history.last_state(), last_u)?;
        Signal::constant(a, b, v)
    }
}
