//! Training and greedy evaluation of per-type mean-field Q-learners under a
//! fixed contract.

use cpmes_core::PortableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contract::{contract_rewards, Contract, ContractError};
use crate::env::{Action, AgentKind, Cleanup, CleanupConfig, EnvError, N_ACTIONS};
use crate::features::{featurize, FEATURE_CARDINALITY};
use crate::qtable::{mean_action, mtmfq_update, QError, QTable, QTableSnapshot, QTableSpec};

/// Salt separating evaluation episode seeds from training episode seeds.
const EVAL_SALT: u64 = 0x5eed_e7a1_0000_0000;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Contract(#[from] ContractError),
    #[error(transparent)]
    Q(#[from] QError),
    #[error("invalid training configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub episodes: usize,
    /// Learning rate η.
    pub learning_rate: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of episodes over which ε decays linearly.
    pub epsilon_decay_fraction: f64,
    pub eval_episodes: usize,
    /// Simplex grid quanta for mean actions (4 gives a 0.25 step).
    pub mean_action_resolution: u32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 5_000,
            learning_rate: 0.1,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.6,
            eval_episodes: 50,
            mean_action_resolution: 4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must be in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=1.0).contains(&self.epsilon_end) {
            return bad("epsilon bounds must be in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.epsilon_decay_fraction) {
            return bad("epsilon_decay_fraction must be in [0, 1]");
        }
        if self.eval_episodes == 0 {
            return bad("eval_episodes must be at least 1");
        }
        Ok(())
    }

    /// Linear decay from `epsilon_start` to `epsilon_end`, then flat.
    pub fn epsilon(&self, episode: usize) -> f64 {
        let horizon = self.epsilon_decay_fraction * self.episodes as f64;
        if horizon <= 0.0 || episode as f64 >= horizon {
            return self.epsilon_end;
        }
        let f = episode as f64 / horizon;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * f
    }
}

/// Roster and contract for one training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub n_harvesters: usize,
    pub contract: Contract,
}

impl Scenario {
    pub fn kinds(&self) -> Vec<AgentKind> {
        let mut kinds = vec![AgentKind::Harvester; self.n_harvesters];
        kinds.extend(std::iter::repeat(AgentKind::Cleaner).take(self.contract.n_cleaners));
        kinds
    }

    /// Upper bound on |Q| implied by the per-step reward range.
    pub fn q_bound(&self, env: &CleanupConfig) -> f64 {
        let r = env.harvest_reward;
        let cleaner_max = if self.contract.n_cleaners == 0 {
            0.0
        } else {
            self.contract.alpha * r * self.n_harvesters as f64 / self.contract.n_cleaners as f64
        };
        let step_max = (r + env.cost_harvester).max(cleaner_max + env.cost_cleaner);
        step_max / (1.0 - env.gamma) * (1.0 + 1e-9)
    }
}

/// One Q-table per agent type, indexed by `AgentKind::index`.
#[derive(Debug, Clone)]
pub struct Policies {
    pub tables: [QTable; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySnapshot {
    pub scenario: Scenario,
    pub harvester: QTableSnapshot,
    pub cleaner: QTableSnapshot,
}

impl Policies {
    pub fn new(resolution: u32) -> Result<Self, QError> {
        let spec = QTableSpec { n_actions: N_ACTIONS, n_types: 2, feature_cardinality: FEATURE_CARDINALITY, resolution };
        Ok(Self { tables: [QTable::new(spec.clone())?, QTable::new(spec)?] })
    }

    pub fn snapshot(&self, scenario: Scenario) -> PolicySnapshot {
        PolicySnapshot { scenario, harvester: self.tables[0].snapshot(), cleaner: self.tables[1].snapshot() }
    }

    pub fn from_snapshot(snapshot: PolicySnapshot) -> Result<Self, QError> {
        Ok(Self { tables: [QTable::from_snapshot(snapshot.harvester)?, QTable::from_snapshot(snapshot.cleaner)?] })
    }
}

/// Summary of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    /// Undiscounted contract return per agent, roster order.
    pub returns: Vec<f64>,
    /// Sum of all agents' rewards.
    pub collective_reward: f64,
    pub welfare: f64,
    pub harvested: u32,
    pub cleaned: usize,
    /// Apples on the map after each step; entry 0 is the initial count.
    pub apples: Vec<usize>,
    /// Waste cells after each step; entry 0 is the initial count.
    pub waste: Vec<usize>,
}

/// Learning curve entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub episode: usize,
    pub epsilon: f64,
    pub collective_reward: f64,
    pub welfare: f64,
    pub harvested: u32,
    pub cleaned: usize,
}

enum Mode {
    Learn { epsilon: f64, eta: f64 },
    Greedy,
}

/// Per-agent mean action of every type over the other agents inside the
/// observer's window. Before any action has been taken, neighbours are
/// assumed uniform.
fn typed_means(env: &Cleanup, kinds: &[AgentKind], actions: Option<&[usize]>) -> Vec<[Option<Vec<f64>>; 2]> {
    let agents = &env.state.agents;
    let radius = env.config.view_radius;
    (0..kinds.len())
        .map(|i| {
            let mut out: [Option<Vec<f64>>; 2] = [None, None];
            for kind in [AgentKind::Harvester, AgentKind::Cleaner] {
                let near: Vec<usize> = (0..kinds.len())
                    .filter(|&j| {
                        j != i
                            && kinds[j] == kind
                            && agents[j].row.abs_diff(agents[i].row) <= radius
                            && agents[j].col.abs_diff(agents[i].col) <= radius
                    })
                    .collect();
                out[kind.index()] = match actions {
                    _ if near.is_empty() => None,
                    None => Some(vec![1.0 / N_ACTIONS as f64; N_ACTIONS]),
                    Some(a) => mean_action(&near.iter().map(|&j| a[j]).collect::<Vec<_>>(), N_ACTIONS),
                };
            }
            out
        })
        .collect()
}

fn state_keys(
    env: &Cleanup,
    policies: &Policies,
    kinds: &[AgentKind],
    means: &[[Option<Vec<f64>>; 2]],
) -> Result<Vec<u64>, QError> {
    (0..kinds.len())
        .map(|i| {
            let feature = featurize(&env.observe(i));
            let m = &means[i];
            policies.tables[kinds[i].index()].key(feature, &[m[0].as_deref(), m[1].as_deref()])
        })
        .collect()
}

/// ε-greedy with uniformly random tie-breaking.
pub(crate) fn choose(table: &QTable, key: u64, epsilon: f64, rng: &mut PortableRng) -> usize {
    if epsilon > 0.0 && rng.bernoulli(epsilon) {
        return rng.below(table.spec().n_actions);
    }
    let best = table.greedy_actions(key);
    best[if best.len() == 1 { 0 } else { rng.below(best.len()) }]
}

/// Optional per-step log sink for rendering an episode.
pub type RenderSink<'a> = Option<&'a mut Vec<String>>;

fn run_episode(
    env_config: &CleanupConfig,
    scenario: &Scenario,
    policies: &mut Policies,
    env_seed: u64,
    mode: Mode,
    rng: &mut PortableRng,
    mut render: RenderSink<'_>,
) -> Result<EpisodeOutcome, TrainError> {
    let kinds = scenario.kinds();
    let mut env = Cleanup::reset(env_config, scenario.n_harvesters, scenario.contract.n_cleaners, env_seed)?;
    let n = kinds.len();
    let mut out = EpisodeOutcome {
        returns: vec![0.0; n],
        collective_reward: 0.0,
        welfare: 0.0,
        harvested: 0,
        cleaned: 0,
        apples: vec![env.state.apple_count()],
        waste: vec![env.state.waste_count()],
    };
    if let Some(log) = render.as_deref_mut() {
        log.push(format!("t=0\n{}", env.render()));
    }
    let mut keys = state_keys(&env, policies, &kinds, &typed_means(&env, &kinds, None))?;
    while !env.is_done() {
        let epsilon = match mode {
            Mode::Learn { epsilon, .. } => epsilon,
            Mode::Greedy => 0.0,
        };
        let actions: Vec<usize> =
            (0..n).map(|i| choose(&policies.tables[kinds[i].index()], keys[i], epsilon, rng)).collect();
        let joint: Vec<Action> = actions.iter().map(|&a| Action::from_index(a)).collect();
        let events = env.step(&joint)?;
        let shaped = contract_rewards(env_config, &scenario.contract, &kinds, &events)?;
        let next_means = typed_means(&env, &kinds, Some(&actions));
        let next_keys = state_keys(&env, policies, &kinds, &next_means)?;
        if let Mode::Learn { eta, .. } = mode {
            let terminal = env.is_done();
            for i in 0..n {
                let next = (!terminal).then_some(next_keys[i]);
                let table = &mut policies.tables[kinds[i].index()];
                mtmfq_update(table, keys[i], actions[i], shaped.rewards[i], next, eta, env_config.gamma);
            }
        }
        for i in 0..n {
            out.returns[i] += shaped.rewards[i];
        }
        out.collective_reward += shaped.rewards.iter().sum::<f64>();
        out.welfare += shaped.welfare;
        out.harvested += events.total_harvested();
        out.cleaned += events.total_cleaned();
        out.apples.push(env.state.apple_count());
        out.waste.push(env.state.waste_count());
        if let Some(log) = render.as_deref_mut() {
            let mut frame = format!("t={}\n{}", env.state.timestep, env.render());
            for i in 0..n {
                let tag = if kinds[i] == AgentKind::Harvester { 'H' } else { 'C' };
                if events.harvested[i] > 0 {
                    frame.push_str(&format!("event {tag}{i} harvest\n"));
                }
                if events.cleaned[i] {
                    frame.push_str(&format!("event {tag}{i} clean\n"));
                }
            }
            log.push(frame);
        }
        keys = next_keys;
    }
    Ok(out)
}

/// Greedy evaluation over `episodes` fixed-seed episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: Vec<EpisodeOutcome>,
}

impl EvalReport {
    pub fn mean_welfare(&self) -> f64 {
        self.episodes.iter().map(|e| e.welfare).sum::<f64>() / self.episodes.len() as f64
    }

    /// Mean return per agent, roster order.
    pub fn mean_returns(&self) -> Vec<f64> {
        let n = self.episodes[0].returns.len();
        let m = self.episodes.len() as f64;
        (0..n).map(|i| self.episodes.iter().map(|e| e.returns[i]).sum::<f64>() / m).collect()
    }

    /// Median apple count after `step` steps across episodes.
    pub fn median_apples_at(&self, step: usize) -> f64 {
        let mut v: Vec<usize> = self.episodes.iter().map(|e| e.apples[step.min(e.apples.len() - 1)]).collect();
        v.sort_unstable();
        let k = v.len();
        if k % 2 == 1 {
            v[k / 2] as f64
        } else {
            (v[k / 2 - 1] + v[k / 2]) as f64 / 2.0
        }
    }

    pub fn mean_apples_at(&self, step: usize) -> f64 {
        self.episodes.iter().map(|e| e.apples[step.min(e.apples.len() - 1)] as f64).sum::<f64>()
            / self.episodes.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub scenario: Scenario,
    pub curve: Vec<CurvePoint>,
    pub policies: Policies,
    pub eval: EvalReport,
    /// Largest |Q| seen, against the analytic bound.
    pub max_abs_q: f64,
    pub q_bound: f64,
}

/// Trains under `scenario` and evaluates the greedy policies.
pub fn train(
    env_config: &CleanupConfig,
    config: &TrainConfig,
    scenario: Scenario,
    seed: u64,
) -> Result<TrainReport, TrainError> {
    env_config.validate()?;
    config.validate()?;
    let mut policies = Policies::new(config.mean_action_resolution)?;
    let mut rng = PortableRng::derive(seed, u64::MAX);
    let q_bound = scenario.q_bound(env_config);
    let mut curve = Vec::with_capacity(config.episodes);
    for episode in 0..config.episodes {
        let epsilon = config.epsilon(episode);
        let env_seed = PortableRng::derive(seed, episode as u64).next_u64();
        let mode = Mode::Learn { epsilon, eta: config.learning_rate };
        let out = run_episode(env_config, &scenario, &mut policies, env_seed, mode, &mut rng, None)?;
        curve.push(CurvePoint {
            episode,
            epsilon,
            collective_reward: out.collective_reward,
            welfare: out.welfare,
            harvested: out.harvested,
            cleaned: out.cleaned,
        });
    }
    for table in &policies.tables {
        table.check_bound(q_bound)?;
    }
    let max_abs_q = policies.tables.iter().map(QTable::max_abs).fold(0.0, f64::max);
    let eval = evaluate(env_config, &scenario, &mut policies, config.eval_episodes, seed)?;
    log::debug!(
        "trained α={} N_c={} over {} episodes: welfare {:.2}",
        scenario.contract.alpha,
        scenario.contract.n_cleaners,
        config.episodes,
        eval.mean_welfare()
    );
    Ok(TrainReport { scenario, curve, policies, eval, max_abs_q, q_bound })
}

/// Evaluation episode `i` of `seed` always sees the same initial state, so
/// different contracts are compared on common random numbers.
pub fn eval_env_seed(seed: u64, episode: usize) -> u64 {
    PortableRng::derive(seed ^ EVAL_SALT, episode as u64).next_u64()
}

pub fn evaluate(
    env_config: &CleanupConfig,
    scenario: &Scenario,
    policies: &mut Policies,
    episodes: usize,
    seed: u64,
) -> Result<EvalReport, TrainError> {
    let mut rng = PortableRng::derive(seed ^ EVAL_SALT, u64::MAX);
    let episodes = (0..episodes)
        .map(|e| run_episode(env_config, scenario, policies, eval_env_seed(seed, e), Mode::Greedy, &mut rng, None))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalReport { episodes })
}

/// Plays one greedy episode and returns a frame per step, each followed by
/// its harvest/clean events.
pub fn render_episode(
    env_config: &CleanupConfig,
    scenario: &Scenario,
    policies: &mut Policies,
    seed: u64,
) -> Result<(EpisodeOutcome, Vec<String>), TrainError> {
    let mut rng = PortableRng::derive(seed ^ EVAL_SALT, u64::MAX);
    let mut frames = Vec::new();
    let out = run_episode(env_config, scenario, policies, eval_env_seed(seed, 0), Mode::Greedy, &mut rng, Some(&mut frames))?;
    Ok((out, frames))
}

/// Trailing moving average with a window of `window` entries.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (i, v) in values.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epsilon_schedule() {
        let c = TrainConfig { episodes: 100, ..Default::default() };
        assert_eq!(c.epsilon(0), 1.0);
        assert!((c.epsilon(30) - (1.0 - 0.95 * 0.5)).abs() < 1e-12);
        assert_eq!(c.epsilon(60), 0.05);
        assert_eq!(c.epsilon(99), 0.05);
    }

    #[test]
    fn moving_average_window() {
        let ma = moving_average(&[1.0, 2.0, 3.0, 4.0], 2);
        assert_eq!(ma, vec![1.0, 1.5, 2.5, 3.5]);
    }

    #[test]
    fn typed_means_cover_neighbours_only() {
        let env_cfg = CleanupConfig::default();
        let mut env = Cleanup::reset(&env_cfg, 3, 1, 0).unwrap();
        let place = [(5, 0), (6, 2), (5, 10), (3, 1)];
        for (a, (r, c)) in env.state.agents.iter_mut().zip(place) {
            a.row = r;
            a.col = c;
        }
        let kinds = [AgentKind::Harvester, AgentKind::Harvester, AgentKind::Harvester, AgentKind::Cleaner];
        let means = typed_means(&env, &kinds, Some(&[0, 1, 2, 5]));
        assert_eq!(means[0][0].as_deref(), Some(&[0.0, 1.0, 0.0, 0.0, 0.0, 0.0][..]));
        assert_eq!(means[0][1].as_deref(), Some(&[0.0, 0.0, 0.0, 0.0, 0.0, 1.0][..]));
        assert_eq!(means[2], [None, None]);
        let m = means[3][0].as_ref().unwrap();
        assert_eq!(m, &vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let start = typed_means(&env, &kinds, None);
        assert!((start[0][1].as_ref().unwrap().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn short_training_run_is_deterministic() {
        let env = CleanupConfig::default();
        let cfg = TrainConfig { episodes: 3, eval_episodes: 2, ..Default::default() };
        let scenario = Scenario { n_harvesters: 2, contract: Contract::new(0.1, 1).unwrap() };
        let a = train(&env, &cfg, scenario, 4).unwrap();
        let b = train(&env, &cfg, scenario, 4).unwrap();
        assert_eq!(a.curve, b.curve);
        assert_eq!(a.eval, b.eval);
        assert!(a.max_abs_q <= a.q_bound);
        for e in &a.eval.episodes {
            assert!((e.collective_reward - e.welfare).abs() < 1e-9);
            assert_eq!(e.apples.len(), env.episode_length + 1);
        }
    }
}
