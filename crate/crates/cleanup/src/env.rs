//! The Clean-up gridworld: a river that silts up with waste and an orchard
//! whose apple regrowth slows as the river gets dirtier.
//!
//! Rows `river_rows` hold waste, rows `harvest_rows` hold apples, anything
//! between is a walkable buffer. Harvesters move within the orchard and the
//! buffer, cleaners within the river and the buffer.

use std::fmt;

use cpmes_core::PortableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid environment configuration: {0}")]
    Config(String),
    #[error("{agents} {kind}s do not fit in {cells} spawnable cells")]
    TooManyAgents { kind: AgentKind, agents: usize, cells: usize },
    #[error("expected {expected} actions, got {got}")]
    ActionCount { expected: usize, got: usize },
}

/// Inclusive row interval spanning the full grid width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rows {
    pub first: usize,
    pub last: usize,
}

impl Rows {
    pub fn contains(&self, row: usize) -> bool {
        row >= self.first && row <= self.last
    }

    pub fn count(&self) -> usize {
        self.last + 1 - self.first
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleanupConfig {
    pub width: usize,
    pub height: usize,
    pub river_rows: Rows,
    pub harvest_rows: Rows,
    /// Per empty river cell, per step.
    pub waste_spawn_prob: f64,
    /// Per empty orchard cell, per step, on a clean river.
    pub apple_spawn_base_prob: f64,
    /// Waste density at which apples stop regrowing.
    pub pollution_threshold: f64,
    pub initial_apple_density: f64,
    pub initial_waste_density: f64,
    pub episode_length: usize,
    pub harvest_reward: f64,
    /// Living cost per harvester per step.
    pub cost_harvester: f64,
    /// Cost per successful cleaning action.
    pub cost_cleaner: f64,
    pub gamma: f64,
    /// Observation window radius (window side is `2r + 1`); also the
    /// neighbourhood radius for mean actions.
    pub view_radius: usize,
}

impl Default for CleanupConfig {
    fn default() -> Self {
        Self {
            width: 15,
            height: 8,
            river_rows: Rows { first: 0, last: 2 },
            harvest_rows: Rows { first: 4, last: 7 },
            waste_spawn_prob: 0.005,
            apple_spawn_base_prob: 0.15,
            pollution_threshold: 0.4,
            initial_apple_density: 0.3,
            initial_waste_density: 0.0,
            episode_length: 200,
            harvest_reward: 1.0,
            cost_harvester: 0.01,
            cost_cleaner: 0.05,
            gamma: 0.995,
            view_radius: 2,
        }
    }
}

impl CleanupConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: String| Err(EnvError::Config(m));
        if self.width == 0 || self.height == 0 {
            return bad("grid must be non-empty".into());
        }
        for (name, r) in [("river", self.river_rows), ("harvest", self.harvest_rows)] {
            if r.first > r.last || r.last >= self.height {
                return bad(format!("{name} rows {}..={} outside a grid of height {}", r.first, r.last, self.height));
            }
        }
        if self.river_rows.last >= self.harvest_rows.first {
            return bad("the river must lie strictly above the orchard".into());
        }
        for (name, p) in [
            ("waste_spawn_prob", self.waste_spawn_prob),
            ("apple_spawn_base_prob", self.apple_spawn_base_prob),
            ("pollution_threshold", self.pollution_threshold),
            ("initial_apple_density", self.initial_apple_density),
            ("initial_waste_density", self.initial_waste_density),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} is not in [0, 1]"));
            }
        }
        if self.pollution_threshold <= 0.0 {
            return bad("pollution_threshold must be positive".into());
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma = {} is not in (0, 1)", self.gamma));
        }
        if self.episode_length == 0 {
            return bad("episode_length must be at least 1".into());
        }
        Ok(())
    }

    pub fn river_cells(&self) -> usize {
        self.river_rows.count() * self.width
    }

    pub fn harvest_cells(&self) -> usize {
        self.harvest_rows.count() * self.width
    }

    /// Rows an agent of `kind` may occupy: its own region plus the buffer.
    pub fn zone(&self, kind: AgentKind) -> Rows {
        match kind {
            AgentKind::Harvester => Rows { first: self.river_rows.last + 1, last: self.harvest_rows.last },
            AgentKind::Cleaner => Rows { first: self.river_rows.first, last: self.harvest_rows.first - 1 },
        }
    }

    /// Expected apple-spawn probability per empty orchard cell at the given
    /// waste density.
    pub fn apple_spawn_prob(&self, waste_density: f64) -> f64 {
        self.apple_spawn_base_prob * (1.0 - waste_density / self.pollution_threshold).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    Harvester,
    Cleaner,
}

impl AgentKind {
    pub fn index(&self) -> usize {
        match self {
            AgentKind::Harvester => 0,
            AgentKind::Cleaner => 1,
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgentKind::Harvester => "harvester",
            AgentKind::Cleaner => "cleaner",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    Stay,
    /// Harvest on an apple cell (harvesters) or clean a waste cell (cleaners).
    Interact,
}

pub const N_ACTIONS: usize = 6;

impl Action {
    pub const ALL: [Action; N_ACTIONS] =
        [Action::Up, Action::Down, Action::Left, Action::Right, Action::Stay, Action::Interact];

    pub fn index(&self) -> usize {
        *self as usize
    }

    pub fn from_index(i: usize) -> Action {
        Action::ALL[i]
    }

    fn delta(&self) -> (isize, isize) {
        match self {
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
            Action::Left => (0, -1),
            Action::Right => (0, 1),
            Action::Stay | Action::Interact => (0, 0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Agent {
    pub kind: AgentKind,
    pub row: usize,
    pub col: usize,
    /// Direction of the last move attempt.
    pub facing: Action,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    /// Harvesters first, then cleaners.
    pub agents: Vec<Agent>,
    pub apples: Vec<bool>,
    pub waste: Vec<bool>,
    pub timestep: usize,
}

impl EnvState {
    pub fn apple_count(&self) -> usize {
        self.apples.iter().filter(|a| **a).count()
    }

    pub fn waste_count(&self) -> usize {
        self.waste.iter().filter(|w| **w).count()
    }

    pub fn n_of(&self, kind: AgentKind) -> usize {
        self.agents.iter().filter(|a| a.kind == kind).count()
    }
}

/// What happened in one step, per agent and in aggregate.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepEvents {
    /// Apples harvested by each agent (0 or 1).
    pub harvested: Vec<u32>,
    /// Whether each agent removed a waste cell.
    pub cleaned: Vec<bool>,
    pub apples_spawned: usize,
    /// Empty orchard cells that could have received an apple.
    pub apple_spawn_opportunities: usize,
    /// Spawn probability applied to each opportunity this step.
    pub apple_spawn_prob: f64,
    pub waste_spawned: usize,
    pub blocked_moves: usize,
}

impl StepEvents {
    pub fn total_harvested(&self) -> u32 {
        self.harvested.iter().sum()
    }

    pub fn total_cleaned(&self) -> usize {
        self.cleaned.iter().filter(|c| **c).count()
    }
}

/// Egocentric `(2r+1)²` window, row-major, centred on the agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentObservation {
    pub kind: AgentKind,
    /// Direction of the observer's last move attempt.
    pub facing: Action,
    /// River-wide waste density as a fraction of the pollution threshold.
    pub pollution: f64,
    pub radius: usize,
    pub cells: Vec<ObservedCell>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservedCell {
    /// Outside the grid or outside the observer's movement zone.
    pub wall: bool,
    pub apple: bool,
    pub waste: bool,
    /// Other harvesters / cleaners on this cell (the observer excluded).
    pub harvesters: u8,
    pub cleaners: u8,
}

impl AgentObservation {
    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    /// Cell at offset `(dr, dc)` from the observer.
    pub fn at(&self, dr: isize, dc: isize) -> &ObservedCell {
        let r = self.radius as isize;
        let side = self.side() as isize;
        &self.cells[((dr + r) * side + (dc + r)) as usize]
    }
}

/// A running Clean-up episode. Owns its random stream so `step` is a pure
/// function of state, actions and that stream.
#[derive(Debug, Clone)]
pub struct Cleanup {
    pub config: CleanupConfig,
    pub state: EnvState,
    rng: PortableRng,
}

impl Cleanup {
    pub fn reset(config: &CleanupConfig, n_harvesters: usize, n_cleaners: usize, seed: u64) -> Result<Self, EnvError> {
        config.validate()?;
        let mut rng = PortableRng::seed_from(seed);
        let cells = config.width * config.height;
        let mut agents = Vec::with_capacity(n_harvesters + n_cleaners);
        for (kind, count, rows) in [
            (AgentKind::Harvester, n_harvesters, config.harvest_rows),
            (AgentKind::Cleaner, n_cleaners, config.river_rows),
        ] {
            let mut spots: Vec<(usize, usize)> =
                (rows.first..=rows.last).flat_map(|r| (0..config.width).map(move |c| (r, c))).collect();
            if count > spots.len() {
                return Err(EnvError::TooManyAgents { kind, agents: count, cells: spots.len() });
            }
            rng.shuffle(&mut spots);
            for &(row, col) in spots.iter().take(count) {
                agents.push(Agent { kind, row, col, facing: Action::Stay });
            }
        }
        let mut apples = vec![false; cells];
        let mut waste = vec![false; cells];
        seed_cells(&mut apples, config, config.harvest_rows, config.initial_apple_density, &mut rng);
        seed_cells(&mut waste, config, config.river_rows, config.initial_waste_density, &mut rng);
        Ok(Self { config: config.clone(), state: EnvState { agents, apples, waste, timestep: 0 }, rng })
    }

    pub fn waste_density(&self) -> f64 {
        self.state.waste_count() as f64 / self.config.river_cells() as f64
    }

    pub fn is_done(&self) -> bool {
        self.state.timestep >= self.config.episode_length
    }

    fn idx(&self, row: usize, col: usize) -> usize {
        row * self.config.width + col
    }

    pub fn step(&mut self, actions: &[Action]) -> Result<StepEvents, EnvError> {
        let n = self.state.agents.len();
        if actions.len() != n {
            return Err(EnvError::ActionCount { expected: n, got: actions.len() });
        }
        let mut events = StepEvents { harvested: vec![0; n], cleaned: vec![false; n], ..Default::default() };

        // Moves, in a random priority order; blocked moves become stays.
        let mut order: Vec<usize> = (0..n).collect();
        self.rng.shuffle(&mut order);
        for &i in &order {
            let a = actions[i];
            let agent = self.state.agents[i];
            let (dr, dc) = a.delta();
            if (dr, dc) == (0, 0) {
                continue;
            }
            self.state.agents[i].facing = a;
            let zone = self.config.zone(agent.kind);
            let (r, c) = (agent.row as isize + dr, agent.col as isize + dc);
            let inside = r >= 0 && c >= 0 && (c as usize) < self.config.width && zone.contains(r as usize);
            let free = inside && !self.state.agents.iter().any(|o| o.row == r as usize && o.col == c as usize);
            if free {
                self.state.agents[i].row = r as usize;
                self.state.agents[i].col = c as usize;
            } else {
                events.blocked_moves += 1;
            }
        }

        // Interactions on the agent's own cell.
        for i in 0..n {
            if actions[i] != Action::Interact {
                continue;
            }
            let agent = self.state.agents[i];
            let k = self.idx(agent.row, agent.col);
            match agent.kind {
                AgentKind::Harvester if self.state.apples[k] => {
                    self.state.apples[k] = false;
                    events.harvested[i] = 1;
                }
                AgentKind::Cleaner if self.state.waste[k] => {
                    self.state.waste[k] = false;
                    events.cleaned[i] = true;
                }
                _ => {}
            }
        }

        // Regrowth uses the river state after cleaning, before new waste.
        let spawn_p = self.config.apple_spawn_prob(self.waste_density());
        events.apple_spawn_prob = spawn_p;
        for row in self.config.river_rows.first..=self.config.river_rows.last {
            for col in 0..self.config.width {
                let k = self.idx(row, col);
                if !self.state.waste[k] && self.rng.bernoulli(self.config.waste_spawn_prob) {
                    self.state.waste[k] = true;
                    events.waste_spawned += 1;
                }
            }
        }
        for row in self.config.harvest_rows.first..=self.config.harvest_rows.last {
            for col in 0..self.config.width {
                let k = self.idx(row, col);
                if !self.state.apples[k] {
                    events.apple_spawn_opportunities += 1;
                    if self.rng.bernoulli(spawn_p) {
                        self.state.apples[k] = true;
                        events.apples_spawned += 1;
                    }
                }
            }
        }
        self.state.timestep += 1;
        Ok(events)
    }

    pub fn observe(&self, agent: usize) -> AgentObservation {
        let me = self.state.agents[agent];
        let radius = self.config.view_radius;
        let r = radius as isize;
        let zone = self.config.zone(me.kind);
        let mut cells = Vec::with_capacity(((2 * r + 1) * (2 * r + 1)) as usize);
        for dr in -r..=r {
            for dc in -r..=r {
                let (row, col) = (me.row as isize + dr, me.col as isize + dc);
                let mut cell = ObservedCell::default();
                if row < 0 || col < 0 || row as usize >= self.config.height || col as usize >= self.config.width {
                    cell.wall = true;
                } else {
                    let (row, col) = (row as usize, col as usize);
                    let k = self.idx(row, col);
                    cell.wall = !zone.contains(row);
                    cell.apple = self.state.apples[k];
                    cell.waste = self.state.waste[k];
                    for (j, o) in self.state.agents.iter().enumerate() {
                        if j != agent && o.row == row && o.col == col {
                            match o.kind {
                                AgentKind::Harvester => cell.harvesters += 1,
                                AgentKind::Cleaner => cell.cleaners += 1,
                            }
                        }
                    }
                }
                cells.push(cell);
            }
        }
        AgentObservation {
            kind: me.kind,
            facing: me.facing,
            pollution: self.waste_density() / self.config.pollution_threshold,
            radius,
            cells,
        }
    }

    /// ASCII frame: `~` river, `W` waste, `-` buffer, `.` orchard, `@` apple,
    /// `H`/`C` agents.
    pub fn render(&self) -> String {
        let mut out = String::with_capacity((self.config.width + 1) * self.config.height);
        for row in 0..self.config.height {
            for col in 0..self.config.width {
                let k = self.idx(row, col);
                let agent = self.state.agents.iter().find(|a| a.row == row && a.col == col);
                let ch = match agent {
                    Some(a) if a.kind == AgentKind::Harvester => 'H',
                    Some(_) => 'C',
                    None if self.state.waste[k] => 'W',
                    None if self.state.apples[k] => '@',
                    None if self.config.river_rows.contains(row) => '~',
                    None if self.config.harvest_rows.contains(row) => '.',
                    None => '-',
                };
                out.push(ch);
            }
            out.push('\n');
        }
        out
    }
}

fn seed_cells(grid: &mut [bool], config: &CleanupConfig, rows: Rows, density: f64, rng: &mut PortableRng) {
    let mut cells: Vec<usize> =
        (rows.first..=rows.last).flat_map(|r| (0..config.width).map(move |c| r * config.width + c)).collect();
    let count = (density * cells.len() as f64).round() as usize;
    rng.shuffle(&mut cells);
    for &k in cells.iter().take(count) {
        grid[k] = true;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_zones_cover_buffer() {
        let c = CleanupConfig::default();
        c.validate().unwrap();
        assert_eq!(c.zone(AgentKind::Harvester), Rows { first: 3, last: 7 });
        assert_eq!(c.zone(AgentKind::Cleaner), Rows { first: 0, last: 3 });
    }

    #[test]
    fn overlapping_regions_rejected() {
        let c = CleanupConfig { harvest_rows: Rows { first: 2, last: 5 }, ..Default::default() };
        assert!(c.validate().is_err());
        let c = CleanupConfig { waste_spawn_prob: 1.5, ..Default::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn reset_is_seeded_and_counts_initial_apples() {
        let c = CleanupConfig::default();
        let a = Cleanup::reset(&c, 5, 3, 9).unwrap();
        let b = Cleanup::reset(&c, 5, 3, 9).unwrap();
        assert_eq!(a.state, b.state);
        assert_eq!(a.state.apple_count(), (0.3f64 * 60.0).round() as usize);
        let none = Cleanup::reset(&c, 5, 0, 1).unwrap();
        assert!(none.state.agents.iter().all(|a| !c.river_rows.contains(a.row)));
        assert!(matches!(Cleanup::reset(&c, 61, 0, 1), Err(EnvError::TooManyAgents { .. })));
    }

    #[test]
    fn polluted_river_stops_regrowth() {
        let c = CleanupConfig { initial_waste_density: 0.4, initial_apple_density: 0.0, ..Default::default() };
        let mut env = Cleanup::reset(&c, 0, 0, 3).unwrap();
        let ev = env.step(&[]).unwrap();
        assert_eq!(ev.apple_spawn_prob, 0.0);
        assert_eq!(ev.apples_spawned, 0);
    }

    #[test]
    fn empty_world_only_ticks() {
        let c = CleanupConfig {
            waste_spawn_prob: 0.0,
            apple_spawn_base_prob: 0.0,
            ..Default::default()
        };
        let mut env = Cleanup::reset(&c, 0, 0, 3).unwrap();
        let before = env.state.clone();
        env.step(&[]).unwrap();
        assert_eq!(env.state.apples, before.apples);
        assert_eq!(env.state.waste, before.waste);
        assert_eq!(env.state.timestep, 1);
    }

    #[test]
    fn moves_respect_zones_and_collisions() {
        let c = CleanupConfig::default();
        let mut env = Cleanup::reset(&c, 2, 1, 0).unwrap();
        env.state.agents[0] = Agent { kind: AgentKind::Harvester, row: 3, col: 0, facing: Action::Stay };
        env.state.agents[1] = Agent { kind: AgentKind::Harvester, row: 4, col: 0, facing: Action::Stay };
        env.state.agents[2] = Agent { kind: AgentKind::Cleaner, row: 3, col: 1, facing: Action::Stay };
        let ev = env.step(&[Action::Up, Action::Up, Action::Down]).unwrap();
        // Harvester 0 cannot enter the river; harvester 1 is blocked by it;
        // the cleaner cannot enter the orchard.
        assert_eq!((env.state.agents[0].row, env.state.agents[1].row, env.state.agents[2].row), (3, 4, 3));
        assert_eq!(ev.blocked_moves, 3);
    }

    #[test]
    fn interact_harvests_and_cleans() {
        let c = CleanupConfig { waste_spawn_prob: 0.0, apple_spawn_base_prob: 0.0, ..Default::default() };
        let mut env = Cleanup::reset(&c, 1, 1, 0).unwrap();
        env.state.agents[0] = Agent { kind: AgentKind::Harvester, row: 5, col: 5, facing: Action::Stay };
        env.state.agents[1] = Agent { kind: AgentKind::Cleaner, row: 1, col: 5, facing: Action::Stay };
        let (a, w) = (5 * 15 + 5, 15 + 5);
        env.state.apples[a] = true;
        env.state.waste[w] = true;
        let ev = env.step(&[Action::Interact, Action::Interact]).unwrap();
        assert_eq!(ev.harvested, vec![1, 0]);
        assert_eq!(ev.cleaned, vec![false, true]);
        assert!(!env.state.apples[a] && !env.state.waste[w]);
        let ev = env.step(&[Action::Interact, Action::Interact]).unwrap();
        assert_eq!(ev.total_harvested(), 0);
        assert_eq!(ev.total_cleaned(), 0);
        assert!(env.step(&[Action::Stay]).is_err());
    }

    #[test]
    fn observation_window_is_consistent() {
        let c = CleanupConfig::default();
        let mut env = Cleanup::reset(&c, 2, 0, 0).unwrap();
        env.state.agents[0] = Agent { kind: AgentKind::Harvester, row: 7, col: 0, facing: Action::Stay };
        env.state.agents[1] = Agent { kind: AgentKind::Harvester, row: 6, col: 1, facing: Action::Stay };
        let obs = env.observe(0);
        assert_eq!(obs.cells.len(), 25);
        assert!(obs.at(1, 0).wall && obs.at(0, -1).wall);
        assert_eq!(obs.at(-1, 1).harvesters, 1);
        assert_eq!(obs.at(0, 0).harvesters, 0);
        assert_eq!(obs.at(0, 0).apple, env.state.apples[7 * 15]);
        assert!(obs.at(-2, 0).apple == env.state.apples[5 * 15]);
    }

    #[test]
    fn render_has_grid_shape() {
        let env = Cleanup::reset(&CleanupConfig::default(), 5, 2, 0).unwrap();
        let frame = env.render();
        assert_eq!(frame.lines().count(), 8);
        assert!(frame.lines().all(|l| l.chars().count() == 15));
        assert_eq!(frame.matches('H').count(), 5);
        assert_eq!(frame.matches('C').count(), 2);
    }
}
