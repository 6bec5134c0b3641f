//! Tabular mean-field Q-learning over typed mean actions.
//!
//! A Q-table belongs to one agent type and is keyed by the agent's feature
//! key together with the discretized mean action of every type (the agent
//! itself excluded). Values are stored per own action.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QError {
    #[error("key space {0} × {1}^{2} does not fit in 64 bits")]
    KeySpace(u64, u64, usize),
    #[error("grid resolution must be at least 1")]
    Resolution,
    #[error("expected {expected} mean actions, got {got}")]
    Types { expected: usize, got: usize },
    #[error("Q-value {value} at key {key} exceeds the bound {bound}")]
    Unbounded { key: u64, value: f64, bound: f64 },
}

/// Empirical action distribution of `actions` over `n_actions` choices, or
/// `None` when there are no actions to average.
pub fn mean_action(actions: &[usize], n_actions: usize) -> Option<Vec<f64>> {
    if actions.is_empty() {
        return None;
    }
    let mut p = vec![0.0; n_actions];
    for &a in actions {
        p[a] += 1.0;
    }
    let n = actions.len() as f64;
    p.iter_mut().for_each(|x| *x /= n);
    Some(p)
}

/// Rounds a distribution to the simplex grid with `resolution` quanta,
/// preserving the total by largest remainder (ties to the lower index).
pub fn discretize(probs: &[f64], resolution: u32) -> Vec<u32> {
    let scaled: Vec<f64> = probs.iter().map(|p| p * resolution as f64).collect();
    let mut counts: Vec<u32> = scaled.iter().map(|s| s.floor() as u32).collect();
    let assigned: u32 = counts.iter().sum();
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (scaled[a] - scaled[a].floor(), scaled[b] - scaled[b].floor());
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    for &i in order.iter().take(resolution.saturating_sub(assigned) as usize) {
        counts[i] += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTableSpec {
    pub n_actions: usize,
    pub n_types: usize,
    pub feature_cardinality: u32,
    /// Quanta per simplex grid axis; 4 gives a 0.25 step.
    pub resolution: u32,
}

#[derive(Debug, Clone)]
pub struct QTable {
    spec: QTableSpec,
    /// Codes per mean-action slot, including the "type absent" code.
    base: u64,
    values: HashMap<u64, Vec<f64>>,
}

/// Serialized form, entries sorted by key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTableSnapshot {
    pub spec: QTableSpec,
    pub entries: Vec<(u64, Vec<f64>)>,
}

impl QTable {
    pub fn new(spec: QTableSpec) -> Result<Self, QError> {
        if spec.resolution == 0 {
            return Err(QError::Resolution);
        }
        let grid = (spec.resolution as u64 + 1).checked_pow(spec.n_actions as u32);
        let base = grid.and_then(|g| g.checked_add(1));
        let fits = base
            .and_then(|b| b.checked_pow(spec.n_types as u32))
            .and_then(|m| m.checked_mul(spec.feature_cardinality as u64));
        match (base, fits) {
            (Some(base), Some(_)) => Ok(Self { spec, base, values: HashMap::new() }),
            _ => Err(QError::KeySpace(spec.feature_cardinality as u64, spec.resolution as u64 + 1, spec.n_types)),
        }
    }

    pub fn spec(&self) -> &QTableSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn encode(&self, mean: Option<&[f64]>) -> u64 {
        match mean {
            None => self.base - 1,
            Some(p) => discretize(p, self.spec.resolution)
                .iter()
                .fold(0u64, |acc, &c| acc * (self.spec.resolution as u64 + 1) + c as u64),
        }
    }

    /// Table key for a feature and one (optional) mean action per type.
    pub fn key(&self, feature: u32, means: &[Option<&[f64]>]) -> Result<u64, QError> {
        if means.len() != self.spec.n_types {
            return Err(QError::Types { expected: self.spec.n_types, got: means.len() });
        }
        Ok(means.iter().fold(feature as u64, |acc, m| acc * self.base + self.encode(*m)))
    }

    /// Q-values at `key`; unseen keys read as zero.
    pub fn values(&self, key: u64) -> Vec<f64> {
        self.values.get(&key).cloned().unwrap_or_else(|| vec![0.0; self.spec.n_actions])
    }

    pub fn get(&self, key: u64, action: usize) -> f64 {
        self.values.get(&key).map_or(0.0, |v| v[action])
    }

    pub fn max_value(&self, key: u64) -> f64 {
        self.values.get(&key).map_or(0.0, |v| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
    }

    /// All actions attaining the maximum at `key`.
    pub fn greedy_actions(&self, key: u64) -> Vec<usize> {
        match self.values.get(&key) {
            None => (0..self.spec.n_actions).collect(),
            Some(v) => {
                let best = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                (0..v.len()).filter(|&a| v[a] == best).collect()
            }
        }
    }

    fn slot(&mut self, key: u64, action: usize) -> &mut f64 {
        let n = self.spec.n_actions;
        &mut self.values.entry(key).or_insert_with(|| vec![0.0; n])[action]
    }

    /// Largest absolute stored value.
    pub fn max_abs(&self) -> f64 {
        self.values.values().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn check_bound(&self, bound: f64) -> Result<(), QError> {
        for (&key, v) in &self.values {
            if let Some(&value) = v.iter().find(|x| !x.is_finite() || x.abs() > bound) {
                return Err(QError::Unbounded { key, value, bound });
            }
        }
        Ok(())
    }

    pub fn snapshot(&self) -> QTableSnapshot {
        let mut entries: Vec<(u64, Vec<f64>)> = self.values.iter().map(|(k, v)| (*k, v.clone())).collect();
        entries.sort_by_key(|e| e.0);
        QTableSnapshot { spec: self.spec.clone(), entries }
    }

    pub fn from_snapshot(snapshot: QTableSnapshot) -> Result<Self, QError> {
        let mut table = Self::new(snapshot.spec)?;
        table.values = snapshot.entries.into_iter().collect();
        Ok(table)
    }
}

/// One mean-field Q-learning step:
/// `Q(s,a,ā) += η·(r + γ·max_a' Q(s',a',ā') − Q(s,a,ā))`, with the bootstrap
/// term dropped when `next` is `None` (terminal). Returns the new value.
pub fn mtmfq_update(table: &mut QTable, key: u64, action: usize, reward: f64, next: Option<u64>, eta: f64, gamma: f64) -> f64 {
    let bootstrap = next.map_or(0.0, |k| gamma * table.max_value(k));
    let q = table.slot(key, action);
    *q += eta * (reward + bootstrap - *q);
    *q
}
