//! Tax-and-redistribute contract: harvesters pay a share α of their harvest
//! value, split equally among the recruited cleaners.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{AgentKind, CleanupConfig, StepEvents};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContractError {
    #[error("tax rate {0} is not in [0, 1]")]
    Alpha(f64),
    #[error("tax rate {0} > 0 but no cleaners to receive it")]
    NoRecipients(f64),
    #[error("event vectors cover {events} agents, roster has {agents}")]
    Roster { events: usize, agents: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contract {
    pub alpha: f64,
    pub n_cleaners: usize,
}

impl Contract {
    pub fn new(alpha: f64, n_cleaners: usize) -> Result<Self, ContractError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(ContractError::Alpha(alpha));
        }
        if alpha > 0.0 && n_cleaners == 0 {
            return Err(ContractError::NoRecipients(alpha));
        }
        Ok(Self { alpha, n_cleaners })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRewards {
    /// Per agent, in roster order.
    pub rewards: Vec<f64>,
    /// Intrinsic harvest value minus all costs; invariant to α.
    pub welfare: f64,
    pub tax_collected: f64,
    pub tax_paid_out: f64,
}

/// Shapes one step's events into per-agent rewards under `contract`.
///
/// Harvester: `(1−α)·r·apples − c_j`. Cleaner: `(α/N_c)·r·Σ apples − c_k·cleaned`.
pub fn contract_rewards(
    config: &CleanupConfig,
    contract: &Contract,
    kinds: &[AgentKind],
    events: &StepEvents,
) -> Result<StepRewards, ContractError> {
    if events.harvested.len() != kinds.len() || events.cleaned.len() != kinds.len() {
        return Err(ContractError::Roster { events: events.harvested.len(), agents: kinds.len() });
    }
    let cleaners = kinds.iter().filter(|k| **k == AgentKind::Cleaner).count();
    if contract.alpha > 0.0 && cleaners == 0 {
        return Err(ContractError::NoRecipients(contract.alpha));
    }
    let r = config.harvest_reward;
    let intrinsic: f64 = events.harvested.iter().map(|&h| r * h as f64).sum();
    let tax_collected = contract.alpha * intrinsic;
    let share = if cleaners == 0 { 0.0 } else { tax_collected / cleaners as f64 };
    let mut welfare = intrinsic;
    let mut tax_paid_out = 0.0;
    let rewards = kinds
        .iter()
        .enumerate()
        .map(|(i, kind)| match kind {
            AgentKind::Harvester => {
                welfare -= config.cost_harvester;
                (1.0 - contract.alpha) * r * events.harvested[i] as f64 - config.cost_harvester
            }
            AgentKind::Cleaner => {
                let cost = if events.cleaned[i] { config.cost_cleaner } else { 0.0 };
                welfare -= cost;
                tax_paid_out += share;
                share - cost
            }
        })
        .collect();
    Ok(StepRewards { rewards, welfare, tax_collected, tax_paid_out })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn events(harvested: Vec<u32>, cleaned: Vec<bool>) -> StepEvents {
        StepEvents { harvested, cleaned, ..Default::default() }
    }

    #[test]
    fn taxes_are_redistributed_exactly() {
        let c = CleanupConfig::default();
        let kinds = [AgentKind::Harvester, AgentKind::Harvester, AgentKind::Cleaner, AgentKind::Cleaner];
        let ev = events(vec![1, 1, 0, 0], vec![false, false, true, false]);
        let out = contract_rewards(&c, &Contract::new(0.25, 2).unwrap(), &kinds, &ev).unwrap();
        assert_eq!(out.rewards, vec![0.75 - 0.01, 0.75 - 0.01, 0.25 - 0.05, 0.25]);
        assert!((out.tax_collected - out.tax_paid_out).abs() < 1e-12);
        assert!((out.welfare - (2.0 - 0.02 - 0.05)).abs() < 1e-12);
        let total: f64 = out.rewards.iter().sum();
        assert!((total - out.welfare).abs() < 1e-12);
    }

    #[test]
    fn tax_without_recipients_is_rejected() {
        assert_eq!(Contract::new(0.1, 0), Err(ContractError::NoRecipients(0.1)));
        assert!(Contract::new(0.0, 0).is_ok());
        assert!(Contract::new(1.5, 2).is_err());
        let c = CleanupConfig::default();
        let forged = Contract { alpha: 0.1, n_cleaners: 3 };
        let ev = events(vec![1], vec![false]);
        assert!(contract_rewards(&c, &forged, &[AgentKind::Harvester], &ev).is_err());
    }
}
