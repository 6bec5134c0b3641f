//! Discrete state keys for the tabular learners.
//!
//! A key combines: where the nearest target is (apple for harvesters, waste
//! for cleaners), a bucketed count of targets in the window, whether other
//! agents of the same type are in view, the last move direction and whether
//! it is walled off, and the river-wide pollution level.

use crate::env::{Action, AgentKind, AgentObservation};

const TARGET_CODES: u32 = 10;
const COUNT_BUCKETS: u32 = 3;
const PEER_CODES: u32 = 2;
const FACING_CODES: u32 = 5;
const BLOCKED_CODES: u32 = 2;
/// Pollution levels: seven equal bands below the threshold, one at or above.
const POLLUTION_CODES: u32 = 8;

/// Number of distinct feature keys.
pub const FEATURE_CARDINALITY: u32 =
    TARGET_CODES * COUNT_BUCKETS * PEER_CODES * FACING_CODES * BLOCKED_CODES * POLLUTION_CODES;

/// Key of a window with nothing in it, no heading and a clean river.
pub const FEATURE_EMPTY: u32 = 0;

/// Target position code: 0 none, 1 here, then (up, down, left, right) × (adjacent, further).
fn target_code(obs: &AgentObservation) -> u32 {
    let r = obs.radius as isize;
    let wanted = |dr: isize, dc: isize| {
        let cell = obs.at(dr, dc);
        match obs.kind {
            AgentKind::Harvester => cell.apple,
            AgentKind::Cleaner => cell.waste,
        }
    };
    let mut best: Option<(isize, isize, isize)> = None;
    for dr in -r..=r {
        for dc in -r..=r {
            if !wanted(dr, dc) {
                continue;
            }
            let d = dr.abs() + dc.abs();
            if best.map_or(true, |(bd, _, _)| d < bd) {
                best = Some((d, dr, dc));
            }
        }
    }
    match best {
        None => 0,
        Some((0, _, _)) => 1,
        Some((d, dr, dc)) => {
            let dir = if dr.abs() >= dc.abs() {
                if dr < 0 { 0 } else { 1 }
            } else if dc < 0 {
                2
            } else {
                3
            };
            2 + 2 * dir + u32::from(d > 1)
        }
    }
}

fn bucket(count: u32) -> u32 {
    match count {
        0 => 0,
        1 | 2 => 1,
        _ => 2,
    }
}

/// Maps an observation to a key in `[0, FEATURE_CARDINALITY)`.
pub fn featurize(obs: &AgentObservation) -> u32 {
    let (mut targets, mut peers) = (0u32, 0u32);
    for cell in &obs.cells {
        let (target, peer) = match obs.kind {
            AgentKind::Harvester => (cell.apple, cell.harvesters),
            AgentKind::Cleaner => (cell.waste, cell.cleaners),
        };
        targets += u32::from(target);
        peers += u32::from(peer);
    }
    let (facing, ahead) = match obs.facing {
        Action::Up => (1, (-1, 0)),
        Action::Down => (2, (1, 0)),
        Action::Left => (3, (0, -1)),
        Action::Right => (4, (0, 1)),
        Action::Stay | Action::Interact => (0, (0, 0)),
    };
    let blocked = facing != 0 && obs.at(ahead.0, ahead.1).wall;
    let bands = (POLLUTION_CODES - 1) as f64;
    let pollution = ((obs.pollution.max(0.0) * bands).floor() as u32).min(POLLUTION_CODES - 1);
    let mut key = target_code(obs);
    key = key * COUNT_BUCKETS + bucket(targets);
    key = key * PEER_CODES + u32::from(peers > 0);
    key = key * FACING_CODES + facing;
    key = key * BLOCKED_CODES + u32::from(blocked);
    key * POLLUTION_CODES + pollution
}
