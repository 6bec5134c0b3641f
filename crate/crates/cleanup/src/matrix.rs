//! Repeated two-player matrix games played by two mean-field learners.
//!
//! Each player's table is keyed by the opponent's previous action (a
//! one-hot mean action of the single other type), and every round is a
//! terminal transition. Used to check that the learner settles on mutual
//! best responses.

use cpmes_core::PortableRng;
use serde::{Deserialize, Serialize};

use crate::qtable::{mtmfq_update, QError, QTable, QTableSpec};
use crate::train::choose;

/// `row[a][b]` and `col[a][b]` are the payoffs when the row player plays
/// `a` and the column player plays `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixGame {
    pub row: Vec<Vec<f64>>,
    pub col: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatrixSchedule {
    pub updates: usize,
    pub learning_rate: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_fraction: f64,
}

impl Default for MatrixSchedule {
    fn default() -> Self {
        Self { updates: 10_000, learning_rate: 0.1, epsilon_start: 1.0, epsilon_end: 0.05, epsilon_decay_fraction: 0.6 }
    }
}

impl MatrixSchedule {
    fn epsilon(&self, step: usize) -> f64 {
        let horizon = (self.epsilon_decay_fraction * self.updates as f64).max(1.0);
        let f = (step as f64 / horizon).min(1.0);
        self.epsilon_start + f * (self.epsilon_end - self.epsilon_start)
    }
}

fn one_hot(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

/// Trains both players for `schedule.updates` rounds, then plays greedily
/// from the last joint action until it repeats. Returns that joint action.
pub fn learn_matrix_game(game: &MatrixGame, schedule: &MatrixSchedule, seed: u64) -> Result<(usize, usize), QError> {
    let (n_row, n_col) = (game.row.len(), game.row.first().map_or(0, Vec::len));
    let spec = |n_actions| QTableSpec { n_actions, n_types: 1, feature_cardinality: 1, resolution: 4 };
    let mut row_q = QTable::new(spec(n_row))?;
    let mut col_q = QTable::new(spec(n_col))?;
    let mut rng = PortableRng::derive(seed, 0);
    let (mut a, mut b) = (rng.below(n_row), rng.below(n_col));
    for step in 0..schedule.updates {
        let eps = schedule.epsilon(step);
        let row_key = row_q.key(0, &[Some(&one_hot(n_col, b))])?;
        let col_key = col_q.key(0, &[Some(&one_hot(n_row, a))])?;
        let na = choose(&row_q, row_key, eps, &mut rng);
        let nb = choose(&col_q, col_key, eps, &mut rng);
        mtmfq_update(&mut row_q, row_key, na, game.row[na][nb], None, schedule.learning_rate, 0.0);
        mtmfq_update(&mut col_q, col_key, nb, game.col[na][nb], None, schedule.learning_rate, 0.0);
        (a, b) = (na, nb);
    }
    for _ in 0..(n_row * n_col + 1) {
        let na = choose(&row_q, row_q.key(0, &[Some(&one_hot(n_col, b))])?, 0.0, &mut rng);
        let nb = choose(&col_q, col_q.key(0, &[Some(&one_hot(n_row, a))])?, 0.0, &mut rng);
        if (na, nb) == (a, b) {
            break;
        }
        (a, b) = (na, nb);
    }
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dominant_strategy_is_learned() {
        let game = MatrixGame { row: vec![vec![1.0, 1.0], vec![0.0, 0.0]], col: vec![vec![1.0, 0.0], vec![1.0, 0.0]] };
        assert_eq!(learn_matrix_game(&game, &MatrixSchedule::default(), 3).unwrap(), (0, 0));
    }
}
