//! Clean-up gridworld, contract reward shaping and tabular multi-type
//! mean-field Q-learning, plus an [`Evaluator`](cpmes_core::Evaluator) that
//! scores contracts by training agents under them.

pub mod contract;
pub mod env;
pub mod evaluator;
pub mod features;
pub mod matrix;
pub mod qtable;
pub mod train;

pub use contract::{contract_rewards, Contract, ContractError, StepRewards};
pub use env::{Action, AgentKind, AgentObservation, Cleanup, CleanupConfig, EnvError, EnvState, StepEvents};
pub use evaluator::{evaluate_contract, MarlEvaluator};
pub use features::{featurize, FEATURE_CARDINALITY};
pub use qtable::{mtmfq_update, QTable};
pub use train::{train, EvalReport, Policies, PolicySnapshot, Scenario, TrainConfig, TrainError, TrainReport};
