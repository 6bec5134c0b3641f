//! Constrained multi-objective Bayesian optimization of contract designs.
//!
//! The numeric core ([`gp`], [`acquisition`], [`pareto`]) is generic over the
//! floating-point type through [`Scalar`]; the aliases below fix it to `f64`.
//! Records, traces and synthetic instances are always `f64`.

pub mod acquisition;
pub mod baselines;
pub mod design;
pub mod gp;
pub mod kernel;
pub mod linalg;
pub mod optimizer;
pub mod pareto;
pub mod record;
pub mod rng;
pub mod scalar;
pub mod synthetic;

pub use baselines::{run_method, Method};
pub use design::{DesignError, DesignPoint, DesignSpace};
pub use optimizer::{
    compute_regret, run, run_strategy, OptimizeError, OptimizerSettings, ProblemConfig, ProblemMode, RegretPoint,
    RunError, Strategy,
};
pub use record::{EvaluationError, EvaluationRecord, Evaluator, OptimizationTrace};
pub use rng::PortableRng;
pub use scalar::Scalar;
pub use synthetic::SyntheticInstance;

pub type Gp = gp::FittedGp<f64>;
pub type Posterior = gp::GpPosterior<f64>;
pub type Kernel = kernel::KernelSpec<f64>;
pub type Front = pareto::ParetoFront<f64>;
pub type Surrogates64 = optimizer::Surrogates<f64>;
pub type MaxValues = acquisition::MaxValueSamples<f64>;
