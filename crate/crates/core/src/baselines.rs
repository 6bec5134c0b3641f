//! Benchmark strategies that share the loop, priors and surrogates of
//! [`crate::optimizer`]: constrained EI, constrained MES without a Pareto
//! stage, MACE with random front sampling, and uniform random search.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::acquisition::{cmes_score, constrained_ei, joint_pof, mace_score};
use crate::design::DesignPoint;
use crate::optimizer::{
    run_strategy, variance_fallback, CpmesStrategy, OptimizeError, OptimizerSettings, ProblemConfig,
    Proposal, RoundContext, RunError, Strategy,
};
use crate::pareto::{nsga2, Nsga2Config};
use crate::record::{Evaluator, OptimizationTrace};
use crate::rng::PortableRng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Cpmes,
    Cei,
    Cmes,
    Mace,
    Random,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Cpmes, Method::Cei, Method::Cmes, Method::Mace, Method::Random];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Cpmes => "cpmes",
            Method::Cei => "cei",
            Method::Cmes => "cmes",
            Method::Mace => "mace",
            Method::Random => "random",
        }
    }

    pub fn strategy<T: Scalar>(&self) -> Box<dyn Strategy<T>> {
        match self {
            Method::Cpmes => Box::new(CpmesStrategy),
            Method::Cei => Box::new(CeiStrategy),
            Method::Cmes => Box::new(CmesStrategy),
            Method::Mace => Box::new(MaceStrategy),
            Method::Random => Box::new(RandomStrategy),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown method `{s}` (expected cpmes, cei, cmes, mace or random)"))
    }
}

/// Runs `method` with `f64` surrogates, optionally resuming a partial trace.
pub fn run_method<E: Evaluator>(
    method: Method,
    config: &ProblemConfig,
    settings: &OptimizerSettings,
    evaluator: &E,
    resume: Option<OptimizationTrace>,
) -> Result<OptimizationTrace, RunError> {
    let mut strategy = method.strategy::<f64>();
    run_strategy::<f64, _, _>(config, settings, evaluator, strategy.as_mut(), resume)
}

pub fn run_cei<E: Evaluator>(config: &ProblemConfig, settings: &OptimizerSettings, evaluator: &E) -> Result<OptimizationTrace, RunError> {
    run_method(Method::Cei, config, settings, evaluator, None)
}

pub fn run_cmes<E: Evaluator>(config: &ProblemConfig, settings: &OptimizerSettings, evaluator: &E) -> Result<OptimizationTrace, RunError> {
    run_method(Method::Cmes, config, settings, evaluator, None)
}

/// MACE with `config.batch_size` designs per round.
pub fn run_mace<E: Evaluator>(config: &ProblemConfig, settings: &OptimizerSettings, evaluator: &E) -> Result<OptimizationTrace, RunError> {
    run_method(Method::Mace, config, settings, evaluator, None)
}

pub fn run_random<E: Evaluator>(config: &ProblemConfig, settings: &OptimizerSettings, evaluator: &E) -> Result<OptimizationTrace, RunError> {
    run_method(Method::Random, config, settings, evaluator, None)
}

/// Top `k` of `scored` by descending score, ties broken by design order.
fn top_k<T: Scalar>(mut scored: Vec<(DesignPoint, T)>, k: usize) -> Vec<(DesignPoint, T)> {
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.0.tie_order(&b.0))
    });
    scored.truncate(k);
    scored
}

fn proposal<T: Scalar>(picked: Vec<(DesignPoint, T)>, front_size: usize, fallback: bool) -> Proposal {
    Proposal {
        scores: picked.iter().map(|p| p.1.as_f64()).collect(),
        designs: picked.into_iter().map(|p| p.0).collect(),
        front_size,
        front: Vec::new(),
        fallback,
    }
}

/// Constrained expected improvement over the unevaluated lattice. With no
/// feasible incumbent the score is the joint probability of feasibility;
/// if every score is zero the joint probability is used instead.
#[derive(Debug, Clone, Default)]
pub struct CeiStrategy;

impl<T: Scalar> Strategy<T> for CeiStrategy {
    fn name(&self) -> String {
        "cei".into()
    }

    fn propose(&mut self, ctx: &RoundContext<'_, T>, _rng: &mut PortableRng) -> Result<Proposal, OptimizeError> {
        let s = ctx.surrogates();
        let incumbent = ctx.incumbent().map(T::lit);
        let candidates = ctx.unevaluated();
        let scored: Vec<(DesignPoint, T, T)> = candidates
            .iter()
            .map(|d| {
                let cons = s.constraint_posteriors(d);
                let post = s.objective.predict(d);
                (*d, constrained_ei(&post, &cons, incumbent), joint_pof(&cons))
            })
            .collect();
        let degenerate = scored.iter().all(|s| s.1 <= T::zero());
        if degenerate {
            debug!("cei round {}: all scores zero, maximizing joint PoF", ctx.round);
        }
        let picked = top_k(
            scored
                .into_iter()
                .map(|(d, ei, pof)| (d, if degenerate { pof } else { ei }))
                .collect(),
            ctx.request,
        );
        Ok(proposal(picked, 0, degenerate))
    }
}

/// Constrained MES over the whole unevaluated lattice, no Pareto stage.
#[derive(Debug, Clone, Default)]
pub struct CmesStrategy;

impl<T: Scalar> Strategy<T> for CmesStrategy {
    fn name(&self) -> String {
        "cmes".into()
    }

    fn propose(&mut self, ctx: &RoundContext<'_, T>, rng: &mut PortableRng) -> Result<Proposal, OptimizeError> {
        let s = ctx.surrogates();
        let maxima = ctx.sample_maxima(rng)?;
        let scored = ctx
            .unevaluated()
            .into_iter()
            .map(|d| {
                let score = cmes_score(&s.objective.predict(&d), &s.constraint_posteriors(&d), &maxima);
                (d, score)
            })
            .collect();
        Ok(proposal(top_k(scored, ctx.request), 0, false))
    }
}

/// NSGA-II over the feasibility-weighted (UCB, EI, PI) triple, then a
/// uniform draw of distinct designs from the front. EI and PI use the best
/// feasible observation as incumbent, or the best observation if none is
/// feasible yet.
#[derive(Debug, Clone, Default)]
pub struct MaceStrategy;

impl<T: Scalar> Strategy<T> for MaceStrategy {
    fn name(&self) -> String {
        "mace".into()
    }

    fn propose(&mut self, ctx: &RoundContext<'_, T>, rng: &mut PortableRng) -> Result<Proposal, OptimizeError> {
        let s = ctx.surrogates();
        let incumbent = ctx
            .incumbent()
            .or_else(|| {
                ctx.records
                    .iter()
                    .map(|r| r.principal_objective)
                    .fold(None, |a: Option<f64>, v| Some(a.map_or(v, |a| a.max(v))))
            })
            .unwrap_or(0.0);
        let beta = T::lit(ctx.beta());
        let inc = T::lit(incumbent);
        let objectives = |d: &DesignPoint| {
            mace_score(&s.objective.predict(d), &s.constraint_posteriors(d), beta, inc).to_vec()
        };
        let nsga = Nsga2Config { seed: rng.next_u64(), ..ctx.settings.nsga2 };
        let front = nsga2(ctx.space, objectives, &nsga)?;
        let mut pool: Vec<DesignPoint> = Vec::new();
        for d in front.designs() {
            if !ctx.evaluated.contains(d) && !pool.contains(d) {
                pool.push(*d);
            }
        }
        if pool.is_empty() {
            debug!("mace round {}: front fully evaluated", ctx.round);
            let sel = variance_fallback(s, ctx.evaluated, ctx.space);
            return Ok(Proposal {
                designs: sel.designs,
                scores: sel.scores,
                front_size: front.len(),
                front: front.to_f64(),
                fallback: true,
            });
        }
        let designs = sample_uniform(&pool, ctx.request, rng);
        Ok(Proposal {
            scores: vec![0.0; designs.len()],
            designs,
            front_size: front.len(),
            front: front.to_f64(),
            fallback: false,
        })
    }
}

/// `k` distinct members of `pool` drawn uniformly without replacement (all of
/// them, shuffled, when `k ≥ pool.len()`).
pub fn sample_uniform<D: Clone>(pool: &[D], k: usize, rng: &mut PortableRng) -> Vec<D> {
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    let k = k.min(pool.len());
    for i in 0..k {
        let j = i + rng.below(idx.len() - i);
        idx.swap(i, j);
    }
    idx[..k].iter().map(|&i| pool[i].clone()).collect()
}

/// Uniformly random unevaluated lattice designs.
#[derive(Debug, Clone, Default)]
pub struct RandomStrategy;

impl<T: Scalar> Strategy<T> for RandomStrategy {
    fn name(&self) -> String {
        "random".into()
    }

    fn needs_surrogates(&self) -> bool {
        false
    }

    fn propose(&mut self, ctx: &RoundContext<'_, T>, rng: &mut PortableRng) -> Result<Proposal, OptimizeError> {
        let designs = sample_uniform(&ctx.unevaluated(), ctx.request, rng);
        Ok(Proposal { scores: vec![0.0; designs.len()], designs, front_size: 0, front: Vec::new(), fallback: false })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("nope".parse::<Method>().is_err());
    }

    #[test]
    fn uniform_sample_is_distinct_and_clamped() {
        let mut rng = PortableRng::seed_from(1);
        let pool = [1, 2, 3];
        let mut all = sample_uniform(&pool, 5, &mut rng);
        all.sort();
        assert_eq!(all, vec![1, 2, 3]);
        let two = sample_uniform(&pool, 2, &mut rng);
        assert_eq!(two.len(), 2);
        assert_ne!(two[0], two[1]);
        assert_eq!(sample_uniform(&[7], 1, &mut rng), vec![7]);
    }
}
