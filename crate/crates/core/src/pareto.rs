//! Non-dominated sorting, crowding distance and an NSGA-II driver over the
//! (alpha, recruits) design space. All objectives are maximized.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::{DesignPoint, DesignSpace};
use crate::rng::PortableRng;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParetoError {
    #[error("objective vector for {design} contains a non-finite value")]
    NonFinite { design: DesignPoint },
    #[error("population size must be at least 2, got {0}")]
    PopulationTooSmall(usize),
    #[error("objective vector for {design} has {got} entries, expected {expected}")]
    ArityMismatch { design: DesignPoint, expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ScoredDesign<T> {
    pub design: DesignPoint,
    pub objectives: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ParetoFront<T> {
    pub members: Vec<ScoredDesign<T>>,
}

impl<T: Scalar> ParetoFront<T> {
    /// Members with objectives widened to `f64`.
    pub fn to_f64(&self) -> Vec<ScoredDesign<f64>> {
        self.members
            .iter()
            .map(|m| ScoredDesign { design: m.design, objectives: m.objectives.iter().map(|v| v.as_f64()).collect() })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn designs(&self) -> impl Iterator<Item = &DesignPoint> {
        self.members.iter().map(|m| &m.design)
    }

    /// True if no member dominates another.
    pub fn is_mutually_non_dominated(&self) -> bool {
        self.members.iter().all(|a| {
            self.members
                .iter()
                .all(|b| !dominates(&b.objectives, &a.objectives))
        })
    }
}

/// `a` dominates `b`: no worse everywhere, strictly better somewhere.
pub fn dominates<T: Scalar>(a: &[T], b: &[T]) -> bool {
    let mut strictly = false;
    for (&x, &y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            strictly = true;
        }
    }
    strictly
}

/// Fast non-dominated sort. Returns fronts of indices ordered by rank; each
/// front lists indices in ascending order.
pub fn non_dominated_sort<T: Scalar>(population: &[ScoredDesign<T>]) -> Vec<Vec<usize>> {
    let objs: Vec<&[T]> = population.iter().map(|s| s.objectives.as_slice()).collect();
    sort_objectives(&objs)
}

fn sort_objectives<T: Scalar>(objs: &[&[T]]) -> Vec<Vec<usize>> {
    let n = objs.len();
    let mut dominated_by_count = vec![0usize; n];
    let mut dominates_list: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            if dominates(objs[i], objs[j]) {
                dominates_list[i].push(j);
                dominated_by_count[j] += 1;
            } else if dominates(objs[j], objs[i]) {
                dominates_list[j].push(i);
                dominated_by_count[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominates_list[i] {
                dominated_by_count[j] -= 1;
                if dominated_by_count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Crowding distance of each member of one front. Extremes of every
/// non-constant objective get `+∞`; interior points accumulate normalized
/// neighbour gaps. Constant objectives contribute nothing.
pub fn crowding_distance<T: Scalar>(front: &[ScoredDesign<T>]) -> Vec<T> {
    let objs: Vec<&[T]> = front.iter().map(|s| s.objectives.as_slice()).collect();
    crowding_of(&objs)
}

fn lexicographic<T: Scalar>(a: &[T], b: &[T]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    Ordering::Equal
}

fn crowding_of<T: Scalar>(objs: &[&[T]]) -> Vec<T> {
    let n = objs.len();
    if n <= 2 {
        return vec![T::infinity(); n];
    }
    let m = objs[0].len();
    let mut dist = vec![T::zero(); n];
    let mut order: Vec<usize> = (0..n).collect();
    for k in 0..m {
        order.sort_by(|&a, &b| {
            objs[a][k]
                .partial_cmp(&objs[b][k])
                .unwrap_or(Ordering::Equal)
                .then_with(|| lexicographic(objs[a], objs[b]))
        });
        let lo = objs[order[0]][k];
        let hi = objs[order[n - 1]][k];
        let range = hi - lo;
        if !(range > T::zero()) {
            continue;
        }
        dist[order[0]] = T::infinity();
        dist[order[n - 1]] = T::infinity();
        for w in 1..(n - 1) {
            let i = order[w];
            if dist[i].is_infinite() {
                continue;
            }
            dist[i] = dist[i] + (objs[order[w + 1]][k] - objs[order[w - 1]][k]) / range;
        }
    }
    dist
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Nsga2Config {
    pub population: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    /// SBX distribution index for the alpha gene.
    pub sbx_eta: f64,
    /// Per-gene mutation probability.
    pub mutation_prob: f64,
    /// Std-dev of the Gaussian alpha mutation (clamped to `[0, 1]`).
    pub alpha_sigma: f64,
    /// Snap alpha onto the lattice after every variation step.
    pub snap_to_lattice: bool,
    /// Enumerate the whole lattice instead of evolving.
    pub exhaustive: bool,
    /// Return the non-dominated set of every design evaluated, not just the
    /// final population. Lets the front exceed the population size.
    pub archive: bool,
    pub seed: u64,
}

impl Default for Nsga2Config {
    fn default() -> Self {
        Self {
            population: 100,
            generations: 50,
            crossover_prob: 0.9,
            sbx_eta: 15.0,
            mutation_prob: 0.5,
            alpha_sigma: 0.1,
            snap_to_lattice: true,
            exhaustive: false,
            archive: true,
            seed: 0,
        }
    }
}

struct Evaluated<T> {
    cache: HashMap<DesignPoint, Vec<T>>,
    /// Designs in first-evaluation order, for a deterministic archive.
    order: Vec<DesignPoint>,
    arity: Option<usize>,
}

impl<T: Scalar> Evaluated<T> {
    fn get<F>(&mut self, design: &DesignPoint, evaluate: &F) -> Result<Vec<T>, ParetoError>
    where
        F: Fn(&DesignPoint) -> Vec<T>,
    {
        if let Some(v) = self.cache.get(design) {
            return Ok(v.clone());
        }
        let v = evaluate(design);
        if v.iter().any(|x| !x.is_finite()) {
            return Err(ParetoError::NonFinite { design: *design });
        }
        match self.arity {
            Some(a) if a != v.len() => {
                return Err(ParetoError::ArityMismatch { design: *design, expected: a, got: v.len() })
            }
            None => self.arity = Some(v.len()),
            _ => {}
        }
        self.cache.insert(*design, v.clone());
        self.order.push(*design);
        Ok(v)
    }
}

/// Front 0 of `population`, deduplicated by design (first occurrence kept).
pub fn first_front<T: Scalar>(population: &[ScoredDesign<T>]) -> ParetoFront<T> {
    let fronts = non_dominated_sort(population);
    let mut seen = HashSet::new();
    let members = fronts
        .first()
        .map(|f| {
            f.iter()
                .filter(|&&i| seen.insert(population[i].design))
                .map(|&i| population[i].clone())
                .collect()
        })
        .unwrap_or_default();
    ParetoFront { members }
}

/// Runs NSGA-II (or lattice enumeration when `config.exhaustive`) and
/// returns the first front of the final population, or of every design
/// evaluated during the run when `config.archive` is set.
pub fn nsga2<T, F>(space: &DesignSpace, evaluate: F, config: &Nsga2Config) -> Result<ParetoFront<T>, ParetoError>
where
    T: Scalar,
    F: Fn(&DesignPoint) -> Vec<T>,
{
    let mut evals = Evaluated { cache: HashMap::new(), order: Vec::new(), arity: None };

    if config.exhaustive {
        let pop = space
            .lattice()
            .into_iter()
            .map(|d| Ok(ScoredDesign { objectives: evals.get(&d, &evaluate)?, design: d }))
            .collect::<Result<Vec<_>, ParetoError>>()?;
        return Ok(first_front(&pop));
    }
    if config.population < 2 {
        return Err(ParetoError::PopulationTooSmall(config.population));
    }

    let mut rng = PortableRng::seed_from(config.seed);
    let normalize = |d: DesignPoint| -> DesignPoint {
        let alpha = if config.snap_to_lattice { space.snap_alpha(d.alpha) } else { d.alpha.clamp(0.0, 1.0) };
        DesignPoint { alpha, n_added: d.n_added.min(space.max_added) }
    };

    let mut population: Vec<ScoredDesign<T>> = Vec::with_capacity(config.population);
    for _ in 0..config.population {
        let d = normalize(DesignPoint {
            alpha: rng.uniform(),
            n_added: rng.below(space.max_added as usize + 1) as u32,
        });
        population.push(ScoredDesign { objectives: evals.get(&d, &evaluate)?, design: d });
    }
    let (mut rank, mut crowd) = rank_and_crowding(&population);

    for _ in 0..config.generations {
        let mut offspring = Vec::with_capacity(config.population);
        while offspring.len() < config.population {
            let p1 = tournament(&rank, &crowd, &mut rng);
            let p2 = tournament(&rank, &crowd, &mut rng);
            let (c1, c2) = crossover(&population[p1].design, &population[p2].design, config, &mut rng);
            for c in [c1, c2] {
                if offspring.len() == config.population {
                    break;
                }
                let c = normalize(mutate(c, space, config, &mut rng));
                offspring.push(ScoredDesign { objectives: evals.get(&c, &evaluate)?, design: c });
            }
        }
        population.extend(offspring);
        population = environmental_selection(population, config.population);
        let rc = rank_and_crowding(&population);
        rank = rc.0;
        crowd = rc.1;
    }
    if config.archive {
        let archive: Vec<ScoredDesign<T>> = evals
            .order
            .iter()
            .map(|d| ScoredDesign { design: *d, objectives: evals.cache[d].clone() })
            .collect();
        return Ok(first_front(&archive));
    }
    Ok(first_front(&population))
}

fn rank_and_crowding<T: Scalar>(population: &[ScoredDesign<T>]) -> (Vec<usize>, Vec<T>) {
    let fronts = non_dominated_sort(population);
    let mut rank = vec![0; population.len()];
    let mut crowd = vec![T::zero(); population.len()];
    for (r, front) in fronts.iter().enumerate() {
        let objs: Vec<&[T]> = front.iter().map(|&i| population[i].objectives.as_slice()).collect();
        let d = crowding_of(&objs);
        for (k, &i) in front.iter().enumerate() {
            rank[i] = r;
            crowd[i] = d[k];
        }
    }
    (rank, crowd)
}

fn tournament<T: Scalar>(rank: &[usize], crowd: &[T], rng: &mut PortableRng) -> usize {
    let a = rng.below(rank.len());
    let b = rng.below(rank.len());
    match rank[a].cmp(&rank[b]) {
        Ordering::Less => a,
        Ordering::Greater => b,
        Ordering::Equal => {
            if crowd[b] > crowd[a] {
                b
            } else {
                a
            }
        }
    }
}

/// Keeps `size` individuals: unique designs first by (rank, crowding),
/// duplicates only if there are not enough unique designs.
fn environmental_selection<T: Scalar>(merged: Vec<ScoredDesign<T>>, size: usize) -> Vec<ScoredDesign<T>> {
    let mut seen = HashSet::new();
    let (unique, dupes): (Vec<_>, Vec<_>) = merged.into_iter().partition(|s| seen.insert(s.design));
    let mut next = Vec::with_capacity(size);
    let fronts = non_dominated_sort(&unique);
    for front in fronts {
        if next.len() + front.len() <= size {
            next.extend(front.iter().map(|&i| unique[i].clone()));
        } else {
            let objs: Vec<&[T]> = front.iter().map(|&i| unique[i].objectives.as_slice()).collect();
            let d = crowding_of(&objs);
            let mut order: Vec<usize> = (0..front.len()).collect();
            order.sort_by(|&a, &b| d[b].partial_cmp(&d[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
            for k in order.into_iter().take(size - next.len()) {
                next.push(unique[front[k]].clone());
            }
        }
        if next.len() == size {
            break;
        }
    }
    next.extend(dupes.into_iter().take(size - next.len()));
    next
}

fn sbx(x1: f64, x2: f64, eta: f64, rng: &mut PortableRng) -> (f64, f64) {
    if (x1 - x2).abs() < 1e-14 {
        return (x1, x2);
    }
    let (y1, y2) = if x1 < x2 { (x1, x2) } else { (x2, x1) };
    let u = rng.uniform();
    let spread = |beta: f64| {
        let a = 2.0 - beta.powf(-(eta + 1.0));
        if u <= 1.0 / a {
            (u * a).powf(1.0 / (eta + 1.0))
        } else {
            (1.0 / (2.0 - u * a)).powf(1.0 / (eta + 1.0))
        }
    };
    let bq1 = spread(1.0 + 2.0 * y1 / (y2 - y1));
    let bq2 = spread(1.0 + 2.0 * (1.0 - y2) / (y2 - y1));
    let c1 = (0.5 * ((y1 + y2) - bq1 * (y2 - y1))).clamp(0.0, 1.0);
    let c2 = (0.5 * ((y1 + y2) + bq2 * (y2 - y1))).clamp(0.0, 1.0);
    if rng.bernoulli(0.5) {
        (c2, c1)
    } else {
        (c1, c2)
    }
}

fn crossover(
    a: &DesignPoint,
    b: &DesignPoint,
    config: &Nsga2Config,
    rng: &mut PortableRng,
) -> (DesignPoint, DesignPoint) {
    if !rng.bernoulli(config.crossover_prob) {
        return (*a, *b);
    }
    let (x1, x2) = sbx(a.alpha, b.alpha, config.sbx_eta, rng);
    let (n1, n2) = if rng.bernoulli(0.5) { (b.n_added, a.n_added) } else { (a.n_added, b.n_added) };
    (DesignPoint { alpha: x1, n_added: n1 }, DesignPoint { alpha: x2, n_added: n2 })
}

fn mutate(mut d: DesignPoint, space: &DesignSpace, config: &Nsga2Config, rng: &mut PortableRng) -> DesignPoint {
    if rng.bernoulli(config.mutation_prob) {
        d.alpha = (d.alpha + config.alpha_sigma * rng.normal()).clamp(0.0, 1.0);
    }
    if rng.bernoulli(config.mutation_prob) {
        d.n_added = rng.below(space.max_added as usize + 1) as u32;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sd(alpha: f64, objectives: Vec<f64>) -> ScoredDesign<f64> {
        ScoredDesign { design: DesignPoint { alpha, n_added: 0 }, objectives }
    }

    #[test]
    fn sort_trivial_cases() {
        assert_eq!(non_dominated_sort(&[sd(0.0, vec![1.0, 2.0])]), vec![vec![0]]);
        let two = [sd(0.0, vec![1.0, 1.0]), sd(0.1, vec![2.0, 2.0])];
        assert_eq!(non_dominated_sort(&two), vec![vec![1], vec![0]]);
        let equal = [sd(0.0, vec![1.0, 1.0]), sd(0.1, vec![1.0, 1.0])];
        assert_eq!(non_dominated_sort(&equal), vec![vec![0, 1]]);
    }

    #[test]
    fn crowding_examples() {
        assert!(crowding_distance(&[sd(0.0, vec![1.0]), sd(0.1, vec![2.0])])
            .iter()
            .all(|d| d.is_infinite()));
        let front = [
            sd(0.0, vec![0.0, 1.0, 1.0]),
            sd(0.1, vec![0.5, 1.0, 1.0]),
            sd(0.2, vec![1.0, 1.0, 1.0]),
        ];
        let d = crowding_distance(&front);
        assert!(d[0].is_infinite() && d[2].is_infinite());
        assert!((d[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn crowding_is_permutation_invariant() {
        let mut rng = PortableRng::seed_from(11);
        let front: Vec<_> = (0..9)
            .map(|i| sd(i as f64 / 10.0, vec![(rng.below(4)) as f64, rng.uniform(), 1.0]))
            .collect();
        let mut base = crowding_distance(&front);
        base.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for _ in 0..20 {
            let mut perm = front.clone();
            rng.shuffle(&mut perm);
            let mut d = crowding_distance(&perm);
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_eq!(d, base);
        }
    }

    #[test]
    fn single_point_space() {
        let space = DesignSpace::new(0, 1).unwrap();
        let front = nsga2(&space, |_| vec![1.0, 2.0], &Nsga2Config::default()).unwrap();
        assert_eq!(front.len(), 1);
        assert_eq!(front.members[0].design, DesignPoint { alpha: 0.0, n_added: 0 });
    }

    #[test]
    fn finds_a_single_dominating_point() {
        let space = DesignSpace::new(3, 101).unwrap();
        let star = DesignPoint { alpha: 0.37, n_added: 2 };
        let eval = |d: &DesignPoint| {
            let g = -(d.alpha - 0.37).abs() - (d.n_added as f64 - 2.0).abs();
            vec![g, 2.0 * g]
        };
        let cfg = Nsga2Config { generations: 20, ..Default::default() };
        let front = nsga2(&space, eval, &cfg).unwrap();
        assert_eq!(front.members.len(), 1);
        assert_eq!(front.members[0].design, star);
    }

    #[test]
    fn non_finite_objectives_are_errors() {
        let space = DesignSpace::new(1, 11).unwrap();
        let r = nsga2(&space, |_| vec![f64::NAN], &Nsga2Config::default());
        assert!(matches!(r, Err(ParetoError::NonFinite { .. })));
    }

    #[test]
    fn reproducible_given_seed() {
        let space = DesignSpace::new(3, 101).unwrap();
        let eval = |d: &DesignPoint| vec![(7.0 * d.alpha).sin(), d.n_added as f64 * (1.0 - d.alpha), -d.alpha];
        let cfg = Nsga2Config { seed: 9, ..Default::default() };
        let a = nsga2(&space, eval, &cfg).unwrap();
        let b = nsga2(&space, eval, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.is_mutually_non_dominated());
    }

    #[test]
    fn continuous_mode_does_not_snap() {
        let space = DesignSpace::new(2, 3).unwrap();
        let cfg = Nsga2Config { snap_to_lattice: false, generations: 5, ..Default::default() };
        let front = nsga2(&space, |d: &DesignPoint| vec![-(d.alpha - 0.123).powi(2), d.n_added as f64], &cfg).unwrap();
        assert!(front.designs().any(|d| !space.contains(d)));
    }
}
