//! From-scratch NSGA-III for two maximized objectives.
//!
//! Non-dominated sorting, Das–Dennis reference directions, ideal-point
//! translation with achievement-scalarizing extreme points and hyperplane
//! intercepts, and reference-direction niching. Objectives are stored in
//! maximization form throughout; the normalization translates by the ideal
//! point into a minimization-like nonnegative space internally.
//!
//! Variation: segment-restricted blend crossover (two cut points, alpha
//! blend for continuous genes, swap for categorical genes) and per-gene
//! mutation with a uniformly drawn relative step scale.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::seed::stream;

/// Bounds and kind of one gene. Categorical genes store their category index
/// as an integral `f64`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeneBound {
    Continuous { lo: f64, hi: f64 },
    Categorical { categories: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneSpec {
    pub genes: Vec<GeneBound>,
}

impl GeneSpec {
    pub fn len(&self) -> usize {
        self.genes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genes.is_empty()
    }

    pub fn clip(&self, genes: &mut [f64]) {
        for (g, b) in genes.iter_mut().zip(&self.genes) {
            if let GeneBound::Continuous { lo, hi } = b {
                *g = g.clamp(*lo, *hi);
            }
        }
    }

    pub fn contains(&self, genes: &[f64]) -> bool {
        genes.iter().zip(&self.genes).all(|(g, b)| match b {
            GeneBound::Continuous { lo, hi } => (*lo..=*hi).contains(g),
            GeneBound::Categorical { categories } => {
                g.fract() == 0.0 && (0.0..*categories as f64).contains(g)
            }
        })
    }
}

/// A candidate solution: genes in native units, objectives in maximization
/// convention.
#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub genes: Vec<f64>,
    pub objectives: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Nsga3Config {
    pub population: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    pub crossover_alpha: f64,
    pub mutation_prob: f64,
    /// Bounds on the per-mutation step scale, as a fraction of gene range.
    pub mutation_sigma: (f64, f64),
    /// Das–Dennis divisions; for 2 objectives `divisions + 1` directions.
    pub divisions: usize,
}

impl Default for Nsga3Config {
    fn default() -> Self {
        Self {
            population: 100,
            generations: 100,
            crossover_prob: 0.7,
            crossover_alpha: 0.5,
            mutation_prob: 0.2,
            mutation_sigma: (0.01, 0.5),
            divisions: 99,
        }
    }
}

/// `a` dominates `b` under maximization.
pub fn dominates(a: &[f64; 2], b: &[f64; 2]) -> bool {
    a[0] >= b[0] && a[1] >= b[1] && (a[0] > b[0] || a[1] > b[1])
}

/// Deb's fast non-dominated sort; returns fronts of indices, best first.
pub fn fast_nondominated_sort(objectives: &[[f64; 2]]) -> Vec<Vec<usize>> {
    let n = objectives.len();
    let mut dominated_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut counts = vec![0usize; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if dominates(&objectives[i], &objectives[j]) {
                dominated_by[i].push(j);
                counts[j] += 1;
            } else if dominates(&objectives[j], &objectives[i]) {
                dominated_by[j].push(i);
                counts[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| counts[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominated_by[i] {
                counts[j] -= 1;
                if counts[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(std::mem::replace(&mut current, next));
    }
    fronts
}

/// All simplex lattice points with coordinates `k / divisions`;
/// `C(divisions + n_obj - 1, n_obj - 1)` directions.
pub fn das_dennis(n_obj: usize, divisions: usize) -> Vec<Vec<f64>> {
    assert!(n_obj >= 2 && divisions >= 1);
    let mut dirs = Vec::new();
    let mut current = vec![0.0; n_obj];
    fn recurse(dirs: &mut Vec<Vec<f64>>, current: &mut Vec<f64>, divisions: usize, left: usize, depth: usize) {
        if depth == current.len() - 1 {
            current[depth] = left as f64 / divisions as f64;
            dirs.push(current.clone());
        } else {
            for k in 0..=left {
                current[depth] = k as f64 / divisions as f64;
                recurse(dirs, current, divisions, left - k, depth + 1);
            }
        }
    }
    recurse(&mut dirs, &mut current, divisions, divisions, 0);
    dirs
}

/// Ideal-point translation and intercept normalization. Returns vectors in
/// the translated space divided by the intercepts (0 at the ideal point).
/// Falls back to the worst-of-first-front extent when the extreme-point
/// hyperplane is degenerate or gives non-positive intercepts.
pub fn normalize_objectives(objectives: &[[f64; 2]], fronts: &[Vec<usize>]) -> Vec<[f64; 2]> {
    assert!(!objectives.is_empty());
    let mut ideal = [f64::NEG_INFINITY; 2];
    for o in objectives {
        ideal[0] = ideal[0].max(o[0]);
        ideal[1] = ideal[1].max(o[1]);
    }
    let translated: Vec<[f64; 2]> = objectives
        .iter()
        .map(|o| [ideal[0] - o[0], ideal[1] - o[1]])
        .collect();

    // Extreme point per axis by achievement scalarizing function.
    let asf = |t: &[f64; 2], axis: usize| -> f64 {
        let w = |j: usize| if j == axis { 1.0 } else { 1e-6 };
        (t[0] / w(0)).max(t[1] / w(1))
    };
    let extreme = |axis: usize| -> [f64; 2] {
        let mut best = 0usize;
        let mut best_v = f64::INFINITY;
        for (i, t) in translated.iter().enumerate() {
            let v = asf(t, axis);
            if v < best_v {
                best_v = v;
                best = i;
            }
        }
        translated[best]
    };
    let e0 = extreme(0);
    let e1 = extreme(1);

    // Intercepts of the plane through the extreme points.
    let det = e0[0] * e1[1] - e0[1] * e1[0];
    let mut intercepts = None;
    if det.abs() > 1e-12 {
        let n0 = (e1[1] - e0[1]) / det;
        let n1 = (e0[0] - e1[0]) / det;
        if n0 > 0.0 && n1 > 0.0 {
            let a = [1.0 / n0, 1.0 / n1];
            if a.iter().all(|v| v.is_finite() && *v > 1e-12) {
                intercepts = Some(a);
            }
        }
    }
    let intercepts = intercepts.unwrap_or_else(|| {
        let mut worst = [0.0f64; 2];
        if let Some(first) = fronts.first() {
            for &i in first {
                worst[0] = worst[0].max(translated[i][0]);
                worst[1] = worst[1].max(translated[i][1]);
            }
        }
        [
            if worst[0] > 1e-12 { worst[0] } else { 1.0 },
            if worst[1] > 1e-12 { worst[1] } else { 1.0 },
        ]
    });

    translated
        .iter()
        .map(|t| [t[0] / intercepts[0], t[1] / intercepts[1]])
        .collect()
}

/// Perpendicular distance from `p` to the ray through `dir`.
fn perpendicular_distance(p: &[f64; 2], dir: &[f64]) -> f64 {
    let dd = dir[0] * dir[0] + dir[1] * dir[1];
    let proj = (p[0] * dir[0] + p[1] * dir[1]) / dd;
    let rx = p[0] - proj * dir[0];
    let ry = p[1] - proj * dir[1];
    (rx * rx + ry * ry).sqrt()
}

/// Associates each normalized vector with its nearest reference direction.
/// Returns `(direction index, perpendicular distance)` per input.
pub fn associate(normalized: &[[f64; 2]], dirs: &[Vec<f64>]) -> Vec<(usize, f64)> {
    normalized
        .iter()
        .map(|p| {
            let mut best = (0usize, f64::INFINITY);
            for (j, d) in dirs.iter().enumerate() {
                let dist = perpendicular_distance(p, d);
                if dist < best.1 {
                    best = (j, dist);
                }
            }
            best
        })
        .collect()
}

/// Fills `slots` from `last_front` by repeatedly taking the closest available
/// member of the direction with the smallest niche count (seeded random
/// tie-break among equally starved directions). `associations` covers every
/// candidate index referenced by `earlier` and `last_front`; niche counts
/// start from the earlier fronts' associations.
pub fn associate_and_niche<R: Rng>(
    associations: &[(usize, f64)],
    earlier: &[usize],
    last_front: &[usize],
    n_dirs: usize,
    slots: usize,
    rng: &mut R,
) -> Vec<usize> {
    assert!(slots <= last_front.len());
    let mut counts = vec![0usize; n_dirs];
    for &i in earlier {
        counts[associations[i].0] += 1;
    }
    // Per-direction members of the last front, closest first.
    let mut available: Vec<Vec<(f64, usize)>> = vec![Vec::new(); n_dirs];
    for &i in last_front {
        let (dir, dist) = associations[i];
        available[dir].push((dist, i));
    }
    for list in &mut available {
        list.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        list.reverse(); // pop() yields the closest
    }

    let mut selected = Vec::with_capacity(slots);
    while selected.len() < slots {
        let min_count = (0..n_dirs)
            .filter(|&j| !available[j].is_empty())
            .map(|j| counts[j])
            .min()
            .expect("niching ran out of candidates");
        let starved: Vec<usize> = (0..n_dirs)
            .filter(|&j| !available[j].is_empty() && counts[j] == min_count)
            .collect();
        let dir = starved[rng.gen_range(0..starved.len())];
        let (_, idx) = available[dir].pop().unwrap();
        counts[dir] += 1;
        selected.push(idx);
    }
    selected
}

/// Segment-restricted blend crossover. With probability `prob`, two cut
/// points bound a segment in which continuous genes blend
/// (`c1 = alpha*g1 + (1-alpha)*g2`, symmetrically for `c2`) and categorical
/// genes swap; outside it each child copies its own parent. Otherwise the
/// children are clones.
pub fn crossover<R: Rng>(
    p1: &[f64],
    p2: &[f64],
    spec: &GeneSpec,
    alpha: f64,
    prob: f64,
    rng: &mut R,
) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(p1.len(), p2.len());
    let mut c1 = p1.to_vec();
    let mut c2 = p2.to_vec();
    if rng.gen::<f64>() >= prob {
        return (c1, c2);
    }
    let n = p1.len();
    let a = rng.gen_range(0..=n);
    let b = rng.gen_range(0..=n);
    let (lo, hi) = (a.min(b), a.max(b));
    for i in lo..hi {
        match spec.genes[i] {
            GeneBound::Continuous { .. } => {
                c1[i] = alpha * p1[i] + (1.0 - alpha) * p2[i];
                c2[i] = alpha * p2[i] + (1.0 - alpha) * p1[i];
            }
            GeneBound::Categorical { .. } => {
                c1[i] = p2[i];
                c2[i] = p1[i];
            }
        }
    }
    (c1, c2)
}

/// Per-gene mutation: continuous genes take a Gaussian step whose standard
/// deviation is a uniformly drawn fraction of the gene range (then clip to
/// bounds); categorical genes flip to a different category.
pub fn mutate<R: Rng>(
    genes: &mut [f64],
    spec: &GeneSpec,
    prob: f64,
    sigma: (f64, f64),
    rng: &mut R,
) {
    for (g, bound) in genes.iter_mut().zip(&spec.genes) {
        if rng.gen::<f64>() >= prob {
            continue;
        }
        match *bound {
            GeneBound::Continuous { lo, hi } => {
                let scale = rng.gen_range(sigma.0..=sigma.1) * (hi - lo);
                let step: f64 = rng.sample::<f64, _>(StandardNormal) * scale;
                *g = (*g + step).clamp(lo, hi);
            }
            GeneBound::Categorical { categories } => {
                if categories > 1 {
                    let current = *g as usize;
                    let pick = rng.gen_range(0..categories - 1);
                    *g = if pick >= current { pick + 1 } else { pick } as f64;
                }
            }
        }
    }
}

/// Per-generation best objective values discovered so far (elitist archive).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TraceRow {
    pub generation: usize,
    pub best_f1: f64,
    pub best_f2: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    /// Final population, in front order.
    pub population: Vec<Individual>,
    /// Fronts as index lists into `population`.
    pub fronts: Vec<Vec<usize>>,
    /// The final first front (mutually non-dominated).
    pub pareto: Vec<Individual>,
    pub traces: Vec<TraceRow>,
}

impl RunResult {
    /// The first `n` individuals in front order: the first front padded by
    /// subsequent fronts.
    pub fn top(&self, n: usize) -> Vec<Individual> {
        self.population.iter().take(n).cloned().collect()
    }
}

struct Meta {
    rank: usize,
    niche_distance: f64,
}

/// Environmental selection of `n_survive` from `candidates`; returns the
/// survivors (front order) with tournament metadata.
fn environmental_selection<R: Rng>(
    candidates: Vec<Individual>,
    n_survive: usize,
    dirs: &[Vec<f64>],
    rng: &mut R,
) -> (Vec<Individual>, Vec<Meta>) {
    let objectives: Vec<[f64; 2]> = candidates.iter().map(|c| c.objectives).collect();
    let fronts = fast_nondominated_sort(&objectives);
    let normalized = normalize_objectives(&objectives, &fronts);
    let associations = associate(&normalized, dirs);

    let mut chosen: Vec<(usize, usize)> = Vec::with_capacity(n_survive); // (candidate, rank)
    let mut earlier: Vec<usize> = Vec::new();
    for (rank, front) in fronts.iter().enumerate() {
        if chosen.len() + front.len() <= n_survive {
            chosen.extend(front.iter().map(|&i| (i, rank)));
            earlier.extend_from_slice(front);
            if chosen.len() == n_survive {
                break;
            }
        } else {
            let slots = n_survive - chosen.len();
            let picked = associate_and_niche(&associations, &earlier, front, dirs.len(), slots, rng);
            chosen.extend(picked.into_iter().map(|i| (i, rank)));
            break;
        }
    }

    let mut survivors = Vec::with_capacity(chosen.len());
    let mut meta = Vec::with_capacity(chosen.len());
    for &(i, rank) in &chosen {
        survivors.push(candidates[i].clone());
        meta.push(Meta {
            rank,
            niche_distance: associations[i].1,
        });
    }
    (survivors, meta)
}

fn binary_tournament<'a, R: Rng>(
    population: &'a [Individual],
    meta: &[Meta],
    rng: &mut R,
) -> &'a Individual {
    let a = rng.gen_range(0..population.len());
    let b = rng.gen_range(0..population.len());
    let pick_a = match meta[a].rank.cmp(&meta[b].rank) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => meta[a].niche_distance <= meta[b].niche_distance,
    };
    &population[if pick_a { a } else { b }]
}

fn random_genes<R: Rng>(spec: &GeneSpec, rng: &mut R) -> Vec<f64> {
    spec.genes
        .iter()
        .map(|b| match *b {
            GeneBound::Continuous { lo, hi } => lo + rng.gen::<f64>() * (hi - lo),
            GeneBound::Categorical { categories } => rng.gen_range(0..categories) as f64,
        })
        .collect()
}

/// Runs the full optimization loop. `objective` must be pure; non-finite
/// objective values abort the run naming the offending genes.
pub fn run<F>(objective: F, spec: &GeneSpec, config: &Nsga3Config, seed: u64) -> Result<RunResult>
where
    F: Fn(&[f64]) -> [f64; 2],
{
    if config.population == 0 || spec.is_empty() {
        return Err(Error::Config("empty population or gene spec".into()));
    }
    let dirs = das_dennis(2, config.divisions);
    if dirs.len() > config.population {
        return Err(Error::Config(format!(
            "{} reference directions exceed population {}",
            dirs.len(),
            config.population
        )));
    }
    let mut rng = stream(seed, "nsga3", &[]);
    let evaluate = |genes: Vec<f64>| -> Result<Individual> {
        let objectives = objective(&genes);
        if objectives.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "objective returned non-finite values {objectives:?} for genes {genes:?}"
            )));
        }
        Ok(Individual { genes, objectives })
    };

    let mut archive_best = [f64::NEG_INFINITY; 2];
    let mut traces = Vec::with_capacity(config.generations + 1);
    let mut note_best = |pop: &[Individual], generation: usize, traces: &mut Vec<TraceRow>| {
        for ind in pop {
            archive_best[0] = archive_best[0].max(ind.objectives[0]);
            archive_best[1] = archive_best[1].max(ind.objectives[1]);
        }
        traces.push(TraceRow {
            generation,
            best_f1: archive_best[0],
            best_f2: archive_best[1],
        });
    };

    let initial: Vec<Individual> = (0..config.population)
        .map(|_| evaluate(random_genes(spec, &mut rng)))
        .collect::<Result<_>>()?;
    note_best(&initial, 0, &mut traces);
    let (mut population, mut meta) =
        environmental_selection(initial, config.population, &dirs, &mut rng);

    for generation in 1..=config.generations {
        let mut offspring: Vec<Individual> = Vec::with_capacity(config.population);
        while offspring.len() < config.population {
            let p1 = binary_tournament(&population, &meta, &mut rng).genes.clone();
            let p2 = binary_tournament(&population, &meta, &mut rng).genes.clone();
            let (mut c1, mut c2) = crossover(
                &p1,
                &p2,
                spec,
                config.crossover_alpha,
                config.crossover_prob,
                &mut rng,
            );
            mutate(&mut c1, spec, config.mutation_prob, config.mutation_sigma, &mut rng);
            mutate(&mut c2, spec, config.mutation_prob, config.mutation_sigma, &mut rng);
            offspring.push(evaluate(c1)?);
            if offspring.len() < config.population {
                offspring.push(evaluate(c2)?);
            }
        }
        note_best(&offspring, generation, &mut traces);

        let mut combined = population;
        combined.extend(offspring);
        let (next, next_meta) =
            environmental_selection(combined, config.population, &dirs, &mut rng);
        population = next;
        meta = next_meta;
        debug_assert_eq!(population.len(), config.population);
    }

    let objectives: Vec<[f64; 2]> = population.iter().map(|c| c.objectives).collect();
    let fronts = fast_nondominated_sort(&objectives);
    let pareto = fronts[0].iter().map(|&i| population[i].clone()).collect();
    Ok(RunResult {
        population,
        fronts,
        pareto,
        traces,
    })
}
