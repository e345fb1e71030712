//! NSGA-II over unit-box genomes with two minimized objectives: fast
//! non-dominated sorting, crowding distance, binary tournament, simulated
//! binary crossover and polynomial mutation. An external archive keeps every
//! non-dominated point seen during the run.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Problem definition: genomes live in `[0, 1]^n`; `repair` projects a
/// genome back onto the feasible set after variation.
pub trait Problem: Sync {
    fn genome_len(&self) -> usize;
    fn repair(&self, _genome: &mut [f64]) -> Result<()> {
        Ok(())
    }
    /// Batched evaluation of the two minimized objectives.
    fn evaluate(&self, genomes: &[Vec<f64>]) -> Result<Vec<[f64; 2]>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub genome: Vec<f64>,
    pub objectives: [f64; 2],
    pub rank: usize,
    pub crowding: f64,
}

/// `a` dominates `b`: no worse in both objectives, better in at least one.
pub fn dominates(a: &[f64; 2], b: &[f64; 2]) -> bool {
    a[0] <= b[0] && a[1] <= b[1] && (a[0] < b[0] || a[1] < b[1])
}

/// Fast non-dominated sort; returns fronts of indices, best first.
pub fn non_dominated_sort(objectives: &[[f64; 2]]) -> Vec<Vec<usize>> {
    let n = objectives.len();
    let mut dominated: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut count = vec![0usize; n];
    let mut fronts: Vec<Vec<usize>> = Vec::new();
    let mut first = Vec::new();

    for p in 0..n {
        for q in 0..n {
            if p == q {
                continue;
            }
            if dominates(&objectives[p], &objectives[q]) {
                dominated[p].push(q);
            } else if dominates(&objectives[q], &objectives[p]) {
                count[p] += 1;
            }
        }
        if count[p] == 0 {
            first.push(p);
        }
    }

    let mut current = first;
    while !current.is_empty() {
        let mut next = Vec::new();
        for &p in &current {
            for &q in &dominated[p] {
                count[q] -= 1;
                if count[q] == 0 {
                    next.push(q);
                }
            }
        }
        fronts.push(std::mem::take(&mut current));
        current = next;
    }
    fronts
}

/// Crowding distances for one front; boundary points get infinity.
pub fn crowding_distances(front: &[[f64; 2]]) -> Vec<f64> {
    let n = front.len();
    let mut dist = vec![0.0; n];
    if n == 0 {
        return dist;
    }
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    for m in 0..2 {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| front[a][m].partial_cmp(&front[b][m]).unwrap());
        let lo = front[idx[0]][m];
        let hi = front[idx[n - 1]][m];
        dist[idx[0]] = f64::INFINITY;
        dist[idx[n - 1]] = f64::INFINITY;
        if hi > lo {
            for i in 1..n - 1 {
                dist[idx[i]] += (front[idx[i + 1]][m] - front[idx[i - 1]][m]) / (hi - lo);
            }
        }
    }
    dist
}

#[derive(Debug, Clone)]
pub struct Nsga2Config {
    pub population: usize,
    pub generations: usize,
    pub sbx_eta: f64,
    pub mutation_eta: f64,
    /// Defaults to `1 / genome_len` when `None`.
    pub mutation_prob: Option<f64>,
    pub keep_eval_log: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub archive_size: usize,
    /// Hypervolume of the archive front against a fixed reference point.
    pub archive_hypervolume: f64,
}

#[derive(Debug)]
pub struct RunResult {
    /// Non-dominated archive over every evaluation, objective-deduplicated
    /// and sorted by the second objective.
    pub front: Vec<Individual>,
    pub history: Vec<GenerationStats>,
    /// All evaluated points when `keep_eval_log` is on.
    pub eval_log: Vec<[f64; 2]>,
    pub evaluations: usize,
}

/// Reference point for the archive hypervolume indicator. Objectives beyond
/// it contribute nothing; it only needs to be an upper bound.
const HV_REF: [f64; 2] = [1e6, 1e6];

/// 2-D hypervolume of a non-dominated set against `HV_REF`.
pub fn hypervolume(front: &[[f64; 2]]) -> f64 {
    let mut pts: Vec<[f64; 2]> = front
        .iter()
        .filter(|p| p[0] < HV_REF[0] && p[1] < HV_REF[1])
        .copied()
        .collect();
    pts.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
    let mut hv = 0.0;
    let mut prev_y = HV_REF[1];
    for p in pts {
        if p[1] < prev_y {
            hv += (HV_REF[0] - p[0]) * (prev_y - p[1]);
            prev_y = p[1];
        }
    }
    hv
}

struct Archive {
    points: Vec<Individual>,
}

impl Archive {
    fn new() -> Self {
        Archive { points: Vec::new() }
    }

    fn insert(&mut self, genome: &[f64], objectives: [f64; 2]) {
        if self
            .points
            .iter()
            .any(|p| dominates(&p.objectives, &objectives) || p.objectives == objectives)
        {
            return;
        }
        self.points
            .retain(|p| !dominates(&objectives, &p.objectives));
        self.points.push(Individual {
            genome: genome.to_vec(),
            objectives,
            rank: 0,
            crowding: 0.0,
        });
    }

    fn objectives(&self) -> Vec<[f64; 2]> {
        self.points.iter().map(|p| p.objectives).collect()
    }
}

/// Runs the generational loop. `seeds` are genomes injected into the initial
/// population (the rest is sampled uniformly).
pub fn run(
    problem: &dyn Problem,
    cfg: &Nsga2Config,
    seeds: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
) -> Result<RunResult> {
    if cfg.population == 0 || cfg.population % 2 != 0 {
        return Err(Error::Config("population size must be even".into()));
    }
    let len = problem.genome_len();
    let pm = cfg.mutation_prob.unwrap_or(1.0 / len as f64);

    let mut genomes: Vec<Vec<f64>> = Vec::with_capacity(cfg.population);
    for s in seeds.iter().take(cfg.population) {
        if s.len() != len {
            return Err(Error::Dimension("seed genome length mismatch".into()));
        }
        let mut g = s.clone();
        problem.repair(&mut g)?;
        genomes.push(g);
    }
    while genomes.len() < cfg.population {
        let mut g: Vec<f64> = (0..len).map(|_| rng.gen::<f64>()).collect();
        problem.repair(&mut g)?;
        genomes.push(g);
    }

    let mut archive = Archive::new();
    let mut eval_log = Vec::new();
    let mut evaluations = 0;

    let evaluate = |genomes: &[Vec<f64>],
                        archive: &mut Archive,
                        eval_log: &mut Vec<[f64; 2]>,
                        evaluations: &mut usize|
     -> Result<Vec<[f64; 2]>> {
        let objs = problem.evaluate(genomes)?;
        for (g, o) in genomes.iter().zip(&objs) {
            if !o[0].is_finite() || !o[1].is_finite() {
                return Err(Error::NonFinite(format!(
                    "objectives for genome {g:?}"
                )));
            }
            archive.insert(g, *o);
            if cfg.keep_eval_log {
                eval_log.push(*o);
            }
        }
        *evaluations += genomes.len();
        Ok(objs)
    };

    let objs = evaluate(&genomes, &mut archive, &mut eval_log, &mut evaluations)?;
    let mut population = assign_ranks(genomes, objs);
    let mut history = Vec::with_capacity(cfg.generations);

    for generation in 0..cfg.generations {
        // Variation: binary tournament on (rank, crowding), SBX, mutation.
        let mut children: Vec<Vec<f64>> = Vec::with_capacity(cfg.population);
        while children.len() < cfg.population {
            let p1 = tournament(&population, rng);
            let p2 = tournament(&population, rng);
            let (mut c1, mut c2) = sbx(
                &population[p1].genome,
                &population[p2].genome,
                cfg.sbx_eta,
                rng,
            );
            polynomial_mutation(&mut c1, cfg.mutation_eta, pm, rng);
            polynomial_mutation(&mut c2, cfg.mutation_eta, pm, rng);
            problem.repair(&mut c1)?;
            problem.repair(&mut c2)?;
            children.push(c1);
            if children.len() < cfg.population {
                children.push(c2);
            }
        }

        let child_objs = evaluate(&children, &mut archive, &mut eval_log, &mut evaluations)?;

        // Environmental selection over parents + children.
        let mut pool_genomes: Vec<Vec<f64>> = Vec::with_capacity(2 * cfg.population);
        let mut pool_objs: Vec<[f64; 2]> = Vec::with_capacity(2 * cfg.population);
        for ind in population {
            pool_genomes.push(ind.genome);
            pool_objs.push(ind.objectives);
        }
        pool_genomes.extend(children);
        pool_objs.extend(child_objs);

        population = select_best(pool_genomes, pool_objs, cfg.population);

        history.push(GenerationStats {
            generation,
            archive_size: archive.points.len(),
            archive_hypervolume: hypervolume(&archive.objectives()),
        });
    }

    let mut front = archive.points;
    front.sort_by(|a, b| a.objectives[1].partial_cmp(&b.objectives[1]).unwrap());
    Ok(RunResult {
        front,
        history,
        eval_log,
        evaluations,
    })
}

fn assign_ranks(genomes: Vec<Vec<f64>>, objs: Vec<[f64; 2]>) -> Vec<Individual> {
    let fronts = non_dominated_sort(&objs);
    let mut individuals: Vec<Individual> = genomes
        .into_iter()
        .zip(objs)
        .map(|(genome, objectives)| Individual {
            genome,
            objectives,
            rank: 0,
            crowding: 0.0,
        })
        .collect();
    for (rank, front) in fronts.iter().enumerate() {
        let front_objs: Vec<[f64; 2]> = front.iter().map(|&i| individuals[i].objectives).collect();
        let dist = crowding_distances(&front_objs);
        for (j, &i) in front.iter().enumerate() {
            individuals[i].rank = rank;
            individuals[i].crowding = dist[j];
        }
    }
    individuals
}

fn select_best(genomes: Vec<Vec<f64>>, objs: Vec<[f64; 2]>, keep: usize) -> Vec<Individual> {
    let mut pool = assign_ranks(genomes, objs);
    pool.sort_by(|a, b| {
        a.rank
            .cmp(&b.rank)
            .then_with(|| b.crowding.partial_cmp(&a.crowding).unwrap())
    });
    pool.truncate(keep);
    pool
}

fn tournament(population: &[Individual], rng: &mut ChaCha8Rng) -> usize {
    let a = rng.gen_range(0..population.len());
    let b = rng.gen_range(0..population.len());
    let x = &population[a];
    let y = &population[b];
    if x.rank < y.rank || (x.rank == y.rank && x.crowding > y.crowding) {
        a
    } else {
        b
    }
}

/// Simulated binary crossover on `[0, 1]` genes (bounded form).
fn sbx(p1: &[f64], p2: &[f64], eta: f64, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let mut c1 = p1.to_vec();
    let mut c2 = p2.to_vec();
    if rng.gen::<f64>() > 0.9 {
        // Whole-genome crossover probability, as in the reference operator.
        return (c1, c2);
    }
    for i in 0..p1.len() {
        if rng.gen::<f64>() > 0.5 {
            continue;
        }
        let (y1, y2) = if p1[i] < p2[i] {
            (p1[i], p2[i])
        } else {
            (p2[i], p1[i])
        };
        if (y2 - y1).abs() < 1e-14 {
            continue;
        }
        let u: f64 = rng.gen();
        let make_child = |beta_bound: f64| -> f64 {
            let alpha = 2.0 - beta_bound.powf(-(eta + 1.0));
            if u <= 1.0 / alpha {
                (u * alpha).powf(1.0 / (eta + 1.0))
            } else {
                (1.0 / (2.0 - u * alpha)).powf(1.0 / (eta + 1.0))
            }
        };
        let beta1 = 1.0 + 2.0 * y1 / (y2 - y1);
        let beta2 = 1.0 + 2.0 * (1.0 - y2) / (y2 - y1);
        let bq1 = make_child(beta1);
        let bq2 = make_child(beta2);
        let mut a = 0.5 * ((y1 + y2) - bq1 * (y2 - y1));
        let mut b = 0.5 * ((y1 + y2) + bq2 * (y2 - y1));
        a = a.clamp(0.0, 1.0);
        b = b.clamp(0.0, 1.0);
        if rng.gen::<f64>() < 0.5 {
            std::mem::swap(&mut a, &mut b);
        }
        c1[i] = a;
        c2[i] = b;
    }
    (c1, c2)
}

/// Polynomial mutation on `[0, 1]` genes.
fn polynomial_mutation(genome: &mut [f64], eta: f64, pm: f64, rng: &mut ChaCha8Rng) {
    for g in genome.iter_mut() {
        if rng.gen::<f64>() >= pm {
            continue;
        }
        let y = *g;
        let u: f64 = rng.gen();
        let delta = if u < 0.5 {
            let b = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - y).powf(eta + 1.0);
            b.powf(1.0 / (eta + 1.0)) - 1.0
        } else {
            let b = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * y.powf(eta + 1.0);
            1.0 - b.powf(1.0 / (eta + 1.0))
        };
        *g = (y + delta).clamp(0.0, 1.0);
    }
}
