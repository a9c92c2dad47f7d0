use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::enumeration::{enumerate_graphs, EnumerationConfig};
use crate::error::{EinconvError, Result};
use crate::graph::{make_named, ConvGeometry, NamedKind};
use crate::layer::complexity;
use crate::reduction::reduce;

use super::evaluator::Evaluator;
use super::mutation::{mutate, normalize_stages, Genome};
use super::nsga2::{crowded_better, environmental_selection, front_ranks, pareto_front, rank_and_crowding, Objectives};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub population: usize,
    pub generations: usize,
    pub seed: u64,
    /// Geometry genomes are stored and costed at.
    pub reference: ConvGeometry,
    /// Stop once this many distinct genomes have been evaluated.
    pub eval_budget: Option<usize>,
    /// Rank dims for the named seed layers (keys A, B, Gamma, R).
    pub named_ranks: BTreeMap<String, usize>,
    /// Rank-label budget of the enumeration used for random seeds.
    pub random_rank_indices: usize,
    /// Comment lines written at the top of every results file.
    pub header: Vec<String>,
}

impl SearchConfig {
    pub fn new(population: usize, generations: usize, seed: u64, reference: ConvGeometry) -> Self {
        SearchConfig {
            population,
            generations,
            seed,
            reference,
            eval_budget: None,
            named_ranks: [("A", 4), ("B", 4), ("Gamma", 8), ("R", 4)]
                .iter()
                .map(|&(k, v)| (k.to_string(), v))
                .collect(),
            random_rank_indices: 1,
            header: Vec::new(),
        }
    }

    fn check(&self) -> Result<()> {
        if self.population == 0 || self.eval_budget == Some(0) {
            return Err(EinconvError::Config("population and budget must be positive".into()));
        }
        self.reference.check()
    }
}

/// An evaluated, distinct genome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub genome: Genome,
    pub hash: String,
    pub objectives: Objectives,
    pub flops: u64,
    pub generation: usize,
    /// Error text when evaluation failed (accuracy recorded as 0).
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchState {
    pub config: SearchConfig,
    /// Last completed generation; 0 is the initial population.
    pub generation: usize,
    pub archive: Vec<Individual>,
    /// Archive indices of the current population (repeats allowed).
    pub population: Vec<usize>,
}

impl SearchState {
    pub fn objectives(&self) -> Vec<Objectives> {
        self.archive.iter().map(|i| i.objectives).collect()
    }

    /// Archive indices of the archive's Pareto front.
    pub fn front(&self) -> Vec<usize> {
        pareto_front(&self.objectives())
    }

    fn budget_left(&self) -> usize {
        self.config.eval_budget.map_or(usize::MAX, |b| b.saturating_sub(self.archive.len()))
    }
}

fn generation_rng(seed: u64, generation: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(generation as u64);
    rng
}

fn prepare(g: crate::graph::EinconvGraph) -> Genome {
    let mut g = reduce(&g).result;
    normalize_stages(&mut g);
    Genome::new(g)
}

/// Named layers at the reference geometry followed by shuffled samples of
/// the enumeration, deduplicated, `cfg.population` in total when possible.
pub fn initial_population(cfg: &SearchConfig) -> Result<Vec<Genome>> {
    let geom = &cfg.reference;
    let kinds: &[NamedKind] = if geom.n_axes() == 3 {
        &NamedKind::ALL_3D
    } else {
        &NamedKind::ALL_2D
    };
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for &kind in kinds {
        if let Ok(g) = make_named(kind, geom, &cfg.named_ranks) {
            let genome = prepare(g);
            if seen.insert(genome.key()) {
                out.push(genome);
            }
        }
    }
    out.truncate(cfg.population);
    if out.len() < cfg.population {
        let mut ec = EnumerationConfig::new(geom.n_axes(), geom.filter[0], cfg.random_rank_indices, 2);
        ec.filter = geom.filter.clone();
        let mut pool = enumerate_graphs(&ec)?;
        pool.shuffle(&mut generation_rng(cfg.seed, 0));
        for g in pool {
            if out.len() == cfg.population {
                break;
            }
            let Ok(g) = g.with_geometry(geom) else { continue };
            let genome = prepare(g);
            if seen.insert(genome.key()) {
                out.push(genome);
            }
        }
    }
    Ok(out)
}

fn eval_seed(seed: u64, hash: &str) -> u64 {
    seed ^ u64::from_str_radix(&hash[..16], 16).unwrap_or(0)
}

fn evaluate_all(
    genomes: Vec<Genome>,
    evaluator: &dyn Evaluator,
    seed: u64,
    generation: usize,
) -> Vec<Individual> {
    genomes
        .into_par_iter()
        .map(|genome| {
            let hash = genome.hash();
            let flops = complexity(&genome.graph).map(|c| c.1).unwrap_or(0);
            let (objectives, failure) = match evaluator.evaluate(&genome, eval_seed(seed, &hash)) {
                Ok(o) if o.accuracy.is_finite() => (o, None),
                Ok(o) => (Objectives::new(0.0, o.params), Some("non-finite accuracy".to_string())),
                Err(e) => (Objectives::new(0.0, evaluator.params(&genome)), Some(e.to_string())),
            };
            Individual {
                genome,
                hash,
                objectives,
                flops,
                generation,
                failure,
            }
        })
        .collect()
}

/// Adds the not-yet-seen genomes (within budget) to the archive; returns
/// the archive index of every input genome that is now present.
fn admit(
    state: &mut SearchState,
    index: &mut HashMap<String, usize>,
    genomes: Vec<Genome>,
    evaluator: &dyn Evaluator,
    generation: usize,
) -> Vec<usize> {
    let mut fresh: Vec<Genome> = Vec::new();
    let mut fresh_keys = std::collections::HashSet::new();
    let keys: Vec<String> = genomes.iter().map(|g| g.key()).collect();
    let left = state.budget_left();
    for (g, k) in genomes.iter().zip(&keys) {
        if !index.contains_key(k) && fresh.len() < left && fresh_keys.insert(k.clone()) {
            fresh.push(g.clone());
        }
    }
    for ind in evaluate_all(fresh, evaluator, state.config.seed, generation) {
        index.insert(ind.genome.key(), state.archive.len());
        state.archive.push(ind);
    }
    keys.iter().filter_map(|k| index.get(k).copied()).collect()
}

/// Writes `archive.csv`, `front.jsonl`, `graphs/<hash>.json` and `state.json`.
pub fn write_outputs(state: &SearchState, dir: &Path, accuracy_note: &str) -> Result<()> {
    fs::create_dir_all(dir.join("graphs"))?;
    let objs = state.objectives();
    let ranks = front_ranks(&objs);
    let mut header = String::new();
    for line in &state.config.header {
        header.push_str(&format!("# {line}\n"));
    }
    header.push_str(&format!("# accuracy: {accuracy_note}\n"));
    let mut csv = header.clone();
    csv.push_str("canonical_hash,params,flops,accuracy,generation,front_rank\n");
    for (ind, r) in state.archive.iter().zip(&ranks) {
        csv.push_str(&format!(
            "{},{},{},{:.6},{},{}\n",
            ind.hash, ind.objectives.params, ind.flops, ind.objectives.accuracy, ind.generation, r
        ));
        let path = dir.join("graphs").join(format!("{}.json", ind.hash));
        if !path.exists() {
            fs::write(path, ind.genome.graph.to_json())?;
        }
    }
    fs::write(dir.join("archive.csv"), csv)?;
    let mut jsonl = fs::File::create(dir.join("front.jsonl"))?;
    jsonl.write_all(header.as_bytes())?;
    for k in state.front() {
        let ind = &state.archive[k];
        let line = serde_json::json!({
            "canonical_hash": ind.hash,
            "params": ind.objectives.params,
            "flops": ind.flops,
            "accuracy": ind.objectives.accuracy,
            "generation": ind.generation,
            "graph": ind.genome.graph,
        });
        writeln!(jsonl, "{line}")?;
    }
    let tmp = dir.join("state.json.tmp");
    fs::write(&tmp, serde_json::to_string(state)?)?;
    fs::rename(tmp, dir.join("state.json"))?;
    Ok(())
}

pub fn load_state(dir: &Path) -> Result<Option<SearchState>> {
    let path = dir.join("state.json");
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(serde_json::from_str(&fs::read_to_string(path)?)?))
}

/// Mutation-only NSGA-II. With `out`, results are written after every
/// generation and an existing `state.json` there is resumed; resuming
/// gives the same archive as an uninterrupted run.
pub fn search(cfg: &SearchConfig, evaluator: &dyn Evaluator, out: Option<&Path>) -> Result<SearchState> {
    cfg.check()?;
    let note = evaluator.describe();
    let resumed = match out {
        Some(dir) => load_state(dir)?,
        None => None,
    };
    let mut state = match resumed {
        Some(s) => {
            let same_run = s.config.seed == cfg.seed
                && s.config.population == cfg.population
                && s.config.reference == cfg.reference;
            if !same_run {
                return Err(EinconvError::Config("checkpoint belongs to a different search".into()));
            }
            SearchState { config: cfg.clone(), ..s }
        }
        None => {
            let mut s = SearchState {
                config: cfg.clone(),
                generation: 0,
                archive: Vec::new(),
                population: Vec::new(),
            };
            let mut index = HashMap::new();
            let init = initial_population(cfg)?;
            s.population = admit(&mut s, &mut index, init, evaluator, 0);
            if let Some(dir) = out {
                write_outputs(&s, dir, &note)?;
            }
            s
        }
    };
    let mut index: HashMap<String, usize> =
        state.archive.iter().enumerate().map(|(k, i)| (i.genome.key(), k)).collect();
    while state.generation < cfg.generations && state.budget_left() > 0 && !state.population.is_empty() {
        let gen = state.generation + 1;
        let mut rng = generation_rng(cfg.seed, gen);
        let pop_objs: Vec<Objectives> = state.population.iter().map(|&k| state.archive[k].objectives).collect();
        let (rank, crowd) = rank_and_crowding(&pop_objs);
        let mut children = Vec::with_capacity(cfg.population);
        for _ in 0..cfg.population {
            let a = rng.gen_range(0..pop_objs.len());
            let b = rng.gen_range(0..pop_objs.len());
            let winner = if crowded_better(&rank, &crowd, b, a) { b } else { a };
            let parent = &state.archive[state.population[winner]].genome;
            children.push(mutate(parent, &mut rng).0);
        }
        let child_ids = admit(&mut state, &mut index, children, evaluator, gen);
        let mut combined = state.population.clone();
        combined.extend(child_ids);
        let objs: Vec<Objectives> = combined.iter().map(|&k| state.archive[k].objectives).collect();
        let keep = environmental_selection(&objs, cfg.population);
        state.population = keep.into_iter().map(|k| combined[k]).collect();
        state.generation = gen;
        if let Some(dir) = out {
            write_outputs(&state, dir, &note)?;
        }
    }
    Ok(state)
}
