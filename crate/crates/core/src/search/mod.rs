//! Mutation-only NSGA-II over Einconv graphs.

mod evaluator;
mod mutation;
mod nsga2;
mod run;

pub use evaluator::{Evaluator, SurrogateEvaluator, TrainerEvaluator};
pub use mutation::{mutate, mutate_with, normalize_stages, Genome, MutationOp, MAX_RESAMPLES};
pub use nsga2::{
    crowded_better, crowding_distance, environmental_selection, fast_nondominated_sort, front_ranks,
    nondominated_fronts, pareto_front, rank_and_crowding, Objectives,
};
pub use run::{initial_population, load_state, search, write_outputs, Individual, SearchConfig, SearchState};
