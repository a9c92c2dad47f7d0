//! Dense named tensors and a generalized einsum engine.

mod contract;
mod dense;
mod expr;
mod plan;

pub use contract::{contract, dims_of, einsum, grad_contract, grad_contract_selected, pairwise};
pub use dense::{labels, DenseTensor, IndexLabel};
pub use expr::ContractionExpr;
pub use plan::{
    estimate_flops, plan_greedy, plan_optimal, ContractionPlan, DimMap, PlanStep, Step,
    OPTIMAL_MAX_OPERANDS,
};

