use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("grid node {node:?} of a particle stencil lies outside the allocated blocks")]
    Allocation { node: [i32; 3] },

    #[error("sort plan from step {plan} used during step {current}")]
    StalePlan { plan: u64, current: u64 },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("non-finite state: {0}")]
    NonFinite(String),

    #[error("scene configuration is invalid:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error("failed to parse scene: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
