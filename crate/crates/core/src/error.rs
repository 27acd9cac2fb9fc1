use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("row not stochastic: P(.|s={state}, a={action}) sums to {sum}")]
    RowNotStochastic { state: usize, action: usize, sum: f64 },

    #[error("negative transition probability {value} at (s={state}, a={action}, s'={next})")]
    NegativeProbability {
        state: usize,
        action: usize,
        next: usize,
        value: f64,
    },

    #[error("reward out of [0,1] at (s={state}, a={action}): {value}")]
    RewardOutOfRange { state: usize, action: usize, value: f64 },

    #[error("terminal state {state} is not absorbing under action {action}")]
    TerminalNotAbsorbing { state: usize, action: usize },

    #[error("terminal state {state} has nonzero reward {value} under action {action}")]
    TerminalReward { state: usize, action: usize, value: f64 },

    #[error("distribution not stochastic: {context} sums to {sum}")]
    NotADistribution { context: String, sum: f64 },

    #[error("negative probability {value} in {context} at index {index}")]
    NegativeEntry {
        context: String,
        index: usize,
        value: f64,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("state index {index} out of range for {num_states} states")]
    StateOutOfRange { index: usize, num_states: usize },

    #[error("discount factor {0} outside [0, 1)")]
    InvalidDiscount(f64),

    #[error("singular linear system ({0})")]
    SingularSystem(&'static str),

    #[error("value iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("optimizer failed at exploration iteration {iteration}: {source}")]
    Optimizer {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("reset history level {level} exceeds recorded depth {depth}")]
    ResetDepth { level: usize, depth: usize },

    #[error("bound verification requires an exact-mode exploration trace")]
    TraceNotExact,

    #[error("invalid schedule: {0}")]
    Schedule(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numerical overflow in softmax at state {state} (learning rate too large?)")]
    SoftmaxOverflow { state: usize },

    #[error("malformed MDP document: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
