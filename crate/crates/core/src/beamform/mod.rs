//! Oracle MVDR beamforming per array and delay-and-sum fusion of the
//! per-array estimates.

mod das;
mod mvdr;
mod oracle;
mod tensor;

pub use das::{best_lag, default_max_lag, delay_and_sum};
pub use mvdr::{mvdr, mvdr_weights, write_weights, BeamformerWeights, MvdrOutput};
pub use oracle::{load_diagonal, oracle_quantities, transfer_function, NoiseCovarianceSet, SteeringSet, DIAGONAL_LOADING};
pub use tensor::BfOutputTensor;

#[cfg(test)]
mod tests;
