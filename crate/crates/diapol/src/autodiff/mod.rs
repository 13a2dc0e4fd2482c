//! Dense-tensor reverse-mode differentiation, optimizers, and seeded
//! randomness. Just enough machinery for small MLPs, a GRU cell,
//! sigmoid/softmax losses and Gumbel-Softmax sampling, all in f64.

pub mod gradcheck;
mod graph;
mod optim;
mod params;
mod rng;
mod tensor;

pub use graph::{sigmoid, softmax_rows, Gradients, Graph, Var};
pub use optim::Optimizer;
pub use params::{ParamId, ParamStore};
pub use rng::{gumbel_from_uniform, gumbel_noise, gumbel_sample, SeedRng};
pub use tensor::Tensor;

/// Xavier/Glorot uniform init for a rows x cols weight matrix.
pub fn xavier_uniform(rng: &mut SeedRng, rows: usize, cols: usize) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.uniform(-limit, limit)).collect();
    Tensor::new(vec![rows, cols], data).expect("init values are finite")
}
