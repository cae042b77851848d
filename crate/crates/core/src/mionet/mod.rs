//! MIONet operator model: a coefficient branch, a linear forcing branch and a
//! trunk over query coordinates, merged by an elementwise product and a sum.

mod dataset;
mod mlp;
mod model;
mod train;

pub use dataset::{boundary_point, generate_dataset, solve_record, Dataset, DatasetConfig, FailurePolicy};
pub use mlp::{Activation, Mlp, MlpCache};
pub use model::{load_weights, save_weights, sensor_lattice, Architecture, MionetModel};
pub use train::{dataset_loss, grad_check, loss_and_grad, relative_l2_error, train, TrainOptions, TrainReport};
