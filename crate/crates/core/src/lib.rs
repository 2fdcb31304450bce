pub mod activation;
pub mod beam;
pub mod checkpoint;
pub mod collocation;
pub mod elasticity;
pub mod error;
pub mod eval;
pub mod exec;
mod gemm;
pub mod jet;
pub mod loss;
pub mod network;
pub mod oracle;
pub mod plate;
pub mod tape;
pub mod trainer;

pub use activation::ActivationKind;
pub use error::{Error, Result};
pub use jet::{jet_activation, jet_mul, jet_seed, Jet2};
pub use network::{forward, init_network, network_jet_eval, param_count, DenseNetwork, FieldBundle, NetworkSpec};
pub use tape::{LinExpr, NodeId, ParamTape};
