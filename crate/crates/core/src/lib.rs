//! Tensor network core: dense and U(1) block-sparse tensors, linear algebra
//! kernels, and a graph of connected tensor nodes.

pub mod cache;
pub mod dense;
pub mod graph;
pub mod error;
pub mod linalg;
pub mod symmetric;
pub mod system;
pub mod tensor;

pub use cache::ReshapeCache;
pub use dense::{DenseTensor, ElementKind, FusedLeg, C64};
pub use error::{Result, TntError};
pub use graph::{FunctionalDef, FunctionalForm, Graph, ListPlan, Network, NodeId, SvdNodes};
pub use symmetric::{BlockTensor, ChargedIndex, Direction, Qn};
pub use system::{BasisOperator, SymmetryMode, SystemConfig};
pub use tensor::{SvdParts, Tensor};
