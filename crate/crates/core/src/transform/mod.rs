//! Transform codes: analysis, unit-step scalar quantization, a factorized
//! entropy model and synthesis.

mod checkpoint;
mod code;
mod entropy_model;
mod fixed;

pub use checkpoint::{checkpoint_bytes, code_from_bytes, load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use code::{
    code_evaluate, evaluate_weighted, fit_entropy_model, jump_index_counts, realization_rows, CodeEvaluation,
    LinearKind, LinearTransformPair, ScaledOrthonormal, Transform, TransformCode, ACTIVE_ENTROPY_BITS,
};
pub use entropy_model::{quantize, FactorizedEntropyModel};
pub use fixed::{daub4_forward, fixed_transform, FixedKind};
