use crate::transform::{Transform, TransformCode};

/// Names of the trainable tensors, in the order used by [`super::Gradients`].
pub fn parameter_names(code: &TransformCode) -> Vec<String> {
    let mut names = Vec::new();
    match &code.transform {
        Transform::Fixed(_) => {
            names.push("analysis_scale".to_string());
            names.push("synthesis_scale".to_string());
        }
        Transform::Mlp { analysis, synthesis } => {
            for (side, net) in [("analysis", analysis), ("synthesis", synthesis)] {
                for i in 0..net.layers.len() {
                    names.push(format!("{side}.{i}.weight"));
                    names.push(format!("{side}.{i}.bias"));
                }
            }
        }
    }
    names.push("entropy.logits".to_string());
    names
}

/// Mutable views of the trainable tensors, in [`parameter_names`] order.
pub fn parameters_mut(code: &mut TransformCode) -> Vec<&mut [f64]> {
    let TransformCode { transform, entropy } = code;
    let mut out: Vec<&mut [f64]> = Vec::new();
    match transform {
        Transform::Fixed(f) => {
            out.push(f.analysis_scale.as_slice_mut().expect("contiguous scale"));
            out.push(f.synthesis_scale.as_slice_mut().expect("contiguous scale"));
        }
        Transform::Mlp { analysis, synthesis } => {
            for layer in analysis.layers.iter_mut().chain(synthesis.layers.iter_mut()) {
                out.push(layer.weight.as_slice_mut().expect("standard layout weight"));
                out.push(layer.bias.as_slice_mut().expect("contiguous bias"));
            }
        }
    }
    out.push(entropy.logits_mut().as_slice_mut().expect("standard layout logits"));
    out
}
