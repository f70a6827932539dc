//! Network loss for sawbridge batches without materializing the signals.
//!
//! Every grid realization is `x_j = t - 1(i >= j)`, so products with the
//! `n`-wide first analysis layer and last synthesis layer reduce to suffix
//! sums over weight columns, and the synthesis error expands over the Gram
//! matrix `W^T W`. The result equals [`surrogate_loss_and_gradient`] on
//! `realization_rows(indices, n)` up to rounding.

use ndarray::{Array1, Array2, Axis};

use crate::error::{domain, Result};
use crate::process::grid_point;
use crate::transform::{realization_rows, Transform, TransformCode};

use super::loss::{relax, relaxed_rate, surrogate_loss_and_gradient, BatchInput, Gradients, Relaxation, SurrogateTerms};

/// Rows `j = 0..=n` hold `sum_{i >= j} rows_of(m)[i]` for an `n x k` matrix.
fn suffix_rows(m: &Array2<f64>) -> Array2<f64> {
    let (n, k) = m.dim();
    let mut out = Array2::zeros((n + 1, k));
    for i in (0..n).rev() {
        let (mut head, tail) = out.view_mut().split_at(Axis(0), i + 1);
        let mut row = head.row_mut(i);
        row.assign(&tail.row(0));
        row += &m.row(i);
    }
    out
}

/// `sum_b x_b v_b^T` as an `n x k` matrix, with `x_b = t - 1(i >= j_b)`.
fn signal_outer(indices: &[usize], v: &Array2<f64>, t: &[f64]) -> Array2<f64> {
    let n = t.len();
    let k = v.ncols();
    let total = v.sum_axis(Axis(0));
    let mut buckets = Array2::<f64>::zeros((n + 1, k));
    for (b, &j) in indices.iter().enumerate() {
        let mut row = buckets.row_mut(j);
        row += &v.row(b);
    }
    let mut out = Array2::zeros((n, k));
    let mut running = Array1::<f64>::zeros(k);
    for i in 0..n {
        running += &buckets.row(i);
        let mut row = out.row_mut(i);
        row.assign(&(&total * t[i] - &running));
    }
    out
}

fn grid_vec(n: usize) -> Vec<f64> {
    (0..n).map(|i| grid_point(i, n)).collect()
}

/// Same value and gradient as the generic loss on the realizations with jump
/// indices `indices`.
pub fn sawbridge_loss_and_gradient(
    code: &TransformCode,
    indices: &[usize],
    lambda: f64,
    relaxation: Relaxation<'_>,
) -> Result<(SurrogateTerms, Gradients)> {
    let (analysis, synthesis) = match &code.transform {
        Transform::Mlp { analysis, synthesis } => (analysis, synthesis),
        Transform::Fixed(_) => {
            let x = realization_rows(indices, code.n());
            return surrogate_loss_and_gradient(code, BatchInput::Signals(&x), lambda, relaxation);
        }
    };
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return domain(format!("lambda must be finite and nonnegative, got {lambda}"));
    }
    if indices.is_empty() {
        return domain("empty batch");
    }
    let n = code.n();
    if indices.iter().any(|&j| j > n) {
        return domain("jump index beyond the grid");
    }
    let t = grid_vec(n);
    let rows = indices.len();

    // first analysis layer
    let w0 = &analysis.layers[0].weight;
    let base0 = w0.dot(&Array1::from(t.clone())) + &analysis.layers[0].bias;
    let suffix0 = suffix_rows(&w0.t().as_standard_layout().to_owned());
    let mut pre0 = Array2::zeros((rows, w0.nrows()));
    for (b, &j) in indices.iter().enumerate() {
        pre0.row_mut(b).assign(&(&base0 - &suffix0.row(j)));
    }
    let la = analysis.layers.len();
    let (y, a_tape) = if la > 1 {
        let (y, tape) = analysis.forward_range(1, la, analysis.activate(&pre0));
        (y, Some(tape))
    } else {
        (pre0.clone(), None)
    };

    let v = relax(&y, relaxation)?;
    let (rate, d_v_rate, d_logits, clamped) = relaxed_rate(&code.entropy, &v);

    // synthesis up to its last layer
    let ls = synthesis.layers.len();
    let (h, s_tape) = if ls > 1 {
        let (h, tape) = synthesis.forward_range(0, ls - 1, v.clone());
        (h, Some(tape))
    } else {
        (v.clone(), None)
    };
    let last = &synthesis.layers[ls - 1];
    let (w, c) = (&last.weight, &last.bias);
    let gram = w.t().dot(w);
    let t_arr = Array1::from(t.clone());
    let wt = w.t().dot(&t_arr);
    let wc = w.t().dot(c);
    let suffix_w = suffix_rows(w);
    let mut c_suffix = vec![0.0; n + 1];
    let mut t_suffix = vec![0.0; n + 1];
    for i in (0..n).rev() {
        c_suffix[i] = c_suffix[i + 1] + c[i];
        t_suffix[i] = t_suffix[i + 1] + t[i];
    }
    let ct = c.dot(&t_arr);
    let cc = c.dot(c);
    let tt: f64 = t.iter().map(|v| v * v).sum();
    let hg = h.dot(&gram);
    let mut wx = Array2::zeros(h.raw_dim());
    let mut err_sum = 0.0;
    for (b, &j) in indices.iter().enumerate() {
        let wxb = &wt - &suffix_w.row(j);
        let hb = h.row(b);
        let energy = tt - 2.0 * t_suffix[j] + (n - j) as f64;
        let cx = ct - c_suffix[j];
        err_sum += hb.dot(&hg.row(b)) + 2.0 * hb.dot(&wc) + cc - 2.0 * wxb.dot(&hb) - 2.0 * cx + energy;
        wx.row_mut(b).assign(&wxb);
    }
    let distortion = err_sum / (rows * n) as f64;
    let scale = 2.0 * lambda / (rows * n) as f64;
    let d_h = (&hg + &wc - &wx) * scale;
    let h_sum = h.sum_axis(Axis(0));
    let hth = h.t().dot(&h);
    let mut d_w = w.dot(&hth) - signal_outer(indices, &h, &t);
    for i in 0..n {
        let mut row = d_w.row_mut(i);
        row.scaled_add(c[i], &h_sum);
    }
    d_w *= scale;
    let mut counts_le = vec![0.0; n + 1];
    for &j in indices {
        counts_le[j] += 1.0;
    }
    let mut running = 0.0;
    let x_sum: Array1<f64> = (0..n)
        .map(|i| {
            running += counts_le[i];
            rows as f64 * t[i] - running
        })
        .collect();
    let d_c = (w.dot(&h_sum) + &(c * rows as f64) - &x_sum) * scale;

    let mut s_grads = synthesis.zero_grads();
    let d_v = match &s_tape {
        Some(tape) => synthesis.backward_range(0, tape, d_h, &mut s_grads),
        None => d_h,
    } + d_v_rate;
    s_grads.layers[ls - 1].weight = d_w;
    s_grads.layers[ls - 1].bias = d_c;

    let mut a_grads = analysis.zero_grads();
    let delta0 = match &a_tape {
        Some(tape) => {
            let mut d = analysis.backward_range(1, tape, d_v, &mut a_grads);
            analysis.leaky_backward(&mut d, &pre0);
            d
        }
        None => d_v,
    };
    a_grads.layers[0].weight = signal_outer(indices, &delta0, &t).reversed_axes().as_standard_layout().to_owned();
    a_grads.layers[0].bias = delta0.sum_axis(Axis(0));

    let mut out = Vec::new();
    for g in a_grads.layers.into_iter().chain(s_grads.layers) {
        out.push(g.weight.as_standard_layout().iter().copied().collect());
        out.push(g.bias.to_vec());
    }
    out.push(d_logits.into_raw_vec_and_offset().0);
    let terms = SurrogateTerms {
        loss: rate + lambda * distortion,
        rate_bits: rate,
        distortion,
        clamped,
    };
    Ok((terms, Gradients(out)))
}

