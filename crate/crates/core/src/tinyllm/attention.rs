use crate::matrix::{dot, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    /// Concatenated per-head outputs, length `C`.
    pub output: Vec<f32>,
    /// Post-softmax weights per head, `heads × n_keys`, row-major.
    pub probs: Vec<f32>,
}

/// Multi-head scaled dot-product attention of one query row over `keys`.
///
/// Scores are scaled by `1/sqrt(d_head)`. Positions with `allowed[j] == false`
/// get a weight of exactly zero. Logits, the softmax normaliser and the
/// weighted value sum accumulate in `f64`.
pub fn attend(
    query: &[f32],
    keys: &Matrix,
    values: &Matrix,
    heads: usize,
    allowed: Option<&[bool]>,
) -> AttentionOutput {
    let width = query.len();
    let d = width / heads;
    let n = keys.rows();
    let scale = 1.0 / (d as f64).sqrt();
    let mut output = vec![0.0f32; width];
    let mut probs = vec![0.0f32; heads * n];
    let mut logits = vec![f64::NEG_INFINITY; n];
    for h in 0..heads {
        let cols = h * d..(h + 1) * d;
        let q = &query[cols.clone()];
        let mut max = f64::NEG_INFINITY;
        for (j, l) in logits.iter_mut().enumerate() {
            if allowed.is_some_and(|a| !a[j]) {
                *l = f64::NEG_INFINITY;
                continue;
            }
            let k = &keys.row(j)[cols.clone()];
            *l = dot(q, k) * scale;
            max = max.max(*l);
        }
        let mut denom = 0.0f64;
        for l in logits.iter_mut() {
            *l = if *l == f64::NEG_INFINITY { 0.0 } else { (*l - max).exp() };
            denom += *l;
        }
        let mut acc = vec![0.0f64; d];
        for (j, &e) in logits.iter().enumerate() {
            if e == 0.0 {
                continue;
            }
            let p = e / denom;
            probs[h * n + j] = p as f32;
            for (a, &v) in acc.iter_mut().zip(&values.row(j)[cols.clone()]) {
                *a += p * v as f64;
            }
        }
        for (o, a) in output[cols].iter_mut().zip(acc) {
            *o = a as f32;
        }
    }
    AttentionOutput { output, probs }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_key_gets_all_weight() {
        let k = Matrix::from_vec(1, 4, vec![1.0, 2.0, 3.0, 4.0]);
        let v = Matrix::from_vec(1, 4, vec![5.0, 6.0, 7.0, 8.0]);
        let out = attend(&[0.3, -0.1, 2.0, 0.0], &k, &v, 2, None);
        assert_eq!(out.probs, vec![1.0, 1.0]);
        assert_eq!(out.output, vec![5.0, 6.0, 7.0, 8.0]);
    }

    #[test]
    fn masked_positions_get_zero_weight() {
        let k = Matrix::from_vec(3, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let v = Matrix::from_vec(3, 2, vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let out = attend(&[1.0, 1.0], &k, &v, 1, Some(&[true, false, true]));
        assert_eq!(out.probs[1], 0.0);
        assert!((out.probs[0] + out.probs[2] - 1.0).abs() < 1e-7);
        // Only rows 0 and 2 with logits 1/sqrt(2) and 2/sqrt(2).
        let (a, b) = ((1.0f64 / 2f64.sqrt()).exp(), (2.0f64 / 2f64.sqrt()).exp());
        let expect = (a * 1.0 + b * 3.0) / (a + b);
        assert!((out.output[0] as f64 - expect).abs() < 1e-6);
    }

    #[test]
    fn uniform_when_query_is_zero() {
        let k = Matrix::from_vec(4, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let out = attend(&[0.0, 0.0], &k, &k, 2, None);
        assert!(out.probs.iter().all(|&p| (p - 0.25).abs() < 1e-7));
    }
}
