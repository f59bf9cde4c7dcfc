//! CTC loss over a blank-interleaved lattice, and greedy decoding.

use crate::error::Result;
use crate::io::{LabelSequence, VocabKind};
use crate::matrix::Matrix;
use crate::scalar::{log_add, Real};

/// Class id of the CTC blank. Label symbol `s` is model class `s + 1`.
pub const BLANK: usize = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct CtcOutput<T> {
    /// −log P(target | log_probs); +∞ when infeasible.
    pub loss: T,
    /// ∂loss/∂log_probs; all zeros when infeasible.
    pub grad: Matrix<T>,
    pub feasible: bool,
}

/// Minimum frame count for a target: one frame per label plus a blank
/// between each pair of equal neighbours.
pub fn min_frames(target: &[usize]) -> usize {
    target.len() + target.windows(2).filter(|w| w[0] == w[1]).count()
}

/// CTC negative log-likelihood of `target` (model class ids, no blanks)
/// under per-frame log-probabilities `[T × S]`, with its analytic gradient.
/// Forward and backward recursions run in f64 log space.
pub fn ctc_loss<T: Real>(log_probs: &Matrix<T>, target: &[usize]) -> CtcOutput<T> {
    let (t_len, classes) = log_probs.shape();
    let mut grad = Matrix::zeros(t_len, classes);
    if t_len == 0 || t_len < min_frames(target) {
        return CtcOutput {
            loss: T::infinity(),
            grad,
            feasible: false,
        };
    }
    let mut ext = Vec::with_capacity(2 * target.len() + 1);
    ext.push(BLANK);
    for &c in target {
        ext.push(c);
        ext.push(BLANK);
    }
    let l = ext.len();
    let lp = |t: usize, k: usize| log_probs[(t, k)].as_f64();
    let ninf = f64::NEG_INFINITY;
    let skip_ok = |s: usize| s >= 2 && ext[s] != BLANK && ext[s] != ext[s - 2];

    let mut alpha = vec![ninf; t_len * l];
    alpha[0] = lp(0, ext[0]);
    if l > 1 {
        alpha[1] = lp(0, ext[1]);
    }
    for t in 1..t_len {
        let (prev, cur) = alpha.split_at_mut(t * l);
        let prev = &prev[(t - 1) * l..];
        for s in 0..l {
            let mut a = prev[s];
            if s >= 1 {
                a = log_add(a, prev[s - 1]);
            }
            if skip_ok(s) {
                a = log_add(a, prev[s - 2]);
            }
            cur[s] = a + lp(t, ext[s]);
        }
    }

    // beta[t][s]: paths from (t, s) to the end, excluding frame t's emission
    let mut beta = vec![ninf; t_len * l];
    let last = (t_len - 1) * l;
    beta[last + l - 1] = 0.0;
    if l > 1 {
        beta[last + l - 2] = 0.0;
    }
    for t in (0..t_len - 1).rev() {
        for s in 0..l {
            let next = |s2: usize| beta[(t + 1) * l + s2] + lp(t + 1, ext[s2]);
            let mut b = next(s);
            if s + 1 < l {
                b = log_add(b, next(s + 1));
            }
            if s + 2 < l && skip_ok(s + 2) {
                b = log_add(b, next(s + 2));
            }
            beta[t * l + s] = b;
        }
    }

    let end = alpha[last + l - 1];
    let log_p = if l > 1 { log_add(end, alpha[last + l - 2]) } else { end };
    if !log_p.is_finite() {
        return CtcOutput {
            loss: T::infinity(),
            grad,
            feasible: false,
        };
    }

    let mut occ = vec![ninf; classes];
    for t in 0..t_len {
        occ.iter_mut().for_each(|v| *v = ninf);
        for s in 0..l {
            let k = ext[s];
            occ[k] = log_add(occ[k], alpha[t * l + s] + beta[t * l + s]);
        }
        for (k, &o) in occ.iter().enumerate() {
            if o > ninf {
                grad[(t, k)] = T::of(-(o - log_p).exp());
            }
        }
    }
    CtcOutput {
        loss: T::of(-log_p),
        grad,
        feasible: true,
    }
}

/// Model class ids for a label sequence (symbol + 1).
pub fn target_classes(labels: &LabelSequence) -> Vec<usize> {
    labels.symbols().iter().map(|&s| s as usize + 1).collect()
}

/// Per-frame argmax (ties to the lowest class), with repeats collapsed and
/// blanks removed.
pub fn greedy_path<T: Real>(log_probs: &Matrix<T>) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for row in log_probs.iter_rows() {
        let mut best = 0;
        for (k, v) in row.iter().enumerate() {
            if *v > row[best] {
                best = k;
            }
        }
        if prev != Some(best) && best != BLANK {
            out.push(best);
        }
        prev = Some(best);
    }
    out
}

pub fn greedy_decode<T: Real>(log_probs: &Matrix<T>, kind: VocabKind) -> Result<LabelSequence> {
    let symbols = greedy_path(log_probs).into_iter().map(|c| (c - 1) as u32).collect();
    LabelSequence::with_size(kind, log_probs.cols() - 1, symbols)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probs(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_fn(rows.len(), rows[0].len(), |t, k| rows[t][k].ln())
    }

    #[test]
    fn two_frame_example() {
        let lp = probs(&[&[0.5, 0.5], &[0.5, 0.5]]);
        let out = ctc_loss(&lp, &[1]);
        assert!(out.feasible);
        assert!((out.loss - -(0.75f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn certain_single_frame() {
        let lp = probs(&[&[0.0, 1.0]]);
        assert_eq!(ctc_loss(&lp, &[1]).loss, 0.0);
    }

    #[test]
    fn repeat_needs_a_blank() {
        let lp = probs(&[&[0.5, 0.5], &[0.5, 0.5]]);
        let out = ctc_loss(&lp, &[1, 1]);
        assert!(!out.feasible && out.loss.is_infinite());
        assert!(out.grad.as_slice().iter().all(|&g| g == 0.0));
        assert_eq!(min_frames(&[1, 1, 2]), 4);
    }

    #[test]
    fn empty_target_is_all_blank() {
        let lp = probs(&[&[0.25, 0.75], &[0.5, 0.5]]);
        let out = ctc_loss(&lp, &[]);
        assert!((out.loss + (0.125f64).ln()).abs() < 1e-12);
    }

    fn path(ids: &[usize], classes: usize) -> Matrix<f64> {
        Matrix::from_fn(ids.len(), classes, |t, k| if k == ids[t] { 0.0 } else { -5.0 })
    }

    #[test]
    fn greedy_collapse_rules() {
        assert_eq!(greedy_path(&path(&[0, 1, 1, 0, 2], 3)), vec![1, 2]);
        assert!(greedy_path(&path(&[0, 0, 0], 3)).is_empty());
        assert_eq!(greedy_path(&path(&[1, 0, 1], 3)), vec![1, 1]);
        let seq = greedy_decode(&path(&[0, 1, 1, 0, 2], 3), VocabKind::Units).unwrap();
        assert_eq!(seq.symbols(), &[0, 1]);
        // ties go to the lowest class
        assert!(greedy_path(&Matrix::<f64>::zeros(4, 3)).is_empty());
    }
}
