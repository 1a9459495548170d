//! Transducer loss over monotone alignment paths.
//!
//! A path interleaves T blank moves with U label moves. A blank at grid
//! node (t, u) consumes frame t and scores `L[t][u][0]`; emitting label
//! y_{u+1} at node (t, u) scores `L[min(t, T−1)][u][y_{u+1}+1]` — once all
//! frames are consumed, trailing labels read the last frame's distribution.
//! The loss is −log of the sum over all C(T+U, U) interleavings, computed
//! with a forward pass α over the (T+1)×(U+1) node grid; gradients come
//! from the matching backward pass β and edge posteriors.

use crate::error::{Error, Result};
use crate::nncore::kernels::{logaddexp, LOG_ZERO};

/// Per-(t, u) log-distributions over {blank} ∪ vocabulary.
///
/// Row-major layout: entry (t, u, k) lives at `(t·(U+1) + u)·(V+1) + k`,
/// with the transducer blank at k = 0 and token y at k = y + 1.
#[derive(Debug, Clone)]
pub struct JointLattice {
    /// T, the frame count.
    pub frames: usize,
    /// U, the label count the lattice was built for (U+1 position rows).
    pub labels: usize,
    /// V, real vocabulary size; each slice has V+1 entries.
    pub vocab: usize,
    pub log_probs: Vec<f64>,
}

impl JointLattice {
    pub fn new(frames: usize, labels: usize, vocab: usize, log_probs: Vec<f64>) -> Self {
        assert_eq!(log_probs.len(), frames * (labels + 1) * (vocab + 1), "lattice size");
        JointLattice { frames, labels, vocab, log_probs }
    }

    pub fn uniform(frames: usize, labels: usize, vocab: usize) -> Self {
        let lp = -((vocab + 1) as f64).ln();
        JointLattice::new(frames, labels, vocab, vec![lp; frames * (labels + 1) * (vocab + 1)])
    }

    #[inline]
    pub fn idx(&self, t: usize, u: usize, k: usize) -> usize {
        (t * (self.labels + 1) + u) * (self.vocab + 1) + k
    }

    pub fn slice(&self, t: usize, u: usize) -> &[f64] {
        let base = (t * (self.labels + 1) + u) * (self.vocab + 1);
        &self.log_probs[base..base + self.vocab + 1]
    }

    pub fn slice_mut(&mut self, t: usize, u: usize) -> &mut [f64] {
        let base = (t * (self.labels + 1) + u) * (self.vocab + 1);
        &mut self.log_probs[base..base + self.vocab + 1]
    }

    /// Max |exp-sum − 1| over all slices.
    pub fn normalization_defect(&self) -> f64 {
        self.log_probs
            .chunks_exact(self.vocab + 1)
            .map(|row| (row.iter().map(|v| v.exp()).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Negative log-probability of `target` with the gradient with respect to
/// every lattice entry.
pub fn transducer_loss(lattice: &JointLattice, target: &[usize]) -> Result<(f64, Vec<f64>)> {
    let (t_len, u_len, vocab) = (lattice.frames, lattice.labels, lattice.vocab);
    if target.len() != u_len {
        return Err(Error::ShapeMismatch(format!(
            "target length {} vs lattice positions {}",
            target.len(),
            u_len
        )));
    }
    if let Some(&bad) = target.iter().find(|&&y| y >= vocab) {
        return Err(Error::IdOutOfRange { id: bad, vocab });
    }
    if t_len == 0 {
        if u_len == 0 {
            return Ok((0.0, Vec::new()));
        }
        return Err(Error::EmptyLattice);
    }

    let blank = |t: usize, u: usize| lattice.log_probs[lattice.idx(t, u, 0)];
    // Label emission at node (t, u); trailing labels clamp to the last frame.
    let emit = |t: usize, u: usize| {
        let row = t.min(t_len - 1);
        lattice.log_probs[lattice.idx(row, u, target[u] + 1)]
    };

    let cols = u_len + 1;
    let mut alpha = vec![LOG_ZERO; (t_len + 1) * cols];
    alpha[0] = 0.0;
    for t in 0..=t_len {
        for u in 0..=u_len {
            if t == 0 && u == 0 {
                continue;
            }
            let mut acc = LOG_ZERO;
            if t > 0 {
                acc = logaddexp(acc, alpha[(t - 1) * cols + u] + blank(t - 1, u));
            }
            if u > 0 {
                acc = logaddexp(acc, alpha[t * cols + u - 1] + emit(t, u - 1));
            }
            alpha[t * cols + u] = acc;
        }
    }
    let log_z = alpha[t_len * cols + u_len];
    if !log_z.is_finite() || log_z <= LOG_ZERO / 2.0 {
        return Err(Error::Diverged("transducer path sum underflowed".into()));
    }

    let mut beta = vec![LOG_ZERO; (t_len + 1) * cols];
    beta[t_len * cols + u_len] = 0.0;
    for t in (0..=t_len).rev() {
        for u in (0..=u_len).rev() {
            if t == t_len && u == u_len {
                continue;
            }
            let mut acc = LOG_ZERO;
            if t < t_len {
                acc = logaddexp(acc, blank(t, u) + beta[(t + 1) * cols + u]);
            }
            if u < u_len {
                acc = logaddexp(acc, emit(t, u) + beta[t * cols + u + 1]);
            }
            beta[t * cols + u] = acc;
        }
    }
    debug_assert!((beta[0] - log_z).abs() < 1e-6, "forward/backward mismatch");

    let mut grad = vec![0.0; lattice.log_probs.len()];
    for t in 0..t_len {
        for u in 0..=u_len {
            let post = alpha[t * cols + u] + blank(t, u) + beta[(t + 1) * cols + u] - log_z;
            if post > LOG_ZERO / 2.0 {
                grad[lattice.idx(t, u, 0)] -= post.exp();
            }
        }
    }
    for t in 0..=t_len {
        for u in 0..u_len {
            let post = alpha[t * cols + u] + emit(t, u) + beta[t * cols + u + 1] - log_z;
            if post > LOG_ZERO / 2.0 {
                grad[lattice.idx(t.min(t_len - 1), u, target[u] + 1)] -= post.exp();
            }
        }
    }
    Ok((-log_z, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::check::rel_err;
    use crate::nncore::kernels::log_softmax_row;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Independent oracle: enumerate every interleaving of T blanks and U
    /// labels and sum the path probabilities directly.
    pub(crate) fn brute_force_loss(lattice: &JointLattice, target: &[usize]) -> f64 {
        fn walk(lat: &JointLattice, target: &[usize], t: usize, u: usize, acc: f64) -> f64 {
            if t == lat.frames && u == lat.labels {
                return acc.exp();
            }
            let mut total = 0.0;
            if t < lat.frames {
                total += walk(lat, target, t + 1, u, acc + lat.slice(t, u)[0]);
            }
            if u < lat.labels {
                let row = t.min(lat.frames - 1);
                total += walk(lat, target, t, u + 1, acc + lat.slice(row, u)[target[u] + 1]);
            }
            total
        }
        -walk(lattice, target, 0, 0, 0.0).ln()
    }

    fn random_normalized_lattice(t: usize, u: usize, v: usize, rng: &mut ChaCha8Rng) -> JointLattice {
        let mut data: Vec<f64> = (0..t * (u + 1) * (v + 1)).map(|_| rng.gen_range(-2.0..2.0)).collect();
        for row in data.chunks_exact_mut(v + 1) {
            log_softmax_row(row);
        }
        JointLattice::new(t, u, v, data)
    }

    #[test]
    fn single_blank_emission_costs_ln_vocab_plus_one() {
        let lat = JointLattice::uniform(1, 0, 2);
        let (loss, grad) = transducer_loss(&lat, &[]).unwrap();
        assert!((loss - 3.0_f64.ln()).abs() < 1e-12);
        assert!((grad[0] - -1.0).abs() < 1e-12); // sole path takes the blank
    }

    #[test]
    fn two_frames_one_label_uniform_matches_three_path_enumeration() {
        let lat = JointLattice::uniform(2, 1, 2);
        let (loss, _) = transducer_loss(&lat, &[0]).unwrap();
        assert!((loss - 2.0 * 3.0_f64.ln()).abs() < 1e-12);
        assert!((brute_force_loss(&lat, &[0]) - loss).abs() < 1e-12);
    }

    #[test]
    fn certain_path_has_zero_loss() {
        // T=2, U=1: put probability 1 on the path "label, blank, blank".
        let v = 2;
        let mut lat = JointLattice::new(2, 1, v, vec![LOG_ZERO; 2 * 2 * 3]);
        lat.slice_mut(0, 0)[1] = 0.0; // emit token 0 at (0,0)
        lat.slice_mut(0, 1)[0] = 0.0; // blank
        lat.slice_mut(1, 1)[0] = 0.0; // blank
        let (loss, _) = transducer_loss(&lat, &[0]).unwrap();
        assert!(loss.abs() < 1e-9, "loss {loss}");
    }

    #[test]
    fn matches_brute_force_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        for case in 0..60 {
            let t = rng.gen_range(1..=5);
            let u = rng.gen_range(0..=3);
            let v = rng.gen_range(2..=4);
            let lat = random_normalized_lattice(t, u, v, &mut rng);
            let target: Vec<usize> = (0..u).map(|_| rng.gen_range(0..v)).collect();
            let (loss, _) = transducer_loss(&lat, &target).unwrap();
            let oracle = brute_force_loss(&lat, &target);
            assert!((loss - oracle).abs() < 1e-8, "case {case}: {loss} vs {oracle}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let lat = random_normalized_lattice(4, 3, 3, &mut rng);
        let target = vec![0, 2, 1];
        let (_, grad) = transducer_loss(&lat, &target).unwrap();
        let h = 1e-5;
        let mut max_err: f64 = 0.0;
        for i in (0..lat.log_probs.len()).step_by(3) {
            let mut up = lat.clone();
            up.log_probs[i] += h;
            let mut down = lat.clone();
            down.log_probs[i] -= h;
            let fd = (transducer_loss(&up, &target).unwrap().0
                - transducer_loss(&down, &target).unwrap().0)
                / (2.0 * h);
            max_err = max_err.max(rel_err(grad[i], fd));
        }
        assert!(max_err < 1e-4, "max rel err {max_err}");
    }

    #[test]
    fn empty_lattice_with_labels_is_an_error() {
        let lat = JointLattice::new(0, 1, 2, vec![]);
        assert_eq!(transducer_loss(&lat, &[0]).unwrap_err().code(), "empty-lattice");
    }

    #[test]
    fn out_of_range_target_is_an_error() {
        let lat = JointLattice::uniform(2, 1, 2);
        assert_eq!(transducer_loss(&lat, &[5]).unwrap_err().code(), "id-out-of-range");
    }
}
