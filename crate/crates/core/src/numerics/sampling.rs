use rand::Rng;

use super::tape::{entropy_of_logits, log_softmax_slice};
use super::NumericsError;

pub fn softmax(logits: &[f32]) -> Vec<f32> {
    log_softmax_slice(logits).into_iter().map(f32::exp).collect()
}

/// Entropy in nats of `softmax(logits)`. For a differentiable version record
/// [`super::OpKind::Entropy`] on a tape.
pub fn entropy(logits: &[f32]) -> f32 {
    entropy_of_logits(logits)
}

/// Draws an index from `softmax(logits)` by inverse-CDF sampling with a
/// single uniform draw. Returns the index and its log-probability.
pub fn sample_categorical<R: Rng + ?Sized>(
    logits: &[f32],
    rng: &mut R,
) -> Result<(usize, f32), NumericsError> {
    if logits.is_empty() {
        return Err(NumericsError::EmptyLogits);
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(NumericsError::NonFinite {
            context: "sample_categorical logits".into(),
        });
    }
    let logp = log_softmax_slice(logits);
    let u: f64 = rng.random();
    let mut cumulative = 0.0f64;
    let mut chosen = logp.len() - 1;
    for (i, &l) in logp.iter().enumerate() {
        cumulative += f64::from(l).exp();
        if u < cumulative {
            chosen = i;
            break;
        }
    }
    // Guard against landing on a zero-probability tail entry through rounding.
    while logp[chosen].exp() == 0.0 && chosen > 0 {
        chosen -= 1;
    }
    Ok((chosen, logp[chosen]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let logits = [0.5f32; 20];
        let mut counts = [0usize; 20];
        let draws = 100_000;
        for _ in 0..draws {
            let (i, lp) = sample_categorical(&logits, &mut rng).unwrap();
            assert!((lp + 20f32.ln()).abs() < 1e-6);
            counts[i] += 1;
        }
        for c in counts {
            assert!((c as f64 / draws as f64 - 0.05).abs() < 0.01);
        }
    }

    #[test]
    fn saturated_logits() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let (i, lp) = sample_categorical(&[1000.0, 0.0], &mut rng).unwrap();
            assert_eq!(i, 0);
            assert!(lp.abs() < 1e-6);
        }
    }

    #[test]
    fn empty_logits_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            sample_categorical(&[], &mut rng),
            Err(NumericsError::EmptyLogits)
        );
    }

    #[test]
    fn deterministic_given_rng_state() {
        let logits: Vec<f32> = (0..20).map(|i| (i as f32 * 0.37).sin()).collect();
        let a: Vec<_> = {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            (0..50).map(|_| sample_categorical(&logits, &mut rng).unwrap()).collect()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let b: Vec<_> = (0..50).map(|_| sample_categorical(&logits, &mut rng).unwrap()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn entropy_values() {
        assert!((entropy(&[0.0; 20]) - 20f32.ln()).abs() < 1e-5);
        assert!((20f32.ln() - 2.9957).abs() < 1e-4);
        assert!(entropy(&[1000.0, 0.0, 0.0]) < 1e-6);
        // p = (0.6, 0.2, 0.2): -(0.6 ln 0.6 + 0.4 ln 0.2) = 0.950271
        assert!((entropy(&[3f32.ln(), 0.0, 0.0]) - 0.950_271).abs() < 1e-5);
    }
}
