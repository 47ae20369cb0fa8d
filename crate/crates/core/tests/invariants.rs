//! Randomized property checks that cut across modules.

use dyce_core::losses::{ce_loss, dyce_loss, DyceConfig};
use dyce_core::oracle::{brute_force_dyce, random_batch};
use dyce_core::rng::Rng;
use dyce_core::tensor::{matmul, softmax};

#[test]
fn matmul_is_associative_on_random_tensors() {
    let mut rng = Rng::new(100);
    for _ in 0..50 {
        let (m, k, n, q) = (
            1 + rng.index(5),
            1 + rng.index(5),
            1 + rng.index(5),
            1 + rng.index(5),
        );
        let a = rng.normal_tensor(vec![m, k], 1.0);
        let b = rng.normal_tensor(vec![k, n], 1.0);
        let c = rng.normal_tensor(vec![n, q], 1.0);
        let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
        let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
        for (x, y) in left.data().iter().zip(right.data()) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }
}

#[test]
fn softmax_is_invariant_to_constant_shifts() {
    let mut rng = Rng::new(101);
    for _ in 0..50 {
        let rows = 1 + rng.index(4);
        let cols = 2 + rng.index(5);
        let x = rng.normal_tensor(vec![rows, cols], 3.0);
        let shift = rng.uniform(-20.0, 20.0);
        let mut shifted = x.clone();
        for v in shifted.data_mut() {
            *v += shift;
        }
        let a = softmax(&x, 1).unwrap();
        let b = softmax(&shifted, 1).unwrap();
        for (p, q) in a.data().iter().zip(b.data()) {
            assert!((p - q).abs() < 1e-12);
        }
    }
}

#[test]
fn dyce_reduces_to_ce_at_the_boundary() {
    let mut rng = Rng::new(102);
    let cfg = DyceConfig::ablation(1.0, 1.0).unwrap();
    for _ in 0..200 {
        let (s, n_c) = (1 + rng.index(8), 2 + rng.index(4));
        let batch = random_batch(&mut rng, s, n_c);
        let ce = ce_loss(&batch).unwrap();
        let dy = dyce_loss(&batch, &cfg).unwrap();
        assert!((ce.value - dy.value).abs() < 1e-12);
        for (a, b) in ce.grad_probs.data().iter().zip(dy.grad_probs.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn mined_gradients_never_fall_below_their_ce_counterparts() {
    let mut rng = Rng::new(103);
    for _ in 0..200 {
        let (s, n_c) = (2 + rng.index(7), 2 + rng.index(4));
        let batch = random_batch(&mut rng, s, n_c);
        let omega = 0.05 + 0.9 * rng.next_f64();
        let hard = 0.2 + 0.8 * rng.next_f64();
        let cfg = DyceConfig::new(omega, hard.min(1.0)).unwrap();
        let dy = dyce_loss(&batch, &cfg).unwrap();
        let ce = ce_loss(&batch).unwrap();
        for i in 0..s {
            let y = batch.label(i);
            let g_dy = dy.grad_probs.at(i, y).abs();
            if g_dy == 0.0 {
                continue; // unmined instance
            }
            assert!(
                g_dy >= ce.grad_probs.at(i, y).abs() - 1e-12,
                "instance {i}: dyce {g_dy} vs ce {}",
                ce.grad_probs.at(i, y).abs()
            );
        }
    }
}

#[test]
fn rarer_classes_get_the_larger_weight_factor() {
    // 1/f_a^{1-ω} ≥ 1/f_b^{1-ω} whenever f_a < f_b, for all ω in (0,1)
    for omega_step in 1..20 {
        let omega = omega_step as f64 / 20.0;
        for f_a in 1usize..20 {
            for f_b in (f_a + 1)..21 {
                let w_a = 1.0 / (f_a as f64).powf(1.0 - omega);
                let w_b = 1.0 / (f_b as f64).powf(1.0 - omega);
                assert!(w_a >= w_b);
            }
        }
    }
}

#[test]
fn dyce_gradients_are_sparse_exactly() {
    let mut rng = Rng::new(104);
    for _ in 0..100 {
        let (s, n_c) = (2 + rng.index(7), 2 + rng.index(4));
        let batch = random_batch(&mut rng, s, n_c);
        let cfg = DyceConfig::new(0.5, 0.5).unwrap();
        let dy = dyce_loss(&batch, &cfg).unwrap();
        let mined = dyce_core::losses::mine_hard_subset(&batch, 0.5).unwrap();
        for i in 0..s {
            for c in 0..n_c {
                let g = dy.grad_probs.at(i, c);
                let mined_target = mined.indices.contains(&i) && c == batch.label(i);
                if mined_target {
                    assert!(g != 0.0);
                } else {
                    assert_eq!(g, 0.0, "grad must be exactly zero at ({i},{c})");
                }
            }
        }
    }
}

#[test]
fn vectorized_and_scalar_dyce_agree_on_many_batches() {
    let mut rng = Rng::new(105);
    for _ in 0..150 {
        let (s, n_c) = (1 + rng.index(8), 2 + rng.index(4));
        let batch = random_batch(&mut rng, s, n_c);
        let cfg = DyceConfig::new(0.1 + 0.8 * rng.next_f64(), 0.2 + 0.8 * rng.next_f64())
            .unwrap();
        let fast = dyce_loss(&batch, &cfg).unwrap().value;
        let slow = brute_force_dyce(&batch, &cfg).unwrap();
        assert!((fast - slow).abs() < 1e-12);
    }
}
