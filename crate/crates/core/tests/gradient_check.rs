//! Finite-difference checks of the regressor's hand-written backward pass,
//! against an independent reference forward pass.

mod common;

use common::{naive_scores, rel_err, Instance};
use promptevo::oracle::{regressor_backward, regressor_forward_batch, Input, Mode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-4;
const TOL: f64 = 1e-3;

fn inputs(inst: &Instance) -> Vec<Input<'_>> {
    inst.images
        .iter()
        .zip(&inst.masks)
        .map(|(image, mask)| Input { image, mask })
        .collect()
}

fn check_all_params(seed: u64, mode: Mode) {
    let inst = Instance::random(seed, 8, 3, mode);
    let (_, cache) = regressor_forward_batch(&inst.params, &inputs(&inst), mode).unwrap();
    let back = regressor_backward(&inst.params, &cache, &inst.upstream).unwrap();
    let mut checked = 0;
    for (t, grads) in back.params.tensors().iter().enumerate() {
        for (i, &g) in grads.iter().enumerate() {
            let fd = inst.fd_param(t, i, H);
            assert!(rel_err(g, fd) < TOL, "{mode:?} tensor {t} index {i}: analytic {g} vs fd {fd}");
            checked += 1;
        }
    }
    assert_eq!(checked, 8713);
}

#[test]
fn every_parameter_gradient_in_training_mode() {
    check_all_params(1, Mode::Train);
}

#[test]
fn every_parameter_gradient_in_eval_mode() {
    check_all_params(2, Mode::Eval);
}

#[test]
fn mask_input_gradient() {
    for (seed, mode) in [(3, Mode::Eval), (4, Mode::Train), (5, Mode::Eval), (6, Mode::Train)] {
        let inst = Instance::random(seed, 16, 2, mode);
        let (_, cache) = regressor_forward_batch(&inst.params, &inputs(&inst), mode).unwrap();
        let back = regressor_backward(&inst.params, &cache, &inst.upstream).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        for _ in 0..20 {
            let n = rng.random_range(0..2);
            let (c, r) = (rng.random_range(0..16), rng.random_range(0..16));
            let fd = inst.fd_mask(n, c, r, H);
            let g = back.mask_grads[n].get(c, r);
            assert!(rel_err(g, fd) < TOL, "{mode:?} ({c},{r}) batch {n}: {g} vs {fd}");
        }
    }
}

#[test]
fn forward_matches_reference_implementation() {
    for seed in 0..20u64 {
        let mode = if seed % 2 == 0 { Mode::Eval } else { Mode::Train };
        let n = [8, 11, 16, 13][seed as usize % 4];
        let inst = Instance::random(seed, n, 1 + seed as usize % 4, mode);
        let (got, _) = regressor_forward_batch(&inst.params, &inputs(&inst), mode).unwrap();
        let (want, _) = naive_scores(&inst.params, &inst.images, &inst.masks, mode);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-6, "seed {seed}: {a} vs {b}");
        }
    }
}

#[test]
fn running_stats_update_follows_momentum() {
    let inst = Instance::random(9, 8, 4, Mode::Train);
    let mut params = inst.params.clone();
    let (_, cache) = regressor_forward_batch(&params, &inputs(&inst), Mode::Train).unwrap();
    let before = params.norms[0].clone();
    params.update_running_stats(&cache).unwrap();
    let stats = &cache.norm_stats[0];
    let n = stats.count as f64;
    for c in 0..before.scale.len() {
        let m = 0.9 * before.running_mean[c] + 0.1 * stats.mean[c];
        let v = 0.9 * before.running_var[c] + 0.1 * stats.var[c] * n / (n - 1.0);
        assert!((params.norms[0].running_mean[c] - m).abs() < 1e-15);
        assert!((params.norms[0].running_var[c] - v).abs() < 1e-15);
    }
    let (_, eval_cache) = regressor_forward_batch(&params, &inputs(&inst), Mode::Eval).unwrap();
    assert!(params.update_running_stats(&eval_cache).is_err());
}
