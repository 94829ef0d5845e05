mod common;

use common::{max_gradient_error, random_problem, randomize_biases, FD_STEP};
use dua_core::model::Objective;
use dua_core::numerics::{gaussian_draw, mlp_backward, mlp_forward, Matrix, MlpParams, Rng};

#[test]
fn objective_gradients_match_central_differences() {
    for seed in 0..24 {
        let (data, nets, latent) = random_problem(seed);
        for objective in [Objective::Dua, Objective::Rnets] {
            let err = max_gradient_error(&data, &nets, &latent, objective);
            assert!(
                err < 1e-4,
                "seed {seed}, {objective}: relative error {err:e}"
            );
        }
    }
}

#[test]
fn mlp_backward_matches_central_differences() {
    // Loss = Σ out ⊙ G for a fixed G, so dL/dout = G.
    for seed in 0..20 {
        let mut rng = Rng::new(100 + seed);
        let widths = [
            1 + rng.below(4),
            1 + rng.below(6),
            1 + rng.below(6),
            1 + rng.below(4),
        ];
        let n = 1 + rng.below(6);
        let mut p = MlpParams::gaussian(widths, &mut rng);
        randomize_biases(&mut p, &mut rng);
        let h = gaussian_draw(&mut rng, n, widths[0]);
        let g = gaussian_draw(&mut rng, n, widths[3]);
        let loss = |p: &MlpParams, h: &Matrix| -> f64 {
            let (out, _) = mlp_forward(p, h).unwrap();
            out.data().iter().zip(g.data()).map(|(a, b)| a * b).sum()
        };
        let (out, cache) = mlp_forward(&p, &h).unwrap();
        assert_eq!(out.shape(), (n, widths[3]));
        let (pg, hg) = mlp_backward(&p, &cache, &g).unwrap();
        let check = |a: f64, num: f64| {
            let scale = a.abs().max(num.abs()).max(1e-6);
            assert!((a - num).abs() / scale < 1e-4, "seed {seed}: {a} vs {num}");
        };
        for t in 0..6 {
            for k in 0..p.tensors()[t].len() {
                let mut plus = p.clone();
                plus.tensors_mut()[t][k] += FD_STEP;
                let mut minus = p.clone();
                minus.tensors_mut()[t][k] -= FD_STEP;
                check(
                    pg.tensors()[t][k],
                    (loss(&plus, &h) - loss(&minus, &h)) / (2.0 * FD_STEP),
                );
            }
        }
        for k in 0..h.data().len() {
            let mut plus = h.clone();
            plus.data_mut()[k] += FD_STEP;
            let mut minus = h.clone();
            minus.data_mut()[k] -= FD_STEP;
            check(
                hg.data()[k],
                (loss(&p, &plus) - loss(&p, &minus)) / (2.0 * FD_STEP),
            );
        }
    }
}
