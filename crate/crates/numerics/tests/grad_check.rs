//! Finite-difference sweep over every differentiable op, several random
//! configurations each.

use numerics::check::{uniform_array, GradCheck};
use numerics::{lstm_step, mhsa, Array, AttnWeights, LstmWeights};

fn gc() -> GradCheck {
    GradCheck::default()
}

fn stream(seed: u64) -> rand_chacha::ChaCha8Rng {
    numerics::rng::stream(seed, "grad-check", 0)
}

#[test]
fn elementwise_chains() {
    let gc = gc();
    for seed in 0..4u64 {
        let mut rng = stream(seed);
        gc.check("sigmoid*tanh", &mut rng, &[vec![3, 4], vec![3, 4]], |t, v| {
            let s = t.sigmoid(v[0])?;
            let h = t.tanh(v[1])?;
            let p = t.mul(s, h)?;
            t.mean_all(p)
        });
        let mut rng = stream(seed + 100);
        gc.check("affine-neg-scale", &mut rng, &[vec![5], vec![5]], |t, v| {
            let a = t.scale(v[0], 1.7)?;
            let b = t.add_scalar(v[1], -0.3)?;
            let c = t.sub(a, b)?;
            let d = t.neg(c)?;
            t.sum_all(d)
        });
    }
}

#[test]
fn kinked_ops_probed_away_from_kinks() {
    let gc = gc();
    for seed in 0..3u64 {
        let mut rng = stream(20 + seed);
        // keep |x| in [0.2, 1.2] so probes never cross zero
        let shift = |a: Array<f64>| {
            Array::from_fn(a.shape().to_vec(), |i| {
                let v = a.data()[i];
                v.signum() * (0.2 + v.abs())
            })
        };
        let x = shift(uniform_array(&mut rng, vec![4, 3], -1.0, 1.0));
        gc.check_with("relu", &mut rng, &[x.clone()], |t, v| {
            let r = t.relu(v[0])?;
            t.sum_all(r)
        });
        gc.check_with("abs", &mut rng, &[x], |t, v| {
            let r = t.abs(v[0])?;
            t.mean_all(r)
        });
        // maximum: separate the operands by a gap wider than the probe
        let a = uniform_array(&mut rng, vec![6], -1.0, 1.0);
        let b = Array::from_fn(vec![6], |i| {
            let v = a.data()[i];
            if i % 2 == 0 {
                v + 0.4
            } else {
                v - 0.4
            }
        });
        gc.check_with("maximum", &mut rng, &[a, b], |t, v| {
            let m = t.maximum(v[0], v[1])?;
            t.sum_all(m)
        });
    }
}

#[test]
fn matrix_products() {
    let gc = gc();
    for seed in 0..3u64 {
        let mut rng = stream(40 + seed);
        gc.check("matmul", &mut rng, &[vec![3, 4], vec![4, 2]], |t, v| {
            let p = t.matmul(v[0], v[1])?;
            t.sum_all(p)
        });
        let mut rng = stream(50 + seed);
        gc.check(
            "linear+bias",
            &mut rng,
            &[vec![3, 4], vec![4, 5], vec![5]],
            |t, v| {
                let y = t.linear(v[0], v[1], Some(v[2]))?;
                let s = t.sigmoid(y)?;
                t.mean_all(s)
            },
        );
        let mut rng = stream(60 + seed);
        gc.check("linear1", &mut rng, &[vec![4], vec![4, 3], vec![3]], |t, v| {
            let y = t.linear1(v[0], v[1], Some(v[2]))?;
            t.sum_all(y)
        });
    }
}

#[test]
fn shape_plumbing() {
    let gc = gc();
    let mut rng = stream(70);
    gc.check(
        "concat-slice-rows",
        &mut rng,
        &[vec![2, 3], vec![4, 3]],
        |t, v| {
            let c = t.concat_rows(&[v[0], v[1]])?;
            let mid = t.slice_rows(c, 1, 5)?;
            let m = t.mean_rows(mid)?;
            t.sum_all(m)
        },
    );
    gc.check(
        "stack-row-vec",
        &mut rng,
        &[vec![4], vec![4], vec![4]],
        |t, v| {
            let s = t.stack_vecs(&[v[0], v[1], v[2]])?;
            let r = t.row_vec(s, 1)?;
            let all = t.reshape(s, vec![12])?;
            let joined = t.concat_vecs(&[r, all])?;
            let sq = t.mul(joined, joined)?;
            t.sum_all(sq)
        },
    );
    gc.check("slice-vec", &mut rng, &[vec![8]], |t, v| {
        let s = t.slice_vec(v[0], 2, 6)?;
        let h = t.tanh(s)?;
        t.sum_all(h)
    });
    gc.check("weight-rows", &mut rng, &[vec![3, 4], vec![3]], |t, v| {
        let w = t.weight_rows(v[0], v[1])?;
        t.sum_all(w)
    });
    gc.check("mul-scalar-var", &mut rng, &[vec![3, 3], vec![1]], |t, v| {
        let y = t.mul_scalar_var(v[0], v[1])?;
        t.mean_all(y)
    });
    gc.check("gather-rows", &mut rng, &[vec![5, 3]], |t, v| {
        let g = t.gather_rows(v[0], &[0, 2, 2, 4, 1, 2])?;
        let s = t.sigmoid(g)?;
        t.mean_all(s)
    });
}

#[test]
fn convolutions() {
    let gc = GradCheck { coords_per_input: 8, ..GradCheck::default() };
    for (seed, (cin, f, k, stride, pad, hw)) in [
        (80u64, (2usize, 3usize, 3usize, 1usize, 1usize, 6usize)),
        (81, (1, 2, 3, 2, 0, 8)),
        (82, (2, 1, 5, 1, 2, 7)),
    ] {
        let mut rng = stream(seed);
        gc.check(
            "conv2d",
            &mut rng,
            &[vec![cin, hw, hw], vec![f, cin, k, k], vec![f]],
            |t, v| {
                let y = t.conv2d(v[0], v[1], Some(v[2]), stride, pad)?;
                let h = t.tanh(y)?;
                t.mean_all(h)
            },
        );
    }
    let mut rng = stream(85);
    let log: Array<f64> = numerics::kernels::log_kernel(5, 1.0).unwrap();
    gc.check("depthwise-log", &mut rng, &[vec![2, 6, 6]], |t, v| {
        let y = t.depthwise_conv2d_const(v[0], &log)?;
        let h = t.tanh(y)?;
        t.mean_all(h)
    });
    let mut rng = stream(86);
    gc.check("region-pool", &mut rng, &[vec![2, 6, 6], vec![8]], |t, v| {
        let p = t.region_mean_pool(v[0], 2, 2)?;
        let w = t.mul(p, v[1])?;
        t.sum_all(w)
    });
}

#[test]
fn attention_and_norms() {
    let gc = GradCheck { coords_per_input: 6, ..GradCheck::default() };
    for seed in 0..2u64 {
        let mut rng = stream(90 + seed);
        gc.check("mhsa-core", &mut rng, &[vec![4, 6], vec![4, 6], vec![4, 6]], |t, v| {
            let y = t.mhsa_core(v[0], v[1], v[2], 3, None)?;
            t.mean_all(y)
        });
        let mut rng = stream(95 + seed);
        let mut mask = vec![false; 25];
        for i in 0..5 {
            for j in 0..=i {
                mask[i * 5 + j] = true;
            }
        }
        gc.check(
            "mhsa-full-masked",
            &mut rng,
            &[
                vec![5, 8],
                vec![8, 8],
                vec![8],
                vec![8, 8],
                vec![8],
                vec![8, 8],
                vec![8],
                vec![8, 8],
                vec![8],
            ],
            |t, v| {
                let w = AttnWeights {
                    wq: v[1],
                    bq: v[2],
                    wk: v[3],
                    bk: v[4],
                    wv: v[5],
                    bv: v[6],
                    wo: v[7],
                    bo: v[8],
                };
                let y = mhsa(t, v[0], &w, 2, Some(&mask))?;
                let h = t.tanh(y)?;
                t.mean_all(h)
            },
        );
    }
    for seed in 0..2u64 {
        let mut rng = stream(100 + seed);
        gc.check(
            "layer-norm",
            &mut rng,
            &[vec![3, 5], vec![5], vec![5]],
            |t, v| {
                let y = t.layer_norm(v[0], v[1], v[2], 1e-5)?;
                let s = t.sigmoid(y)?;
                t.mean_all(s)
            },
        );
    }
}

#[test]
fn recurrent_step() {
    let gc = GradCheck { coords_per_input: 6, ..GradCheck::default() };
    for seed in 0..2u64 {
        let mut rng = stream(110 + seed);
        gc.check(
            "lstm-step",
            &mut rng,
            &[vec![3], vec![4], vec![4], vec![3, 16], vec![4, 16], vec![16]],
            |t, v| {
                let w = LstmWeights { w_ih: v[3], w_hh: v[4], b: v[5] };
                let (h2, c2) = lstm_step(t, v[0], v[1], v[2], &w)?;
                let joined = t.concat_vecs(&[h2, c2])?;
                let sq = t.mul(joined, joined)?;
                t.sum_all(sq)
            },
        );
    }
}

#[test]
fn losses() {
    let gc = gc();
    for seed in 0..3u64 {
        let mut rng = stream(120 + seed);
        gc.check("softmax-mix", &mut rng, &[vec![3, 4], vec![3, 4]], |t, v| {
            let p = t.softmax_rows(v[0])?;
            let m = t.mul(p, v[1])?;
            t.sum_all(m)
        });
        let mut rng = stream(130 + seed);
        gc.check("cross-entropy", &mut rng, &[vec![4, 5]], |t, v| {
            t.cross_entropy_rows(v[0], &[0, 3, 2, 4])
        });
        let mut rng = stream(140 + seed);
        gc.check("bce", &mut rng, &[vec![6]], |t, v| {
            t.bce_with_logits(v[0], &[0.0, 1.0, 1.0, 0.0, 1.0, 0.0])
        });
    }
}

#[test]
fn dropout_with_a_replayed_mask_is_linear() {
    // Dropout draws its mask from a caller-held stream; replaying the same
    // stream on every evaluation makes the surface deterministic, so finite
    // differences apply.
    let gc = gc();
    let mut rng = stream(150);
    gc.check("dropout-replay", &mut rng, &[vec![4, 4]], |t, v| {
        let mut mask_rng = numerics::rng::stream(999, "mask", 0);
        let d = t.dropout(v[0], 0.4, &mut mask_rng)?;
        let s = t.tanh(d)?;
        t.mean_all(s)
    });
}
