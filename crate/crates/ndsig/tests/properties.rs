use ndsig::{
    adam_step, lbfgs_minimize, AdamState, ConvLayerParams, GramMatrix, LbfgsConfig, ParamSlot,
    Tape, Tensor1D,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn features(p: usize, m: usize) -> impl Strategy<Value = Tensor1D> {
    prop::collection::vec(-2.0f64..2.0, p * m).prop_map(move |v| Tensor1D::new(p, m, v).unwrap())
}

/// Smallest eigenvalue of a symmetric matrix by cyclic Jacobi rotations.
fn min_eigenvalue(a: &[f64], n: usize) -> f64 {
    let mut m = a.to_vec();
    for _ in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += m[i * n + j] * m[i * n + j];
                }
            }
        }
        if off < 1e-22 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k * n + p], m[k * n + q]);
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p * n + k], m[q * n + k]);
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
            }
        }
    }
    (0..n).map(|i| m[i * n + i]).fold(f64::INFINITY, f64::min)
}

fn conv(x: &Tensor1D, p: &ConvLayerParams) -> Vec<f64> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let w = tape.constant(p.weight_tensor());
    let b = tape.constant(p.bias_tensor());
    let y = tape.conv1d(xv, w, b, p.kernel_width, 1).unwrap();
    tape.value(y).data().to_vec()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gram_symmetric_psd_homogeneous(f in features(5, 9), c in -3.0f64..3.0) {
        let g = GramMatrix::from_features(&f);
        for i in 0..5 {
            for j in 0..5 {
                prop_assert_eq!(g.get(i, j).to_bits(), g.get(j, i).to_bits());
            }
        }
        prop_assert!(min_eigenvalue(g.entries(), 5) >= -1e-9);
        let scaled = Tensor1D::new(5, 9, f.data().iter().map(|v| v * c).collect()).unwrap();
        let gs = GramMatrix::from_features(&scaled);
        for (a, b) in gs.entries().iter().zip(g.entries()) {
            let want = c * c * b;
            prop_assert!((a - want).abs() <= 1e-10 * want.abs().max(1e-12) + 1e-14);
        }
    }

    #[test]
    fn conv_is_linear_without_bias(
        x in features(2, 13), y in features(2, 13),
        a in -2.0f64..2.0, b in -2.0f64..2.0, seed in 0u64..1000,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = ConvLayerParams::he_uniform(2, 3, 7, &mut rng).unwrap();
        let mix = Tensor1D::new(
            2, 13,
            x.data().iter().zip(y.data()).map(|(u, v)| a * u + b * v).collect(),
        ).unwrap();
        let lhs = conv(&mix, &p);
        let (cx, cy) = (conv(&x, &p), conv(&y, &p));
        for i in 0..lhs.len() {
            let rhs = a * cx[i] + b * cy[i];
            let scale = (a * cx[i]).abs() + (b * cy[i]).abs();
            prop_assert!((lhs[i] - rhs).abs() <= 1e-10 * scale.max(1e-3));
        }
    }
}

#[test]
fn ill_conditioned_quadratic_reaches_zero() {
    // f(x) = Σ d_i x_i² with d spanning 1..1e4.
    let diag: Vec<f64> = (0..10).map(|i| 10f64.powf(4.0 * i as f64 / 9.0)).collect();
    let x0 = vec![1.0; 10];
    let out = lbfgs_minimize(
        |x: &[f64]| {
            let f = x.iter().zip(&diag).map(|(v, d)| d * v * v).sum();
            let g = x.iter().zip(&diag).map(|(v, d)| 2.0 * d * v).collect();
            Ok((f, g))
        },
        &x0,
        &LbfgsConfig::default().with_max_iters(150),
    )
    .unwrap();
    assert!(out.value <= 1e-10, "final objective {}", out.value);
    for w in out.trajectory.windows(2) {
        assert!(w[1] <= w[0]);
    }
}

#[test]
fn lbfgs_trajectory_non_increasing_on_rosenbrock() {
    let out = lbfgs_minimize(
        |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ];
            Ok((f, g))
        },
        &[-1.2, 1.0],
        &LbfgsConfig::default(),
    )
    .unwrap();
    for w in out.trajectory.windows(2) {
        assert!(w[1] <= w[0]);
    }
    assert!(out.value < 1e-8, "{}", out.value);
}

#[test]
fn adam_is_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut p = ConvLayerParams::he_uniform(2, 2, 7, &mut rng).unwrap();
        let mut st = AdamState::new(&[p.weights.len(), p.bias.len()]);
        for step in 0..20 {
            let gw: Vec<f64> = p.weights.iter().map(|w| (w * step as f64).sin()).collect();
            let gb: Vec<f64> = p.bias.iter().map(|b| b + 0.1).collect();
            let (w, b) = (&mut p.weights, &mut p.bias);
            adam_step(
                &mut [
                    ParamSlot { name: "w", values: w, grads: &gw },
                    ParamSlot { name: "b", values: b, grads: &gb },
                ],
                &mut st,
                1e-2,
            )
            .unwrap();
        }
        p
    };
    let (a, b) = (run(), run());
    assert!(a.weights.iter().zip(&b.weights).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert!(a.bias.iter().zip(&b.bias).all(|(x, y)| x.to_bits() == y.to_bits()));
}
