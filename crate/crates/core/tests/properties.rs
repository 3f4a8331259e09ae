mod common;

use common::*;
use proptest::prelude::*;
use scorefeat::poly::PolyFunction;
use scorefeat::score::{hermite, AffineMap, DensityModel};
use scorefeat::spectral::{self, DecompConfig};
use scorefeat::stein::LabeledDataset;
use scorefeat::tensor::{self, io, DenseTensor};
use scorefeat::{Model, Permutation, ScoreOrder, Tensor};

fn dims_and_data() -> impl Strategy<Value = (Vec<usize>, Vec<f64>)> {
    prop::collection::vec(1usize..4, 0..4).prop_flat_map(|dims| {
        let len: usize = dims.iter().product();
        (Just(dims), prop::collection::vec(-1e6f64..1e6, len))
    })
}

fn point(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.5f64..2.5, d)
}

fn gmm() -> Model {
    let mix = RefMixture {
        weights: vec![0.2, 0.5, 0.3],
        means: vec![vec![-1.0, 0.5, 0.0], vec![1.0, -0.5, 0.3], vec![0.0, 1.0, -1.0]],
        vars: vec![vec![1.0, 0.6, 1.3], vec![0.8, 1.0, 1.0], vec![1.5, 0.9, 0.7]],
    };
    scorefeat::ModelSpec::from_json(&mix.model_json()).unwrap().build().unwrap()
}

fn all_perms(r: usize) -> Vec<Vec<usize>> {
    if r == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in all_perms(r - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, r - 1);
            out.push(q);
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tensor_bytes_round_trip((dims, data) in dims_and_data()) {
        let t = Tensor::new(dims, data).unwrap();
        let bytes = io::encode(&t);
        let back = io::decode(&bytes).unwrap();
        prop_assert_eq!(&back, &t);
        prop_assert_eq!(io::encode(&back), bytes);
    }

    #[test]
    fn transpose_then_inverse_is_identity((dims, data) in dims_and_data(), seed in 0usize..24) {
        let t = Tensor::new(dims.clone(), data).unwrap();
        let perms = all_perms(dims.len());
        let pi = Permutation::new(perms[seed % perms.len()].clone()).unwrap();
        let moved = tensor::transpose(&t, &pi).unwrap();
        prop_assert_eq!(tensor::transpose(&moved, &pi.inverse()).unwrap(), t);
    }

    #[test]
    fn scores_are_symmetric(x in point(3), m in 2usize..=4) {
        let s = gmm().score(&x, ScoreOrder::new(m).unwrap()).unwrap();
        for p in all_perms(m) {
            let moved = tensor::transpose(&s, &Permutation::new(p).unwrap()).unwrap();
            prop_assert_eq!(moved.data(), s.data());
        }
    }

    #[test]
    fn univariate_hermite_matches_closed_form(x in -4.0f64..4.0) {
        let closed = [x, x * x - 1.0, x.powi(3) - 3.0 * x, x.powi(4) - 6.0 * x * x + 3.0];
        for (m, want) in closed.iter().enumerate() {
            let h = hermite(&[x], ScoreOrder::new(m + 1).unwrap());
            prop_assert!((h.data()[0] - want).abs() <= 1e-12 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn gaussian_score_is_hermite(x in point(4), m in 1usize..=4) {
        let order = ScoreOrder::new(m).unwrap();
        let s = Model::standard_gaussian(4).unwrap().score(&x, order).unwrap();
        prop_assert!(s.max_abs_diff(&hermite(&x, order)) <= 1e-11);
    }

    #[test]
    fn first_order_gmm_score_is_negative_log_gradient(x in point(3)) {
        let model = gmm();
        let s = model.score(&x, ScoreOrder::new(1).unwrap()).unwrap();
        let h = 1e-5;
        for i in 0..3 {
            let shift = |s: f64| {
                let mut y = x.clone();
                y[i] += s;
                model.log_density(&y).unwrap().value
            };
            let grad = (shift(h) - shift(-h)) / (2.0 * h);
            prop_assert!((s.data()[i] + grad).abs() <= 1e-6, "coordinate {}", i);
        }
    }

    #[test]
    fn affine_gaussian_first_score_is_precision_times_offset(
        a in prop::collection::vec(-1.0f64..1.0, 4),
        b in prop::collection::vec(-1.0f64..1.0, 2),
        t in point(2),
    ) {
        let a = [a[0] + 2.0, a[1], a[2], a[3] + 2.0];
        let map = AffineMap::new(Tensor::matrix(2, 2, a.to_vec()).unwrap(), b.clone()).unwrap();
        let model = DensityModel::affine(Model::standard_gaussian(2).unwrap(), map).unwrap();
        let s = model.score(&t, ScoreOrder::new(1).unwrap()).unwrap();
        let cov = [
            a[0] * a[0] + a[1] * a[1],
            a[0] * a[2] + a[1] * a[3],
            a[2] * a[2] + a[3] * a[3],
        ];
        let det = cov[0] * cov[2] - cov[1] * cov[1];
        let r = [t[0] - b[0], t[1] - b[1]];
        let want = [(cov[2] * r[0] - cov[1] * r[1]) / det, (cov[0] * r[1] - cov[1] * r[0]) / det];
        prop_assert!((s.data()[0] - want[0]).abs() <= 1e-9 && (s.data()[1] - want[1]).abs() <= 1e-9);
    }

    #[test]
    fn polynomial_derivative_matches_monomial_calculus(seed in 0u64..1000, x in point(3), m in 0usize..=3) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let monos = random_polys(&mut rng, 3, 2, 5, 4);
        let g = PolyFunction::from_spec(&spec_of(3, 2, &monos)).unwrap();
        let got = g.derivative(&x, m).unwrap();
        let h = 1e-3;
        let want: Vec<f64> = if m == 0 {
            eval_poly(&monos, 2, &x)
        } else {
            let block = 3usize.pow(m as u32 - 1);
            let mut v = vec![0.0; 2 * 3 * block];
            for i in 0..3 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let (p, q) = (g.derivative(&xp, m - 1).unwrap(), g.derivative(&xm, m - 1).unwrap());
                for o in 0..2 {
                    for j in 0..block {
                        v[o * 3 * block + i * block + j] = (p.data()[o * block + j] - q.data()[o * block + j]) / (2.0 * h);
                    }
                }
            }
            v
        };
        for (a, b) in got.data().iter().zip(&want) {
            prop_assert!((a - b).abs() <= 1e-5 * (1.0 + b.abs()), "{} vs {}", a, b);
        }
    }

    #[test]
    fn rank_one_contraction(u in point(4), v in point(4), w in -3.0f64..3.0) {
        let t = tensor::rank1_sum(&[w], std::slice::from_ref(&u), 3).unwrap();
        let uv: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
        let c = tensor::contract_all(&t, &v).unwrap();
        prop_assert!((c - w * uv.powi(3)).abs() <= 1e-10 * (1.0 + (w * uv.powi(3)).abs()));
        let fib = tensor::contract_fibers(&t, &v, &v).unwrap();
        for (f, ui) in fib.iter().zip(&u) {
            prop_assert!((f - w * uv * uv * ui).abs() <= 1e-10 * (1.0 + f.abs()));
        }
    }

    #[test]
    fn multilinear_identity_is_noop((data, d) in (1usize..4).prop_flat_map(|d| (prop::collection::vec(-5.0f64..5.0, d * d * d), Just(d)))) {
        let t = Tensor::new(vec![d; 3], data).unwrap();
        let i = Tensor::identity(d);
        prop_assert_eq!(tensor::multilinear_form(&t, &i, &i, &i).unwrap(), t);
    }

    #[test]
    fn orthogonal_decomposition_is_canonical(seed in 0u64..200, k in 1usize..=3) {
        let us = orthonormal(seed, 5, k);
        let w: Vec<f64> = (0..k).map(|j| 1.0 + j as f64).collect();
        let t = Tensor::new(vec![5; 3], rank_one_sum(&w, &us, 3)).unwrap();
        let r = spectral::decompose(&t, &DecompConfig::new(k).with_seed(seed)).unwrap();
        prop_assert_eq!(r.components.len(), k);
        for c in &r.components {
            let n: f64 = c.vector.iter().map(|a| a * a).sum::<f64>().sqrt();
            prop_assert!((n - 1.0).abs() < 1e-12);
            prop_assert!(canonical_sign(&c.vector) > 0.0);
        }
        for (_, err) in best_matches(&r.vectors(), &us) {
            prop_assert!(err < 1e-8);
        }
        prop_assert!(r.residual_fro <= 1e-8 * t.frobenius_norm());
    }

    #[test]
    fn csv_round_trip(rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 1..20)) {
        let x: Vec<f64> = rows.iter().flat_map(|r| r[..2].to_vec()).collect();
        let y: Vec<f64> = rows.iter().map(|r| r[2]).collect();
        let data = LabeledDataset::new(2, 1, x, y).unwrap();
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let back = LabeledDataset::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.inputs(), data.inputs());
        prop_assert_eq!(back.labels(), data.labels());
    }
}

#[test]
fn f32_and_f64_scores_agree() {
    let x = [0.3, -0.7, 1.1];
    let m64 = gmm();
    let spec = scorefeat::ModelSpec::from_model(&m64);
    let m32: DensityModel<f32> = spec.build().unwrap();
    let x32: Vec<f32> = x.iter().map(|&v| v as f32).collect();
    for m in 1..=3 {
        let a = m64.score(&x, ScoreOrder::new(m).unwrap()).unwrap();
        let b: DenseTensor<f32> = m32.score(&x32, ScoreOrder::new(m).unwrap()).unwrap();
        for (p, q) in a.data().iter().zip(b.data()) {
            assert!((p - f64::from(*q)).abs() <= 1e-4 * (1.0 + p.abs()), "m={m}: {p} vs {q}");
        }
    }
}

#[test]
fn degenerate_and_invalid_inputs_are_rejected() {
    let model = Model::standard_gaussian(2).unwrap();
    assert!(ScoreOrder::new(0).is_err());
    assert!(model.score(&[0.0, 0.0, 0.0], ScoreOrder::new(1).unwrap()).is_err());
    let far = model.score(&[1e3, 0.0], ScoreOrder::new(2).unwrap());
    match far {
        Ok(s) => assert!(s.is_finite()),
        Err(e) => assert_eq!(e.exit_code(), 3),
    }
    let asym = Tensor::from_fn(vec![2, 2, 2], |i| if i == [0, 0, 1] { 1.0 } else { 0.0 }).unwrap();
    assert!(spectral::decompose(&asym, &DecompConfig::new(1)).is_err());
    assert!(io::decode(b"NOPE").is_err());
}
