use gtma::numeric::{finite_diff_gradient, Mat64};
use gtma::{
    cosine_sim, l2_normalize, project_to_vocab, refine_anchor, scaled_dot_attention, softmax,
    AttentionParams, PatchFeatures, ProjectionMode, Vec64, VocabularyTable,
};
use proptest::prelude::*;

fn vec_strategy(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, dim)
}

fn nonzero(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    vec_strategy(dim).prop_filter("norm bounded away from zero", |v| {
        v.iter().map(|x| x * x).sum::<f64>() > 1e-6
    })
}

fn v(x: &[f64]) -> Vec64 {
    Vec64::new(x.to_vec()).unwrap()
}

proptest! {
    #[test]
    fn normalize_is_idempotent(x in (1usize..12).prop_flat_map(nonzero)) {
        let once = l2_normalize(&v(&x)).unwrap();
        let twice = l2_normalize(&once).unwrap();
        prop_assert!((once.norm() - 1.0).abs() < 1e-12);
        for (a, b) in once.as_slice().iter().zip(twice.as_slice()) {
            prop_assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn cosine_is_scale_invariant(
        (a, b) in (1usize..12).prop_flat_map(|d| (nonzero(d), nonzero(d))),
        s in 1e-3..1e3f64,
    ) {
        let base = cosine_sim(&v(&a), &v(&b)).unwrap();
        let scaled = cosine_sim(&v(&a).scaled(s), &v(&b)).unwrap();
        prop_assert!((base - scaled).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&base));
        prop_assert!((base - cosine_sim(&v(&b), &v(&a)).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn softmax_sums_to_one_and_ignores_shifts(x in (1usize..20).prop_flat_map(vec_strategy), c in -50.0..50.0f64) {
        let p = softmax(&v(&x));
        prop_assert!((p.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.as_slice().iter().all(|&w| w > 0.0));
        let shifted: Vec<f64> = x.iter().map(|s| s + c).collect();
        let q = softmax(&v(&shifted));
        for (a, b) in p.as_slice().iter().zip(q.as_slice()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_output_stays_in_the_value_box(
        (q, keys, values) in (1usize..6, 1usize..8).prop_flat_map(|(d, n)| {
            (vec_strategy(d), prop::collection::vec(vec_strategy(d), n), prop::collection::vec(vec_strategy(3), n))
        })
    ) {
        let k = Mat64::from_rows(keys).unwrap();
        let vals = Mat64::from_rows(values.clone()).unwrap();
        let out = scaled_dot_attention(&v(&q), &k, &vals).unwrap();
        for j in 0..3 {
            let lo = values.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
            let hi = values.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(out.as_slice()[j] >= lo - 1e-9 && out.as_slice()[j] <= hi + 1e-9);
        }
    }

    #[test]
    fn refined_anchor_ignores_patch_order(
        rows in (2usize..5, 2usize..8).prop_flat_map(|(d, n)| prop::collection::vec(nonzero(d), n)),
        rot in 0usize..8,
    ) {
        let d = rows[0].len();
        let mut permuted = rows.clone();
        let r = rot % permuted.len();
        permuted.rotate_left(r);
        let last = permuted.len() - 1;
        permuted.swap(0, last);
        let attn = AttentionParams::identity(d).unwrap();
        let a = refine_anchor(&PatchFeatures::new(Mat64::from_rows(rows).unwrap()), &attn);
        let b = refine_anchor(&PatchFeatures::new(Mat64::from_rows(permuted).unwrap()), &attn);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                for (x, y) in a.vector().as_slice().iter().zip(b.vector().as_slice()) {
                    prop_assert!((x - y).abs() < 1e-10);
                }
            }
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "order changed whether the anchor exists"),
        }
    }

    #[test]
    fn hard_projection_is_idempotent(
        (rows, z) in (1usize..6, 2usize..9).prop_flat_map(|(d, n)| (prop::collection::vec(vec_strategy(d), n), vec_strategy(d)))
    ) {
        let n = rows.len();
        let vocab = VocabularyTable::new(Mat64::from_rows(rows).unwrap(), (0..n).map(|i| format!("w{i}")).collect());
        prop_assume!(vocab.is_ok());
        let vocab = vocab.unwrap();
        let p = project_to_vocab(&v(&z), &vocab, ProjectionMode::HardNearest).unwrap();
        let pp = project_to_vocab(&p, &vocab, ProjectionMode::HardNearest).unwrap();
        prop_assert_eq!(p, pp);
    }

    #[test]
    fn finite_differences_are_exact_on_quadratics(
        (a, b, z) in (1usize..8).prop_flat_map(|d| (vec_strategy(d), vec_strategy(d), vec_strategy(d)))
    ) {
        // f(z) = Σ a_i z_i² + b_i z_i has gradient 2 a ∘ z + b; central differences carry no truncation error
        let f = |p: &Vec64| -> gtma::Result<f64> {
            Ok(p.as_slice().iter().zip(&a).zip(&b).map(|((x, ai), bi)| ai * x * x + bi * x).sum())
        };
        let exact: Vec<f64> = z.iter().zip(&a).zip(&b).map(|((x, ai), bi)| 2.0 * ai * x + bi).collect();
        let h = 1e-2;
        let fd = finite_diff_gradient(f, &v(&z), h).unwrap();
        // only rounding remains: a few ulps of |f| divided by h
        let scale: f64 = 1.0 + z.iter().zip(&a).zip(&b).map(|((x, ai), bi)| (ai * x * x).abs() + (bi * x).abs()).sum::<f64>();
        let tol = 64.0 * f64::EPSILON * scale / h;
        for (g, want) in fd.as_slice().iter().zip(&exact) {
            prop_assert!((g - want).abs() <= tol, "{} vs {} (tol {:e})", g, want, tol);
        }
    }
}
