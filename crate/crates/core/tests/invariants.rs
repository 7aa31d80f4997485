use gmbound::gm_algebra::{mixture_inner, mixture_norm, GaussianMixture, Mode};
use gmbound::gram::pairwise_sq_dists;
use gmbound::linalg_ad::{svd, Graph};
use gmbound::losses::{nip_cost, LossConfig};
use gmbound::nn::{sample_prior, PriorSpec, UniformRegion};
use gmbound::Mat;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mat(rows: usize, cols: usize) -> impl Strategy<Value = Mat> {
    prop::collection::vec(-3.0f64..3.0, rows * cols).prop_map(move |v| Mat::from_vec(rows, cols, v))
}

fn batch_pair() -> impl Strategy<Value = (Mat, Mat)> {
    (1usize..10, 1usize..10, 1usize..5).prop_flat_map(|(n, k, d)| (mat(n, d), mat(k, d)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distances_are_nonnegative_and_symmetric((a, b) in batch_pair()) {
        let ab = pairwise_sq_dists(&a, &b).unwrap().values;
        let ba = pairwise_sq_dists(&b, &a).unwrap().values;
        prop_assert!(ab.iter().all(|v| *v >= 0.0));
        prop_assert!((ab - ba.transpose()).amax() < 1e-10);
        let aa = pairwise_sq_dists(&a, &a).unwrap().values;
        prop_assert!(aa.diagonal().iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn mixture_cauchy_schwarz((a, b) in batch_pair(), v in 0.01f64..1.0) {
        let p = GaussianMixture::from_samples(&a, v, Mode::True).unwrap();
        let q = GaussianMixture::from_samples(&b, v, Mode::True).unwrap();
        let pq = mixture_inner(&p, &q).unwrap();
        prop_assert!(pq >= 0.0);
        prop_assert!(pq * pq <= mixture_norm(&p) * mixture_norm(&q) * (1.0 + 1e-10));
    }

    #[test]
    fn nip_ratio_is_invariant_to_translation((a, b) in batch_pair(), shift in -2.0f64..2.0) {
        let g = Graph::new();
        let cfg = LossConfig::new(0.2);
        let r0 = nip_cost(g.constant(a.clone()), g.constant(b.clone()), &cfg).unwrap().ratio.item();
        let r1 = nip_cost(g.constant(a.add_scalar(shift)), g.constant(b.add_scalar(shift)), &cfg).unwrap().ratio.item();
        prop_assert!((r0 - r1).abs() <= 1e-9 * r0.abs().max(1e-12));
    }

    #[test]
    fn svd_values_are_sorted_and_reconstruct(a in (1usize..8, 1usize..8).prop_flat_map(|(r, c)| mat(r, c))) {
        let s = svd(&a).unwrap();
        prop_assert!(s.s.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(s.s.iter().all(|x| *x >= 0.0));
        prop_assert!((s.reconstruct() - &a).amax() < 1e-10 * a.amax().max(1.0));
    }

    #[test]
    fn prior_samples_respect_their_region(seed in 0u64..1000, dim in 2usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for region in [UniformRegion::Box, UniformRegion::Disk, UniformRegion::Ring, UniformRegion::Cross] {
            let s = sample_prior(&PriorSpec::uniform(dim).with_region(region), 20, &mut rng);
            for i in 0..20 {
                let (u, w) = (s[(i, 0)], s[(i, 1)]);
                let r2 = u * u + w * w;
                prop_assert!(s.row(i).iter().all(|x| x.abs() <= 1.0));
                match region {
                    UniformRegion::Box => {}
                    UniformRegion::Disk => prop_assert!(r2 <= 1.0),
                    UniformRegion::Ring => prop_assert!((0.25..=1.0).contains(&r2)),
                    UniformRegion::Cross => prop_assert!(u.abs() <= 0.3 || w.abs() <= 0.3),
                }
            }
        }
    }
}
