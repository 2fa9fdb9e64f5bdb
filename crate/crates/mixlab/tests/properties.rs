//! Property tests for the geometry, codec, and schedule invariants.

use mixlab::bounds::build_schedule;
use mixlab::graph::GraphSpec;
use mixlab::spectral::{greens_table, DenseKernel};
use proptest::prelude::*;

proptest! {
    #[test]
    fn l1_distance_triangle_inequality(
        n in 2u32..9,
        d in 1u32..5,
        seeds in prop::array::uniform3(0u64..1_000_000),
    ) {
        let g = GraphSpec::torus(n, d).unwrap();
        let count = g.vertex_count();
        let (a, b, c) = (seeds[0] % count, seeds[1] % count, seeds[2] % count);
        let ab = g.l1_distance(a, b).unwrap();
        let bc = g.l1_distance(b, c).unwrap();
        let ac = g.l1_distance(a, c).unwrap();
        prop_assert!(ac <= ab + bc);
        prop_assert_eq!(ab, g.l1_distance(b, a).unwrap());
        prop_assert_eq!(g.l1_distance(a, a).unwrap(), 0);
    }

    #[test]
    fn vertex_codec_round_trips(n in 2u32..8, d in 1u32..5, pick in 0u64..1_000_000) {
        let g = GraphSpec::torus(n, d).unwrap();
        let v = pick % g.vertex_count();
        let coords = g.decode(v).unwrap();
        prop_assert_eq!(g.encode(&coords).unwrap(), v);
        prop_assert!(coords.iter().all(|&c| c < n));
    }

    #[test]
    fn lazy_step_distribution_is_a_distribution(
        n in 2u32..7,
        d in 1u32..4,
        pick in 0u64..1_000_000,
    ) {
        let g = GraphSpec::torus(n, d).unwrap();
        let v = pick % g.vertex_count();
        let dist = g.lazy_step_distribution(v).unwrap();
        prop_assert_eq!(dist.len() as u32, g.degree(v).unwrap() + 1);
        let total: f64 = dist.iter().map(|&(_, p)| p).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert_eq!(dist[0], (v, 0.5));
        // no duplicate support points
        let mut support: Vec<u64> = dist.iter().map(|&(u, _)| u).collect();
        support.sort_unstable();
        support.dedup();
        prop_assert_eq!(support.len(), dist.len());
    }

    #[test]
    fn schedule_invariants_hold_for_random_triples(
        cardinality in 2u64..5000,
        t_u in 1u64..400,
        n_star in 1u64..5000,
    ) {
        let sch = build_schedule(cardinality, t_u, n_star).unwrap();
        // linear rungs
        prop_assert_eq!(sch.s[0], cardinality);
        for i in 0..=sch.r {
            prop_assert_eq!(sch.s[i as usize], cardinality - i * t_u);
        }
        // r maximality
        if cardinality >= n_star {
            prop_assert!(cardinality - sch.r * t_u >= n_star);
            prop_assert!(cardinality < (sch.r + 1) * t_u + n_star);
        } else {
            prop_assert_eq!(sch.r, 0);
        }
        // halving rungs
        let s_r = sch.s[sch.r as usize];
        for i in 1..sch.r_tilde {
            prop_assert_eq!(sch.s[(sch.r + i) as usize], s_r >> i);
        }
        // strictly decreasing to terminal zero
        prop_assert_eq!(*sch.s.last().unwrap(), 0);
        prop_assert!(sch.s.windows(2).all(|w| w[0] > w[1]));
        prop_assert_eq!(sch.s.len() as u64, sch.r + sch.r_tilde + 1);
    }

    #[test]
    fn g_star_curve_is_nondecreasing(n in 3u32..9, horizon in 0u64..40) {
        let g = GraphSpec::cycle(n).unwrap();
        let kernel = DenseKernel::build(&g).unwrap();
        let table = greens_table(&kernel, horizon).unwrap();
        let curve = table.g_star_curve().unwrap();
        prop_assert!(curve.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        prop_assert!((curve.last().unwrap() - (horizon + 1) as f64).abs() < 1e-8);
    }
}
