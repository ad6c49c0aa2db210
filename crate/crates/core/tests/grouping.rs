mod common;

use common::nearest_center_bruteforce;
use msdd_core::segmenter::{group_scales, segment_all_scales, uniform_segments};
use msdd_core::types::{ScaleConfig, TimeInterval};
use proptest::prelude::*;
use rand::Rng;

fn random_regions(rng: &mut impl Rng) -> Vec<TimeInterval> {
    let mut t = rng.random_range(0.0..1.0);
    let mut out = Vec::new();
    for _ in 0..rng.random_range(1..5) {
        let len = rng.random_range(0.3..8.0);
        out.push(TimeInterval::new(t, t + len).unwrap());
        t += len + rng.random_range(0.05..2.0);
    }
    out
}

#[test]
fn grouping_matches_exhaustive_search_on_random_layouts() {
    let mut rng = common::rng(31);
    for trial in 0..300 {
        let regions = random_regions(&mut rng);
        let cfg = if trial % 2 == 0 { ScaleConfig::telephonic() } else { ScaleConfig::meeting() };
        let set = segment_all_scales(&regions, &cfg).unwrap();
        let base = set.base_segments();
        for k in 0..cfg.num_scales() {
            let expected = nearest_center_bruteforce(base, &set.per_scale_segments[k]);
            let got: Vec<usize> = set.group_map.iter().map(|g| g[k]).collect();
            assert_eq!(got, expected, "trial {trial} scale {k}");
        }
    }
}

#[test]
fn unsorted_coarse_segments_use_the_same_rule() {
    let coarse = [(2.0, 3.0), (0.0, 1.0), (1.0, 2.0)].map(|(a, b)| TimeInterval::new(a, b).unwrap());
    let base = [(0.0, 0.5), (1.25, 1.75), (2.75, 3.0)].map(|(a, b)| TimeInterval::new(a, b).unwrap());
    let got = group_scales(&base, &coarse).unwrap();
    assert_eq!(got, nearest_center_bruteforce(&base, &coarse));
    assert_eq!(got, vec![1, 2, 0]);
}

proptest! {
    #[test]
    fn segments_cover_their_region(onset in 0.0f64..5.0, len in 0.1f64..20.0, k in 0usize..5) {
        let region = TimeInterval::new(onset, onset + len).unwrap();
        let cfg = ScaleConfig::telephonic();
        let segs = uniform_segments(&region, cfg.windows()[k], cfg.hops()[k]).unwrap();
        prop_assert!(!segs.is_empty());
        prop_assert_eq!(segs[0].onset(), region.onset());
        prop_assert_eq!(segs.last().unwrap().offset(), region.offset());
        for w in segs.windows(2) {
            prop_assert!(w[1].onset() <= w[0].offset() + 1e-12, "gap between segments");
            prop_assert!(w[1].onset() > w[0].onset());
        }
        for s in &segs {
            prop_assert!(s.duration() <= cfg.windows()[k] + cfg.hops()[k] + 1e-9);
        }
    }

    #[test]
    fn grouped_centers_are_nearest(seed in 0u64..10_000) {
        let mut rng = common::rng(seed);
        let regions = random_regions(&mut rng);
        let set = segment_all_scales(&regions, &ScaleConfig::telephonic()).unwrap();
        for (i, b) in set.base_segments().iter().enumerate() {
            for k in 0..4 {
                let chosen = &set.per_scale_segments[k][set.group_map[i][k]];
                let d = (chosen.center() - b.center()).abs();
                for other in &set.per_scale_segments[k] {
                    prop_assert!(d <= (other.center() - b.center()).abs());
                }
            }
        }
    }
}
