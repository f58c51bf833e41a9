//! Localization metrics against direct counting.

use grid_sentinel::{arl_stats, compute_confusion};
use proptest::prelude::*;

const CLASSES: [usize; 4] = [2, 3, 6, 8];

fn records() -> impl Strategy<Value = Vec<(usize, Option<usize>)>> {
    let class = prop::sample::select(CLASSES.to_vec());
    prop::collection::vec((class.clone(), prop::option::of(class)), 1..200)
}

proptest! {
    #[test]
    fn accuracy_and_recall_match_direct_counts(recs in records()) {
        let c = compute_confusion(&recs, &CLASSES).unwrap();
        let hits = recs.iter().filter(|(t, p)| *p == Some(*t)).count();
        prop_assert_eq!(c.accuracy, hits as f64 / recs.len() as f64);
        prop_assert_eq!(c.records, recs.len());
        for m in &c.classes {
            let support = recs.iter().filter(|r| r.0 == m.class).count();
            let own = recs.iter().filter(|r| r.0 == m.class && r.1 == Some(m.class)).count();
            prop_assert_eq!(m.support, support);
            prop_assert_eq!(m.recall, (support > 0).then(|| own as f64 / support as f64));
            for v in [m.precision, m.recall, m.f].into_iter().flatten() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            if let (Some(p), Some(r), Some(f)) = (m.precision, m.recall, m.f) {
                if p + r > 0.0 {
                    prop_assert!((f - 2.0 * p * r / (p + r)).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn arl_mean_matches_direct_average(runs in prop::collection::vec((1usize..5000, any::<bool>()), 1..100)) {
        let s = arl_stats(&runs).unwrap();
        let mean = runs.iter().map(|r| r.0 as f64).sum::<f64>() / runs.len() as f64;
        prop_assert!((s.mean - mean).abs() <= 1e-9 * mean);
        prop_assert_eq!(s.censored, runs.iter().filter(|r| r.1).count());
    }
}
