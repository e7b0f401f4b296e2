//! Property tests for the io helpers and the step-size schedule.

use proptest::prelude::*;
use stockout::io::{break_ties, parse_time, Clock};
use stockout::sampler::{step_size, Schedule};

fn sorted_times() -> impl Strategy<Value = (Vec<f64>, f64)> {
    (1.0f64..100.0).prop_flat_map(|horizon| {
        // Few distinct values so ties are common, including at the horizon.
        let grid = prop::collection::vec(0usize..=20, 1..40).prop_map(move |ks| {
            let mut t: Vec<f64> = ks.iter().map(|&k| horizon * k as f64 / 20.0).collect();
            t.sort_by(f64::total_cmp);
            t
        });
        (grid, Just(horizon))
    })
}

proptest! {
    #[test]
    fn ties_become_strictly_increasing((mut times, horizon) in sorted_times()) {
        let before = times.clone();
        break_ties(&mut times, horizon);
        prop_assert!(times.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(times.iter().all(|&t| (0.0..=horizon).contains(&t)));
        for (a, b) in before.iter().zip(&times) {
            prop_assert!((a - b).abs() <= 1e-7 * horizon);
        }
    }

    #[test]
    fn clock_times_parse_to_hours(h in 0u32..24, m in 0u32..60, s in 0u32..60) {
        let t = parse_time(&format!("{h:02}:{m:02}:{s:02}")).unwrap();
        prop_assert!((t - (h as f64 + m as f64 / 60.0 + s as f64 / 3600.0)).abs() < 1e-12);
        prop_assert_eq!(parse_time(&format!("{h}:{m:02}")), Some(h as f64 + m as f64 / 60.0));
    }

    #[test]
    fn clock_maps_business_hours_onto_horizon(open in 0.0f64..12.0, len in 1.0f64..12.0, horizon in 0.5f64..50.0) {
        let clock = Clock { open, close: open + len };
        prop_assert!(clock.rescale(open, horizon).abs() < 1e-12);
        prop_assert!((clock.rescale(open + len, horizon) - horizon).abs() < 1e-9 * horizon);
    }

    #[test]
    fn step_sizes_decrease(a in 1e-6f64..1.0, b in 1.0f64..1e4, c in 0.51f64..1.0, w in 0usize..100_000) {
        let s = Schedule { a, b, c };
        prop_assert!(step_size(&s, w + 1) < step_size(&s, w));
        prop_assert!(step_size(&s, w) <= a);
    }
}
