use proptest::prelude::*;

use atsd_core::cost::expected_ny;
use atsd_core::designs::{sequential_expand, spread, srswor, Frame};
use atsd_core::estimators::murthy_total;
use atsd_core::montecarlo::{aggregate, Accumulator};
use atsd_core::population::{parse_population, render_population, Condition, Population, Unit, Variable};
use atsd_core::rng::DrawRng;

fn rarity() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..=1.0f64, 1..6)
}

proptest! {
    #[test]
    fn expected_ny_monotone(p in rarity(), m in 1usize..5, n1 in 1usize..20, d in 0usize..6, bump in 0.0..0.5f64, which in 0usize..6) {
        let base = expected_ny(&p, m, n1, d);
        prop_assert!(expected_ny(&p, m + 1, n1, d) >= base);
        prop_assert!(expected_ny(&p, m, n1 + 1, d) >= base);
        prop_assert!(expected_ny(&p, m, n1, d + 1) >= base);
        let mut q = p.clone();
        let k = which % q.len();
        q[k] = (q[k] + bump).min(1.0);
        prop_assert!(expected_ny(&q, m, n1, d) >= base);
    }

    #[test]
    fn aggregation_ignores_order_and_split(values in prop::collection::vec(-50.0..50.0f64, 2..60), cut in 0usize..60, seed in any::<u64>()) {
        let build = |vals: &[f64]| {
            let mut acc = Accumulator::default();
            for &v in vals {
                acc.push(v, Some(v.abs()), v > 0.0, 1.0);
            }
            acc
        };
        let mut shuffled = values.clone();
        let mut rng = DrawRng::new(seed, 0).rng();
        let order = srswor(values.len(), values.len(), &mut rng).unwrap();
        for (i, &k) in order.iter().enumerate() {
            shuffled[i] = values[k];
        }
        let cut = cut % values.len();
        let mut merged = build(&shuffled[..cut]);
        merged.merge(build(&shuffled[cut..]));
        let table = |acc: Accumulator| {
            let reference = build(&values);
            aggregate(&[("a".into(), "d".into(), acc), ("ref".into(), "d".into(), reference)], "ref", 1.0)
        };
        prop_assert_eq!(table(build(&values)), table(merged));
    }

    #[test]
    fn srswor_gives_distinct_indices(n in 1usize..40, k in 0usize..40, seed in any::<u64>()) {
        let k = k % (n + 1);
        let picked = srswor(n, k, &mut DrawRng::new(seed, 1).rng()).unwrap();
        prop_assert_eq!(picked.len(), k);
        let mut sorted = picked.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), k);
        prop_assert!(picked.iter().all(|&i| i < n));
    }

    #[test]
    fn spread_is_balanced(total in 0usize..500, slots in 1usize..9) {
        let s = spread(total, slots);
        prop_assert_eq!(s.iter().sum::<usize>(), total);
        prop_assert!(s.windows(2).all(|w| w[0] >= w[1] && w[0] - w[1] <= 1));
    }

    #[test]
    fn constant_frame_murthy_total(c in 0.0..10.0f64, n in 2usize..12, init in 1usize..12, d in 0usize..4, seed in any::<u64>()) {
        let init = 1 + init % n;
        let pop = Population::from_psus(vec![vec![Unit::new(c, c, c); n]]).unwrap();
        let s = sequential_expand(Frame::whole_psu(&pop, 0), init, d, Condition::on(Variable::Y), &mut DrawRng::new(seed, 2).rng()).unwrap();
        let t = murthy_total(&s, |u| u.y).unwrap();
        prop_assert!((t - n as f64 * c).abs() <= 1e-9 * (1.0 + n as f64 * c));
        prop_assert!(s.n_final() <= n);
    }

    #[test]
    fn population_file_round_trip(cells in prop::collection::vec((0u8..5, 0u8..9, 0.0..3.0f64), 6), seed in any::<u64>()) {
        let units: Vec<Unit> = cells.iter().map(|&(y, x, z)| Unit::new(f64::from(y), f64::from(x), z)).collect();
        let pop = Population::with_layout(vec![units[..3].to_vec(), units[3..].to_vec()], 0, seed).unwrap();
        prop_assert_eq!(parse_population(&render_population(&pop)).unwrap(), pop);
    }
}
