mod common;

use common::*;
use coreset_core::assignment::{
    assignment_cost, optimal_assignment, optimal_assignment_by_enumeration, wcost,
};
use coreset_core::constraints::{
    encode_chromatic, encode_l_diversity, encode_lower_bounds, encode_per_color_caps, encode_upper_bounds,
    ColorMatrix, ConstraintFamily, LowerBoundMode, DEFAULT_ENUMERATION_CAP,
};
use coreset_core::coreset::{build_movement_coreset, merge, verify_certificate};
use coreset_core::geometry::{
    clustering_cost, expand, weighted_mean, CenterSet, Color, MetricConfig, PointSet, WeightedColoredPoint,
};
use coreset_core::io::{read_coreset, write_coreset};
use coreset_core::oracle::{brute_force_constrained_opt, OracleBudget};
use coreset_core::solver::{ptas_solve, SolveOptions};
use coreset_core::stream::{process_stream, StreamConfig};
use proptest::prelude::*;

type Raw = Vec<(f64, f64, u64, Color)>;

fn raw_points(max: usize, max_weight: u64, colors: Color) -> impl Strategy<Value = Raw> {
    prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64, 1..=max_weight, 0..colors), 1..=max)
}

fn raw_centers(max: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-12.0..12.0f64, -12.0..12.0f64), 1..=max)
}

fn set(raw: &Raw) -> PointSet {
    let entries = raw
        .iter()
        .map(|&(x, y, w, c)| WeightedColoredPoint::new(pt(&[x, y]), w, c))
        .collect();
    PointSet::from_entries(2, entries).unwrap()
}

fn centers(raw: &[(f64, f64)]) -> CenterSet {
    CenterSet::new(raw.iter().map(|&(x, y)| pt(&[x, y])).collect()).unwrap()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn metric() -> impl Strategy<Value = MetricConfig> {
    prop_oneof![Just(MetricConfig::K_MEDIAN), Just(MetricConfig::K_MEANS)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cost_matches_reference(raw in raw_points(20, 4, 1), c in raw_centers(4), m in 1u32..=3) {
        let cfg = MetricConfig::general(m).unwrap();
        let p = set(&raw);
        prop_assert!(close(clustering_cost(&p, &centers(&c), cfg).unwrap(), reference_cost(&p, &centers(&c), m)));
    }

    #[test]
    fn extra_center_never_raises_cost(raw in raw_points(20, 4, 1), c in raw_centers(4), extra in (-12.0..12.0f64, -12.0..12.0f64), cfg in metric()) {
        let p = set(&raw);
        let mut more = c.clone();
        more.push(extra);
        prop_assert!(clustering_cost(&p, &centers(&more), cfg).unwrap() <= clustering_cost(&p, &centers(&c), cfg).unwrap());
    }

    #[test]
    fn cost_is_additive(a in raw_points(10, 4, 1), b in raw_points(10, 4, 1), c in raw_centers(3), cfg in metric()) {
        let mut both = a.clone();
        both.extend(&b);
        let c = centers(&c);
        let sum = clustering_cost(&set(&a), &c, cfg).unwrap() + clustering_cost(&set(&b), &c, cfg).unwrap();
        prop_assert!(close(clustering_cost(&set(&both), &c, cfg).unwrap(), sum));
    }

    #[test]
    fn variance_decomposition(raw in raw_points(20, 5, 1), c in (-12.0..12.0f64, -12.0..12.0f64)) {
        let p = set(&raw);
        let mu = weighted_mean(&p).unwrap();
        let at_mean = clustering_cost(&p, &CenterSet::new(vec![mu.clone()]).unwrap(), MetricConfig::K_MEANS).unwrap();
        let at_c = clustering_cost(&p, &centers(&[c]), MetricConfig::K_MEANS).unwrap();
        let shift = p.total_weight() as f64 * mu.dist_sq(&pt(&[c.0, c.1]));
        prop_assert!(close(at_c, at_mean + shift));
    }

    #[test]
    fn expansion_and_merging_preserve_cost(raw in raw_points(12, 4, 2), c in raw_centers(3), cfg in metric()) {
        let p = set(&raw);
        let c = centers(&c);
        let base = clustering_cost(&p, &c, cfg).unwrap();
        prop_assert_eq!(expand(&p).total_weight(), p.total_weight());
        prop_assert!(close(clustering_cost(&expand(&p), &c, cfg).unwrap(), base));
        prop_assert!(close(clustering_cost(&p.merged(), &c, cfg).unwrap(), base));
    }

    #[test]
    fn coreset_certificate_and_conservation(raw in raw_points(40, 3, 2), k in 1usize..=3, eps in 0.1..1.0f64, cfg in metric(), seed in any::<u64>()) {
        let p = set(&raw);
        let s = build_movement_coreset(&p, k, eps, cfg, seed).unwrap();
        let v = verify_certificate(&p, &s).unwrap();
        prop_assert!(v.ok(), "{:?}", v.problems);
        let cert = s.certificate.as_ref().unwrap();
        prop_assert!(cert.movement_cost <= cert.budget * (1.0 + 1e-9) + 1e-12);
        prop_assert_eq!(s.points.total_weight(), p.total_weight());
        prop_assert_eq!(s.points.color_masses(), p.color_masses());
        prop_assert!(s.len() <= p.merged().len());
    }

    #[test]
    fn coreset_bounds_cost_for_any_centers(raw in raw_points(30, 2, 2), c in raw_centers(2), cfg in metric(), seed in any::<u64>()) {
        let eps = 0.3;
        let p = set(&raw);
        let s = build_movement_coreset(&p, 2, eps, cfg, seed).unwrap();
        let c = centers(&c);
        let n = p.total_weight();
        for fam in [
            ConstraintFamily::unconstrained(c.len(), p.color_masses()).unwrap(),
            encode_upper_bounds(&vec![n; c.len()], n).unwrap(),
        ] {
            let a = optimal_assignment(&p, &c, &fam, cfg).unwrap().objective;
            let b = wcost(&s, &c, &fam, cfg).unwrap();
            prop_assert!((a - b).abs() <= eps * a * (1.0 + 1e-9) + 1e-12, "{} vs {}", a, b);
        }
    }

    #[test]
    fn merged_coresets_certify_the_union(a in raw_points(15, 3, 2), b in raw_points(15, 3, 2), seed in any::<u64>()) {
        let (pa, pb) = (set(&a), set(&b));
        let mut all = a.clone();
        all.extend(&b);
        let sa = build_movement_coreset(&pa, 2, 0.5, MetricConfig::K_MEANS, seed).unwrap();
        let sb = build_movement_coreset(&pb, 2, 0.5, MetricConfig::K_MEANS, seed ^ 1).unwrap();
        let m = merge(&sa, &sb).unwrap();
        let v = verify_certificate(&set(&all), &m).unwrap();
        prop_assert!(v.ok(), "{:?}", v.problems);
    }

    #[test]
    fn unconstrained_assignment_is_nearest_center(raw in raw_points(20, 4, 2), c in raw_centers(4), cfg in metric()) {
        let p = set(&raw);
        let c = centers(&c);
        let fam = ConstraintFamily::unconstrained(c.len(), p.color_masses()).unwrap();
        let a = optimal_assignment(&p, &c, &fam, cfg).unwrap();
        prop_assert!(close(a.total_cost, clustering_cost(&p, &c, cfg).unwrap()));
    }

    #[test]
    fn flows_are_integral_and_conserve_weight(raw in raw_points(12, 4, 2), c in raw_centers(3), lb in 0u64..4, cfg in metric()) {
        let p = set(&raw);
        let c = centers(&c);
        let n = p.total_weight();
        let lb = lb.min(n / c.len() as u64);
        let fam = encode_lower_bounds(&vec![lb; c.len()], n, LowerBoundMode::Strict).unwrap();
        let a = optimal_assignment(&p, &c, &fam, cfg).unwrap();
        prop_assert!(close(assignment_cost(&a, &p, &c, cfg).unwrap(), a.total_cost));
        prop_assert_eq!(a.realized_matrix.col_sums(), p.color_masses().to_vec());
        prop_assert!(a.realized_matrix.row_sums().iter().all(|&r| r >= lb));
    }

    #[test]
    fn weighted_matches_expanded(raw in raw_points(6, 3, 2), c in raw_centers(3), cfg in metric()) {
        let p = set(&raw);
        let c = centers(&c);
        let fam = encode_l_diversity(c.len(), 2, p.color_masses());
        if let Ok(fam) = fam {
            let w = optimal_assignment(&p, &c, &fam, cfg).map(|a| a.objective);
            let e = optimal_assignment(&expand(&p), &c, &fam, cfg).map(|a| a.objective);
            match (w, e) {
                (Ok(w), Ok(e)) => prop_assert!(close(w, e)),
                (w, e) => prop_assert_eq!(w.is_err(), e.is_err()),
            }
        }
    }

    #[test]
    fn specialized_flows_match_enumeration(raw in raw_points(8, 2, 2), c in raw_centers(3), cap in 1u64..4, cfg in metric()) {
        let p = set(&raw);
        let c = centers(&c);
        let k = c.len();
        let masses = p.color_masses().to_vec();
        let n = p.total_weight();
        let mut families = vec![
            encode_upper_bounds(&vec![n.div_ceil(k as u64) + cap; k], n),
            encode_lower_bounds(&vec![cap.min(n / k as u64); k], n, LowerBoundMode::OpenCenters),
            encode_chromatic(k, &masses),
        ];
        let caps = ColorMatrix::from_rows(&vec![vec![cap + 1; masses.len()]; k]).unwrap();
        families.push(encode_per_color_caps(caps, &masses));
        for fam in families.into_iter().flatten() {
            let direct = optimal_assignment(&p, &c, &fam, cfg).map(|a| a.objective);
            let slow = optimal_assignment_by_enumeration(&p, &c, &fam, cfg, DEFAULT_ENUMERATION_CAP).map(|a| a.objective);
            match (direct, slow) {
                (Ok(a), Ok(b)) => prop_assert!(close(a, b), "{:?}: {} vs {}", fam.kind, a, b),
                (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
            }
        }
    }

    #[test]
    fn looser_bounds_never_cost_more(raw in raw_points(12, 3, 1), c in raw_centers(3), u in 1u64..6, cfg in metric()) {
        let p = set(&raw);
        let c = centers(&c);
        let n = p.total_weight();
        let k = c.len() as u64;
        let tight = n.div_ceil(k) + u / 2;
        let a = optimal_assignment(&p, &c, &encode_upper_bounds(&vec![tight; c.len()], n).unwrap(), cfg).unwrap();
        let b = optimal_assignment(&p, &c, &encode_upper_bounds(&vec![tight + u; c.len()], n).unwrap(), cfg).unwrap();
        prop_assert!(b.objective <= a.objective * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn enumerate_is_the_admitted_set(masses in prop::collection::vec(0u64..3, 1..=2), k in 1usize..=3, l in 1u64..=3) {
        prop_assume!(masses.iter().sum::<u64>() > 0);
        let Ok(fam) = encode_l_diversity(k, l, &masses) else { return Ok(()); };
        let listed = fam.enumerate(DEFAULT_ENUMERATION_CAP).unwrap();
        let mut brute = Vec::new();
        all_matrices(&masses, k, &mut brute);
        let mut admitted: Vec<ColorMatrix> = brute.into_iter().filter(|m| fam.admits(m)).collect();
        admitted.sort();
        let mut listed_sorted = listed.clone();
        listed_sorted.sort();
        prop_assert_eq!(&listed, &listed_sorted);
        prop_assert_eq!(listed_sorted, admitted);
        for m in &listed {
            prop_assert_eq!(m.col_sums(), masses.clone());
        }
    }

    #[test]
    fn stream_summary_certifies_input_in_any_order(raw in raw_points(60, 2, 2), block in 3usize..12, seed in any::<u64>(), rot in 0usize..60) {
        let p = set(&raw);
        let mut rotated = raw.clone();
        let r = rot % rotated.len();
        rotated.rotate_left(r);
        let q = set(&rotated);
        for input in [&p, &q] {
            let cfg = StreamConfig::new(block, 2, 0.5, MetricConfig::K_MEANS, seed).unwrap().tracking(true);
            let s = process_stream(input.iter().cloned().map(Ok), cfg).unwrap();
            let v = verify_certificate(input, &s).unwrap();
            prop_assert!(v.ok(), "{:?}", v.problems);
            prop_assert_eq!(s.points.total_weight(), p.total_weight());
        }
    }

    #[test]
    fn coreset_text_round_trips(raw in raw_points(20, 5, 3), seed in any::<u64>()) {
        let s = build_movement_coreset(&set(&raw), 2, 0.5, MetricConfig::K_MEANS, seed).unwrap();
        let mut buf = Vec::new();
        write_coreset(&mut buf, &s).unwrap();
        let back = read_coreset(buf.as_slice()).unwrap();
        prop_assert_eq!(back.points, s.points);
        prop_assert_eq!(back.k, s.k);
        prop_assert_eq!(back.eps, s.eps);
    }
}

/// Every `k x l` matrix with the given column sums.
fn all_matrices(masses: &[u64], k: usize, out: &mut Vec<ColorMatrix>) {
    fn fill(masses: &[u64], k: usize, col: usize, cur: &mut Vec<Vec<u64>>, out: &mut Vec<ColorMatrix>) {
        if col == masses.len() {
            out.push(ColorMatrix::from_rows(cur).unwrap());
            return;
        }
        let mut split = vec![0u64; k];
        splits(masses[col], 0, &mut split, &mut |s| {
            for (row, &v) in cur.iter_mut().zip(s) {
                row.push(v);
            }
            fill(masses, k, col + 1, cur, out);
            for row in cur.iter_mut() {
                row.pop();
            }
        });
    }
    fn splits(left: u64, i: usize, s: &mut Vec<u64>, f: &mut dyn FnMut(&[u64])) {
        if i + 1 == s.len() {
            s[i] = left;
            f(s);
            return;
        }
        for v in 0..=left {
            s[i] = v;
            splits(left - v, i + 1, s, f);
        }
    }
    fill(masses, k, 0, &mut vec![Vec::new(); k], out);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn oracle_is_a_lower_bound(raw in raw_points(7, 1, 2), lb in 0u64..3, eps in prop_oneof![Just(0.5), Just(1.0)]) {
        let p = set(&raw);
        let n = p.total_weight();
        let fam = encode_lower_bounds(&[lb.min(n / 2); 2], n, LowerBoundMode::Strict).unwrap();
        let opt = brute_force_constrained_opt(&p, &fam, MetricConfig::K_MEANS, &OracleBudget::CONSTRAINED).unwrap();
        let lloyd_cost = optimal_assignment(&p, &lloyd(&p, 2, 10), &fam, MetricConfig::K_MEANS).unwrap().objective;
        prop_assert!(opt.cost <= lloyd_cost * (1.0 + 1e-9) + 1e-12);
        let solved = ptas_solve(&p, &fam, eps, MetricConfig::K_MEANS, &SolveOptions::default()).unwrap();
        prop_assert!(opt.cost <= solved.coreset_cost * (1.0 + 1e-9) + 1e-12);
        prop_assert!(fam.admits(&opt.realized_matrix) || fam.is_size_family());
    }

    #[test]
    fn solver_is_deterministic(raw in raw_points(6, 2, 1)) {
        let p = set(&raw);
        let fam = ConstraintFamily::unconstrained(2, p.color_masses()).unwrap();
        let one = SolveOptions { jobs: Some(1), ..SolveOptions::default() };
        let a = ptas_solve(&p, &fam, 1.0, MetricConfig::K_MEANS, &SolveOptions::default()).unwrap();
        let b = ptas_solve(&p, &fam, 1.0, MetricConfig::K_MEANS, &one).unwrap();
        prop_assert_eq!(a, b);
    }
}
