//! End-to-end worked examples across modules.

mod common;

use common::*;
use coreset_core::assignment::{optimal_assignment, wcost};
use coreset_core::constraints::{
    encode_explicit, encode_lower_bounds, encode_outliers, ColorMatrix, ConstraintSpec, LowerBoundMode,
};
use coreset_core::coreset::{build_movement_coreset, verify_certificate};
use coreset_core::geometry::{clustering_cost, CenterSet, Color, MetricConfig, Point, PointSet, WeightedColoredPoint};
use coreset_core::oracle::{brute_force_constrained_opt, OracleBudget};
use coreset_core::solver::{ptas_solve, solve_with_transfer, Ingestion, SolveOptions};
use coreset_core::stream::{process_stream, StreamConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn line(xs: &[f64]) -> PointSet {
    PointSet::from_points(xs.iter().map(|&x| pt(&[x])).collect()).unwrap()
}

fn two_sites() -> PointSet {
    line(&[0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0])
}

#[test]
fn balanced_line_summary_is_two_weighted_points() {
    let p = two_sites();
    let s = build_movement_coreset(&p, 2, 0.5, MetricConfig::K_MEANS, 0).unwrap();
    let mut got: Vec<(f64, u64)> = s.points.iter().map(|e| (e.point.coords()[0], e.weight)).collect();
    got.sort_by(|a, b| a.0.total_cmp(&b.0));
    assert_eq!(got, vec![(0.0, 4), (1.0, 4)]);
    assert_eq!(s.certificate.as_ref().unwrap().movement_cost, 0.0);

    let fam = encode_lower_bounds(&[4, 4], 8, LowerBoundMode::Strict).unwrap();
    let c = CenterSet::new(vec![pt(&[0.0]), pt(&[1.0])]).unwrap();
    assert_eq!(wcost(&s, &c, &fam, MetricConfig::K_MEANS).unwrap(), 0.0);
}

#[test]
fn streamed_balanced_line_costs_nothing() {
    let p = two_sites();
    let config = StreamConfig::new(4, 2, 0.5, MetricConfig::K_MEANS, 1).unwrap();
    let s = process_stream(p.iter().cloned().map(Ok), config).unwrap();
    let fam = encode_lower_bounds(&[4, 4], 8, LowerBoundMode::Strict).unwrap();
    let c = CenterSet::new(vec![pt(&[0.0]), pt(&[1.0])]).unwrap();
    assert_eq!(wcost(&s, &c, &fam, MetricConfig::K_MEANS).unwrap(), 0.0);
}

#[test]
fn solver_finds_the_free_lower_bounded_clustering() {
    let p = two_sites();
    let fam = encode_lower_bounds(&[4, 4], 8, LowerBoundMode::Strict).unwrap();
    let r = ptas_solve(&p, &fam, 0.5, MetricConfig::K_MEANS, &SolveOptions::default()).unwrap();
    assert_eq!(r.coreset_cost, 0.0);
    let mut xs: Vec<f64> = r.centers.iter().map(|c| c.coords()[0]).collect();
    xs.sort_by(f64::total_cmp);
    assert_eq!(xs, vec![0.0, 1.0]);
}

#[test]
fn stream_summary_matches_costs_for_random_centers() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let p = PointSet::from_points(blobs(&mut rng, 200, 2).iter().map(|c| pt(c)).collect()).unwrap();
    let eps = 0.4;
    let config = StreamConfig::new(25, 2, eps, MetricConfig::K_MEANS, 3).unwrap().tracking(true);
    let s = process_stream(p.iter().cloned().map(Ok), config).unwrap();
    assert!(verify_certificate(&p, &s).unwrap().ok());
    let (lo, hi) = bounding_box(&p);
    for _ in 0..100 {
        let c = random_centers(&mut rng, 2, 2, lo, hi);
        let a = clustering_cost(&p, &c, MetricConfig::K_MEANS).unwrap();
        let b = clustering_cost(&s.points, &c, MetricConfig::K_MEANS).unwrap();
        assert!((a - b).abs() <= eps * a, "{a} vs {b}");
    }
}

/// Every point gets its own color, so a single `k x n` 0/1 matrix pins one
/// clustering; the constrained optimum is then that clustering's cost.
#[test]
fn own_color_per_point_pins_any_clustering() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for trial in 0..10 {
        let n = rng.random_range(3..=6);
        let k = 2;
        let coords: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.random_range(0.0..5.0), rng.random_range(0.0..5.0)])
            .collect();
        let labels: Vec<usize> = (0..n).map(|i| if i < 2 { i } else { rng.random_range(0..k) }).collect();
        let p = unit_set(2, &coords.iter().cloned().zip(0..n as Color).collect::<Vec<_>>());

        let mut target = ColorMatrix::zeros(k, n);
        for (j, &l) in labels.iter().enumerate() {
            target.set(l, j, 1);
        }
        let fam = encode_explicit(vec![target.clone()], p.color_masses()).unwrap();

        let mut want = 0.0;
        let mut centroids = Vec::new();
        for c in 0..k {
            let members: Vec<&Vec<f64>> = coords.iter().zip(&labels).filter(|(_, &l)| l == c).map(|(x, _)| x).collect();
            let mu: Vec<f64> = (0..2).map(|t| members.iter().map(|x| x[t]).sum::<f64>() / members.len() as f64).collect();
            want += members.iter().map(|x| pt(x).dist_sq(&pt(&mu))).sum::<f64>();
            centroids.push(pt(&mu));
        }

        let cfg = MetricConfig::K_MEANS;
        let at_centroids = optimal_assignment(&p, &CenterSet::new(centroids).unwrap(), &fam, cfg).unwrap();
        assert_eq!(at_centroids.realized_matrix, target);
        assert!((at_centroids.objective - want).abs() <= 1e-9 * want.max(1.0));

        let opt = brute_force_constrained_opt(&p, &fam, cfg, &OracleBudget::CONSTRAINED).unwrap();
        assert!((opt.cost - want).abs() <= 1e-9 * want.max(1.0), "trial {trial}");

        let solved = ptas_solve(&p, &fam, 1.0, cfg, &SolveOptions::default()).unwrap();
        assert_eq!(solved.assignment.realized_matrix, target);
        assert!(solved.coreset_cost >= want - 1e-9 && solved.coreset_cost <= 2.0 * want + 1e-9);
    }
}

#[test]
fn must_link_pairs_share_a_cluster() {
    let p = line(&[0.0, 10.0, 0.2, 9.8, 5.0]);
    let spec: ConstraintSpec = "kind=must_link; links=0-1".parse().unwrap();
    let (colored, fam) = spec.instantiate(2, &p).unwrap();
    let r = ptas_solve(&colored, &fam, 1.0, MetricConfig::K_MEANS, &SolveOptions::default()).unwrap();
    let owner = |i: usize| r.assignment.flows.iter().find(|f| f.entry == i).unwrap().center;
    assert_eq!(owner(0), owner(1));
}

#[test]
fn cannot_link_pairs_are_separated() {
    let p = line(&[0.0, 0.1, 5.0, 5.1]);
    let spec: ConstraintSpec = "kind=cannot_link; links=0-1; coloring=distinct".parse().unwrap();
    let (colored, fam) = spec.instantiate(2, &p).unwrap();
    let r = ptas_solve(&colored, &fam, 1.0, MetricConfig::K_MEANS, &SolveOptions::default()).unwrap();
    let owner = |i: usize| r.assignment.flows.iter().find(|f| f.entry == i).unwrap().center;
    assert_ne!(owner(0), owner(1));
}

#[test]
fn all_outliers_cost_nothing() {
    let p = line(&[0.0, 3.0, 7.0]);
    let fam = encode_outliers(1, 3, 3).unwrap();
    let c = CenterSet::new(vec![pt(&[0.0]); 4]).unwrap();
    assert_eq!(optimal_assignment(&p, &c, &fam, MetricConfig::K_MEANS).unwrap().objective, 0.0);
}

#[test]
fn chromatic_two_by_two() {
    let p = unit_set(
        2,
        &[(vec![0.0, 0.0], 0), (vec![1.0, 0.0], 0), (vec![0.0, 0.0], 1), (vec![1.0, 0.0], 1)],
    );
    let fam = "kind=chromatic".parse::<ConstraintSpec>().unwrap().instantiate(2, &p).unwrap().1;
    let cfg = MetricConfig::K_MEANS;
    let opt = brute_force_constrained_opt(&p, &fam, cfg, &OracleBudget::CONSTRAINED).unwrap();
    let at = optimal_assignment(&p, &opt.centers, &fam, cfg).unwrap();
    assert!((at.objective - opt.cost).abs() < 1e-12);
    assert!(at.realized_matrix.to_rows().iter().flatten().all(|&v| v <= 1));
    let solved = ptas_solve(&p, &fam, 1.0, cfg, &SolveOptions::default()).unwrap();
    assert!(solved.coreset_cost <= 2.0 * opt.cost + 1e-12);
}

#[test]
fn transfer_on_weighted_sites_stays_within_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let sites = [[0.0, 0.0], [0.5, 0.2], [4.0, 4.0], [4.2, 3.9]];
    let entries: Vec<WeightedColoredPoint> = (0..10)
        .map(|_| WeightedColoredPoint::unit(Point::new(sites[rng.random_range(0..4)].to_vec()).unwrap()))
        .collect();
    let p = PointSet::from_entries(2, entries).unwrap();
    let fam = "kind=upper_bounds; bounds=6".parse::<ConstraintSpec>().unwrap().instantiate(2, &p).unwrap().1;
    let cfg = MetricConfig::K_MEANS;
    let opt = brute_force_constrained_opt(&p, &fam, cfg, &OracleBudget::CONSTRAINED).unwrap().cost;
    for ingestion in [Ingestion::Offline, Ingestion::Streamed { block_size: 3 }] {
        let r = solve_with_transfer(&p, &fam, 0.6, cfg, ingestion, 5, &SolveOptions::default()).unwrap();
        assert!(r.original_cost.unwrap() <= 1.6 * opt + 1e-9);
    }
}
