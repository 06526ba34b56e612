//! Invariants checked on randomly generated inputs.

use std::sync::Arc;

use proptest::prelude::*;
use tptkit::analysis::{exit_entrance_measures, rate_quadrature, time_quadratures, HOPF_TOLERANCE};
use tptkit::io::{read_field, write_scalar_field};
use tptkit::model::BoundingBox;
use tptkit::pde::{solve_backward_committor, solve_committor};
use tptkit::reactive::segment_states;
use tptkit::stats::ks_two_sample;
use tptkit::tpp::{sample_tpp, TppField};
use tptkit::{build_model, invariant_density, simulate, Grid, ModelDescriptor, Point, Region, ScalarField};

#[derive(Clone, Copy, Debug, PartialEq)]
enum Label {
    A,
    B,
    Theta,
}

/// Stopping times straight from their definitions, by repeated searching.
/// Each entry: (a_plus, a_minus, b_plus, b_minus, next_a_plus).
fn oracle_segments(labels: &[Label]) -> Vec<(usize, usize, usize, usize, Option<usize>)> {
    let first_after = |from: usize, l: Label| (from..labels.len()).find(|&i| labels[i] == l);
    let last_before = |until: usize, l: Label| (0..until).rev().find(|&i| labels[i] == l);
    let mut out = Vec::new();
    let Some(mut a_plus) = first_after(0, Label::A) else {
        return out;
    };
    while let Some(b_plus) = first_after(a_plus, Label::B) {
        let a_minus = last_before(b_plus, Label::A).expect("a_plus precedes b_plus");
        let next = first_after(b_plus, Label::A);
        let b_minus = last_before(next.unwrap_or(labels.len()), Label::B).expect("b_plus exists");
        out.push((a_plus, a_minus, b_plus, b_minus, next));
        match next {
            Some(n) => a_plus = n,
            None => break,
        }
    }
    out
}

fn walk(steps: &[f64]) -> Vec<Point> {
    let mut x = -1.0f64;
    let mut v = vec![[x, 0.0]];
    for s in steps {
        x = (x + s).clamp(-2.0, 2.0);
        v.push([x, 0.0]);
    }
    v
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(64) })]

    #[test]
    fn segmentation_matches_definitions(steps in prop::collection::vec(-0.45f64..0.45, 0..3000)) {
        let a = Region::interval("A", -1.1, -0.9).unwrap();
        let b = Region::interval("B", 0.9, 1.1).unwrap();
        let states = walk(&steps);
        let labels: Vec<Label> = states
            .iter()
            .map(|x| if a.contains_closure(x) { Label::A } else if b.contains_closure(x) { Label::B } else { Label::Theta })
            .collect();
        let segs = segment_states(&states, &a, &b);
        let expected = oracle_segments(&labels);
        prop_assert_eq!(segs.len(), expected.len());
        for (k, (s, e)) in segs.iter().zip(&expected).enumerate() {
            prop_assert_eq!(s.k, k);
            prop_assert_eq!((s.idx_a_plus, s.idx_a_minus, s.idx_b_plus, s.idx_b_minus, s.next_a_plus), *e);
            prop_assert!(s.idx_a_plus <= s.idx_a_minus && s.idx_a_minus < s.idx_b_plus && s.idx_b_plus <= s.idx_b_minus);
            prop_assert_eq!(&s.path[..], &states[s.idx_a_minus..=s.idx_b_plus]);
            // strictly inside Θ between the exit from Ā and the entrance to B̄
            for l in &labels[s.idx_a_minus + 1..s.idx_b_plus] {
                prop_assert_eq!(*l, Label::Theta);
            }
        }
    }

    #[test]
    fn streams_are_reproducible(seed in any::<u64>(), stream in 0u64..1000) {
        let m = build_model(&ModelDescriptor::new("doublewell2d").beta(2.0)).unwrap();
        let x0 = [-1.0, 0.0];
        let t1 = simulate(&m, &x0, 1e-3, 200, seed, stream).unwrap();
        let t2 = simulate(&m, &x0, 1e-3, 200, seed, stream).unwrap();
        prop_assert_eq!(&t1.states, &t2.states);
        let t3 = simulate(&m, &x0, 1e-3, 200, seed, stream + 1).unwrap();
        prop_assert_ne!(&t1.states, &t3.states);
    }

    #[test]
    fn reflecting_box_is_never_left(x0 in -2.9f64..3.9, seed in any::<u64>()) {
        let m = build_model(&ModelDescriptor::new("brownian1d").beta(2.0)).unwrap();
        let t = simulate(&m, &[x0, 0.0], 1e-2, 2000, seed, 0).unwrap();
        let d = m.domain();
        prop_assert!(t.states.iter().all(|x| x[0] >= d.lo[0] && x[0] <= d.hi[0]));
    }

    #[test]
    fn field_dumps_round_trip(values in prop::collection::vec(-1e300f64..1e300, 3..60), lo in -10.0f64..0.0, len in 0.1f64..10.0) {
        let n = values.len();
        let g = Arc::new(Grid::new(&BoundingBox::new_1d(lo, lo + len), [n, 1]).unwrap());
        let f = ScalarField::new(g, values.clone());
        let mut buf = Vec::new();
        write_scalar_field(&mut buf, "f", &f).unwrap();
        let back = read_field(&buf[..]).unwrap();
        prop_assert_eq!(back.values, values);
        prop_assert_eq!(back.axes[0].n, n);
    }

    #[test]
    fn ks_statistic_is_symmetric(x in prop::collection::vec(-5.0f64..5.0, 5..200), y in prop::collection::vec(-5.0f64..5.0, 5..200)) {
        let r1 = ks_two_sample(&x, &y).unwrap();
        let r2 = ks_two_sample(&y, &x).unwrap();
        prop_assert!((r1.statistic - r2.statistic).abs() < 1e-15);
        prop_assert!((0.0..=1.0).contains(&r1.statistic));
        prop_assert!((0.0..=1.0).contains(&r1.p_value));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(12) })]

    /// Committor bounds and monotonicity, normalized Hopf-signed measures and
    /// the rate identity, over temperatures and region placements.
    #[test]
    fn one_dimensional_solutions(beta in 1.0f64..5.0, a_hi in -1.0f64..-0.7, b_lo in 0.6f64..1.0) {
        let m = build_model(&ModelDescriptor::new("doublewell1d").beta(beta)).unwrap();
        let a = Region::interval("A", a_hi - 0.3, a_hi).unwrap();
        let b = Region::interval("B", b_lo, b_lo + 0.3).unwrap();
        let g = Arc::new(Grid::with_regions(m.domain(), [1001, 1], &a, &b).unwrap());
        let rho = invariant_density(&m, &g).unwrap();
        let q = solve_committor(&m, &g).unwrap();
        let qt = solve_backward_committor(&m, &g, &rho).unwrap();
        let v = q.values();
        prop_assert!(v.iter().all(|&x| (-1e-12..=1.0 + 1e-12).contains(&x)));
        let theta: Vec<usize> = (0..g.len()).filter(|&i| g.is_theta(i) && g.point(i)[0] > a_hi && g.point(i)[0] < b_lo).collect();
        for w in theta.windows(2) {
            prop_assert!(v[w[1]] >= v[w[0]] - 1e-12);
        }
        let meas = exit_entrance_measures(&m, &rho, &q, &qt).unwrap();
        // η_A^- is normalized by its own mass, the others by the same ν
        prop_assert!((meas.eta_a_minus.total_mass() - 1.0).abs() < 1e-12);
        for mu in [&meas.eta_a_plus, &meas.eta_b_minus, &meas.eta_b_plus] {
            prop_assert!((mu.total_mass() - 1.0).abs() < 1e-2, "mass {}", mu.total_mass());
        }
        for mu in [&meas.eta_a_minus, &meas.eta_a_plus, &meas.eta_b_minus, &meas.eta_b_plus] {
            let max = mu.weights().iter().fold(0.0f64, |m, w| m.max(*w));
            prop_assert!(mu.weights().iter().all(|&w| w >= -HOPF_TOLERANCE * max), "{:?}", mu.weights());
        }
        prop_assert!((meas.raw_mass_b - meas.nu).abs() <= 1e-2 * meas.nu);
        let nu_r = rate_quadrature(&m, &rho, &q);
        prop_assert!((nu_r - meas.nu).abs() <= 1e-2 * meas.nu, "{} vs {}", nu_r, meas.nu);
        let t = time_quadratures(&rho, &q, &qt, nu_r);
        prop_assert!(t.c_ab < t.t_ab && t.c_ba < t.t_ba);
        prop_assert!((t.t_ab + t.t_ba - 1.0 / nu_r).abs() <= 1e-9 / nu_r);
    }

    /// Transition paths stay where `q > 0` and end in B̄.
    #[test]
    fn transition_paths_avoid_a(y0 in -0.85f64..0.85, seed in any::<u64>()) {
        use std::sync::OnceLock;
        static FIELD: OnceLock<TppField> = OnceLock::new();
        let field = FIELD.get_or_init(|| {
            let m = build_model(&ModelDescriptor::new("doublewell1d").beta(3.0)).unwrap();
            let a = Region::interval("A", -1.1, -0.9).unwrap();
            let b = Region::interval("B", 0.9, 1.1).unwrap();
            let g = Arc::new(Grid::with_regions(m.domain(), [1001, 1], &a, &b).unwrap());
            let q = solve_committor(&m, &g).unwrap();
            TppField::new(&m, &q).unwrap()
        });
        let p = sample_tpp(field, &[y0, 0.0], 1e-3, seed, 0, 10_000_000).unwrap();
        prop_assert!(p.reached_b());
        prop_assert_eq!(p.summary.a_visits, 0);
        prop_assert!(p.q[1..].iter().all(|&q| q > 0.0));
        prop_assert!(p.states.iter().all(|x| !field.region_a().contains_closure(x)));
        prop_assert!(field.region_b().contains_closure(p.states.last().unwrap()));
        prop_assert!(p.dt_eff.iter().all(|&dt| (0.0..=1e-3).contains(&dt)));
    }
}
