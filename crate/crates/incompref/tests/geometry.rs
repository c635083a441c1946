use approx::assert_abs_diff_eq;
use incompref::geometry::*;
use proptest::prelude::*;

fn bx(lo: &[f64], hi: &[f64]) -> BoxSet {
    BoxSet::new(lo.to_vec(), hi.to_vec()).unwrap()
}

// Brute-force Hausdorff distance on a lattice over both boxes.
fn lattice_hausdorff(a: &BoxSet, b: &BoxSet, n: usize) -> f64 {
    let pts = |s: &BoxSet| -> Vec<[f64; 2]> {
        let mut v = vec![];
        for i in 0..=n {
            for j in 0..=n {
                let x = s.lo()[0] + (s.hi()[0] - s.lo()[0]) * i as f64 / n as f64;
                let y = s.lo()[1] + (s.hi()[1] - s.lo()[1]) * j as f64 / n as f64;
                v.push([x, y]);
            }
        }
        v
    };
    let (pa, pb) = (pts(a), pts(b));
    let d = |p: &[f64; 2], q: &[f64; 2]| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
    let side = |xs: &[[f64; 2]], ys: &[[f64; 2]]| {
        xs.iter().map(|p| ys.iter().map(|q| d(p, q)).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max)
    };
    side(&pa, &pb).max(side(&pb, &pa))
}

#[test]
fn rejects_inverted_and_nan_bounds() {
    assert!(BoxSet::new(vec![1.0], vec![0.0]).is_err());
    assert!(BoxSet::new(vec![f64::NAN], vec![0.0]).is_err());
    assert!(BoxSet::new(vec![0.0, 1.0], vec![1.0]).is_err());
    assert!(BoxSet::new(vec![], vec![]).is_err());
}

#[test]
fn disjoint_intersection_is_empty_not_error() {
    let a = bx(&[0.0, 0.0], &[1.0, 1.0]);
    let b = bx(&[2.0, 0.0], &[3.0, 1.0]);
    assert!(intersect(&a, &b).unwrap().is_empty());
    assert!(minkowski_sum_maybe(&MaybeBox::Empty, &MaybeBox::Box(a)).is_err());
}

#[test]
fn dimension_mismatch_is_reported() {
    let a = bx(&[0.0], &[1.0]);
    let b = bx(&[0.0, 0.0], &[1.0, 1.0]);
    assert!(matches!(minkowski_sum(&a, &b), Err(incompref::Error::DimensionMismatch(1, 2))));
    assert!(hausdorff(&a, &b).is_err());
}

#[test]
fn hausdorff_matches_lattice_search() {
    let cases = [
        (bx(&[0.0, 0.0], &[1.0, 1.0]), bx(&[0.5, 0.2], &[2.0, 0.7])),
        (bx(&[0.0, 0.0], &[1.0, 2.0]), bx(&[3.0, -1.0], &[3.5, 0.0])),
        (bx(&[0.0, 1.0], &[1.0, 2.0]), bx(&[0.25, 1.25], &[0.5, 1.5])),
    ];
    for (a, b) in &cases {
        let exact = hausdorff(a, b).unwrap();
        let brute = lattice_hausdorff(a, b, 40);
        assert_abs_diff_eq!(exact, brute, epsilon = 0.08);
    }
}

#[test]
fn hausdorff_of_shifted_interval_is_the_shift() {
    let a = BoxSet::interval(0.0, 1.0).unwrap();
    let b = BoxSet::interval(0.3, 1.3).unwrap();
    assert_abs_diff_eq!(hausdorff(&a, &b).unwrap(), 0.3, epsilon = 1e-15);
}

#[test]
fn unbounded_boxes_with_shared_infinite_side() {
    let a = bx(&[0.0, 1.0], &[1.0, f64::INFINITY]);
    let b = bx(&[0.0, 1.5], &[2.0, f64::INFINITY]);
    // b sticks out by 1 on the first axis; a sticks out by 0.5 on the second.
    assert_abs_diff_eq!(hausdorff(&a, &b).unwrap(), 1.0, epsilon = 1e-15);
    let c = bx(&[0.5, 1.5], &[1.0, f64::INFINITY]);
    // The corner (0, 1) of a is sqrt(0.5^2 + 0.5^2) from c.
    assert_abs_diff_eq!(hausdorff(&a, &c).unwrap(), 0.5f64.sqrt(), epsilon = 1e-15);
}

#[test]
fn hull_of_nested_family_is_largest_member() {
    let boxes = vec![bx(&[0.0], &[1.0]), bx(&[-1.0], &[2.0]), bx(&[0.5], &[0.6])];
    let h = bounding_hull(&boxes, true).unwrap();
    assert_eq!(h, boxes[1]);
    assert!(bounding_hull(&[], false).is_err());
}

#[test]
fn projection_clamps() {
    let b = bx(&[0.0, 0.0], &[1.0, 1.0]);
    assert_eq!(project(&[2.0, -1.0], &b).unwrap(), vec![1.0, 0.0]);
    assert_eq!(project(&[0.5, 0.5], &b).unwrap(), vec![0.5, 0.5]);
}

fn arb_box() -> impl Strategy<Value = BoxSet> {
    prop::collection::vec((-5.0f64..5.0, 0.0f64..3.0), 2).prop_map(|v| {
        BoxSet::new(v.iter().map(|(l, _)| *l).collect(), v.iter().map(|(l, w)| l + w).collect()).unwrap()
    })
}

proptest! {
    #[test]
    fn hausdorff_is_a_metric(a in arb_box(), b in arb_box(), c in arb_box()) {
        let ab = hausdorff(&a, &b).unwrap();
        let ba = hausdorff(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
        let ac = hausdorff(&a, &c).unwrap();
        let cb = hausdorff(&c, &b).unwrap();
        prop_assert!(ab <= ac + cb + 1e-12);
    }

    #[test]
    fn minkowski_sum_is_commutative_and_widths_add(a in arb_box(), b in arb_box()) {
        let s = minkowski_sum(&a, &b).unwrap();
        prop_assert_eq!(&s, &minkowski_sum(&b, &a).unwrap());
        for k in 0..2 {
            prop_assert!((s.widths()[k] - a.widths()[k] - b.widths()[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn intersection_is_contained_in_both(a in arb_box(), b in arb_box()) {
        if let Some(i) = intersect(&a, &b).unwrap().into_option() {
            prop_assert!(i.is_subset_of(&a) && i.is_subset_of(&b));
        } else {
            // Some axis separates them.
            prop_assert!((0..2).any(|k| a.hi()[k] < b.lo()[k] || b.hi()[k] < a.lo()[k]));
        }
    }

    #[test]
    fn projection_is_nearest_vertex_or_inside(a in arb_box(), x in -8.0f64..8.0, y in -8.0f64..8.0) {
        let p = project(&[x, y], &a).unwrap();
        prop_assert!(a.contains_point(&p));
        let d = ((p[0] - x).powi(2) + (p[1] - y).powi(2)).sqrt();
        for v in a.vertices() {
            let dv = ((v[0] - x).powi(2) + (v[1] - y).powi(2)).sqrt();
            prop_assert!(d <= dv + 1e-12);
        }
    }
}
