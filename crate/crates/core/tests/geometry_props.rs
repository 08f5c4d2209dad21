use std::f64::consts::TAU;

use parklot_core::geometry::{intersection_area, iou, validate_polygon, BoundingBox, Point, Polygon};
use proptest::prelude::*;

/// Winding number from the summed angle the ring subtends at `p`.
fn winding_angle(p: Point, ring: &[Point]) -> i64 {
    let mut total = 0.0;
    for k in 0..ring.len() {
        let a = ring[k];
        let b = ring[(k + 1) % ring.len()];
        let (ax, ay) = (a.x - p.x, a.y - p.y);
        let (bx, by) = (b.x - p.x, b.y - p.y);
        total += (ax * by - ay * bx).atan2(ax * bx + ay * by);
    }
    (total / TAU).round() as i64
}

fn closed(mut ring: Vec<Point>) -> Vec<Point> {
    ring.push(ring[0]);
    ring
}

/// Star-shaped ring around `c`: sorted distinct angles, radii in [r0, r1].
fn star(c: Point, angles: &[f64], radii: &[f64]) -> Vec<Point> {
    let mut a: Vec<f64> = angles.to_vec();
    a.sort_by(f64::total_cmp);
    a.iter()
        .zip(radii)
        .map(|(t, r)| Point::new(c.x + r * t.cos(), c.y + r * t.sin()))
        .collect()
}

fn star_strategy() -> impl Strategy<Value = Vec<Point>> {
    (3usize..=12)
        .prop_flat_map(|n| {
            (
                (-200.0..200.0f64, -200.0..200.0f64),
                prop::collection::vec(0.0..TAU, n),
                prop::collection::vec(5.0..100.0f64, n),
            )
        })
        .prop_filter_map("degenerate star", |((cx, cy), angles, radii)| {
            let mut sorted = angles.clone();
            sorted.sort_by(f64::total_cmp);
            let gaps_ok = sorted.windows(2).all(|w| w[1] - w[0] > 1e-3)
                && TAU - (sorted[sorted.len() - 1] - sorted[0]) > 1e-3;
            let ring = star(Point::new(cx, cy), &angles, &radii);
            (gaps_ok && validate_polygon(closed(ring.clone())).is_ok()).then_some(ring)
        })
}

fn rotate(ring: &[Point], k: usize) -> Vec<Point> {
    let k = k % ring.len();
    ring[k..].iter().chain(&ring[..k]).copied().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn pip_matches_winding(ring in star_strategy(), px in -320.0..320.0f64, py in -320.0..320.0f64) {
        let poly = Polygon::new(closed(ring.clone())).unwrap();
        let p = Point::new(px, py);
        prop_assume!(poly.distance_to_boundary(p) > 1e-9);
        prop_assert_eq!(poly.contains(p), winding_angle(p, &ring) != 0);
    }

    #[test]
    fn pip_invariant_under_rotation_and_reversal(
        ring in star_strategy(),
        k in 0usize..12,
        px in -320.0..320.0f64,
        py in -320.0..320.0f64,
    ) {
        let p = Point::new(px, py);
        let base = Polygon::new(closed(ring.clone())).unwrap();
        prop_assume!(base.distance_to_boundary(p) > 1e-9);
        let rotated = Polygon::new(closed(rotate(&ring, k))).unwrap();
        let mut rev = ring.clone();
        rev.reverse();
        let reversed = Polygon::new(closed(rev)).unwrap();
        prop_assert_eq!(base.contains(p), rotated.contains(p));
        prop_assert_eq!(base.contains(p), reversed.contains(p));
    }

    #[test]
    fn small_perturbation_keeps_parity(
        ring in star_strategy(),
        px in -320.0..320.0f64,
        py in -320.0..320.0f64,
        dx in -1e-6..1e-6f64,
        dy in -1e-6..1e-6f64,
    ) {
        let poly = Polygon::new(closed(ring)).unwrap();
        let p = Point::new(px, py);
        prop_assume!(poly.distance_to_boundary(p) > 1e-3);
        prop_assert_eq!(poly.contains(p), poly.contains(Point::new(px + dx, py + dy)));
    }

    #[test]
    fn iou_properties(
        a in (0.0..100.0f64, 0.0..100.0f64, 0.5..50.0f64, 0.5..50.0f64),
        b in (0.0..100.0f64, 0.0..100.0f64, 0.5..50.0f64, 0.5..50.0f64),
    ) {
        let ba = BoundingBox::new(a.0, a.1, a.0 + a.2, a.1 + a.3).unwrap();
        let bb = BoundingBox::new(b.0, b.1, b.0 + b.2, b.1 + b.3).unwrap();
        let v = iou(&ba, &bb);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert!((v - iou(&bb, &ba)).abs() < 1e-15);
        prop_assert!((iou(&ba, &ba) - 1.0).abs() < 1e-12);
        let disjoint = ba.x_max() < bb.x_min() || bb.x_max() < ba.x_min()
            || ba.y_max() < bb.y_min() || bb.y_max() < ba.y_min();
        if disjoint {
            prop_assert_eq!(v, 0.0);
        }
        // Independent area oracle.
        let w = (ba.x_max().min(bb.x_max()) - ba.x_min().max(bb.x_min())).max(0.0);
        let h = (ba.y_max().min(bb.y_max()) - ba.y_min().max(bb.y_min())).max(0.0);
        let inter = w * h;
        let expect = inter / (ba.area() + bb.area() - inter);
        prop_assert!((v - expect).abs() < 1e-12);
    }

    #[test]
    fn intersection_area_matches_convex_clip(
        c1 in (-50.0..50.0f64, -50.0..50.0f64), r1 in 5.0..60.0f64,
        a1 in prop::collection::vec(0.0..TAU, 3..9),
        c2 in (-50.0..50.0f64, -50.0..50.0f64), r2 in 5.0..60.0f64,
        a2 in prop::collection::vec(0.0..TAU, 3..9),
    ) {
        let p = star(Point::new(c1.0, c1.1), &a1, &vec![r1; a1.len()]);
        let q = star(Point::new(c2.0, c2.1), &a2, &vec![r2; a2.len()]);
        let (Ok(pp), Ok(qp)) = (Polygon::new(closed(p.clone())), Polygon::new(closed(q.clone()))) else {
            return Ok(());
        };
        prop_assume!(pp.area() > 1.0 && qp.area() > 1.0);
        let clip = shoelace(&clip_convex(&p, &q)).abs();
        let got = intersection_area(&pp, &qp);
        prop_assert!((got - clip).abs() <= 1e-6 * (1.0 + clip), "got {} clip {}", got, clip);
    }
}

fn shoelace(ring: &[Point]) -> f64 {
    let n = ring.len();
    if n < 3 {
        return 0.0;
    }
    (0..n)
        .map(|k| {
            let a = ring[k];
            let b = ring[(k + 1) % n];
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
        / 2.0
}

/// Sutherland–Hodgman: `subject` clipped by the convex counter-clockwise `clip`.
fn clip_convex(subject: &[Point], clip: &[Point]) -> Vec<Point> {
    let mut out = subject.to_vec();
    let n = clip.len();
    for k in 0..n {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[k], clip[(k + 1) % n]);
        let side = |p: Point| (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
        let input = std::mem::take(&mut out);
        for i in 0..input.len() {
            let cur = input[i];
            let prev = input[(i + input.len() - 1) % input.len()];
            let (sc, sp) = (side(cur), side(prev));
            if sc >= 0.0 {
                if sp < 0.0 {
                    out.push(lerp(prev, cur, sp / (sp - sc)));
                }
                out.push(cur);
            } else if sp >= 0.0 {
                out.push(lerp(prev, cur, sp / (sp - sc)));
            }
        }
    }
    out
}

fn lerp(a: Point, b: Point, t: f64) -> Point {
    Point::new(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t)
}

#[test]
fn vertex_on_ray_cases() {
    // Ray from (0,1) passes exactly through vertices (2,1) and (-2,1).
    let diamond = Polygon::new(closed(vec![
        Point::new(2.0, 1.0),
        Point::new(0.0, 3.0),
        Point::new(-2.0, 1.0),
        Point::new(0.0, -1.0),
    ]))
    .unwrap();
    assert!(diamond.contains(Point::new(0.0, 1.0)));
    assert!(!diamond.contains(Point::new(-3.0, 1.0)));
    assert!(!diamond.contains(Point::new(3.0, 1.0)));
    // Horizontal edge at the ray height.
    let notch = Polygon::new(closed(vec![
        Point::new(0.0, 0.0),
        Point::new(4.0, 0.0),
        Point::new(4.0, 2.0),
        Point::new(2.0, 2.0),
        Point::new(2.0, 1.0),
        Point::new(3.0, 1.0),
        Point::new(3.0, 0.5),
        Point::new(1.0, 0.5),
        Point::new(1.0, 2.0),
        Point::new(0.0, 2.0),
    ]))
    .unwrap();
    for (p, inside) in [
        ((0.5, 1.0), true),
        ((1.5, 1.0), false),
        ((3.5, 1.0), true),
        ((1.5, 0.25), true),
        ((2.5, 1.5), true),
    ] {
        let pt = Point::new(p.0, p.1);
        assert_eq!(notch.contains(pt), inside, "{pt}");
        assert_eq!(winding_angle(pt, notch.ring()) != 0, inside, "{pt}");
    }
}
