//! Planar geometry kernels shared by the tracker and the occupancy stage.
//!
//! Everything here works in image pixels with `f64` precision. The ground is
//! assumed flat and seen from straight above, so there is no z coordinate.

use std::fmt;

use thiserror::Error;

/// Distance below which a point is considered to lie on a polygon edge.
/// Classification of such points is not guaranteed to be stable.
pub const BOUNDARY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("non-finite coordinate in {0}")]
    NonFinite(&'static str),
    #[error("degenerate box: x_min {x_min} must be < x_max {x_max} and y_min {y_min} < y_max {y_max}")]
    DegenerateBox {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
    },
    #[error("invalid polygon: {}", join_violations(.0))]
    InvalidPolygon(Vec<PolygonViolation>),
}

fn join_violations(v: &[PolygonViolation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Axis-aligned box in corner form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, GeometryError> {
        if ![x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite("bounding box"));
        }
        if !(x_min < x_max && y_min < y_max) {
            return Err(GeometryError::DegenerateBox {
                x_min,
                y_min,
                x_max,
                y_max,
            });
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn from_center_size(center: Point, width: f64, height: f64) -> Result<Self, GeometryError> {
        Self::new(
            center.x - width / 2.0,
            center.y - height / 2.0,
            center.x + width / 2.0,
            center.y + height / 2.0,
        )
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn y_min(&self) -> f64 {
        self.y_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Width over height.
    pub fn aspect_ratio(&self) -> f64 {
        self.width() / self.height()
    }

    pub fn center(&self) -> Point {
        bbox_center(self)
    }

    pub fn corners(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Result<Self, GeometryError> {
        Self::new(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)
    }
}

/// Center point of a box, used as the vehicle position for slot assignment.
pub fn bbox_center(b: &BoundingBox) -> Point {
    Point::new((b.x_min + b.x_max) / 2.0, (b.y_min + b.y_max) / 2.0)
}

/// Intersection over union of two boxes, in `[0, 1]`.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let w = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let h = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = w * h;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Does the horizontal half-line from `origin` towards +x cross segment `a`-`b`?
///
/// Vertices are resolved with the half-open rule: an endpoint lying exactly at
/// the ray's height counts only when it is the lower endpoint of the segment.
/// Horizontal segments never count. Summed over a closed polygon this gives
/// each boundary crossing exactly once.
pub fn ray_intersects_segment(origin: Point, a: Point, b: Point) -> bool {
    let (lo, hi) = if a.y <= b.y { (a, b) } else { (b, a) };
    if !(lo.y <= origin.y && origin.y < hi.y) {
        return false;
    }
    // Sign of the cross product tells which side of the upward edge the
    // origin lies on; left of it means the crossing is strictly ahead.
    let cross = (hi.x - lo.x) * (origin.y - lo.y) - (hi.y - lo.y) * (origin.x - lo.x);
    cross > 0.0
}

/// Ray-casting point-in-polygon test with a fresh crossing count per call.
///
/// Points within [`BOUNDARY_TOLERANCE`] of an edge may land on either side.
pub fn point_in_polygon(p: Point, poly: &Polygon) -> bool {
    let crossings = poly
        .edges()
        .filter(|(a, b)| ray_intersects_segment(p, *a, *b))
        .count();
    crossings % 2 == 1
}

/// Shortest distance from `p` to segment `a`-`b`.
pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len_sq = dx * dx + dy * dy;
    if len_sq == 0.0 {
        return p.distance(&a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len_sq).clamp(0.0, 1.0);
    p.distance(&Point::new(a.x + t * dx, a.y + t * dy))
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn within_span(a: Point, b: Point, p: Point) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed-segment intersection test, touching and collinear overlap included.
pub fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && within_span(q1, q2, p1))
        || (d2 == 0.0 && within_span(q1, q2, p2))
        || (d3 == 0.0 && within_span(p1, p2, q1))
        || (d4 == 0.0 && within_span(p1, p2, q2))
}

/// Adjacent edges `a-b` and `b-c` overlap beyond their shared vertex when the
/// path doubles back on itself.
fn adjacent_edges_overlap(a: Point, b: Point, c: Point) -> bool {
    if orient(a, b, c) != 0.0 {
        return false;
    }
    let dot = (a.x - b.x) * (c.x - b.x) + (a.y - b.y) * (c.y - b.y);
    dot > 0.0
}

/// One reason a vertex list is not a usable slot polygon.
#[derive(Debug, Clone, PartialEq)]
pub enum PolygonViolation {
    NonFinite { index: usize },
    TooFewVertices { distinct: usize },
    NotClosed { index: usize },
    DuplicateVertex { index: usize },
    SelfIntersection { edge_a: usize, edge_b: usize },
    ZeroArea,
}

impl fmt::Display for PolygonViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NonFinite { index } => write!(f, "vertex {index}: non-finite coordinate"),
            Self::TooFewVertices { distinct } => {
                write!(f, "too few vertices: {distinct} distinct, need at least 3")
            }
            Self::NotClosed { index } => {
                write!(f, "vertex {index}: not closed (last vertex differs from vertex 0)")
            }
            Self::DuplicateVertex { index } => {
                write!(f, "vertex {index}: duplicate consecutive vertex")
            }
            Self::SelfIntersection { edge_a, edge_b } => write!(
                f,
                "self-intersection between edge at vertex {edge_a} and edge at vertex {edge_b}"
            ),
            Self::ZeroArea => write!(f, "zero area"),
        }
    }
}

/// A simple closed polygon. The vertex list always repeats the first vertex
/// at the end.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl Polygon {
    /// Validates `vertices` (closing vertex included).
    pub fn new(vertices: Vec<Point>) -> Result<Self, GeometryError> {
        validate_polygon(vertices).map_err(GeometryError::InvalidPolygon)
    }

    /// All vertices, closing vertex included.
    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    /// Vertices without the repeated closing vertex.
    pub fn ring(&self) -> &[Point] {
        &self.vertices[..self.vertices.len() - 1]
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        self.vertices.windows(2).map(|w| (w[0], w[1]))
    }

    /// Positive for counter-clockwise rings (y up).
    pub fn signed_area(&self) -> f64 {
        shoelace(self.ring())
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn contains(&self, p: Point) -> bool {
        point_in_polygon(p, self)
    }

    /// `(x_min, y_min, x_max, y_max)` over the vertices.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        self.vertices.iter().fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |(x0, y0, x1, y1), p| (x0.min(p.x), y0.min(p.y), x1.max(p.x), y1.max(p.y)),
        )
    }

    pub fn distance_to_boundary(&self, p: Point) -> f64 {
        self.edges()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    /// Arithmetic mean of the ring vertices.
    pub fn vertex_centroid(&self) -> Point {
        let ring = self.ring();
        let n = ring.len() as f64;
        let (sx, sy) = ring.iter().fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
        Point::new(sx / n, sy / n)
    }
}

/// Sorted x coordinates where the horizontal line at `y` crosses the edges
/// of `poly`. Consecutive pairs bound the interior.
fn scanline_crossings(poly: &Polygon, y: f64) -> Vec<f64> {
    let mut xs: Vec<f64> = poly
        .edges()
        .filter(|(a, b)| (a.y <= y && y < b.y) || (b.y <= y && y < a.y))
        .map(|(a, b)| a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y))
        .collect();
    xs.sort_by(|a, b| a.total_cmp(b));
    xs
}

fn interval_overlap(a: &[f64], b: &[f64]) -> f64 {
    let mut total = 0.0;
    for ia in a.chunks_exact(2) {
        for ib in b.chunks_exact(2) {
            total += (ia[1].min(ib[1]) - ia[0].max(ib[0])).max(0.0);
        }
    }
    total
}

/// Area of the intersection of two simple polygons.
///
/// The plane is cut into horizontal bands at every vertex height and every
/// edge/edge crossing height. Inside a band the overlap width varies
/// linearly with y, so width at mid-band times band height is exact.
pub fn intersection_area(a: &Polygon, b: &Polygon) -> f64 {
    let mut levels: Vec<f64> = a.ring().iter().chain(b.ring()).map(|p| p.y).collect();
    for (p1, p2) in a.edges() {
        for (q1, q2) in b.edges() {
            if let Some(p) = proper_crossing(p1, p2, q1, q2) {
                levels.push(p.y);
            }
        }
    }
    levels.sort_by(|x, y| x.total_cmp(y));
    levels.dedup();
    levels
        .windows(2)
        .map(|w| {
            let mid = (w[0] + w[1]) / 2.0;
            interval_overlap(&scanline_crossings(a, mid), &scanline_crossings(b, mid)) * (w[1] - w[0])
        })
        .sum()
}

/// Crossing point of two segments whose interiors cross transversally.
fn proper_crossing(p1: Point, p2: Point, q1: Point, q2: Point) -> Option<Point> {
    let r = (p2.x - p1.x, p2.y - p1.y);
    let s = (q2.x - q1.x, q2.y - q1.y);
    let denom = r.0 * s.1 - r.1 * s.0;
    if denom == 0.0 {
        return None;
    }
    let qp = (q1.x - p1.x, q1.y - p1.y);
    let t = (qp.0 * s.1 - qp.1 * s.0) / denom;
    let u = (qp.0 * r.1 - qp.1 * r.0) / denom;
    ((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u))
        .then(|| Point::new(p1.x + t * r.0, p1.y + t * r.1))
}

/// Total length along which edges of `a` run on top of edges of `b`.
pub fn shared_boundary_length(a: &Polygon, b: &Polygon, tolerance: f64) -> f64 {
    let mut total = 0.0;
    for (p1, p2) in a.edges() {
        let len = p1.distance(&p2);
        if len == 0.0 {
            continue;
        }
        let dir = ((p2.x - p1.x) / len, (p2.y - p1.y) / len);
        for (q1, q2) in b.edges() {
            let off = |q: Point| ((q.x - p1.x) * dir.1 - (q.y - p1.y) * dir.0).abs();
            if off(q1) > tolerance || off(q2) > tolerance {
                continue;
            }
            let proj = |q: Point| (q.x - p1.x) * dir.0 + (q.y - p1.y) * dir.1;
            let (s0, s1) = (proj(q1).min(proj(q2)), proj(q1).max(proj(q2)));
            total += (s1.min(len) - s0.max(0.0)).max(0.0);
        }
    }
    total
}

fn shoelace(ring: &[Point]) -> f64 {
    let n = ring.len();
    (0..n)
        .map(|i| {
            let (a, b) = (ring[i], ring[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
        / 2.0
}

/// Checks every polygon invariant and reports all violations found.
///
/// Edge `k` runs from vertex `k` to vertex `k + 1`. When the list is not
/// closed the remaining checks treat it as implicitly closed, so a single
/// call surfaces as many problems as possible.
pub fn validate_polygon(vertices: Vec<Point>) -> Result<Polygon, Vec<PolygonViolation>> {
    let mut violations = Vec::new();

    for (index, p) in vertices.iter().enumerate() {
        if !p.is_finite() {
            violations.push(PolygonViolation::NonFinite { index });
        }
    }
    if !violations.is_empty() {
        return Err(violations);
    }

    let closed = vertices.len() >= 2 && vertices.first() == vertices.last();
    if !closed && !vertices.is_empty() {
        violations.push(PolygonViolation::NotClosed {
            index: vertices.len() - 1,
        });
    }
    let ring: &[Point] = if closed {
        &vertices[..vertices.len() - 1]
    } else {
        &vertices
    };

    let mut distinct: Vec<Point> = Vec::new();
    for p in ring {
        if !distinct.contains(p) {
            distinct.push(*p);
        }
    }
    if distinct.len() < 3 {
        violations.push(PolygonViolation::TooFewVertices {
            distinct: distinct.len(),
        });
        return Err(violations);
    }

    let n = ring.len();
    for i in 1..n {
        if ring[i] == ring[i - 1] {
            violations.push(PolygonViolation::DuplicateVertex { index: i });
        }
    }
    if !closed && ring[n - 1] == ring[0] {
        violations.push(PolygonViolation::DuplicateVertex { index: n - 1 });
    }

    // Zero-length edges would make every neighbour look intersecting.
    let edges: Vec<(usize, Point, Point)> = (0..n)
        .map(|i| (i, ring[i], ring[(i + 1) % n]))
        .filter(|(_, a, b)| a != b)
        .collect();
    let m = edges.len();
    for i in 0..m {
        for j in (i + 1)..m {
            let (ei, a, b) = edges[i];
            let (ej, c, d) = edges[j];
            let adjacent = j == i + 1 || (i == 0 && j == m - 1);
            let hit = if adjacent {
                if j == i + 1 {
                    adjacent_edges_overlap(a, b, d)
                } else {
                    adjacent_edges_overlap(c, a, b)
                }
            } else {
                segments_intersect(a, b, c, d)
            };
            if hit {
                violations.push(PolygonViolation::SelfIntersection {
                    edge_a: ei,
                    edge_b: ej,
                });
            }
        }
    }

    if shoelace(ring).abs() <= 0.0 {
        violations.push(PolygonViolation::ZeroArea);
    }

    if violations.is_empty() {
        Ok(Polygon { vertices })
    } else {
        Err(violations)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[(f64, f64)]) -> Vec<Point> {
        v.iter().map(|&(x, y)| Point::new(x, y)).collect()
    }

    fn square() -> Polygon {
        Polygon::new(pts(&[(0., 0.), (4., 0.), (4., 4.), (0., 4.), (0., 0.)])).unwrap()
    }

    #[test]
    fn ray_hits_segment_ahead() {
        let (a, b) = (Point::new(1., -1.), Point::new(1., 1.));
        assert!(ray_intersects_segment(Point::new(0., 0.), a, b));
        assert!(!ray_intersects_segment(Point::new(2., 0.), a, b));
        assert!(!ray_intersects_segment(Point::new(0., 2.), a, b));
    }

    #[test]
    fn ray_half_open_vertex_rule() {
        // Lower endpoint on the ray counts, upper endpoint does not.
        let o = Point::new(0., 0.);
        assert!(ray_intersects_segment(o, Point::new(1., 0.), Point::new(1., 1.)));
        assert!(!ray_intersects_segment(o, Point::new(1., -1.), Point::new(1., 0.)));
        // Horizontal edges never count.
        assert!(!ray_intersects_segment(o, Point::new(1., 0.), Point::new(3., 0.)));
    }

    #[test]
    fn point_in_square_and_notch() {
        let sq = square();
        assert!(point_in_polygon(Point::new(2., 2.), &sq));
        assert!(!point_in_polygon(Point::new(5., 2.), &sq));

        let l = Polygon::new(pts(&[
            (0., 0.),
            (4., 0.),
            (4., 2.),
            (2., 2.),
            (2., 4.),
            (0., 4.),
            (0., 0.),
        ]))
        .unwrap();
        assert!(!point_in_polygon(Point::new(3., 3.), &l));
        assert!(point_in_polygon(Point::new(1., 3.), &l));
        assert!(point_in_polygon(Point::new(3., 1.), &l));
    }

    #[test]
    fn ray_through_vertex_counts_once() {
        // The ray from (1, 2) passes exactly through vertex (4, 2) of the diamond.
        let diamond = Polygon::new(pts(&[(2., 0.), (4., 2.), (2., 4.), (0., 2.), (2., 0.)])).unwrap();
        assert!(point_in_polygon(Point::new(1., 2.), &diamond));
        assert!(!point_in_polygon(Point::new(5., 2.), &diamond));
        assert!(!point_in_polygon(Point::new(-1., 2.), &diamond));
    }

    #[test]
    fn iou_cases() {
        let a = BoundingBox::new(0., 0., 2., 2.).unwrap();
        assert_eq!(iou(&a, &a), 1.0);
        let far = BoundingBox::new(5., 5., 6., 6.).unwrap();
        assert_eq!(iou(&BoundingBox::new(0., 0., 1., 1.).unwrap(), &far), 0.0);
        let b = BoundingBox::new(1., 0., 3., 2.).unwrap();
        assert!((iou(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
        // Touching edges share no area.
        let c = BoundingBox::new(2., 0., 4., 2.).unwrap();
        assert_eq!(iou(&a, &c), 0.0);
    }

    #[test]
    fn centers() {
        let c = |x0, y0, x1, y1| bbox_center(&BoundingBox::new(x0, y0, x1, y1).unwrap());
        assert_eq!(c(0., 0., 4., 2.), Point::new(2., 1.));
        assert_eq!(c(-2., -2., 2., 2.), Point::new(0., 0.));
        assert_eq!(c(10., 20., 11., 21.), Point::new(10.5, 20.5));
    }

    #[test]
    fn degenerate_boxes_rejected() {
        assert!(BoundingBox::new(1., 0., 1., 2.).is_err());
        assert!(BoundingBox::new(3., 0., 1., 2.).is_err());
        assert!(BoundingBox::new(0., 0., f64::NAN, 2.).is_err());
    }

    #[test]
    fn center_size_round_trip() {
        let b = BoundingBox::from_center_size(Point::new(10., 5.), 4., 2.).unwrap();
        assert_eq!(b.corners(), [8., 4., 12., 6.]);
        assert_eq!(b.center(), Point::new(10., 5.));
        assert_eq!(b.aspect_ratio(), 2.0);
    }

    #[test]
    fn validate_reports_open_polygon() {
        let err = validate_polygon(pts(&[(0., 0.), (4., 0.), (4., 4.), (0., 4.)])).unwrap_err();
        assert_eq!(err, vec![PolygonViolation::NotClosed { index: 3 }]);
        assert!(err[0].to_string().contains("not closed"));
    }

    #[test]
    fn validate_reports_bow_tie() {
        let err =
            validate_polygon(pts(&[(0., 0.), (4., 4.), (4., 0.), (0., 4.), (0., 0.)])).unwrap_err();
        assert!(err
            .iter()
            .any(|v| matches!(v, PolygonViolation::SelfIntersection { edge_a: 0, edge_b: 2 })));
        assert!(err.iter().any(|v| v.to_string().contains("self-intersection")));
    }

    #[test]
    fn validate_reports_duplicates_and_degenerate() {
        let err = validate_polygon(pts(&[(0., 0.), (4., 0.), (4., 0.), (4., 4.), (0., 0.)]))
            .unwrap_err();
        assert!(err.contains(&PolygonViolation::DuplicateVertex { index: 2 }));

        let err = validate_polygon(pts(&[(0., 0.), (1., 1.), (2., 2.), (0., 0.)])).unwrap_err();
        assert!(err.contains(&PolygonViolation::ZeroArea));

        let err = validate_polygon(pts(&[(0., 0.), (1., 0.), (0., 0.)])).unwrap_err();
        assert_eq!(err, vec![PolygonViolation::TooFewVertices { distinct: 2 }]);

        let err = validate_polygon(pts(&[(0., 0.), (f64::NAN, 0.), (0., 1.), (0., 0.)])).unwrap_err();
        assert_eq!(err, vec![PolygonViolation::NonFinite { index: 1 }]);
    }

    #[test]
    fn validate_rejects_spike() {
        // Edge 1 doubles back along edge 0.
        let err = validate_polygon(pts(&[(0., 0.), (4., 0.), (2., 0.), (2., 3.), (0., 0.)]))
            .unwrap_err();
        assert!(err
            .iter()
            .any(|v| matches!(v, PolygonViolation::SelfIntersection { .. })));
    }

    #[test]
    fn validate_accepts_triangle_and_concave() {
        assert!(validate_polygon(pts(&[(0., 0.), (4., 0.), (0., 3.), (0., 0.)])).is_ok());
        let l = validate_polygon(pts(&[
            (0., 0.),
            (4., 0.),
            (4., 2.),
            (2., 2.),
            (2., 4.),
            (0., 4.),
            (0., 0.),
        ]))
        .unwrap();
        assert_eq!(l.area(), 12.0);
    }

    #[test]
    fn intersection_area_cases() {
        let sq = square();
        let shifted = Polygon::new(pts(&[(2., 2.), (6., 2.), (6., 6.), (2., 6.), (2., 2.)])).unwrap();
        assert!((intersection_area(&sq, &sq) - 16.0).abs() < 1e-12);
        assert!((intersection_area(&sq, &shifted) - 4.0).abs() < 1e-12);
        let beside = Polygon::new(pts(&[(4., 0.), (8., 0.), (8., 4.), (4., 4.), (4., 0.)])).unwrap();
        assert_eq!(intersection_area(&sq, &beside), 0.0);
        assert!((shared_boundary_length(&sq, &beside, 1e-9) - 4.0).abs() < 1e-12);
        // Diamond inscribed in the square: area 8.
        let diamond = Polygon::new(pts(&[(2., 0.), (4., 2.), (2., 4.), (0., 2.), (2., 0.)])).unwrap();
        assert!((intersection_area(&sq, &diamond) - 8.0).abs() < 1e-12);
        // Rotated square crossing the axis-aligned one: edges cross transversally.
        let rot = Polygon::new(pts(&[(2., -1.), (5., 2.), (2., 5.), (-1., 2.), (2., -1.)])).unwrap();
        assert!((intersection_area(&sq, &rot) - 14.0).abs() < 1e-9);
    }

    #[test]
    fn polygon_helpers() {
        let sq = square();
        assert_eq!(sq.ring().len(), 4);
        assert_eq!(sq.edges().count(), 4);
        assert_eq!(sq.bounds(), (0., 0., 4., 4.));
        assert_eq!(sq.vertex_centroid(), Point::new(2., 2.));
        assert_eq!(sq.distance_to_boundary(Point::new(1., 2.)), 1.0);
    }
}
