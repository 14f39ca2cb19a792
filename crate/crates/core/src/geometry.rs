//! Box geometry in the vehicle frame.
//!
//! The vehicle sits at the origin of a right-handed frame: `x` points right,
//! `y` points down and `z` points along the heading. Boxes are upright, so the
//! only rotation is the yaw about the `y` axis. The bird's-eye view (BEV) is the
//! `(x, z)` ground plane; BEV points reuse [`Point2`] with `x -> x` and
//! `z -> y`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Tolerance for point coincidence and degenerate shapes, in meters.
pub const EPS_GEOM: f64 = 1e-9;

/// Minimum corner depth accepted by the perspective projection, in meters.
pub const EPS_DEPTH: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// Bearing from the vehicle for a BEV point, `atan2(x, z)`; positive to the right.
    pub fn azimuth(self) -> f64 {
        self.x.atan2(self.y)
    }

    /// Rotates a BEV point about the vertical axis in the same sense as box yaw.
    pub fn rotated(self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Point2::new(c * self.x + s * self.y, -s * self.x + c * self.y)
    }

    pub(crate) fn coincides(self, other: Point2) -> bool {
        self.distance(other) <= EPS_GEOM
    }
}

impl std::ops::Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, k: f64) -> Point2 {
        Point2::new(self.x * k, self.y * k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn bev(self) -> Point2 {
        Point2::new(self.x, self.z)
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(angle: f64) -> f64 {
    let r = angle.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Upright oriented 3D box.
///
/// `length` runs along local `x`, `height` along `y` and `width` along `z`;
/// `yaw` rotates the box about the `y` axis and is kept in `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box3D {
    center: Point3,
    length: f64,
    height: f64,
    width: f64,
    yaw: f64,
}

impl Box3D {
    pub fn new(center: Point3, length: f64, height: f64, width: f64, yaw: f64) -> Result<Self> {
        if !center.is_finite() {
            return Err(Error::InvalidBox(format!("non-finite center {center:?}")));
        }
        for (name, value) in [("length", length), ("height", height), ("width", width)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidBox(format!(
                    "{name} must be positive, got {value}"
                )));
            }
        }
        if !yaw.is_finite() {
            return Err(Error::InvalidBox(format!("non-finite yaw {yaw}")));
        }
        Ok(Self {
            center,
            length,
            height,
            width,
            yaw: normalize_angle(yaw),
        })
    }

    /// Builds a box from the `(x, y, z, l, h, w, yaw)` tuple.
    pub fn from_params(params: [f64; 7]) -> Result<Self> {
        let [x, y, z, l, h, w, yaw] = params;
        Self::new(Point3::new(x, y, z), l, h, w, yaw)
    }

    pub fn params(&self) -> [f64; 7] {
        let c = self.center;
        [
            c.x,
            c.y,
            c.z,
            self.length,
            self.height,
            self.width,
            self.yaw,
        ]
    }

    pub fn center(&self) -> Point3 {
        self.center
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn yaw(&self) -> f64 {
        self.yaw
    }

    pub fn size(&self) -> [f64; 3] {
        [self.length, self.height, self.width]
    }

    pub fn volume(&self) -> f64 {
        self.length * self.height * self.width
    }

    pub fn with_center(mut self, center: Point3) -> Self {
        self.center = center;
        self
    }

    /// Scales every dimension by `factor` about the center.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.center,
            self.length * factor,
            self.height * factor,
            self.width * factor,
            self.yaw,
        )
    }

    /// Rotates the whole box about the vertical axis through the origin.
    pub fn rotated_about_origin(&self, angle: f64) -> Self {
        let bev = self.center.bev().rotated(angle);
        Self {
            center: Point3::new(bev.x, self.center.y, bev.y),
            yaw: normalize_angle(self.yaw + angle),
            ..*self
        }
    }

    /// Vertical extent `[top, bottom]` along `y`.
    pub fn vertical_interval(&self) -> (f64, f64) {
        let half = self.height / 2.0;
        (self.center.y - half, self.center.y + half)
    }

    fn local_to_world(&self, dx: f64, dy: f64, dz: f64) -> Point3 {
        let (s, c) = self.yaw.sin_cos();
        Point3::new(
            self.center.x + c * dx + s * dz,
            self.center.y + dy,
            self.center.z - s * dx + c * dz,
        )
    }
}

/// The eight corners of `b`.
///
/// Corner `i` takes the `+` sign of the local offset along `x` when bit 0 of
/// `i` is set, along `y` for bit 1 and along `z` for bit 2; offsets are
/// `(l/2, h/2, w/2)` before the yaw rotation.
pub fn box_corners(b: &Box3D) -> [Point3; 8] {
    let half = [b.length / 2.0, b.height / 2.0, b.width / 2.0];
    std::array::from_fn(|i| {
        let sign = |bit: usize| if i & (1 << bit) != 0 { 1.0 } else { -1.0 };
        b.local_to_world(sign(0) * half[0], sign(1) * half[1], sign(2) * half[2])
    })
}

/// Axis-aligned rectangle, used for perspective-view footprints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect2D {
    pub min_u: f64,
    pub min_v: f64,
    pub max_u: f64,
    pub max_v: f64,
}

impl Rect2D {
    pub fn new(min_u: f64, min_v: f64, max_u: f64, max_v: f64) -> Result<Self> {
        let finite = [min_u, min_v, max_u, max_v].iter().all(|v| v.is_finite());
        if !finite || min_u > max_u || min_v > max_v {
            return Err(Error::InvalidPolygon(format!(
                "rectangle [{min_u}, {max_u}] x [{min_v}, {max_v}] is malformed"
            )));
        }
        Ok(Self {
            min_u,
            min_v,
            max_u,
            max_v,
        })
    }

    /// Smallest rectangle containing every point.
    pub fn bounding(points: impl IntoIterator<Item = Point2>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let init = Rect2D {
            min_u: first.x,
            min_v: first.y,
            max_u: first.x,
            max_v: first.y,
        };
        Some(it.fold(init, |r, p| Rect2D {
            min_u: r.min_u.min(p.x),
            min_v: r.min_v.min(p.y),
            max_u: r.max_u.max(p.x),
            max_v: r.max_v.max(p.y),
        }))
    }

    pub fn width(&self) -> f64 {
        self.max_u - self.min_u
    }

    pub fn height(&self) -> f64 {
        self.max_v - self.min_v
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Closed containment: `other` lies inside `self` including the boundary.
    pub fn contains_rect(&self, other: &Rect2D) -> bool {
        self.min_u <= other.min_u
            && self.min_v <= other.min_v
            && self.max_u >= other.max_u
            && self.max_v >= other.max_v
    }

    /// Overlap rectangle, `None` when the interiors are disjoint.
    pub fn intersection(&self, other: &Rect2D) -> Option<Rect2D> {
        let r = Rect2D {
            min_u: self.min_u.max(other.min_u),
            min_v: self.min_v.max(other.min_v),
            max_u: self.max_u.min(other.max_u),
            max_v: self.max_v.min(other.max_v),
        };
        (r.min_u < r.max_u && r.min_v < r.max_v).then_some(r)
    }

    pub fn translated(&self, du: f64, dv: f64) -> Rect2D {
        Rect2D {
            min_u: self.min_u + du,
            min_v: self.min_v + dv,
            max_u: self.max_u + du,
            max_v: self.max_v + dv,
        }
    }

    pub fn expanded(&self, margin: f64) -> Rect2D {
        Rect2D {
            min_u: self.min_u - margin,
            min_v: self.min_v - margin,
            max_u: self.max_u + margin,
            max_v: self.max_v + margin,
        }
    }
}

/// Convex polygon in the BEV plane with counter-clockwise vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct BevPolygon {
    vertices: Vec<Point2>,
}

impl BevPolygon {
    /// Validates that `vertices` form a convex, counter-clockwise polygon.
    pub fn new(vertices: Vec<Point2>) -> Result<Self> {
        let n = vertices.len();
        if n < 3 {
            return Err(Error::InvalidPolygon(format!("{n} vertices")));
        }
        if vertices
            .iter()
            .any(|p| !(p.x.is_finite() && p.y.is_finite()))
        {
            return Err(Error::InvalidPolygon("non-finite vertex".into()));
        }
        for i in 0..n {
            for j in i + 1..n {
                if vertices[i].coincides(vertices[j]) {
                    return Err(Error::InvalidPolygon(format!(
                        "vertices {i} and {j} coincide"
                    )));
                }
            }
        }
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            let edge = b - a;
            // signed distance of c from the directed line a->b
            if edge.cross(c - a) / edge.norm() < -EPS_GEOM {
                return Err(Error::InvalidPolygon(format!(
                    "turn at vertex {} is clockwise",
                    (i + 1) % n
                )));
            }
        }
        if signed_area(&vertices) <= 0.0 {
            return Err(Error::InvalidPolygon("polygon has no positive area".into()));
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    /// Closed point-in-polygon test with `EPS_GEOM` slack.
    pub fn contains(&self, p: Point2) -> bool {
        edges(&self.vertices).all(|(a, b)| (b - a).cross(p - a) / (b - a).norm() >= -EPS_GEOM)
    }

    /// Uniform scaling about the vehicle origin.
    pub fn scaled_about_origin(&self, factor: f64) -> Self {
        Self {
            vertices: self.vertices.iter().map(|&v| v * factor).collect(),
        }
    }

    pub fn rotated_about_origin(&self, angle: f64) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| v.rotated(angle)).collect(),
        }
    }

    pub fn translated(&self, offset: Point2) -> Self {
        Self {
            vertices: self.vertices.iter().map(|&v| v + offset).collect(),
        }
    }
}

/// Convex shapes that can take part in polygon clipping.
pub trait ConvexRegion {
    /// Boundary in counter-clockwise order.
    fn ccw_boundary(&self) -> Vec<Point2>;
}

impl ConvexRegion for BevPolygon {
    fn ccw_boundary(&self) -> Vec<Point2> {
        self.vertices.clone()
    }
}

impl ConvexRegion for Rect2D {
    fn ccw_boundary(&self) -> Vec<Point2> {
        vec![
            Point2::new(self.min_u, self.min_v),
            Point2::new(self.max_u, self.min_v),
            Point2::new(self.max_u, self.max_v),
            Point2::new(self.min_u, self.max_v),
        ]
    }
}

fn edges(vertices: &[Point2]) -> impl Iterator<Item = (Point2, Point2)> + '_ {
    let n = vertices.len();
    (0..n).map(move |i| (vertices[i], vertices[(i + 1) % n]))
}

/// Shoelace area; positive for counter-clockwise input.
pub fn signed_area(vertices: &[Point2]) -> f64 {
    if vertices.len() < 3 {
        return 0.0;
    }
    edges(vertices).map(|(a, b)| a.cross(b)).sum::<f64>() / 2.0
}

/// Clips `subject` against every edge of the convex `clip` polygon.
pub fn convex_intersection(subject: &impl ConvexRegion, clip: &impl ConvexRegion) -> Vec<Point2> {
    let clip = clip.ccw_boundary();
    let mut output = subject.ccw_boundary();
    for (a, b) in edges(&clip) {
        if output.is_empty() {
            break;
        }
        let edge = b - a;
        let side = |p: Point2| edge.cross(p - a);
        let input = std::mem::take(&mut output);
        for (i, &current) in input.iter().enumerate() {
            let prev = input[(i + input.len() - 1) % input.len()];
            let (sc, sp) = (side(current), side(prev));
            if sc >= 0.0 {
                if sp < 0.0 {
                    output.push(line_crossing(prev, current, sp, sc));
                }
                output.push(current);
            } else if sp >= 0.0 {
                output.push(line_crossing(prev, current, sp, sc));
            }
        }
    }
    output
}

fn line_crossing(p: Point2, q: Point2, side_p: f64, side_q: f64) -> Point2 {
    let t = side_p / (side_p - side_q);
    p + (q - p) * t
}

/// Area of the intersection of two convex regions.
pub fn convex_intersection_area(p: &impl ConvexRegion, q: &impl ConvexRegion) -> f64 {
    signed_area(&convex_intersection(p, q)).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment2D {
    pub a: Point2,
    pub b: Point2,
}

impl Segment2D {
    pub fn new(a: Point2, b: Point2) -> Result<Self> {
        if a.coincides(b) {
            return Err(Error::InvalidPolygon(format!(
                "degenerate segment at {a:?}"
            )));
        }
        Ok(Self { a, b })
    }

    pub fn length(&self) -> f64 {
        self.a.distance(self.b)
    }

    fn has_endpoint(&self, p: Point2) -> bool {
        self.a.coincides(p) || self.b.coincides(p)
    }

    /// Side of `p` relative to the directed line `a -> b`, with points
    /// within `EPS_GEOM` of the line reported as `0`.
    fn side(&self, p: Point2) -> i8 {
        let d = (self.b - self.a).cross(p - self.a) / self.length();
        if d > EPS_GEOM {
            1
        } else if d < -EPS_GEOM {
            -1
        } else {
            0
        }
    }

    /// For a point on the supporting line, whether it lies on the segment.
    fn covers(&self, p: Point2) -> bool {
        let dir = self.b - self.a;
        let len = self.length();
        let t = dir.dot(p - self.a) / len;
        (-EPS_GEOM..=len + EPS_GEOM).contains(&t)
    }
}

/// Whether two segments share a point other than an endpoint common to both.
fn pair_intersects(s: &Segment2D, t: &Segment2D) -> bool {
    let d1 = s.side(t.a);
    let d2 = s.side(t.b);
    let d3 = t.side(s.a);
    let d4 = t.side(s.b);

    if d1 == 0 && d2 == 0 && d3 == 0 && d4 == 0 {
        let dir = (s.b - s.a) * (1.0 / s.length());
        let (ta, tb) = (dir.dot(t.a - s.a), dir.dot(t.b - s.a));
        let overlap = s.length().min(ta.max(tb)) - 0.0f64.max(ta.min(tb));
        // a single touching point of collinear segments is an endpoint of both
        return overlap > EPS_GEOM;
    }

    if d1 * d2 < 0 && d3 * d4 < 0 {
        return true;
    }

    let touches = [
        (d1 == 0 && s.covers(t.a)).then_some(t.a),
        (d2 == 0 && s.covers(t.b)).then_some(t.b),
        (d3 == 0 && t.covers(s.a)).then_some(s.a),
        (d4 == 0 && t.covers(s.b)).then_some(s.b),
    ];
    touches
        .into_iter()
        .flatten()
        .any(|p| !(s.has_endpoint(p) && t.has_endpoint(p)))
}

/// True iff some pair of segments intersects at a point that is not an
/// endpoint shared by both. Collinear overlap of positive length counts as an
/// intersection.
pub fn segments_intersect(segments: &[Segment2D]) -> bool {
    segments
        .iter()
        .enumerate()
        .any(|(i, s)| segments[i + 1..].iter().any(|t| pair_intersects(s, t)))
}

/// Pinhole projection `(f x / z, f y / z)` of every corner, bounded by an
/// axis-aligned rectangle.
pub fn project_pv_rect(b: &Box3D, focal: f64) -> Result<Rect2D> {
    let corners = box_corners(b);
    if let Some(c) = corners.iter().find(|c| c.z < EPS_DEPTH) {
        return Err(Error::BehindCamera { depth: c.z });
    }
    let projected = corners
        .iter()
        .map(|c| Point2::new(focal * c.x / c.z, focal * c.y / c.z));
    Ok(Rect2D::bounding(projected).expect("eight corners"))
}

/// BEV footprint of `b` as a counter-clockwise rectangle.
pub fn project_bev(b: &Box3D) -> BevPolygon {
    let (hl, hw) = (b.length / 2.0, b.width / 2.0);
    let vertices = [(-hl, -hw), (hl, -hw), (hl, hw), (-hl, hw)]
        .into_iter()
        .map(|(dx, dz)| b.local_to_world(dx, 0.0, dz).bev())
        .collect();
    BevPolygon { vertices }
}

/// Overlap of the vertical extents, zero when disjoint.
fn vertical_overlap(p: &Box3D, g: &Box3D) -> f64 {
    let (p_top, p_bottom) = p.vertical_interval();
    let (g_top, g_bottom) = g.vertical_interval();
    (p_bottom.min(g_bottom) - p_top.max(g_top)).max(0.0)
}

/// Volume of `p ∩ g`: BEV footprint overlap times vertical overlap.
pub fn intersection_volume(p: &Box3D, g: &Box3D) -> f64 {
    let dy = vertical_overlap(p, g);
    if dy == 0.0 {
        return 0.0;
    }
    convex_intersection_area(&project_bev(p), &project_bev(g)) * dy
}

pub fn iou3d(p: &Box3D, g: &Box3D) -> f64 {
    if p == g {
        return 1.0;
    }
    let inter = intersection_volume(p, g);
    let union = p.volume() + g.volume() - inter;
    (inter / union).clamp(0.0, 1.0)
}

// Closed containment of `inner` in `outer`, up to EPS_GEOM.
fn box_contains(outer: &Box3D, inner: &Box3D) -> bool {
    let (olo, ohi) = outer.vertical_interval();
    let (ilo, ihi) = inner.vertical_interval();
    if ilo < olo - EPS_GEOM || ihi > ohi + EPS_GEOM {
        return false;
    }
    let footprint = project_bev(outer);
    project_bev(inner)
        .vertices()
        .iter()
        .all(|&v| footprint.contains(v))
}

/// Intersection over the ground-truth volume; exactly 1 when `p` contains `g`.
pub fn iogt3d(p: &Box3D, g: &Box3D) -> f64 {
    if box_contains(p, g) {
        return 1.0;
    }
    (intersection_volume(p, g) / g.volume()).clamp(0.0, 1.0)
}
