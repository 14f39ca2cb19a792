//! Uncompromising spatial constraints: a prediction must cover its ground
//! truth as seen from the vehicle.
//!
//! Coverage is checked in two projections. In the perspective view the
//! prediction's image rectangle must enclose the ground truth's; the
//! quantitative counterpart is the intersection over ground truth (IoGT). In
//! the bird's-eye view the prediction must be no farther away than the ground
//! truth and its vehicle-facing sides must not cross those of the ground
//! truth; the quantitative counterpart is the average distance ratio (ADR).
//! The score of a pair is `IoGT * ADR`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    project_bev, project_pv_rect, segments_intersect, BevPolygon, Box3D, Point2, Rect2D, Segment2D,
    EPS_GEOM,
};

/// Focal length used when no camera model is available. Any positive value
/// gives the same verdicts and scores.
pub const DEFAULT_FOCAL: f64 = 1.0;

/// Vehicle-facing extreme vertices of a BEV footprint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepresentativePoints {
    pub closest: Point2,
    pub rightmost: Point2,
    pub leftmost: Point2,
}

impl RepresentativePoints {
    /// Points in `(closest, rightmost, leftmost)` order.
    pub fn as_array(&self) -> [Point2; 3] {
        [self.closest, self.rightmost, self.leftmost]
    }

    /// The two facing sides `closest -> rightmost` and `closest -> leftmost`.
    /// A side collapses when its extreme vertex is also the closest one and
    /// is then omitted.
    pub fn facing_sides(&self) -> Vec<Segment2D> {
        [self.rightmost, self.leftmost]
            .into_iter()
            .filter_map(|end| Segment2D::new(self.closest, end).ok())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UscBreakdown {
    pub pv_constraint: bool,
    pub bev_constraint: bool,
    pub verdict: bool,
    pub iogt_pv: f64,
    pub adr: f64,
    pub usc: f64,
}

/// Intersection over ground truth for PV rectangles.
pub fn iogt_pv(p: &Rect2D, g: &Rect2D) -> Result<f64> {
    let g_area = g.area();
    if g_area <= EPS_GEOM * EPS_GEOM {
        return Err(Error::DegenerateGroundTruth);
    }
    if p.contains_rect(g) {
        return Ok(1.0);
    }
    Ok(p.intersection(g)
        .map_or(0.0, |r| r.area() / g_area)
        .min(1.0))
}

/// PV enclosure with closed containment, so `p == g` satisfies it.
pub fn pv_constraint(p: &Rect2D, g: &Rect2D) -> bool {
    p.contains_rect(g)
}

// Picks the vertex with the best key; keys within EPS_GEOM tie and fall back
// to lexicographic (x, z) order.
fn extreme_vertex(vertices: &[Point2], key: impl Fn(Point2) -> f64) -> Point2 {
    let mut best = vertices[0];
    let mut best_key = key(best);
    for &v in &vertices[1..] {
        let k = key(v);
        let lex_smaller = (v.x, v.y) < (best.x, best.y);
        if k < best_key - EPS_GEOM || ((k - best_key).abs() <= EPS_GEOM && lex_smaller) {
            best = v;
            best_key = k;
        }
    }
    best
}

/// Closest, rightmost and leftmost vertices of a frontal footprint.
///
/// Closest minimises the distance to the origin; rightmost maximises the
/// azimuth `atan2(x, z)` and leftmost minimises it. Ties go to the
/// lexicographically smallest `(x, z)`.
pub fn representative_points(poly: &BevPolygon) -> Result<RepresentativePoints> {
    if poly.contains(Point2::ORIGIN) {
        return Err(Error::OriginInside);
    }
    let vertices = poly.vertices();
    if let Some(v) = vertices.iter().find(|v| v.y <= 0.0) {
        return Err(Error::BehindVehicle { z: v.y });
    }
    Ok(RepresentativePoints {
        closest: extreme_vertex(vertices, Point2::norm),
        rightmost: extreme_vertex(vertices, |v| -v.azimuth()),
        leftmost: extreme_vertex(vertices, Point2::azimuth),
    })
}

fn bev_constraint_from(p: &RepresentativePoints, g: &RepresentativePoints) -> bool {
    if p.closest.norm() > g.closest.norm() {
        return false;
    }
    let mut sides = p.facing_sides();
    sides.extend(g.facing_sides());
    !segments_intersect(&sides)
}

/// BEV constraint: the prediction's closest vertex is no farther than the
/// ground truth's, and the facing sides of the two footprints do not cross.
pub fn bev_constraint(p: &BevPolygon, g: &BevPolygon) -> Result<bool> {
    Ok(bev_constraint_from(
        &representative_points(p)?,
        &representative_points(g)?,
    ))
}

fn adr_from(p: &RepresentativePoints, g: &RepresentativePoints) -> Result<f64> {
    let mut product = 1.0;
    for (vp, vg) in p.as_array().into_iter().zip(g.as_array()) {
        let dg = vg.norm();
        if dg <= EPS_GEOM {
            return Err(Error::GroundTruthAtOrigin);
        }
        product *= dg / vp.norm().max(dg);
    }
    Ok(product.cbrt())
}

/// Average distance ratio: geometric mean over the three representative
/// points of `|v_g| / max(|v_p|, |v_g|)`.
pub fn adr(p: &BevPolygon, g: &BevPolygon) -> Result<f64> {
    adr_from(&representative_points(p)?, &representative_points(g)?)
}

/// Full constraint and score evaluation for one matched pair.
pub fn usc_score(p: &Box3D, g: &Box3D, focal: f64) -> Result<UscBreakdown> {
    let (p_pv, g_pv) = (project_pv_rect(p, focal)?, project_pv_rect(g, focal)?);
    let p_rep = representative_points(&project_bev(p))?;
    let g_rep = representative_points(&project_bev(g))?;

    let pv = pv_constraint(&p_pv, &g_pv);
    let bev = bev_constraint_from(&p_rep, &g_rep);
    let iogt = iogt_pv(&p_pv, &g_pv)?;
    let adr = adr_from(&p_rep, &g_rep)?;
    Ok(UscBreakdown {
        pv_constraint: pv,
        bev_constraint: bev,
        verdict: pv && bev,
        iogt_pv: iogt,
        adr,
        usc: iogt * adr,
    })
}

/// Whether `p` covers `g` from the vehicle in both projections.
pub fn usc_verdict(p: &Box3D, g: &Box3D, focal: f64) -> Result<bool> {
    usc_score(p, g, focal).map(|b| b.verdict)
}
