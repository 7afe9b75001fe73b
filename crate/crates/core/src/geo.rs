//! Planar geometry primitives and a bounding-box spatial index.
//!
//! Everything here works in a single projected planar coordinate system;
//! coordinates are raw linear units (feet, meters, ...) and all distances are
//! Euclidean. [`LinearScale`] converts between input units and the feet/miles
//! in which analysis thresholds are usually stated. GeoJSON coordinates are
//! interpreted as already-projected planar values, never as lon/lat.

use rstar::{PointDistance as RsPointDistance, RTree, RTreeObject, AABB};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FEET_PER_MILE: f64 = 5280.0;

/// Distance below which a point counts as lying on a boundary. Absolute, in
/// input units; at typical state-plane magnitudes (~1e6 ft) this is within a
/// few ulps of exact.
pub const BOUNDARY_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("ring has {0} vertices; a closed ring needs at least 4")]
    TooFewVertices(usize),
    #[error("ring is not closed (first vertex must equal last)")]
    UnclosedRing,
    #[error("ring has zero area")]
    ZeroArea,
    #[error("polygon part has non-positive area after subtracting holes")]
    DegeneratePart,
    #[error("coordinate is not finite")]
    NonFiniteCoordinate,
    #[error("nearest query on an empty index")]
    EmptyIndex,
    #[error("unsupported or malformed geometry: {0}")]
    Invalid(String),
}

/// Conversion between input linear units and feet/miles.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct LinearScale {
    /// How many feet one input unit represents (1.0 for foot-based projections).
    pub feet_per_unit: f64,
}

impl Default for LinearScale {
    fn default() -> Self {
        LinearScale { feet_per_unit: 1.0 }
    }
}

impl LinearScale {
    pub fn new(feet_per_unit: f64) -> Self {
        assert!(
            feet_per_unit.is_finite() && feet_per_unit > 0.0,
            "feet_per_unit must be positive and finite"
        );
        LinearScale { feet_per_unit }
    }

    pub fn feet_to_units(&self, feet: f64) -> f64 {
        feet / self.feet_per_unit
    }

    pub fn units_to_feet(&self, units: f64) -> f64 {
        units * self.feet_per_unit
    }

    pub fn miles_to_units(&self, miles: f64) -> f64 {
        self.feet_to_units(miles * FEET_PER_MILE)
    }

    pub fn units_to_miles(&self, units: f64) -> f64 {
        self.units_to_feet(units) / FEET_PER_MILE
    }
}

/// A projected planar point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance_to(&self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Rect {
    fn empty() -> Self {
        Rect {
            min_x: f64::INFINITY,
            min_y: f64::INFINITY,
            max_x: f64::NEG_INFINITY,
            max_y: f64::NEG_INFINITY,
        }
    }

    fn extend(&mut self, p: Point) {
        self.min_x = self.min_x.min(p.x);
        self.min_y = self.min_y.min(p.y);
        self.max_x = self.max_x.max(p.x);
        self.max_y = self.max_y.max(p.y);
    }

    pub fn expanded(&self, by: f64) -> Rect {
        Rect {
            min_x: self.min_x - by,
            min_y: self.min_y - by,
            max_x: self.max_x + by,
            max_y: self.max_y + by,
        }
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.min_x <= other.max_x
            && other.min_x <= self.max_x
            && self.min_y <= other.max_y
            && other.min_y <= self.max_y
    }

    /// Minimum distance from the box to another box (0 when they intersect).
    pub fn distance_to_rect(&self, other: &Rect) -> f64 {
        let dx = (self.min_x - other.max_x).max(other.min_x - self.max_x).max(0.0);
        let dy = (self.min_y - other.max_y).max(other.min_y - self.max_y).max(0.0);
        (dx * dx + dy * dy).sqrt()
    }
}

/// One polygon part: an exterior ring plus zero or more hole rings.
/// Rings are stored closed (first vertex repeated at the end).
#[derive(Debug, Clone, PartialEq)]
pub struct PolygonPart {
    pub exterior: Vec<Point>,
    pub holes: Vec<Vec<Point>>,
}

/// A validated, possibly multi-part polygon with holes.
///
/// Containment uses the even-odd rule, with boundary points counting as
/// inside. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PolygonGeom {
    parts: Vec<PolygonPart>,
    bbox: Rect,
}

fn validate_ring(ring: &[Point]) -> Result<(), GeometryError> {
    if ring.len() < 4 {
        return Err(GeometryError::TooFewVertices(ring.len()));
    }
    if ring.iter().any(|p| !p.is_finite()) {
        return Err(GeometryError::NonFiniteCoordinate);
    }
    if ring[0] != ring[ring.len() - 1] {
        return Err(GeometryError::UnclosedRing);
    }
    if ring_signed_area(ring) == 0.0 {
        return Err(GeometryError::ZeroArea);
    }
    Ok(())
}

/// Shoelace signed area of a closed ring (positive when counter-clockwise).
fn ring_signed_area(ring: &[Point]) -> f64 {
    // Translate to the first vertex to keep the products small at
    // state-plane coordinate magnitudes.
    let ox = ring[0].x;
    let oy = ring[0].y;
    let mut acc = 0.0;
    for w in ring.windows(2) {
        let (ax, ay) = (w[0].x - ox, w[0].y - oy);
        let (bx, by) = (w[1].x - ox, w[1].y - oy);
        acc += ax * by - bx * ay;
    }
    acc / 2.0
}

/// Area and first moments of a ring, translated by (ox, oy).
/// Returns (2A, Σ(x+x')c, Σ(y+y')c) with c the per-edge cross term.
fn ring_moments(ring: &[Point], ox: f64, oy: f64) -> (f64, f64, f64) {
    let mut a2 = 0.0;
    let mut mx = 0.0;
    let mut my = 0.0;
    for w in ring.windows(2) {
        let (ax, ay) = (w[0].x - ox, w[0].y - oy);
        let (bx, by) = (w[1].x - ox, w[1].y - oy);
        let c = ax * by - bx * ay;
        a2 += c;
        mx += (ax + bx) * c;
        my += (ay + by) * c;
    }
    (a2, mx, my)
}

fn point_segment_distance2(p: Point, a: Point, b: Point) -> f64 {
    let abx = b.x - a.x;
    let aby = b.y - a.y;
    let apx = p.x - a.x;
    let apy = p.y - a.y;
    let len2 = abx * abx + aby * aby;
    let t = if len2 > 0.0 {
        ((apx * abx + apy * aby) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let dx = apx - t * abx;
    let dy = apy - t * aby;
    dx * dx + dy * dy
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |o: f64, p: Point, q: Point, r: Point| {
        o == 0.0
            && r.x >= p.x.min(q.x)
            && r.x <= p.x.max(q.x)
            && r.y >= p.y.min(q.y)
            && r.y <= p.y.max(q.y)
    };
    on(d1, c, d, a) || on(d2, c, d, b) || on(d3, a, b, c) || on(d4, a, b, d)
}

fn segment_segment_distance2(a: Point, b: Point, c: Point, d: Point) -> f64 {
    if segments_intersect(a, b, c, d) {
        return 0.0;
    }
    point_segment_distance2(a, c, d)
        .min(point_segment_distance2(b, c, d))
        .min(point_segment_distance2(c, a, b))
        .min(point_segment_distance2(d, a, b))
}

impl PolygonGeom {
    pub fn new(parts: Vec<PolygonPart>) -> Result<Self, GeometryError> {
        if parts.is_empty() {
            return Err(GeometryError::Invalid("polygon has no parts".into()));
        }
        let mut bbox = Rect::empty();
        for part in &parts {
            validate_ring(&part.exterior)?;
            for h in &part.holes {
                validate_ring(h)?;
            }
            let ext = ring_signed_area(&part.exterior).abs();
            let holes: f64 = part.holes.iter().map(|h| ring_signed_area(h).abs()).sum();
            if ext - holes <= 0.0 {
                return Err(GeometryError::DegeneratePart);
            }
            for p in &part.exterior {
                bbox.extend(*p);
            }
        }
        Ok(PolygonGeom { parts, bbox })
    }

    /// Single-ring polygon without holes.
    pub fn simple(exterior: Vec<Point>) -> Result<Self, GeometryError> {
        PolygonGeom::new(vec![PolygonPart { exterior, holes: Vec::new() }])
    }

    pub fn with_holes(exterior: Vec<Point>, holes: Vec<Vec<Point>>) -> Result<Self, GeometryError> {
        PolygonGeom::new(vec![PolygonPart { exterior, holes }])
    }

    /// Axis-aligned rectangle, a common fixture shape.
    pub fn rectangle(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Result<Self, GeometryError> {
        PolygonGeom::simple(vec![
            Point::new(min_x, min_y),
            Point::new(max_x, min_y),
            Point::new(max_x, max_y),
            Point::new(min_x, max_y),
            Point::new(min_x, min_y),
        ])
    }

    pub fn parts(&self) -> &[PolygonPart] {
        &self.parts
    }

    pub fn bbox(&self) -> Rect {
        self.bbox
    }

    /// All rings (exteriors and holes) across all parts.
    pub fn rings(&self) -> impl Iterator<Item = &[Point]> {
        self.parts.iter().flat_map(|part| {
            std::iter::once(part.exterior.as_slice()).chain(part.holes.iter().map(|h| h.as_slice()))
        })
    }

    /// Total positive area (exteriors minus holes).
    pub fn area(&self) -> f64 {
        self.parts
            .iter()
            .map(|part| {
                let ext = ring_signed_area(&part.exterior).abs();
                let holes: f64 = part.holes.iter().map(|h| ring_signed_area(h).abs()).sum();
                ext - holes
            })
            .sum()
    }

    fn on_boundary(&self, p: Point) -> bool {
        let eps2 = BOUNDARY_EPS * BOUNDARY_EPS;
        self.rings()
            .any(|ring| ring.windows(2).any(|w| point_segment_distance2(p, w[0], w[1]) <= eps2))
    }

    /// Even-odd containment; points on the boundary count as inside.
    pub fn contains(&self, p: Point) -> bool {
        if p.x < self.bbox.min_x - BOUNDARY_EPS
            || p.x > self.bbox.max_x + BOUNDARY_EPS
            || p.y < self.bbox.min_y - BOUNDARY_EPS
            || p.y > self.bbox.max_y + BOUNDARY_EPS
        {
            return false;
        }
        if self.on_boundary(p) {
            return true;
        }
        let mut inside = false;
        for ring in self.rings() {
            for w in ring.windows(2) {
                let (a, b) = (w[0], w[1]);
                if (a.y > p.y) != (b.y > p.y) {
                    let t = (p.y - a.y) / (b.y - a.y);
                    let x_int = a.x + t * (b.x - a.x);
                    if p.x < x_int {
                        inside = !inside;
                    }
                }
            }
        }
        inside
    }

    /// Minimum Euclidean distance from `p` to the polygon: 0 when inside or
    /// on the boundary, otherwise distance to the nearest boundary segment.
    pub fn distance_to_point(&self, p: Point) -> f64 {
        if self.contains(p) {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for ring in self.rings() {
            for w in ring.windows(2) {
                best = best.min(point_segment_distance2(p, w[0], w[1]));
            }
        }
        best.sqrt()
    }

    /// Area-weighted centroid; multi-part polygons combine parts by area and
    /// holes subtract. Construction guarantees positive area, so this cannot
    /// degenerate.
    pub fn centroid(&self) -> Point {
        let ox = self.bbox.min_x;
        let oy = self.bbox.min_y;
        let mut a2_total = 0.0;
        let mut mx_total = 0.0;
        let mut my_total = 0.0;
        for part in &self.parts {
            let (a2, mx, my) = ring_moments(&part.exterior, ox, oy);
            let sign = if a2 < 0.0 { -1.0 } else { 1.0 };
            a2_total += sign * a2;
            mx_total += sign * mx;
            my_total += sign * my;
            for hole in &part.holes {
                let (ha2, hmx, hmy) = ring_moments(hole, ox, oy);
                let hsign = if ha2 < 0.0 { -1.0 } else { 1.0 };
                a2_total -= hsign * ha2;
                mx_total -= hsign * hmx;
                my_total -= hsign * hmy;
            }
        }
        Point::new(ox + mx_total / (3.0 * a2_total), oy + my_total / (3.0 * a2_total))
    }

    /// Queen-style contact: true when any vertex of one polygon lies within
    /// `tol` of the other's boundary. Captures shared edges and lone shared
    /// corners between snapped polygons.
    pub fn touches(&self, other: &PolygonGeom, tol: f64) -> bool {
        if !self.bbox.expanded(tol).intersects(&other.bbox) {
            return false;
        }
        let tol2 = tol * tol;
        let vertex_near = |verts: &PolygonGeom, boundary: &PolygonGeom| {
            verts.rings().any(|ring| {
                // skip the repeated closing vertex
                ring[..ring.len() - 1].iter().any(|&v| {
                    boundary.rings().any(|bring| {
                        bring
                            .windows(2)
                            .any(|w| point_segment_distance2(v, w[0], w[1]) <= tol2)
                    })
                })
            })
        };
        vertex_near(self, other) || vertex_near(other, self)
    }

    /// Minimum distance between the boundaries of two polygons (0 when they
    /// touch or cross).
    pub fn boundary_distance(&self, other: &PolygonGeom) -> f64 {
        let mut best2 = f64::INFINITY;
        for ring_a in self.rings() {
            for wa in ring_a.windows(2) {
                for ring_b in other.rings() {
                    for wb in ring_b.windows(2) {
                        let d2 = segment_segment_distance2(wa[0], wa[1], wb[0], wb[1]);
                        if d2 < best2 {
                            best2 = d2;
                            if best2 == 0.0 {
                                return 0.0;
                            }
                        }
                    }
                }
            }
        }
        best2.sqrt()
    }
}

// ---------------------------------------------------------------------------
// GeoJSON interop (coordinates taken as projected planar values)
// ---------------------------------------------------------------------------

fn ring_from_positions(pos: &[Vec<f64>]) -> Result<Vec<Point>, GeometryError> {
    pos.iter()
        .map(|c| {
            if c.len() < 2 {
                Err(GeometryError::Invalid("position with fewer than 2 coordinates".into()))
            } else {
                Ok(Point::new(c[0], c[1]))
            }
        })
        .collect()
}

fn part_from_rings(rings: &[Vec<Vec<f64>>]) -> Result<PolygonPart, GeometryError> {
    if rings.is_empty() {
        return Err(GeometryError::Invalid("polygon with no rings".into()));
    }
    Ok(PolygonPart {
        exterior: ring_from_positions(&rings[0])?,
        holes: rings[1..]
            .iter()
            .map(|r| ring_from_positions(r))
            .collect::<Result<_, _>>()?,
    })
}

/// Convert a GeoJSON Polygon or MultiPolygon into a [`PolygonGeom`].
pub fn polygon_from_geojson(geom: &geojson::Geometry) -> Result<PolygonGeom, GeometryError> {
    match &geom.value {
        geojson::Value::Polygon(rings) => PolygonGeom::new(vec![part_from_rings(rings)?]),
        geojson::Value::MultiPolygon(polys) => PolygonGeom::new(
            polys.iter().map(|rings| part_from_rings(rings)).collect::<Result<_, _>>()?,
        ),
        other => Err(GeometryError::Invalid(format!(
            "expected Polygon or MultiPolygon, got {}",
            other.type_name()
        ))),
    }
}

pub fn point_from_geojson(geom: &geojson::Geometry) -> Result<Point, GeometryError> {
    match &geom.value {
        geojson::Value::Point(c) if c.len() >= 2 => Ok(Point::new(c[0], c[1])),
        _ => Err(GeometryError::Invalid("expected Point geometry".into())),
    }
}

pub fn polygon_to_geojson(g: &PolygonGeom) -> geojson::Geometry {
    let part_coords = |part: &PolygonPart| -> Vec<Vec<Vec<f64>>> {
        std::iter::once(&part.exterior)
            .chain(part.holes.iter())
            .map(|ring| ring.iter().map(|p| vec![p.x, p.y]).collect())
            .collect()
    };
    if g.parts.len() == 1 {
        geojson::Geometry::new(geojson::Value::Polygon(part_coords(&g.parts[0])))
    } else {
        geojson::Geometry::new(geojson::Value::MultiPolygon(
            g.parts.iter().map(part_coords).collect(),
        ))
    }
}

// ---------------------------------------------------------------------------
// Spatial index
// ---------------------------------------------------------------------------

/// Either kind of indexable geometry.
#[derive(Debug, Clone)]
pub enum Geometry {
    Point(Point),
    Polygon(PolygonGeom),
}

impl Geometry {
    pub fn distance_to_point(&self, p: Point) -> f64 {
        match self {
            Geometry::Point(q) => q.distance_to(p),
            Geometry::Polygon(g) => g.distance_to_point(p),
        }
    }

    fn envelope(&self) -> AABB<[f64; 2]> {
        match self {
            Geometry::Point(q) => AABB::from_point([q.x, q.y]),
            Geometry::Polygon(g) => {
                let b = g.bbox();
                AABB::from_corners([b.min_x, b.min_y], [b.max_x, b.max_y])
            }
        }
    }
}

struct TreeItem {
    id: u64,
    bbox: AABB<[f64; 2]>,
    geom: Geometry,
}

impl RTreeObject for TreeItem {
    type Envelope = AABB<[f64; 2]>;

    fn envelope(&self) -> Self::Envelope {
        self.bbox
    }
}

impl RsPointDistance for TreeItem {
    fn distance_2(&self, point: &[f64; 2]) -> f64 {
        let d = self.geom.distance_to_point(Point::new(point[0], point[1]));
        d * d
    }
}

/// Bulk-loaded rectangle tree over geometry bounding boxes.
///
/// Queries use exact geometry distances (polygon distance is 0 inside), so
/// results match a brute-force scan; `nearest` breaks exact distance ties by
/// smallest id.
pub struct SpatialIndex {
    tree: RTree<TreeItem>,
    len: usize,
}

impl SpatialIndex {
    pub fn build(items: Vec<(u64, Geometry)>) -> SpatialIndex {
        let len = items.len();
        let entries = items
            .into_iter()
            .map(|(id, geom)| TreeItem { id, bbox: geom.envelope(), geom })
            .collect();
        SpatialIndex { tree: RTree::bulk_load(entries), len }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Globally nearest item and its distance; exact ties go to the smallest id.
    pub fn nearest(&self, p: Point) -> Result<(u64, f64), GeometryError> {
        let mut iter = self.tree.nearest_neighbor_iter_with_distance_2(&[p.x, p.y]);
        let (first, best_d2) = iter.next().ok_or(GeometryError::EmptyIndex)?;
        let mut best_id = first.id;
        for (item, d2) in iter {
            if d2 > best_d2 {
                break;
            }
            best_id = best_id.min(item.id);
        }
        Ok((best_id, best_d2.sqrt()))
    }

    /// Ids of all items at distance ≤ r from `p`, sorted ascending.
    pub fn within_radius(&self, p: Point, r: f64) -> Vec<u64> {
        let mut ids: Vec<u64> = self
            .tree
            .locate_within_distance([p.x, p.y], r * r)
            .map(|item| item.id)
            .collect();
        ids.sort_unstable();
        ids
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_square() -> PolygonGeom {
        PolygonGeom::rectangle(0.0, 0.0, 1.0, 1.0).unwrap()
    }

    /// Annulus: outer square [0,4]², inner hole [1,3]².
    fn annulus() -> PolygonGeom {
        PolygonGeom::with_holes(
            vec![
                Point::new(0.0, 0.0),
                Point::new(4.0, 0.0),
                Point::new(4.0, 4.0),
                Point::new(0.0, 4.0),
                Point::new(0.0, 0.0),
            ],
            vec![vec![
                Point::new(1.0, 1.0),
                Point::new(3.0, 1.0),
                Point::new(3.0, 3.0),
                Point::new(1.0, 3.0),
                Point::new(1.0, 1.0),
            ]],
        )
        .unwrap()
    }

    // Independent even-odd ray caster used as an oracle: casts in +y instead
    // of +x and never consults the boundary shortcut.
    fn raycast_oracle(g: &PolygonGeom, p: Point) -> bool {
        let mut crossings = 0;
        for ring in g.rings() {
            for w in ring.windows(2) {
                let (a, b) = (w[0], w[1]);
                if (a.x > p.x) != (b.x > p.x) {
                    let t = (p.x - a.x) / (b.x - a.x);
                    let y_int = a.y + t * (b.y - a.y);
                    if p.y < y_int {
                        crossings += 1;
                    }
                }
            }
        }
        crossings % 2 == 1
    }

    #[test]
    fn ring_validation() {
        assert_eq!(
            PolygonGeom::simple(vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 0.0)]),
            Err(GeometryError::TooFewVertices(3))
        );
        assert_eq!(
            PolygonGeom::simple(vec![
                Point::new(0.0, 0.0),
                Point::new(1.0, 0.0),
                Point::new(1.0, 1.0),
                Point::new(0.0, 1.0),
            ]),
            Err(GeometryError::UnclosedRing)
        );
        // collinear ring
        assert_eq!(
            PolygonGeom::simple(vec![
                Point::new(0.0, 0.0),
                Point::new(1.0, 0.0),
                Point::new(2.0, 0.0),
                Point::new(0.0, 0.0),
            ]),
            Err(GeometryError::ZeroArea)
        );
        assert!(PolygonGeom::simple(vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(f64::NAN, 1.0),
            Point::new(0.0, 0.0),
        ])
        .is_err());
    }

    #[test]
    fn contains_center_of_unit_square() {
        assert!(unit_square().contains(Point::new(0.5, 0.5)));
    }

    #[test]
    fn contains_rejects_outside_point() {
        assert!(!unit_square().contains(Point::new(2.0, 2.0)));
    }

    #[test]
    fn boundary_counts_as_inside() {
        let sq = unit_square();
        assert!(sq.contains(Point::new(0.0, 0.5)));
        assert!(sq.contains(Point::new(1.0, 1.0)));
        assert_eq!(sq.distance_to_point(Point::new(0.0, 0.5)), 0.0);
    }

    #[test]
    fn hole_excludes_interior_point() {
        let g = annulus();
        let in_hole = Point::new(2.0, 2.0);
        assert!(!g.contains(in_hole));
        assert!(!raycast_oracle(&g, in_hole));
        // ring material is inside
        let in_ring = Point::new(0.5, 2.0);
        assert!(g.contains(in_ring));
        assert!(raycast_oracle(&g, in_ring));
    }

    #[test]
    fn containment_matches_raycast_oracle_on_random_points() {
        let g = annulus();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..2000 {
            let p = Point::new(rng.gen_range(-1.0..5.0), rng.gen_range(-1.0..5.0));
            // stay away from boundaries where the oracle's open/closed rule differs
            let near_boundary = g
                .rings()
                .any(|r| r.windows(2).any(|w| point_segment_distance2(p, w[0], w[1]) < 1e-6));
            if near_boundary {
                continue;
            }
            assert_eq!(g.contains(p), raycast_oracle(&g, p), "disagreement at {p:?}");
        }
    }

    #[test]
    fn distance_zero_inside() {
        assert_eq!(unit_square().distance_to_point(Point::new(0.25, 0.75)), 0.0);
    }

    #[test]
    fn distance_axis_aligned() {
        let sq = unit_square();
        assert!((sq.distance_to_point(Point::new(-500.0, 0.5)) - 500.0).abs() < 1e-12);
    }

    #[test]
    fn distance_matches_segment_oracle_on_random_convex_polygons() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            // random convex polygon: points on a circle with jittered radius, sorted by angle
            let n = rng.gen_range(3..10usize);
            let mut angles: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
            angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
            angles.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
            if angles.len() < 3 {
                continue;
            }
            let r = rng.gen_range(0.5..3.0);
            let mut ring: Vec<Point> =
                angles.iter().map(|t| Point::new(r * t.cos(), r * t.sin())).collect();
            ring.push(ring[0]);
            let g = match PolygonGeom::simple(ring.clone()) {
                Ok(g) => g,
                Err(_) => continue,
            };
            let p = Point::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            // oracle: exhaustive point-to-segment distances, fresh formula
            let mut oracle = f64::INFINITY;
            for w in ring.windows(2) {
                let (a, b) = (w[0], w[1]);
                let vx = b.x - a.x;
                let vy = b.y - a.y;
                let len2 = vx * vx + vy * vy;
                let t = (((p.x - a.x) * vx + (p.y - a.y) * vy) / len2).clamp(0.0, 1.0);
                let cx = a.x + t * vx;
                let cy = a.y + t * vy;
                oracle = oracle.min(((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt());
            }
            if g.contains(p) {
                assert_eq!(g.distance_to_point(p), 0.0);
            } else {
                assert!((g.distance_to_point(p) - oracle).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn distance_iff_containment() {
        let g = annulus();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let p = Point::new(rng.gen_range(-1.0..5.0), rng.gen_range(-1.0..5.0));
            assert_eq!(g.distance_to_point(p) == 0.0, g.contains(p));
        }
    }

    #[test]
    fn centroid_of_unit_square() {
        let c = unit_square().centroid();
        assert!((c.x - 0.5).abs() < 1e-12 && (c.y - 0.5).abs() < 1e-12);
    }

    #[test]
    fn centroid_translation_equivariance() {
        let base = PolygonGeom::simple(vec![
            Point::new(0.0, 0.0),
            Point::new(3.0, 0.0),
            Point::new(3.0, 1.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 2.0),
            Point::new(0.0, 2.0),
            Point::new(0.0, 0.0),
        ])
        .unwrap();
        let (dx, dy) = (1234.5, -987.25);
        let moved = PolygonGeom::simple(
            base.parts()[0]
                .exterior
                .iter()
                .map(|p| Point::new(p.x + dx, p.y + dy))
                .collect(),
        )
        .unwrap();
        let c0 = base.centroid();
        let c1 = moved.centroid();
        assert!((c1.x - c0.x - dx).abs() < 1e-9);
        assert!((c1.y - c0.y - dy).abs() < 1e-9);
    }

    #[test]
    fn centroid_of_l_shape_matches_grid_oracle() {
        // L-shape: 3x1 bar plus 1x1 block on top of its left end
        let g = PolygonGeom::simple(vec![
            Point::new(0.0, 0.0),
            Point::new(3.0, 0.0),
            Point::new(3.0, 1.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 2.0),
            Point::new(0.0, 2.0),
            Point::new(0.0, 0.0),
        ])
        .unwrap();
        // fine-grid sampling oracle
        let step = 0.004;
        let (mut sx, mut sy, mut count) = (0.0, 0.0, 0u64);
        let mut y = step / 2.0;
        while y < 2.0 {
            let mut x = step / 2.0;
            while x < 3.0 {
                if g.contains(Point::new(x, y)) {
                    sx += x;
                    sy += y;
                    count += 1;
                }
                x += step;
            }
            y += step;
        }
        let oracle = Point::new(sx / count as f64, sy / count as f64);
        let c = g.centroid();
        assert!((c.x - oracle.x).abs() < 1e-3, "{c:?} vs {oracle:?}");
        assert!((c.y - oracle.y).abs() < 1e-3, "{c:?} vs {oracle:?}");
    }

    #[test]
    fn centroid_of_annulus_is_center() {
        let c = annulus().centroid();
        assert!((c.x - 2.0).abs() < 1e-12 && (c.y - 2.0).abs() < 1e-12);
    }

    #[test]
    fn touch_shared_edge_and_corner() {
        let a = PolygonGeom::rectangle(0.0, 0.0, 1.0, 1.0).unwrap();
        let edge = PolygonGeom::rectangle(1.0, 0.0, 2.0, 1.0).unwrap();
        let corner = PolygonGeom::rectangle(1.0, 1.0, 2.0, 2.0).unwrap();
        let apart = PolygonGeom::rectangle(1.0 + 1e-5, 0.0, 2.0, 1.0).unwrap();
        let tol = 1e-6;
        assert!(a.touches(&edge, tol));
        assert!(a.touches(&corner, tol));
        assert!(!a.touches(&apart, tol)); // separated by 10 * tol
        // symmetry and reflexivity
        assert!(edge.touches(&a, tol));
        assert!(a.touches(&a, tol));
    }

    #[test]
    fn boundary_distance_between_squares() {
        let a = PolygonGeom::rectangle(0.0, 0.0, 1.0, 1.0).unwrap();
        let b = PolygonGeom::rectangle(3.0, 0.0, 4.0, 1.0).unwrap();
        assert!((a.boundary_distance(&b) - 2.0).abs() < 1e-12);
        let c = PolygonGeom::rectangle(1.0, 0.0, 2.0, 1.0).unwrap();
        assert_eq!(a.boundary_distance(&c), 0.0);
        // diagonal offset: nearest corners (1,1) and (2,2)
        let d = PolygonGeom::rectangle(2.0, 2.0, 3.0, 3.0).unwrap();
        assert!((a.boundary_distance(&d) - std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn distances_invariant_under_rotation_and_translation() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let square = unit_square();
        for _ in 0..100 {
            let p = Point::new(rng.gen_range(-3.0..4.0), rng.gen_range(-3.0..4.0));
            let d0 = square.distance_to_point(p);
            let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let (dx, dy) = (rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0));
            let xf = |q: Point| {
                Point::new(
                    q.x * theta.cos() - q.y * theta.sin() + dx,
                    q.x * theta.sin() + q.y * theta.cos() + dy,
                )
            };
            let moved = PolygonGeom::simple(
                square.parts()[0].exterior.iter().map(|&q| xf(q)).collect(),
            )
            .unwrap();
            let d1 = moved.distance_to_point(xf(p));
            assert!((d1 - d0).abs() <= 1e-9 * d0.max(1.0), "d0={d0} d1={d1}");
        }
    }

    #[test]
    fn index_single_item() {
        let idx = SpatialIndex::build(vec![(42, Geometry::Point(Point::new(3.0, 4.0)))]);
        let (id, d) = idx.nearest(Point::new(0.0, 0.0)).unwrap();
        assert_eq!(id, 42);
        assert!((d - 5.0).abs() < 1e-12);
    }

    #[test]
    fn index_empty_nearest_errors() {
        let idx = SpatialIndex::build(Vec::new());
        assert_eq!(idx.nearest(Point::new(0.0, 0.0)), Err(GeometryError::EmptyIndex));
    }

    #[test]
    fn index_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let items: Vec<(u64, Geometry)> = (0..1000)
            .map(|i| {
                (i, Geometry::Point(Point::new(rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0))))
            })
            .collect();
        let geoms: Vec<(u64, Geometry)> = items.clone();
        let idx = SpatialIndex::build(items);
        for _ in 0..100 {
            let p = Point::new(rng.gen_range(-10.0..110.0), rng.gen_range(-10.0..110.0));
            // linear-scan oracle using the same distance arithmetic
            let (mut best_id, mut best_d2) = (u64::MAX, f64::INFINITY);
            for (id, g) in &geoms {
                let d = g.distance_to_point(p);
                let d2 = d * d;
                if d2 < best_d2 || (d2 == best_d2 && *id < best_id) {
                    best_d2 = d2;
                    best_id = *id;
                }
            }
            let (id, d) = idx.nearest(p).unwrap();
            assert_eq!(id, best_id);
            assert!((d - best_d2.sqrt()).abs() == 0.0);

            let r = rng.gen_range(0.0..30.0);
            let mut want: Vec<u64> = geoms
                .iter()
                .filter(|(_, g)| g.distance_to_point(p) <= r)
                .map(|(id, _)| *id)
                .collect();
            want.sort_unstable();
            assert_eq!(idx.within_radius(p, r), want);
        }
    }

    #[test]
    fn index_radius_zero_returns_containing_polygons() {
        let a = PolygonGeom::rectangle(0.0, 0.0, 1.0, 1.0).unwrap();
        let b = PolygonGeom::rectangle(5.0, 5.0, 6.0, 6.0).unwrap();
        let idx = SpatialIndex::build(vec![(1, Geometry::Polygon(a)), (2, Geometry::Polygon(b))]);
        assert_eq!(idx.within_radius(Point::new(0.5, 0.5), 0.0), vec![1]);
        assert_eq!(idx.within_radius(Point::new(3.0, 3.0), 0.0), Vec::<u64>::new());
    }

    #[test]
    fn nearest_breaks_ties_by_smallest_id() {
        let idx = SpatialIndex::build(vec![
            (7, Geometry::Point(Point::new(1.0, 0.0))),
            (3, Geometry::Point(Point::new(-1.0, 0.0))),
        ]);
        let (id, d) = idx.nearest(Point::new(0.0, 0.0)).unwrap();
        assert_eq!(id, 3);
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scale_conversions() {
        let feet = LinearScale::default();
        assert_eq!(feet.miles_to_units(0.25), 1320.0);
        let meters = LinearScale::new(3.280_839_895_013_123);
        assert!((meters.units_to_miles(meters.miles_to_units(1.0)) - 1.0).abs() < 1e-12);
    }
}
