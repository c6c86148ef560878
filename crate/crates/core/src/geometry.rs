//! Geometric primitives shared by the ranging, calibration and localization
//! code: 3-D points, validated anchor sets, centroid and the 2-D convex
//! envelope used to classify tag positions as inside or outside the anchor
//! footprint.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance on twice-signed-area (m²) below which three points are
/// treated as collinear. Far below any physical anchor placement noise.
pub const COLLINEARITY_TOL: f64 = 1e-9;

/// Errors raised by geometric constructors and hull computation.
#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("need at least {needed} points/anchors, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("duplicate anchor id `{0}`")]
    DuplicateAnchorId(String),
    #[error("non-finite coordinate in `{0}`")]
    NonFinite(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
}

/// Opaque anchor identifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnchorId(pub String);

impl AnchorId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for AnchorId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for AnchorId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

/// A point in 3-D space, coordinates in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Euclidean distance to `other`.
    pub fn distance(&self, other: &Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    /// Distance in the xy-plane only.
    pub fn distance_xy(&self, other: &Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }

    /// Planar radius from the origin, `hypot(x, y)`.
    pub fn radius_xy(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// One anchor: an identifier plus its 3-D position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub id: AnchorId,
    pub position: Point3,
}

impl Anchor {
    pub fn new(id: impl Into<String>, position: Point3) -> Self {
        Self {
            id: AnchorId::new(id),
            position,
        }
    }
}

/// A validated, ordered set of anchors.
///
/// Invariants enforced at construction: at least 3 anchors, unique ids,
/// finite coordinates, and xy-projections that are not all collinear
/// (collinear anchors cannot support planar localization).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorArray {
    anchors: Vec<Anchor>,
}

impl AnchorArray {
    pub fn new(anchors: Vec<Anchor>) -> Result<Self, GeometryError> {
        if anchors.len() < 3 {
            return Err(GeometryError::TooFewPoints {
                needed: 3,
                got: anchors.len(),
            });
        }
        for a in &anchors {
            if !a.position.is_finite() {
                return Err(GeometryError::NonFinite(a.id.to_string()));
            }
        }
        for (i, a) in anchors.iter().enumerate() {
            if anchors[..i].iter().any(|b| b.id == a.id) {
                return Err(GeometryError::DuplicateAnchorId(a.id.to_string()));
            }
        }
        if max_twice_area_xy(&anchors) <= COLLINEARITY_TOL {
            return Err(GeometryError::DegenerateGeometry(
                "anchor xy-projections are all collinear".into(),
            ));
        }
        Ok(Self { anchors })
    }

    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn position_of(&self, id: &AnchorId) -> Option<Point3> {
        self.anchors
            .iter()
            .find(|a| &a.id == id)
            .map(|a| a.position)
    }

    /// Component-wise arithmetic mean of the anchor positions.
    pub fn centroid(&self) -> Point3 {
        let n = self.anchors.len() as f64;
        let mut c = Point3::new(0.0, 0.0, 0.0);
        for a in &self.anchors {
            c.x += a.position.x;
            c.y += a.position.y;
            c.z += a.position.z;
        }
        Point3::new(c.x / n, c.y / n, c.z / n)
    }

    /// Convex envelope of the anchor xy-projections. Anchor z is ignored;
    /// the in/out classification is planar even when anchors sit at
    /// different heights.
    pub fn envelope(&self) -> Result<ConvexEnvelope2D, GeometryError> {
        let pts: Vec<(f64, f64)> = self
            .anchors
            .iter()
            .map(|a| (a.position.x, a.position.y))
            .collect();
        convex_hull_2d(&pts)
    }
}

/// Largest twice-signed-area over all triples of anchor xy-projections.
fn max_twice_area_xy(anchors: &[Anchor]) -> f64 {
    let n = anchors.len();
    let mut best = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let a = anchors[i].position;
                let b = anchors[j].position;
                let c = anchors[k].position;
                let area2 = ((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)).abs();
                best = best.max(area2);
            }
        }
    }
    best
}

/// A strictly convex polygon in the xy-plane, vertices in counter-clockwise
/// order (signed area > 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexEnvelope2D {
    vertices: Vec<(f64, f64)>,
}

impl ConvexEnvelope2D {
    pub fn vertices(&self) -> &[(f64, f64)] {
        &self.vertices
    }

    /// Twice the signed area of the polygon (positive for CCW).
    pub fn signed_area2(&self) -> f64 {
        let v = &self.vertices;
        let n = v.len();
        let mut acc = 0.0;
        for i in 0..n {
            let (x0, y0) = v[i];
            let (x1, y1) = v[(i + 1) % n];
            acc += x0 * y1 - x1 * y0;
        }
        acc
    }

    /// True iff `(p.x, p.y)` lies inside or on the boundary of the envelope.
    /// Boundary points count as inside.
    pub fn contains_xy(&self, p: Point3) -> bool {
        let v = &self.vertices;
        let n = v.len();
        for i in 0..n {
            let (x0, y0) = v[i];
            let (x1, y1) = v[(i + 1) % n];
            let cross = (x1 - x0) * (p.y - y0) - (y1 - y0) * (p.x - x0);
            if cross < -1e-12 {
                return false;
            }
        }
        true
    }
}

/// Counter-clockwise convex hull of a planar point set (monotone chain).
///
/// Collinear boundary points are dropped so the result is strictly convex.
/// Returns `DegenerateGeometry` when all points are collinear.
pub fn convex_hull_2d(points: &[(f64, f64)]) -> Result<ConvexEnvelope2D, GeometryError> {
    if points.len() < 3 {
        return Err(GeometryError::TooFewPoints {
            needed: 3,
            got: points.len(),
        });
    }
    for &(x, y) in points {
        if !x.is_finite() || !y.is_finite() {
            return Err(GeometryError::NonFinite("hull input".into()));
        }
    }

    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();

    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| -> f64 {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };

    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2
            && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= COLLINEARITY_TOL
        {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2
            && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= COLLINEARITY_TOL
        {
            upper.pop();
        }
        upper.push(p);
    }

    lower.pop();
    upper.pop();
    lower.extend(upper);

    if lower.len() < 3 {
        return Err(GeometryError::DegenerateGeometry(
            "all points collinear".into(),
        ));
    }
    Ok(ConvexEnvelope2D { vertices: lower })
}
