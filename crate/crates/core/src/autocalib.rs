//! Anchor self-calibration: reconstruct anchor positions from averaged
//! pairwise two-way-ranging distances under a canonical frame convention,
//! plus the latency model of the ranging rounds.
//!
//! The canonical frame is the minimum information a mobile deployment has
//! to agree on: the first anchor is the origin, the x axis points from the
//! first to the second anchor, and the declared ordering walks the boundary
//! of the anchor envelope counter-clockwise. Everything else comes from the
//! measured distances.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Anchor, AnchorArray, AnchorId, Point3};
use crate::ranging::{sample_range, RangingNoiseModel};

#[derive(Debug, Error, PartialEq)]
pub enum CalibrationError {
    #[error("invalid distance matrix: {0}")]
    InvalidMatrix(String),
    #[error("invalid calibration config: {0}")]
    InvalidConfig(String),
    #[error("frame ordering does not match matrix ids: {0}")]
    FrameMismatch(String),
    #[error("inconsistent distances: {0}")]
    InconsistentDistances(String),
    #[error("ambiguous placement for anchor `{id}`: residual {residual:.3} m exceeds gate")]
    AmbiguousPlacement { id: String, residual: f64 },
}

/// Residual gate for placing an anchor from its distances to the already
/// placed ones; flags gross failures without rejecting normal noise.
pub const PLACEMENT_RESIDUAL_GATE: f64 = 0.5;

/// Symmetric matrix of averaged pairwise distances between anchors.
///
/// Entry `(i, j)` averages both directed measurements of the pair, so the
/// matrix is symmetric by construction. `entry_sigma`, when known, is the
/// pooled standard error of the averaged entries and drives the
/// triangle-inequality slack in [`solve_anchor_positions`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseDistanceMatrix {
    ids: Vec<AnchorId>,
    d: Vec<Vec<f64>>,
    entry_sigma: Option<f64>,
}

impl PairwiseDistanceMatrix {
    pub fn new(ids: Vec<AnchorId>, d: Vec<Vec<f64>>) -> Result<Self, CalibrationError> {
        let n = ids.len();
        if n < 3 {
            return Err(CalibrationError::InvalidMatrix(format!(
                "need >= 3 anchors, got {n}"
            )));
        }
        if d.len() != n || d.iter().any(|row| row.len() != n) {
            return Err(CalibrationError::InvalidMatrix(format!(
                "matrix must be {n}x{n}"
            )));
        }
        for i in 0..n {
            if d[i][i] != 0.0 {
                return Err(CalibrationError::InvalidMatrix(format!(
                    "diagonal entry ({i},{i}) must be 0"
                )));
            }
            for j in 0..n {
                if i != j {
                    if !(d[i][j].is_finite() && d[i][j] > 0.0) {
                        return Err(CalibrationError::InvalidMatrix(format!(
                            "entry ({i},{j}) must be finite and > 0"
                        )));
                    }
                    if (d[i][j] - d[j][i]).abs() > 1e-9 {
                        return Err(CalibrationError::InvalidMatrix(format!(
                            "entries ({i},{j}) and ({j},{i}) differ"
                        )));
                    }
                }
            }
        }
        Ok(Self {
            ids,
            d,
            entry_sigma: None,
        })
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[AnchorId] {
        &self.ids
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i][j]
    }

    pub fn entry_sigma(&self) -> Option<f64> {
        self.entry_sigma
    }

    fn index_of(&self, id: &AnchorId) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }
}

/// Ranging-round configuration: how many samples per directed pair and the
/// timing constants of the latency model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub samples_per_pair: usize,
    pub per_ranging_time: f64,
    pub fixed_overhead: f64,
}

/// Time of one ranging exchange, fitted so a 4-anchor round takes 2.5 s at
/// 50 samples per pair (600 rangings) and 0.9 s at 5 (60 rangings).
pub const DEFAULT_PER_RANGING_TIME: f64 = 1.6 / 540.0;
/// Fixed startup/reporting overhead from the same two-point fit.
pub const DEFAULT_FIXED_OVERHEAD: f64 = 0.9 - 60.0 * DEFAULT_PER_RANGING_TIME;

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            samples_per_pair: 50,
            per_ranging_time: DEFAULT_PER_RANGING_TIME,
            fixed_overhead: DEFAULT_FIXED_OVERHEAD,
        }
    }
}

impl CalibrationConfig {
    pub fn new(
        samples_per_pair: usize,
        per_ranging_time: f64,
        fixed_overhead: f64,
    ) -> Result<Self, CalibrationError> {
        if !(1..=1000).contains(&samples_per_pair) {
            return Err(CalibrationError::InvalidConfig(format!(
                "samples_per_pair must be in [1, 1000], got {samples_per_pair}"
            )));
        }
        if per_ranging_time < 0.0 || fixed_overhead < 0.0 {
            return Err(CalibrationError::InvalidConfig(
                "times must be >= 0".into(),
            ));
        }
        Ok(Self {
            samples_per_pair,
            per_ranging_time,
            fixed_overhead,
        })
    }

    pub fn with_samples(samples_per_pair: usize) -> Result<Self, CalibrationError> {
        Self::new(
            samples_per_pair,
            DEFAULT_PER_RANGING_TIME,
            DEFAULT_FIXED_OVERHEAD,
        )
    }
}

/// The frame convention: anchor ids in counter-clockwise boundary order,
/// first element is the origin anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalFrame {
    pub ordering: Vec<AnchorId>,
}

impl CanonicalFrame {
    pub fn new(ordering: Vec<AnchorId>) -> Self {
        Self { ordering }
    }

    /// Derive the ordering from known positions: sort counter-clockwise by
    /// angle around the xy-centroid, then rotate so the array's first anchor
    /// stays the origin.
    pub fn from_positions(anchors: &AnchorArray) -> Self {
        let c = anchors.centroid();
        let mut order: Vec<(f64, AnchorId)> = anchors
            .anchors()
            .iter()
            .map(|a| {
                let ang = (a.position.y - c.y).atan2(a.position.x - c.x);
                (ang, a.id.clone())
            })
            .collect();
        order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let first = &anchors.anchors()[0].id;
        let start = order.iter().position(|(_, id)| id == first).unwrap();
        order.rotate_left(start);
        Self {
            ordering: order.into_iter().map(|(_, id)| id).collect(),
        }
    }
}

/// Run the full pairwise ranging round: every ordered pair `(i, j)` draws
/// `samples_per_pair` range samples, and each matrix entry is the mean over
/// both directions (`2 * samples_per_pair` values).
pub fn collect_pairwise<R: Rng + ?Sized>(
    true_anchors: &AnchorArray,
    noise: &RangingNoiseModel,
    cfg: &CalibrationConfig,
    rng: &mut R,
) -> PairwiseDistanceMatrix {
    let n = true_anchors.len();
    let anchors = true_anchors.anchors();
    let mut sums = vec![vec![0.0f64; n]; n];
    let mut samples: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); n]; n];

    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let true_d = anchors[i].position.distance(&anchors[j].position);
            for _ in 0..cfg.samples_per_pair {
                let s = sample_range(true_d, noise, rng);
                sums[i][j] += s;
                samples[i][j].push(s);
            }
        }
    }

    let per_entry = (2 * cfg.samples_per_pair) as f64;
    let mut d = vec![vec![0.0f64; n]; n];
    let mut pooled_sq = 0.0f64;
    let mut pooled_n = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            let mean = (sums[i][j] + sums[j][i]) / per_entry;
            d[i][j] = mean;
            d[j][i] = mean;
            for s in samples[i][j].iter().chain(samples[j][i].iter()) {
                pooled_sq += (s - mean) * (s - mean);
                pooled_n += 1;
            }
        }
    }

    // pooled standard error of the averaged entries
    let entry_sigma = if pooled_n > d.len() {
        let var = pooled_sq / pooled_n as f64;
        Some((var / per_entry).sqrt())
    } else {
        None
    };

    PairwiseDistanceMatrix {
        ids: anchors.iter().map(|a| a.id.clone()).collect(),
        d,
        entry_sigma,
    }
}

/// Reconstruct anchor positions from a distance matrix in the canonical
/// frame, all at height `planar_z`.
///
/// The origin anchor lands at `(0, 0)`, the second on the positive x axis,
/// the third in the upper half plane (counter-clockwise convention), and
/// every later anchor is placed by linearized trilateration against the
/// already placed ones followed by one Gauss-Newton refinement. If the
/// placed polygon comes out clockwise, the third anchor's y sign is flipped
/// and placement re-runs once.
pub fn solve_anchor_positions(
    matrix: &PairwiseDistanceMatrix,
    frame: &CanonicalFrame,
    planar_z: f64,
) -> Result<AnchorArray, CalibrationError> {
    let n = matrix.n();
    if frame.ordering.len() != n {
        return Err(CalibrationError::FrameMismatch(format!(
            "ordering has {} ids, matrix has {n}",
            frame.ordering.len()
        )));
    }
    let order: Vec<usize> = frame
        .ordering
        .iter()
        .map(|id| {
            matrix
                .index_of(id)
                .ok_or_else(|| CalibrationError::FrameMismatch(format!("unknown id `{id}`")))
        })
        .collect::<Result<_, _>>()?;

    let slack = 5.0 * matrix.entry_sigma.unwrap_or(0.0) + 1e-9;
    let dist = |a: usize, b: usize| matrix.d[order[a]][order[b]];

    let d01 = dist(0, 1);
    let d02 = dist(0, 2);
    let d12 = dist(1, 2);
    for (a, b, c) in [(d01, d02, d12), (d02, d01, d12), (d12, d01, d02)] {
        if a > b + c + slack {
            return Err(CalibrationError::InconsistentDistances(format!(
                "first triangle violates the triangle inequality by {:.4} m",
                a - b - c
            )));
        }
    }

    let place = |flip_y2: bool| -> Result<Vec<(f64, f64)>, CalibrationError> {
        let mut pos: Vec<(f64, f64)> = Vec::with_capacity(n);
        pos.push((0.0, 0.0));
        pos.push((d01, 0.0));
        // two-circle intersection, upper solution by convention
        let x2 = (d01 * d01 + d02 * d02 - d12 * d12) / (2.0 * d01);
        let y2 = (d02 * d02 - x2 * x2).max(0.0).sqrt();
        pos.push((x2, if flip_y2 { -y2 } else { y2 }));

        for k in 3..n {
            let dists: Vec<f64> = (0..k).map(|m| dist(k, m)).collect();
            let p = trilaterate_2d(&pos, &dists);
            let p = gauss_newton_step_2d(&pos, &dists, p);
            let residual = rms_residual_2d(&pos, &dists, p);
            if residual > PLACEMENT_RESIDUAL_GATE {
                return Err(CalibrationError::AmbiguousPlacement {
                    id: frame.ordering[k].to_string(),
                    residual,
                });
            }
            pos.push(p);
        }
        Ok(pos)
    };

    let mut pos = place(false)?;
    if n >= 3 && polygon_signed_area2(&pos) < 0.0 {
        pos = place(true)?;
    }

    // report anchors in the matrix's id order
    let mut anchors = vec![None; n];
    for (k, &mi) in order.iter().enumerate() {
        anchors[mi] = Some(Anchor {
            id: matrix.ids[mi].clone(),
            position: Point3::new(pos[k].0, pos[k].1, planar_z),
        });
    }
    let anchors: Vec<Anchor> = anchors.into_iter().map(Option::unwrap).collect();
    AnchorArray::new(anchors)
        .map_err(|e| CalibrationError::InconsistentDistances(e.to_string()))
}

/// Total wall-clock time of a calibration round: every ordered pair ranges
/// `samples_per_pair` times, plus fixed overhead.
pub fn calibration_latency(n_anchors: usize, cfg: &CalibrationConfig) -> f64 {
    assert!(n_anchors >= 2, "need at least 2 anchors to range");
    let rangings = (n_anchors * (n_anchors - 1) * cfg.samples_per_pair) as f64;
    cfg.fixed_overhead + cfg.per_ranging_time * rangings
}

/// Linearized trilateration: subtract the first anchor's circle equation
/// from the others and solve the resulting linear system in least squares.
fn trilaterate_2d(anchors: &[(f64, f64)], dists: &[f64]) -> (f64, f64) {
    let (x0, y0) = anchors[0];
    let r0sq = dists[0] * dists[0];
    let mut ata = [0.0f64; 4];
    let mut atb = [0.0f64; 2];
    for m in 1..anchors.len() {
        let (xm, ym) = anchors[m];
        let a0 = 2.0 * (xm - x0);
        let a1 = 2.0 * (ym - y0);
        let b = r0sq - dists[m] * dists[m] + (xm * xm - x0 * x0) + (ym * ym - y0 * y0);
        ata[0] += a0 * a0;
        ata[1] += a0 * a1;
        ata[2] += a1 * a0;
        ata[3] += a1 * a1;
        atb[0] += a0 * b;
        atb[1] += a1 * b;
    }
    solve_2x2(ata, atb).unwrap_or((x0, y0))
}

/// One Gauss-Newton step on the range residuals to remove the
/// linearization bias of [`trilaterate_2d`].
fn gauss_newton_step_2d(anchors: &[(f64, f64)], dists: &[f64], p: (f64, f64)) -> (f64, f64) {
    let mut jtj = [0.0f64; 4];
    let mut jtf = [0.0f64; 2];
    for (m, &(ax, ay)) in anchors.iter().enumerate() {
        let dx = p.0 - ax;
        let dy = p.1 - ay;
        let rho = (dx * dx + dy * dy).sqrt();
        if rho < 1e-12 {
            continue;
        }
        let f = rho - dists[m];
        let jx = dx / rho;
        let jy = dy / rho;
        jtj[0] += jx * jx;
        jtj[1] += jx * jy;
        jtj[2] += jy * jx;
        jtj[3] += jy * jy;
        jtf[0] += jx * f;
        jtf[1] += jy * f;
    }
    match solve_2x2(jtj, [-jtf[0], -jtf[1]]) {
        Some((sx, sy)) => (p.0 + sx, p.1 + sy),
        None => p,
    }
}

fn rms_residual_2d(anchors: &[(f64, f64)], dists: &[f64], p: (f64, f64)) -> f64 {
    let mut acc = 0.0;
    for (m, &(ax, ay)) in anchors.iter().enumerate() {
        let rho = ((p.0 - ax).powi(2) + (p.1 - ay).powi(2)).sqrt();
        acc += (rho - dists[m]).powi(2);
    }
    (acc / anchors.len() as f64).sqrt()
}

fn polygon_signed_area2(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len();
    let mut acc = 0.0;
    for i in 0..n {
        let (x0, y0) = pts[i];
        let (x1, y1) = pts[(i + 1) % n];
        acc += x0 * y1 - x1 * y0;
    }
    acc
}

fn solve_2x2(a: [f64; 4], b: [f64; 2]) -> Option<(f64, f64)> {
    let det = a[0] * a[3] - a[1] * a[2];
    if det.abs() < 1e-18 {
        return None;
    }
    Some((
        (b[0] * a[3] - a[1] * b[1]) / det,
        (a[0] * b[1] - b[0] * a[2]) / det,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Anchor;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rectangle() -> AnchorArray {
        AnchorArray::new(vec![
            Anchor::new("a0", Point3::new(0.0, 0.0, 0.5)),
            Anchor::new("a1", Point3::new(4.0, 0.0, 0.5)),
            Anchor::new("a2", Point3::new(4.0, 3.0, 0.5)),
            Anchor::new("a3", Point3::new(0.0, 3.0, 0.5)),
        ])
        .unwrap()
    }

    fn frame_for(anchors: &AnchorArray) -> CanonicalFrame {
        CanonicalFrame::from_positions(anchors)
    }

    #[test]
    fn exact_rectangle_matrix() {
        let anchors = rectangle();
        let noise = RangingNoiseModel::noiseless();
        let cfg = CalibrationConfig::with_samples(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = collect_pairwise(&anchors, &noise, &cfg, &mut rng);
        assert_relative_eq!(m.get(0, 1), 4.0, epsilon = 1e-12);
        assert_relative_eq!(m.get(1, 2), 3.0, epsilon = 1e-12);
        assert_relative_eq!(m.get(0, 2), 5.0, epsilon = 1e-12);
        assert_relative_eq!(m.get(0, 3), 3.0, epsilon = 1e-12);
        assert_relative_eq!(m.get(1, 3), 5.0, epsilon = 1e-12);
        assert_relative_eq!(m.get(2, 3), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn averaging_tightens_entries() {
        // each entry within 3*sigma/sqrt(100) of truth almost surely
        let anchors = rectangle();
        let noise = RangingNoiseModel::calibrated_los(11);
        let cfg = CalibrationConfig::with_samples(50).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = collect_pairwise(&anchors, &noise, &cfg, &mut rng);
        let truth = [
            (0, 1, 4.0),
            (1, 2, 3.0),
            (0, 2, 5.0),
            (0, 3, 3.0),
            (1, 3, 5.0),
            (2, 3, 4.0),
        ];
        for (i, j, t) in truth {
            assert!(
                (m.get(i, j) - t).abs() < 3.0 * 0.039 / 100f64.sqrt(),
                "entry ({i},{j}) = {} vs {t}",
                m.get(i, j)
            );
        }
        assert!(m.entry_sigma().unwrap() < 0.01);
    }

    #[test]
    fn canonical_solution_for_exact_rectangle() {
        let anchors = rectangle();
        let noise = RangingNoiseModel::noiseless();
        let cfg = CalibrationConfig::with_samples(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = collect_pairwise(&anchors, &noise, &cfg, &mut rng);
        let solved = solve_anchor_positions(&m, &frame_for(&anchors), 0.5).unwrap();

        let expect = [
            (0.0, 0.0),
            (4.0, 0.0),
            (4.0, 3.0),
            (0.0, 3.0),
        ];
        for (a, (ex, ey)) in solved.anchors().iter().zip(expect) {
            assert_relative_eq!(a.position.x, ex, epsilon = 1e-9);
            assert_relative_eq!(a.position.y, ey, epsilon = 1e-9);
            assert_relative_eq!(a.position.z, 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn canonical_frame_contract() {
        let anchors = rectangle();
        let noise = RangingNoiseModel::noiseless();
        let cfg = CalibrationConfig::with_samples(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = collect_pairwise(&anchors, &noise, &cfg, &mut rng);
        let solved = solve_anchor_positions(&m, &frame_for(&anchors), 0.0).unwrap();
        let p = |i: usize| solved.anchors()[i].position;
        assert_eq!((p(0).x, p(0).y), (0.0, 0.0));
        assert!(p(1).x > 0.0 && p(1).y.abs() < 1e-9);
        assert!(p(2).y > 0.0);
        // pairwise distances reproduced
        for i in 0..4 {
            for j in i + 1..4 {
                assert_relative_eq!(p(i).distance(&p(j)), m.get(i, j), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn rigid_motion_invariance() {
        // rotate + translate the true anchors; canonical output is unchanged
        let base = rectangle();
        let ang = 0.73f64;
        let (s, c) = ang.sin_cos();
        let moved = AnchorArray::new(
            base.anchors()
                .iter()
                .map(|a| {
                    let p = a.position;
                    Anchor {
                        id: a.id.clone(),
                        position: Point3::new(
                            c * p.x - s * p.y + 12.0,
                            s * p.x + c * p.y - 7.0,
                            p.z,
                        ),
                    }
                })
                .collect(),
        )
        .unwrap();

        let noise = RangingNoiseModel::noiseless();
        let cfg = CalibrationConfig::with_samples(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m0 = collect_pairwise(&base, &noise, &cfg, &mut rng);
        let m1 = collect_pairwise(&moved, &noise, &cfg, &mut rng);
        let s0 = solve_anchor_positions(&m0, &frame_for(&base), 0.0).unwrap();
        let s1 = solve_anchor_positions(&m1, &frame_for(&base), 0.0).unwrap();
        for (a, b) in s0.anchors().iter().zip(s1.anchors()) {
            assert!(a.position.distance(&b.position) < 1e-9);
        }
    }

    #[test]
    fn reflection_of_truth_still_canonical() {
        // mirror the anchors (x -> -x); distances are unchanged, so the
        // canonical reconstruction must be identical
        let base = rectangle();
        let mirrored = AnchorArray::new(
            base.anchors()
                .iter()
                .map(|a| Anchor {
                    id: a.id.clone(),
                    position: Point3::new(-a.position.x, a.position.y, a.position.z),
                })
                .collect(),
        )
        .unwrap();
        let noise = RangingNoiseModel::noiseless();
        let cfg = CalibrationConfig::with_samples(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m0 = collect_pairwise(&base, &noise, &cfg, &mut rng);
        let m1 = collect_pairwise(&mirrored, &noise, &cfg, &mut rng);
        let frame = frame_for(&base);
        let s0 = solve_anchor_positions(&m0, &frame, 0.0).unwrap();
        let s1 = solve_anchor_positions(&m1, &frame, 0.0).unwrap();
        for (a, b) in s0.anchors().iter().zip(s1.anchors()) {
            assert!(a.position.distance(&b.position) < 1e-9);
        }
    }

    #[test]
    fn triangle_inequality_violation_detected() {
        let ids: Vec<AnchorId> = ["a0", "a1", "a2"].iter().map(|s| (*s).into()).collect();
        let d = vec![
            vec![0.0, 1.0, 5.0],
            vec![1.0, 0.0, 1.0],
            vec![5.0, 1.0, 0.0],
        ];
        let m = PairwiseDistanceMatrix::new(ids, d).unwrap();
        let frame = CanonicalFrame::new(vec!["a0".into(), "a1".into(), "a2".into()]);
        let err = solve_anchor_positions(&m, &frame, 0.0).unwrap_err();
        assert!(matches!(err, CalibrationError::InconsistentDistances(_)));
    }

    #[test]
    fn more_samples_reduce_error() {
        // Monte-Carlo: mean reconstruction error at 50 samples per pair
        // must not exceed the error at 5.
        let anchors = AnchorArray::new(vec![
            Anchor::new("a0", Point3::new(0.0, 0.0, 0.0)),
            Anchor::new("a1", Point3::new(4.0, 0.0, 0.0)),
            Anchor::new("a2", Point3::new(4.0, 4.0, 0.0)),
            Anchor::new("a3", Point3::new(0.0, 4.0, 0.0)),
        ])
        .unwrap();
        let frame = frame_for(&anchors);
        let exact = {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let m = collect_pairwise(
                &anchors,
                &RangingNoiseModel::noiseless(),
                &CalibrationConfig::with_samples(1).unwrap(),
                &mut rng,
            );
            solve_anchor_positions(&m, &frame, 0.0).unwrap()
        };

        let mean_err = |samples: usize, seed_base: u64| -> f64 {
            let trials = 200;
            let mut acc = 0.0;
            for t in 0..trials {
                let noise = RangingNoiseModel::calibrated_los(0);
                let mut rng = ChaCha8Rng::seed_from_u64(seed_base + t);
                let m = collect_pairwise(
                    &anchors,
                    &noise,
                    &CalibrationConfig::with_samples(samples).unwrap(),
                    &mut rng,
                );
                let s = solve_anchor_positions(&m, &frame, 0.0).unwrap();
                for (a, b) in s.anchors().iter().zip(exact.anchors()) {
                    acc += a.position.distance(&b.position);
                }
            }
            acc / (trials as f64 * 4.0)
        };

        let e50 = mean_err(50, 1000);
        let e5 = mean_err(5, 5000);
        assert!(e50 <= e5, "x50 error {e50} should be <= x5 error {e5}");
    }

    #[test]
    fn latency_matches_reference_rounds() {
        let x50 = CalibrationConfig::with_samples(50).unwrap();
        let x5 = CalibrationConfig::with_samples(5).unwrap();
        assert!((calibration_latency(4, &x50) - 2.5).abs() <= 0.1);
        assert!((calibration_latency(4, &x5) - 0.9).abs() <= 0.05);
    }

    #[test]
    fn latency_is_affine_in_samples() {
        let l = |s: usize| {
            calibration_latency(4, &CalibrationConfig::with_samples(s).unwrap())
        };
        let step = l(2) - l(1);
        for s in 2..20 {
            assert_relative_eq!(l(s + 1) - l(s), step, epsilon = 1e-12);
        }
    }
}
