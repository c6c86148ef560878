//! Tag localization from anchor ranges by damped Gauss-Newton
//! (Levenberg-Marquardt) least squares.
//!
//! Two solve modes mirror how the flights actually run: a 2-D solve in the
//! horizontal plane with the height supplied externally (1-D lidar), and a
//! full 3-D solve for four or more anchors. The 2-D mode still models each
//! range as a 3-D distance, using the known height difference between tag
//! and anchor; solving the planar problem against raw ranges would bias xy
//! whenever tag and anchors sit at different heights.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{AnchorArray, AnchorId, Point3, COLLINEARITY_TOL};

#[derive(Debug, Error, PartialEq)]
pub enum LocateError {
    #[error("insufficient ranges: need {needed} for {mode}, got {got}")]
    InsufficientRanges {
        needed: usize,
        got: usize,
        mode: &'static str,
    },
    #[error("range references unknown anchor `{0}`")]
    UnknownAnchor(String),
    #[error("invalid range set: {0}")]
    InvalidRanges(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("no convergence after {iterations} iterations (last step {last_step:.2e} m)")]
    NoConvergence { iterations: usize, last_step: f64 },
}

/// Ranges from one tag at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeSet {
    pub tag_id: String,
    pub timestamp: f64,
    pub ranges: Vec<(AnchorId, f64)>,
}

impl RangeSet {
    pub fn new(
        tag_id: impl Into<String>,
        timestamp: f64,
        ranges: Vec<(AnchorId, f64)>,
    ) -> Result<Self, LocateError> {
        if ranges.iter().any(|(_, r)| !r.is_finite() || *r <= 0.0) {
            return Err(LocateError::InvalidRanges(
                "all ranges must be finite and > 0".into(),
            ));
        }
        Ok(Self {
            tag_id: tag_id.into(),
            timestamp,
            ranges,
        })
    }
}

/// Solve in the horizontal plane with externally known height, or in full 3-D.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SolveMode {
    Fused2d { fixed_z: f64 },
    Full3d,
}

impl SolveMode {
    fn dim(&self) -> usize {
        match self {
            SolveMode::Fused2d { .. } => 2,
            SolveMode::Full3d => 3,
        }
    }

    fn min_ranges(&self) -> usize {
        match self {
            SolveMode::Fused2d { .. } => 3,
            SolveMode::Full3d => 4,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            SolveMode::Fused2d { .. } => "2D-fused-height",
            SolveMode::Full3d => "3D",
        }
    }
}

/// Mode label carried on a solved fix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FixMode {
    #[serde(rename = "2D-fused-height")]
    Fused2d,
    #[serde(rename = "3D")]
    Full3d,
}

/// Solver output: estimated point plus diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionFix {
    pub point: Point3,
    pub rms_residual: f64,
    pub iterations: usize,
    pub in_envelope: bool,
    pub mode: FixMode,
}

const STEP_CONVERGED: f64 = 1e-6;
const STEP_ACCEPTABLE: f64 = 1e-3;
const MAX_ITERATIONS: usize = 50;

/// Estimate the tag position minimizing `Σ (‖p − a_i‖ − d_i)²`.
///
/// Initialization defaults to the anchor centroid; on failure to converge
/// the solve retries once from the best of eight starts perturbed by ±1 m.
/// Ranges are unweighted. `in_envelope` classifies the fix against the
/// convex envelope of the full anchor array.
pub fn multilaterate(
    ranges: &RangeSet,
    anchors: &AnchorArray,
    mode: SolveMode,
    init: Option<Point3>,
) -> Result<PositionFix, LocateError> {
    let needed = mode.min_ranges();
    if ranges.ranges.len() < needed {
        return Err(LocateError::InsufficientRanges {
            needed,
            got: ranges.ranges.len(),
            mode: mode.name(),
        });
    }
    if ranges.ranges.iter().any(|(_, r)| !r.is_finite() || *r <= 0.0) {
        return Err(LocateError::InvalidRanges(
            "all ranges must be finite and > 0".into(),
        ));
    }

    let obs: Vec<(Point3, f64)> = ranges
        .ranges
        .iter()
        .map(|(id, d)| {
            anchors
                .position_of(id)
                .map(|p| (p, *d))
                .ok_or_else(|| LocateError::UnknownAnchor(id.to_string()))
        })
        .collect::<Result<_, _>>()?;

    check_observability(&obs, &mode)?;

    let centroid = anchors.centroid();
    let start = init.unwrap_or(match mode {
        SolveMode::Fused2d { fixed_z } => Point3::new(centroid.x, centroid.y, fixed_z),
        SolveMode::Full3d => centroid,
    });

    let solved = match lm_solve(&obs, &mode, start) {
        Ok(s) => Ok(s),
        Err(LocateError::NoConvergence { .. }) => {
            let retry = best_perturbed_start(&obs, &mode, start);
            lm_solve(&obs, &mode, retry)
        }
        Err(e) => Err(e),
    }?;

    let envelope = anchors
        .envelope()
        .map_err(|e| LocateError::DegenerateGeometry(e.to_string()))?;

    Ok(PositionFix {
        point: solved.point,
        rms_residual: solved.rms,
        iterations: solved.iterations,
        in_envelope: envelope.contains_xy(solved.point),
        mode: match mode {
            SolveMode::Fused2d { .. } => FixMode::Fused2d,
            SolveMode::Full3d => FixMode::Full3d,
        },
    })
}

/// Replace the fix's height with the lidar reading; xy untouched.
pub fn fuse_height(fix: PositionFix, lidar_z: f64) -> PositionFix {
    debug_assert_eq!(fix.mode, FixMode::Fused2d, "height fusion is a 2D-mode step");
    PositionFix {
        point: Point3::new(fix.point.x, fix.point.y, lidar_z),
        ..fix
    }
}

/// Solve every leave-one-out subset, for spread analysis when an anchor
/// drops off the air. Returns the dropped anchor id with each result.
pub fn drop_anchor_robustness(
    ranges: &RangeSet,
    anchors: &AnchorArray,
    mode: SolveMode,
    init: Option<Point3>,
) -> Result<Vec<(AnchorId, Result<PositionFix, LocateError>)>, LocateError> {
    if ranges.ranges.len() < 4 {
        return Err(LocateError::InsufficientRanges {
            needed: 4,
            got: ranges.ranges.len(),
            mode: "leave-one-out",
        });
    }
    let mut out = Vec::with_capacity(ranges.ranges.len());
    for drop_idx in 0..ranges.ranges.len() {
        let subset: Vec<(AnchorId, f64)> = ranges
            .ranges
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != drop_idx)
            .map(|(_, r)| r.clone())
            .collect();
        let sub = RangeSet {
            tag_id: ranges.tag_id.clone(),
            timestamp: ranges.timestamp,
            ranges: subset,
        };
        out.push((
            ranges.ranges[drop_idx].0.clone(),
            multilaterate(&sub, anchors, mode, init),
        ));
    }
    Ok(out)
}

/// Range-model residuals `‖p − a_i‖ − d_i` for the given observations.
/// In 2-D mode the model distance uses the fixed height, so ranges stay
/// 3-D even though only xy is solved.
pub fn range_residuals(p: Point3, obs: &[(Point3, f64)], mode: &SolveMode) -> Vec<f64> {
    obs.iter()
        .map(|(a, d)| model_distance(p, a, mode) - d)
        .collect()
}

/// Analytical Jacobian of [`range_residuals`]; one row per observation,
/// `dim` columns (2 for the fused mode, 3 for full 3-D).
pub fn range_jacobian(p: Point3, obs: &[(Point3, f64)], mode: &SolveMode) -> Vec<Vec<f64>> {
    let dim = mode.dim();
    obs.iter()
        .map(|(a, _)| {
            let rho = model_distance(p, a, mode);
            let rho = if rho < 1e-12 { 1e-12 } else { rho };
            let mut row = vec![(p.x - a.x) / rho, (p.y - a.y) / rho];
            if dim == 3 {
                row.push((p.z - a.z) / rho);
            }
            row
        })
        .collect()
}

fn model_distance(p: Point3, a: &Point3, mode: &SolveMode) -> f64 {
    match mode {
        SolveMode::Fused2d { fixed_z } => {
            let dx = p.x - a.x;
            let dy = p.y - a.y;
            let dz = fixed_z - a.z;
            (dx * dx + dy * dy + dz * dz).sqrt()
        }
        SolveMode::Full3d => p.distance(a),
    }
}

/// Collinear participating anchors cannot pin down xy; coplanar ones cannot
/// pin down a 3-D fix.
fn check_observability(obs: &[(Point3, f64)], mode: &SolveMode) -> Result<(), LocateError> {
    let n = obs.len();
    match mode {
        SolveMode::Fused2d { .. } => {
            let mut best = 0.0f64;
            for i in 0..n {
                for j in i + 1..n {
                    for k in j + 1..n {
                        let (a, b, c) = (obs[i].0, obs[j].0, obs[k].0);
                        let area2 =
                            ((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)).abs();
                        best = best.max(area2);
                    }
                }
            }
            if best <= COLLINEARITY_TOL {
                return Err(LocateError::DegenerateGeometry(
                    "participating anchors are collinear in xy".into(),
                ));
            }
        }
        SolveMode::Full3d => {
            let mut best = 0.0f64;
            for i in 0..n {
                for j in i + 1..n {
                    for k in j + 1..n {
                        for l in k + 1..n {
                            let (a, b, c, e) = (obs[i].0, obs[j].0, obs[k].0, obs[l].0);
                            let u = (b.x - a.x, b.y - a.y, b.z - a.z);
                            let v = (c.x - a.x, c.y - a.y, c.z - a.z);
                            let w = (e.x - a.x, e.y - a.y, e.z - a.z);
                            let vol6 = u.0 * (v.1 * w.2 - v.2 * w.1)
                                - u.1 * (v.0 * w.2 - v.2 * w.0)
                                + u.2 * (v.0 * w.1 - v.1 * w.0);
                            best = best.max(vol6.abs());
                        }
                    }
                }
            }
            if best <= COLLINEARITY_TOL {
                return Err(LocateError::DegenerateGeometry(
                    "participating anchors are coplanar".into(),
                ));
            }
        }
    }
    Ok(())
}

struct LmSolution {
    point: Point3,
    rms: f64,
    iterations: usize,
}

/// Levenberg-Marquardt with the λ schedule: start 1e-3, ×0.3 on an accepted
/// step, ×10 on a rejected one. Converged when an accepted step is shorter
/// than 1e-6 m; after the iteration cap the solution is still returned if
/// the last step was below 1e-3 m.
fn lm_solve(obs: &[(Point3, f64)], mode: &SolveMode, start: Point3) -> Result<LmSolution, LocateError> {
    let dim = mode.dim();
    let mut p = start;
    let mut lambda = 1e-3;
    let mut cost = cost_at(p, obs, mode);
    let mut last_step = f64::INFINITY;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;

        let res = range_residuals(p, obs, mode);
        let jac = range_jacobian(p, obs, mode);

        let mut jtj = [[0.0f64; 3]; 3];
        let mut jtf = [0.0f64; 3];
        for (row, f) in jac.iter().zip(&res) {
            for c in 0..dim {
                jtf[c] += row[c] * f;
                for c2 in 0..dim {
                    jtj[c][c2] += row[c] * row[c2];
                }
            }
        }

        let mut damped = jtj;
        for c in 0..dim {
            damped[c][c] += lambda;
        }
        let rhs = [-jtf[0], -jtf[1], -jtf[2]];
        let step = match solve_sym(&damped, &rhs, dim) {
            Some(s) => s,
            None => {
                lambda *= 10.0;
                continue;
            }
        };

        let candidate = apply_step(p, &step, mode);
        let new_cost = cost_at(candidate, obs, mode);
        if new_cost <= cost {
            debug_assert!(new_cost <= cost, "objective must not increase on accept");
            let norm = (step[0] * step[0] + step[1] * step[1] + step[2] * step[2]).sqrt();
            p = candidate;
            cost = new_cost;
            last_step = norm;
            lambda *= 0.3;
            if norm < STEP_CONVERGED {
                return Ok(finish(p, obs, mode, iterations));
            }
        } else {
            lambda *= 10.0;
        }
    }

    if last_step <= STEP_ACCEPTABLE {
        Ok(finish(p, obs, mode, iterations))
    } else {
        Err(LocateError::NoConvergence {
            iterations,
            last_step,
        })
    }
}

fn finish(p: Point3, obs: &[(Point3, f64)], mode: &SolveMode, iterations: usize) -> LmSolution {
    let res = range_residuals(p, obs, mode);
    let rms = (res.iter().map(|f| f * f).sum::<f64>() / res.len() as f64).sqrt();
    LmSolution {
        point: p,
        rms,
        iterations,
    }
}

fn cost_at(p: Point3, obs: &[(Point3, f64)], mode: &SolveMode) -> f64 {
    range_residuals(p, obs, mode).iter().map(|f| f * f).sum()
}

fn apply_step(p: Point3, step: &[f64; 3], mode: &SolveMode) -> Point3 {
    match mode {
        SolveMode::Fused2d { fixed_z } => Point3::new(p.x + step[0], p.y + step[1], *fixed_z),
        SolveMode::Full3d => Point3::new(p.x + step[0], p.y + step[1], p.z + step[2]),
    }
}

/// Cheapest start among eight ±1 m perturbations of the default.
fn best_perturbed_start(obs: &[(Point3, f64)], mode: &SolveMode, center: Point3) -> Point3 {
    let candidates: Vec<Point3> = match mode {
        SolveMode::Fused2d { fixed_z } => (0..8)
            .map(|k| {
                let ang = k as f64 * std::f64::consts::FRAC_PI_4;
                Point3::new(center.x + ang.cos(), center.y + ang.sin(), *fixed_z)
            })
            .collect(),
        SolveMode::Full3d => {
            let mut v = Vec::with_capacity(8);
            for sx in [-1.0, 1.0] {
                for sy in [-1.0, 1.0] {
                    for sz in [-1.0, 1.0] {
                        v.push(Point3::new(center.x + sx, center.y + sy, center.z + sz));
                    }
                }
            }
            v
        }
    };
    candidates
        .into_iter()
        .min_by(|a, b| {
            cost_at(*a, obs, mode)
                .partial_cmp(&cost_at(*b, obs, mode))
                .unwrap()
        })
        .unwrap()
}

fn solve_sym(a: &[[f64; 3]; 3], b: &[f64; 3], dim: usize) -> Option<[f64; 3]> {
    match dim {
        2 => {
            let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
            if det.abs() < 1e-18 {
                return None;
            }
            Some([
                (b[0] * a[1][1] - a[0][1] * b[1]) / det,
                (a[0][0] * b[1] - b[0] * a[1][0]) / det,
                0.0,
            ])
        }
        3 => {
            let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
                - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
                + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
            if det.abs() < 1e-18 {
                return None;
            }
            let x = (b[0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
                - a[0][1] * (b[1] * a[2][2] - a[1][2] * b[2])
                + a[0][2] * (b[1] * a[2][1] - a[1][1] * b[2]))
                / det;
            let y = (a[0][0] * (b[1] * a[2][2] - a[1][2] * b[2])
                - b[0] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
                + a[0][2] * (a[1][0] * b[2] - b[1] * a[2][0]))
                / det;
            let z = (a[0][0] * (a[1][1] * b[2] - b[1] * a[2][1])
                - a[0][1] * (a[1][0] * b[2] - b[1] * a[2][0])
                + b[0] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]))
                / det;
            Some([x, y, z])
        }
        _ => None,
    }
}
