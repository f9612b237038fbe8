//! Single-facility location across the hyperplane.
//!
//! The problem splits into one convex problem per closed halfspace: with the
//! facility restricted to side S, same-side demand points are reached with
//! S's norm and every other point through gate(s) on the hyperplane. The
//! facility and all gates are optimized jointly by [`crate::newton`]; the
//! better side wins.

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DemandPoint, Frame, Hyperplane, Side};
use crate::linalg::{all_finite, dot, norm2, norm_inf, sub};
use crate::newton::{self, ArrowProblem, BlockDerivs, NewtonOptions};
use crate::norms::{NormKind, NormSpec};
use crate::paths::{chain_smoothed, Leg};
use crate::refraction::{raw_path, straight_crossing};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationInstance {
    pub dim: usize,
    pub h: Hyperplane,
    pub norm_a: NormSpec,
    pub norm_b: NormSpec,
    pub norm_h: Option<NormSpec>,
    pub points_a: Vec<DemandPoint>,
    pub points_b: Vec<DemandPoint>,
}

impl LocationInstance {
    pub fn new(
        h: Hyperplane,
        norm_a: NormSpec,
        norm_b: NormSpec,
        norm_h: Option<NormSpec>,
        points_a: Vec<DemandPoint>,
        points_b: Vec<DemandPoint>,
    ) -> Result<Self> {
        let inst = LocationInstance {
            dim: h.dim(),
            h,
            norm_a,
            norm_b,
            norm_h,
            points_a,
            points_b,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Split `points` by side; points on the hyperplane go to A.
    pub fn from_points(
        h: Hyperplane,
        norm_a: NormSpec,
        norm_b: NormSpec,
        norm_h: Option<NormSpec>,
        points: Vec<DemandPoint>,
    ) -> Result<Self> {
        let (pb, pa): (Vec<_>, Vec<_>) = points
            .into_iter()
            .partition(|p| h.side(&p.coords) == Side::B);
        LocationInstance::new(h, norm_a, norm_b, norm_h, pa, pb)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim;
        if self.h.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: self.h.dim(),
            });
        }
        for n in [Some(&self.norm_a), Some(&self.norm_b), self.norm_h.as_ref()]
            .into_iter()
            .flatten()
        {
            n.check_dim(d)?;
        }
        for (label, pts, wrong) in [
            ("A", &self.points_a, Side::B),
            ("B", &self.points_b, Side::A),
        ] {
            for (i, p) in pts.iter().enumerate() {
                if p.coords.len() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        got: p.coords.len(),
                    });
                }
                if !all_finite(&p.coords) || !(p.weight > 0.0 && p.weight.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "point {i} of set {label} is invalid"
                    )));
                }
                if self.h.side(&p.coords) == wrong {
                    return Err(Error::InvalidInput(format!(
                        "point {i} of set {label} lies strictly on the other side"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn with_transit(mut self, norm_h: NormSpec) -> Self {
        self.norm_h = Some(norm_h);
        self
    }

    pub fn without_transit(mut self) -> Self {
        self.norm_h = None;
        self
    }

    pub fn n_points(&self) -> usize {
        self.points_a.len() + self.points_b.len()
    }

    /// All points, A first, with their set labels.
    pub fn labeled_points(&self) -> impl Iterator<Item = (Side, &DemandPoint)> {
        self.points_a
            .iter()
            .map(|p| (Side::A, p))
            .chain(self.points_b.iter().map(|p| (Side::B, p)))
    }

    pub fn total_weight(&self) -> f64 {
        self.labeled_points().map(|(_, p)| p.weight).sum()
    }

    /// Non-fatal remarks, such as `p_A < p_B`.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let (Some(pa), Some(pb)) = (self.norm_a.exponent(), self.norm_b.exponent()) {
            if pa < pb {
                out.push(format!(
                    "p_A = {pa} is smaller than p_B = {pb}; the usual convention is p_A >= p_B"
                ));
            }
        }
        out
    }

    fn length_scale(&self) -> f64 {
        let pts: Vec<&DemandPoint> = self.labeled_points().map(|(_, p)| p).collect();
        if pts.is_empty() {
            return 1.0;
        }
        let mut span: f64 = 0.0;
        for j in 0..self.dim {
            let lo = pts
                .iter()
                .map(|p| p.coords[j])
                .fold(f64::INFINITY, f64::min);
            let hi = pts
                .iter()
                .map(|p| p.coords[j])
                .fold(f64::NEG_INFINITY, f64::max);
            span = span.max(hi - lo);
        }
        let dist_h = pts
            .iter()
            .map(|p| self.h.value(&p.coords).abs())
            .fold(0.0, f64::max)
            / norm2(&self.h.alpha);
        1.0 + span + dist_h
    }

    fn norm_of(&self, s: Side) -> &NormSpec {
        match s {
            Side::B => &self.norm_b,
            _ => &self.norm_a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Gradient tolerance, relative to `1 + |f|`.
    pub tol: f64,
    pub max_iter: usize,
    /// Smoothing schedule relative to the data scale.
    pub mu_start: f64,
    pub mu_end: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-9,
            max_iter: 500,
            mu_start: 1e-3,
            mu_end: 1e-10,
        }
    }
}

/// Objective value at a facility together with the gates used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue {
    pub value: f64,
    /// Halfspace whose norm the facility uses.
    pub side: Side,
    /// Gates per demand point, A points first.
    pub gates: Vec<Vec<Vec<f64>>>,
    /// Weighted distance per demand point, A points first.
    pub distances: Vec<f64>,
    pub converged: bool,
}

/// Exact objective at `x`; on the hyperplane the facility counts as side A.
pub fn objective_eval(inst: &LocationInstance, x: &[f64], transit: bool) -> Result<ObjectiveValue> {
    let side = match inst.h.side(x) {
        Side::B => Side::B,
        _ => Side::A,
    };
    side_objective(inst, x, side, transit)
}

/// Objective of the problem with the facility in `side`'s halfspace, extended
/// to all of space (the facility always uses `side`'s norm).
pub fn side_objective(
    inst: &LocationInstance,
    x: &[f64],
    side: Side,
    transit: bool,
) -> Result<ObjectiveValue> {
    if x.len() != inst.dim {
        return Err(Error::DimensionMismatch {
            expected: inst.dim,
            got: x.len(),
        });
    }
    if !all_finite(x) {
        return Err(Error::InvalidInput("non-finite facility".into()));
    }
    if side == Side::On {
        return Err(Error::InvalidInput("side must be A or B".into()));
    }
    let norm_h = if transit {
        Some(inst.norm_h.as_ref().ok_or_else(|| {
            Error::InvalidInput("transit objective needs a hyperplane norm".into())
        })?)
    } else {
        None
    };
    let frame = inst.h.frame();
    let near = inst.norm_of(side);
    let pts: Vec<(Side, &DemandPoint)> = inst.labeled_points().collect();
    let length = inst.length_scale() + norm_inf(x);
    let terms: Vec<Result<(f64, Vec<Vec<f64>>, bool)>> = pts
        .par_iter()
        .map(|(label, p)| {
            if *label == side || inst.h.side(&p.coords) == Side::On {
                return Ok((p.weight * near.eval(&sub(x, &p.coords)), Vec::new(), true));
            }
            let far = inst.norm_of(*label);
            let w = p.weight;
            let sol = raw_path(
                &inst.h,
                &frame,
                x,
                &p.coords,
                Leg {
                    norm: near,
                    weight: w,
                },
                Leg {
                    norm: far,
                    weight: w,
                },
                norm_h.map(|n| Leg { norm: n, weight: w }),
                length,
            )?;
            Ok((sol.total, sol.gates, sol.converged))
        })
        .collect();
    let mut out = ObjectiveValue {
        value: 0.0,
        side,
        gates: Vec::with_capacity(pts.len()),
        distances: Vec::with_capacity(pts.len()),
        converged: true,
    };
    for t in terms {
        let (v, g, c) = t?;
        out.value += v;
        out.distances.push(v);
        out.gates.push(g);
        out.converged &= c;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideReport {
    pub side: Side,
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The unconstrained optimum left the halfspace and the facility was
    /// re-optimized on the hyperplane.
    pub on_hyperplane: bool,
    /// Stationarity residual of the smoothed joint problem, divided by the total weight.
    pub kkt_residual: f64,
    #[serde(skip)]
    pub gates: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub side_a: SideReport,
    pub side_b: SideReport,
    pub wall_seconds: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocateResult {
    pub x_star: Vec<f64>,
    pub f_star: f64,
    /// Winning halfspace; ties go to A.
    pub side: Side,
    pub transit: bool,
    /// Gates per demand point, A points first.
    pub per_point_gates: Vec<Vec<Vec<f64>>>,
    pub side_objectives: (f64, f64),
    pub diagnostics: Diagnostics,
}

enum Term<'a> {
    Plain,
    Cross { far: &'a NormSpec },
}

struct SideProblem<'a> {
    h: &'a Hyperplane,
    frame: &'a Frame,
    near: &'a NormSpec,
    norm_h: Option<&'a NormSpec>,
    points: Vec<(&'a DemandPoint, Term<'a>)>,
    restricted: bool,
    dim: usize,
}

impl SideProblem<'_> {
    fn gates_per_cross(&self) -> usize {
        if self.norm_h.is_some() {
            2
        } else {
            1
        }
    }

    fn facility(&self, z: &[f64]) -> Vec<f64> {
        if self.restricted {
            self.frame.lift(z)
        } else {
            z.to_vec()
        }
    }
}

impl ArrowProblem for SideProblem<'_> {
    fn x_dim(&self) -> usize {
        if self.restricted {
            self.dim - 1
        } else {
            self.dim
        }
    }

    fn n_blocks(&self) -> usize {
        self.points.len()
    }

    fn block_dim(&self, i: usize) -> usize {
        match self.points[i].1 {
            Term::Plain => 0,
            Term::Cross { .. } => self.gates_per_cross() * (self.dim - 1),
        }
    }

    fn eval_block(
        &self,
        i: usize,
        z: &[f64],
        u: &[f64],
        mu: f64,
        d: Option<&mut BlockDerivs>,
    ) -> f64 {
        let x = self.facility(z);
        let (p, term) = &self.points[i];
        let w = p.weight;
        let dim = self.dim;
        let nu = u.len();
        let mut full = d.as_ref().map(|_| BlockDerivs::zeroed(dim, nu));
        let val = match term {
            Term::Plain => {
                let v = sub(&x, &p.coords);
                match full.as_mut() {
                    None => {
                        let mut g = vec![0.0; dim];
                        w * self.near.smoothed(&v, mu, &mut g, None)
                    }
                    Some(fd) => {
                        let val = self.near.smoothed(&v, mu, &mut fd.gx, Some(&mut fd.hxx));
                        fd.gx.iter_mut().for_each(|g| *g *= w);
                        fd.hxx.iter_mut().for_each(|h| *h *= w);
                        w * val
                    }
                }
            }
            Term::Cross { far } => {
                let near = Leg {
                    norm: self.near,
                    weight: w,
                };
                let far = Leg {
                    norm: far,
                    weight: w,
                };
                match self.norm_h {
                    None => chain_smoothed(
                        self.frame,
                        &x,
                        true,
                        u,
                        &p.coords,
                        &[near, far],
                        mu,
                        full.as_mut(),
                    ),
                    Some(nh) => {
                        let mid = Leg {
                            norm: nh,
                            weight: w,
                        };
                        chain_smoothed(
                            self.frame,
                            &x,
                            true,
                            u,
                            &p.coords,
                            &[near, mid, far],
                            mu,
                            full.as_mut(),
                        )
                    }
                }
            }
        };
        if let (Some(d), Some(fd)) = (d, full) {
            if self.restricted {
                let t = &self.frame.basis;
                let m = t.len();
                for a in 0..m {
                    d.gx[a] = dot(&t[a], &fd.gx);
                    for b in 0..m {
                        let mut acc = 0.0;
                        for r in 0..dim {
                            for c in 0..dim {
                                acc += t[a][r] * fd.hxx[r * dim + c] * t[b][c];
                            }
                        }
                        d.hxx[a * m + b] = acc;
                    }
                    for k in 0..nu {
                        d.hxu[a * nu + k] = (0..dim).map(|r| t[a][r] * fd.hxu[r * nu + k]).sum();
                    }
                }
            } else {
                d.gx.copy_from_slice(&fd.gx);
                d.hxx.copy_from_slice(&fd.hxx);
                d.hxu.copy_from_slice(&fd.hxu);
            }
            d.gu.copy_from_slice(&fd.gu);
            d.huu.copy_from_slice(&fd.huu);
        }
        val
    }
}

fn build_side_problem<'a>(
    inst: &'a LocationInstance,
    frame: &'a Frame,
    side: Side,
    transit: bool,
    restricted: bool,
) -> SideProblem<'a> {
    let near = inst.norm_of(side);
    let points = inst
        .labeled_points()
        .map(|(label, p)| {
            let term = if label == side || inst.h.side(&p.coords) == Side::On {
                Term::Plain
            } else {
                Term::Cross {
                    far: inst.norm_of(label),
                }
            };
            (p, term)
        })
        .collect();
    SideProblem {
        h: &inst.h,
        frame,
        near,
        norm_h: if transit { inst.norm_h.as_ref() } else { None },
        points,
        restricted,
        dim: inst.dim,
    }
}

fn initial_gates(prob: &SideProblem, x: &[f64]) -> Vec<Vec<f64>> {
    prob.points
        .iter()
        .map(|(p, term)| match term {
            Term::Plain => Vec::new(),
            Term::Cross { .. } => {
                let g = prob.frame.chart(&straight_crossing(prob.h, x, &p.coords));
                let mut u = g.clone();
                if prob.norm_h.is_some() {
                    u.extend_from_slice(&g);
                }
                u
            }
        })
        .collect()
}

/// Move `x` into the closed halfspace of `side` by Euclidean projection.
fn into_halfspace(h: &Hyperplane, x: &[f64], side: Side) -> Vec<f64> {
    let v = h.value(x);
    let outside = match side {
        Side::A => v > 0.0,
        _ => v < 0.0,
    };
    if outside {
        h.project_l2(x)
    } else {
        x.to_vec()
    }
}

fn centroid<'a>(pts: impl Iterator<Item = &'a DemandPoint>, d: usize) -> Option<Vec<f64>> {
    let mut c = vec![0.0; d];
    let mut w = 0.0;
    for p in pts {
        for (ci, xi) in c.iter_mut().zip(&p.coords) {
            *ci += p.weight * xi;
        }
        w += p.weight;
    }
    (w > 0.0).then(|| c.iter().map(|x| x / w).collect())
}

fn halfspace_violation(h: &Hyperplane, x: &[f64], side: Side) -> f64 {
    let v = h.value(x);
    match side {
        Side::A => v.max(0.0),
        _ => (-v).max(0.0),
    }
}

fn facility_gradient(prob: &SideProblem, z: &[f64], u: &[Vec<f64>], mu: f64) -> Vec<f64> {
    let nx = prob.x_dim();
    let parts: Vec<Vec<f64>> = (0..prob.n_blocks())
        .into_par_iter()
        .map(|i| {
            let mut d = BlockDerivs::zeroed(nx, u[i].len());
            prob.eval_block(i, z, &u[i], mu, Some(&mut d));
            d.gx
        })
        .collect();
    let mut g = vec![0.0; nx];
    for p in parts {
        for (gi, pi) in g.iter_mut().zip(p) {
            *gi += pi;
        }
    }
    g
}

fn newton_options(opts: &SolveOptions, length: f64) -> NewtonOptions {
    NewtonOptions {
        mu_start: opts.mu_start,
        mu_end: opts.mu_end,
        grad_tol: opts.tol,
        max_iter: opts.max_iter,
        ..NewtonOptions::default()
    }
    .scaled(length)
}

/// Optimal facility when restricted to the closed halfspace of `side`.
///
/// Without `start`, runs from the weighted centroid of the side's points and
/// from the weighted centroid of all points (both moved into the halfspace).
/// If the unconstrained optimum of the extended side objective leaves the
/// halfspace, the constrained optimum lies on the hyperplane and is found by
/// re-solving there.
pub fn solve_side(
    inst: &LocationInstance,
    side: Side,
    transit: bool,
    start: Option<&[f64]>,
    opts: &SolveOptions,
) -> Result<SideReport> {
    if side == Side::On {
        return Err(Error::InvalidInput("side must be A or B".into()));
    }
    if inst.n_points() == 0 {
        return Err(Error::InvalidInput("instance has no demand points".into()));
    }
    if transit && inst.norm_h.is_none() {
        return Err(Error::InvalidInput(
            "transit model needs a hyperplane norm".into(),
        ));
    }
    let d = inst.dim;
    let frame = inst.h.frame();
    let length = inst.length_scale();
    let nopts = newton_options(opts, length);
    let weight = inst.total_weight();

    let mut starts: Vec<Vec<f64>> = Vec::new();
    match start {
        Some(s) => {
            if s.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: s.len(),
                });
            }
            starts.push(into_halfspace(&inst.h, s, side));
        }
        None => {
            let own = match side {
                Side::A => centroid(inst.points_a.iter(), d),
                _ => centroid(inst.points_b.iter(), d),
            };
            let all = centroid(inst.labeled_points().map(|(_, p)| p), d);
            for c in [own, all].into_iter().flatten() {
                let c = into_halfspace(&inst.h, &c, side);
                if !starts.contains(&c) {
                    starts.push(c);
                }
            }
        }
    }

    let free = build_side_problem(inst, &frame, side, transit, false);
    let mut iterations = 0;
    let mut best: Option<newton::NewtonOutcome> = None;
    for x0 in &starts {
        let u0 = initial_gates(&free, x0);
        let out = newton::minimize(&free, x0.clone(), u0, &nopts);
        iterations += out.iterations;
        let better = match &best {
            None => true,
            Some(b) => {
                (out.converged && !b.converged)
                    || (out.converged == b.converged && out.value < b.value)
            }
        };
        if better {
            best = Some(out);
        }
    }
    let best = best.expect("at least one start");

    let tol_h = inst.h.default_tol() * (1.0 + norm_inf(&best.x));
    let (x, converged, kkt, on_h) = if halfspace_violation(&inst.h, &best.x, side) <= tol_h {
        (
            best.x.clone(),
            best.converged,
            best.grad_norm / weight,
            false,
        )
    } else {
        let restricted = build_side_problem(inst, &frame, side, transit, true);
        let z0 = frame.chart(&best.x);
        let out = newton::minimize(&restricted, z0, best.u.clone(), &nopts);
        iterations += out.iterations;
        let x = frame.lift(&out.x);
        // Multiplier sign: the objective must increase into the halfspace.
        let g = facility_gradient(&free, &x, &out.u, out.mu);
        let ag = dot(&inst.h.alpha, &g) / norm2(&inst.h.alpha);
        let wrong_sign = match side {
            Side::A => ag.max(0.0),
            _ => (-ag).max(0.0),
        };
        (
            x,
            out.converged,
            (out.grad_norm + wrong_sign) / weight,
            true,
        )
    };

    let exact = side_objective(inst, &x, side, transit)?;
    Ok(SideReport {
        side,
        x,
        f: exact.value,
        iterations,
        converged: converged && exact.converged,
        on_hyperplane: on_h,
        kkt_residual: kkt,
        gates: exact.gates,
    })
}

/// Solve the location problem (single-gate model, or transit when `transit`).
pub fn solve(inst: &LocationInstance, transit: bool, opts: &SolveOptions) -> Result<LocateResult> {
    let t0 = Instant::now();
    let (ra, rb) = rayon::join(
        || solve_side(inst, Side::A, transit, None, opts),
        || solve_side(inst, Side::B, transit, None, opts),
    );
    let (ra, rb) = (ra?, rb?);
    let wall = t0.elapsed().as_secs_f64();
    if !ra.converged && !rb.converged {
        return Err(Error::NotConverged(format!(
            "neither side converged (A: {} iterations, residual {:.3e}; B: {} iterations, residual {:.3e})",
            ra.iterations, ra.kkt_residual, rb.iterations, rb.kkt_residual
        )));
    }
    let tie = (ra.f - rb.f).abs() <= 1e-9 * (1.0 + ra.f.abs());
    let win = if tie || ra.f <= rb.f { &ra } else { &rb };
    Ok(LocateResult {
        x_star: win.x.clone(),
        f_star: win.f,
        side: win.side,
        transit,
        per_point_gates: win.gates.clone(),
        side_objectives: (ra.f, rb.f),
        diagnostics: Diagnostics {
            warnings: inst.warnings(),
            side_a: ra,
            side_b: rb,
            wall_seconds: wall,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub count_a: usize,
    pub count_b: usize,
    /// `min(|A|, |B|) > 2`.
    pub enough_points: bool,
    pub a_not_collinear: bool,
    pub b_not_collinear: bool,
    /// `p_A` finite and the side-A norm strictly convex.
    pub p_a_finite: bool,
    /// `p_B > 1` and the side-B norm strictly convex.
    pub p_b_above_one: bool,
    /// Sufficient conditions for a unique optimum of the single-gate model.
    pub unique_single: bool,
    /// Sufficient conditions for a unique optimum of the transit model.
    pub unique_transit: bool,
}

/// Affine rank of a point set (rank of centered coordinates, relative tolerance 1e-9).
pub fn affine_rank(pts: &[DemandPoint]) -> usize {
    if pts.len() < 2 {
        return 0;
    }
    let d = pts[0].coords.len();
    let c = centroid(
        pts.iter()
            .map(|p| DemandPoint::unit(p.coords.clone()))
            .collect::<Vec<_>>()
            .iter(),
        d,
    )
    .unwrap_or_else(|| vec![0.0; d]);
    let m = DMatrix::from_fn(pts.len(), d, |i, j| pts[i].coords[j] - c[j]);
    let sv = m.singular_values();
    let top = sv.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > 1e-9 * top).count()
}

/// Check the sufficient conditions for uniqueness of the optimal facility.
pub fn uniqueness_report(inst: &LocationInstance) -> UniquenessReport {
    let strict_finite = |n: &NormSpec| matches!(n.kind, NormKind::Lp { .. });
    let strict_above_one = |n: &NormSpec| matches!(n.kind, NormKind::Lp { .. });
    let count_a = inst.points_a.len();
    let count_b = inst.points_b.len();
    let enough_points = count_a.min(count_b) > 2;
    let a_nc = affine_rank(&inst.points_a) >= 2;
    let b_nc = affine_rank(&inst.points_b) >= 2;
    let pa = strict_finite(&inst.norm_a);
    let pb = strict_above_one(&inst.norm_b);
    let geometry = enough_points && (a_nc || b_nc);
    UniquenessReport {
        count_a,
        count_b,
        enough_points,
        a_not_collinear: a_nc,
        b_not_collinear: b_nc,
        p_a_finite: pa,
        p_b_above_one: pb,
        unique_single: geometry && pa && pb,
        unique_transit: geometry && (pa || pb),
    }
}
