//! Shortest weighted paths across the hyperplane.
//!
//! [`gate_single`] finds the crossing point of the cheapest path from `a` to
//! `b` when each side has its own norm; [`gate_transit`] additionally allows
//! travel along the hyperplane under a third norm, giving an entry and an exit
//! gate. Optimality is certified by [`snell_residual`].

use serde::{Deserialize, Serialize};

use crate::convex::ConvexSet;
use crate::error::{Error, Result};
use crate::geometry::{projection_set, DemandPoint, Frame, Hyperplane, Side};
use crate::linalg::{all_finite, dot, norm2, norm_inf, sub};
use crate::newton::{self, ArrowProblem, BlockDerivs, NewtonOptions};
use crate::norms::{NormKind, NormSpec};
use crate::paths::{chain_smoothed, compass_polish, leg_lengths, lift_gates, Leg};

#[derive(Debug, Clone, PartialEq)]
pub struct PathQuery {
    pub h: Hyperplane,
    pub a: DemandPoint,
    pub b: DemandPoint,
    /// Norm of the halfspace `alpha . x <= beta`, whichever endpoint lies there.
    pub norm_a: NormSpec,
    pub norm_b: NormSpec,
    /// Present for the transit model.
    pub norm_h: Option<NormSpec>,
    /// Weight of the leg along the hyperplane.
    pub weight_h: f64,
}

impl PathQuery {
    pub fn new(
        h: Hyperplane,
        a: DemandPoint,
        b: DemandPoint,
        norm_a: NormSpec,
        norm_b: NormSpec,
    ) -> Self {
        PathQuery {
            h,
            a,
            b,
            norm_a,
            norm_b,
            norm_h: None,
            weight_h: 1.0,
        }
    }

    pub fn with_transit(mut self, norm_h: NormSpec, weight_h: f64) -> Self {
        self.norm_h = Some(norm_h);
        self.weight_h = weight_h;
        self
    }

    fn length_scale(&self) -> f64 {
        let na = norm2(&self.h.alpha);
        1.0 + norm_inf(&sub(&self.a.coords, &self.b.coords))
            + (self.h.value(&self.a.coords).abs() + self.h.value(&self.b.coords).abs()) / na
    }

    fn validate(&self) -> Result<()> {
        let d = self.h.dim();
        for p in [&self.a.coords, &self.b.coords] {
            if p.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: p.len(),
                });
            }
            if !all_finite(p) {
                return Err(Error::InvalidInput("non-finite coordinates".into()));
            }
        }
        for n in [Some(&self.norm_a), Some(&self.norm_b), self.norm_h.as_ref()]
            .into_iter()
            .flatten()
        {
            n.check_dim(d)?;
        }
        if !(self.weight_h >= 0.0 && self.weight_h.is_finite()) {
            return Err(Error::InvalidInput("weight_h must be nonnegative".into()));
        }
        let (sa, sb) = (self.h.side(&self.a.coords), self.h.side(&self.b.coords));
        if (sa == Side::A && sb == Side::A) || (sa == Side::B && sb == Side::B) {
            return Err(Error::SameSide);
        }
        Ok(())
    }

    /// The query with `a` on side A (or on H); `true` if it had to be swapped.
    fn oriented(&self) -> (PathQuery, bool) {
        let sa = self.h.side(&self.a.coords);
        let sb = self.h.side(&self.b.coords);
        if sa == Side::B || sb == Side::A {
            let mut q = self.clone();
            std::mem::swap(&mut q.a, &mut q.b);
            (q, true)
        } else {
            (self.clone(), false)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathResult {
    /// Gates in order of travel from `a` to `b`.
    pub gates: Vec<Vec<f64>>,
    /// Weighted length of each leg.
    pub leg_lengths: Vec<f64>,
    pub total: f64,
    pub snell_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

struct GateChain<'a> {
    frame: &'a Frame,
    start: &'a [f64],
    end: &'a [f64],
    legs: &'a [Leg<'a>],
}

impl ArrowProblem for GateChain<'_> {
    fn x_dim(&self) -> usize {
        0
    }
    fn n_blocks(&self) -> usize {
        1
    }
    fn block_dim(&self, _: usize) -> usize {
        (self.legs.len() - 1) * self.frame.basis.len()
    }
    fn eval_block(
        &self,
        _: usize,
        _: &[f64],
        u: &[f64],
        mu: f64,
        d: Option<&mut BlockDerivs>,
    ) -> f64 {
        chain_smoothed(self.frame, self.start, false, u, self.end, self.legs, mu, d)
    }
}

pub(crate) struct ChainSolve {
    pub gates: Vec<Vec<f64>>,
    pub total: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn exact_chain(frame: &Frame, start: &[f64], end: &[f64], legs: &[Leg], u: &[f64]) -> f64 {
    let gates = lift_gates(frame, u, legs.len() - 1);
    let mut pts: Vec<&[f64]> = vec![start];
    pts.extend(gates.iter().map(Vec::as_slice));
    pts.push(end);
    leg_lengths(&pts, legs).iter().sum()
}

/// Minimize a gate chain from each start, keeping the best exact value.
pub(crate) fn solve_chain(
    frame: &Frame,
    start: &[f64],
    end: &[f64],
    legs: &[Leg],
    starts: &[Vec<f64>],
    length: f64,
    opts: &NewtonOptions,
) -> ChainSolve {
    let prob = GateChain {
        frame,
        start,
        end,
        legs,
    };
    let nonsmooth = legs.iter().any(|l| !l.norm.is_smooth());
    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    let mut iterations = 0;
    for u0 in starts {
        let out = newton::minimize(&prob, vec![], vec![u0.clone()], opts);
        iterations += out.iterations;
        let mut u = out.u.into_iter().next().unwrap();
        let mut val = exact_chain(frame, start, end, legs, &u);
        if nonsmooth && !u.is_empty() {
            let f = |z: &[f64]| exact_chain(frame, start, end, legs, z);
            val = compass_polish(&f, &mut u, 1e-4 * length, 1e-16 * length);
        }
        if best.as_ref().is_none_or(|b| val < b.1) {
            best = Some((u, val, out.converged));
        }
    }
    let (u, total, converged) = best.expect("at least one start");
    ChainSolve {
        gates: lift_gates(frame, &u, legs.len() - 1),
        total,
        iterations,
        converged,
    }
}

pub(crate) fn gate_options(length: f64) -> NewtonOptions {
    NewtonOptions {
        mu_end: 1e-11,
        ..NewtonOptions::default()
    }
    .scaled(length)
}

/// A point of `H` on the straight segment `a b`, or the Euclidean foot of its midpoint.
pub(crate) fn straight_crossing(h: &Hyperplane, a: &[f64], b: &[f64]) -> Vec<f64> {
    let (va, vb) = (h.value(a), h.value(b));
    if va * vb < 0.0 {
        let t = va / (va - vb);
        let p: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect();
        h.project_l2(&p)
    } else {
        let mid: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
        h.project_l2(&mid)
    }
}

fn single_legs(q: &PathQuery) -> [Leg<'_>; 2] {
    [
        Leg {
            norm: &q.norm_a,
            weight: q.a.weight,
        },
        Leg {
            norm: &q.norm_b,
            weight: q.b.weight,
        },
    ]
}

fn finish(q: &PathQuery, sol: ChainSolve, legs: &[Leg], swapped: bool) -> PathResult {
    let mut pts: Vec<&[f64]> = vec![&q.a.coords];
    pts.extend(sol.gates.iter().map(Vec::as_slice));
    pts.push(&q.b.coords);
    let residual = chain_residual(&q.h, &pts, legs, q.length_scale());
    let mut lens = leg_lengths(&pts, legs);
    let total = lens.iter().sum();
    let mut gates = sol.gates;
    if swapped {
        gates.reverse();
        lens.reverse();
    }
    PathResult {
        gates,
        leg_lengths: lens,
        total,
        snell_residual: residual,
        iterations: sol.iterations,
        converged: sol.converged,
    }
}

/// Path from `start` to `end` through one gate (or two when `mid` is given),
/// without any sidedness checks.
pub(crate) fn raw_path(
    h: &Hyperplane,
    frame: &Frame,
    start: &[f64],
    end: &[f64],
    near: Leg,
    far: Leg,
    mid: Option<Leg>,
    length: f64,
) -> Result<ChainSolve> {
    let single_legs = [near, far];
    let opts = gate_options(length);
    let first = frame.chart(&straight_crossing(h, start, end));
    let single = solve_chain(frame, start, end, &single_legs, &[first], length, &opts);
    let Some(mid) = mid else {
        return Ok(single);
    };
    let legs = [near, mid, far];
    let g = frame.chart(&single.gates[0]);
    let ps = frame.chart(&projection_set(h, start, near.norm)?.project(start));
    let pe = frame.chart(&projection_set(h, end, far.norm)?.project(end));
    let starts = [[g.clone(), g].concat(), [ps, pe].concat()];
    let mut sol = solve_chain(frame, start, end, &legs, &starts, length, &opts);
    sol.iterations += single.iterations;
    if single.total <= sol.total {
        sol.gates = vec![single.gates[0].clone(), single.gates[0].clone()];
        sol.total = single.total;
        sol.converged = single.converged;
    }
    Ok(sol)
}

/// Cheapest path from `a` to `b` crossing the hyperplane once.
pub fn gate_single(q: &PathQuery) -> Result<PathResult> {
    q.validate()?;
    let (q, swapped) = q.oriented();
    let frame = q.h.frame();
    let legs = single_legs(&q);
    let sol = raw_path(
        &q.h,
        &frame,
        &q.a.coords,
        &q.b.coords,
        legs[0],
        legs[1],
        None,
        q.length_scale(),
    )?;
    Ok(finish(&q, sol, &legs, swapped))
}

/// Cheapest path from `a` to `b` that may travel along the hyperplane.
///
/// Never worse than [`gate_single`]: when moving along the hyperplane does
/// not pay, both gates coincide with the single crossing point.
pub fn gate_transit(q: &PathQuery) -> Result<PathResult> {
    q.validate()?;
    let norm_h = q
        .norm_h
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("transit query without a hyperplane norm".into()))?;
    let (q, swapped) = q.oriented();
    let frame = q.h.frame();
    let [near, far] = single_legs(&q);
    let mid = Leg {
        norm: norm_h,
        weight: q.weight_h,
    };
    let sol = raw_path(
        &q.h,
        &frame,
        &q.a.coords,
        &q.b.coords,
        near,
        far,
        Some(mid),
        q.length_scale(),
    )?;
    Ok(finish(&q, sol, &[near, mid, far], swapped))
}

/// Optimality residual of the given gates (one for the single model, two for transit).
pub fn snell_residual(q: &PathQuery, gates: &[Vec<f64>]) -> Result<f64> {
    q.validate()?;
    let tol = q.h.default_tol() * (1.0 + q.length_scale());
    for g in gates {
        if q.h.value(g).abs() > tol {
            return Err(Error::InvalidInput("gate is not on the hyperplane".into()));
        }
    }
    let (q, swapped) = q.oriented();
    let mut gates = gates.to_vec();
    if swapped {
        gates.reverse();
    }
    let mut pts: Vec<&[f64]> = vec![&q.a.coords];
    pts.extend(gates.iter().map(Vec::as_slice));
    pts.push(&q.b.coords);
    match (gates.len(), &q.norm_h) {
        (1, _) => Ok(chain_residual(
            &q.h,
            &pts,
            &single_legs(&q),
            q.length_scale(),
        )),
        (2, Some(nh)) => {
            let legs = [
                Leg {
                    norm: &q.norm_a,
                    weight: q.a.weight,
                },
                Leg {
                    norm: nh,
                    weight: q.weight_h,
                },
                Leg {
                    norm: &q.norm_b,
                    weight: q.b.weight,
                },
            ];
            Ok(chain_residual(&q.h, &pts, &legs, q.length_scale()))
        }
        _ => Err(Error::InvalidInput(
            "gate count does not match the model".into(),
        )),
    }
}

/// Violation of `G in span(alpha)`: `|G_j|` where `alpha_j = 0`, and
/// `|G_i/alpha_i - G_j/alpha_j|` over pairs with both nonzero.
pub fn span_violation(g: &[f64], alpha: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for j in 0..g.len() {
        if alpha[j] == 0.0 {
            worst = worst.max(g[j].abs());
            continue;
        }
        for i in 0..j {
            if alpha[i] != 0.0 {
                worst = worst.max((g[i] / alpha[i] - g[j] / alpha[j]).abs());
            }
        }
    }
    worst
}

fn perp(g: &[f64], alpha: &[f64]) -> Vec<f64> {
    let t = dot(g, alpha) / dot(alpha, alpha);
    g.iter().zip(alpha).map(|(x, a)| x - t * a).collect()
}

/// Gate-level stationarity residual of a chain.
///
/// Smooth legs away from coincidences use gradients directly. Otherwise each
/// leg contributes a set of subgradients and the residual is minimized over
/// those choices (projected gradient on the product of sets).
pub(crate) fn chain_residual(h: &Hyperplane, pts: &[&[f64]], legs: &[Leg], length: f64) -> f64 {
    let k = legs.len() - 1;
    let d = h.dim();
    let vs: Vec<Vec<f64>> = (0..legs.len()).map(|j| sub(pts[j], pts[j + 1])).collect();
    let coincident = |v: &[f64]| norm_inf(v) <= 1e-9 * length;
    let sets: Vec<ConvexSet> = legs
        .iter()
        .zip(&vs)
        .map(|(l, v)| {
            if coincident(v) {
                l.norm.subgradient(&vec![0.0; d]).scaled(l.weight)
            } else if l.norm.is_smooth() {
                l.norm.subgradient(v).scaled(l.weight)
            } else {
                l.norm.subdifferential_with_tol(v, 1e-7).scaled(l.weight)
            }
        })
        .collect();
    let gate_g = |s: &[Vec<f64>], j: usize| -> Vec<f64> { sub(&s[j + 1], &s[j]) };
    let mut s: Vec<Vec<f64>> = sets.iter().map(ConvexSet::element).collect();
    if !sets.iter().all(ConvexSet::is_singleton) {
        // Start from the smoothed gradients, which are near-optimal choices.
        for (j, l) in legs.iter().enumerate() {
            let mut g = vec![0.0; d];
            l.norm.smoothed(&vs[j], 1e-9 * length, &mut g, None);
            s[j] = sets[j].project(&g.iter().map(|x| x * l.weight).collect::<Vec<_>>());
        }
        s = min_residual_selection(&sets, s, &h.alpha, k);
    }
    (0..k)
        .map(|j| span_violation(&gate_g(&s, j), &h.alpha))
        .fold(0.0, f64::max)
}

/// FISTA on `1/2 sum_j |P(s_{j+1} - s_j)|^2` over `s_j in sets[j]`, where `P`
/// removes the normal component.
fn min_residual_selection(
    sets: &[ConvexSet],
    mut s: Vec<Vec<f64>>,
    alpha: &[f64],
    k: usize,
) -> Vec<Vec<f64>> {
    let obj = |s: &[Vec<f64>]| -> f64 {
        (0..k)
            .map(|j| {
                let r = perp(&sub(&s[j + 1], &s[j]), alpha);
                dot(&r, &r)
            })
            .sum::<f64>()
    };
    let step = 0.25;
    let mut y = s.clone();
    let mut t = 1.0_f64;
    let mut best = s.clone();
    let mut best_val = obj(&s);
    for _ in 0..4000 {
        let mut grad: Vec<Vec<f64>> = y.iter().map(|v| vec![0.0; v.len()]).collect();
        for j in 0..k {
            let r = perp(&sub(&y[j + 1], &y[j]), alpha);
            for (gi, ri) in grad[j + 1].iter_mut().zip(&r) {
                *gi += ri;
            }
            for (gi, ri) in grad[j].iter_mut().zip(&r) {
                *gi -= ri;
            }
        }
        let next: Vec<Vec<f64>> = sets
            .iter()
            .zip(y.iter().zip(&grad))
            .map(|(c, (yj, gj))| {
                let z: Vec<f64> = yj.iter().zip(gj).map(|(a, b)| a - step * b).collect();
                c.project(&z)
            })
            .collect();
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = next
            .iter()
            .zip(&s)
            .map(|(n, o)| {
                n.iter()
                    .zip(o)
                    .map(|(a, b)| a + (t - 1.0) / t_next * (a - b))
                    .collect()
            })
            .collect();
        s = next;
        t = t_next;
        let v = obj(&s);
        if v < best_val {
            best_val = v;
            best = s.clone();
        }
        if best_val < 1e-30 {
            break;
        }
    }
    best
}

/// `|w_a sin(theta_a) - w_b sin(theta_b)|` for planar Euclidean legs, angles
/// measured from the normal and weights including the norm scales.
pub fn classical_snell_gap(q: &PathQuery, gate: &[f64]) -> Result<f64> {
    let is_l2 = |n: &NormSpec| matches!(n.kind, NormKind::Lp { r: 2, s: 1 });
    if q.h.dim() != 2 || !is_l2(&q.norm_a) || !is_l2(&q.norm_b) {
        return Err(Error::Unsupported(
            "classical Snell law needs d = 2 and l2 on both sides".into(),
        ));
    }
    let t = &q.h.frame().basis[0];
    let sine = |p: &[f64]| -> Result<f64> {
        let v = sub(p, gate);
        let n = norm2(&v);
        if n == 0.0 {
            return Err(Error::Undefined("endpoint coincides with the gate".into()));
        }
        Ok(dot(&v, t).abs() / n)
    };
    let lhs = q.a.weight * q.norm_a.scale * sine(&q.a.coords)?;
    let rhs = q.b.weight * q.norm_b.scale * sine(&q.b.coords)?;
    Ok((lhs - rhs).abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RetmOutcome {
    /// No violation among the sampled hyperplane points.
    Holds { samples: usize },
    /// `condition` is 1 (side of `a`) or 2 (side of `b`).
    Fails {
        condition: u8,
        witness: Vec<f64>,
        lhs: f64,
        rhs: f64,
    },
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Point `i` of the Halton sequence in `[0,1)^dim`.
pub fn halton(i: u64, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|j| {
            radical_inverse(
                i + 1,
                PRIMES[j % PRIMES.len()] + 60 * (j / PRIMES.len()) as u64,
            )
        })
        .collect()
}

/// Sampled test of the rapid-enough-transit condition for the pair `(a, b)`.
///
/// For each sample `x` on the hyperplane, checks
/// `|a - y_a|_A + |x - y_a|_H <= |x - a|_A` and the same with `b` and `B`,
/// where `y_a` is the point of the `A`-norm projection set of `a` nearest to
/// `x` (likewise `y_b`). A violation is returned as a witness; passing is
/// evidence, not proof.
pub fn retm_check(
    a: &DemandPoint,
    b: &DemandPoint,
    h: &Hyperplane,
    norms: (&NormSpec, &NormSpec, &NormSpec),
    samples: usize,
) -> Result<RetmOutcome> {
    if samples == 0 {
        return Err(Error::InvalidInput("samples must be at least 1".into()));
    }
    let (na, nb, nh) = norms;
    let frame = h.frame();
    let ya_set = projection_set(h, &a.coords, na)?;
    let yb_set = projection_set(h, &b.coords, nb)?;
    let ca = frame.chart(&ya_set.project(&a.coords));
    let cb = frame.chart(&yb_set.project(&b.coords));
    let m = frame.basis.len();
    let span = norm_inf(&sub(&ca, &cb));
    let reach = norm2(&sub(&a.coords, &ya_set.project(&a.coords)))
        + norm2(&sub(&b.coords, &yb_set.project(&b.coords)));
    let margin = 0.5 * (span + reach) + 1.0;
    let lo: Vec<f64> = (0..m).map(|j| ca[j].min(cb[j]) - margin).collect();
    let hi: Vec<f64> = (0..m).map(|j| ca[j].max(cb[j]) + margin).collect();
    let check = |p: &[f64], set: &ConvexSet, n: &NormSpec, x: &[f64]| -> (f64, f64) {
        let y = set.project(x);
        let lhs = n.eval(&sub(p, &y)) + nh.eval(&sub(x, &y));
        (lhs, n.eval(&sub(x, p)))
    };
    for i in 0..samples {
        let z: Vec<f64> = halton(i as u64, m)
            .iter()
            .enumerate()
            .map(|(j, t)| lo[j] + t * (hi[j] - lo[j]))
            .collect();
        let x = frame.lift(&z);
        for (cond, p, set, n) in [(1u8, a, &ya_set, na), (2u8, b, &yb_set, nb)] {
            let (lhs, rhs) = check(&p.coords, set, n, &x);
            if lhs > rhs + 1e-9 * (1.0 + rhs) {
                return Ok(RetmOutcome::Fails {
                    condition: cond,
                    witness: x,
                    lhs,
                    rhs,
                });
            }
        }
    }
    Ok(RetmOutcome::Holds { samples })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    /// The transit problem has the same optimum as the single-gate problem.
    PtEqualsP,
    /// Every shortest transit path crosses at a single point.
    SingleGate,
    /// Shortest paths may travel along the hyperplane.
    MayUseSegment,
    /// No conclusion for these norms (polyhedral kinds or conflicting scales).
    Unknown,
}

/// Classify a norm triple by comparing exponents and scales.
///
/// A side norm with `p_X >= p_H` is never longer than the hyperplane norm only
/// if its scale is not larger either; comparisons that the scales contradict
/// give [`Reduction::Unknown`].
pub fn reduction_applies(norm_a: &NormSpec, norm_b: &NormSpec, norm_h: &NormSpec) -> Reduction {
    let (Some(pa), Some(pb), Some(ph)) = (norm_a.exponent(), norm_b.exponent(), norm_h.exponent())
    else {
        return Reduction::Unknown;
    };
    let (sa, sb, sh) = (norm_a.scale, norm_b.scale, norm_h.scale);
    if pa >= pb && pb >= ph {
        return if sa <= sb && sb <= sh {
            Reduction::PtEqualsP
        } else if sb <= sh || sa <= sh {
            Reduction::SingleGate
        } else {
            Reduction::Unknown
        };
    }
    let a_fast = pa >= ph;
    let b_fast = pb >= ph;
    if a_fast || b_fast {
        if (a_fast && sa <= sh) || (b_fast && sb <= sh) {
            Reduction::SingleGate
        } else {
            Reduction::Unknown
        }
    } else if sh <= sa.min(sb) {
        Reduction::MayUseSegment
    } else {
        Reduction::Unknown
    }
}
