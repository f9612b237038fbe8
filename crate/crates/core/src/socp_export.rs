//! Conic formulations of the side problems and the big-M MINLP, written as
//! solver-agnostic text.
//!
//! A side model keeps the facility in one closed halfspace. Every norm leg
//! `Z >= N(X - Y)` becomes linear rows plus, for `lp` with `p = r/s`, one power
//! triple `t^r <= xi^s Z^(r-s)` per coordinate. [`expand_powers`] rewrites the
//! triples as towers of rotated cones `X^2 <= Y Z`.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Side;
use crate::linalg::{dist2, norm2};
use crate::locate::LocationInstance;
use crate::norms::{NormKind, NormSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl Sense {
    fn code(self) -> &'static str {
        match self {
            Sense::Le => "LE",
            Sense::Ge => "GE",
            Sense::Eq => "EQ",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Variable {
    pub name: String,
    pub nonneg: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearRow {
    pub name: String,
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// `t^r <= xi^s z^(r-s)` with all three nonnegative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PowerTriple {
    pub t: usize,
    pub xi: usize,
    pub z: usize,
    pub r: u32,
    pub s: u32,
}

/// `x^2 <= y z` with `y, z >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Rsoc {
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Endpoint {
    Vars(Vec<usize>),
    Fixed(Vec<f64>),
}

/// How to fill a leg's auxiliaries from its endpoints.
#[derive(Debug, Clone, PartialEq)]
struct LegRecord {
    from: Endpoint,
    to: Endpoint,
    norm: NormSpec,
    bound: usize,
    t: Vec<usize>,
    xi: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConicModel {
    pub name: String,
    pub variables: Vec<Variable>,
    pub linear: Vec<LinearRow>,
    pub power: Vec<PowerTriple>,
    pub rsoc: Vec<Rsoc>,
    pub binaries: Vec<usize>,
    /// Minimized.
    pub objective: Vec<(usize, f64)>,
    legs: Vec<LegRecord>,
    /// Rotated cones whose `x` is a tower auxiliary, in creation order.
    tower_aux: Vec<usize>,
}

impl ConicModel {
    fn new(name: impl Into<String>) -> Self {
        ConicModel {
            name: name.into(),
            ..Default::default()
        }
    }

    fn var(&mut self, name: String, nonneg: bool) -> usize {
        self.variables.push(Variable { name, nonneg });
        self.variables.len() - 1
    }

    fn vars(&mut self, stem: &str, tag: &str, d: usize, nonneg: bool) -> Vec<usize> {
        (1..=d)
            .map(|k| self.var(format!("{stem}[{tag},{k}]"), nonneg))
            .collect()
    }

    fn row(&mut self, name: String, terms: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        self.linear.push(LinearRow {
            name,
            terms,
            sense,
            rhs,
        });
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    /// Objective value and largest constraint violation at `values`.
    pub fn evaluate(&self, values: &[f64]) -> (f64, f64) {
        let obj = self.objective.iter().map(|&(i, c)| c * values[i]).sum();
        let mut viol: f64 = 0.0;
        for (v, var) in values.iter().zip(&self.variables) {
            if var.nonneg {
                viol = viol.max(-v);
            }
        }
        for r in &self.linear {
            let lhs: f64 = r.terms.iter().map(|&(i, c)| c * values[i]).sum();
            viol = viol.max(match r.sense {
                Sense::Le => lhs - r.rhs,
                Sense::Ge => r.rhs - lhs,
                Sense::Eq => (lhs - r.rhs).abs(),
            });
        }
        for p in &self.power {
            let (t, xi, z) = (values[p.t], values[p.xi], values[p.z]);
            let lhs = t.powi(p.r as i32);
            let rhs = xi.powi(p.s as i32) * z.powi((p.r - p.s) as i32);
            viol = viol.max(lhs - rhs);
        }
        for c in &self.rsoc {
            viol = viol.max(values[c.x] * values[c.x] - values[c.y] * values[c.z]);
        }
        for &b in &self.binaries {
            viol = viol.max(values[b].min(1.0 - values[b]).max(0.0));
        }
        (obj, viol)
    }

    /// Extend values of the location variables (facility and gates) to every
    /// variable: leg bounds are set to the leg lengths and auxiliaries to
    /// their tightest feasible values. Only models from the side builders
    /// carry the needed structure.
    pub fn complete(&self, seed: &[(usize, f64)]) -> Result<Vec<f64>> {
        if self.legs.is_empty() {
            return Err(Error::Unsupported("model carries no leg structure".into()));
        }
        let mut val = vec![0.0; self.variables.len()];
        for &(i, v) in seed {
            val[i] = v;
        }
        for leg in &self.legs {
            let coord = |e: &Endpoint, k: usize| match e {
                Endpoint::Vars(ix) => val[ix[k]],
                Endpoint::Fixed(p) => p[k],
            };
            let d = match (&leg.from, &leg.to) {
                (Endpoint::Vars(ix), _) => ix.len(),
                (Endpoint::Fixed(p), _) => p.len(),
            };
            let diff: Vec<f64> = (0..d)
                .map(|k| coord(&leg.from, k) - coord(&leg.to, k))
                .collect();
            let len = leg.norm.eval(&diff);
            val[leg.bound] = len;
            for (k, &t) in leg.t.iter().enumerate() {
                val[t] = leg.norm.scale * diff[k].abs();
            }
            if let NormKind::Lp { r, s } = leg.norm.kind {
                let p = r as f64 / s as f64;
                for (k, &xi) in leg.xi.iter().enumerate() {
                    // t^r = xi^s z^(r-s)  <=>  xi = z (t/z)^p
                    val[xi] = if len > 0.0 {
                        len * (val[leg.t[k]] / len).powf(p)
                    } else {
                        0.0
                    };
                }
            }
        }
        for &ci in &self.tower_aux {
            let c = self.rsoc[ci];
            val[c.x] = (val[c.y] * val[c.z]).sqrt();
        }
        Ok(val)
    }
}

fn diff_terms(from: &Endpoint, to: &Endpoint, k: usize, coef: f64) -> (Vec<(usize, f64)>, f64) {
    let mut terms = Vec::new();
    let mut constant = 0.0;
    match from {
        Endpoint::Vars(ix) => terms.push((ix[k], coef)),
        Endpoint::Fixed(p) => constant += coef * p[k],
    }
    match to {
        Endpoint::Vars(ix) => terms.push((ix[k], -coef)),
        Endpoint::Fixed(p) => constant -= coef * p[k],
    }
    (terms, constant)
}

/// Rows for `bound >= norm(from - to)`; `stems` names (t, xi) auxiliaries.
fn add_leg(
    m: &mut ConicModel,
    label: &str,
    tag: &str,
    stems: (&str, &str),
    norm: &NormSpec,
    from: Endpoint,
    to: Endpoint,
    bound: usize,
    d: usize,
) {
    let sc = norm.scale;
    let mut rec = LegRecord {
        from: from.clone(),
        to: to.clone(),
        norm: norm.clone(),
        bound,
        t: Vec::new(),
        xi: Vec::new(),
    };
    match &norm.kind {
        NormKind::Lp { .. } | NormKind::L1 => {
            let t = m.vars(stems.0, tag, d, true);
            for (k, &tk) in t.iter().enumerate() {
                for (sign, suffix) in [(-1.0, "lo"), (1.0, "hi")] {
                    // t_k + sign * sc * (from_k - to_k) >= 0
                    let (mut terms, c) = diff_terms(&from, &to, k, sign * sc);
                    terms.insert(0, (tk, 1.0));
                    m.row(
                        format!("{label}_{suffix}[{tag},{}]", k + 1),
                        terms,
                        Sense::Ge,
                        -c,
                    );
                }
            }
            let sum_of = match norm.kind {
                NormKind::Lp { r, s } => {
                    let xi = m.vars(stems.1, tag, d, true);
                    for (&tk, &xk) in t.iter().zip(&xi) {
                        m.power.push(PowerTriple {
                            t: tk,
                            xi: xk,
                            z: bound,
                            r,
                            s,
                        });
                    }
                    rec.xi = xi.clone();
                    xi
                }
                _ => t.clone(),
            };
            let mut terms: Vec<(usize, f64)> = sum_of.iter().map(|&i| (i, 1.0)).collect();
            terms.push((bound, -1.0));
            m.row(format!("{label}_sum[{tag}]"), terms, Sense::Le, 0.0);
            rec.t = t;
        }
        NormKind::LInf | NormKind::Polyhedral(_) => {
            let gens = norm
                .dual_extreme_points(d)
                .expect("l-infinity and polyhedral generators are finite");
            for (g, e) in gens.iter().enumerate() {
                let mut terms = Vec::new();
                let mut constant = 0.0;
                for (k, &ek) in e.iter().enumerate() {
                    if ek != 0.0 {
                        let (tk, c) = diff_terms(&from, &to, k, sc * ek);
                        terms.extend(tk);
                        constant += c;
                    }
                }
                terms.push((bound, -1.0));
                m.row(
                    format!("{label}_gen[{tag},{}]", g + 1),
                    terms,
                    Sense::Le,
                    -constant,
                );
            }
        }
    }
    m.legs.push(rec);
}

fn on_plane_row(m: &mut ConicModel, name: String, inst: &LocationInstance, y: &[usize]) {
    let terms = y
        .iter()
        .zip(&inst.h.alpha)
        .filter(|(_, &a)| a != 0.0)
        .map(|(&i, &a)| (i, a))
        .collect();
    m.row(name, terms, Sense::Eq, inst.h.beta);
}

fn point_tag(label: Side, i: usize) -> String {
    format!("{}{}", if label == Side::A { "a" } else { "b" }, i + 1)
}

/// Side model: facility in the closed halfspace of `side`, optionally with
/// transit along the hyperplane.
pub fn build_side(inst: &LocationInstance, side: Side, transit: bool) -> Result<ConicModel> {
    if side == Side::On {
        return Err(Error::InvalidInput("side must be A or B".into()));
    }
    let norm_h = match (transit, inst.norm_h.as_ref()) {
        (false, _) => None,
        (true, Some(n)) => Some(n),
        (true, None) => {
            return Err(Error::InvalidInput(
                "transit model needs a hyperplane norm".into(),
            ))
        }
    };
    inst.validate()?;
    let d = inst.dim;
    let (near, far) = match side {
        Side::A => (&inst.norm_a, &inst.norm_b),
        _ => (&inst.norm_b, &inst.norm_a),
    };
    let name = format!("P{}{}", if transit { "T" } else { "" }, side);
    let mut m = ConicModel::new(name);
    let x: Vec<usize> = (1..=d).map(|k| m.var(format!("x[{k}]"), false)).collect();

    for (idx, (label, p)) in inst.labeled_points().enumerate() {
        let i = if label == Side::A {
            idx
        } else {
            idx - inst.points_a.len()
        };
        let tag = point_tag(label, i);
        let here = Endpoint::Fixed(p.coords.clone());
        if label == side {
            let z = m.var(format!("z[{tag}]"), true);
            m.objective.push((z, p.weight));
            add_leg(
                &mut m,
                "own",
                &tag,
                ("t", "xi"),
                near,
                Endpoint::Vars(x.clone()),
                here,
                z,
                d,
            );
            continue;
        }
        let y1 = m.vars("y", &tag, d, false);
        let w = m.var(format!("w[{tag}]"), true);
        m.objective.push((w, p.weight));
        add_leg(
            &mut m,
            "near",
            &tag,
            ("v", "rho"),
            near,
            Endpoint::Vars(x.clone()),
            Endpoint::Vars(y1.clone()),
            w,
            d,
        );
        on_plane_row(&mut m, format!("plane[{tag}]"), inst, &y1);
        let y_far = match norm_h {
            None => y1,
            Some(nh) => {
                let y2 = m.vars("yy", &tag, d, false);
                let hv = m.var(format!("h[{tag}]"), true);
                m.objective.push((hv, p.weight));
                add_leg(
                    &mut m,
                    "mid",
                    &tag,
                    ("q", "eta"),
                    nh,
                    Endpoint::Vars(y1),
                    Endpoint::Vars(y2.clone()),
                    hv,
                    d,
                );
                on_plane_row(&mut m, format!("plane2[{tag}]"), inst, &y2);
                y2
            }
        };
        let u = m.var(format!("u[{tag}]"), true);
        m.objective.push((u, p.weight));
        add_leg(
            &mut m,
            "far",
            &tag,
            ("g", "psi"),
            far,
            Endpoint::Vars(y_far),
            here,
            u,
            d,
        );
    }
    let terms = x
        .iter()
        .zip(&inst.h.alpha)
        .filter(|(_, &a)| a != 0.0)
        .map(|(&i, &a)| (i, a))
        .collect();
    let sense = if side == Side::A {
        Sense::Le
    } else {
        Sense::Ge
    };
    m.row("halfspace".into(), terms, sense, inst.h.beta);
    Ok(m)
}

pub fn build_pa(inst: &LocationInstance) -> Result<ConicModel> {
    build_side(inst, Side::A, false)
}

pub fn build_pb(inst: &LocationInstance) -> Result<ConicModel> {
    build_side(inst, Side::B, false)
}

pub fn build_pta(inst: &LocationInstance) -> Result<ConicModel> {
    build_side(inst, Side::A, true)
}

pub fn build_ptb(inst: &LocationInstance) -> Result<ConicModel> {
    build_side(inst, Side::B, true)
}

/// Constant `c` with `N(v) <= c |v|_2` for all `v`.
fn l2_equivalence(n: &NormSpec, d: usize) -> f64 {
    let c = match &n.kind {
        NormKind::Lp { .. } | NormKind::L1 => (d as f64).sqrt(),
        NormKind::LInf => 1.0,
        NormKind::Polyhedral(g) => g.iter().map(|e| norm2(e)).fold(0.0, f64::max),
    };
    n.scale * c
}

/// Big-M constants of the MINLP export.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BigM {
    /// Data radius: largest pairwise Euclidean distance between demand points.
    pub radius: f64,
    /// Bounds `|alpha.x - beta|` at relevant facilities.
    pub m_plane: f64,
    /// One constant per demand point, A points first.
    pub m_point: Vec<f64>,
}

/// `R` = largest pairwise l2 distance (at least 1). `M = sqrt(d) |alpha|_2 R`;
/// per point `M_p = 3 w_p c R` with `c` the larger l2-equivalence constant of
/// the two side norms, so that a distance or a two-leg path inside the data
/// region never exceeds it.
pub fn big_m(inst: &LocationInstance) -> BigM {
    let pts: Vec<&[f64]> = inst
        .labeled_points()
        .map(|(_, p)| p.coords.as_slice())
        .collect();
    let mut r: f64 = 1.0;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            r = r.max(dist2(pts[i], pts[j]));
        }
    }
    let d = inst.dim;
    let c = l2_equivalence(&inst.norm_a, d).max(l2_equivalence(&inst.norm_b, d));
    BigM {
        radius: r,
        m_plane: (d as f64).sqrt() * norm2(&inst.h.alpha) * r,
        m_point: inst
            .labeled_points()
            .map(|(_, p)| 3.0 * p.weight * c * r)
            .collect(),
    }
}

/// Mixed-binary model of the single-gate problem with indicator `gamma`
/// (`gamma = 1` places the facility in the closed halfspace A).
pub fn build_minlp(inst: &LocationInstance) -> Result<ConicModel> {
    inst.validate()?;
    let d = inst.dim;
    let bm = big_m(inst);
    let mut m = ConicModel::new("P_MINLP");
    let x: Vec<usize> = (1..=d).map(|k| m.var(format!("x[{k}]"), false)).collect();
    let gamma = m.var("gamma".into(), false);
    m.binaries.push(gamma);

    for (idx, (label, p)) in inst.labeled_points().enumerate() {
        let i = if label == Side::A {
            idx
        } else {
            idx - inst.points_a.len()
        };
        let tag = point_tag(label, i);
        let mp = bm.m_point[idx];
        let (own, other) = match label {
            Side::A => (&inst.norm_a, &inst.norm_b),
            _ => (&inst.norm_b, &inst.norm_a),
        };
        let zz = m.var(format!("Z[{tag}]"), true);
        let z = m.var(format!("z[{tag}]"), true);
        let w = m.var(format!("w[{tag}]"), true);
        let u = m.var(format!("u[{tag}]"), true);
        let y = m.vars("y", &tag, d, false);
        m.objective.push((zz, p.weight));
        // Facility on the point's side: Z >= z. Otherwise Z >= w + u.
        let (g_same, rhs_same, g_cross, rhs_cross) = match label {
            Side::A => (mp, mp, -mp, 0.0),
            _ => (-mp, 0.0, mp, mp),
        };
        m.row(
            format!("c1[{tag}]"),
            vec![(z, 1.0), (zz, -1.0), (gamma, g_same)],
            Sense::Le,
            rhs_same,
        );
        m.row(
            format!("c2[{tag}]"),
            vec![(w, 1.0), (u, 1.0), (zz, -1.0), (gamma, g_cross)],
            Sense::Le,
            rhs_cross,
        );
        let here = Endpoint::Fixed(p.coords.clone());
        add_leg(
            &mut m,
            "c3",
            &tag,
            ("t", "xi"),
            own,
            Endpoint::Vars(x.clone()),
            here.clone(),
            z,
            d,
        );
        add_leg(
            &mut m,
            "c4",
            &tag,
            ("v", "rho"),
            other,
            Endpoint::Vars(x.clone()),
            Endpoint::Vars(y.clone()),
            w,
            d,
        );
        add_leg(
            &mut m,
            "c5",
            &tag,
            ("g", "psi"),
            own,
            here,
            Endpoint::Vars(y.clone()),
            u,
            d,
        );
        on_plane_row(&mut m, format!("c8[{tag}]"), inst, &y);
    }
    let mut c6: Vec<(usize, f64)> = x
        .iter()
        .zip(&inst.h.alpha)
        .filter(|(_, &a)| a != 0.0)
        .map(|(&i, &a)| (i, a))
        .collect();
    let mut c7 = c6.clone();
    c6.push((gamma, bm.m_plane));
    c7.push((gamma, bm.m_plane));
    m.row("c6".into(), c6, Sense::Le, inst.h.beta + bm.m_plane);
    m.row("c7".into(), c7, Sense::Ge, inst.h.beta);
    m.legs.clear();
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Node {
    Leaf(usize),
    Tmp(usize),
}

/// Balanced product tree over `leaves`; equal children collapse without a row.
fn plan(leaves: &[usize], rows: &mut Vec<(Node, Node)>) -> Node {
    if leaves.len() == 1 {
        return Node::Leaf(leaves[0]);
    }
    let (l, r) = leaves.split_at(leaves.len() / 2);
    let a = plan(l, rows);
    let b = plan(r, rows);
    if a == b {
        return a;
    }
    rows.push((a, b));
    Node::Tmp(rows.len() - 1)
}

/// Cone rows realizing `t^r <= xi^s z^(r-s)`, as (tmp rows, top children).
///
/// Leaves are `s` copies of xi, `r - s` of z and `2^L - r` of t, `L = ceil(log2 r)`;
/// all six block orders are tried and the smallest tower kept.
fn tower_plan(r: u32, s: u32) -> (Vec<(Node, Node)>, (Node, Node)) {
    let l = 32 - (r - 1).leading_zeros();
    let width = 1usize << l;
    let counts = [s as usize, (r - s) as usize, width - r as usize];
    let mut best: Option<(Vec<(Node, Node)>, (Node, Node))> = None;
    for order in [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ] {
        let leaves: Vec<usize> = order
            .iter()
            .flat_map(|&k| std::iter::repeat_n(k, counts[k]))
            .collect();
        let (lh, rh) = leaves.split_at(width / 2);
        let mut rows = Vec::new();
        let a = plan(lh, &mut rows);
        let b = plan(rh, &mut rows);
        if best.as_ref().is_none_or(|(r0, _)| rows.len() < r0.len()) {
            best = Some((rows, (a, b)));
        }
    }
    best.expect("six orders")
}

/// Number of rotated cones used for one power triple.
pub fn tower_size(r: u32, s: u32) -> usize {
    tower_plan(r, s).0.len() + 1
}

/// Replace every power triple by a tower of rotated cones.
pub fn expand_powers(m: &ConicModel) -> ConicModel {
    let mut out = m.clone();
    out.power.clear();
    for (pi, p) in m.power.iter().enumerate() {
        let (rows, top) = tower_plan(p.r, p.s);
        let base = [p.xi, p.z, p.t];
        let mut tmp = Vec::with_capacity(rows.len());
        let resolve = |n: Node, tmp: &[usize]| match n {
            Node::Leaf(k) => base[k],
            Node::Tmp(i) => tmp[i],
        };
        for (j, &(a, b)) in rows.iter().enumerate() {
            let w = out.var(format!("tw[{pi},{j}]"), true);
            let c = Rsoc {
                x: w,
                y: resolve(a, &tmp),
                z: resolve(b, &tmp),
            };
            tmp.push(w);
            out.rsoc.push(c);
            out.tower_aux.push(out.rsoc.len() - 1);
        }
        out.rsoc.push(Rsoc {
            x: p.t,
            y: resolve(top.0, &tmp),
            z: resolve(top.1, &tmp),
        });
    }
    out
}

/// Agreement of a tower with its power inequality on random positive samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TowerCheck {
    pub r: u32,
    pub s: u32,
    pub rows: usize,
    pub bound: usize,
    pub samples: usize,
    /// Samples within the slack of the boundary, not classified.
    pub skipped: usize,
    pub mismatches: usize,
}

/// Sample `(t, xi, z)` log-uniformly and compare tower feasibility with
/// `t^r <= xi^s z^(r-s)`; auxiliaries take their largest feasible values.
pub fn tower_check(r: u32, s: u32, samples: usize, slack: f64, seed: u64) -> Result<TowerCheck> {
    NormSpec::lp(r, s)?;
    let mut m = ConicModel::new("tower");
    let t = m.var("t".into(), true);
    let xi = m.var("xi".into(), true);
    let z = m.var("z".into(), true);
    m.power.push(PowerTriple { t, xi, z, r, s });
    let e = expand_powers(&m);
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let (mut skipped, mut mismatches) = (0, 0);
    let mut val = vec![0.0; e.variables.len()];
    for _ in 0..samples {
        for v in [t, xi, z] {
            val[v] = 10f64.powf(rng.random_range(-3.0..3.0));
        }
        // Compare in logs: r ln t <= s ln xi + (r-s) ln z.
        let margin =
            (s as f64) * val[xi].ln() + ((r - s) as f64) * val[z].ln() - (r as f64) * val[t].ln();
        if margin.abs() <= slack {
            skipped += 1;
            continue;
        }
        for &ci in &e.tower_aux {
            let c = e.rsoc[ci];
            val[c.x] = (val[c.y] * val[c.z]).sqrt();
        }
        let top = e.rsoc.last().expect("tower has a top row");
        let lhs = val[top.x] * val[top.x];
        let rhs = val[top.y] * val[top.z];
        let tower_ok = lhs <= rhs * (1.0 + slack);
        if tower_ok != (margin > 0.0) {
            mismatches += 1;
        }
    }
    Ok(TowerCheck {
        r,
        s,
        rows: e.rsoc.len(),
        bound: 2 * ceil_log2(r) as usize,
        samples,
        skipped,
        mismatches,
    })
}

fn ceil_log2(r: u32) -> u32 {
    if r <= 1 {
        0
    } else {
        32 - (r - 1).leading_zeros()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountAudit {
    pub side: Side,
    pub linear_rows: usize,
    /// `|own|(2d+1) + |other|(4d+3) + 1`, when both side norms are lp or l1.
    pub linear_formula: Option<usize>,
    pub power_triples: usize,
    pub rsoc_rows: usize,
    /// `4d(|own| L(r_own) + |other| L(r_own) + |other| L(r_other))` with
    /// `L = ceil(log2 .)`.
    pub rsoc_bound: usize,
}

fn side_r(n: &NormSpec) -> u32 {
    n.rational().map_or(1, |(r, _)| r)
}

/// Compare row counts of a single-gate side model against the closed forms.
pub fn count_audit(inst: &LocationInstance, m: &ConicModel, side: Side) -> Result<CountAudit> {
    let d = inst.dim;
    let (own, other, n_own, n_other) = match side {
        Side::A => (
            &inst.norm_a,
            &inst.norm_b,
            inst.points_a.len(),
            inst.points_b.len(),
        ),
        Side::B => (
            &inst.norm_b,
            &inst.norm_a,
            inst.points_b.len(),
            inst.points_a.len(),
        ),
        Side::On => return Err(Error::InvalidInput("side must be A or B".into())),
    };
    let coordinatewise = |n: &NormSpec| matches!(n.kind, NormKind::Lp { .. } | NormKind::L1);
    let linear_formula = (coordinatewise(own) && coordinatewise(other))
        .then(|| n_own * (2 * d + 1) + n_other * (4 * d + 3) + 1);
    let (lo, lf) = (
        ceil_log2(side_r(own)) as usize,
        ceil_log2(side_r(other)) as usize,
    );
    let rsoc_bound = 4 * d * (n_own * lo + n_other * lo + n_other * lf);
    let rsoc_rows = if m.power.is_empty() {
        m.rsoc.len()
    } else {
        expand_powers(m).rsoc.len()
    };
    let audit = CountAudit {
        side,
        linear_rows: m.linear.len(),
        linear_formula,
        power_triples: m.power.len(),
        rsoc_rows,
        rsoc_bound,
    };
    if let Some(f) = linear_formula {
        if audit.linear_rows != f {
            return Err(Error::Audit(format!(
                "{} linear rows, formula gives {f}",
                audit.linear_rows
            )));
        }
    }
    if coordinatewise(own) && coordinatewise(other) && rsoc_rows > rsoc_bound {
        return Err(Error::Audit(format!(
            "{rsoc_rows} rotated cones exceed the bound {rsoc_bound}"
        )));
    }
    Ok(audit)
}

fn num(x: f64) -> String {
    format!("{:.16e}", x + 0.0)
}

/// Positive semidefinite 3x3 pattern equivalent to each rotated cone.
pub fn sdp_pattern(m: &ConicModel) -> String {
    let mut out = String::new();
    for c in &m.rsoc {
        let (x, y, z) = (
            &m.variables[c.x].name,
            &m.variables[c.y].name,
            &m.variables[c.z].name,
        );
        let _ = writeln!(
            out,
            "# [[{y}+{z}, 0, 2*{x}], [0, {y}+{z}, {y}-{z}], [2*{x}, {y}-{z}, {y}+{z}]] >= 0"
        );
    }
    out
}

/// Line-oriented text form; [`read_model`] inverts it exactly.
pub fn write_model_string(m: &ConicModel, emit_sdp: bool) -> String {
    let mut o = String::new();
    let name = |i: usize| m.variables[i].name.as_str();
    let _ = writeln!(o, "NAME {}", m.name);
    let _ = writeln!(o, "VARS {}", m.variables.len());
    for v in &m.variables {
        let _ = writeln!(o, "{} {}", v.name, if v.nonneg { "NONNEG" } else { "FREE" });
    }
    let _ = writeln!(o, "LIN {}", m.linear.len());
    for r in &m.linear {
        let _ = write!(
            o,
            "{} {} {} {}",
            r.name,
            r.sense.code(),
            num(r.rhs),
            r.terms.len()
        );
        for &(i, c) in &r.terms {
            let _ = write!(o, " {} {}", name(i), num(c));
        }
        o.push('\n');
    }
    let _ = writeln!(o, "POW {}", m.power.len());
    for p in &m.power {
        let _ = writeln!(
            o,
            "{} {} {} {} {}",
            name(p.t),
            name(p.xi),
            name(p.z),
            p.r,
            p.s
        );
    }
    let _ = writeln!(o, "RSOC {}", m.rsoc.len());
    for c in &m.rsoc {
        let _ = writeln!(o, "{} {} {}", name(c.x), name(c.y), name(c.z));
    }
    if emit_sdp && !m.rsoc.is_empty() {
        o.push_str(&sdp_pattern(m));
    }
    let _ = writeln!(o, "BIN {}", m.binaries.len());
    for &b in &m.binaries {
        let _ = writeln!(o, "{}", name(b));
    }
    let _ = write!(o, "OBJ MIN {}", m.objective.len());
    for &(i, c) in &m.objective {
        let _ = write!(o, " {} {}", name(i), num(c));
    }
    o.push_str("\nEND\n");
    o
}

pub fn write_model(m: &ConicModel, path: &Path, emit_sdp: bool) -> Result<()> {
    std::fs::write(path, write_model_string(m, emit_sdp))?;
    Ok(())
}

pub fn read_model(path: &Path) -> Result<ConicModel> {
    let text = std::fs::read_to_string(path)?;
    parse_model(&text, path)
}

pub fn parse_model(text: &str, path: &Path) -> Result<ConicModel> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let mut last = 0;
    let mut next = |want: &str| -> Result<(usize, Vec<String>)> {
        let (n, l) = lines.next().ok_or_else(|| {
            Error::parse(
                path,
                last,
                format!("unexpected end of file, expected {want}"),
            )
        })?;
        last = n;
        Ok((n, l.split_whitespace().map(str::to_string).collect()))
    };
    let err = |n: usize, msg: String| Error::parse(path, n, msg);
    let count = |n: usize, tok: &[String], key: &str| -> Result<usize> {
        if tok.len() != 2 || tok[0] != key {
            return Err(Error::parse(path, n, format!("expected `{key} <count>`")));
        }
        tok[1]
            .parse()
            .map_err(|_| Error::parse(path, n, format!("bad {key} count")))
    };
    let float = |n: usize, s: &str| {
        s.parse::<f64>()
            .map_err(|_| Error::parse(path, n, format!("bad number `{s}`")))
    };

    let mut m = ConicModel::default();
    let (n, tok) = next("NAME")?;
    if tok.len() != 2 || tok[0] != "NAME" {
        return Err(err(n, "expected `NAME <name>`".into()));
    }
    m.name = tok[1].clone();
    let (n, tok) = next("VARS")?;
    let nv = count(n, &tok, "VARS")?;
    let mut index = std::collections::HashMap::new();
    for _ in 0..nv {
        let (n, tok) = next("variable")?;
        let nonneg = match tok.get(1).map(String::as_str) {
            Some("NONNEG") => true,
            Some("FREE") => false,
            _ => return Err(err(n, "expected `<name> NONNEG|FREE`".into())),
        };
        if index.insert(tok[0].clone(), m.variables.len()).is_some() {
            return Err(err(n, format!("duplicate variable `{}`", tok[0])));
        }
        m.variables.push(Variable {
            name: tok[0].clone(),
            nonneg,
        });
    }
    let lookup = |n: usize, s: &str| {
        index
            .get(s)
            .copied()
            .ok_or_else(|| Error::parse(path, n, format!("unknown variable `{s}`")))
    };

    let (n, tok) = next("LIN")?;
    for _ in 0..count(n, &tok, "LIN")? {
        let (n, tok) = next("row")?;
        if tok.len() < 4 {
            return Err(err(n, "short row".into()));
        }
        let sense = match tok[1].as_str() {
            "LE" => Sense::Le,
            "GE" => Sense::Ge,
            "EQ" => Sense::Eq,
            s => return Err(err(n, format!("bad sense `{s}`"))),
        };
        let k: usize = tok[3]
            .parse()
            .map_err(|_| err(n, "bad term count".into()))?;
        if tok.len() != 4 + 2 * k {
            return Err(err(n, "term count does not match".into()));
        }
        let terms = (0..k)
            .map(|j| Ok((lookup(n, &tok[4 + 2 * j])?, float(n, &tok[5 + 2 * j])?)))
            .collect::<Result<_>>()?;
        m.linear.push(LinearRow {
            name: tok[0].clone(),
            terms,
            sense,
            rhs: float(n, &tok[2])?,
        });
    }
    let (n, tok) = next("POW")?;
    for _ in 0..count(n, &tok, "POW")? {
        let (n, tok) = next("power triple")?;
        if tok.len() != 5 {
            return Err(err(n, "expected `<t> <xi> <z> <r> <s>`".into()));
        }
        let r: u32 = tok[3].parse().map_err(|_| err(n, "bad r".into()))?;
        let s: u32 = tok[4].parse().map_err(|_| err(n, "bad s".into()))?;
        NormSpec::lp(r, s).map_err(|e| err(n, e.to_string()))?;
        m.power.push(PowerTriple {
            t: lookup(n, &tok[0])?,
            xi: lookup(n, &tok[1])?,
            z: lookup(n, &tok[2])?,
            r,
            s,
        });
    }
    let (n, tok) = next("RSOC")?;
    for _ in 0..count(n, &tok, "RSOC")? {
        let (n, tok) = next("rotated cone")?;
        if tok.len() != 3 {
            return Err(err(n, "expected `<x> <y> <z>`".into()));
        }
        m.rsoc.push(Rsoc {
            x: lookup(n, &tok[0])?,
            y: lookup(n, &tok[1])?,
            z: lookup(n, &tok[2])?,
        });
    }
    let (n, tok) = next("BIN")?;
    for _ in 0..count(n, &tok, "BIN")? {
        let (n, tok) = next("binary")?;
        m.binaries.push(lookup(n, &tok[0])?);
    }
    let (n, tok) = next("OBJ")?;
    if tok.len() < 3 || tok[0] != "OBJ" || tok[1] != "MIN" {
        return Err(err(n, "expected `OBJ MIN <count> ...`".into()));
    }
    let k: usize = tok[2]
        .parse()
        .map_err(|_| err(n, "bad term count".into()))?;
    if tok.len() != 3 + 2 * k {
        return Err(err(n, "term count does not match".into()));
    }
    for j in 0..k {
        m.objective
            .push((lookup(n, &tok[3 + 2 * j])?, float(n, &tok[4 + 2 * j])?));
    }
    let (n, tok) = next("END")?;
    if tok != ["END"] {
        return Err(err(n, "expected END".into()));
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{DemandPoint, Hyperplane};
    use crate::locate::{solve_side, SolveOptions};
    use proptest::prelude::*;
    use rand::Rng;

    fn one_point() -> LocationInstance {
        let h = Hyperplane::line_through_origin(1.5).unwrap();
        LocationInstance::new(
            h,
            NormSpec::l2(),
            NormSpec::l2(),
            None,
            vec![DemandPoint::unit(vec![1.0, 2.0])],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn single_point_template() {
        let m = build_pa(&one_point()).unwrap();
        assert_eq!(m.linear.len(), 6);
        assert_eq!(m.power.len(), 2);
        assert!(m.power.iter().all(|p| p.r == 2 && p.s == 1));
        let e = expand_powers(&m);
        assert_eq!(e.rsoc.len(), 2);
        assert!(e.power.is_empty());
    }

    #[test]
    fn tower_sizes() {
        assert_eq!(tower_size(2, 1), 1);
        assert_eq!(tower_size(3, 1), 2);
        for (r, s) in [(3, 2), (5, 3), (7, 4), (9, 2), (16, 5)] {
            assert!(tower_size(r, s) <= 2 * ceil_log2(r) as usize, "{r}/{s}");
        }
    }

    #[test]
    fn towers_match_power_inequality() {
        for (r, s) in [(2, 1), (3, 2), (3, 1), (5, 3), (7, 4), (11, 6)] {
            let c = tower_check(r, s, 10_000, 1e-9, 7).unwrap();
            assert_eq!(c.mismatches, 0, "{c:?}");
        }
    }

    #[test]
    fn round_trip_text() {
        let m = expand_powers(&build_pa(&one_point()).unwrap());
        let s = write_model_string(&m, true);
        let back = parse_model(&s, Path::new("mem")).unwrap();
        assert_eq!(write_model_string(&back, true), s);
        assert_eq!(back.variables, m.variables);
        assert_eq!(back.linear, m.linear);
        assert_eq!(back.rsoc, m.rsoc);
        assert_eq!(back.objective, m.objective);
    }

    #[test]
    fn parse_errors_carry_line() {
        let bad = "NAME x\nVARS 1\nx FREE\nLIN 1\nr LE 0 1 y 1\n";
        match parse_model(bad, Path::new("f")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("{other:?}"),
        }
    }

    fn random_instance(seed: u64, n: usize, na: NormSpec, nb: NormSpec) -> LocationInstance {
        let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
        let pts = (0..n)
            .map(|_| {
                DemandPoint::unit(vec![
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-5.0..5.0),
                ])
            })
            .collect();
        let h = Hyperplane::new(vec![0.3, 1.0], 0.2).unwrap();
        LocationInstance::from_points(
            h,
            na,
            nb,
            Some(NormSpec::linf().with_scale(0.5).unwrap()),
            pts,
        )
        .unwrap()
    }

    #[test]
    fn completed_optimum_matches_solver() {
        for seed in 0..5 {
            let inst = random_instance(seed, 4, NormSpec::l2(), NormSpec::lp(3, 1).unwrap());
            for (side, transit) in [(Side::A, false), (Side::B, false), (Side::A, true)] {
                let r = solve_side(&inst, side, transit, None, &SolveOptions::default()).unwrap();
                let m = expand_powers(&build_side(&inst, side, transit).unwrap());
                let mut seedv: Vec<(usize, f64)> =
                    r.x.iter()
                        .enumerate()
                        .map(|(k, &v)| (m.var_index(&format!("x[{}]", k + 1)).unwrap(), v))
                        .collect();
                let (mut ia, mut ib) = (0, 0);
                for ((label, _), gates) in inst.labeled_points().zip(&r.gates) {
                    let i = if label == Side::A {
                        ia += 1;
                        ia
                    } else {
                        ib += 1;
                        ib
                    };
                    if label == side {
                        continue;
                    }
                    let tag = format!("{}{}", if label == Side::A { "a" } else { "b" }, i);
                    let (g1, g2) = match gates.len() {
                        0 => continue,
                        1 => (&gates[0], &gates[0]),
                        _ => (&gates[0], &gates[1]),
                    };
                    for k in 0..2 {
                        seedv.push((m.var_index(&format!("y[{tag},{}]", k + 1)).unwrap(), g1[k]));
                        if transit {
                            seedv.push((
                                m.var_index(&format!("yy[{tag},{}]", k + 1)).unwrap(),
                                g2[k],
                            ));
                        }
                    }
                }
                let val = m.complete(&seedv).unwrap();
                let (obj, viol) = m.evaluate(&val);
                let scale = 1.0 + r.f.abs();
                assert!((obj - r.f).abs() <= 1e-5 * scale, "{obj} vs {}", r.f);
                assert!(viol <= 1e-7 * scale, "violation {viol}");
            }
        }
    }

    #[test]
    fn minlp_has_big_m_rows() {
        let inst = random_instance(3, 6, NormSpec::l2(), NormSpec::lp(3, 1).unwrap());
        let m = build_minlp(&inst).unwrap();
        assert_eq!(m.binaries.len(), 1);
        for key in ["c1[", "c2[", "c3_", "c4_", "c5_", "c8["] {
            assert!(m.linear.iter().any(|r| r.name.starts_with(key)), "{key}");
        }
        assert!(m.linear.iter().any(|r| r.name == "c6") && m.linear.iter().any(|r| r.name == "c7"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn linear_count_formula(seed in 0u64..1000, n in 1usize..9, r in 2u32..7, side_b in any::<bool>()) {
            let nb = if r == 2 { NormSpec::l1() } else { NormSpec::lp(r, 1).unwrap() };
            let inst = random_instance(seed, n, NormSpec::l2(), nb);
            let side = if side_b { Side::B } else { Side::A };
            let m = build_side(&inst, side, false).unwrap();
            let a = count_audit(&inst, &m, side).unwrap();
            prop_assert_eq!(Some(a.linear_rows), a.linear_formula);
            prop_assert!(a.rsoc_rows <= a.rsoc_bound);
        }

        #[test]
        fn every_reference_exists(seed in 0u64..1000, n in 1usize..7) {
            let inst = random_instance(seed, n, NormSpec::lp(5, 3).unwrap(), NormSpec::linf());
            for m in [build_pta(&inst).unwrap(), build_minlp(&inst).unwrap()] {
                let e = expand_powers(&m);
                let nv = e.variables.len();
                prop_assert!(e.linear.iter().flat_map(|r| &r.terms).all(|&(i, _)| i < nv));
                prop_assert!(e.rsoc.iter().all(|c| c.x < nv && c.y < nv && c.z < nv));
                prop_assert!(e.power.is_empty());
            }
        }
    }
}
