//! Hyperplanes, sidedness, norm projections and generalized sines.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::convex::ConvexSet;
use crate::error::{Error, Result};
use crate::fmt::{fmt_f64, fmt_vec};
use crate::linalg::{all_finite, dot, norm2, norm_inf, sub};
use crate::newton::{self, ArrowProblem, BlockDerivs, NewtonOptions};
use crate::norms::{NormKind, NormSpec};

/// `{x : alpha . x = beta}`; side A is `alpha . x <= beta`, side B the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperplane {
    pub alpha: Vec<f64>,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
    On,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::A => "A",
            Side::B => "B",
            Side::On => "On",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandPoint {
    pub coords: Vec<f64>,
    pub weight: f64,
}

impl DemandPoint {
    pub fn new(coords: Vec<f64>, weight: f64) -> Result<Self> {
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "weight must be positive, got {weight}"
            )));
        }
        if !all_finite(&coords) {
            return Err(Error::InvalidInput("non-finite coordinate".into()));
        }
        Ok(DemandPoint { coords, weight })
    }

    pub fn unit(coords: Vec<f64>) -> Self {
        DemandPoint {
            coords,
            weight: 1.0,
        }
    }
}

/// Affine chart of a hyperplane: `x = anchor + sum_j z_j * basis[j]`.
#[derive(Debug, Clone)]
pub struct Frame {
    pub anchor: Vec<f64>,
    /// Orthonormal tangent vectors, `d - 1` of them.
    pub basis: Vec<Vec<f64>>,
}

impl Frame {
    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    pub fn lift(&self, z: &[f64]) -> Vec<f64> {
        let mut x = self.anchor.clone();
        for (zj, t) in z.iter().zip(&self.basis) {
            for (xi, ti) in x.iter_mut().zip(t) {
                *xi += zj * ti;
            }
        }
        x
    }

    /// Tangent coordinates of the orthogonal projection of `x`.
    pub fn chart(&self, x: &[f64]) -> Vec<f64> {
        let r = sub(x, &self.anchor);
        self.basis.iter().map(|t| dot(t, &r)).collect()
    }

    /// `T^t g` for a d-vector `g`.
    pub fn pull(&self, g: &[f64]) -> Vec<f64> {
        self.basis.iter().map(|t| dot(t, g)).collect()
    }
}

impl Hyperplane {
    pub fn new(alpha: Vec<f64>, beta: f64) -> Result<Self> {
        if alpha.is_empty() || alpha.iter().all(|&a| a == 0.0) {
            return Err(Error::InvalidHyperplane("alpha must be nonzero".into()));
        }
        if !all_finite(&alpha) || !beta.is_finite() {
            return Err(Error::InvalidHyperplane("non-finite coefficients".into()));
        }
        Ok(Hyperplane { alpha, beta })
    }

    /// The planar line `y = lambda * x`.
    pub fn line_through_origin(lambda: f64) -> Result<Self> {
        Hyperplane::new(vec![lambda, -1.0], 0.0)
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    /// Signed residual `alpha . x - beta`.
    pub fn value(&self, x: &[f64]) -> f64 {
        dot(&self.alpha, x) - self.beta
    }

    pub fn default_tol(&self) -> f64 {
        1e-9 * (1.0 + self.beta.abs() + norm2(&self.alpha))
    }

    pub fn side_of(&self, x: &[f64], tol: f64) -> Side {
        side_of(self, x, tol)
    }

    pub fn side(&self, x: &[f64]) -> Side {
        side_of(self, x, self.default_tol())
    }

    /// Closest point of the hyperplane in the Euclidean norm.
    pub fn project_l2(&self, x: &[f64]) -> Vec<f64> {
        let t = self.value(x) / dot(&self.alpha, &self.alpha);
        x.iter()
            .zip(&self.alpha)
            .map(|(xi, ai)| xi - t * ai)
            .collect()
    }

    /// Orthonormal tangent basis by a Householder reflection of the normal.
    pub fn frame(&self) -> Frame {
        let d = self.dim();
        let n = norm2(&self.alpha);
        let a: Vec<f64> = self.alpha.iter().map(|x| x / n).collect();
        let k = (0..d)
            .max_by(|&i, &j| a[i].abs().total_cmp(&a[j].abs()))
            .unwrap();
        let mut v = a.clone();
        v[k] += a[k].signum();
        let vv = dot(&v, &v);
        let basis = (0..d)
            .filter(|&j| j != k)
            .map(|j| {
                (0..d)
                    .map(|i| (if i == j { 1.0 } else { 0.0 }) - 2.0 * v[i] * v[j] / vv)
                    .collect()
            })
            .collect();
        let anchor = self.alpha.iter().map(|x| x * self.beta / (n * n)).collect();
        Frame { anchor, basis }
    }
}

pub fn side_of(h: &Hyperplane, x: &[f64], tol: f64) -> Side {
    let r = h.value(x);
    if r.abs() <= tol {
        Side::On
    } else if r < 0.0 {
        Side::A
    } else {
        Side::B
    }
}

impl FromStr for Hyperplane {
    type Err = Error;

    /// `alpha=a1,...,ad;beta=b` or the planar shorthand `y=<lambda>x`.
    fn from_str(text: &str) -> Result<Self> {
        let t: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        let bad = |m: &str| Error::InvalidHyperplane(format!("`{text}`: {m}"));
        if let Some(rest) = t.strip_prefix("y=") {
            let coef = rest
                .strip_suffix('x')
                .ok_or_else(|| bad("expected y=<lambda>x"))?;
            let lambda = match coef {
                "" | "+" => 1.0,
                "-" => -1.0,
                c => c.parse().map_err(|_| bad("bad slope"))?,
            };
            return Hyperplane::line_through_origin(lambda);
        }
        let (a, b) = t
            .split_once(';')
            .ok_or_else(|| bad("expected alpha=...;beta=..."))?;
        let a = a
            .strip_prefix("alpha=")
            .ok_or_else(|| bad("missing alpha="))?;
        let b = b
            .strip_prefix("beta=")
            .ok_or_else(|| bad("missing beta="))?;
        let alpha: std::result::Result<Vec<f64>, _> = a.split(',').map(str::parse).collect();
        let alpha = alpha.map_err(|_| bad("bad alpha component"))?;
        let beta = b.parse().map_err(|_| bad("bad beta"))?;
        Hyperplane::new(alpha, beta)
    }
}

impl fmt::Display for Hyperplane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "alpha={};beta={}",
            fmt_vec(&self.alpha, ","),
            fmt_f64(self.beta)
        )
    }
}

/// Set of minimizers of `spec(a - y)` over `y` on the hyperplane.
///
/// lp norms with `1 < p < inf` give a single point; l1 a hull of at most
/// `d` vertices; l-infinity a box (flat in the coordinates where alpha
/// vanishes); polyhedral gauges are solved numerically and return the
/// minimizer found.
pub fn projection_set(h: &Hyperplane, a: &[f64], spec: &NormSpec) -> Result<ConvexSet> {
    if a.len() != h.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            got: a.len(),
        });
    }
    spec.check_dim(a.len())?;
    let r = h.value(a);
    let alpha = &h.alpha;
    let d = a.len();
    if r == 0.0 {
        return Ok(ConvexSet::Point(a.to_vec()));
    }
    Ok(match &spec.kind {
        NormKind::Lp { r: pr, s: ps } => {
            let q = *pr as f64 / (*pr - *ps) as f64;
            let m = norm_inf(alpha);
            let delta: Vec<f64> = alpha
                .iter()
                .map(|x| x.signum() * (x.abs() / m).powf(q - 1.0))
                .collect();
            let t = r / dot(alpha, &delta);
            ConvexSet::Point(a.iter().zip(&delta).map(|(ai, di)| ai - t * di).collect())
        }
        NormKind::L1 => {
            let m = norm_inf(alpha);
            let t = r / m;
            let verts: Vec<Vec<f64>> = (0..d)
                .filter(|&j| alpha[j].abs() == m)
                .map(|j| {
                    let mut y = a.to_vec();
                    y[j] -= t * alpha[j].signum();
                    y
                })
                .collect();
            if verts.len() == 1 {
                ConvexSet::Point(verts.into_iter().next().unwrap())
            } else {
                ConvexSet::Hull(verts)
            }
        }
        NormKind::LInf => {
            let t = r / crate::linalg::norm1(alpha);
            let mut lo = vec![0.0; d];
            let mut hi = vec![0.0; d];
            for j in 0..d {
                if alpha[j] != 0.0 {
                    lo[j] = a[j] - t * alpha[j].signum();
                    hi[j] = lo[j];
                } else {
                    lo[j] = a[j] - t.abs();
                    hi[j] = a[j] + t.abs();
                }
            }
            ConvexSet::Box { lo, hi }
        }
        NormKind::Polyhedral(_) => ConvexSet::Point(numeric_projection(h, a, spec)),
    })
}

/// Canonical norm projection: the argmin point with the smallest Euclidean displacement.
pub fn project_lp(h: &Hyperplane, a: &[f64], spec: &NormSpec) -> Result<Vec<f64>> {
    let set = projection_set(h, a, spec)?;
    Ok(set.project(a))
}

/// `min_{y in H} spec(a - y)`.
pub fn projection_distance(h: &Hyperplane, a: &[f64], spec: &NormSpec) -> Result<f64> {
    match spec.dual_eval(&h.alpha) {
        Ok(dn) => Ok(h.value(a).abs() / dn),
        Err(_) => Ok(spec.eval(&sub(a, &project_lp(h, a, spec)?))),
    }
}

struct ProjectionProblem<'a> {
    a: &'a [f64],
    spec: &'a NormSpec,
    frame: &'a Frame,
}

impl ArrowProblem for ProjectionProblem<'_> {
    fn x_dim(&self) -> usize {
        0
    }
    fn n_blocks(&self) -> usize {
        1
    }
    fn block_dim(&self, _: usize) -> usize {
        self.frame.basis.len()
    }
    fn eval_block(
        &self,
        _: usize,
        _: &[f64],
        u: &[f64],
        mu: f64,
        d: Option<&mut BlockDerivs>,
    ) -> f64 {
        let y = self.frame.lift(u);
        let v = sub(&y, self.a);
        let n = v.len();
        let mut g = vec![0.0; n];
        match d {
            None => self.spec.smoothed(&v, mu, &mut g, None),
            Some(d) => {
                let mut hm = vec![0.0; n * n];
                let val = self.spec.smoothed(&v, mu, &mut g, Some(&mut hm));
                let t = &self.frame.basis;
                for (i, ti) in t.iter().enumerate() {
                    d.gu[i] = dot(ti, &g);
                    for (j, tj) in t.iter().enumerate() {
                        let mut acc = 0.0;
                        for r in 0..n {
                            for c in 0..n {
                                acc += ti[r] * hm[r * n + c] * tj[c];
                            }
                        }
                        d.huu[i * t.len() + j] = acc;
                    }
                }
                val
            }
        }
    }
}

fn numeric_projection(h: &Hyperplane, a: &[f64], spec: &NormSpec) -> Vec<f64> {
    let frame = h.frame();
    if frame.basis.is_empty() {
        return frame.anchor;
    }
    let start = h.project_l2(a);
    let length = 1.0 + h.value(a).abs() / norm2(&h.alpha);
    let prob = ProjectionProblem {
        a,
        spec,
        frame: &frame,
    };
    let opts = NewtonOptions {
        mu_end: 1e-12,
        ..NewtonOptions::default()
    }
    .scaled(length);
    let out = newton::minimize(&prob, vec![], vec![frame.chart(&start)], &opts);
    let cand = frame.lift(&out.u[0]);

    if spec.eval(&sub(a, &cand)) <= spec.eval(&sub(a, &start)) {
        cand
    } else {
        start
    }
}

/// Generalized sine of the incidence at gate `x` for the leg from `a`.
///
/// Returns the total `|alpha.a - beta| / spec(a - x)` and the per-coordinate
/// terms `|alpha_j (a_j - x_j)| / spec(a - x)`.
pub fn generalized_sine(
    h: &Hyperplane,
    a: &[f64],
    x: &[f64],
    spec: &NormSpec,
) -> Result<(f64, Vec<f64>)> {
    let tol = h.default_tol();
    if h.value(x).abs() > tol * (1.0 + norm_inf(x)) {
        return Err(Error::InvalidInput("gate is not on the hyperplane".into()));
    }
    let v = sub(a, x);
    let len = spec.eval(&v);
    if len == 0.0 {
        return Err(Error::Undefined("generalized sine at a = x".into()));
    }
    let comps = v
        .iter()
        .zip(&h.alpha)
        .map(|(vi, ai)| (ai * vi).abs() / len)
        .collect();
    Ok((h.value(a).abs() / len, comps))
}
