//! Norm evaluation, duality and smoothed derivatives.
//!
//! A [`NormSpec`] is a rational lp norm (`p = r/s`), l1, l-infinity or a
//! polyhedral gauge given by the extreme points of its dual unit ball, times
//! a positive scale.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::convex::ConvexSet;
use crate::error::{Error, Result};
use crate::fmt::fmt_f64;
use crate::linalg::{dot, lp_norm, norm1, norm_inf};

/// Generator views of l1 are refused beyond this dimension (2^d sign vectors).
pub const MAX_L1_GENERATOR_DIM: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NormKind {
    /// lp with `p = r/s`, `gcd(r,s) = 1`, `r > s >= 1`.
    Lp {
        r: u32,
        s: u32,
    },
    L1,
    LInf,
    /// Gauge whose dual unit ball is the convex hull of these vectors.
    Polyhedral(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormSpec {
    pub kind: NormKind,
    pub scale: f64,
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl NormSpec {
    /// lp norm with `p = r/s`; the fraction is reduced.
    pub fn lp(r: u32, s: u32) -> Result<Self> {
        if r == 0 || s == 0 {
            return Err(Error::InvalidNorm(format!(
                "lp:{r}/{s} needs positive integers"
            )));
        }
        let g = gcd(r, s);
        let (r, s) = (r / g, s / g);
        if r <= s {
            return Err(Error::InvalidNorm(format!(
                "lp:{r}/{s} needs p > 1; use l1 for p = 1"
            )));
        }
        Ok(NormSpec {
            kind: NormKind::Lp { r, s },
            scale: 1.0,
        })
    }

    pub fn l2() -> Self {
        NormSpec {
            kind: NormKind::Lp { r: 2, s: 1 },
            scale: 1.0,
        }
    }

    pub fn l1() -> Self {
        NormSpec {
            kind: NormKind::L1,
            scale: 1.0,
        }
    }

    pub fn linf() -> Self {
        NormSpec {
            kind: NormKind::LInf,
            scale: 1.0,
        }
    }

    pub fn polyhedral(generators: Vec<Vec<f64>>) -> Result<Self> {
        validate_generators(&generators)?;
        Ok(NormSpec {
            kind: NormKind::Polyhedral(generators),
            scale: 1.0,
        })
    }

    pub fn with_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidNorm(format!(
                "scale must be positive, got {scale}"
            )));
        }
        self.scale = scale;
        Ok(self)
    }

    /// The exponent `p` (1 for l1, infinity for l-infinity); `None` for polyhedral.
    pub fn exponent(&self) -> Option<f64> {
        match self.kind {
            NormKind::Lp { r, s } => Some(r as f64 / s as f64),
            NormKind::L1 => Some(1.0),
            NormKind::LInf => Some(f64::INFINITY),
            NormKind::Polyhedral(_) => None,
        }
    }

    /// `(r, s)` for rational lp kinds.
    pub fn rational(&self) -> Option<(u32, u32)> {
        match self.kind {
            NormKind::Lp { r, s } => Some((r, s)),
            _ => None,
        }
    }

    /// Differentiable away from the origin.
    pub fn is_smooth(&self) -> bool {
        matches!(self.kind, NormKind::Lp { .. })
    }

    pub fn is_polyhedral_like(&self) -> bool {
        !self.is_smooth()
    }

    /// Dimension fixed by polyhedral generators, if any.
    pub fn fixed_dim(&self) -> Option<usize> {
        match &self.kind {
            NormKind::Polyhedral(g) => g.first().map(Vec::len),
            _ => None,
        }
    }

    pub fn check_dim(&self, d: usize) -> Result<()> {
        match self.fixed_dim() {
            Some(k) if k != d => Err(Error::DimensionMismatch {
                expected: k,
                got: d,
            }),
            _ => Ok(()),
        }
    }

    /// `scale * |v|`.
    pub fn eval(&self, v: &[f64]) -> f64 {
        let raw = match &self.kind {
            NormKind::Lp { r, s } => lp_norm(v, *r as f64 / *s as f64),
            NormKind::L1 => norm1(v),
            NormKind::LInf => norm_inf(v),
            NormKind::Polyhedral(g) => g
                .iter()
                .map(|e| dot(e, v))
                .fold(f64::NEG_INFINITY, f64::max),
        };
        self.scale * raw
    }

    pub fn try_eval(&self, v: &[f64]) -> Result<f64> {
        self.check_dim(v.len())?;
        Ok(self.eval(v))
    }

    /// Conjugate exponent `q` with `1/p + 1/q = 1`.
    pub fn dual_exponent(&self) -> Result<f64> {
        match self.kind {
            NormKind::Lp { r, s } => Ok(r as f64 / (r - s) as f64),
            NormKind::L1 => Ok(f64::INFINITY),
            NormKind::LInf => Ok(1.0),
            NormKind::Polyhedral(_) => Err(Error::Unsupported(
                "dual exponent of a polyhedral norm".into(),
            )),
        }
    }

    /// Dual norm of `g`, i.e. `max { g.v : |v| <= 1 }` for this (scaled) norm.
    pub fn dual_eval(&self, g: &[f64]) -> Result<f64> {
        let q = self.dual_exponent()?;
        Ok(lp_norm(g, q) / self.scale)
    }

    /// Subdifferential of the norm at `v`, exact zero tests.
    pub fn subgradient(&self, v: &[f64]) -> ConvexSet {
        self.subdifferential_with_tol(v, 0.0)
    }

    /// Subdifferential where components within `tol` of a kink count as at the kink.
    ///
    /// `tol` is relative to the largest component of `v`.
    pub fn subdifferential_with_tol(&self, v: &[f64], tol: f64) -> ConvexSet {
        let d = v.len();
        let m = norm_inf(v);
        let cut = tol * m;
        let zero = m == 0.0;
        match &self.kind {
            NormKind::Lp { r, s } => {
                let p = *r as f64 / *s as f64;
                if zero {
                    return ConvexSet::LqBall {
                        dim: d,
                        q: p / (p - 1.0),
                        radius: self.scale,
                    };
                }
                ConvexSet::Point(lp_gradient(v, p, self.scale))
            }
            NormKind::L1 => {
                let mut lo = vec![0.0; d];
                let mut hi = vec![0.0; d];
                for j in 0..d {
                    if v[j].abs() <= cut || v[j] == 0.0 {
                        lo[j] = -self.scale;
                        hi[j] = self.scale;
                    } else {
                        lo[j] = self.scale * v[j].signum();
                        hi[j] = lo[j];
                    }
                }
                ConvexSet::Box { lo, hi }
            }
            NormKind::LInf => {
                if zero {
                    return ConvexSet::CrossPolytope {
                        dim: d,
                        radius: self.scale,
                    };
                }
                let coords = (0..d)
                    .filter(|&j| v[j].abs() >= m - cut)
                    .map(|j| (j, v[j].signum()))
                    .collect();
                ConvexSet::SignedSimplex {
                    dim: d,
                    coords,
                    radius: self.scale,
                }
            }
            NormKind::Polyhedral(gens) => {
                let vals: Vec<f64> = gens.iter().map(|e| dot(e, v)).collect();
                let top = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let scale_v = gens.iter().map(|e| norm_inf(e)).fold(0.0, f64::max) * m;
                let active: Vec<Vec<f64>> = gens
                    .iter()
                    .zip(&vals)
                    .filter(|(_, &val)| zero || val >= top - tol * scale_v)
                    .map(|(e, _)| e.iter().map(|x| x * self.scale).collect())
                    .collect();
                if active.len() == 1 {
                    ConvexSet::Point(active.into_iter().next().unwrap())
                } else {
                    ConvexSet::Hull(active)
                }
            }
        }
    }

    /// Extreme points of the unscaled dual unit ball in dimension `d`.
    pub fn dual_extreme_points(&self, d: usize) -> Result<Vec<Vec<f64>>> {
        match &self.kind {
            NormKind::Lp { .. } => Err(Error::Unsupported(
                "an lp dual ball has no finite generator set".into(),
            )),
            NormKind::L1 => {
                if d > MAX_L1_GENERATOR_DIM {
                    return Err(Error::Unsupported(format!(
                        "l1 generator view needs 2^{d} sign vectors; refused for d > {MAX_L1_GENERATOR_DIM}"
                    )));
                }
                Ok((0..1u64 << d)
                    .map(|mask| {
                        (0..d)
                            .map(|j| if mask >> j & 1 == 1 { -1.0 } else { 1.0 })
                            .collect()
                    })
                    .collect())
            }
            NormKind::LInf => {
                let mut out = Vec::with_capacity(2 * d);
                for j in 0..d {
                    for s in [1.0, -1.0] {
                        let mut e = vec![0.0; d];
                        e[j] = s;
                        out.push(e);
                    }
                }
                Ok(out)
            }
            NormKind::Polyhedral(g) => {
                self.check_dim(d)?;
                Ok(g.clone())
            }
        }
    }

    /// Smoothed norm value with gradient and optional row-major Hessian.
    ///
    /// lp and l1 replace each `|v_j|` by `sqrt(v_j^2 + mu^2)`; l-infinity and
    /// polyhedral kinds use a log-sum-exp over the dual generators. Both
    /// over-estimate the norm by at most `O(mu)` and are exact as `mu -> 0`.
    pub fn smoothed(&self, v: &[f64], mu: f64, grad: &mut [f64], hess: Option<&mut [f64]>) -> f64 {
        let d = v.len();
        debug_assert!(mu > 0.0);
        match &self.kind {
            NormKind::Lp { r, s } => {
                smoothed_lp(v, *r as f64 / *s as f64, mu, self.scale, grad, hess)
            }
            NormKind::L1 => smoothed_lp(v, 1.0, mu, self.scale, grad, hess),
            NormKind::LInf => {
                let vals: Vec<f64> = v.iter().flat_map(|&x| [x, -x]).collect();
                let mut gen_grad = |k: usize, g: &mut [f64], w: f64| {
                    g[k / 2] += if k.is_multiple_of(2) { w } else { -w };
                };
                softmax_norm(&vals, d, mu, self.scale, grad, hess, &mut gen_grad)
            }
            NormKind::Polyhedral(gens) => {
                let vals: Vec<f64> = gens.iter().map(|e| dot(e, v)).collect();
                let mut gen_grad = |k: usize, g: &mut [f64], w: f64| {
                    for (gi, ei) in g.iter_mut().zip(&gens[k]) {
                        *gi += w * ei;
                    }
                };
                softmax_norm(&vals, d, mu, self.scale, grad, hess, &mut gen_grad)
            }
        }
    }

    /// Short label for reports, e.g. `l2`, `l7/4`, `0.25*linf`.
    pub fn label(&self) -> String {
        let base = match &self.kind {
            NormKind::Lp { r, s: 1 } => format!("l{r}"),
            NormKind::Lp { r, s } => format!("l{r}/{s}"),
            NormKind::L1 => "l1".into(),
            NormKind::LInf => "linf".into(),
            NormKind::Polyhedral(g) => format!("poly[{}]", g.len()),
        };
        if self.scale == 1.0 {
            base
        } else {
            format!("{}*{base}", fmt_f64(self.scale))
        }
    }

    /// Read a generator file: one vector per line, whitespace separated.
    pub fn read_generator_file(path: &Path) -> Result<Vec<Vec<f64>>> {
        let text = std::fs::read_to_string(path)?;
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let row: std::result::Result<Vec<f64>, _> =
                line.split_whitespace().map(str::parse::<f64>).collect();
            match row {
                Ok(r) => out.push(r),
                Err(e) => return Err(Error::parse(path, i + 1, format!("bad number: {e}"))),
            }
        }
        validate_generators(&out)?;
        Ok(out)
    }
}

fn validate_generators(g: &[Vec<f64>]) -> Result<()> {
    if g.is_empty() {
        return Err(Error::InvalidNorm(
            "polyhedral norm needs generators".into(),
        ));
    }
    let d = g[0].len();
    if d == 0 {
        return Err(Error::InvalidNorm("empty generator vector".into()));
    }
    for e in g {
        if e.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: e.len(),
            });
        }
        if !e.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidNorm("non-finite generator".into()));
        }
        if e.iter().all(|&x| x == 0.0) {
            return Err(Error::InvalidNorm("zero generator".into()));
        }
        let tol = 1e-12 * norm_inf(e);
        let has_neg = g
            .iter()
            .any(|f| f.iter().zip(e).all(|(a, b)| (a + b).abs() <= tol));
        if !has_neg {
            return Err(Error::InvalidNorm(format!(
                "generator set not symmetric: missing the negation of {e:?}"
            )));
        }
    }
    Ok(())
}

/// Exact gradient of `scale * |v|_p` for `v != 0`, `1 < p < inf`.
pub(crate) fn lp_gradient(v: &[f64], p: f64, scale: f64) -> Vec<f64> {
    let n = lp_norm(v, p);
    v.iter()
        .map(|&x| scale * x.signum() * (x.abs() / n).powf(p - 1.0))
        .collect()
}

fn smoothed_lp(
    v: &[f64],
    p: f64,
    mu: f64,
    scale: f64,
    grad: &mut [f64],
    hess: Option<&mut [f64]>,
) -> f64 {
    let d = v.len();
    let phi: Vec<f64> = v.iter().map(|x| x.hypot(mu)).collect();
    let big = phi.iter().copied().fold(0.0, f64::max);
    let s = if p == 1.0 {
        phi.iter().sum::<f64>()
    } else {
        big * phi
            .iter()
            .map(|f| (f / big).powf(p))
            .sum::<f64>()
            .powf(1.0 / p)
    };
    // w_j = (phi_j/S)^(p-1), c_j = v_j/phi_j
    let w: Vec<f64> = phi.iter().map(|f| (f / s).powf(p - 1.0)).collect();
    let c: Vec<f64> = v.iter().zip(&phi).map(|(x, f)| x / f).collect();
    for j in 0..d {
        grad[j] = scale * w[j] * c[j];
    }
    if let Some(h) = hess {
        let pm1 = p - 1.0;
        for j in 0..d {
            for k in 0..d {
                let mut val = 0.0;
                if pm1 != 0.0 {
                    let diag = if j == k {
                        (phi[j] / s).powf(p - 2.0)
                    } else {
                        0.0
                    };
                    val += pm1 / s * (diag - w[j] * w[k]) * c[j] * c[k];
                }
                if j == k {
                    val += w[j] * mu * mu / (phi[j] * phi[j] * phi[j]);
                }
                h[j * d + k] = scale * val;
            }
        }
    }
    scale * s
}

fn softmax_norm(
    vals: &[f64],
    d: usize,
    mu: f64,
    scale: f64,
    grad: &mut [f64],
    hess: Option<&mut [f64]>,
    gen_add: &mut dyn FnMut(usize, &mut [f64], f64),
) -> f64 {
    let m = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ex: Vec<f64> = vals.iter().map(|l| ((l - m) / mu).exp()).collect();
    let z: f64 = ex.iter().sum();
    let value = m + mu * z.ln();
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut gbar = vec![0.0; d];
    for (k, e) in ex.iter().enumerate() {
        if *e > 0.0 {
            gen_add(k, &mut gbar, e / z);
        }
    }
    for j in 0..d {
        grad[j] = scale * gbar[j];
    }
    if let Some(h) = hess {
        h.iter_mut().for_each(|x| *x = 0.0);
        let mut ek = vec![0.0; d];
        for (k, e) in ex.iter().enumerate() {
            let wk = e / z;
            if wk < 1e-300 {
                continue;
            }
            ek.iter_mut().for_each(|x| *x = 0.0);
            gen_add(k, &mut ek, 1.0);
            for a in 0..d {
                if ek[a] == 0.0 {
                    continue;
                }
                for b in 0..d {
                    h[a * d + b] += wk * ek[a] * ek[b];
                }
            }
        }
        for a in 0..d {
            for b in 0..d {
                h[a * d + b] = scale / mu * (h[a * d + b] - gbar[a] * gbar[b]);
            }
        }
    }
    scale * value
}

pub(crate) fn parse_scale(tok: &str) -> Result<f64> {
    let v = if let Some((n, d)) = tok.split_once('/') {
        let n: f64 = n
            .trim()
            .parse()
            .map_err(|_| Error::InvalidNorm(format!("bad scale `{tok}`")))?;
        let d: f64 = d
            .trim()
            .parse()
            .map_err(|_| Error::InvalidNorm(format!("bad scale `{tok}`")))?;
        n / d
    } else {
        tok.trim()
            .parse()
            .map_err(|_| Error::InvalidNorm(format!("bad scale `{tok}`")))?
    };
    if !(v > 0.0 && f64::is_finite(v)) {
        return Err(Error::InvalidNorm(format!(
            "scale must be positive, got `{tok}`"
        )));
    }
    Ok(v)
}

impl FromStr for NormSpec {
    type Err = Error;

    /// Accepts `lp:r/s[:scale]`, `l1[:scale]`, `linf[:scale]`,
    /// `poly:<file>[:scale]` and the inline form `poly:{e1;e2;...}[:scale]`
    /// with comma-separated components.
    fn from_str(text: &str) -> Result<Self> {
        let text = text.trim();
        let bad = || Error::InvalidNorm(format!("cannot parse `{text}`"));
        let (head, rest) = text.split_once(':').unwrap_or((text, ""));
        let (body, scale_tok) = match head {
            "poly" => {
                if let Some(inner) = rest.strip_prefix('{') {
                    let close = inner.find('}').ok_or_else(bad)?;
                    let after = &inner[close + 1..];
                    let scale = after.strip_prefix(':');
                    if !after.is_empty() && scale.is_none() {
                        return Err(bad());
                    }
                    (&inner[..close], scale)
                } else {
                    match rest.rsplit_once(':') {
                        Some((p, s)) if parse_scale(s).is_ok() => (p, Some(s)),
                        _ => (rest, None),
                    }
                }
            }
            _ => match rest.split_once(':') {
                Some((b, s)) => (b, Some(s)),
                None if head == "lp" => (rest, None),
                None => ("", (!rest.is_empty()).then_some(rest)),
            },
        };
        let spec = match head {
            "lp" => {
                let (r, s) = body.split_once('/').unwrap_or((body, "1"));
                let r: u32 = r.trim().parse().map_err(|_| bad())?;
                let s: u32 = s.trim().parse().map_err(|_| bad())?;
                NormSpec::lp(r, s)?
            }
            "l1" if body.is_empty() => NormSpec::l1(),
            "l2" if body.is_empty() => NormSpec::l2(),
            "linf" if body.is_empty() => NormSpec::linf(),
            "poly" if text.contains("poly:{") => {
                let gens: std::result::Result<Vec<Vec<f64>>, _> = body
                    .split(';')
                    .map(|row| row.split(',').map(|x| x.trim().parse::<f64>()).collect())
                    .collect();
                NormSpec::polyhedral(gens.map_err(|_| bad())?)?
            }
            "poly" => NormSpec::polyhedral(NormSpec::read_generator_file(Path::new(body))?)?,
            _ => return Err(bad()),
        };
        match scale_tok {
            Some(s) => spec.with_scale(parse_scale(s)?),
            None => Ok(spec),
        }
    }
}

impl fmt::Display for NormSpec {
    /// Canonical text; polyhedral norms are written inline so that files round-trip.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            NormKind::Lp { r, s } => write!(f, "lp:{r}/{s}")?,
            NormKind::L1 => write!(f, "l1")?,
            NormKind::LInf => write!(f, "linf")?,
            NormKind::Polyhedral(g) => {
                let rows: Vec<String> = g
                    .iter()
                    .map(|e| e.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(","))
                    .collect();
                write!(f, "poly:{{{}}}", rows.join(";"))?
            }
        }
        if self.scale != 1.0 {
            write!(f, ":{}", fmt_f64(self.scale))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn l3() -> NormSpec {
        NormSpec::lp(3, 1).unwrap()
    }

    #[test]
    fn basic_values() {
        assert_eq!(NormSpec::l2().eval(&[3.0, 4.0]), 5.0);
        assert_eq!(NormSpec::l1().eval(&[1.0, -1.0]), 2.0);
        let quarter = NormSpec::linf().with_scale(0.25).unwrap();
        let leg = [5.918243 - 4.635013, 8.877364 - 6.952519];
        assert!((quarter.eval(&leg) - 0.4812115).abs() < 1e-3);
    }

    #[test]
    fn dual_exponents() {
        assert_eq!(l3().dual_exponent().unwrap(), 1.5);
        assert_eq!(NormSpec::l2().dual_exponent().unwrap(), 2.0);
        assert_eq!(NormSpec::l1().dual_exponent().unwrap(), f64::INFINITY);
        assert_eq!(NormSpec::linf().dual_exponent().unwrap(), 1.0);
        let sq = NormSpec::polyhedral(NormSpec::linf().dual_extreme_points(2).unwrap()).unwrap();
        assert!(matches!(sq.dual_exponent(), Err(Error::Unsupported(_))));
    }

    #[test]
    fn subgradient_examples() {
        assert_eq!(
            NormSpec::l2().subgradient(&[3.0, 4.0]),
            ConvexSet::Point(vec![0.6, 0.8])
        );
        let s = NormSpec::l1().subgradient(&[2.0, 0.0]);
        assert_eq!(
            s,
            ConvexSet::Box {
                lo: vec![1.0, -1.0],
                hi: vec![1.0, 1.0]
            }
        );
        let ConvexSet::Point(g) = l3().subgradient(&[1.0, 1.0]) else {
            panic!("smooth norm should give a point")
        };
        // central finite differences, independent of the closed form
        let h = 1e-6;
        for j in 0..2 {
            let mut up = [1.0, 1.0];
            let mut dn = [1.0, 1.0];
            up[j] += h;
            dn[j] -= h;
            let fd = (l3().eval(&up) - l3().eval(&dn)) / (2.0 * h);
            assert!((fd - g[j]).abs() < 1e-8);
            assert!((g[j] - 2f64.powf(-2.0 / 3.0)).abs() < 1e-12);
        }
        assert!(matches!(
            l3().subgradient(&[0.0, 0.0]),
            ConvexSet::LqBall { q, .. } if q == 1.5
        ));
    }

    #[test]
    fn parse_and_display_round_trip() {
        for t in [
            "lp:2/1",
            "lp:7/4:0.5",
            "l1",
            "linf:0.25",
            "l1:3",
            "poly:{1,0;-1,0;0,1;0,-1}:2",
        ] {
            let n: NormSpec = t.parse().unwrap();
            assert_eq!(n.to_string(), t);
            assert_eq!(n.to_string().parse::<NormSpec>().unwrap(), n);
        }
        assert_eq!(
            "lp:6/4".parse::<NormSpec>().unwrap().rational(),
            Some((3, 2))
        );
        assert_eq!("linf:1/4".parse::<NormSpec>().unwrap().scale, 0.25);
        for bad in ["lp:1/1", "lp:x", "l3", "linf:-1", "poly:{1,0}", "lp:2/1:0"] {
            assert!(bad.parse::<NormSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn generator_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.txt");
        std::fs::write(&p, "# hexagon-ish\n1 0\n-1 0\n0.5 1\n-0.5 -1\n").unwrap();
        let spec: NormSpec = format!("poly:{}:2", p.display()).parse().unwrap();
        assert_eq!(spec.scale, 2.0);
        assert_eq!(spec.fixed_dim(), Some(2));
        assert!(spec.try_eval(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn l1_generators_refused_in_high_dim() {
        assert_eq!(NormSpec::l1().dual_extreme_points(3).unwrap().len(), 8);
        assert!(NormSpec::l1().dual_extreme_points(17).is_err());
    }

    fn smooth_fd_check(n: &NormSpec, v: &[f64], mu: f64) {
        let d = v.len();
        let mut g = vec![0.0; d];
        let mut h = vec![0.0; d * d];
        n.smoothed(v, mu, &mut g, Some(&mut h));
        let eps = 1e-6;
        for k in 0..d {
            let mut up = v.to_vec();
            let mut dn = v.to_vec();
            up[k] += eps;
            dn[k] -= eps;
            let mut gu = vec![0.0; d];
            let mut gd = vec![0.0; d];
            let fu = n.smoothed(&up, mu, &mut gu, None);
            let fd = n.smoothed(&dn, mu, &mut gd, None);
            assert!(
                ((fu - fd) / (2.0 * eps) - g[k]).abs() < 1e-6,
                "{n} grad {k}"
            );
            for j in 0..d {
                let fdh = (gu[j] - gd[j]) / (2.0 * eps);
                assert!(
                    (fdh - h[j * d + k]).abs() < 1e-4 * (1.0 + fdh.abs()),
                    "{n} hess {j}{k}"
                );
            }
        }
    }

    #[test]
    fn smoothed_derivatives_match_finite_differences() {
        let v = [0.7, -0.3, 0.05];
        for n in [
            NormSpec::l2(),
            l3(),
            NormSpec::lp(3, 2).unwrap(),
            NormSpec::l1(),
            NormSpec::linf().with_scale(0.25).unwrap(),
            NormSpec::polyhedral(NormSpec::l1().dual_extreme_points(3).unwrap()).unwrap(),
        ] {
            smooth_fd_check(&n, &v, 0.1);
        }
    }

    #[test]
    fn smoothing_is_tight_for_small_mu() {
        let v = [0.7, -0.3, 0.0];
        let mut g = [0.0; 3];
        for n in [NormSpec::l2(), l3(), NormSpec::l1(), NormSpec::linf()] {
            let s = n.smoothed(&v, 1e-9, &mut g, None);
            assert!((s - n.eval(&v)).abs() < 1e-8, "{n}");
        }
    }

    fn arb_vec() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, 3)
    }

    fn all_norms() -> Vec<NormSpec> {
        vec![
            NormSpec::l2(),
            l3(),
            NormSpec::lp(7, 4).unwrap().with_scale(1.5).unwrap(),
            NormSpec::l1(),
            NormSpec::linf().with_scale(0.25).unwrap(),
            NormSpec::polyhedral(vec![
                vec![1.0, 0.5, 0.0],
                vec![-1.0, -0.5, 0.0],
                vec![0.0, 1.0, 1.0],
                vec![0.0, -1.0, -1.0],
                vec![0.0, 0.0, 2.0],
                vec![0.0, 0.0, -2.0],
            ])
            .unwrap(),
        ]
    }

    proptest! {
        #[test]
        fn homogeneous(v in arb_vec(), t in -5.0f64..5.0) {
            for n in all_norms() {
                let lhs = n.eval(&v.iter().map(|x| t * x).collect::<Vec<_>>());
                let rhs = t.abs() * n.eval(&v);
                prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs));
            }
        }

        #[test]
        fn triangle(u in arb_vec(), v in arb_vec()) {
            for n in all_norms() {
                let w: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
                let rhs = n.eval(&u) + n.eval(&v);
                prop_assert!(n.eval(&w) <= rhs * (1.0 + 1e-12) + 1e-12);
            }
        }

        #[test]
        fn smooth_gradient_matches_fd(v in arb_vec()) {
            prop_assume!(crate::linalg::norm2(&v) >= 0.1);
            for n in all_norms().into_iter().filter(NormSpec::is_smooth) {
                let ConvexSet::Point(g) = n.subgradient(&v) else { unreachable!() };
                for j in 0..3 {
                    let h = 1e-6;
                    let mut up = v.clone();
                    let mut dn = v.clone();
                    up[j] += h;
                    dn[j] -= h;
                    let fd = (n.eval(&up) - n.eval(&dn)) / (2.0 * h);
                    prop_assert!((fd - g[j]).abs() <= 1e-6);
                }
            }
        }

        #[test]
        fn duality_pairing(v in arb_vec()) {
            prop_assume!(crate::linalg::norm2(&v) >= 1e-3);
            for n in all_norms().into_iter().filter(NormSpec::is_smooth) {
                let ConvexSet::Point(g) = n.subgradient(&v) else { unreachable!() };
                prop_assert!((dot(&g, &v) - n.eval(&v)).abs() <= 1e-9 * (1.0 + n.eval(&v)));
                let q = n.dual_exponent().unwrap();
                prop_assert!((lp_norm(&g, q) - n.scale).abs() <= 1e-9);
            }
        }

        #[test]
        fn generator_views_reproduce_analytic(v in arb_vec()) {
            for n in [NormSpec::l1(), NormSpec::linf()] {
                let p = NormSpec::polyhedral(n.dual_extreme_points(3).unwrap()).unwrap();
                prop_assert!((p.eval(&v) - n.eval(&v)).abs() <= 1e-12 * (1.0 + n.eval(&v)));
            }
        }
    }
}
