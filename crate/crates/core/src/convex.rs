//! Small closed convex sets with Euclidean projection.
//!
//! Subdifferentials of the supported norms and the (possibly non-unique)
//! argmin sets of norm projections onto a hyperplane are all one of these
//! shapes. Optimality checks project candidate vectors onto them.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{dot, norm2, sub};

#[derive(Debug, Clone, PartialEq)]
pub enum ConvexSet {
    /// A single vector.
    Point(Vec<f64>),
    /// Axis-aligned box `lo <= g <= hi` (componentwise).
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// `{ sum_j t_j * sign_j * e_j : t >= 0, sum t = radius }` over the listed
    /// coordinates; zero on every other coordinate.
    SignedSimplex {
        dim: usize,
        coords: Vec<(usize, f64)>,
        radius: f64,
    },
    /// l1 ball of the given radius.
    CrossPolytope { dim: usize, radius: f64 },
    /// lq ball of the given radius, `1 <= q <= inf`.
    LqBall { dim: usize, q: f64, radius: f64 },
    /// Convex hull of finitely many vectors.
    Hull(Vec<Vec<f64>>),
}

impl ConvexSet {
    pub fn dim(&self) -> usize {
        match self {
            ConvexSet::Point(p) => p.len(),
            ConvexSet::Box { lo, .. } => lo.len(),
            ConvexSet::SignedSimplex { dim, .. }
            | ConvexSet::CrossPolytope { dim, .. }
            | ConvexSet::LqBall { dim, .. } => *dim,
            ConvexSet::Hull(pts) => pts.first().map_or(0, Vec::len),
        }
    }

    /// True when the set is a single vector.
    pub fn is_singleton(&self) -> bool {
        match self {
            ConvexSet::Point(_) => true,
            ConvexSet::Box { lo, hi } => lo.iter().zip(hi).all(|(l, h)| l == h),
            ConvexSet::SignedSimplex { coords, radius, .. } => coords.len() <= 1 || *radius == 0.0,
            ConvexSet::CrossPolytope { radius, .. } | ConvexSet::LqBall { radius, .. } => {
                *radius == 0.0
            }
            ConvexSet::Hull(pts) => pts.windows(2).all(|w| w[0] == w[1]),
        }
    }

    /// Some member of the set. Balls return the origin.
    pub fn element(&self) -> Vec<f64> {
        match self {
            ConvexSet::Point(p) => p.clone(),
            ConvexSet::Box { .. } | ConvexSet::CrossPolytope { .. } | ConvexSet::LqBall { .. } => {
                self.project(&vec![0.0; self.dim()])
            }
            ConvexSet::SignedSimplex {
                dim,
                coords,
                radius,
            } => {
                let mut g = vec![0.0; *dim];
                let share = radius / coords.len() as f64;
                for &(j, s) in coords {
                    g[j] = s * share;
                }
                g
            }
            ConvexSet::Hull(pts) => {
                let mut c = vec![0.0; self.dim()];
                for p in pts {
                    for (ci, pi) in c.iter_mut().zip(p) {
                        *ci += pi / pts.len() as f64;
                    }
                }
                c
            }
        }
    }

    /// The set multiplied by a nonnegative scalar.
    pub fn scaled(&self, w: f64) -> ConvexSet {
        let mul = |v: &Vec<f64>| v.iter().map(|x| x * w).collect::<Vec<_>>();
        match self {
            ConvexSet::Point(p) => ConvexSet::Point(mul(p)),
            ConvexSet::Box { lo, hi } => ConvexSet::Box {
                lo: mul(lo),
                hi: mul(hi),
            },
            ConvexSet::SignedSimplex {
                dim,
                coords,
                radius,
            } => ConvexSet::SignedSimplex {
                dim: *dim,
                coords: coords.clone(),
                radius: radius * w,
            },
            ConvexSet::CrossPolytope { dim, radius } => ConvexSet::CrossPolytope {
                dim: *dim,
                radius: radius * w,
            },
            ConvexSet::LqBall { dim, q, radius } => ConvexSet::LqBall {
                dim: *dim,
                q: *q,
                radius: radius * w,
            },
            ConvexSet::Hull(pts) => ConvexSet::Hull(pts.iter().map(mul).collect()),
        }
    }

    /// Euclidean projection of `y` onto the set.
    pub fn project(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.dim());
        match self {
            ConvexSet::Point(p) => p.clone(),
            ConvexSet::Box { lo, hi } => y
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(v, (l, h))| v.clamp(*l, *h))
                .collect(),
            ConvexSet::SignedSimplex {
                dim,
                coords,
                radius,
            } => {
                let vals: Vec<f64> = coords.iter().map(|&(j, s)| s * y[j]).collect();
                let t = project_simplex(&vals, *radius);
                let mut g = vec![0.0; *dim];
                for (&(j, s), tj) in coords.iter().zip(t) {
                    g[j] = s * tj;
                }
                g
            }
            ConvexSet::CrossPolytope { radius, .. } => project_l1_ball(y, *radius),
            ConvexSet::LqBall { q, radius, .. } => project_lq_ball(y, *q, *radius),
            ConvexSet::Hull(pts) => {
                let shifted: Vec<Vec<f64>> = pts.iter().map(|p| sub(p, y)).collect();
                let m = min_norm_point(&shifted);
                m.iter().zip(y).map(|(a, b)| a + b).collect()
            }
        }
    }

    /// Euclidean distance from `y` to the set.
    pub fn distance(&self, y: &[f64]) -> f64 {
        norm2(&sub(&self.project(y), y))
    }

    pub fn contains(&self, y: &[f64], tol: f64) -> bool {
        self.distance(y) <= tol
    }
}

/// Projection onto `{t >= 0, sum t = r}`.
pub fn project_simplex(y: &[f64], r: f64) -> Vec<f64> {
    if y.is_empty() {
        return Vec::new();
    }
    let mut u: Vec<f64> = y.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, ui) in u.iter().enumerate() {
        cumsum += ui;
        let t = (cumsum - r) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    y.iter().map(|v| (v - theta).max(0.0)).collect()
}

pub fn project_l1_ball(y: &[f64], r: f64) -> Vec<f64> {
    let l1: f64 = y.iter().map(|v| v.abs()).sum();
    if l1 <= r {
        return y.to_vec();
    }
    let abs: Vec<f64> = y.iter().map(|v| v.abs()).collect();
    let t = project_simplex(&abs, r);
    y.iter().zip(t).map(|(v, ti)| v.signum() * ti).collect()
}

/// Projection onto the lq ball of radius `r`.
pub fn project_lq_ball(y: &[f64], q: f64, r: f64) -> Vec<f64> {
    if q.is_infinite() {
        return y.iter().map(|v| v.clamp(-r, r)).collect();
    }
    if q == 1.0 {
        return project_l1_ball(y, r);
    }
    let nq = crate::linalg::lp_norm(y, q);
    if nq <= r {
        return y.to_vec();
    }
    if q == 2.0 {
        return y.iter().map(|v| v * r / nq).collect();
    }
    if r == 0.0 {
        return vec![0.0; y.len()];
    }
    // KKT: t_j + nu*q*t_j^(q-1) = |y_j|, with nu chosen so that sum t^q = r^q.
    let abs: Vec<f64> = y.iter().map(|v| v.abs()).collect();
    let solve_t = |yj: f64, nu: f64| -> f64 {
        let (mut lo, mut hi) = (0.0_f64, yj);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if mid + nu * q * mid.powf(q - 1.0) > yj {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let mass = |nu: f64| -> f64 { abs.iter().map(|&yj| solve_t(yj, nu).powf(q)).sum() };
    let target = r.powf(q);
    let mut hi = 1.0;
    while mass(hi) > target {
        hi *= 2.0;
        if hi > 1e300 {
            break;
        }
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t: Vec<f64> = abs.iter().map(|&yj| solve_t(yj, hi)).collect();
    y.iter().zip(t).map(|(v, ti)| v.signum() * ti).collect()
}

/// Minimum-norm point of the convex hull of `pts` (Wolfe's algorithm).
pub fn min_norm_point(pts: &[Vec<f64>]) -> Vec<f64> {
    assert!(!pts.is_empty(), "empty hull");
    let d = pts[0].len();
    let scale = pts
        .iter()
        .map(|p| dot(p, p))
        .fold(0.0, f64::max)
        .max(1e-300);
    let eps = 1e-12 * scale;

    let start = (0..pts.len())
        .min_by(|&i, &j| dot(&pts[i], &pts[i]).total_cmp(&dot(&pts[j], &pts[j])))
        .unwrap();
    let mut active: Vec<usize> = vec![start];
    let mut w: Vec<f64> = vec![1.0];
    let combine = |active: &[usize], w: &[f64]| -> Vec<f64> {
        let mut x = vec![0.0; d];
        for (&i, wi) in active.iter().zip(w) {
            for (xk, pk) in x.iter_mut().zip(&pts[i]) {
                *xk += wi * pk;
            }
        }
        x
    };
    let mut x = pts[start].clone();

    for _major in 0..(10 * pts.len() + 50) {
        let xx = dot(&x, &x);
        let (j, xpj) = (0..pts.len())
            .map(|i| (i, dot(&x, &pts[i])))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if xx - xpj <= eps || active.contains(&j) {
            break;
        }
        active.push(j);
        w.push(0.0);

        for _minor in 0..(pts.len() + 5) {
            let c = affine_min_norm(pts, &active);
            if c.iter().all(|&ci| ci > 1e-14) {
                w = c;
                x = combine(&active, &w);
                break;
            }
            let mut theta = 1.0_f64;
            for (wi, ci) in w.iter().zip(&c) {
                if *ci <= 1e-14 && wi - ci > 0.0 {
                    theta = theta.min(wi / (wi - ci));
                }
            }
            for (wi, ci) in w.iter_mut().zip(&c) {
                *wi += theta * (ci - *wi);
            }
            let mut k = 0;
            while k < active.len() {
                if w[k] <= 1e-14 {
                    active.remove(k);
                    w.remove(k);
                } else {
                    k += 1;
                }
            }
            let total: f64 = w.iter().sum();
            for wi in w.iter_mut() {
                *wi /= total;
            }
            x = combine(&active, &w);
            if active.len() <= 1 {
                break;
            }
        }
    }
    x
}

/// Affine-hull min-norm coefficients: minimise |sum c_i p_i| subject to sum c = 1.
fn affine_min_norm(pts: &[Vec<f64>], active: &[usize]) -> Vec<f64> {
    let k = active.len();
    let mut m = DMatrix::<f64>::zeros(k + 1, k + 1);
    for a in 0..k {
        for b in 0..k {
            m[(a, b)] = dot(&pts[active[a]], &pts[active[b]]);
        }
        m[(a, k)] = 1.0;
        m[(k, a)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(k + 1);
    rhs[k] = 1.0;
    match m.clone().lu().solve(&rhs) {
        Some(sol) => sol.rows(0, k).iter().copied().collect(),
        None => {
            // Degenerate (affinely dependent) set: fall back to the pseudo-inverse.
            let svd = m.svd(true, true);
            match svd.solve(&rhs, 1e-14) {
                Ok(sol) => sol.rows(0, k).iter().copied().collect(),
                Err(_) => vec![1.0 / k as f64; k],
            }
        }
    }
}
