//! Weighted polygonal paths whose inner vertices live on the hyperplane.
//!
//! A chain runs `start -> g_1 -> ... -> g_k -> end`; gate `g_j` is stored in
//! tangent coordinates of a [`Frame`]. Leg `j` costs `w_j * N_j(p_j - p_{j+1})`.

use crate::geometry::Frame;
use crate::newton::BlockDerivs;
use crate::norms::NormSpec;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Leg<'a> {
    pub norm: &'a NormSpec,
    pub weight: f64,
}

pub(crate) fn lift_gates(frame: &Frame, u: &[f64], k: usize) -> Vec<Vec<f64>> {
    let m = frame.basis.len();
    (0..k).map(|j| frame.lift(&u[j * m..(j + 1) * m])).collect()
}

/// Per-leg weighted exact lengths along `points`.
pub(crate) fn leg_lengths(points: &[&[f64]], legs: &[Leg]) -> Vec<f64> {
    legs.iter()
        .enumerate()
        .map(|(j, l)| {
            let v: Vec<f64> = points[j]
                .iter()
                .zip(points[j + 1])
                .map(|(a, b)| a - b)
                .collect();
            l.weight * l.norm.eval(&v)
        })
        .collect()
}

/// Smoothed chain value. With `d`, fills derivatives: the `x` block is the
/// start point in full coordinates when `start_free`, and the `u` block is all
/// gate coordinates.
pub(crate) fn chain_smoothed(
    frame: &Frame,
    start: &[f64],
    start_free: bool,
    u: &[f64],
    end: &[f64],
    legs: &[Leg],
    mu: f64,
    d: Option<&mut BlockDerivs>,
) -> f64 {
    let dim = start.len();
    let k = legs.len() - 1;
    let m = frame.basis.len();
    let gates = lift_gates(frame, u, k);
    let mut pts: Vec<&[f64]> = Vec::with_capacity(k + 2);
    pts.push(start);
    pts.extend(gates.iter().map(Vec::as_slice));
    pts.push(end);

    let Some(d) = d else {
        let mut g = vec![0.0; dim];
        return legs
            .iter()
            .enumerate()
            .map(|(j, l)| {
                let v: Vec<f64> = pts[j].iter().zip(pts[j + 1]).map(|(a, b)| a - b).collect();
                l.weight * l.norm.smoothed(&v, mu, &mut g, None)
            })
            .sum();
    };

    // Point-space gradient and Hessian over p_0..p_{k+1}.
    let np = k + 2;
    let n = np * dim;
    let mut gp = vec![0.0; n];
    let mut hp = vec![0.0; n * n];
    let mut g = vec![0.0; dim];
    let mut h = vec![0.0; dim * dim];
    let mut total = 0.0;
    for (j, l) in legs.iter().enumerate() {
        let v: Vec<f64> = pts[j].iter().zip(pts[j + 1]).map(|(a, b)| a - b).collect();
        total += l.weight * l.norm.smoothed(&v, mu, &mut g, Some(&mut h));
        for r in 0..dim {
            gp[j * dim + r] += l.weight * g[r];
            gp[(j + 1) * dim + r] -= l.weight * g[r];
            for c in 0..dim {
                let w = l.weight * h[r * dim + c];
                hp[(j * dim + r) * n + j * dim + c] += w;
                hp[((j + 1) * dim + r) * n + (j + 1) * dim + c] += w;
                hp[(j * dim + r) * n + (j + 1) * dim + c] -= w;
                hp[((j + 1) * dim + r) * n + j * dim + c] -= w;
            }
        }
    }
    let t = &frame.basis;
    let nu = k * m;
    if start_free {
        d.gx[..dim].copy_from_slice(&gp[..dim]);
        for r in 0..dim {
            for c in 0..dim {
                d.hxx[r * dim + c] = hp[r * n + c];
            }
        }
    }
    for a in 0..k {
        let pa = (a + 1) * dim;
        for i in 0..m {
            let ui = a * m + i;
            d.gu[ui] = (0..dim).map(|r| t[i][r] * gp[pa + r]).sum();
            if start_free {
                for r in 0..dim {
                    d.hxu[r * nu + ui] = (0..dim).map(|c| hp[r * n + pa + c] * t[i][c]).sum();
                }
            }
            for b in 0..k {
                let pb = (b + 1) * dim;
                for jj in 0..m {
                    let uj = b * m + jj;
                    let mut acc = 0.0;
                    for r in 0..dim {
                        if t[i][r] == 0.0 {
                            continue;
                        }
                        for c in 0..dim {
                            acc += t[i][r] * hp[(pa + r) * n + pb + c] * t[jj][c];
                        }
                    }
                    d.huu[ui * nu + uj] = acc;
                }
            }
        }
    }
    total
}

/// Derivative-free descent on an exact (nonsmooth) objective.
///
/// Compass search over coordinate and pairwise-diagonal directions with a
/// halving step; only ever accepts strict decreases.
pub(crate) fn compass_polish(
    f: &dyn Fn(&[f64]) -> f64,
    u: &mut [f64],
    step0: f64,
    step_min: f64,
) -> f64 {
    let n = u.len();
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; n];
            e[i] = s;
            dirs.push(e);
        }
        for j in i + 1..n {
            for (si, sj) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let mut e = vec![0.0; n];
                e[i] = si;
                e[j] = sj;
                dirs.push(e);
            }
        }
    }
    let mut best = f(u);
    let mut step = step0;
    let mut trial = u.to_vec();
    let mut evals = 0;
    while step >= step_min && evals < 20_000 {
        let mut improved = false;
        for e in &dirs {
            for (ti, (ui, ei)) in trial.iter_mut().zip(u.iter().zip(e)) {
                *ti = ui + step * ei;
            }
            evals += 1;
            let v = f(&trial);
            if v < best {
                best = v;
                u.copy_from_slice(&trial);
                improved = true;
                break;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    best
}
