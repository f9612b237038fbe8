//! Damped Newton for objectives with arrowhead Hessians.
//!
//! The objective is `sum_i f_i(x, u_i)`: a shared block `x` coupled to many
//! private blocks `u_i`. The Newton system is solved through the Schur
//! complement on `x`, so a step costs `O(n)` small factorizations. Nonsmooth
//! norms enter through a smoothing parameter `mu` that is driven to its final
//! value by continuation.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

/// Derivatives of one block term.
#[derive(Debug, Clone, Default)]
pub struct BlockDerivs {
    pub gx: Vec<f64>,
    pub gu: Vec<f64>,
    /// Row-major `x_dim * x_dim`.
    pub hxx: Vec<f64>,
    /// Row-major `x_dim * u_dim`.
    pub hxu: Vec<f64>,
    /// Row-major `u_dim * u_dim`.
    pub huu: Vec<f64>,
}

impl BlockDerivs {
    pub fn zeroed(nx: usize, nu: usize) -> Self {
        BlockDerivs {
            gx: vec![0.0; nx],
            gu: vec![0.0; nu],
            hxx: vec![0.0; nx * nx],
            hxu: vec![0.0; nx * nu],
            huu: vec![0.0; nu * nu],
        }
    }

    fn reset(&mut self, nx: usize, nu: usize) {
        for (v, n) in [
            (&mut self.gx, nx),
            (&mut self.gu, nu),
            (&mut self.hxx, nx * nx),
            (&mut self.hxu, nx * nu),
            (&mut self.huu, nu * nu),
        ] {
            v.clear();
            v.resize(n, 0.0);
        }
    }
}

pub trait ArrowProblem: Sync {
    fn x_dim(&self) -> usize;
    fn n_blocks(&self) -> usize;
    fn block_dim(&self, i: usize) -> usize;
    /// Value of block `i`; fills `d` (already zeroed and sized) when present.
    fn eval_block(
        &self,
        i: usize,
        x: &[f64],
        u: &[f64],
        mu: f64,
        d: Option<&mut BlockDerivs>,
    ) -> f64;
}

#[derive(Debug, Clone)]
pub struct NewtonOptions {
    /// Absolute smoothing parameters.
    pub mu_start: f64,
    pub mu_end: f64,
    pub mu_factor: f64,
    /// Final stage stops when `|grad| <= grad_tol * (1 + |f|)`.
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Evaluate blocks in parallel when there are at least this many.
    pub parallel_threshold: usize,
    /// Steps longer than this (Euclidean, all variables) are shortened.
    pub max_step: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            mu_start: 1e-3,
            mu_end: 1e-10,
            mu_factor: 0.1,
            grad_tol: 1e-9,
            max_iter: 500,
            parallel_threshold: 256,
            max_step: f64::INFINITY,
        }
    }
}

impl NewtonOptions {
    /// Smoothing schedule relative to a length scale.
    pub fn scaled(mut self, length: f64) -> Self {
        self.mu_start *= length;
        self.mu_end *= length;
        self.max_step = length;
        self
    }
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub x: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    /// Smoothed objective at the final `mu`.
    pub value: f64,
    pub grad_norm: f64,
    pub mu: f64,
    pub iterations: usize,
    pub converged: bool,
}

struct Workspace {
    derivs: Vec<BlockDerivs>,
    values: Vec<f64>,
}

fn evaluate<P: ArrowProblem>(
    p: &P,
    x: &[f64],
    u: &[Vec<f64>],
    mu: f64,
    ws: &mut Workspace,
    with_derivs: bool,
    parallel: bool,
) -> f64 {
    let nx = p.x_dim();
    let job = |(i, (d, v)): (usize, (&mut BlockDerivs, &mut f64))| {
        if with_derivs {
            d.reset(nx, u[i].len());
            *v = p.eval_block(i, x, &u[i], mu, Some(d));
        } else {
            *v = p.eval_block(i, x, &u[i], mu, None);
        }
    };
    if parallel {
        ws.derivs
            .par_iter_mut()
            .zip(ws.values.par_iter_mut())
            .enumerate()
            .for_each(job);
    } else {
        ws.derivs
            .iter_mut()
            .zip(ws.values.iter_mut())
            .enumerate()
            .for_each(job);
    }
    // Sequential sum keeps results independent of the thread count.
    ws.values.iter().sum()
}

fn trial_value<P: ArrowProblem>(p: &P, x: &[f64], u: &[Vec<f64>], mu: f64, parallel: bool) -> f64 {
    let n = p.n_blocks();
    let vals: Vec<f64> = if parallel {
        (0..n)
            .into_par_iter()
            .map(|i| p.eval_block(i, x, &u[i], mu, None))
            .collect()
    } else {
        (0..n)
            .map(|i| p.eval_block(i, x, &u[i], mu, None))
            .collect()
    };
    vals.iter().sum()
}

/// Cholesky of `m + shift*I`, raising the shift until it succeeds.
fn robust_cholesky(m: DMatrix<f64>) -> nalgebra::Cholesky<f64, nalgebra::Dyn> {
    let n = m.nrows();
    let diag_max = (0..n).map(|i| m[(i, i)].abs()).fold(0.0, f64::max);
    let mut shift = 1e-14 * diag_max + 1e-300;
    if let Some(c) = m.clone().cholesky() {
        return c;
    }
    loop {
        let mut t = m.clone();
        for i in 0..n {
            t[(i, i)] += shift;
        }
        if let Some(c) = t.cholesky() {
            return c;
        }
        shift *= 100.0;
        if !shift.is_finite() {
            // Fall back to a scaled identity; only reachable with non-finite input.
            return DMatrix::<f64>::identity(n, n).cholesky().unwrap();
        }
    }
}

/// Newton direction `(dx, du)` from the current derivatives.
fn newton_direction(nx: usize, ws: &Workspace, parallel: bool) -> (Vec<f64>, Vec<Vec<f64>>) {
    struct Piece {
        s: DMatrix<f64>,
        r: DVector<f64>,
        chol: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    }
    let piece = |d: &BlockDerivs| -> Piece {
        let nu = d.gu.len();
        let mut s = DMatrix::from_row_slice(nx, nx, &d.hxx);
        let mut r = DVector::from_column_slice(&d.gx);
        if nu == 0 {
            return Piece { s, r, chol: None };
        }
        let chol = robust_cholesky(DMatrix::from_row_slice(nu, nu, &d.huu));
        if nx > 0 {
            let hxu = DMatrix::from_row_slice(nx, nu, &d.hxu);
            let dinv_hux = chol.solve(&hxu.transpose());
            let dinv_g = chol.solve(&DVector::from_column_slice(&d.gu));
            s -= &hxu * dinv_hux;
            r -= &hxu * dinv_g;
        }
        Piece {
            s,
            r,
            chol: Some(chol),
        }
    };
    let pieces: Vec<Piece> = if parallel {
        ws.derivs.par_iter().map(piece).collect()
    } else {
        ws.derivs.iter().map(piece).collect()
    };
    let mut dx = vec![0.0; nx];
    if nx > 0 {
        let mut s = DMatrix::<f64>::zeros(nx, nx);
        let mut r = DVector::<f64>::zeros(nx);
        for pc in &pieces {
            s += &pc.s;
            r += &pc.r;
        }
        let s = (&s + s.transpose()) * 0.5;
        let sol = robust_cholesky(s).solve(&(-r));
        dx.copy_from_slice(sol.as_slice());
    }
    let dxv = DVector::from_column_slice(&dx);
    let du_of = |(d, pc): (&BlockDerivs, &Piece)| -> Vec<f64> {
        let nu = d.gu.len();
        let Some(chol) = &pc.chol else {
            return Vec::new();
        };
        let mut rhs = DVector::from_column_slice(&d.gu);
        if nx > 0 {
            let hxu = DMatrix::from_row_slice(nx, nu, &d.hxu);
            rhs += hxu.transpose() * &dxv;
        }
        (-chol.solve(&rhs)).as_slice().to_vec()
    };
    let du: Vec<Vec<f64>> = if parallel {
        ws.derivs
            .par_iter()
            .zip(pieces.par_iter())
            .map(du_of)
            .collect()
    } else {
        ws.derivs.iter().zip(pieces.iter()).map(du_of).collect()
    };
    (dx, du)
}

fn directional(gx: &[f64], ws: &Workspace, dx: &[f64], du: &[Vec<f64>]) -> f64 {
    gx.iter().zip(dx).map(|(a, b)| a * b).sum::<f64>()
        + ws.derivs
            .iter()
            .zip(du)
            .map(|(d, s)| d.gu.iter().zip(s).map(|(a, b)| a * b).sum::<f64>())
            .sum::<f64>()
}

/// Armijo backtracking; leaves the accepted point in `xt`, `ut`.
#[allow(clippy::too_many_arguments)]
fn line_search<P: ArrowProblem>(
    p: &P,
    x: &[f64],
    u: &[Vec<f64>],
    dx: &[f64],
    du: &[Vec<f64>],
    f: f64,
    slope: f64,
    mu: f64,
    parallel: bool,
    xt: &mut [f64],
    ut: &mut [Vec<f64>],
) -> Option<()> {
    let mut t = 1.0;
    for _ in 0..60 {
        for k in 0..x.len() {
            xt[k] = x[k] + t * dx[k];
        }
        for (ui, (uti, dui)) in u.iter().zip(ut.iter_mut().zip(du)) {
            for k in 0..ui.len() {
                uti[k] = ui[k] + t * dui[k];
            }
        }
        let ft = trial_value(p, xt, ut, mu, parallel);
        if ft.is_finite() && ft < f && ft <= f + 1e-4 * t * slope {
            return Some(());
        }
        t *= 0.5;
    }
    None
}

pub fn minimize<P: ArrowProblem>(
    p: &P,
    mut x: Vec<f64>,
    mut u: Vec<Vec<f64>>,
    opts: &NewtonOptions,
) -> NewtonOutcome {
    let nx = p.x_dim();
    let n = p.n_blocks();
    assert_eq!(x.len(), nx);
    assert_eq!(u.len(), n);
    let parallel = n >= opts.parallel_threshold;
    let mut ws = Workspace {
        derivs: (0..n)
            .map(|i| BlockDerivs::zeroed(nx, p.block_dim(i)))
            .collect(),
        values: vec![0.0; n],
    };

    let mut mu = opts.mu_start.max(opts.mu_end);
    let mut iterations = 0;
    let mut f;
    let mut gnorm;
    let mut converged;

    loop {
        let last_stage = mu <= opts.mu_end * (1.0 + 1e-12);
        let loosen = if last_stage {
            1.0
        } else {
            (mu / opts.mu_end).sqrt()
        };
        converged = false;
        loop {
            f = evaluate(p, &x, &u, mu, &mut ws, true, parallel);
            let gx: Vec<f64> = (0..nx)
                .map(|k| ws.derivs.iter().map(|d| d.gx[k]).sum())
                .collect();
            let g2: f64 = gx.iter().map(|v| v * v).sum::<f64>()
                + ws.derivs
                    .iter()
                    .map(|d| d.gu.iter().map(|v| v * v).sum::<f64>())
                    .sum::<f64>();
            gnorm = g2.sqrt();
            let tol = opts.grad_tol * (1.0 + f.abs());
            if gnorm <= tol * loosen {
                converged = true;
                break;
            }
            if iterations >= opts.max_iter {
                break;
            }
            iterations += 1;

            let (dx, du) = newton_direction(nx, &ws, parallel);
            let slope = directional(&gx, &ws, &dx, &du);
            let newton_ok = slope < 0.0 && slope.is_finite();
            let mut xt = x.clone();
            let mut ut = u.clone();
            let mut accepted = false;
            let mut last_slope = slope;
            // Newton first; steepest descent if the Newton step is unusable.
            for attempt in 0..2 {
                let (mut dx, mut du, mut slope) = if attempt == 0 && newton_ok {
                    (dx.clone(), du.clone(), slope)
                } else if attempt == 1 || !newton_ok {
                    let sx: Vec<f64> = gx.iter().map(|v| -v).collect();
                    let su: Vec<Vec<f64>> = ws
                        .derivs
                        .iter()
                        .map(|d| d.gu.iter().map(|v| -v).collect())
                        .collect();
                    (sx, su, -g2)
                } else {
                    continue;
                };
                let big = dx
                    .iter()
                    .chain(du.iter().flatten())
                    .fold(0.0_f64, |m, v| m.max(v.abs()));
                let len = if big > 0.0 && big.is_finite() {
                    big * (dx.iter().map(|v| (v / big).powi(2)).sum::<f64>()
                        + du.iter().flatten().map(|v| (v / big).powi(2)).sum::<f64>())
                    .sqrt()
                } else {
                    big
                };
                if !len.is_finite() {
                    continue;
                }
                if len > opts.max_step {
                    let c = opts.max_step / len;
                    dx.iter_mut().for_each(|v| *v *= c);
                    du.iter_mut().flatten().for_each(|v| *v *= c);
                    slope *= c;
                }
                last_slope = slope;
                if let Some(()) = line_search(
                    p, &x, &u, &dx, &du, f, slope, mu, parallel, &mut xt, &mut ut,
                ) {
                    accepted = true;
                    break;
                }
                if attempt == 0 && !newton_ok {
                    break;
                }
            }
            if !accepted {
                // No representable decrease left: accept as converged only if the
                // predicted decrease (Newton decrement when available) is at
                // rounding level.
                let predicted = if newton_ok { slope } else { last_slope };
                converged = -predicted <= 1e-13 * (1.0 + f.abs());
                break;
            }
            std::mem::swap(&mut x, &mut xt);
            std::mem::swap(&mut u, &mut ut);
        }
        if last_stage || iterations >= opts.max_iter {
            break;
        }
        mu = (mu * opts.mu_factor).max(opts.mu_end);
    }

    NewtonOutcome {
        x,
        u,
        value: f,
        grad_norm: gnorm,
        mu,
        iterations,
        converged: converged && mu <= opts.mu_end * (1.0 + 1e-12),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// sum_i 0.5*|x - c_i|^2 + 0.5*(u_i - x_0)^2 + u_i^4
    struct Toy {
        c: Vec<[f64; 2]>,
    }

    impl ArrowProblem for Toy {
        fn x_dim(&self) -> usize {
            2
        }
        fn n_blocks(&self) -> usize {
            self.c.len()
        }
        fn block_dim(&self, _: usize) -> usize {
            1
        }
        fn eval_block(
            &self,
            i: usize,
            x: &[f64],
            u: &[f64],
            _mu: f64,
            d: Option<&mut BlockDerivs>,
        ) -> f64 {
            let c = self.c[i];
            let r = u[0] - x[0];
            if let Some(d) = d {
                d.gx[0] = x[0] - c[0] - r;
                d.gx[1] = x[1] - c[1];
                d.gu[0] = r + 4.0 * u[0].powi(3);
                d.hxx[0] = 2.0;
                d.hxx[3] = 1.0;
                d.hxu[0] = -1.0;
                d.huu[0] = 1.0 + 12.0 * u[0] * u[0];
            }
            0.5 * ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)) + 0.5 * r * r + u[0].powi(4)
        }
    }

    #[test]
    fn converges_on_coupled_toy() {
        let toy = Toy {
            c: (0..300)
                .map(|i| [i as f64 / 100.0, -(i as f64) / 50.0])
                .collect(),
        };
        let out = minimize(
            &toy,
            vec![5.0, 5.0],
            vec![vec![1.0]; 300],
            &NewtonOptions::default(),
        );
        assert!(out.converged);
        // stationarity in x_1 gives the mean of the second coordinates
        let mean1: f64 = toy.c.iter().map(|c| c[1]).sum::<f64>() / 300.0;
        assert!((out.x[1] - mean1).abs() < 1e-9);
        assert!(out.iterations < 40);
    }
}
