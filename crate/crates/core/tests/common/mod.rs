//! Brute-force references written without the library's norms or solvers.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use refloc::locate::{solve, LocationInstance, SolveOptions};
use refloc::refraction::gate_single;
use refloc::{DemandPoint, Hyperplane, NormSpec, PathQuery};

/// `scale * |v|_p`, `p = INFINITY` for the max norm.
#[derive(Clone, Copy, Debug)]
pub struct Norm {
    pub p: f64,
    pub scale: f64,
}

impl Norm {
    pub fn eval(&self, v: &[f64]) -> f64 {
        let n = if self.p.is_infinite() {
            v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
        } else if self.p == 1.0 {
            v.iter().map(|x| x.abs()).sum()
        } else {
            let m = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if m == 0.0 {
                0.0
            } else {
                m * v
                    .iter()
                    .map(|x| (x.abs() / m).powf(self.p))
                    .sum::<f64>()
                    .powf(1.0 / self.p)
            }
        };
        self.scale * n
    }
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Minimize a convex function of one variable on `[lo, hi]`: a grid scan
/// followed by golden-section search on the best cell.
pub fn min_1d(f: impl Fn(f64) -> f64, lo: f64, hi: f64, grid: usize) -> (f64, f64) {
    let h = (hi - lo) / grid as f64;
    let mut best = (lo, f(lo));
    for i in 1..=grid {
        let t = lo + i as f64 * h;
        let v = f(t);
        if v < best.1 {
            best = (t, v);
        }
    }
    let (mut a, mut b) = ((best.0 - h).max(lo), (best.0 + h).min(hi));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if b - a <= 1e-15 * (1.0 + a.abs() + b.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let t = 0.5 * (a + b);
    let v = f(t);
    if v < best.1 {
        (t, v)
    } else {
        best
    }
}

/// Planar line `n . x = c` parametrized as `p0 + t * dir`.
#[derive(Clone, Debug)]
pub struct Line {
    pub n: [f64; 2],
    pub c: f64,
}

impl Line {
    fn dir(&self) -> [f64; 2] {
        let l = self.n[0].hypot(self.n[1]);
        [-self.n[1] / l, self.n[0] / l]
    }
    fn base(&self) -> [f64; 2] {
        let l2 = self.n[0] * self.n[0] + self.n[1] * self.n[1];
        [self.n[0] * self.c / l2, self.n[1] * self.c / l2]
    }
    pub fn at(&self, t: f64) -> [f64; 2] {
        let (p, d) = (self.base(), self.dir());
        [p[0] + t * d[0], p[1] + t * d[1]]
    }
    pub fn param(&self, x: &[f64]) -> f64 {
        let (p, d) = (self.base(), self.dir());
        (x[0] - p[0]) * d[0] + (x[1] - p[1]) * d[1]
    }
    pub fn value(&self, x: &[f64]) -> f64 {
        self.n[0] * x[0] + self.n[1] * x[1] - self.c
    }
}

/// Cheapest single crossing from `a` (norm `na`) to `b` (norm `nb`).
pub fn gate_1d(line: &Line, a: &[f64], b: &[f64], na: Norm, nb: Norm) -> (f64, [f64; 2]) {
    let (ta, tb) = (line.param(a), line.param(b));
    let reach =
        diff(a, b).iter().map(|x| x.abs()).sum::<f64>() + line.value(a).abs() + line.value(b).abs();
    let (lo, hi) = (ta.min(tb) - reach - 1.0, ta.max(tb) + reach + 1.0);
    let f = |t: f64| {
        let g = line.at(t);
        na.eval(&diff(a, &g)) + nb.eval(&diff(&g, b))
    };
    let (t, v) = min_1d(f, lo, hi, 400);
    (v, line.at(t))
}

/// Planar location instance for the brute force.
#[derive(Clone, Debug)]
pub struct Planar {
    pub line: Line,
    pub na: Norm,
    pub nb: Norm,
    /// `(coords, weight)`; side is read off the line (`value <= 0` is A).
    pub points: Vec<([f64; 2], f64)>,
}

impl Planar {
    /// Objective with the facility restricted to the closed side `a_side`.
    pub fn side_objective(&self, x: &[f64], a_side: bool) -> f64 {
        let (near, far) = if a_side {
            (self.na, self.nb)
        } else {
            (self.nb, self.na)
        };
        self.points
            .iter()
            .map(|(p, w)| {
                let p_in_a = self.line.value(p) <= 0.0;
                let same = p_in_a == a_side || self.line.value(p) == 0.0;
                w * if same {
                    near.eval(&diff(x, p))
                } else {
                    gate_1d(&self.line, x, p, near, far).0
                }
            })
            .sum()
    }

    /// Grid search over the box of the data, then a pattern search with
    /// 16 directions, separately in each closed halfspace.
    pub fn brute_force(&self, grid: usize) -> (f64, [f64; 2]) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for (p, _) in &self.points {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let mut best = (f64::INFINITY, [0.0; 2]);
        for a_side in [true, false] {
            let sign = if a_side { 1.0 } else { -1.0 };
            let clamp = |x: [f64; 2]| -> [f64; 2] {
                let v = sign * self.line.value(&x);
                if v <= 0.0 {
                    return x;
                }
                let l2 = self.line.n[0].powi(2) + self.line.n[1].powi(2);
                [
                    x[0] - sign * v * self.line.n[0] / l2,
                    x[1] - sign * v * self.line.n[1] / l2,
                ]
            };
            let f = |x: &[f64; 2]| self.side_objective(x, a_side);
            let mut start = (f64::INFINITY, [0.0; 2]);
            for i in 0..=grid {
                for j in 0..=grid {
                    let x = clamp([
                        lo[0] + (hi[0] - lo[0]) * i as f64 / grid as f64,
                        lo[1] + (hi[1] - lo[1]) * j as f64 / grid as f64,
                    ]);
                    let v = f(&x);
                    if v < start.0 {
                        start = (v, x);
                    }
                }
            }
            let (mut fx, mut x) = start;
            let mut step = (hi[0] - lo[0]).max(hi[1] - lo[1]) / grid as f64;
            let dirs: Vec<[f64; 2]> = (0..16)
                .map(|k| {
                    let th = k as f64 * std::f64::consts::PI / 8.0;
                    [th.cos(), th.sin()]
                })
                .chain(std::iter::once(self.line.dir()))
                .chain(std::iter::once({
                    let d = self.line.dir();
                    [-d[0], -d[1]]
                }))
                .collect();
            while step > 1e-11 {
                let mut moved = false;
                for d in &dirs {
                    let y = clamp([x[0] + step * d[0], x[1] + step * d[1]]);
                    let v = f(&y);
                    if v < fx {
                        fx = v;
                        x = y;
                        moved = true;
                    }
                }
                if !moved {
                    step *= 0.5;
                }
            }
            if fx < best.0 {
                best = (fx, x);
            }
        }
        best
    }
}

/// Smooth norms as `(r, s)` with `p = r/s`.
pub const SMOOTH: [(u32, u32); 4] = [(2, 1), (3, 1), (3, 2), (4, 3)];

pub fn spec(rs: (u32, u32), scale: f64) -> NormSpec {
    NormSpec::lp(rs.0, rs.1).unwrap().with_scale(scale).unwrap()
}

pub fn oracle(rs: (u32, u32), scale: f64) -> Norm {
    Norm {
        p: rs.0 as f64 / rs.1 as f64,
        scale,
    }
}

pub fn rng(seed: u64) -> Xoshiro256StarStar {
    Xoshiro256StarStar::seed_from_u64(seed)
}

/// A random line through the box `[0,10]^2`.
pub fn random_line(r: &mut impl Rng) -> Line {
    let th: f64 = r.random_range(0.0..std::f64::consts::PI);
    let n = [th.cos(), th.sin()];
    let c = n[0] * r.random_range(3.0..7.0) + n[1] * r.random_range(3.0..7.0);
    Line { n, c }
}

pub fn to_instance(p: &Planar, a: NormSpec, b: NormSpec) -> LocationInstance {
    let h = Hyperplane::new(p.line.n.to_vec(), p.line.c).unwrap();
    let pts = p
        .points
        .iter()
        .map(|(c, w)| DemandPoint::new(c.to_vec(), *w).unwrap())
        .collect();
    LocationInstance::from_points(h, a, b, None, pts).unwrap()
}

/// Worst relative gap between `solve` and the brute force over `count`
/// random six-point instances.
pub fn location_gap(count: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let line = random_line(&mut r);
        let ra = SMOOTH[r.random_range(0..SMOOTH.len())];
        let rb = SMOOTH[r.random_range(0..SMOOTH.len())];
        let (sa, sb) = (r.random_range(0.5..2.0), r.random_range(0.5..2.0));
        let points = (0..6)
            .map(|_| {
                (
                    [r.random_range(0.0..10.0), r.random_range(0.0..10.0)],
                    r.random_range(0.5..2.0),
                )
            })
            .collect();
        let planar = Planar {
            line,
            na: oracle(ra, sa),
            nb: oracle(rb, sb),
            points,
        };
        let inst = to_instance(&planar, spec(ra, sa), spec(rb, sb));
        let res = solve(&inst, false, &SolveOptions::default()).unwrap();
        let (fb, _) = planar.brute_force(40);
        worst = worst.max((res.f_star - fb).abs() / fb.abs().max(1.0));
    }
    worst
}

/// Worst relative gap between `gate_single` and the 1-D brute force.
pub fn gate_gap(count: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < count {
        let line = random_line(&mut r);
        let a = [r.random_range(0.0..10.0), r.random_range(0.0..10.0)];
        let b = [r.random_range(0.0..10.0), r.random_range(0.0..10.0)];
        if line.value(&a) * line.value(&b) >= 0.0 {
            continue;
        }
        let (a, b) = if line.value(&a) < 0.0 { (a, b) } else { (b, a) };
        let ra = SMOOTH[r.random_range(0..SMOOTH.len())];
        let rb = SMOOTH[r.random_range(0..SMOOTH.len())];
        let (sa, sb) = (r.random_range(0.5..2.0), r.random_range(0.5..2.0));
        let h = Hyperplane::new(line.n.to_vec(), line.c).unwrap();
        let q = PathQuery::new(
            h,
            DemandPoint::unit(a.to_vec()),
            DemandPoint::unit(b.to_vec()),
            spec(ra, sa),
            spec(rb, sb),
        );
        let got = gate_single(&q).unwrap().total;
        let (want, _) = gate_1d(&line, &a, &b, oracle(ra, sa), oracle(rb, sb));
        worst = worst.max((got - want).abs() / want.max(1e-12));
        done += 1;
    }
    worst
}
