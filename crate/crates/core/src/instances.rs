//! Instance files, embedded data and random instances.
//!
//! Text format, one item per line, `#` starts a comment:
//!
//! ```text
//! schema_version 1
//! dim 2
//! hyperplane alpha=1.5,-1;beta=0
//! norm_a l2
//! norm_b lp:3/1
//! norm_h linf:0.25        # optional
//! point A 1 1 2           # point <A|B|auto> <weight> <coords...>
//! point auto 1 5 5
//! ```
//!
//! The header keys come before the first point. `auto` points are labelled by
//! the side of the hyperplane they fall on (A when on it).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

use crate::error::{Error, Result};
use crate::fmt::fmt_f64;
use crate::geometry::{DemandPoint, Hyperplane, Side};
use crate::locate::LocationInstance;
use crate::norms::{parse_scale, NormSpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    A,
    B,
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointEntry {
    pub set: Label,
    pub weight: f64,
    pub coords: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceFile {
    pub schema_version: u32,
    pub dim: usize,
    pub hyperplane: Hyperplane,
    pub norm_a: NormSpec,
    pub norm_b: NormSpec,
    pub norm_h: Option<NormSpec>,
    pub points: Vec<PointEntry>,
}

impl InstanceFile {
    /// Resolve `auto` labels and build the validated instance.
    pub fn to_instance(&self) -> Result<LocationInstance> {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for p in &self.points {
            let dp = DemandPoint::new(p.coords.clone(), p.weight)?;
            let label = match p.set {
                Label::A => Side::A,
                Label::B => Side::B,
                Label::Auto => match self.hyperplane.side(&p.coords) {
                    Side::B => Side::B,
                    _ => Side::A,
                },
            };
            if label == Side::A {
                a.push(dp);
            } else {
                b.push(dp);
            }
        }
        LocationInstance::new(
            self.hyperplane.clone(),
            self.norm_a.clone(),
            self.norm_b.clone(),
            self.norm_h.clone(),
            a,
            b,
        )
    }

    pub fn from_instance(inst: &LocationInstance) -> Self {
        InstanceFile {
            schema_version: SCHEMA_VERSION,
            dim: inst.dim,
            hyperplane: inst.h.clone(),
            norm_a: inst.norm_a.clone(),
            norm_b: inst.norm_b.clone(),
            norm_h: inst.norm_h.clone(),
            points: inst
                .labeled_points()
                .map(|(s, p)| PointEntry {
                    set: if s == Side::A { Label::A } else { Label::B },
                    weight: p.weight,
                    coords: p.coords.clone(),
                })
                .collect(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut o = String::new();
        let _ = writeln!(o, "schema_version {}", self.schema_version);
        let _ = writeln!(o, "dim {}", self.dim);
        let _ = writeln!(o, "hyperplane {}", self.hyperplane);
        let _ = writeln!(o, "norm_a {}", self.norm_a);
        let _ = writeln!(o, "norm_b {}", self.norm_b);
        if let Some(h) = &self.norm_h {
            let _ = writeln!(o, "norm_h {h}");
        }
        for p in &self.points {
            let set = match p.set {
                Label::A => "A",
                Label::B => "B",
                Label::Auto => "auto",
            };
            let _ = write!(o, "point {set} {}", fmt_f64(p.weight));
            for c in &p.coords {
                let _ = write!(o, " {}", fmt_f64(*c));
            }
            o.push('\n');
        }
        o
    }

    /// Parse file text; `path` is used for messages and to resolve relative
    /// generator files of polyhedral norms.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut version = None;
        let mut dim: Option<usize> = None;
        let mut hyperplane: Option<Hyperplane> = None;
        let (mut norm_a, mut norm_b, mut norm_h) = (None, None, None);
        let mut points = Vec::new();
        let err = |line: usize, msg: String| Error::parse(path, line, msg);

        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, rest) = content
                .split_once(char::is_whitespace)
                .unwrap_or((content, ""));
            let rest = rest.trim();
            if version.is_none() && key != "schema_version" {
                return Err(err(line, "file must start with `schema_version`".into()));
            }
            if key != "point" && !points.is_empty() {
                return Err(err(line, format!("`{key}` after the first point")));
            }
            match key {
                "schema_version" => {
                    if version.is_some() {
                        return Err(err(line, "duplicate schema_version".into()));
                    }
                    let v: u32 = rest
                        .parse()
                        .map_err(|_| err(line, format!("bad schema_version `{rest}`")))?;
                    if v != SCHEMA_VERSION {
                        return Err(err(line, format!("unsupported schema_version {v}")));
                    }
                    version = Some(v);
                }
                "dim" => {
                    let d: usize = rest
                        .parse()
                        .map_err(|_| err(line, format!("bad dim `{rest}`")))?;
                    if d < 2 {
                        return Err(err(line, "dim must be at least 2".into()));
                    }
                    dim = Some(d);
                }
                "hyperplane" => {
                    hyperplane = Some(
                        rest.parse::<Hyperplane>()
                            .map_err(|e| err(line, e.to_string()))?,
                    );
                }
                "norm_a" | "norm_b" | "norm_h" => {
                    let n = parse_norm(rest, &base).map_err(|e| err(line, e.to_string()))?;
                    match key {
                        "norm_a" => norm_a = Some(n),
                        "norm_b" => norm_b = Some(n),
                        _ => norm_h = Some(n),
                    }
                }
                "point" => {
                    let (Some(d), Some(h)) = (dim, hyperplane.as_ref()) else {
                        return Err(err(
                            line,
                            "`dim` and `hyperplane` must precede points".into(),
                        ));
                    };
                    let tok: Vec<&str> = rest.split_whitespace().collect();
                    if tok.len() != d + 2 {
                        return Err(err(
                            line,
                            format!("expected `point <A|B|auto> <weight> <{d} coords>`"),
                        ));
                    }
                    let set = match tok[0] {
                        "A" | "a" => Label::A,
                        "B" | "b" => Label::B,
                        "auto" => Label::Auto,
                        other => return Err(err(line, format!("bad set label `{other}`"))),
                    };
                    let nums: Vec<f64> = tok[1..]
                        .iter()
                        .map(|t| {
                            t.parse::<f64>()
                                .map_err(|_| err(line, format!("bad number `{t}`")))
                        })
                        .collect::<Result<_>>()?;
                    let weight = nums[0];
                    if !(weight > 0.0 && weight.is_finite()) {
                        return Err(err(line, "weight must be positive and finite".into()));
                    }
                    let coords = nums[1..].to_vec();
                    if coords.iter().any(|c| !c.is_finite()) {
                        return Err(err(line, "non-finite coordinate".into()));
                    }
                    let actual = h.side(&coords);
                    if (set == Label::A && actual == Side::B)
                        || (set == Label::B && actual == Side::A)
                    {
                        return Err(err(
                            line,
                            format!(
                                "point labelled {} lies strictly in the other halfspace",
                                tok[0]
                            ),
                        ));
                    }
                    points.push(PointEntry {
                        set,
                        weight,
                        coords,
                    });
                }
                other => return Err(err(line, format!("unknown key `{other}`"))),
            }
        }
        let last = text.lines().count().max(1);
        let missing = |what: &str| err(last, format!("missing `{what}`"));
        let dim = dim.ok_or_else(|| missing("dim"))?;
        let hyperplane = hyperplane.ok_or_else(|| missing("hyperplane"))?;
        if hyperplane.dim() != dim {
            return Err(err(
                last,
                format!(
                    "hyperplane has dimension {}, expected {dim}",
                    hyperplane.dim()
                ),
            ));
        }
        let file = InstanceFile {
            schema_version: version.ok_or_else(|| missing("schema_version"))?,
            dim,
            hyperplane,
            norm_a: norm_a.ok_or_else(|| missing("norm_a"))?,
            norm_b: norm_b.ok_or_else(|| missing("norm_b"))?,
            norm_h,
            points,
        };
        file.to_instance().map_err(|e| err(last, e.to_string()))?;
        Ok(file)
    }
}

fn parse_norm(text: &str, base: &Path) -> Result<NormSpec> {
    match text.strip_prefix("poly:") {
        Some(rest) if !rest.starts_with('{') => {
            let (file, scale) = match rest.rsplit_once(':') {
                Some((f, s)) if !f.is_empty() && parse_scale(s).is_ok() => {
                    (f, Some(parse_scale(s)?))
                }
                _ => (rest, None),
            };
            let p = PathBuf::from(file);
            let p = if p.is_relative() { base.join(p) } else { p };
            let n = NormSpec::polyhedral(NormSpec::read_generator_file(&p)?)?;
            match scale {
                Some(s) => n.with_scale(s),
                None => Ok(n),
            }
        }
        _ => text.parse(),
    }
}

pub fn load_file(path: &Path) -> Result<InstanceFile> {
    let text = std::fs::read_to_string(path)?;
    InstanceFile::parse(&text, path)
}

pub fn load(path: &Path) -> Result<LocationInstance> {
    load_file(path)?.to_instance()
}

pub fn write(file: &InstanceFile, path: &Path) -> Result<()> {
    std::fs::write(path, file.to_text())?;
    Ok(())
}

/// The 18 demand points of Parlar's planar data set.
pub const PARLAR18: [[f64; 2]; 18] = [
    [1.0, 2.0],
    [2.0, 8.0],
    [3.0, 12.0],
    [6.0, 11.0],
    [5.0, 5.0],
    [6.0, 1.0],
    [7.0, 4.0],
    [8.0, 8.0],
    [9.0, 1.0],
    [9.0, 5.0],
    [9.0, 10.0],
    [10.0, 12.0],
    [14.0, 2.0],
    [14.0, 4.0],
    [16.0, 8.0],
    [17.0, 4.0],
    [17.0, 10.0],
    [19.0, 13.0],
];

/// Names accepted by [`embedded_dataset`] and [`dataset`].
pub const DATASETS: [&str; 4] = ["parlar4", "parlar18", "zaferanieh30", "zaferanieh50"];

/// Built-in data. `parlar18` comes with the line `y = 1.5x`, l2 in A and l3
/// in B, unit weights and `auto` labels. Other sets are not bundled; use
/// [`dataset`] with a directory holding `<name>.txt`.
pub fn embedded_dataset(name: &str) -> Result<InstanceFile> {
    match name {
        "parlar18" => Ok(InstanceFile {
            schema_version: SCHEMA_VERSION,
            dim: 2,
            hyperplane: Hyperplane::line_through_origin(1.5)?,
            norm_a: NormSpec::l2(),
            norm_b: NormSpec::lp(3, 1)?,
            norm_h: None,
            points: PARLAR18
                .iter()
                .map(|c| PointEntry {
                    set: Label::Auto,
                    weight: 1.0,
                    coords: c.to_vec(),
                })
                .collect(),
        }),
        "parlar4" | "zaferanieh30" | "zaferanieh50" => Err(Error::MissingData(format!(
            "{name} coordinates are not bundled; supply {name}.txt in an instance data directory"
        ))),
        other => Err(Error::MissingData(format!("unknown dataset `{other}`"))),
    }
}

/// Embedded data, or `<dir>/<name>.txt` when present.
pub fn dataset(name: &str, dir: Option<&Path>) -> Result<InstanceFile> {
    if let Some(dir) = dir {
        let p = dir.join(format!("{name}.txt"));
        if p.is_file() {
            return load_file(&p);
        }
    }
    embedded_dataset(name)
}

/// `n` points uniform in `[0,1]^d`, unit weights, hyperplane `x_d = 0.5`,
/// `lp:3/1` in A and `l2` in B.
///
/// The generator is xoshiro256** seeded from `seed` through SplitMix64;
/// each coordinate is `next_u64 >> 11` scaled by `2^-53`.
pub fn generate_random(n: usize, d: usize, seed: u64) -> Result<InstanceFile> {
    if n == 0 || d < 2 {
        return Err(Error::InvalidInput("need n >= 1 and d >= 2".into()));
    }
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let mut alpha = vec![0.0; d];
    alpha[d - 1] = 1.0;
    let hyperplane = Hyperplane::new(alpha, 0.5)?;
    let points = (0..n)
        .map(|_| {
            let coords: Vec<f64> = (0..d)
                .map(|_| (rng.random::<u64>() >> 11) as f64 * 2f64.powi(-53))
                .collect();
            PointEntry {
                set: Label::Auto,
                weight: 1.0,
                coords,
            }
        })
        .collect();
    Ok(InstanceFile {
        schema_version: SCHEMA_VERSION,
        dim: d,
        hyperplane,
        norm_a: NormSpec::lp(3, 1)?,
        norm_b: NormSpec::l2(),
        norm_h: None,
        points,
    })
}
