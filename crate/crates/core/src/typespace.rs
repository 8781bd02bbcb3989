//! Discretized type spaces `(S, μ)`.
//!
//! A [`TypeSpace`] is a finite set of quadrature nodes with positive cell
//! masses. Interval-based spaces also remember their cell boundaries and the
//! density they discretize, so that vertex types can be drawn from the
//! underlying measure rather than from the nodes.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Neumaier summation.
#[derive(Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

fn compensated_sum(values: &[f64]) -> f64 {
    let mut acc = CompensatedSum::default();
    values.iter().for_each(|&v| acc.add(v));
    acc.value()
}

/// The measure that a [`TypeSpace`] discretizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Measure {
    /// Lebesgue measure on `(0, 1]`, cut into cells at `boundaries`.
    Lebesgue { boundaries: Vec<f64> },
    /// `q x^{-q-1} dx` on `[1, x_max]`.
    PowerLaw { q: f64, boundaries: Vec<f64> },
    /// Point masses at the nodes themselves.
    Atoms,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeSpace {
    points: Vec<f64>,
    weights: Vec<f64>,
    total_mass: f64,
    description: String,
    measure: Measure,
}

impl TypeSpace {
    /// Midpoint rule for Lebesgue measure on `(0, 1]` with `m` equal cells.
    pub fn uniform_mesh(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("m", "mesh needs at least one cell"));
        }
        let h = 1.0 / m as f64;
        let points = (0..m).map(|i| (i as f64 + 0.5) / m as f64).collect();
        let boundaries = (0..=m).map(|i| i as f64 / m as f64).collect();
        Ok(TypeSpace {
            points,
            weights: vec![h; m],
            total_mass: 1.0,
            description: format!("uniform midpoint mesh m={m}"),
            measure: Measure::Lebesgue { boundaries },
        })
    }

    /// Cells `((i-1)/m)^γ .. (i/m)^γ`, refined towards the origin.
    pub fn graded_mesh(m: usize, gamma: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("m", "mesh needs at least one cell"));
        }
        if !(gamma >= 1.0) || !gamma.is_finite() {
            return Err(Error::invalid("gamma", format!("grading exponent must be >= 1, got {gamma}")));
        }
        if gamma == 1.0 {
            return Self::uniform_mesh(m);
        }
        let boundaries: Vec<f64> = (0..=m).map(|i| (i as f64 / m as f64).powf(gamma)).collect();
        let (points, weights) = midpoints(&boundaries);
        Ok(TypeSpace {
            points,
            weights,
            total_mass: 1.0,
            description: format!("graded mesh m={m} gamma={gamma}"),
            measure: Measure::Lebesgue { boundaries },
        })
    }

    /// `[1, x_max]` with `dμ = q x^{-q-1} dx`, cut into `m` geometric cells.
    ///
    /// Cell masses are exact; the missing tail mass `x_max^{-q}` is recorded in
    /// the description.
    pub fn powerlaw(q: f64, x_max: f64, m: usize) -> Result<Self> {
        if !(q > 1.0) || !q.is_finite() {
            return Err(Error::invalid("q", format!("tail exponent must exceed 1, got {q}")));
        }
        if !(x_max > 1.0) || !x_max.is_finite() {
            return Err(Error::invalid("x_max", format!("truncation point must exceed 1, got {x_max}")));
        }
        if m == 0 {
            return Err(Error::invalid("m", "mesh needs at least one cell"));
        }
        let log_max = x_max.ln();
        let mut boundaries: Vec<f64> = (0..=m).map(|i| (log_max * i as f64 / m as f64).exp()).collect();
        boundaries[0] = 1.0;
        boundaries[m] = x_max;
        let points = boundaries.windows(2).map(|c| 0.5 * (c[0] + c[1])).collect();
        let weights: Vec<f64> = boundaries
            .windows(2)
            .map(|c| c[0].powf(-q) - c[1].powf(-q))
            .collect();
        // the cell masses telescope
        let total_mass = 1.0 - x_max.powf(-q);
        Ok(TypeSpace {
            points,
            weights,
            total_mass,
            description: format!(
                "power law q={q} on [1, {x_max}] m={m} (tail deficit {:e})",
                x_max.powf(-q)
            ),
            measure: Measure::PowerLaw { q, boundaries },
        })
    }

    /// Atoms labelled `1..=n` with the given masses.
    pub fn finite(masses: &[f64]) -> Result<Self> {
        if masses.is_empty() {
            return Err(Error::invalid("masses", "need at least one atom"));
        }
        if let Some(bad) = masses.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::invalid("masses", format!("atom masses must be positive, got {bad}")));
        }
        Ok(TypeSpace {
            points: (1..=masses.len()).map(|i| i as f64).collect(),
            weights: masses.to_vec(),
            total_mass: compensated_sum(masses),
            description: format!("{} atoms", masses.len()),
            measure: Measure::Atoms,
        })
    }

    /// A single atom of mass 1.
    pub fn atom() -> Self {
        Self::finite(&[1.0]).expect("unit atom is valid")
    }

    /// Arbitrary nodes and weights, treated as atoms.
    pub fn from_parts(points: Vec<f64>, weights: Vec<f64>, description: impl Into<String>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::LengthMismatch {
                expected: points.len(),
                actual: weights.len(),
            });
        }
        if points.is_empty() {
            return Err(Error::invalid("points", "need at least one node"));
        }
        if let Some(bad) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::invalid("weights", format!("weights must be positive, got {bad}")));
        }
        if let Some(bad) = points.iter().find(|x| !x.is_finite()) {
            return Err(Error::invalid("points", format!("non-finite node {bad}")));
        }
        let total_mass = compensated_sum(&weights);
        Ok(TypeSpace {
            points,
            weights,
            total_mass,
            description: description.into(),
            measure: Measure::Atoms,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn measure(&self) -> &Measure {
        &self.measure
    }

    /// `Σ w_i f(x_i)`; fails if `f` is non-finite at any node.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> Result<f64> {
        let mut acc = CompensatedSum::default();
        for (&x, &w) in self.points.iter().zip(&self.weights) {
            let v = f(x);
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    location: format!("integrand at x={x}"),
                    value: v,
                });
            }
            acc.add(w * v);
        }
        Ok(acc.value())
    }

    /// `Σ w_i v_i` for values already tabulated at the nodes.
    pub fn integrate_values(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        let mut acc = CompensatedSum::default();
        for (w, v) in self.weights.iter().zip(values) {
            acc.add(w * v);
        }
        acc.value()
    }

    /// Reorder `(point, weight)` pairs: node `i` of the result is node
    /// `perm[i]` of `self`. The result is treated as a set of atoms.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                actual: perm.len(),
            });
        }
        let mut seen = vec![false; perm.len()];
        for &p in perm {
            if p >= perm.len() || std::mem::replace(&mut seen[p], true) {
                return Err(Error::invalid("perm", "not a permutation"));
            }
        }
        Ok(TypeSpace {
            points: perm.iter().map(|&p| self.points[p]).collect(),
            weights: perm.iter().map(|&p| self.weights[p]).collect(),
            total_mass: self.total_mass,
            description: format!("{} (permuted)", self.description),
            measure: Measure::Atoms,
        })
    }

    /// Draw one type from `μ / μ(S)`.
    ///
    /// Interval spaces pick a cell by mass and then sample the exact density
    /// inside it, so draws follow the underlying measure, not the nodes.
    pub fn sample_type<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let cell = self.sample_cell(rng);
        match &self.measure {
            Measure::Atoms => self.points[cell],
            Measure::Lebesgue { boundaries } => {
                let (a, b) = (boundaries[cell], boundaries[cell + 1]);
                // (a, b] so that the origin is never drawn
                b - (b - a) * rng.random::<f64>()
            }
            Measure::PowerLaw { q, boundaries } => {
                let (a, b) = (boundaries[cell], boundaries[cell + 1]);
                let (fa, fb) = (a.powf(-q), b.powf(-q));
                let u: f64 = rng.random();
                (fa - u * (fa - fb)).powf(-1.0 / q)
            }
        }
    }

    fn sample_cell<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.len() == 1 {
            return 0;
        }
        let target = rng.random::<f64>() * self.total_mass;
        let mut acc = 0.0;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if target < acc {
                return i;
            }
        }
        self.len() - 1
    }

    /// Two-column CSV with a one-line metadata header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# total_mass={}; description={}", self.total_mass, self.description)?;
        for (x, w) in self.points.iter().zip(&self.weights) {
            writeln!(out, "{x},{w}")?;
        }
        Ok(())
    }

    /// Inverse of [`TypeSpace::write_csv`]; the result is treated as atoms.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| Error::parse("type space csv", "", "empty input"))??;
        let meta = header
            .strip_prefix("# total_mass=")
            .ok_or_else(|| Error::parse("type space csv", &header, "missing metadata header"))?;
        let (mass, description) = meta
            .split_once("; description=")
            .ok_or_else(|| Error::parse("type space csv", &header, "missing description"))?;
        let total_mass: f64 = mass
            .trim()
            .parse()
            .map_err(|_| Error::parse("type space csv", &header, "bad total_mass"))?;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (x, w) = line
                .split_once(',')
                .ok_or_else(|| Error::parse("type space csv", &line, "expected point,weight"))?;
            points.push(x.trim().parse().map_err(|_| Error::parse("type space csv", &line, "bad point"))?);
            weights.push(w.trim().parse().map_err(|_| Error::parse("type space csv", &line, "bad weight"))?);
        }
        let mut ts = Self::from_parts(points, weights, description)?;
        if ((ts.total_mass - total_mass) / total_mass).abs() > 1e-12 {
            return Err(Error::parse(
                "type space csv",
                &header,
                format!("header mass {total_mass} disagrees with weights {}", ts.total_mass),
            ));
        }
        ts.total_mass = total_mass;
        Ok(ts)
    }
}

fn midpoints(boundaries: &[f64]) -> (Vec<f64>, Vec<f64>) {
    boundaries
        .windows(2)
        .map(|c| (0.5 * (c[0] + c[1]), c[1] - c[0]))
        .unzip()
}

/// Textual description of a type space, as used on the command line:
/// `atom`, `uniform:M`, `graded:M[:GAMMA]`, `powerlaw:Q:XMAX:M`,
/// `finite:w1,w2,...`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum MeshSpec {
    Atom,
    Uniform { m: usize },
    Graded { m: usize, gamma: f64 },
    PowerLaw { q: f64, x_max: f64, m: usize },
    Finite { masses: Vec<f64> },
}

impl MeshSpec {
    pub fn build(&self) -> Result<TypeSpace> {
        match self {
            MeshSpec::Atom => Ok(TypeSpace::atom()),
            MeshSpec::Uniform { m } => TypeSpace::uniform_mesh(*m),
            MeshSpec::Graded { m, gamma } => TypeSpace::graded_mesh(*m, *gamma),
            MeshSpec::PowerLaw { q, x_max, m } => TypeSpace::powerlaw(*q, *x_max, *m),
            MeshSpec::Finite { masses } => TypeSpace::finite(masses),
        }
    }
}

impl FromStr for MeshSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let mut parts = s.split(':');
        let head = parts.next().unwrap_or_default();
        let rest: Vec<&str> = parts.collect();
        let num = |i: usize| -> Result<f64> {
            rest.get(i)
                .ok_or_else(|| Error::parse("mesh", s, "missing parameter"))?
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::parse("mesh", s, format!("bad number {:?}", rest[i])))
        };
        let count = |i: usize| -> Result<usize> {
            rest.get(i)
                .ok_or_else(|| Error::parse("mesh", s, "missing cell count"))?
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::parse("mesh", s, format!("bad cell count {:?}", rest[i])))
        };
        match head {
            "atom" if rest.is_empty() => Ok(MeshSpec::Atom),
            "uniform" if rest.len() == 1 => Ok(MeshSpec::Uniform { m: count(0)? }),
            "graded" if rest.len() == 1 => Ok(MeshSpec::Graded {
                m: count(0)?,
                gamma: crate::DEFAULT_SINGULAR_GRADING,
            }),
            "graded" if rest.len() == 2 => Ok(MeshSpec::Graded {
                m: count(0)?,
                gamma: num(1)?,
            }),
            "powerlaw" if rest.len() == 3 => Ok(MeshSpec::PowerLaw {
                q: num(0)?,
                x_max: num(1)?,
                m: count(2)?,
            }),
            "finite" if rest.len() == 1 => {
                let masses = rest[0]
                    .split(',')
                    .map(|w| w.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| Error::parse("mesh", s, "bad atom mass"))?;
                Ok(MeshSpec::Finite { masses })
            }
            _ => Err(Error::parse(
                "mesh",
                s,
                "expected atom | uniform:M | graded:M[:GAMMA] | powerlaw:Q:XMAX:M | finite:w1,w2,..",
            )),
        }
    }
}

impl fmt::Display for MeshSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeshSpec::Atom => write!(f, "atom"),
            MeshSpec::Uniform { m } => write!(f, "uniform:{m}"),
            MeshSpec::Graded { m, gamma } => write!(f, "graded:{m}:{gamma}"),
            MeshSpec::PowerLaw { q, x_max, m } => write!(f, "powerlaw:{q}:{x_max}:{m}"),
            MeshSpec::Finite { masses } => {
                let joined: Vec<String> = masses.iter().map(|w| w.to_string()).collect();
                write!(f, "finite:{}", joined.join(","))
            }
        }
    }
}
