//! Kernel catalog `κ(x, y)`.
//!
//! A [`Kernel`] is a pure evaluation object: a [`Shape`] times a positive
//! scale factor. Discretization lives in [`crate::operator`]; the graph
//! samplers inspect the shape to pick an exact fast path.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Serialize, Serializer};

use crate::{Error, Result};

/// Behaviour of a kernel near the origin.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Singularity {
    None,
    InverseAtZero,
}

/// Closed-form results available for a kernel family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    ChiSub,
    ChiHat,
    RhoK,
    LambdaC,
}

type Func = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A named real function of one type coordinate, used as `ψ` for rank-1
/// kernels and `φ` for max-kernels.
#[derive(Clone)]
pub struct Profile {
    name: String,
    f: Func,
    derivative: Option<Func>,
    bound: Option<f64>,
    unit_moments: Option<[f64; 4]>,
}

impl Profile {
    pub fn new(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Profile {
            name: name.into(),
            f: Arc::new(f),
            derivative: None,
            bound: None,
            unit_moments: None,
        }
    }

    pub fn with_derivative(mut self, d: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.derivative = Some(Arc::new(d));
        self
    }

    /// Supremum of the profile over its intended domain.
    pub fn with_bound(mut self, bound: f64) -> Self {
        self.bound = Some(bound);
        self
    }

    /// Exact `∫₀¹ f^p dx` for `p = 1..=4`.
    pub fn with_unit_moments(mut self, moments: [f64; 4]) -> Self {
        self.unit_moments = Some(moments);
        self
    }

    /// `ψ ≡ 1`.
    pub fn one() -> Self {
        Profile::new("one", |_| 1.0)
            .with_derivative(|_| 0.0)
            .with_bound(1.0)
            .with_unit_moments([1.0; 4])
    }

    /// `ψ(x) = x`.
    pub fn linear() -> Self {
        Profile::new("linear", |x| x)
            .with_derivative(|_| 1.0)
            .with_unit_moments([0.5, 1.0 / 3.0, 0.25, 0.2])
    }

    /// `ψ(x) = 1 + x`.
    pub fn one_plus_x() -> Self {
        Profile::new("one_plus_x", |x| 1.0 + x)
            .with_derivative(|_| 1.0)
            .with_unit_moments([1.5, 7.0 / 3.0, 15.0 / 4.0, 31.0 / 5.0])
    }

    /// `φ(x) = 1 − x`.
    pub fn one_minus_x() -> Self {
        Profile::new("one_minus_x", |x| 1.0 - x)
            .with_derivative(|_| -1.0)
            .with_bound(1.0)
            .with_unit_moments([0.5, 1.0 / 3.0, 0.25, 0.2])
    }

    /// `φ(x) = 1/x`.
    pub fn inverse() -> Self {
        Profile::new("inverse", |x| 1.0 / x).with_derivative(|x| -1.0 / (x * x))
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "one" => Ok(Self::one()),
            "linear" => Ok(Self::linear()),
            "one_plus_x" => Ok(Self::one_plus_x()),
            "one_minus_x" => Ok(Self::one_minus_x()),
            "inverse" => Ok(Self::inverse()),
            _ => Err(Error::parse(
                "profile",
                name,
                "expected one | linear | one_plus_x | one_minus_x | inverse",
            )),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn derivative(&self, x: f64) -> Option<f64> {
        self.derivative.as_ref().map(|d| d(x))
    }

    pub fn has_derivative(&self) -> bool {
        self.derivative.is_some()
    }

    pub fn bound(&self) -> Option<f64> {
        self.bound
    }

    pub fn unit_moments(&self) -> Option<[f64; 4]> {
        self.unit_moments
    }
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Profile").field("name", &self.name).finish()
    }
}

impl Serialize for Profile {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.name)
    }
}

/// Functional form of a kernel before scaling.
#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Constant(f64),
    /// `ψ(x) ψ(y)`.
    Rank1(Profile),
    /// `1/(x ∨ y) − 1` on `(0, 1]`.
    Chkns,
    /// `1/(x ∨ y)` on `(0, 1]`.
    Dubins,
    /// `φ(x ∨ y)`.
    Max(Profile),
    /// Symmetric matrix indexed by atom labels `1..=n`, stored row-major.
    Finite { n: usize, entries: Vec<f64> },
}

#[derive(Clone, Debug, Serialize)]
pub struct Kernel {
    shape: Shape,
    scale: f64,
}

impl Kernel {
    fn new(shape: Shape) -> Self {
        Kernel { shape, scale: 1.0 }
    }

    pub fn constant(c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::invalid("c", format!("constant kernel needs c > 0, got {c}")));
        }
        Ok(Self::new(Shape::Constant(c)))
    }

    pub fn rank1(psi: Profile) -> Self {
        Self::new(Shape::Rank1(psi))
    }

    pub fn chkns() -> Self {
        Self::new(Shape::Chkns)
    }

    pub fn dubins() -> Self {
        Self::new(Shape::Dubins)
    }

    pub fn max(phi: Profile) -> Self {
        Self::new(Shape::Max(phi))
    }

    /// Kernel on atoms `1..=n` given by a symmetric non-negative matrix.
    pub fn finite(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::invalid("matrix", "empty matrix"));
        }
        let mut entries = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::invalid("matrix", format!("row {} has {} entries, expected {n}", i + 1, row.len())));
            }
            for (j, &v) in row.iter().enumerate() {
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::invalid("matrix", format!("entry ({},{}) = {v} is not a non-negative number", i + 1, j + 1)));
                }
                if v != rows[j][i] {
                    return Err(Error::invalid("matrix", format!("asymmetric at ({},{})", i + 1, j + 1)));
                }
                entries.push(v);
            }
        }
        Ok(Self::new(Shape::Finite { n, entries }))
    }

    /// Two-type kernel `[[2, ε], [ε, 1]]`.
    pub fn two_type(eps: f64) -> Result<Self> {
        Self::finite(&[vec![2.0, eps], vec![eps, 1.0]])
    }

    /// `λ κ`.
    pub fn scaled(&self, lambda: f64) -> Self {
        debug_assert!(lambda >= 0.0);
        Kernel {
            shape: self.shape.clone(),
            scale: self.scale * lambda,
        }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Unscaled value `κ(x, y) / scale`.
    #[inline]
    pub fn base(&self, x: f64, y: f64) -> f64 {
        match &self.shape {
            Shape::Constant(c) => *c,
            Shape::Rank1(psi) => psi.eval(x) * psi.eval(y),
            Shape::Chkns => 1.0 / x.max(y) - 1.0,
            // written through the CHKNS value so that the two differ by exactly 1
            Shape::Dubins => (1.0 / x.max(y) - 1.0) + 1.0,
            Shape::Max(phi) => phi.eval(x.max(y)),
            Shape::Finite { n, entries } => {
                let (i, j) = (atom_index(x, *n), atom_index(y, *n));
                entries[i * n + j]
            }
        }
    }

    /// `κ(x, y)`; may be infinite at a singularity.
    #[inline]
    pub fn evaluate(&self, x: f64, y: f64) -> f64 {
        self.scale * self.base(x, y)
    }

    /// `κ(x, y)`, rejecting non-finite or negative values.
    pub fn try_evaluate(&self, x: f64, y: f64) -> Result<f64> {
        let v = self.evaluate(x, y);
        if !v.is_finite() {
            return Err(Error::NonFinite {
                location: format!("{}({x}, {y})", self.name()),
                value: v,
            });
        }
        if v < 0.0 {
            return Err(Error::invalid("kernel", format!("{}({x}, {y}) = {v} is negative", self.name())));
        }
        Ok(v)
    }

    pub fn name(&self) -> String {
        let base = match &self.shape {
            Shape::Constant(c) => format!("constant:{c}"),
            Shape::Rank1(psi) => format!("rank1:psi={}", psi.name()),
            Shape::Chkns => "chkns".to_owned(),
            Shape::Dubins => "dubins".to_owned(),
            Shape::Max(phi) => format!("max:phi={}", phi.name()),
            Shape::Finite { n, entries } => {
                let rows: Vec<String> = entries
                    .chunks(*n)
                    .map(|r| r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","))
                    .collect();
                format!("finite:{}", rows.join(";"))
            }
        };
        if self.scale == 1.0 {
            base
        } else {
            format!("{}*{base}", self.scale)
        }
    }

    /// Supremum of `κ`, if finite and known.
    pub fn bound(&self) -> Option<f64> {
        let b = match &self.shape {
            Shape::Constant(c) => Some(*c),
            Shape::Rank1(psi) => psi.bound().map(|b| b * b),
            Shape::Chkns | Shape::Dubins => None,
            Shape::Max(phi) => phi.bound(),
            Shape::Finite { entries, .. } => entries.iter().copied().reduce(f64::max),
        };
        b.map(|b| b * self.scale)
    }

    pub fn singularity(&self) -> Singularity {
        match &self.shape {
            Shape::Chkns | Shape::Dubins => Singularity::InverseAtZero,
            Shape::Max(phi) if phi.name() == "inverse" => Singularity::InverseAtZero,
            _ => Singularity::None,
        }
    }

    pub fn capabilities(&self) -> Vec<Capability> {
        use Capability::*;
        match &self.shape {
            Shape::Constant(_) => vec![ChiSub, ChiHat, RhoK, LambdaC],
            Shape::Rank1(_) => vec![ChiSub, ChiHat, LambdaC],
            Shape::Chkns => vec![ChiSub, ChiHat, RhoK, LambdaC],
            Shape::Dubins => vec![ChiSub, RhoK, LambdaC],
            Shape::Max(_) => vec![ChiSub, LambdaC],
            Shape::Finite { .. } => vec![],
        }
    }

    /// True when `κ` takes finitely many values on a finite partition of the
    /// type space (constant and finite-type kernels).
    pub fn is_piecewise_constant(&self) -> bool {
        matches!(self.shape, Shape::Constant(_) | Shape::Finite { .. })
    }

    /// Two types `a ≥ b` with `κ(a, b) > target`, if the kernel can supply
    /// them. Singular kernels are probed along the diagonal towards the
    /// origin; finite kernels search their atoms.
    pub fn pair_exceeding(&self, target: f64) -> Option<(f64, f64)> {
        match &self.shape {
            Shape::Finite { n, .. } => {
                let mut best: Option<(f64, f64, f64)> = None;
                for i in 1..=*n {
                    for j in 1..=i {
                        let v = self.evaluate(i as f64, j as f64);
                        if best.is_none_or(|b| v > b.2) {
                            best = Some((i as f64, j as f64, v));
                        }
                    }
                }
                best.filter(|b| b.2 > target).map(|b| (b.0, b.1))
            }
            _ => (0..1100).map(|i| 0.5f64.powi(i) * 0.5).find_map(|a| {
                let b = 0.5 * a;
                let v = self.evaluate(a, b);
                (v.is_finite() && v > target && b > 0.0).then_some((a, b))
            }),
        }
    }

    /// `∫₀¹ ψ^p` for rank-1 kernels with a known profile, including the scale
    /// split evenly over the two factors.
    pub fn rank1_unit_moments(&self) -> Option<[f64; 4]> {
        match &self.shape {
            Shape::Rank1(psi) => psi.unit_moments().map(|m| {
                let s = self.scale.sqrt();
                [m[0] * s, m[1] * self.scale, m[2] * s * self.scale, m[3] * self.scale * self.scale]
            }),
            _ => None,
        }
    }
}

#[inline]
fn atom_index(x: f64, n: usize) -> usize {
    let i = x.round();
    debug_assert!(i >= 1.0 && i <= n as f64, "atom label {x} outside 1..={n}");
    (i as usize).clamp(1, n) - 1
}

/// Parse a kernel from its command-line form:
/// `constant:C`, `chkns`, `dubins`, `rank1:psi=NAME`, `max:phi=NAME`,
/// `finite:2,eps=E` (the two-type kernel) or `finite:a,b;c,d` (rows).
impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a.trim())),
            None => (s, None),
        };
        match (head, arg) {
            ("constant", Some(c)) => {
                let c: f64 = c.parse().map_err(|_| Error::parse("kernel", s, "bad constant"))?;
                Kernel::constant(c)
            }
            ("chkns", None) => Ok(Kernel::chkns()),
            ("dubins", None) => Ok(Kernel::dubins()),
            ("rank1", Some(a)) => {
                let name = a
                    .strip_prefix("psi=")
                    .ok_or_else(|| Error::parse("kernel", s, "expected rank1:psi=NAME"))?;
                Ok(Kernel::rank1(Profile::by_name(name)?))
            }
            ("max", Some(a)) => {
                let name = a
                    .strip_prefix("phi=")
                    .ok_or_else(|| Error::parse("kernel", s, "expected max:phi=NAME"))?;
                Ok(Kernel::max(Profile::by_name(name)?))
            }
            ("finite", Some(a)) => {
                if let Some((first, eps)) = a.split_once(",eps=") {
                    if first.trim() != "2" {
                        return Err(Error::parse("kernel", s, "the eps form is only defined for two types"));
                    }
                    let eps: f64 = eps.trim().parse().map_err(|_| Error::parse("kernel", s, "bad eps"))?;
                    return Kernel::two_type(eps);
                }
                let rows = a
                    .split(';')
                    .map(|r| r.split(',').map(|v| v.trim().parse::<f64>()).collect::<std::result::Result<Vec<_>, _>>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| Error::parse("kernel", s, "bad matrix entry"))?;
                Kernel::finite(&rows)
            }
            _ => Err(Error::parse(
                "kernel",
                s,
                "expected constant:C | chkns | dubins | rank1:psi=NAME | max:phi=NAME | finite:2,eps=E | finite:ROWS",
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn catalog() -> Vec<Kernel> {
        vec![
            Kernel::constant(0.5).unwrap(),
            Kernel::rank1(Profile::one_plus_x()),
            Kernel::rank1(Profile::linear()),
            Kernel::chkns(),
            Kernel::dubins(),
            Kernel::max(Profile::one_minus_x()),
            Kernel::max(Profile::inverse()),
        ]
    }

    #[test]
    fn catalog_values() {
        assert_eq!(Kernel::constant(1.0).unwrap().evaluate(0.3, 0.9), 1.0);
        assert_eq!(Kernel::rank1(Profile::linear()).evaluate(2.0, 3.0), 6.0);
        assert_eq!(Kernel::rank1(Profile::one()).evaluate(0.2, 0.7), 1.0);
        assert_eq!(Kernel::chkns().evaluate(1.0, 0.3), 0.0);
        assert_eq!(Kernel::chkns().evaluate(0.5, 0.25), 1.0);
        assert!((Kernel::chkns().evaluate(0.1, 0.9) - 0.111_111_111_111_111_1).abs() < 1e-15);
        assert_eq!(Kernel::dubins().evaluate(1.0, 1.0), 1.0);
        assert_eq!(Kernel::dubins().evaluate(0.5, 0.25), 2.0);
        assert!((Kernel::max(Profile::one_minus_x()).evaluate(0.3, 0.7) - 0.3).abs() < 1e-15);
        assert_eq!(Kernel::max(Profile::one()).evaluate(0.3, 0.7), 1.0);
        assert_eq!(Kernel::max(Profile::inverse()).evaluate(0.5, 0.25), Kernel::dubins().evaluate(0.5, 0.25));
        assert_eq!(Kernel::chkns().scaled(0.25).evaluate(0.5, 0.5), 0.25);
        assert!(Kernel::chkns().try_evaluate(0.0, 0.0).is_err());
        assert!(Kernel::constant(0.0).is_err());
    }

    #[test]
    fn finite_kernels() {
        let e2 = Kernel::two_type(0.01).unwrap();
        assert_eq!(e2.evaluate(1.0, 1.0), 2.0);
        assert_eq!(e2.evaluate(1.0, 2.0), 0.01);
        assert_eq!(e2.evaluate(2.0, 2.0), 1.0);
        assert_eq!(Kernel::finite(&[vec![3.0]]).unwrap().evaluate(1.0, 1.0), 3.0);
        assert!(Kernel::finite(&[vec![1.0, 0.5], vec![0.4, 1.0]]).is_err());
        assert!(Kernel::finite(&[vec![1.0, -0.5], vec![-0.5, 1.0]]).is_err());
        assert!(Kernel::finite(&[vec![1.0, 0.5]]).is_err());
    }

    #[test]
    fn metadata() {
        assert_eq!(Kernel::chkns().singularity(), Singularity::InverseAtZero);
        assert_eq!(Kernel::chkns().bound(), None);
        assert_eq!(Kernel::constant(2.0).unwrap().scaled(3.0).bound(), Some(6.0));
        assert_eq!(Kernel::rank1(Profile::one()).scaled(2.0).bound(), Some(2.0));
        assert_eq!(Kernel::two_type(0.01).unwrap().bound(), Some(2.0));
        assert!(Kernel::chkns().capabilities().contains(&Capability::RhoK));
        let m = Kernel::rank1(Profile::one_plus_x()).scaled(4.0).rank1_unit_moments().unwrap();
        assert!((m[0] - 3.0).abs() < 1e-15 && (m[1] - 28.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn spec_strings() {
        for s in [
            "constant:0.5",
            "chkns",
            "dubins",
            "rank1:psi=linear",
            "rank1:psi=one_plus_x",
            "max:phi=one_minus_x",
            "max:phi=inverse",
            "finite:2,0.01;0.01,1",
        ] {
            let k: Kernel = s.parse().unwrap();
            assert_eq!(k.name(), s);
        }
        let e2: Kernel = "finite:2,eps=0.01".parse().unwrap();
        assert_eq!(e2.name(), "finite:2,0.01;0.01,1");
        for bad in ["", "constant", "constant:-1", "rank1:psi=cubic", "finite:3,eps=0.1", "finite:1,2;3,4"] {
            assert!(bad.parse::<Kernel>().is_err(), "{bad}");
        }
    }

    #[test]
    fn planted_pairs() {
        let n = 1e4;
        let (a, b) = Kernel::chkns().scaled(0.1).pair_exceeding(n).unwrap();
        assert!(Kernel::chkns().scaled(0.1).evaluate(a, b) > n && b < a);
        assert!(Kernel::constant(0.5).unwrap().pair_exceeding(n).is_none());
        assert_eq!(Kernel::two_type(0.0).unwrap().pair_exceeding(1.5), Some((1.0, 1.0)));
    }

    #[test]
    fn symmetry_and_sign_on_random_pairs() {
        let mut rng = crate::rng::stream(3, crate::rng::Purpose::Types, 0);
        for k in catalog() {
            for _ in 0..10_000 {
                let x: f64 = 1.0 - rng.random::<f64>();
                let y: f64 = 1.0 - rng.random::<f64>();
                let v = k.evaluate(x, y);
                assert_eq!(v, k.evaluate(y, x), "{}", k.name());
                assert!(v >= 0.0, "{}", k.name());
            }
        }
        let e2 = Kernel::two_type(0.3).unwrap();
        for i in 1..=2 {
            for j in 1..=2 {
                assert_eq!(e2.evaluate(i as f64, j as f64), e2.evaluate(j as f64, i as f64));
            }
        }
    }

    proptest! {
        #[test]
        fn scaling_composes(a in 0.01f64..10.0, b in 0.01f64..10.0, x in 1e-6f64..1.0, y in 1e-6f64..1.0) {
            for k in catalog() {
                let lhs = k.scaled(a).scaled(b).evaluate(x, y);
                let rhs = k.scaled(a * b).evaluate(x, y);
                prop_assert!((lhs - rhs).abs() <= 1e-14 * rhs.abs().max(1e-300));
            }
        }

        #[test]
        fn chkns_plus_one_is_dubins(x in 1e-9f64..1.0, y in 1e-9f64..1.0) {
            prop_assert_eq!(Kernel::chkns().evaluate(x, y) + 1.0, Kernel::dubins().evaluate(x, y));
        }
    }
}
