//! Parameter vector `a` of the metric
//! `g_a = Σ e^{-2 a_i x_{N+1}} dx_i² + dx_{N+1}²` and the point/tangent types
//! living on `ℝ^{N+1}`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{check_dim, Error, Result};

/// Sign pattern of the rate vector. Zero entries are compatible with either
/// sign, so `(1, 0)` is [`SignClass::NonNegative`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignClass {
    AllZero,
    NonNegative,
    NonPositive,
    Mixed,
}

/// The rate vector `a ∈ ℝ^N` with its derived scalars cached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct MetricParams {
    a: Vec<f64>,
    max: f64,
    min: f64,
    pos_sum: f64,
    neg_sum: f64,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    a: Vec<f64>,
}

impl TryFrom<RawParams> for MetricParams {
    type Error = Error;
    fn try_from(raw: RawParams) -> Result<Self> {
        MetricParams::new(raw.a)
    }
}

impl From<MetricParams> for RawParams {
    fn from(p: MetricParams) -> Self {
        RawParams { a: p.a }
    }
}

impl MetricParams {
    pub fn new(a: Vec<f64>) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::EmptyParams);
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("metric parameters"));
        }
        let (max, min, pos_sum, neg_sum) = derive_scalars(&a);
        Ok(Self { a, max, min, pos_sum, neg_sum })
    }

    pub fn from_slice(a: &[f64]) -> Result<Self> {
        Self::new(a.to_vec())
    }

    pub fn rates(&self) -> &[f64] {
        &self.a
    }

    /// Number of horizontal coordinates `N`.
    pub fn n(&self) -> usize {
        self.a.len()
    }

    /// Manifold dimension `N + 1`.
    pub fn dim(&self) -> usize {
        self.a.len() + 1
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    /// `Σ_{a_i > 0} a_i`.
    pub fn pos_sum(&self) -> f64 {
        self.pos_sum
    }

    /// `Σ_{a_i < 0} |a_i|`.
    pub fn neg_sum(&self) -> f64 {
        self.neg_sum
    }

    pub fn trace(&self) -> f64 {
        self.a.iter().sum()
    }

    pub fn sign_class(&self) -> SignClass {
        let has_pos = self.a.iter().any(|&v| v > 0.0);
        let has_neg = self.a.iter().any(|&v| v < 0.0);
        match (has_pos, has_neg) {
            (false, false) => SignClass::AllZero,
            (true, false) => SignClass::NonNegative,
            (false, true) => SignClass::NonPositive,
            (true, true) => SignClass::Mixed,
        }
    }

    /// Nonpositive curvature everywhere, hence a unique geodesic between any
    /// two points.
    pub fn unique_geodesics(&self) -> bool {
        self.sign_class() != SignClass::Mixed
    }

    pub fn all_nonzero(&self) -> bool {
        self.a.iter().all(|&v| v != 0.0)
    }

    /// Recompute the derived scalars from `a` and compare with the cache.
    pub fn cache_consistent(&self) -> bool {
        let (max, min, pos, neg) = derive_scalars(&self.a);
        max == self.max && min == self.min && pos == self.pos_sum && neg == self.neg_sum
    }

    /// Parameters with coordinate `i` removed.
    pub fn without(&self, i: usize) -> Result<Self> {
        if i >= self.n() {
            return Err(Error::InvalidArgument(format!("coordinate {i} out of range")));
        }
        let mut a = self.a.clone();
        a.remove(i);
        Self::new(a)
    }

    pub fn negated(&self) -> Self {
        Self::new(self.a.iter().map(|v| -v).collect()).expect("negation keeps entries finite")
    }

    /// Hex SHA-256 of the little-endian bit patterns of `a`.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for v in &self.a {
            hasher.update(v.to_bits().to_le_bytes());
        }
        hex_string(&hasher.finalize())
    }
}

fn derive_scalars(a: &[f64]) -> (f64, f64, f64, f64) {
    let max = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = a.iter().copied().fold(f64::INFINITY, f64::min);
    let pos_sum = ordered_sum(a.iter().filter(|v| **v > 0.0).copied());
    let neg_sum = ordered_sum(a.iter().filter(|v| **v < 0.0).map(|v| -v));
    (max, min, pos_sum, neg_sum)
}

/// Sum in ascending order, so the result does not depend on the order of
/// the terms.
pub(crate) fn ordered_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.into_iter().sum()
}

pub(crate) fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// A point of `ℝ^{N+1}` in global coordinates; the last entry is the
/// vertical coordinate `x_{N+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(x: Vec<f64>) -> Result<Self> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("point"));
        }
        Ok(Self(x))
    }

    pub fn origin(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// `x_{N+1}`.
    pub fn height(&self) -> f64 {
        *self.0.last().expect("points are never empty")
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub(crate) fn check(&self, p: &MetricParams) -> Result<()> {
        check_dim(p.dim(), self.dim())
    }
}

impl std::ops::Index<usize> for Point {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// A tangent vector carried both in coordinate components (`∂/∂x_i`) and in
/// components of the orthonormal left-invariant frame
/// `E_i = e^{a_i x_{N+1}} ∂_i`, `E_{N+1} = ∂_{N+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tangent {
    base: Point,
    coord: Vec<f64>,
    frame: Vec<f64>,
}

impl Tangent {
    pub fn from_coord(p: &MetricParams, base: Point, coord: Vec<f64>) -> Result<Self> {
        base.check(p)?;
        check_dim(p.dim(), coord.len())?;
        if coord.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tangent"));
        }
        let h = base.height();
        let n = p.n();
        let frame = coord
            .iter()
            .enumerate()
            .map(|(i, &c)| if i < n { (-p.rates()[i] * h).exp() * c } else { c })
            .collect();
        Ok(Self { base, coord, frame })
    }

    pub fn from_frame(p: &MetricParams, base: Point, frame: Vec<f64>) -> Result<Self> {
        base.check(p)?;
        check_dim(p.dim(), frame.len())?;
        if frame.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tangent"));
        }
        let h = base.height();
        let n = p.n();
        let coord = frame
            .iter()
            .enumerate()
            .map(|(i, &f)| if i < n { (p.rates()[i] * h).exp() * f } else { f })
            .collect();
        Ok(Self { base, coord, frame })
    }

    /// Tangent at the origin, where frame and coordinate components agree.
    pub fn at_origin(p: &MetricParams, v: Vec<f64>) -> Result<Self> {
        Self::from_frame(p, Point::origin(p.dim()), v)
    }

    pub fn base(&self) -> &Point {
        &self.base
    }

    pub fn coord(&self) -> &[f64] {
        &self.coord
    }

    pub fn frame(&self) -> &[f64] {
        &self.frame
    }

    /// Euclidean norm of the frame components, i.e. the `g_a`-length.
    pub fn frame_norm(&self) -> f64 {
        self.frame.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn normalized(&self, p: &MetricParams) -> Result<Self> {
        let n = self.frame_norm();
        if n == 0.0 {
            return Err(Error::InvalidArgument("cannot normalize the zero vector".into()));
        }
        Self::from_frame(p, self.base.clone(), self.frame.iter().map(|v| v / n).collect())
    }
}
