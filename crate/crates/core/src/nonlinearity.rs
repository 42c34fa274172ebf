//! Per-edge response functions `h` and the quantities derived from them.
//!
//! Every response is odd, strictly increasing and has a derivative bounded in
//! `[1/k, k]`. The edge energy returned here is the unweighted integral
//! `phi(g) = ∫₀^g s·h'(s) ds`; edge weights are applied by the energy module.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NonlinearityError {
    #[error("derivative bound k must be >= 1, got {0}")]
    InvalidBound(f64),
    #[error("validation grid is empty")]
    EmptyGrid,
    #[error("validation grid is not symmetric about zero (missing {0})")]
    AsymmetricGrid(f64),
    #[error("invalid piecewise segments: {0}")]
    InvalidSegments(String),
    #[error("two-slope parameter must be positive and finite, got {0}")]
    InvalidSlopeParam(f64),
    #[error("unknown nonlinearity spec `{0}`")]
    UnknownSpec(String),
}

/// Piecewise-linear odd response, described on `v >= 0` by segments
/// `(start, slope)`; the slope applies on `(start_i, start_{i+1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    starts: Vec<f64>,
    slopes: Vec<f64>,
    // h and phi evaluated at each segment start.
    h_at: Vec<f64>,
    phi_at: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(segments: &[(f64, f64)]) -> Result<Self, NonlinearityError> {
        let bad = |msg: &str| Err(NonlinearityError::InvalidSegments(msg.to_string()));
        if segments.is_empty() {
            return bad("no segments");
        }
        if segments[0].0 != 0.0 {
            return bad("first segment must start at 0");
        }
        for (i, &(start, slope)) in segments.iter().enumerate() {
            if !start.is_finite() || !slope.is_finite() {
                return bad("non-finite breakpoint or slope");
            }
            if slope <= 0.0 {
                return bad("slopes must be positive");
            }
            if i > 0 && start <= segments[i - 1].0 {
                return bad("breakpoints must be strictly increasing");
            }
        }
        let starts: Vec<f64> = segments.iter().map(|s| s.0).collect();
        let slopes: Vec<f64> = segments.iter().map(|s| s.1).collect();
        let mut h_at = vec![0.0; starts.len()];
        let mut phi_at = vec![0.0; starts.len()];
        for i in 1..starts.len() {
            let (a, b) = (starts[i - 1], starts[i]);
            h_at[i] = h_at[i - 1] + slopes[i - 1] * (b - a);
            phi_at[i] = phi_at[i - 1] + slopes[i - 1] * (b - a) * (b + a) / 2.0;
        }
        Ok(Self {
            starts,
            slopes,
            h_at,
            phi_at,
        })
    }

    pub fn segments(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.starts.iter().copied().zip(self.slopes.iter().copied())
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.starts[1..]
    }

    // Index i with a in (start_i, start_{i+1}].
    fn segment_left(&self, a: f64) -> usize {
        self.starts.partition_point(|&s| s < a).saturating_sub(1)
    }

    fn segment_right(&self, a: f64) -> usize {
        self.starts.partition_point(|&s| s <= a).saturating_sub(1)
    }

    fn h_pos(&self, a: f64) -> f64 {
        let i = self.segment_left(a);
        self.h_at[i] + self.slopes[i] * (a - self.starts[i])
    }

    fn h_inv_pos(&self, y: f64) -> f64 {
        let i = self.h_at.partition_point(|&h| h <= y).saturating_sub(1);
        self.starts[i] + (y - self.h_at[i]) / self.slopes[i]
    }

    fn phi_pos(&self, a: f64) -> f64 {
        let i = self.segment_left(a);
        let s = self.starts[i];
        self.phi_at[i] + self.slopes[i] * (a - s) * (a + s) / 2.0
    }

    /// `∫_lo^hi s·h'(s) ds` for `0 <= lo <= hi`, summed segment by segment.
    fn integral_pos(&self, lo: f64, hi: f64) -> f64 {
        let mut total = 0.0;
        let first = self.segment_right(lo);
        for i in first..self.starts.len() {
            let seg_lo = self.starts[i].max(lo);
            if seg_lo >= hi {
                break;
            }
            let seg_hi = self.starts.get(i + 1).map_or(hi, |&e| e.min(hi));
            total += self.slopes[i] * (seg_hi - seg_lo) * (seg_hi + seg_lo) / 2.0;
        }
        total
    }

    fn min_max_slope(&self) -> (f64, f64) {
        self.slopes
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| (lo.min(s), hi.max(s)))
    }
}

/// An admissible edge response `h`.
#[derive(Debug, Clone, PartialEq)]
pub enum Nonlinearity {
    Identity,
    /// Slope `1/k` on `|v| <= 1` and slope 1 beyond.
    TwoSlope { k: f64, shape: PiecewiseLinear },
    /// `h(v) = v + arctan(v)`.
    ArctanShift,
    PiecewiseLinear(PiecewiseLinear),
}

impl Nonlinearity {
    pub fn two_slope(k: f64) -> Result<Self, NonlinearityError> {
        if !(k.is_finite() && k > 0.0) {
            return Err(NonlinearityError::InvalidSlopeParam(k));
        }
        let shape = PiecewiseLinear::new(&[(0.0, 1.0 / k), (1.0, 1.0)])?;
        Ok(Self::TwoSlope { k, shape })
    }

    pub fn piecewise(segments: &[(f64, f64)]) -> Result<Self, NonlinearityError> {
        PiecewiseLinear::new(segments).map(Self::PiecewiseLinear)
    }

    fn shape(&self) -> Option<&PiecewiseLinear> {
        match self {
            Self::TwoSlope { shape, .. } | Self::PiecewiseLinear(shape) => Some(shape),
            _ => None,
        }
    }

    /// Smallest `k >= 1` with `1/k <= h'(v) <= k` everywhere.
    pub fn k_bound(&self) -> f64 {
        match self {
            Self::Identity => 1.0,
            Self::ArctanShift => 2.0,
            Self::TwoSlope { shape, .. } | Self::PiecewiseLinear(shape) => {
                let (lo, hi) = shape.min_max_slope();
                hi.max(1.0 / lo).max(1.0)
            }
        }
    }

    pub fn h(&self, v: f64) -> f64 {
        match self {
            Self::Identity => v,
            Self::ArctanShift => v + v.atan(),
            Self::TwoSlope { shape, .. } | Self::PiecewiseLinear(shape) => {
                v.signum() * shape.h_pos(v.abs())
            }
        }
    }

    pub fn h_inv(&self, y: f64) -> f64 {
        match self {
            Self::Identity => y,
            Self::ArctanShift => y.signum() * arctan_shift_inv_pos(y.abs()),
            Self::TwoSlope { shape, .. } | Self::PiecewiseLinear(shape) => {
                y.signum() * shape.h_inv_pos(y.abs())
            }
        }
    }

    /// Left-continuous derivative `h'(v)`.
    pub fn h_prime(&self, v: f64) -> f64 {
        match self {
            Self::Identity => 1.0,
            Self::ArctanShift => 1.0 + 1.0 / (1.0 + v * v),
            Self::TwoSlope { shape, .. } | Self::PiecewiseLinear(shape) => {
                // Approaching v from below means approaching |v| from above when v < 0.
                let i = if v > 0.0 {
                    shape.segment_left(v)
                } else {
                    shape.segment_right(-v)
                };
                shape.slopes[i]
            }
        }
    }

    /// Unweighted edge energy `∫₀^g s·h'(s) ds`.
    pub fn phi(&self, g: f64) -> f64 {
        match self {
            Self::Identity => g * g / 2.0,
            Self::ArctanShift => (g * g + (g * g).ln_1p()) / 2.0,
            Self::TwoSlope { shape, .. } | Self::PiecewiseLinear(shape) => shape.phi_pos(g.abs()),
        }
    }

    /// `phi(to) - phi(from)`, evaluated without cancellation when the two
    /// arguments are close.
    pub fn phi_increment(&self, from: f64, to: f64) -> f64 {
        let quad = (to - from) * (to + from);
        match self {
            Self::Identity => quad / 2.0,
            Self::ArctanShift => (quad + (quad / (1.0 + from * from)).ln_1p()) / 2.0,
            Self::TwoSlope { shape, .. } | Self::PiecewiseLinear(shape) => {
                let (a, b) = (from.abs(), to.abs());
                if a <= b {
                    shape.integral_pos(a, b)
                } else {
                    -shape.integral_pos(b, a)
                }
            }
        }
    }

    /// Symmetric sample grid covering `[-extent, extent]` plus both sides of
    /// every breakpoint.
    pub fn default_grid(&self, extent: f64, points: usize) -> Vec<f64> {
        let mut grid = Vec::with_capacity(points + 8);
        let half = points.max(2) / 2;
        for i in 0..=half {
            let v = extent * i as f64 / half as f64;
            grid.push(v);
        }
        if let Some(shape) = self.shape() {
            for &b in shape.breakpoints() {
                grid.extend_from_slice(&[b, b * (1.0 - 1e-9), b * (1.0 + 1e-9), 2.0 * b]);
            }
        }
        let positive: Vec<f64> = grid.iter().copied().filter(|&v| v > 0.0).collect();
        grid.extend(positive.iter().map(|v| -v));
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        grid
    }

    pub fn validate_admissibility(
        &self,
        k: f64,
        grid: &[f64],
    ) -> Result<AdmissibilityReport, NonlinearityError> {
        if !(k >= 1.0) {
            return Err(NonlinearityError::InvalidBound(k));
        }
        if grid.is_empty() {
            return Err(NonlinearityError::EmptyGrid);
        }
        let mut sorted = grid.to_vec();
        sorted.sort_by(f64::total_cmp);
        for &v in &sorted {
            if sorted.binary_search_by(|p| p.total_cmp(&-v)).is_err() && v != 0.0 {
                return Err(NonlinearityError::AsymmetricGrid(-v));
            }
        }

        let slack = 1e-12;
        let antisymmetry = sorted
            .iter()
            .copied()
            .find(|&v| (self.h(-v) + self.h(v)).abs() > slack * (1.0 + self.h(v).abs()));
        let derivative_bounds = sorted.iter().copied().find(|&v| {
            let d = self.h_prime(v);
            d < (1.0 / k) * (1.0 - slack) || d > k * (1.0 + slack)
        });
        let monotone_response = sorted.windows(2).find_map(|w| {
            let (a, b) = (w[0], w[1]);
            (b > a && a * self.h_prime(a) >= b * self.h_prime(b)).then_some(b)
        });
        Ok(AdmissibilityReport {
            antisymmetry: antisymmetry.into(),
            derivative_bounds: derivative_bounds.into(),
            monotone_response: monotone_response.into(),
        })
    }
}

/// Outcome of one admissibility condition on a grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionCheck {
    pub first_violation: Option<f64>,
}

impl ConditionCheck {
    pub fn passed(&self) -> bool {
        self.first_violation.is_none()
    }
}

impl From<Option<f64>> for ConditionCheck {
    fn from(first_violation: Option<f64>) -> Self {
        Self { first_violation }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmissibilityReport {
    pub antisymmetry: ConditionCheck,
    pub derivative_bounds: ConditionCheck,
    /// `v·h'(v)` strictly increasing along the grid.
    pub monotone_response: ConditionCheck,
}

impl AdmissibilityReport {
    pub fn passed(&self) -> bool {
        self.antisymmetry.passed() && self.derivative_bounds.passed() && self.monotone_response.passed()
    }
}

// Solves v + atan(v) = y for y >= 0; the root lies in [y/2, y].
fn arctan_shift_inv_pos(y: f64) -> f64 {
    if y == 0.0 || !y.is_finite() {
        return y;
    }
    let (mut lo, mut hi) = (y / 2.0, y);
    let mut v = if y > 2.0 { y - std::f64::consts::FRAC_PI_2 } else { y / 2.0 };
    v = v.clamp(lo, hi);
    for _ in 0..100 {
        let f = v + v.atan() - y;
        if f == 0.0 {
            return v;
        }
        if f > 0.0 {
            hi = v;
        } else {
            lo = v;
        }
        let step = f / (1.0 + 1.0 / (1.0 + v * v));
        let mut next = v - step;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - v).abs() <= 1e-16 * v.abs() || next == v {
            return next;
        }
        v = next;
    }
    v
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Identity => write!(f, "identity"),
            Self::ArctanShift => write!(f, "arctan"),
            Self::TwoSlope { k, .. } => write!(f, "two_slope {k}"),
            Self::PiecewiseLinear(shape) => {
                let parts: Vec<String> = shape.segments().map(|(v, s)| format!("{v}:{s}")).collect();
                write!(f, "piecewise {}", parts.join(","))
            }
        }
    }
}

impl FromStr for Nonlinearity {
    type Err = NonlinearityError;

    /// Accepts `identity`, `arctan`, `two_slope <k>` and
    /// `piecewise v1:s1,v2:s2,...`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || NonlinearityError::UnknownSpec(s.to_string());
        let mut tokens = s.split_whitespace();
        let name = tokens.next().ok_or_else(unknown)?;
        let params: Vec<&str> = tokens.collect();
        match (name, params.as_slice()) {
            ("identity", []) => Ok(Self::Identity),
            ("arctan", []) => Ok(Self::ArctanShift),
            ("two_slope", [k]) => Self::two_slope(k.parse().map_err(|_| unknown())?),
            ("piecewise", parts) if !parts.is_empty() => {
                let joined = parts.join("");
                let mut segments = Vec::new();
                for pair in joined.split(',').filter(|p| !p.is_empty()) {
                    let (v, slope) = pair.split_once(':').ok_or_else(unknown)?;
                    let v: f64 = v.trim().parse().map_err(|_| unknown())?;
                    let slope: f64 = slope.trim().parse().map_err(|_| unknown())?;
                    segments.push((v, slope));
                }
                Self::piecewise(&segments)
            }
            _ => Err(unknown()),
        }
    }
}
