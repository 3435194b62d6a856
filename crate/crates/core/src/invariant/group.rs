//! The two transformation groups used by the invariant t-test models.
//!
//! Both act on data vectors from the right: `x·c = c x` for the scale group
//! and `x·(a, b) = a x + b 1` for the location-scale group, so that
//! `(x·g)·h = x·(g h)`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroupKind {
    Scale,
    LocationScale,
}

impl GroupKind {
    /// Size of the minimal initial sample that makes the right Haar posterior
    /// proper.
    pub fn initial_size(self) -> usize {
        match self {
            GroupKind::Scale => 1,
            GroupKind::LocationScale => 2,
        }
    }

    pub fn identity(self) -> GroupElement {
        match self {
            GroupKind::Scale => GroupElement::Scale(1.0),
            GroupKind::LocationScale => GroupElement::LocationScale {
                scale: 1.0,
                shift: 0.0,
            },
        }
    }

    /// Whether `x` lies in the removed measure-zero set (`x_1 = 0` for the
    /// scale group, `x_1 = x_2` for location-scale).
    pub fn is_excluded(self, x: &[f64]) -> bool {
        match self {
            GroupKind::Scale => x.first().is_none_or(|&x1| x1 == 0.0),
            GroupKind::LocationScale => x.len() < 2 || x[0] == x[1],
        }
    }

    pub(crate) fn check_sample(self, x: &[f64]) -> Result<()> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(invalid("data contains a non-finite value"));
        }
        if self.is_excluded(x) {
            return Err(Error::SingularInput(match self {
                GroupKind::Scale => "scale model needs x_1 != 0".to_string(),
                GroupKind::LocationScale => {
                    "location-scale model needs at least two observations with x_1 != x_2"
                        .to_string()
                }
            }));
        }
        Ok(())
    }

    pub fn name(self) -> &'static str {
        match self {
            GroupKind::Scale => "scale",
            GroupKind::LocationScale => "location_scale",
        }
    }
}

impl fmt::Display for GroupKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GroupElement {
    Scale(f64),
    LocationScale { scale: f64, shift: f64 },
}

impl GroupElement {
    pub fn scale(c: f64) -> Result<Self> {
        if c > 0.0 && c.is_finite() {
            Ok(GroupElement::Scale(c))
        } else {
            Err(invalid(format!(
                "scale must be positive and finite, got {c}"
            )))
        }
    }

    pub fn location_scale(scale: f64, shift: f64) -> Result<Self> {
        if scale > 0.0 && scale.is_finite() && shift.is_finite() {
            Ok(GroupElement::LocationScale { scale, shift })
        } else {
            Err(invalid(format!(
                "location-scale element needs scale > 0 and finite shift, got ({scale}, {shift})"
            )))
        }
    }

    pub fn kind(&self) -> GroupKind {
        match self {
            GroupElement::Scale(_) => GroupKind::Scale,
            GroupElement::LocationScale { .. } => GroupKind::LocationScale,
        }
    }

    /// The multiplicative part (`c` or `a`).
    pub fn scale_factor(&self) -> f64 {
        match *self {
            GroupElement::Scale(c) => c,
            GroupElement::LocationScale { scale, .. } => scale,
        }
    }

    /// Group product `self · other`, defined so that acting by the product
    /// equals acting by `self` and then by `other`.
    pub fn compose(&self, other: &GroupElement) -> Result<GroupElement> {
        match (*self, *other) {
            (GroupElement::Scale(c), GroupElement::Scale(d)) => Ok(GroupElement::Scale(c * d)),
            (
                GroupElement::LocationScale { scale: a, shift: b },
                GroupElement::LocationScale {
                    scale: a2,
                    shift: b2,
                },
            ) => Ok(GroupElement::LocationScale {
                scale: a * a2,
                shift: a2 * b + b2,
            }),
            _ => Err(invalid("cannot compose elements of different groups")),
        }
    }

    pub fn inverse(&self) -> GroupElement {
        match *self {
            GroupElement::Scale(c) => GroupElement::Scale(1.0 / c),
            GroupElement::LocationScale { scale, shift } => GroupElement::LocationScale {
                scale: 1.0 / scale,
                shift: -shift / scale,
            },
        }
    }

    pub fn act_scalar(&self, x: f64) -> f64 {
        match *self {
            GroupElement::Scale(c) => c * x,
            GroupElement::LocationScale { scale, shift } => scale * x + shift,
        }
    }

    /// `x·g`.
    pub fn act(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&v| self.act_scalar(v)).collect()
    }

    /// Log density of the right Haar measure at this element, relative to
    /// Lebesgue measure on the parameters: `1/c` for scale and `1/a` for
    /// location-scale.
    pub fn right_haar_log_density(&self) -> f64 {
        -self.scale_factor().ln()
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupElement::Scale(c) => write!(f, "{c:.16e}"),
            GroupElement::LocationScale { scale, shift } => write!(f, "{scale:.16e};{shift:.16e}"),
        }
    }
}

/// Coordinates of a maximal invariant `U_n(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaximalInvariantValue {
    pub coords: Vec<f64>,
}

/// Scale: `x / |x_1|`. Location-scale: `(x_2 − x_1, …, x_n − x_1) / |x_2 − x_1|`.
pub fn maximal_invariant(kind: GroupKind, x: &[f64]) -> Result<MaximalInvariantValue> {
    kind.check_sample(x)?;
    let coords = match kind {
        GroupKind::Scale => {
            let s = x[0].abs();
            x.iter().map(|&v| v / s).collect()
        }
        GroupKind::LocationScale => {
            let s = (x[1] - x[0]).abs();
            x[1..].iter().map(|&v| (v - x[0]) / s).collect()
        }
    };
    Ok(MaximalInvariantValue { coords })
}

/// The group element carrying `x` onto `y` when both share a maximal
/// invariant, reconstructed from the initial sample.
pub fn recover_element(kind: GroupKind, x: &[f64], y: &[f64]) -> Result<GroupElement> {
    kind.check_sample(x)?;
    kind.check_sample(y)?;
    match kind {
        GroupKind::Scale => GroupElement::scale(y[0].abs() / x[0].abs()),
        GroupKind::LocationScale => {
            let a = (y[1] - y[0]).abs() / (x[1] - x[0]).abs();
            GroupElement::location_scale(a, y[0] - a * x[0])
        }
    }
}
