use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    /// `row · u ≥ offset`
    GreaterEq,
    /// `row · u ≤ offset`
    LessEq,
}

/// Affine inequality `row · u (≥ | ≤) offset` over decision variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineControlConstraint {
    pub row: Vec<f64>,
    pub offset: f64,
    pub sense: Sense,
}

impl AffineControlConstraint {
    pub fn at_least(row: Vec<f64>, offset: f64) -> Self {
        Self {
            row,
            offset,
            sense: Sense::GreaterEq,
        }
    }

    pub fn at_most(row: Vec<f64>, offset: f64) -> Self {
        Self {
            row,
            offset,
            sense: Sense::LessEq,
        }
    }

    pub fn lhs(&self, u: &[f64]) -> f64 {
        self.row.iter().zip(u).map(|(a, b)| a * b).sum()
    }

    /// Signed slack; nonnegative iff satisfied.
    pub fn residual(&self, u: &[f64]) -> f64 {
        match self.sense {
            Sense::GreaterEq => self.lhs(u) - self.offset,
            Sense::LessEq => self.offset - self.lhs(u),
        }
    }

    /// `(a, b)` with the constraint rewritten as `a · u ≤ b`.
    pub fn as_less_eq(&self) -> (Vec<f64>, f64) {
        match self.sense {
            Sense::LessEq => (self.row.clone(), self.offset),
            Sense::GreaterEq => (self.row.iter().map(|a| -a).collect(), -self.offset),
        }
    }

    /// Appends zero coefficients, e.g. to lift a control row into `(u, δ)`.
    pub fn lifted(&self, extra: usize) -> Self {
        let mut row = self.row.clone();
        row.extend(std::iter::repeat_n(0.0, extra));
        Self { row, ..*self }
    }

    pub fn is_finite(&self) -> bool {
        self.offset.is_finite() && self.row.iter().all(|a| a.is_finite())
    }
}
