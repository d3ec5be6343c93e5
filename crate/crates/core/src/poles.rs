//! Linear class-K coefficients from pole locations.
//!
//! Choosing `α_i(s) = p_i s` turns the high-order barrier recursion into a
//! linear combination of barrier derivatives whose weights are the
//! coefficients of `χ_i(s) = ∏_{j ≤ i} (s + p_j)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Strictly positive poles `p_1..p_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PoleSet(Vec<f64>);

impl PoleSet {
    pub fn new(poles: Vec<f64>) -> Result<Self> {
        if poles.is_empty() {
            return Err(Error::InvalidParameter("pole set is empty".into()));
        }
        if let Some(p) = poles.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "pole {p} is not strictly positive"
            )));
        }
        Ok(Self(poles))
    }

    pub fn poles(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for PoleSet {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        PoleSet::new(v)
    }
}

impl From<PoleSet> for Vec<f64> {
    fn from(p: PoleSet) -> Self {
        p.0
    }
}

/// Row `i` (1-based) holds `c_0^i .. c_{i-1}^i`; the leading `c_i^i = 1` is
/// implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    rows: Vec<Vec<f64>>,
}

impl CoefficientTable {
    /// Number of rows, i.e. the order `m`.
    pub fn order(&self) -> usize {
        self.rows.len()
    }

    /// `c_0^i .. c_{i-1}^i` for `1 ≤ i ≤ m`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i - 1]
    }

    /// `c_j^i` with the convention `c_i^i = 1` (including `c_0^0 = 1`).
    pub fn c(&self, i: usize, j: usize) -> f64 {
        assert!(
            j <= i && i <= self.order(),
            "coefficient c_{j}^{i} out of range"
        );
        if j == i {
            1.0
        } else {
            self.rows[i - 1][j]
        }
    }

    /// Monic polynomial of row `i` evaluated at `s`.
    pub fn characteristic(&self, i: usize, s: f64) -> f64 {
        let mut acc = 1.0;
        for c in self.row(i).iter().rev() {
            acc = acc * s + c;
        }
        acc
    }
}

/// Expands `∏_{j ≤ i}(s + p_j)` for every `i` by multiplying in one linear
/// factor at a time.
pub fn coefficients_from_poles(poles: &PoleSet) -> CoefficientTable {
    // ascending powers, leading 1 kept at the end
    let mut poly = vec![1.0];
    let mut rows = Vec::with_capacity(poles.len());
    for &p in poles.poles() {
        let mut next = vec![0.0; poly.len() + 1];
        for (k, &a) in poly.iter().enumerate() {
            next[k] += p * a;
            next[k + 1] += a;
        }
        poly = next;
        rows.push(poly[..poly.len() - 1].to_vec());
    }
    CoefficientTable { rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn acc_poles() {
        let t = coefficients_from_poles(&PoleSet::new(vec![5.0, 10.0]).unwrap());
        assert_eq!(t.row(1), &[5.0]);
        assert_eq!(t.row(2), &[50.0, 15.0]);
        assert_eq!(t.c(2, 2), 1.0);
        assert_eq!(t.c(1, 1), 1.0);
    }

    #[test]
    fn single_pole() {
        let t = coefficients_from_poles(&PoleSet::new(vec![3.5]).unwrap());
        assert_eq!(t.row(1), &[3.5]);
    }

    /// Convolution oracle: (s+2)(s+3) = s² + 5s + 6; times (s+4) gives
    /// s³ + 9s² + 26s + 24.
    #[test]
    fn three_poles() {
        let t = coefficients_from_poles(&PoleSet::new(vec![2.0, 3.0, 4.0]).unwrap());
        assert_eq!(t.row(2), &[6.0, 5.0]);
        assert_eq!(t.row(3), &[24.0, 26.0, 9.0]);
    }

    #[test]
    fn rejects_nonpositive() {
        assert!(PoleSet::new(vec![1.0, 0.0]).is_err());
        assert!(PoleSet::new(vec![-2.0]).is_err());
        assert!(PoleSet::new(vec![]).is_err());
        assert!(PoleSet::new(vec![f64::NAN]).is_err());
    }

    proptest! {
        #[test]
        fn roots_and_positivity(poles in prop::collection::vec(0.05f64..20.0, 1..6)) {
            let t = coefficients_from_poles(&PoleSet::new(poles.clone()).unwrap());
            for i in 1..=poles.len() {
                let scale: f64 = poles[..i].iter().map(|p| 1.0 + p).product();
                for &p in &poles[..i] {
                    prop_assert!(t.characteristic(i, -p).abs() <= 1e-9 * scale);
                }
                prop_assert!(t.row(i).iter().all(|&c| c > 0.0));
            }
        }
    }
}
