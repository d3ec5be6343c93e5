//! Truncated multivariate Taylor jets for forward-mode differentiation.
//!
//! A [`Jet`] of order `k` in `n` variables stores the Taylor coefficients
//! `c_α = ∂^α F / α!` of a scalar function for every multi-index `|α| ≤ k`.
//! Arithmetic on jets is arithmetic on truncated polynomials, so evaluating a
//! function on seeded variables yields its value and all derivatives up to
//! order `k` exactly (up to floating point).
//!
//! Taking a partial derivative of an order-`k` jet gives an order-`k-1` jet.
//! This is what lets a Lie derivative of a field be a field again: the
//! barrier recursion evaluates level `i` one order higher than level `i+1`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

/// Monomial bookkeeping for a fixed (variable count, order) pair.
///
/// Monomials are ordered by total degree, then lexicographically descending,
/// so the layout of order `k-1` is a prefix of the layout of order `k`.
pub struct Layout {
    nvars: usize,
    order: usize,
    degrees: Vec<usize>,
    // (i, j, k): coefficient k of a product receives a_i * b_j
    mul: Vec<(u32, u32, u32)>,
    // per variable: (source, destination, factor) for ∂/∂x_v
    deriv: Vec<Vec<(u32, u32, f64)>>,
}

thread_local! {
    static LAYOUTS: RefCell<HashMap<(usize, usize), Arc<Layout>>> = RefCell::new(HashMap::new());
}

impl Layout {
    /// Shared layout for `nvars` variables truncated at `order`.
    pub fn get(nvars: usize, order: usize) -> Arc<Layout> {
        LAYOUTS.with(|cache| {
            cache
                .borrow_mut()
                .entry((nvars, order))
                .or_insert_with(|| Arc::new(Layout::build(nvars, order)))
                .clone()
        })
    }

    fn build(nvars: usize, order: usize) -> Layout {
        let mut exps: Vec<Vec<u8>> = Vec::new();
        for deg in 0..=order {
            let mut cur = vec![0u8; nvars];
            push_degree(&mut exps, &mut cur, 0, deg);
        }
        let index: HashMap<Vec<u8>, usize> = exps
            .iter()
            .enumerate()
            .map(|(i, e)| (e.clone(), i))
            .collect();
        let degrees: Vec<usize> = exps
            .iter()
            .map(|e| e.iter().map(|&a| a as usize).sum())
            .collect();

        let mut mul = Vec::new();
        for (i, ei) in exps.iter().enumerate() {
            for (j, ej) in exps.iter().enumerate() {
                if degrees[i] + degrees[j] > order {
                    continue;
                }
                let sum: Vec<u8> = ei.iter().zip(ej).map(|(a, b)| a + b).collect();
                mul.push((i as u32, j as u32, index[&sum] as u32));
            }
        }

        let mut deriv = vec![Vec::new(); nvars];
        for (v, table) in deriv.iter_mut().enumerate() {
            for (src, e) in exps.iter().enumerate() {
                if e[v] == 0 {
                    continue;
                }
                let mut lower = e.clone();
                lower[v] -= 1;
                table.push((src as u32, index[&lower] as u32, e[v] as f64));
            }
        }

        Layout {
            nvars,
            order,
            degrees,
            mul,
            deriv,
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of stored coefficients.
    pub fn len(&self) -> usize {
        self.degrees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degrees.is_empty()
    }
}

fn push_degree(out: &mut Vec<Vec<u8>>, cur: &mut Vec<u8>, pos: usize, remaining: usize) {
    if pos + 1 == cur.len() {
        cur[pos] = remaining as u8;
        out.push(cur.clone());
        cur[pos] = 0;
        return;
    }
    if cur.is_empty() {
        return;
    }
    for a in (0..=remaining).rev() {
        cur[pos] = a as u8;
        push_degree(out, cur, pos + 1, remaining - a);
    }
    cur[pos] = 0;
}

/// Truncated multivariate Taylor expansion.
#[derive(Clone)]
pub struct Jet {
    layout: Arc<Layout>,
    coeffs: Vec<f64>,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet")
            .field("nvars", &self.layout.nvars)
            .field("order", &self.layout.order)
            .field("coeffs", &self.coeffs)
            .finish()
    }
}

impl Jet {
    pub fn constant_in(layout: &Arc<Layout>, value: f64) -> Jet {
        let mut coeffs = vec![0.0; layout.len()];
        coeffs[0] = value;
        Jet {
            layout: layout.clone(),
            coeffs,
        }
    }

    /// The coordinate function `x_var` expanded around `value`.
    pub fn variable_in(layout: &Arc<Layout>, var: usize, value: f64) -> Jet {
        assert!(var < layout.nvars, "variable index out of range");
        let mut jet = Jet::constant_in(layout, value);
        if layout.order >= 1 {
            // degree-one monomials follow the constant, in variable order
            jet.coeffs[1 + var] = 1.0;
        }
        jet
    }

    /// Seeds every coordinate of `x` as an independent variable.
    pub fn seed(x: &[f64], order: usize) -> Vec<Jet> {
        let layout = Layout::get(x.len(), order);
        x.iter()
            .enumerate()
            .map(|(i, &v)| Jet::variable_in(&layout, i, v))
            .collect()
    }

    /// A constant sharing this jet's layout.
    pub fn constant(&self, value: f64) -> Jet {
        Jet::constant_in(&self.layout, value)
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn order(&self) -> usize {
        self.layout.order
    }

    pub fn nvars(&self) -> usize {
        self.layout.nvars
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// First partial derivatives. Requires order ≥ 1.
    pub fn gradient(&self) -> Vec<f64> {
        assert!(self.order() >= 1, "gradient needs a jet of order >= 1");
        self.coeffs[1..=self.nvars()].to_vec()
    }

    /// Same derivatives, different base value.
    pub fn with_value(&self, value: f64) -> Jet {
        let mut out = self.clone();
        out.coeffs[0] = value;
        out
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    /// `∂/∂x_var` as a jet one order lower.
    pub fn partial(&self, var: usize) -> Jet {
        assert!(self.order() >= 1, "cannot differentiate an order-0 jet");
        let lower = Layout::get(self.nvars(), self.order() - 1);
        let mut coeffs = vec![0.0; lower.len()];
        for &(src, dst, factor) in &self.layout.deriv[var] {
            if (dst as usize) < coeffs.len() {
                coeffs[dst as usize] += factor * self.coeffs[src as usize];
            }
        }
        Jet {
            layout: lower,
            coeffs,
        }
    }

    /// Applies a univariate function given its derivatives at the base value,
    /// `derivs[k] = φ^(k)(value)` for `k = 0..=order`.
    pub fn compose(&self, derivs: &[f64]) -> Jet {
        let order = self.order();
        assert!(
            derivs.len() > order,
            "need derivatives through the jet order"
        );
        let mut nilpotent = self.clone();
        nilpotent.coeffs[0] = 0.0;
        let mut factorial = 1.0;
        for k in 1..=order {
            factorial *= k as f64;
        }
        // Horner in the nilpotent part: Σ φ^(k)/k! t^k
        let mut acc = self.constant(derivs[order] / factorial);
        for k in (0..order).rev() {
            factorial /= (k + 1) as f64;
            acc = &acc * &nilpotent;
            acc.coeffs[0] += derivs[k] / factorial;
        }
        acc
    }

    pub fn recip(&self) -> Jet {
        let a = self.value();
        let mut d = Vec::with_capacity(self.order() + 1);
        let mut term = 1.0 / a;
        for _ in 0..=self.order() {
            d.push(term);
            term *= -(d.len() as f64) / a;
        }
        self.compose(&d)
    }

    pub fn powi(&self, n: i32) -> Jet {
        let a = self.value();
        let mut d = Vec::with_capacity(self.order() + 1);
        let mut coef = 1.0;
        for k in 0..=self.order() {
            let exp = n - k as i32;
            d.push(if coef == 0.0 { 0.0 } else { coef * a.powi(exp) });
            coef *= exp as f64;
        }
        self.compose(&d)
    }

    pub fn square(&self) -> Jet {
        self * self
    }

    pub fn sqrt(&self) -> Jet {
        let a = self.value();
        let mut d = Vec::with_capacity(self.order() + 1);
        let mut coef = 1.0;
        let mut exp = 0.5;
        for _ in 0..=self.order() {
            d.push(coef * a.powf(exp));
            coef *= exp;
            exp -= 1.0;
        }
        self.compose(&d)
    }

    pub fn exp(&self) -> Jet {
        let e = self.value().exp();
        self.compose(&vec![e; self.order() + 1])
    }

    pub fn ln(&self) -> Jet {
        let a = self.value();
        let mut d = vec![a.ln()];
        let mut term = 1.0 / a;
        for k in 1..=self.order() {
            d.push(term);
            term *= -(k as f64) / a;
        }
        self.compose(&d)
    }

    pub fn sin(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        let cycle = [s, c, -s, -c];
        let d: Vec<f64> = (0..=self.order()).map(|k| cycle[k % 4]).collect();
        self.compose(&d)
    }

    pub fn cos(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        let cycle = [c, -s, -c, s];
        let d: Vec<f64> = (0..=self.order()).map(|k| cycle[k % 4]).collect();
        self.compose(&d)
    }

    fn check_layout(&self, other: &Jet) {
        debug_assert!(
            Arc::ptr_eq(&self.layout, &other.layout)
                || (self.nvars() == other.nvars() && self.order() == other.order()),
            "jets with different layouts"
        );
    }

    fn add_jet(&self, other: &Jet) -> Jet {
        self.check_layout(other);
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a + b)
            .collect();
        Jet {
            layout: self.layout.clone(),
            coeffs,
        }
    }

    fn sub_jet(&self, other: &Jet) -> Jet {
        self.check_layout(other);
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a - b)
            .collect();
        Jet {
            layout: self.layout.clone(),
            coeffs,
        }
    }

    fn mul_jet(&self, other: &Jet) -> Jet {
        self.check_layout(other);
        let mut coeffs = vec![0.0; self.coeffs.len()];
        for &(i, j, k) in &self.layout.mul {
            coeffs[k as usize] += self.coeffs[i as usize] * other.coeffs[j as usize];
        }
        Jet {
            layout: self.layout.clone(),
            coeffs,
        }
    }

    fn div_jet(&self, other: &Jet) -> Jet {
        self.mul_jet(&other.recip())
    }

    fn map_coeffs(&self, f: impl Fn(f64) -> f64) -> Jet {
        Jet {
            layout: self.layout.clone(),
            coeffs: self.coeffs.iter().map(|&c| f(c)).collect(),
        }
    }
}

macro_rules! jet_binop {
    ($trait:ident, $method:ident, $inner:ident) => {
        impl $trait<Jet> for Jet {
            type Output = Jet;
            fn $method(self, rhs: Jet) -> Jet {
                self.$inner(&rhs)
            }
        }
        impl $trait<&Jet> for Jet {
            type Output = Jet;
            fn $method(self, rhs: &Jet) -> Jet {
                self.$inner(rhs)
            }
        }
        impl $trait<Jet> for &Jet {
            type Output = Jet;
            fn $method(self, rhs: Jet) -> Jet {
                self.$inner(&rhs)
            }
        }
        impl $trait<&Jet> for &Jet {
            type Output = Jet;
            fn $method(self, rhs: &Jet) -> Jet {
                self.$inner(rhs)
            }
        }
    };
}

jet_binop!(Add, add, add_jet);
jet_binop!(Sub, sub, sub_jet);
jet_binop!(Mul, mul, mul_jet);
jet_binop!(Div, div, div_jet);

macro_rules! jet_scalar_ops {
    ($lhs:ty) => {
        impl Add<f64> for $lhs {
            type Output = Jet;
            fn add(self, rhs: f64) -> Jet {
                let mut out = self.clone();
                out.coeffs[0] += rhs;
                out
            }
        }
        impl Sub<f64> for $lhs {
            type Output = Jet;
            fn sub(self, rhs: f64) -> Jet {
                let mut out = self.clone();
                out.coeffs[0] -= rhs;
                out
            }
        }
        impl Mul<f64> for $lhs {
            type Output = Jet;
            fn mul(self, rhs: f64) -> Jet {
                self.map_coeffs(|c| c * rhs)
            }
        }
        impl Div<f64> for $lhs {
            type Output = Jet;
            fn div(self, rhs: f64) -> Jet {
                self.map_coeffs(|c| c / rhs)
            }
        }
        impl Add<$lhs> for f64 {
            type Output = Jet;
            fn add(self, rhs: $lhs) -> Jet {
                rhs + self
            }
        }
        impl Sub<$lhs> for f64 {
            type Output = Jet;
            fn sub(self, rhs: $lhs) -> Jet {
                let mut out = rhs.map_coeffs(|c| -c);
                out.coeffs[0] += self;
                out
            }
        }
        impl Mul<$lhs> for f64 {
            type Output = Jet;
            fn mul(self, rhs: $lhs) -> Jet {
                rhs * self
            }
        }
        impl Div<$lhs> for f64 {
            type Output = Jet;
            fn div(self, rhs: $lhs) -> Jet {
                rhs.recip() * self
            }
        }
        impl Neg for $lhs {
            type Output = Jet;
            fn neg(self) -> Jet {
                self.map_coeffs(|c| -c)
            }
        }
    };
}

jet_scalar_ops!(Jet);
jet_scalar_ops!(&Jet);
