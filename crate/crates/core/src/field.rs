//! Smooth scalar fields over state space, control-affine systems and Lie
//! derivatives.
//!
//! Every field evaluates to a [`Jet`] of any requested order at a point. A Lie
//! derivative of a field is again a field: evaluating `L_f F` at order `k`
//! evaluates `F` at order `k + 1`, differentiates the jet and contracts it with
//! the drift expanded to order `k`. Barrier cascades built this way are exactly
//! differentiable at every level without finite differences.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::jet::Jet;

/// Point in state space. Entries must be finite.
pub type StateVector = Vec<f64>;

/// Threshold used by sampling-based relative-degree checks.
pub const RELATIVE_DEGREE_TOL: f64 = 1e-9;

/// Default guard for reciprocal fields, in natural units of the operand.
pub const DEFAULT_RECIPROCAL_GUARD: f64 = 1e-9;

pub type VectorMap = Arc<dyn Fn(&[Jet]) -> Vec<Jet> + Send + Sync>;
/// Matrix-valued map returning `n` rows.
pub type MatrixMap = Arc<dyn Fn(&[Jet]) -> Vec<Vec<Jet>> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    /// `f`
    Drift,
    /// columns of `g`
    Input,
    /// columns of `h`
    Disturbance,
}

/// `ẋ = f(x) + g(x) u + h(x) d`.
#[derive(Clone)]
pub struct ControlAffineSystem {
    n: usize,
    p: usize,
    q: usize,
    f: VectorMap,
    g: MatrixMap,
    h: MatrixMap,
    ird_m: usize,
    drd_r: usize,
}

impl fmt::Debug for ControlAffineSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlAffineSystem")
            .field("n", &self.n)
            .field("p", &self.p)
            .field("q", &self.q)
            .field("ird_m", &self.ird_m)
            .field("drd_r", &self.drd_r)
            .finish_non_exhaustive()
    }
}

impl ControlAffineSystem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        p: usize,
        q: usize,
        f: VectorMap,
        g: MatrixMap,
        h: MatrixMap,
        ird_m: usize,
        drd_r: usize,
    ) -> Result<Self> {
        if n == 0 || p == 0 || q == 0 {
            return Err(Error::InvalidParameter(
                "system dimensions n, p, q must be positive".into(),
            ));
        }
        if ird_m == 0 || drd_r == 0 || drd_r > ird_m {
            return Err(Error::InvalidParameter(format!(
                "relative degrees must satisfy 1 <= r <= m (m = {ird_m}, r = {drd_r})"
            )));
        }
        Ok(Self {
            n,
            p,
            q,
            f,
            g,
            h,
            ird_m,
            drd_r,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn p(&self) -> usize {
        self.p
    }
    pub fn q(&self) -> usize {
        self.q
    }
    pub fn ird_m(&self) -> usize {
        self.ird_m
    }
    pub fn drd_r(&self) -> usize {
        self.drd_r
    }

    /// Same dynamics with different declared relative degrees.
    pub fn with_relative_degrees(&self, ird_m: usize, drd_r: usize) -> Result<Self> {
        Self::new(
            self.n,
            self.p,
            self.q,
            self.f.clone(),
            self.g.clone(),
            self.h.clone(),
            ird_m,
            drd_r,
        )
    }

    fn check_state(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::DimensionMismatch {
                operand: "state",
                expected: self.n,
                found: len,
            });
        }
        Ok(())
    }

    pub fn drift_jets(&self, x: &[Jet]) -> Result<Vec<Jet>> {
        self.check_state(x.len())?;
        let out = (self.f)(x);
        if out.len() != self.n {
            return Err(Error::DimensionMismatch {
                operand: "f",
                expected: self.n,
                found: out.len(),
            });
        }
        Ok(out)
    }

    fn matrix_jets(
        &self,
        map: &MatrixMap,
        cols: usize,
        name: &'static str,
        x: &[Jet],
    ) -> Result<Vec<Vec<Jet>>> {
        self.check_state(x.len())?;
        let rows = map(x);
        if rows.len() != self.n {
            return Err(Error::DimensionMismatch {
                operand: name,
                expected: self.n,
                found: rows.len(),
            });
        }
        for row in &rows {
            if row.len() != cols {
                return Err(Error::DimensionMismatch {
                    operand: name,
                    expected: cols,
                    found: row.len(),
                });
            }
        }
        Ok(rows)
    }

    pub fn input_jets(&self, x: &[Jet]) -> Result<Vec<Vec<Jet>>> {
        self.matrix_jets(&self.g, self.p, "g", x)
    }

    pub fn disturbance_jets(&self, x: &[Jet]) -> Result<Vec<Vec<Jet>>> {
        self.matrix_jets(&self.h, self.q, "h", x)
    }

    /// Vector fields of a channel as a list of columns.
    pub fn columns(&self, x: &[Jet], channel: Channel) -> Result<Vec<Vec<Jet>>> {
        match channel {
            Channel::Drift => Ok(vec![self.drift_jets(x)?]),
            Channel::Input => Ok(transpose(self.input_jets(x)?)),
            Channel::Disturbance => Ok(transpose(self.disturbance_jets(x)?)),
        }
    }

    pub fn channel_width(&self, channel: Channel) -> usize {
        match channel {
            Channel::Drift => 1,
            Channel::Input => self.p,
            Channel::Disturbance => self.q,
        }
    }

    pub fn drift(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(values(&self.drift_jets(&Jet::seed(x, 0))?))
    }

    pub fn input_matrix(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .input_jets(&Jet::seed(x, 0))?
            .iter()
            .map(|r| values(r))
            .collect())
    }

    pub fn disturbance_matrix(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .disturbance_jets(&Jet::seed(x, 0))?
            .iter()
            .map(|r| values(r))
            .collect())
    }

    /// Right-hand side `f(x) + g(x) u + h(x) d`.
    pub fn rhs(&self, x: &[f64], u: &[f64], d: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.p {
            return Err(Error::DimensionMismatch {
                operand: "u",
                expected: self.p,
                found: u.len(),
            });
        }
        if d.len() != self.q {
            return Err(Error::DimensionMismatch {
                operand: "d",
                expected: self.q,
                found: d.len(),
            });
        }
        let seeds = Jet::seed(x, 0);
        let mut out = values(&self.drift_jets(&seeds)?);
        for (i, row) in self.input_jets(&seeds)?.iter().enumerate() {
            out[i] += row.iter().zip(u).map(|(g, u)| g.value() * u).sum::<f64>();
        }
        for (i, row) in self.disturbance_jets(&seeds)?.iter().enumerate() {
            out[i] += row.iter().zip(d).map(|(h, d)| h.value() * d).sum::<f64>();
        }
        Ok(out)
    }
}

fn values(jets: &[Jet]) -> Vec<f64> {
    jets.iter().map(Jet::value).collect()
}

fn transpose(rows: Vec<Vec<Jet>>) -> Vec<Vec<Jet>> {
    let cols = rows.first().map_or(0, Vec::len);
    (0..cols)
        .map(|j| rows.iter().map(|r| r[j].clone()).collect())
        .collect()
}

/// Evaluation strategy behind a [`SmoothScalarField`].
pub trait FieldEval: Send + Sync {
    /// Taylor expansion of the field at `x` through `order`.
    fn eval(&self, x: &[f64], order: usize) -> Result<Jet>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    UserSupplied,
    DerivedByDifferentiation,
    AlgebraicComposite,
}

/// Scalar function of state with exact derivatives of every order.
#[derive(Clone)]
pub struct SmoothScalarField {
    n: usize,
    provenance: Provenance,
    label: Arc<str>,
    node: Arc<dyn FieldEval>,
}

impl fmt::Debug for SmoothScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothScalarField")
            .field("label", &self.label)
            .field("n", &self.n)
            .field("provenance", &self.provenance)
            .finish()
    }
}

struct UserField<F>(F);

impl<F> FieldEval for UserField<F>
where
    F: Fn(&[Jet]) -> Jet + Send + Sync,
{
    fn eval(&self, x: &[f64], order: usize) -> Result<Jet> {
        Ok((self.0)(&Jet::seed(x, order)))
    }
}

impl SmoothScalarField {
    /// Wraps a closure written over jets, e.g. `|x| &x[0] - 10.0`.
    pub fn from_fn<F>(n: usize, label: &str, f: F) -> Self
    where
        F: Fn(&[Jet]) -> Jet + Send + Sync + 'static,
    {
        Self::from_node(n, Provenance::UserSupplied, label, Arc::new(UserField(f)))
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Self::from_fn(n, "const", move |x| x[0].constant(value))
    }

    pub fn from_node(
        n: usize,
        provenance: Provenance,
        label: &str,
        node: Arc<dyn FieldEval>,
    ) -> Self {
        Self {
            n,
            provenance,
            label: label.into(),
            node,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn relabel(mut self, label: &str) -> Self {
        self.label = label.into();
        self
    }

    pub fn jet(&self, x: &[f64], order: usize) -> Result<Jet> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                operand: "state",
                expected: self.n,
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("state"));
        }
        self.node.eval(x, order)
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.jet(x, 0)?.value())
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.jet(x, 1)?.gradient())
    }

    pub fn lie(
        &self,
        system: &ControlAffineSystem,
        channel: Channel,
        column: usize,
    ) -> Result<Self> {
        derive_field(FieldExpr::Lie {
            field: self.clone(),
            system: system.clone(),
            channel,
            column,
        })
    }

    pub fn squared_lie_norm(&self, system: &ControlAffineSystem, channel: Channel) -> Result<Self> {
        derive_field(FieldExpr::SquaredLieNorm {
            field: self.clone(),
            system: system.clone(),
            channel,
        })
    }

    pub fn plus(&self, other: &Self) -> Result<Self> {
        derive_field(FieldExpr::Sum(vec![self.clone(), other.clone()]))
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        derive_field(FieldExpr::Scale(factor, self.clone()))
    }

    pub fn times(&self, other: &Self) -> Result<Self> {
        derive_field(FieldExpr::Product(self.clone(), other.clone()))
    }

    pub fn recip_guarded(&self, guard: f64) -> Result<Self> {
        derive_field(FieldExpr::Reciprocal {
            field: self.clone(),
            guard,
        })
    }
}

/// Expressions accepted by [`derive_field`].
pub enum FieldExpr {
    Sum(Vec<SmoothScalarField>),
    Scale(f64, SmoothScalarField),
    /// `constant + Σ weight · field`
    Linear {
        terms: Vec<(f64, SmoothScalarField)>,
        constant: f64,
    },
    Product(SmoothScalarField, SmoothScalarField),
    /// Lie derivative along one column of a channel.
    Lie {
        field: SmoothScalarField,
        system: ControlAffineSystem,
        channel: Channel,
        column: usize,
    },
    /// `‖L_channel F‖²` summed over the channel's columns.
    SquaredLieNorm {
        field: SmoothScalarField,
        system: ControlAffineSystem,
        channel: Channel,
    },
    /// `1 / F`, refusing to evaluate where `|F| < guard`.
    Reciprocal {
        field: SmoothScalarField,
        guard: f64,
    },
}

struct LinearNode {
    terms: Vec<(f64, SmoothScalarField)>,
    constant: f64,
}

impl FieldEval for LinearNode {
    fn eval(&self, x: &[f64], order: usize) -> Result<Jet> {
        let mut acc: Option<Jet> = None;
        for (w, field) in &self.terms {
            let term = field.node.eval(x, order)? * *w;
            acc = Some(match acc {
                Some(a) => a + term,
                None => term,
            });
        }
        Ok(match acc {
            Some(a) => a + self.constant,
            None => Jet::seed(x, order)[0].constant(self.constant),
        })
    }
}

struct ProductNode(SmoothScalarField, SmoothScalarField);

impl FieldEval for ProductNode {
    fn eval(&self, x: &[f64], order: usize) -> Result<Jet> {
        Ok(self.0.node.eval(x, order)? * self.1.node.eval(x, order)?)
    }
}

struct ReciprocalNode {
    field: SmoothScalarField,
    guard: f64,
}

impl FieldEval for ReciprocalNode {
    fn eval(&self, x: &[f64], order: usize) -> Result<Jet> {
        let inner = self.field.node.eval(x, order)?;
        if inner.value().abs() < self.guard {
            return Err(Error::Guard {
                value: inner.value(),
                guard: self.guard,
            });
        }
        Ok(inner.recip())
    }
}

struct LieNode {
    field: SmoothScalarField,
    system: ControlAffineSystem,
    channel: Channel,
    column: usize,
}

/// `Σ_i ∂F/∂x_i · v_i` for jets already at matching orders.
fn contract(grad_source: &Jet, direction: &[Jet]) -> Jet {
    let mut acc = grad_source.partial(0) * &direction[0];
    for (i, v) in direction.iter().enumerate().skip(1) {
        acc = acc + grad_source.partial(i) * v;
    }
    acc
}

impl FieldEval for LieNode {
    fn eval(&self, x: &[f64], order: usize) -> Result<Jet> {
        let outer = self.field.node.eval(x, order + 1)?;
        let seeds = Jet::seed(x, order);
        let cols = self.system.columns(&seeds, self.channel)?;
        Ok(contract(&outer, &cols[self.column]))
    }
}

struct SquaredLieNormNode {
    field: SmoothScalarField,
    system: ControlAffineSystem,
    channel: Channel,
}

impl FieldEval for SquaredLieNormNode {
    fn eval(&self, x: &[f64], order: usize) -> Result<Jet> {
        let outer = self.field.node.eval(x, order + 1)?;
        let seeds = Jet::seed(x, order);
        let partials: Vec<Jet> = (0..x.len()).map(|i| outer.partial(i)).collect();
        let mut acc = seeds[0].constant(0.0);
        for col in self.system.columns(&seeds, self.channel)? {
            let mut dot = &partials[0] * &col[0];
            for i in 1..x.len() {
                dot = dot + &partials[i] * &col[i];
            }
            acc = acc + dot.square();
        }
        Ok(acc)
    }
}

fn check_same_dim(a: &SmoothScalarField, n: usize) -> Result<()> {
    if a.n != n {
        return Err(Error::DimensionMismatch {
            operand: "field",
            expected: n,
            found: a.n,
        });
    }
    Ok(())
}

/// Builds a jet-evaluable field from an expression over existing fields.
pub fn derive_field(expr: FieldExpr) -> Result<SmoothScalarField> {
    match expr {
        FieldExpr::Sum(fields) => {
            let terms = fields.into_iter().map(|f| (1.0, f)).collect();
            derive_field(FieldExpr::Linear {
                terms,
                constant: 0.0,
            })
        }
        FieldExpr::Scale(w, field) => derive_field(FieldExpr::Linear {
            terms: vec![(w, field)],
            constant: 0.0,
        }),
        FieldExpr::Linear { terms, constant } => {
            let Some(first) = terms.first() else {
                return Err(Error::InvalidParameter(
                    "linear combination needs at least one field".into(),
                ));
            };
            let n = first.1.n;
            for (w, f) in &terms {
                check_same_dim(f, n)?;
                if !w.is_finite() {
                    return Err(Error::NonFinite("linear weight"));
                }
            }
            if !constant.is_finite() {
                return Err(Error::NonFinite("linear constant"));
            }
            Ok(SmoothScalarField::from_node(
                n,
                Provenance::AlgebraicComposite,
                "linear",
                Arc::new(LinearNode { terms, constant }),
            ))
        }
        FieldExpr::Product(a, b) => {
            check_same_dim(&b, a.n)?;
            let n = a.n;
            Ok(SmoothScalarField::from_node(
                n,
                Provenance::AlgebraicComposite,
                "product",
                Arc::new(ProductNode(a, b)),
            ))
        }
        FieldExpr::Reciprocal { field, guard } => {
            if !(guard > 0.0) {
                return Err(Error::InvalidParameter(
                    "reciprocal guard must be positive".into(),
                ));
            }
            let n = field.n;
            Ok(SmoothScalarField::from_node(
                n,
                Provenance::AlgebraicComposite,
                "reciprocal",
                Arc::new(ReciprocalNode { field, guard }),
            ))
        }
        FieldExpr::Lie {
            field,
            system,
            channel,
            column,
        } => {
            check_same_dim(&field, system.n)?;
            let width = system.channel_width(channel);
            if column >= width {
                return Err(Error::DimensionMismatch {
                    operand: "channel column",
                    expected: width,
                    found: column,
                });
            }
            let n = field.n;
            Ok(SmoothScalarField::from_node(
                n,
                Provenance::DerivedByDifferentiation,
                "lie",
                Arc::new(LieNode {
                    field,
                    system,
                    channel,
                    column,
                }),
            ))
        }
        FieldExpr::SquaredLieNorm {
            field,
            system,
            channel,
        } => {
            check_same_dim(&field, system.n)?;
            let n = field.n;
            Ok(SmoothScalarField::from_node(
                n,
                Provenance::DerivedByDifferentiation,
                "squared_lie_norm",
                Arc::new(SquaredLieNormNode {
                    field,
                    system,
                    channel,
                }),
            ))
        }
    }
}

fn lie_row(
    field: &SmoothScalarField,
    system: &ControlAffineSystem,
    x: &[f64],
    channel: Channel,
) -> Result<Vec<f64>> {
    if field.n != system.n {
        return Err(Error::DimensionMismatch {
            operand: "field",
            expected: system.n,
            found: field.n,
        });
    }
    let grad = field.gradient(x)?;
    let cols = system.columns(&Jet::seed(x, 0), channel)?;
    Ok(cols
        .iter()
        .map(|col| grad.iter().zip(col).map(|(g, c)| g * c.value()).sum())
        .collect())
}

/// `∇F(x) · f(x)`
pub fn lie_f(field: &SmoothScalarField, system: &ControlAffineSystem, x: &[f64]) -> Result<f64> {
    Ok(lie_row(field, system, x, Channel::Drift)?[0])
}

/// `∇F(x) · g(x)`, length `p`.
pub fn lie_g(
    field: &SmoothScalarField,
    system: &ControlAffineSystem,
    x: &[f64],
) -> Result<Vec<f64>> {
    lie_row(field, system, x, Channel::Input)
}

/// `∇F(x) · h(x)`, length `q`.
pub fn lie_h(
    field: &SmoothScalarField,
    system: &ControlAffineSystem,
    x: &[f64],
) -> Result<Vec<f64>> {
    lie_row(field, system, x, Channel::Disturbance)
}

#[derive(Debug, Clone, PartialEq)]
pub enum DegreeCondition {
    /// `L_g L_f^k b` should vanish but does not.
    InputVanishing {
        k: usize,
    },
    /// `L_g L_f^(m-1) b` should be nonzero but is not.
    InputNonzero,
    DisturbanceVanishing {
        k: usize,
    },
    DisturbanceNonzero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub condition: DegreeCondition,
    pub sample: usize,
    pub state: StateVector,
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelativeDegreeReport {
    pub ird_ok: bool,
    pub drd_ok: bool,
    /// First violation found for each failed condition family.
    pub witnesses: Vec<Witness>,
    pub checked: usize,
    /// Samples skipped because `b < 0` there.
    pub skipped: usize,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn degree_ok(
    chain: &[SmoothScalarField],
    system: &ControlAffineSystem,
    x: &[f64],
    degree: usize,
    channel: Channel,
) -> Result<Option<(DegreeCondition, f64)>> {
    for (k, level) in chain.iter().enumerate().take(degree) {
        let row = lie_row(level, system, x, channel)?;
        let nrm = norm(&row);
        let last = k + 1 == degree;
        let violated = if last {
            nrm <= RELATIVE_DEGREE_TOL
        } else {
            nrm > RELATIVE_DEGREE_TOL
        };
        if violated {
            let cond = match (channel, last) {
                (Channel::Input, false) => DegreeCondition::InputVanishing { k },
                (Channel::Input, true) => DegreeCondition::InputNonzero,
                (_, false) => DegreeCondition::DisturbanceVanishing { k },
                (_, true) => DegreeCondition::DisturbanceNonzero,
            };
            return Ok(Some((cond, nrm)));
        }
    }
    Ok(None)
}

/// Checks the declared input and disturbance relative degrees of `b` on a
/// sample of states. Samples with `b < 0` are skipped.
pub fn verify_relative_degree(
    system: &ControlAffineSystem,
    b: &SmoothScalarField,
    samples: &[StateVector],
) -> Result<RelativeDegreeReport> {
    let depth = system.ird_m.max(system.drd_r);
    let mut chain = vec![b.clone()];
    while chain.len() < depth {
        let next = chain.last().unwrap().lie(system, Channel::Drift, 0)?;
        chain.push(next);
    }

    let mut report = RelativeDegreeReport {
        ird_ok: true,
        drd_ok: true,
        witnesses: Vec::new(),
        checked: 0,
        skipped: 0,
    };
    for (idx, x) in samples.iter().enumerate() {
        if b.value(x)? < 0.0 {
            report.skipped += 1;
            continue;
        }
        report.checked += 1;
        if report.ird_ok {
            if let Some((condition, norm)) =
                degree_ok(&chain, system, x, system.ird_m, Channel::Input)?
            {
                report.ird_ok = false;
                report.witnesses.push(Witness {
                    condition,
                    sample: idx,
                    state: x.clone(),
                    norm,
                });
            }
        }
        if report.drd_ok {
            if let Some((condition, norm)) =
                degree_ok(&chain, system, x, system.drd_r, Channel::Disturbance)?
            {
                report.drd_ok = false;
                report.witnesses.push(Witness {
                    condition,
                    sample: idx,
                    state: x.clone(),
                    norm,
                });
            }
        }
    }
    Ok(report)
}
