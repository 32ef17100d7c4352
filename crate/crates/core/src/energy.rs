//! Energy (Hamiltonian) functions used for node and edge storage.
//!
//! Two families are built in: quadratic `½ zᵀPz + bᵀz` with `P ≻ 0`, and the
//! line-coupling energy `-Σ γ_k cos z_k` which is strictly convex on the box
//! `(-π/2, π/2)^dim`. Other families plug in through [`EnergyFamily`].

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Product of open intervals `(lower_k, upper_k)`; infinite bounds allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                what: "domain bounds".into(),
                expected: lower.len(),
                found: upper.len(),
            });
        }
        for (k, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo >= hi {
                return Err(Error::InvalidEnergy(format!(
                    "empty interval ({lo}, {hi}) at coordinate {k}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn unbounded(dim: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
        }
    }

    pub fn symmetric(dim: usize, half_width: f64) -> Self {
        Self {
            lower: vec![-half_width; dim],
            upper: vec![half_width; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, z: &DVector<f64>) -> bool {
        self.check(z).is_ok()
    }

    pub fn check(&self, z: &DVector<f64>) -> Result<()> {
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "energy argument".into(),
                expected: self.dim(),
                found: z.len(),
            });
        }
        for (k, &v) in z.iter().enumerate() {
            if !(v > self.lower[k] && v < self.upper[k]) {
                return Err(Error::DomainViolation {
                    coord: k,
                    value: v,
                    lower: self.lower[k],
                    upper: self.upper[k],
                });
            }
        }
        Ok(())
    }

    /// Smallest distance from `z` to the boundary; negative outside,
    /// infinite for an unbounded box.
    pub fn margin(&self, z: &DVector<f64>) -> f64 {
        z.iter()
            .enumerate()
            .map(|(k, &v)| (v - self.lower[k]).min(self.upper[k] - v))
            .fold(f64::INFINITY, f64::min)
    }

    /// Clamps `z` into the box shrunk about its centre by `factor`. Unbounded
    /// coordinates pass through.
    pub fn project_shrunk(&self, z: &mut DVector<f64>, factor: f64) {
        for k in 0..z.len() {
            let (lo, hi) = (self.lower[k], self.upper[k]);
            let (lo, hi) = if lo.is_finite() && hi.is_finite() {
                let mid = 0.5 * (lo + hi);
                let half = 0.5 * (hi - lo) * factor;
                (mid - half, mid + half)
            } else if lo.is_finite() {
                (lo + (1.0 - factor), hi)
            } else if hi.is_finite() {
                (lo, hi - (1.0 - factor))
            } else {
                continue;
            };
            z[k] = z[k].clamp(lo, hi);
        }
    }
}

/// `sin d - d` without cancellation for small `d`.
fn sin_minus_identity(d: f64) -> f64 {
    if d.abs() < 0.1 {
        let d2 = d * d;
        // Taylor series; the next omitted term is below 1e-18 relative.
        -d * d2 / 6.0 * (1.0 - d2 / 20.0 * (1.0 - d2 / 42.0 * (1.0 - d2 / 72.0 * (1.0 - d2 / 110.0))))
    } else {
        d.sin() - d
    }
}

/// Extension point for energy families beyond the built-in two.
///
/// Implementations must be strictly convex on [`EnergyFamily::domain`] and
/// provide an exact inverse of the gradient map there.
pub trait EnergyFamily: fmt::Debug + Send + Sync {
    fn dim(&self) -> usize;
    fn domain(&self) -> DomainBox;
    fn value(&self, z: &DVector<f64>) -> f64;
    fn gradient(&self, z: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, z: &DVector<f64>) -> DMatrix<f64>;
    fn inverse_gradient(&self, w: &DVector<f64>) -> Result<DVector<f64>>;
}

#[derive(Debug, Clone)]
pub enum Family {
    Quadratic {
        p: DMatrix<f64>,
        b: DVector<f64>,
        chol: Cholesky<f64, Dyn>,
    },
    NegCosine {
        gamma: DVector<f64>,
    },
    Custom(Arc<dyn EnergyFamily>),
}

/// A strictly convex energy function on an open box.
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    family: Family,
    domain: DomainBox,
}

impl Hamiltonian {
    /// `½ zᵀPz + bᵀz` on all of space. `P` must be symmetric positive definite.
    pub fn quadratic(p: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let n = p.nrows();
        if n == 0 || p.ncols() != n {
            return Err(Error::InvalidEnergy("P must be a non-empty square matrix".into()));
        }
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                what: "quadratic offset b".into(),
                expected: n,
                found: b.len(),
            });
        }
        let asym = (&p - p.transpose()).amax();
        if asym > 1e-12 * (1.0 + p.amax()) {
            return Err(Error::InvalidEnergy(format!("P is not symmetric (asymmetry {asym:e})")));
        }
        let chol = Cholesky::new(p.clone())
            .ok_or_else(|| Error::InvalidEnergy("P is not positive definite".into()))?;
        Ok(Self {
            family: Family::Quadratic { p, b, chol },
            domain: DomainBox::unbounded(n),
        })
    }

    /// `½ zᵀ diag(p) z`.
    pub fn diagonal_quadratic(p: &[f64]) -> Result<Self> {
        Self::quadratic(
            DMatrix::from_diagonal(&DVector::from_column_slice(p)),
            DVector::zeros(p.len()),
        )
    }

    /// `-Σ γ_k cos z_k` on `(-π/2, π/2)^dim`, with every `γ_k > 0`.
    pub fn neg_cosine(gamma: DVector<f64>) -> Result<Self> {
        if gamma.is_empty() {
            return Err(Error::InvalidEnergy("γ must be non-empty".into()));
        }
        if let Some(g) = gamma.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
            return Err(Error::InvalidEnergy(format!("line weight γ = {g} must be positive")));
        }
        let dim = gamma.len();
        Ok(Self {
            family: Family::NegCosine { gamma },
            domain: DomainBox::symmetric(dim, FRAC_PI_2),
        })
    }

    pub fn custom(family: Arc<dyn EnergyFamily>) -> Self {
        let domain = family.domain();
        Self {
            family: Family::Custom(family),
            domain,
        }
    }

    /// Narrows the domain to the intersection with `domain`.
    pub fn with_domain(mut self, domain: DomainBox) -> Result<Self> {
        if domain.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "domain".into(),
                expected: self.dim(),
                found: domain.dim(),
            });
        }
        let lower = self
            .domain
            .lower
            .iter()
            .zip(domain.lower())
            .map(|(a, b)| a.max(*b))
            .collect();
        let upper = self
            .domain
            .upper
            .iter()
            .zip(domain.upper())
            .map(|(a, b)| a.min(*b))
            .collect();
        self.domain = DomainBox::new(lower, upper)?;
        Ok(self)
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn value(&self, z: &DVector<f64>) -> Result<f64> {
        self.domain.check(z)?;
        Ok(self.value_unchecked(z))
    }

    pub fn gradient(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.domain.check(z)?;
        Ok(self.gradient_unchecked(z))
    }

    pub fn hessian(&self, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.domain.check(z)?;
        Ok(match &self.family {
            Family::Quadratic { p, .. } => p.clone(),
            Family::NegCosine { gamma } => {
                DMatrix::from_diagonal(&gamma.zip_map(z, |g, v| g * v.cos()))
            }
            Family::Custom(f) => f.hessian(z),
        })
    }

    /// The unique `z` in the domain with `∇H(z) = w`.
    pub fn inverse_gradient(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        if w.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "gradient value".into(),
                expected: self.dim(),
                found: w.len(),
            });
        }
        let z = match &self.family {
            Family::Quadratic { b, chol, .. } => chol.solve(&(w - b)),
            Family::NegCosine { gamma } => {
                let mut z = DVector::zeros(w.len());
                for k in 0..w.len() {
                    let s = w[k] / gamma[k];
                    if !(s.abs() < 1.0) {
                        return Err(Error::NoPreimage { coord: k, value: w[k] });
                    }
                    z[k] = s.asin();
                }
                z
            }
            Family::Custom(f) => f.inverse_gradient(w)?,
        };
        if let Err(Error::DomainViolation { coord, .. }) = self.domain.check(&z) {
            return Err(Error::NoPreimage { coord, value: w[coord] });
        }
        Ok(z)
    }

    /// Bregman distance `H(z) - H(z̄) - ∇H(z̄)ᵀ(z - z̄)`.
    pub fn bregman(&self, z: &DVector<f64>, z_ref: &DVector<f64>) -> Result<f64> {
        self.domain.check(z)?;
        self.domain.check(z_ref)?;
        if let Family::NegCosine { gamma } = &self.family {
            // Per-coordinate form avoids cancellation between the two cosines.
            let mut acc = 0.0;
            for k in 0..z.len() {
                let (a, r) = (z[k], z_ref[k]);
                let d = a - r;
                // cos r - cos a - sin r (a - r) = 2 cos r sin²(d/2) + sin r (sin d - d)
                let half = (0.5 * d).sin();
                let term = 2.0 * r.cos() * half * half + r.sin() * sin_minus_identity(d);
                acc += gamma[k] * term;
            }
            return Ok(acc);
        }
        let diff = z - z_ref;
        Ok(self.value_unchecked(z)
            - self.value_unchecked(z_ref)
            - self.gradient_unchecked(z_ref).dot(&diff))
    }

    pub(crate) fn value_unchecked(&self, z: &DVector<f64>) -> f64 {
        match &self.family {
            Family::Quadratic { p, b, .. } => 0.5 * z.dot(&(p * z)) + b.dot(z),
            Family::NegCosine { gamma } => -gamma.iter().zip(z.iter()).map(|(g, v)| g * v.cos()).sum::<f64>(),
            Family::Custom(f) => f.value(z),
        }
    }

    pub(crate) fn gradient_unchecked(&self, z: &DVector<f64>) -> DVector<f64> {
        match &self.family {
            Family::Quadratic { p, b, .. } => p * z + b,
            Family::NegCosine { gamma } => gamma.zip_map(z, |g, v| g * v.sin()),
            Family::Custom(f) => f.gradient(z),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn central_difference(h: &Hamiltonian, z: &DVector<f64>, step: f64) -> DVector<f64> {
        DVector::from_fn(z.len(), |k, _| {
            let mut up = z.clone();
            let mut down = z.clone();
            up[k] += step;
            down[k] -= step;
            (h.value(&up).unwrap() - h.value(&down).unwrap()) / (2.0 * step)
        })
    }

    #[test]
    fn values() {
        let q = Hamiltonian::diagonal_quadratic(&[1.0, 1.0]).unwrap();
        assert_eq!(q.value(&v(&[3.0, 4.0])).unwrap(), 12.5);
        let c = Hamiltonian::neg_cosine(v(&[1.0])).unwrap();
        assert_eq!(c.value(&v(&[0.0])).unwrap(), -1.0);
        let c2 = Hamiltonian::neg_cosine(v(&[2.0])).unwrap();
        assert_relative_eq!(c2.value(&v(&[PI / 3.0])).unwrap(), -1.0, epsilon = 1e-15);
    }

    #[test]
    fn domain_violation_names_coordinate() {
        let c = Hamiltonian::neg_cosine(v(&[1.0, 1.0])).unwrap();
        match c.value(&v(&[0.0, 2.0])) {
            Err(Error::DomainViolation { coord, .. }) => assert_eq!(coord, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert!(c.gradient(&v(&[FRAC_PI_2, 0.0])).is_err());
    }

    #[test]
    fn gradients() {
        let q = Hamiltonian::diagonal_quadratic(&[2.0, 3.0]).unwrap();
        assert_eq!(q.gradient(&v(&[1.0, 1.0])).unwrap(), v(&[2.0, 3.0]));
        let c = Hamiltonian::neg_cosine(v(&[1.0, 1.0])).unwrap();
        assert_eq!(c.gradient(&v(&[0.0, 0.0])).unwrap(), v(&[0.0, 0.0]));
        let c2 = Hamiltonian::neg_cosine(v(&[2.0])).unwrap();
        assert_relative_eq!(c2.gradient(&v(&[PI / 6.0])).unwrap()[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn inverse_gradients() {
        let q = Hamiltonian::diagonal_quadratic(&[2.0, 3.0]).unwrap();
        assert_relative_eq!(q.inverse_gradient(&v(&[2.0, 3.0])).unwrap(), v(&[1.0, 1.0]), epsilon = 1e-15);
        let c2 = Hamiltonian::neg_cosine(v(&[2.0])).unwrap();
        assert_relative_eq!(c2.inverse_gradient(&v(&[1.0])).unwrap()[0], PI / 6.0, epsilon = 1e-15);
        let c1 = Hamiltonian::neg_cosine(v(&[1.0])).unwrap();
        assert!(matches!(c1.inverse_gradient(&v(&[1.5])), Err(Error::NoPreimage { coord: 0, .. })));
        assert!(matches!(c1.inverse_gradient(&v(&[1.0])), Err(Error::NoPreimage { .. })));
    }

    #[test]
    fn bregman_examples() {
        let q = Hamiltonian::diagonal_quadratic(&[1.0]).unwrap();
        assert_eq!(q.bregman(&v(&[2.0]), &v(&[0.0])).unwrap(), 2.0);
        assert_eq!(q.bregman(&v(&[0.7]), &v(&[0.7])).unwrap(), 0.0);
        let c = Hamiltonian::neg_cosine(v(&[1.0])).unwrap();
        assert_relative_eq!(
            c.bregman(&v(&[PI / 4.0]), &v(&[0.0])).unwrap(),
            1.0 - (PI / 4.0).cos(),
            epsilon = 1e-15
        );
        assert_eq!(c.bregman(&v(&[0.3]), &v(&[0.3])).unwrap(), 0.0);
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(Hamiltonian::neg_cosine(v(&[0.0])).is_err());
        assert!(Hamiltonian::neg_cosine(v(&[-1.0])).is_err());
        assert!(Hamiltonian::diagonal_quadratic(&[1.0, -1.0]).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(Hamiltonian::quadratic(asym, v(&[0.0, 0.0])).is_err());
    }

    #[test]
    fn narrowed_domain() {
        let q = Hamiltonian::diagonal_quadratic(&[1.0])
            .unwrap()
            .with_domain(DomainBox::new(vec![0.0], vec![1.0]).unwrap())
            .unwrap();
        assert!(q.value(&v(&[-0.5])).is_err());
        assert!(q.inverse_gradient(&v(&[2.0])).is_err());
        assert_eq!(q.domain().margin(&v(&[0.25])), 0.25);
    }

    fn spd(dim: usize) -> impl Strategy<Value = DMatrix<f64>> {
        proptest::collection::vec(-1.0..1.0f64, dim * dim).prop_map(move |xs| {
            let a = DMatrix::from_vec(dim, dim, xs);
            &a * a.transpose() + DMatrix::identity(dim, dim) * 0.5
        })
    }

    fn quadratic_case() -> impl Strategy<Value = (Hamiltonian, DVector<f64>, DVector<f64>, DVector<f64>)> {
        (1usize..4).prop_flat_map(|d| {
            (
                spd(d),
                proptest::collection::vec(-2.0..2.0f64, d),
                proptest::collection::vec(-2.0..2.0f64, d),
                proptest::collection::vec(-2.0..2.0f64, d),
            )
                .prop_map(|(p, b, z, r)| {
                    (Hamiltonian::quadratic(p, v(&b)).unwrap(), v(&z), v(&r), v(&b))
                })
        })
    }

    fn cosine_case() -> impl Strategy<Value = (Hamiltonian, DVector<f64>, DVector<f64>)> {
        (1usize..4).prop_flat_map(|d| {
            (
                proptest::collection::vec(0.2..5.0f64, d),
                proptest::collection::vec(-1.5..1.5f64, d),
                proptest::collection::vec(-1.5..1.5f64, d),
            )
                .prop_map(|(g, z, r)| (Hamiltonian::neg_cosine(v(&g)).unwrap(), v(&z), v(&r)))
        })
    }

    fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        (a - b).norm() / b.norm().max(1e-8)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn quadratic_gradient_matches_fd((h, z, _r, _b) in quadratic_case()) {
            let fd = central_difference(&h, &z, 1e-5);
            prop_assert!(rel_err(&h.gradient(&z).unwrap(), &fd) < 1e-6);
        }

        #[test]
        fn cosine_gradient_matches_fd((h, z, _r) in cosine_case()) {
            let fd = central_difference(&h, &z, 1e-5);
            prop_assert!(rel_err(&h.gradient(&z).unwrap(), &fd) < 1e-6);
        }

        #[test]
        fn bregman_positive((h, z, r) in cosine_case()) {
            prop_assume!((&z - &r).amax() > 1e-6);
            prop_assert!(h.bregman(&z, &r).unwrap() > 0.0);
        }

        #[test]
        fn quadratic_bregman_closed_form((h, z, r, _b) in quadratic_case()) {
            let Family::Quadratic { p, .. } = h.family() else { unreachable!() };
            let d = &z - &r;
            let closed = 0.5 * d.dot(&(p * &d));
            let scale = 1.0 + h.value(&z).unwrap().abs() + h.value(&r).unwrap().abs();
            prop_assert!((h.bregman(&z, &r).unwrap() - closed).abs() <= 1e-12 * scale);
        }

        #[test]
        fn inverse_gradient_round_trip((h, z, _r, _b) in quadratic_case()) {
            let back = h.inverse_gradient(&h.gradient(&z).unwrap()).unwrap();
            prop_assert!((&back - &z).amax() < 1e-10);
        }

        #[test]
        fn cosine_inverse_round_trip((h, z, _r) in cosine_case()) {
            let w = h.gradient(&z).unwrap();
            let back = h.inverse_gradient(&w).unwrap();
            prop_assert!((&back - &z).amax() < 1e-10);
            prop_assert!((h.gradient(&back).unwrap() - w).amax() < 1e-12);
        }
    }
}
