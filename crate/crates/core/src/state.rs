//! Two-qudit states on the `d x d` product space, ordered
//! `|0,0>, |0,1>, ..., |d-1,d-1>` (Alice's index major).

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numerics::{eig_hermitian, kron_vec, norm, tensor_product, ComplexMatrix, C64};

pub const TRACE_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-10;

/// Validated density operator: Hermitian, positive semidefinite, unit trace.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    d: usize,
    m: ComplexMatrix,
}

impl DensityMatrix {
    /// Validates `m` as a density matrix on a `d x d` bipartite space.
    pub fn new(d: usize, m: ComplexMatrix) -> Result<Self> {
        if m.rows() != d * d || !m.is_square() {
            return Err(Error::DimensionMismatch {
                expected: d * d,
                actual: m.rows(),
            });
        }
        let asym = m.hermitian_asymmetry();
        if asym > crate::numerics::HERMITIAN_TOL {
            return Err(Error::InvalidDensity(format!(
                "not Hermitian (max asymmetry {asym:.3e})"
            )));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidDensity(format!("trace {tr} is not 1")));
        }
        let min = eig_hermitian(&m)?
            .eigenvalues
            .last()
            .copied()
            .unwrap_or(0.0);
        if min < -PSD_TOL {
            return Err(Error::InvalidDensity(format!(
                "not positive semidefinite (min eigenvalue {min:.3e})"
            )));
        }
        Ok(Self {
            d,
            m: m.hermitian_part(),
        })
    }

    /// Skips the eigenvalue check; used where positivity holds by construction.
    pub(crate) fn from_parts_unchecked(d: usize, m: ComplexMatrix) -> Self {
        debug_assert_eq!(m.rows(), d * d);
        Self {
            d,
            m: m.hermitian_part(),
        }
    }

    /// `|psi><psi| / <psi|psi>`
    pub fn from_pure(d: usize, psi: &[C64]) -> Result<Self> {
        if psi.len() != d * d {
            return Err(Error::DimensionMismatch {
                expected: d * d,
                actual: psi.len(),
            });
        }
        let n = norm(psi);
        if n == 0.0 || !n.is_finite() {
            return Err(Error::InvalidDensity("zero state vector".into()));
        }
        let v: Vec<C64> = psi.iter().map(|z| z / n).collect();
        Ok(Self::from_parts_unchecked(d, ComplexMatrix::outer(&v, &v)))
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self::from_parts_unchecked(
            d,
            ComplexMatrix::identity(d * d).scale_real(1.0 / (d * d) as f64),
        )
    }

    /// `rho_A (x) rho_B` from two single-qudit density matrices.
    pub fn product(rho_a: &ComplexMatrix, rho_b: &ComplexMatrix) -> Result<Self> {
        if rho_a.rows() != rho_b.rows() {
            return Err(Error::DimensionMismatch {
                expected: rho_a.rows(),
                actual: rho_b.rows(),
            });
        }
        let d = rho_a.rows();
        Self::new(d, tensor_product(rho_a, rho_b)?)
    }

    /// Convex combination `sum_m w_m rho_m`; weights are normalized.
    pub fn mixture(parts: &[(f64, &DensityMatrix)]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty mixture".into()))?;
        let d = first.1.d;
        let total: f64 = parts.iter().map(|(w, _)| *w).sum();
        if parts.iter().any(|(w, _)| *w < 0.0) || total <= 0.0 {
            return Err(Error::InvalidArgument(
                "mixture weights must be nonnegative".into(),
            ));
        }
        let mut acc = ComplexMatrix::zeros(d * d, d * d);
        for (w, rho) in parts {
            if rho.d != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: rho.d,
                });
            }
            acc = acc.add(&rho.m.scale_real(w / total))?;
        }
        Ok(Self::from_parts_unchecked(d, acc))
    }

    /// Local dimension of each party.
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.m
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.m
    }

    /// `<psi| rho |psi>` for a normalized `psi`.
    pub fn fidelity_with_pure(&self, psi: &[C64]) -> Result<f64> {
        let n = norm(psi);
        Ok(self.m.expectation(psi)?.re / (n * n))
    }

    /// Population of each product basis state `|jA, jB>`.
    pub fn populations(&self) -> Vec<f64> {
        self.m.diagonal().iter().map(|z| z.re).collect()
    }
}

/// Haar-ish random pure vector of length `n` (complex Gaussian, normalized).
pub fn random_pure_vector(n: usize, rng: &mut impl Rng) -> Vec<C64> {
    let v: Vec<C64> = (0..n)
        .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let s = norm(&v);
    v.into_iter().map(|z| z / s).collect()
}

/// Random single-qudit density matrix `G G^dagger / Tr` from a Ginibre matrix.
pub fn random_local_density(d: usize, rng: &mut impl Rng) -> ComplexMatrix {
    let g = ComplexMatrix::from_fn(d, d, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let rho = g.matmul(&g.adjoint()).expect("square");
    let tr = rho.trace().re;
    rho.scale_real(1.0 / tr).hermitian_part()
}

/// Random bipartite density matrix of full rank.
pub fn random_density(d: usize, rng: &mut impl Rng) -> DensityMatrix {
    DensityMatrix::from_parts_unchecked(d, random_local_density(d * d, rng))
}

/// Random separable state `sum_m p_m rho_A^m (x) rho_B^m` with `terms`
/// product components.
pub fn random_separable(d: usize, terms: usize, rng: &mut impl Rng) -> DensityMatrix {
    let weights: Vec<f64> = (0..terms).map(|_| rng.gen_range(0.0..1.0) + 1e-3).collect();
    let total: f64 = weights.iter().sum();
    let mut acc = ComplexMatrix::zeros(d * d, d * d);
    for w in weights {
        let a = random_local_density(d, rng);
        let b = random_local_density(d, rng);
        let prod = tensor_product(&a, &b).expect("within cap");
        acc = acc.add(&prod.scale_real(w / total)).expect("same shape");
    }
    DensityMatrix::from_parts_unchecked(d, acc)
}

/// Product pure vector `|alpha> (x) |beta>`.
pub fn product_vector(alpha: &[C64], beta: &[C64]) -> Vec<C64> {
    kron_vec(alpha, beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_bad_trace_and_negative_states() {
        let m = ComplexMatrix::identity(4);
        assert!(matches!(
            DensityMatrix::new(2, m),
            Err(Error::InvalidDensity(_))
        ));
        let neg = ComplexMatrix::from_real_diagonal(&[1.5, -0.5, 0.0, 0.0]);
        assert!(matches!(
            DensityMatrix::new(2, neg),
            Err(Error::InvalidDensity(_))
        ));
        let mut nh = ComplexMatrix::from_real_diagonal(&[0.5, 0.5, 0.0, 0.0]);
        nh.set(0, 1, C64::new(0.1, 0.0));
        assert!(matches!(
            DensityMatrix::new(2, nh),
            Err(Error::InvalidDensity(_))
        ));
    }

    #[test]
    fn random_states_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for d in 2..=5 {
            let r = random_density(d, &mut rng);
            DensityMatrix::new(d, r.matrix().clone()).unwrap();
            let s = random_separable(d, 4, &mut rng);
            DensityMatrix::new(d, s.matrix().clone()).unwrap();
        }
    }

    #[test]
    fn pure_state_fidelity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let psi = random_pure_vector(9, &mut rng);
        let rho = DensityMatrix::from_pure(3, &psi).unwrap();
        assert!((rho.fidelity_with_pure(&psi).unwrap() - 1.0).abs() < 1e-12);
        assert!((rho.matrix().trace().re - 1.0).abs() < 1e-12);
    }
}
