//! Dirichlet sine basis, spectral states, and fractional-power norms.
//!
//! Everything downstream works in coefficient space for the eigenbasis of
//! `A = -d^2/dx^2` on `(0, L)` with zero boundary values:
//!
//! ```text
//! e_k(x) = sqrt(2/L) sin(k pi x / L),     lambda_k = (k pi / L)^2,   k = 1..m
//! ```
//!
//! The basis is orthonormal in L^2(0, L), so a truncated state is just its
//! coefficient vector `u = (u_1, ..., u_m)` and fractional powers of `A` are
//! diagonal:
//!
//! ```text
//! ||u||_alpha = ( sum_k lambda_k^(2 alpha) u_k^2 )^(1/2)
//! ```
//!
//! with `alpha = 0` the plain L^2 norm, `alpha = 1/2` the H^1_0 energy norm
//! and `alpha = -1/2` the dual norm the delayed term is measured in.
//!
//! Grid transforms use the collocation nodes `x_j = j L / (m+1)`, `j = 1..m`.
//! The discrete orthogonality
//!
//! ```text
//! sum_{j=1..m} sin(k pi j/(m+1)) sin(l pi j/(m+1)) = (m+1)/2 delta_kl
//! ```
//!
//! makes `from_grid` with quadrature weight `L/(m+1)` the exact inverse of
//! `to_grid`: the round trip is lossless up to rounding, and the same weight
//! turns pointwise products into L^2 inner products. Nonlinearities are
//! evaluated pseudo-spectrally through this pair.

use crate::error::{Error, Result};

/// Truncated eigenbasis of the Dirichlet Laplacian on `(0, L)`.
///
/// Holds the eigenvalues and a precomputed sine table so the grid transforms
/// are plain dense mat-vecs with no trigonometry in the hot path.
#[derive(Debug, Clone)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    length: f64,
    /// `sines[(k-1) * m + (j-1)] = sin(k pi j / (m+1))`, without normalization.
    sines: Vec<f64>,
}

impl Spectrum {
    /// Builds the first `m` Dirichlet sine modes on a domain of length `length`.
    pub fn dirichlet(m: usize, length: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidDiscretization(
                "mode count m must be at least 1".into(),
            ));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidDiscretization(format!(
                "domain length must be finite and positive, got {length}"
            )));
        }
        let eigenvalues = (1..=m)
            .map(|k| {
                let w = k as f64 * std::f64::consts::PI / length;
                w * w
            })
            .collect();
        let mut sines = vec![0.0; m * m];
        let step = std::f64::consts::PI / (m as f64 + 1.0);
        for k in 1..=m {
            for j in 1..=m {
                sines[(k - 1) * m + (j - 1)] = (k as f64 * j as f64 * step).sin();
            }
        }
        Ok(Self {
            eigenvalues,
            length,
            sines,
        })
    }

    /// Number of retained modes.
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Domain length `L`.
    pub fn length(&self) -> f64 {
        self.length
    }

    /// Eigenvalues `lambda_1 <= ... <= lambda_m`, one per mode.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Smallest eigenvalue `lambda_1`; the spectral gap of `A`.
    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// Collocation nodes `x_j = j L / (m+1)`, `j = 1..m`.
    pub fn nodes(&self) -> Vec<f64> {
        let m = self.len();
        (1..=m)
            .map(|j| j as f64 * self.length / (m as f64 + 1.0))
            .collect()
    }

    fn check_order(&self, u: &SpectralState) -> Result<()> {
        if u.order() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: u.order(),
            });
        }
        Ok(())
    }

    /// `||u||_alpha = (sum_k lambda_k^(2 alpha) u_k^2)^(1/2)`.
    pub fn frac_norm(&self, u: &SpectralState, alpha: f64) -> Result<f64> {
        self.check_order(u)?;
        if alpha == 0.0 {
            return Ok(u.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt());
        }
        let sum: f64 = self
            .eigenvalues
            .iter()
            .zip(&u.coeffs)
            .map(|(&lam, &c)| lam.powf(2.0 * alpha) * c * c)
            .sum();
        Ok(sum.sqrt())
    }

    /// Applies `A^p` diagonally: the k-th coefficient is scaled by `lambda_k^p`.
    pub fn apply_power(&self, u: &SpectralState, p: f64) -> Result<SpectralState> {
        self.check_order(u)?;
        let coeffs = if p == 1.0 {
            self.eigenvalues
                .iter()
                .zip(&u.coeffs)
                .map(|(&lam, &c)| lam * c)
                .collect()
        } else {
            self.eigenvalues
                .iter()
                .zip(&u.coeffs)
                .map(|(&lam, &c)| lam.powf(p) * c)
                .collect()
        };
        Ok(SpectralState::new(coeffs, u.time))
    }

    /// L^2 inner product of two coefficient vectors.
    pub fn inner(&self, u: &SpectralState, v: &SpectralState) -> Result<f64> {
        self.check_order(u)?;
        self.check_order(v)?;
        Ok(u.coeffs.iter().zip(&v.coeffs).map(|(a, b)| a * b).sum())
    }

    /// Evaluates `u` at the collocation nodes.
    pub fn to_grid(&self, u: &SpectralState) -> Result<GridState> {
        self.check_order(u)?;
        let m = self.len();
        let norm = (2.0 / self.length).sqrt();
        let mut values = vec![0.0; m];
        for (k, &c) in u.coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let row = &self.sines[k * m..(k + 1) * m];
            for (v, &s) in values.iter_mut().zip(row) {
                *v += c * s;
            }
        }
        for v in &mut values {
            *v *= norm;
        }
        Ok(GridState { values })
    }

    /// Recovers coefficients from nodal values with the quadrature weight
    /// `L/(m+1)`; exact inverse of [`Spectrum::to_grid`].
    ///
    /// The returned state carries time 0; callers restamp it when the time
    /// matters.
    pub fn from_grid(&self, g: &GridState) -> Result<SpectralState> {
        let m = self.len();
        if g.values.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: g.values.len(),
            });
        }
        // w * sqrt(2/L) = sqrt(2 L) / (m+1)
        let factor = (2.0 * self.length).sqrt() / (m as f64 + 1.0);
        let coeffs = (0..m)
            .map(|k| {
                let row = &self.sines[k * m..(k + 1) * m];
                let s: f64 = row.iter().zip(&g.values).map(|(&a, &b)| a * b).sum();
                factor * s
            })
            .collect();
        Ok(SpectralState::new(coeffs, 0.0))
    }

    /// Quadrature approximation of the L^2 inner product from nodal values.
    pub fn grid_inner(&self, a: &GridState, b: &GridState) -> Result<f64> {
        let m = self.len();
        if a.values.len() != m || b.values.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: a.values.len().max(b.values.len()),
            });
        }
        let w = self.length / (m as f64 + 1.0);
        Ok(w * a
            .values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| x * y)
            .sum::<f64>())
    }
}

/// Coefficient vector of a truncated state together with its timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralState {
    pub coeffs: Vec<f64>,
    pub time: f64,
}

impl SpectralState {
    pub fn new(coeffs: Vec<f64>, time: f64) -> Self {
        Self { coeffs, time }
    }

    /// The zero state with `m` modes.
    pub fn zero(m: usize, time: f64) -> Self {
        Self::new(vec![0.0; m], time)
    }

    /// `amplitude * e_k` (1-based mode index) in an `m`-mode truncation.
    pub fn mode(k: usize, amplitude: f64, m: usize, time: f64) -> Self {
        assert!(k >= 1 && k <= m, "mode index {k} outside 1..={m}");
        let mut coeffs = vec![0.0; m];
        coeffs[k - 1] = amplitude;
        Self::new(coeffs, time)
    }

    /// Number of modes.
    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    pub fn at_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    /// True when every coefficient is finite.
    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    /// Orthogonal projection onto the first `m_target` modes, returned in an
    /// `m_target`-mode representation (truncates or zero-pads as needed).
    pub fn project(&self, m_target: usize) -> SpectralState {
        let mut coeffs = vec![0.0; m_target];
        let n = m_target.min(self.coeffs.len());
        coeffs[..n].copy_from_slice(&self.coeffs[..n]);
        SpectralState::new(coeffs, self.time)
    }

    /// Componentwise `self - other`; keeps `self`'s timestamp.
    pub fn sub(&self, other: &SpectralState) -> SpectralState {
        debug_assert_eq!(self.order(), other.order());
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a - b)
            .collect();
        SpectralState::new(coeffs, self.time)
    }

    /// Componentwise `self + factor * other`; keeps `self`'s timestamp.
    pub fn add_scaled(&self, other: &SpectralState, factor: f64) -> SpectralState {
        debug_assert_eq!(self.order(), other.order());
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a + factor * b)
            .collect();
        SpectralState::new(coeffs, self.time)
    }

    pub fn scaled(&self, factor: f64) -> SpectralState {
        let coeffs = self.coeffs.iter().map(|c| factor * c).collect();
        SpectralState::new(coeffs, self.time)
    }

    /// Plain Euclidean norm of the coefficients (`||.||_0`).
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

/// Nodal values at the collocation points, the pseudo-spectral side of a state.
#[derive(Debug, Clone, PartialEq)]
pub struct GridState {
    pub values: Vec<f64>,
}

impl GridState {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Applies a scalar function at every node.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridState {
        GridState {
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}
