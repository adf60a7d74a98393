//! Over-approximating intersections.
//!
//! Two primitives drive both observers:
//!
//! * [`intersect_strips`]: a zonotope intersected with a family of scalar
//!   measurement strips `{x : |h·x − y| ≤ r}`, parameterised by one gain
//!   column per strip;
//! * [`intersect_zonotopes`]: a family of zonotopes intersected through a
//!   weighted combination of their centers and generator matrices.
//!
//! Both are sound for every admissible parameter choice. The `optimal_*`
//! functions return the parameters that minimise the Frobenius norm of the
//! resulting generator matrix.

use nalgebra::{DMatrix, DVector, RowDVector, SymmetricEigen};

use crate::error::{ensure_dim, Error, Result};
use crate::zonotope::Zonotope;

/// Condition number of the gain normal matrix above which the solve falls
/// back to the pseudo-inverse.
pub const MAX_CONDITION: f64 = 1e12;

/// One scalar measurement constraint `|h·x − y| ≤ r`.
#[derive(Debug, Clone, PartialEq)]
pub struct Strip {
    h: RowDVector<f64>,
    y: f64,
    r: f64,
}

impl Strip {
    pub fn new(h: RowDVector<f64>, y: f64, r: f64) -> Result<Self> {
        if !(y.is_finite() && r.is_finite() && h.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite("strip"));
        }
        if h.iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidArgument("strip row must be nonzero".into()));
        }
        if r <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "strip half-width must be positive, got {r}"
            )));
        }
        Ok(Self { h, y, r })
    }

    pub fn h(&self) -> &RowDVector<f64> {
        &self.h
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn dim(&self) -> usize {
        self.h.len()
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        (self.h.dot(&x.transpose()) - self.y).abs() <= self.r + tol
    }
}

/// Gain columns `λʲ`, stored side by side as an `n × m` matrix `Λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct StripIntersectionGain {
    lambdas: DMatrix<f64>,
    /// Set when the closed-form solve used the pseudo-inverse.
    pub pseudo_inverse_fallback: bool,
}

impl StripIntersectionGain {
    pub fn new(lambdas: DMatrix<f64>) -> Result<Self> {
        if lambdas.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("strip gain"));
        }
        Ok(Self {
            lambdas,
            pseudo_inverse_fallback: false,
        })
    }

    pub fn zeros(n: usize, m: usize) -> Self {
        Self {
            lambdas: DMatrix::zeros(n, m),
            pseudo_inverse_fallback: false,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.lambdas
    }

    pub fn lambda(&self, j: usize) -> DVector<f64> {
        self.lambdas.column(j).into_owned()
    }

    pub fn len(&self) -> usize {
        self.lambdas.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.ncols() == 0
    }
}

/// Diffusion weights `wʲ`, one per shared zonotope. Their sum must be nonzero.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionWeights {
    w: Vec<f64>,
}

impl DiffusionWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::Empty("diffusion weights"));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("diffusion weights"));
        }
        let sum: f64 = w.iter().sum();
        let scale: f64 = w.iter().map(|v| v.abs()).sum();
        if sum == 0.0 || sum.abs() <= 1e-12 * scale {
            return Err(Error::ZeroWeightSum);
        }
        Ok(Self { w })
    }

    /// All weight on entry `index`.
    pub fn indicator(len: usize, index: usize) -> Result<Self> {
        if index >= len {
            return Err(Error::InvalidArgument(format!(
                "indicator index {index} out of range for {len} weights"
            )));
        }
        let mut w = vec![0.0; len];
        w[index] = 1.0;
        Self::new(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn sum(&self) -> f64 {
        self.w.iter().sum()
    }
}

/// Stacks the strip rows into the `m × n` matrix `Γ`.
pub fn stack_rows(strips: &[Strip], n: usize) -> Result<DMatrix<f64>> {
    let mut gamma = DMatrix::zeros(strips.len(), n);
    for (j, s) in strips.iter().enumerate() {
        ensure_dim("strip row", n, s.dim())?;
        gamma.set_row(j, s.h());
    }
    Ok(gamma)
}

fn noise_bounds(strips: &[Strip]) -> DVector<f64> {
    DVector::from_iterator(strips.len(), strips.iter().map(Strip::r))
}

fn measurements(strips: &[Strip]) -> DVector<f64> {
    DVector::from_iterator(strips.len(), strips.iter().map(Strip::y))
}

/// Zonotope enclosing `z ∩ strip₁ ∩ … ∩ stripₘ`:
///
/// `c̄ = c + Σ λʲ (yʲ − hʲ c)`,
/// `Ḡ = [(I − Σ λʲ hʲ) G, λ¹ r¹, …, λᵐ rᵐ]`.
pub fn intersect_strips(
    z: &Zonotope,
    strips: &[Strip],
    gain: &StripIntersectionGain,
) -> Result<Zonotope> {
    let n = z.dim();
    ensure_dim("strip gain count", strips.len(), gain.len())?;
    ensure_dim("strip gain rows", n, gain.matrix().nrows())?;
    let gamma = stack_rows(strips, n)?;
    let lambda = gain.matrix();

    let innovation = measurements(strips) - &gamma * z.center();
    let center = z.center() + lambda * innovation;

    let contraction = DMatrix::identity(n, n) - lambda * &gamma;
    let e = z.num_generators();
    let m = strips.len();
    let mut generators = DMatrix::zeros(n, e + m);
    generators
        .columns_mut(0, e)
        .copy_from(&(contraction * z.generators()));
    generators
        .columns_mut(e, m)
        .copy_from(&(lambda * DMatrix::from_diagonal(&noise_bounds(strips))));
    Zonotope::new(center, generators)
}

/// Solves `Λ (Γ P Γᵀ + diag(r²)) = L P Γᵀ` for `Λ`, with `P = G Gᵀ`.
///
/// This is the stationary point of
/// `‖[(L − ΛΓ) G, ±λ¹ r¹, …, ±λᵐ rᵐ]‖²_F`; the sign of the noise columns
/// does not affect the norm.
fn frobenius_optimal_gain(
    prefactor: &DMatrix<f64>,
    generators: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    r: &DVector<f64>,
) -> StripIntersectionGain {
    let p = generators * generators.transpose();
    let p_gamma_t = &p * gamma.transpose();
    let normal = gamma * &p_gamma_t + DMatrix::from_diagonal(&r.map(|v| v * v));
    let rhs = prefactor * p_gamma_t;

    let eig = SymmetricEigen::new(normal.clone());
    let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
    let well_conditioned = lo > 0.0 && hi / lo <= MAX_CONDITION;

    // Λ S = rhs  ⇔  S Λᵀ = rhsᵀ (S symmetric).
    let solved = if well_conditioned {
        normal
            .clone()
            .cholesky()
            .map(|chol| chol.solve(&rhs.transpose()).transpose())
    } else {
        None
    };
    match solved {
        Some(lambdas) => StripIntersectionGain {
            lambdas,
            pseudo_inverse_fallback: false,
        },
        None => {
            let pinv = normal
                .pseudo_inverse(f64::EPSILON * hi.max(1.0))
                .expect("epsilon is non-negative");
            StripIntersectionGain {
                lambdas: rhs * pinv,
                pseudo_inverse_fallback: true,
            }
        }
    }
}

/// Gain minimising the F-radius of [`intersect_strips`]:
/// `Λ = G Gᵀ Γᵀ (Γ G Gᵀ Γᵀ + diag(r²))⁻¹`.
///
/// A point prior (no generators) gives `Λ = 0`.
pub fn optimal_strip_gain(z: &Zonotope, strips: &[Strip]) -> Result<StripIntersectionGain> {
    if strips.is_empty() {
        return Err(Error::Empty("strips"));
    }
    let n = z.dim();
    let gamma = stack_rows(strips, n)?;
    Ok(frobenius_optimal_gain(
        &DMatrix::identity(n, n),
        z.generators(),
        &gamma,
        &noise_bounds(strips),
    ))
}

/// Observer gain minimising the F-radius of the Luenberger propagation
/// `[(F − ΛΓ) G, −λ¹ r¹, …, −λᵐ rᵐ, Q]`:
/// `Λ = F G Gᵀ Γᵀ (Γ G Gᵀ Γᵀ + diag(r²))⁻¹`.
pub fn optimal_luenberger_gain(
    transition: &DMatrix<f64>,
    z: &Zonotope,
    strips: &[Strip],
) -> Result<StripIntersectionGain> {
    if strips.is_empty() {
        return Err(Error::Empty("strips"));
    }
    let n = z.dim();
    ensure_dim("transition rows", n, transition.nrows())?;
    ensure_dim("transition columns", n, transition.ncols())?;
    let gamma = stack_rows(strips, n)?;
    Ok(frobenius_optimal_gain(
        transition,
        z.generators(),
        &gamma,
        &noise_bounds(strips),
    ))
}

/// Zonotope enclosing `Z¹ ∩ … ∩ Zᵐ`:
///
/// `c̀ = Σ wʲ cʲ / Σ w`, `G̀ = [w¹ G¹, …, wᵐ Gᵐ] / Σ w`.
///
/// Cost is `O(n · Σ eⱼ)`.
pub fn intersect_zonotopes(zs: &[Zonotope], weights: &DiffusionWeights) -> Result<Zonotope> {
    let first = zs.first().ok_or(Error::Empty("zonotopes"))?;
    ensure_dim("diffusion weight count", zs.len(), weights.as_slice().len())?;
    let n = first.dim();
    for z in zs {
        ensure_dim("diffusion operand", n, z.dim())?;
    }
    let total = weights.sum();
    let total_generators: usize = zs.iter().map(Zonotope::num_generators).sum();

    let mut center = DVector::zeros(n);
    let mut generators = DMatrix::zeros(n, total_generators);
    let mut col = 0;
    for (z, &w) in zs.iter().zip(weights.as_slice()) {
        let scale = w / total;
        center += z.center() * scale;
        let e = z.num_generators();
        generators
            .columns_mut(col, e)
            .copy_from(&(z.generators() * scale));
        col += e;
    }
    Zonotope::new(center, generators)
}

/// Weights minimising `‖G̀‖²_F = Σ βⱼ wⱼ²` subject to `Σ w = 1`, with
/// `βⱼ = tr(Gʲ Gʲᵀ)`: `wʲ = 1 / (βⱼ Σᵣ 1/βᵣ)`.
///
/// When some operands are points (`β = 0`) the weight is shared uniformly
/// among them and every other operand gets zero.
pub fn optimal_diffusion_weights(zs: &[Zonotope]) -> Result<DiffusionWeights> {
    if zs.is_empty() {
        return Err(Error::Empty("zonotopes"));
    }
    let betas: Vec<f64> = zs.iter().map(Zonotope::f_radius_squared).collect();
    let points = betas.iter().filter(|&&b| b == 0.0).count();
    let w = if points > 0 {
        betas
            .iter()
            .map(|&b| if b == 0.0 { 1.0 / points as f64 } else { 0.0 })
            .collect()
    } else {
        let inv_sum: f64 = betas.iter().map(|b| 1.0 / b).sum();
        betas.iter().map(|b| 1.0 / (b * inv_sum)).collect()
    };
    DiffusionWeights::new(w)
}
