//! Zonotopic sets `⟨c, G⟩ = { c + G·β : β ∈ [-1, 1]^e }`.
//!
//! A zonotope is stored as its center (length `n`) and an `n × e` generator
//! matrix. `e = 0` is legal and denotes the singleton `{c}`. Minkowski sums
//! and linear maps are exact; [`Zonotope::reduce`] over-approximates.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};

/// Default absolute slack on the `β` bounds used by membership tests.
pub const DEFAULT_MEMBERSHIP_TOL: f64 = 1e-9;

/// Relative threshold below which a generator-covariance eigenvalue is
/// considered zero when determining the affine hull of a zonotope.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Zonotope {
    center: DVector<f64>,
    generators: DMatrix<f64>,
}

impl Zonotope {
    pub fn new(center: DVector<f64>, generators: DMatrix<f64>) -> Result<Self> {
        ensure_dim("zonotope generator rows", center.len(), generators.nrows())?;
        if center.iter().chain(generators.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("zonotope"));
        }
        Ok(Self { center, generators })
    }

    /// The singleton `{c}`.
    pub fn point(center: DVector<f64>) -> Self {
        let n = center.len();
        Self {
            center,
            generators: DMatrix::zeros(n, 0),
        }
    }

    /// Axis-aligned box with the given center and half-widths.
    pub fn from_box(center: DVector<f64>, half_widths: &DVector<f64>) -> Result<Self> {
        ensure_dim("box half-widths", center.len(), half_widths.len())?;
        let generators = DMatrix::from_diagonal(&half_widths.map(f64::abs));
        Self::new(center, generators)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn num_generators(&self) -> usize {
        self.generators.ncols()
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn generators(&self) -> &DMatrix<f64> {
        &self.generators
    }

    pub fn into_parts(self) -> (DVector<f64>, DMatrix<f64>) {
        (self.center, self.generators)
    }

    /// Exact Minkowski sum: `⟨c₁ + c₂, [G₁, G₂]⟩`.
    pub fn minkowski_sum(&self, other: &Zonotope) -> Result<Zonotope> {
        ensure_dim("minkowski sum", self.dim(), other.dim())?;
        let n = self.dim();
        let (e1, e2) = (self.num_generators(), other.num_generators());
        let mut generators = DMatrix::zeros(n, e1 + e2);
        generators.columns_mut(0, e1).copy_from(&self.generators);
        generators.columns_mut(e1, e2).copy_from(&other.generators);
        Ok(Zonotope {
            center: &self.center + &other.center,
            generators,
        })
    }

    /// Exact image under `x ↦ L·x`: `⟨L·c, L·G⟩`.
    pub fn linear_map(&self, map: &DMatrix<f64>) -> Result<Zonotope> {
        ensure_dim("linear map columns", self.dim(), map.ncols())?;
        Ok(Zonotope {
            center: map * &self.center,
            generators: map * &self.generators,
        })
    }

    /// Frobenius norm of the generator matrix.
    pub fn f_radius(&self) -> f64 {
        self.generators.norm()
    }

    /// Squared Frobenius norm, `tr(G·Gᵀ)`.
    pub fn f_radius_squared(&self) -> f64 {
        self.generators.norm_squared()
    }

    /// Per-axis bounds of the tightest enclosing box.
    pub fn interval_hull(&self) -> (DVector<f64>, DVector<f64>) {
        let spread = self.row_abs_sums();
        (&self.center - &spread, &self.center + &spread)
    }

    fn row_abs_sums(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.generators
                .row_iter()
                .map(|row| row.iter().map(|v| v.abs()).sum::<f64>()),
        )
    }

    /// Girard-style order reduction to at most `q` generators.
    ///
    /// The `q - n` generators with the largest `‖g‖₁ − ‖g‖∞` are kept (fewer
    /// when a tie straddles the cut); the remaining ones are enclosed in their
    /// axis-aligned box, contributing `n` diagonal generators. The result
    /// always contains `self`.
    pub fn reduce(&self, q: usize) -> Result<Zonotope> {
        let n = self.dim();
        if q < n {
            return Err(Error::InvalidArgument(format!(
                "reduction order {q} is smaller than the dimension {n}"
            )));
        }
        if self.num_generators() <= q {
            return Ok(self.clone());
        }

        let nonzero: Vec<usize> = (0..self.num_generators())
            .filter(|&j| self.generators.column(j).iter().any(|&v| v != 0.0))
            .collect();
        if nonzero.len() <= q {
            return Ok(Zonotope {
                center: self.center.clone(),
                generators: self.generators.select_columns(&nonzero),
            });
        }

        let score = |j: usize| {
            let col = self.generators.column(j);
            col.lp_norm(1) - col.amax()
        };
        let mut order: Vec<(f64, usize)> = nonzero.iter().map(|&j| (score(j), j)).collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        // A tie straddling the cut is boxed as a whole, so the result does not
        // depend on column order.
        let mut n_boxed = order.len() - (q - n);
        let cut = order[n_boxed - 1].0;
        while n_boxed < order.len() && order[n_boxed].0 <= cut + 1e-12 * cut.abs() {
            n_boxed += 1;
        }
        let mut boxed = DVector::zeros(n);
        for &(_, j) in &order[..n_boxed] {
            boxed += self.generators.column(j).abs();
        }
        let mut kept: Vec<usize> = order[n_boxed..].iter().map(|&(_, j)| j).collect();
        kept.sort_unstable();

        let box_axes: Vec<usize> = (0..n).filter(|&i| boxed[i] != 0.0).collect();
        let mut generators = DMatrix::zeros(n, kept.len() + box_axes.len());
        for (col, &j) in kept.iter().enumerate() {
            generators.set_column(col, &self.generators.column(j));
        }
        for (offset, &i) in box_axes.iter().enumerate() {
            generators[(i, kept.len() + offset)] = boxed[i];
        }
        Ok(Zonotope {
            center: self.center.clone(),
            generators,
        })
    }

    /// Membership test: is there a `β ∈ [-1-tol, 1+tol]^e` with `c + Gβ = x`?
    ///
    /// Decided exactly through the zonotope gauge
    /// `min { ‖β‖∞ : Gβ = x − c }`, evaluated by its dual: the maximum of
    /// `|aᵀ(x − c)| / Σⱼ |aᵀgⱼ|` over facet normals `a`. Offsets leaving the
    /// affine hull of a degenerate zonotope are tolerated up to `tol` in
    /// Euclidean norm.
    pub fn contains_point(&self, x: &DVector<f64>, tol: f64) -> Result<bool> {
        ensure_dim("membership point", self.dim(), x.len())?;
        let offset = x - &self.center;
        let spread = self.row_abs_sums();
        let slack = 1.0 + tol;
        if offset
            .iter()
            .zip(spread.iter())
            .any(|(d, s)| d.abs() > slack * s + tol)
        {
            return Ok(false);
        }
        Ok(self.gauge(&offset, tol) <= slack)
    }

    /// Smallest `‖β‖∞` with `Gβ = offset`, or `+∞` when `offset` leaves the
    /// span of the generators by more than `tol`.
    pub fn gauge(&self, offset: &DVector<f64>, tol: f64) -> f64 {
        let n = self.dim();
        let cols: Vec<usize> = (0..self.num_generators())
            .filter(|&j| self.generators.column(j).iter().any(|&v| v != 0.0))
            .collect();
        if cols.is_empty() {
            return if offset.norm() <= tol { 0.0 } else { f64::INFINITY };
        }
        let gens = self.generators.select_columns(&cols);

        let cov = &gens * gens.transpose();
        let eig = SymmetricEigen::new(cov);
        let max_eig = eig.eigenvalues.max();
        let range: Vec<usize> = (0..n)
            .filter(|&i| eig.eigenvalues[i] > RANK_TOL * max_eig)
            .collect();

        let (gens, offset) = if range.len() == n {
            (gens, offset.clone())
        } else {
            let basis = eig.eigenvectors.select_columns(&range);
            let projected = basis.transpose() * offset;
            let residual = offset - &basis * &projected;
            if residual.norm() > tol {
                return f64::INFINITY;
            }
            (basis.transpose() * gens, projected)
        };

        let mut best = 0.0_f64;
        for_each_facet_normal(&gens, |normal| {
            let support: f64 = gens.column_iter().map(|g| normal.dot(&g).abs()).sum();
            if support > 0.0 {
                best = best.max(normal.dot(&offset).abs() / support);
            }
        });
        best
    }

    /// Counter-clockwise vertices of a 2-dimensional zonotope.
    ///
    /// Parallel generators are merged before the angular walk. A rank-one
    /// zonotope yields its two segment endpoints; a point yields the center.
    pub fn vertices_2d(&self) -> Result<Vec<[f64; 2]>> {
        if self.dim() != 2 {
            return Err(Error::NotPlanar(self.dim()));
        }
        let scale = self
            .generators
            .column_iter()
            .map(|g| g.norm())
            .fold(0.0_f64, f64::max);
        let mut gens: Vec<[f64; 2]> = self
            .generators
            .column_iter()
            .filter(|g| g.norm() > 1e-14 * scale)
            .map(|g| {
                let (x, y) = (g[0], g[1]);
                if y < 0.0 || (y == 0.0 && x < 0.0) {
                    [-x, -y]
                } else {
                    [x, y]
                }
            })
            .collect();
        let (cx, cy) = (self.center[0], self.center[1]);
        if gens.is_empty() {
            return Ok(vec![[cx, cy]]);
        }
        gens.sort_by(|a, b| a[1].atan2(a[0]).total_cmp(&b[1].atan2(b[0])));

        let parallel = |a: &[f64; 2], b: &[f64; 2]| {
            let cross = a[0] * b[1] - a[1] * b[0];
            cross.abs() <= 1e-12 * a[0].hypot(a[1]) * b[0].hypot(b[1])
        };
        let mut merged: Vec<[f64; 2]> = Vec::with_capacity(gens.len());
        for g in gens {
            match merged.last_mut() {
                Some(last) if parallel(last, &g) => {
                    last[0] += g[0];
                    last[1] += g[1];
                }
                _ => merged.push(g),
            }
        }
        // Directions just below π are antiparallel to directions at 0.
        if merged.len() > 1 && parallel(&merged[0], &merged[merged.len() - 1]) {
            let last = merged.pop().expect("len > 1");
            let sign = if merged[0][0] * last[0] + merged[0][1] * last[1] < 0.0 {
                -1.0
            } else {
                1.0
            };
            merged[0][0] += sign * last[0];
            merged[0][1] += sign * last[1];
        }

        let (sx, sy) = merged
            .iter()
            .fold((0.0, 0.0), |(sx, sy), g| (sx + g[0], sy + g[1]));
        if merged.len() == 1 {
            return Ok(vec![[cx - sx, cy - sy], [cx + sx, cy + sy]]);
        }
        let mut vertices = Vec::with_capacity(2 * merged.len());
        let mut v = [cx - sx, cy - sy];
        for g in &merged {
            vertices.push(v);
            v = [v[0] + 2.0 * g[0], v[1] + 2.0 * g[1]];
        }
        for g in &merged {
            vertices.push(v);
            v = [v[0] - 2.0 * g[0], v[1] - 2.0 * g[1]];
        }
        Ok(vertices)
    }
}

/// Calls `visit` with the normal of every hyperplane spanned by `r - 1`
/// linearly independent columns of the full-row-rank `r × e` matrix `gens`.
fn for_each_facet_normal(gens: &DMatrix<f64>, mut visit: impl FnMut(&DVector<f64>)) {
    let r = gens.nrows();
    let e = gens.ncols();
    match r {
        0 => {}
        1 => visit(&DVector::from_element(1, 1.0)),
        2 => {
            for g in gens.column_iter() {
                visit(&DVector::from_vec(vec![-g[1], g[0]]));
            }
        }
        3 => {
            for a in 0..e {
                for b in a + 1..e {
                    let normal = gens.column(a).cross(&gens.column(b));
                    let scale = gens.column(a).norm() * gens.column(b).norm();
                    if normal.norm() > 1e-12 * scale {
                        visit(&normal.into_owned());
                    }
                }
            }
        }
        _ => {
            let mut subset = Vec::with_capacity(r - 1);
            combinations(e, r - 1, 0, &mut subset, &mut |subset| {
                let rows = gens.select_columns(subset).transpose();
                let normal = DVector::from_iterator(
                    r,
                    (0..r).map(|i| {
                        let minor = rows.clone().remove_column(i);
                        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                        sign * minor.determinant()
                    }),
                );
                let scale: f64 = subset.iter().map(|&j| gens.column(j).norm()).product();
                if normal.norm() > 1e-12 * scale {
                    visit(&normal);
                }
            });
        }
    }
}

fn combinations(
    n: usize,
    k: usize,
    start: usize,
    current: &mut Vec<usize>,
    visit: &mut impl FnMut(&[usize]),
) {
    if current.len() == k {
        visit(current);
        return;
    }
    for i in start..n {
        if n - i < k - current.len() {
            break;
        }
        current.push(i);
        combinations(n, k, i + 1, current, visit);
        current.pop();
    }
}

/// Wire form: `{"center": [...], "generators": [[row 0], [row 1], ...]}`,
/// generators row-major (`n` rows of `e` entries).
#[derive(Serialize, Deserialize)]
struct ZonotopeRepr {
    center: Vec<f64>,
    generators: Vec<Vec<f64>>,
}

impl Serialize for Zonotope {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        ZonotopeRepr {
            center: self.center.iter().copied().collect(),
            generators: self
                .generators
                .row_iter()
                .map(|row| row.iter().copied().collect())
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Zonotope {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = ZonotopeRepr::deserialize(deserializer)?;
        let n = repr.center.len();
        if repr.generators.len() != n {
            return Err(D::Error::custom(format!(
                "expected {n} generator rows, found {}",
                repr.generators.len()
            )));
        }
        let e = repr.generators.first().map_or(0, Vec::len);
        if repr.generators.iter().any(|row| row.len() != e) {
            return Err(D::Error::custom("ragged generator rows"));
        }
        let generators = DMatrix::from_fn(n, e, |i, j| repr.generators[i][j]);
        Zonotope::new(DVector::from_vec(repr.center), generators).map_err(D::Error::custom)
    }
}
