//! Elasticity tensors in Voigt storage, symmetric strain matrices, and the
//! constant strain basis `M^{ab}` used to pose the cell problems.
//!
//! Strains are stored in engineering Voigt order
//! `(S11, S22, S33, 2 S23, 2 S13, 2 S12)` so that the quadratic form
//! `a_ijkl S_ij S_kl` is a plain inner product `s . (D s)`. Stresses come
//! back as `(s11, s22, s33, s23, s13, s12)` without doubling.

use nalgebra::{Matrix3, Matrix6, SymmetricEigen, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Voigt slot of the symmetric index pair `(i, j)`, zero based.
#[inline]
pub fn voigt_index(i: usize, j: usize) -> usize {
    match (i.min(j), i.max(j)) {
        (0, 0) => 0,
        (1, 1) => 1,
        (2, 2) => 2,
        (1, 2) => 3,
        (0, 2) => 4,
        (0, 1) => 5,
        _ => panic!("index pair ({i}, {j}) out of range"),
    }
}

/// Symmetric 3x3 matrix stored as its upper triangle in Voigt order
/// `[s11, s22, s33, s23, s13, s12]` (tensor components, no doubling).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SymMat3(pub [f64; 6]);

impl SymMat3 {
    pub const ZERO: SymMat3 = SymMat3([0.0; 6]);

    pub fn identity() -> Self {
        SymMat3([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])
    }

    /// Symmetric part of an arbitrary 3x3 matrix.
    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        let s = 0.5 * (m + m.transpose());
        SymMat3([s[(0, 0)], s[(1, 1)], s[(2, 2)], s[(1, 2)], s[(0, 2)], s[(0, 1)]])
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        let [a, b, c, d, e, f] = self.0;
        Matrix3::new(a, f, e, f, b, d, e, d, c)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[voigt_index(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.0[0] + self.0[1] + self.0[2]
    }

    /// Full contraction `S : T = S_ij T_ij`.
    pub fn ddot(&self, other: &SymMat3) -> f64 {
        let a = &self.0;
        let b = &other.0;
        a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + 2.0 * (a[3] * b[3] + a[4] * b[4] + a[5] * b[5])
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.ddot(self)
    }

    pub fn scale(&self, k: f64) -> SymMat3 {
        SymMat3(self.0.map(|v| k * v))
    }

    pub fn add(&self, other: &SymMat3) -> SymMat3 {
        let mut out = self.0;
        for (o, b) in out.iter_mut().zip(other.0) {
            *o += b;
        }
        SymMat3(out)
    }

    /// Engineering Voigt strain vector (shear slots doubled).
    pub fn to_strain_voigt(&self) -> Vector6<f64> {
        let [a, b, c, d, e, f] = self.0;
        Vector6::new(a, b, c, 2.0 * d, 2.0 * e, 2.0 * f)
    }

    pub fn from_strain_voigt(v: &Vector6<f64>) -> Self {
        SymMat3([v[0], v[1], v[2], 0.5 * v[3], 0.5 * v[4], 0.5 * v[5]])
    }

    /// Stress Voigt vector (no doubling) back to a symmetric matrix.
    pub fn from_stress_voigt(v: &Vector6<f64>) -> Self {
        SymMat3([v[0], v[1], v[2], v[3], v[4], v[5]])
    }
}

/// Symmetric 2x2 matrix `[s11, s22, s12]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SymMat2(pub [f64; 3]);

impl SymMat2 {
    pub const ZERO: SymMat2 = SymMat2([0.0; 3]);

    pub fn new(s11: f64, s22: f64, s12: f64) -> Self {
        SymMat2([s11, s22, s12])
    }

    pub fn ddot(&self, other: &SymMat2) -> f64 {
        let a = &self.0;
        let b = &other.0;
        a[0] * b[0] + a[1] * b[1] + 2.0 * a[2] * b[2]
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.ddot(self)
    }

    /// In-plane embedding into a 3x3 symmetric matrix.
    pub fn embed(&self) -> SymMat3 {
        SymMat3([self.0[0], self.0[1], 0.0, 0.0, 0.0, self.0[2]])
    }
}

/// Labels of the six constant basis strains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BasisIndex {
    M11,
    M22,
    M33,
    M23,
    M13,
    M12,
}

impl BasisIndex {
    /// Ordering used by every 6-slot matrix-phase quantity.
    pub const FULL: [BasisIndex; 6] = [
        BasisIndex::M11,
        BasisIndex::M22,
        BasisIndex::M33,
        BasisIndex::M23,
        BasisIndex::M13,
        BasisIndex::M12,
    ];

    /// In-plane ordering `(11, 22, 12)` used by the frame tensors.
    pub const MEMBRANE: [BasisIndex; 3] = [BasisIndex::M11, BasisIndex::M22, BasisIndex::M12];

    pub fn label(self) -> &'static str {
        match self {
            BasisIndex::M11 => "11",
            BasisIndex::M22 => "22",
            BasisIndex::M33 => "33",
            BasisIndex::M23 => "23",
            BasisIndex::M13 => "13",
            BasisIndex::M12 => "12",
        }
    }
}

/// The constant symmetric matrices `M^{11}, M^{22}, M^{12}, M^{13}, M^{23}, M^{33}`.
///
/// Off-diagonal members carry a 1 in both mirrored slots, so a symmetric
/// strain decomposes as `S = sum_k s_k M^k` with `s` its upper-triangle
/// tensor components.
#[derive(Debug, Clone, Copy, Default)]
pub struct StrainBasis;

impl StrainBasis {
    pub fn matrix(&self, k: BasisIndex) -> SymMat3 {
        let mut v = [0.0; 6];
        let slot = match k {
            BasisIndex::M11 => 0,
            BasisIndex::M22 => 1,
            BasisIndex::M33 => 2,
            BasisIndex::M23 => 3,
            BasisIndex::M13 => 4,
            BasisIndex::M12 => 5,
        };
        v[slot] = 1.0;
        SymMat3(v)
    }

    pub fn membrane(&self) -> [SymMat3; 3] {
        BasisIndex::MEMBRANE.map(|k| self.matrix(k))
    }

    pub fn full(&self) -> [SymMat3; 6] {
        BasisIndex::FULL.map(|k| self.matrix(k))
    }
}

/// Fourth-order Hooke tensor with major and minor symmetries, kept in 6x6
/// engineering Voigt form together with its coercivity constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HookeTensor {
    voigt: [[f64; 6]; 6],
    c0: f64,
}

impl HookeTensor {
    /// Build from a full 6x6 Voigt matrix. The matrix must be symmetric and
    /// positive definite in the strain-energy sense.
    pub fn from_voigt(rows: [[f64; 6]; 6]) -> Result<Self> {
        let m = Matrix6::from_fn(|i, j| rows[i][j]);
        let scale = m.abs().max().max(f64::MIN_POSITIVE);
        for i in 0..6 {
            for j in (i + 1)..6 {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidMaterial(format!(
                        "Voigt matrix not symmetric at ({i}, {j}): {} vs {}",
                        m[(i, j)],
                        m[(j, i)]
                    )));
                }
            }
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMaterial("non-finite Voigt entry".into()));
        }
        let sym = 0.5 * (m + m.transpose());
        let c0 = min_mandel_eigenvalue(&sym);
        if c0 <= 0.0 {
            return Err(Error::InvalidMaterial(format!(
                "Voigt matrix is not positive definite (smallest eigenvalue {c0:.6e})"
            )));
        }
        let mut voigt = [[0.0; 6]; 6];
        for (i, row) in voigt.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = sym[(i, j)];
            }
        }
        Ok(HookeTensor { voigt, c0 })
    }

    pub fn voigt(&self) -> &[[f64; 6]; 6] {
        &self.voigt
    }

    pub fn voigt_matrix(&self) -> Matrix6<f64> {
        Matrix6::from_fn(|i, j| self.voigt[i][j])
    }

    /// Coercivity constant: `quad(S) >= c0 |S|_F^2` for every symmetric `S`.
    pub fn c0(&self) -> f64 {
        self.c0
    }

    /// Full-index component `a_ijkl` (zero based indices).
    pub fn component(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.voigt[voigt_index(i, j)][voigt_index(k, l)]
    }

    /// Stored-energy quadratic form `a_ijkl S_ij S_kl`.
    pub fn quad(&self, s: &SymMat3) -> f64 {
        let v = s.to_strain_voigt();
        let mut acc = 0.0;
        for i in 0..6 {
            let mut row = 0.0;
            for j in 0..6 {
                row += self.voigt[i][j] * v[j];
            }
            acc += v[i] * row;
        }
        acc
    }

    /// Stress `a : S`.
    pub fn apply(&self, s: &SymMat3) -> SymMat3 {
        let v = s.to_strain_voigt();
        let out = Vector6::from_fn(|i, _| (0..6).map(|j| self.voigt[i][j] * v[j]).sum());
        SymMat3::from_stress_voigt(&out)
    }

    /// Whether the tensor has the isotropic structure
    /// `lambda delta_ij delta_kl + mu (delta_ik delta_jl + delta_il delta_jk)`.
    pub fn is_isotropic(&self, rel_tol: f64) -> bool {
        let d = &self.voigt;
        let lambda = d[0][1];
        let mu = d[3][3];
        let iso = isotropic_voigt(lambda, mu);
        let scale = d.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        d.iter()
            .flatten()
            .zip(iso.iter().flatten())
            .all(|(a, b)| (a - b).abs() <= rel_tol * scale)
    }
}

fn isotropic_voigt(lambda: f64, mu: f64) -> [[f64; 6]; 6] {
    let mut d = [[0.0; 6]; 6];
    for (i, row) in d.iter_mut().enumerate().take(3) {
        for (j, v) in row.iter_mut().enumerate().take(3) {
            *v = lambda + if i == j { 2.0 * mu } else { 0.0 };
        }
    }
    for (i, row) in d.iter_mut().enumerate().skip(3) {
        row[i] = mu;
    }
    d
}

/// Smallest eigenvalue of the Voigt matrix in Mandel scaling, i.e. the best
/// constant in `quad(S) >= c |S|_F^2`.
fn min_mandel_eigenvalue(d: &Matrix6<f64>) -> f64 {
    let r2 = std::f64::consts::SQRT_2;
    let w = Vector6::new(1.0, 1.0, 1.0, r2, r2, r2);
    let mandel = Matrix6::from_fn(|i, j| w[i] * d[(i, j)] * w[j]);
    SymmetricEigen::new(mandel).eigenvalues.min()
}

/// Isotropic tensor from the Lame constants.
///
/// `mu` must be positive. Negative `lambda` is accepted as long as the bulk
/// modulus stays positive (`3 lambda + 2 mu > 0`), with a warning.
pub fn isotropic_hooke(lambda: f64, mu: f64) -> Result<HookeTensor> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::InvalidMaterial(format!("shear modulus mu must be positive, got {mu}")));
    }
    if !lambda.is_finite() {
        return Err(Error::InvalidMaterial(format!("lambda must be finite, got {lambda}")));
    }
    if lambda < 0.0 {
        if 3.0 * lambda + 2.0 * mu <= 0.0 {
            return Err(Error::InvalidMaterial(format!(
                "bulk positivity 3 lambda + 2 mu > 0 violated (lambda = {lambda}, mu = {mu})"
            )));
        }
        log::warn!("negative lambda = {lambda} accepted since 3 lambda + 2 mu > 0");
    }
    HookeTensor::from_voigt(isotropic_voigt(lambda, mu))
}
