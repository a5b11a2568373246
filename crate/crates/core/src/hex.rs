//! Trilinear 8-node brick on an axis-aligned box with 2x2x2 Gauss quadrature.
//!
//! Local node `a + 2b + 4c` sits at `(a h1, b h2, c h3)`. Local DOF `3n + i`
//! is component `i` of node `n`.

use nalgebra::{SMatrix, SVector, Vector6};

pub type ElementMatrix = SMatrix<f64, 24, 24>;
pub type ElementVector = SVector<f64, 24>;
/// Engineering-strain operator at one quadrature point.
pub type StrainOperator = SMatrix<f64, 6, 24>;

#[derive(Debug, Clone)]
pub struct GaussPoint {
    /// Offset from the element's lower corner.
    pub local: [f64; 3],
    pub shape: [f64; 8],
    pub strain: StrainOperator,
    /// Quadrature weight times Jacobian determinant.
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct HexElement {
    pub spacing: [f64; 3],
    pub points: Vec<GaussPoint>,
}

impl HexElement {
    pub fn new(spacing: [f64; 3]) -> Self {
        let g = 0.5 / 3f64.sqrt();
        let abscissae = [0.5 - g, 0.5 + g];
        let [h1, h2, h3] = spacing;
        let weight = h1 * h2 * h3 / 8.0;
        let mut points = Vec::with_capacity(8);
        for &t3 in &abscissae {
            for &t2 in &abscissae {
                for &t1 in &abscissae {
                    let t = [t1, t2, t3];
                    let mut shape = [0.0; 8];
                    let mut grad = [[0.0; 3]; 8];
                    for n in 0..8 {
                        let corner = [n & 1, (n >> 1) & 1, (n >> 2) & 1];
                        let f: [f64; 3] =
                            std::array::from_fn(|d| if corner[d] == 1 { t[d] } else { 1.0 - t[d] });
                        let df: [f64; 3] = std::array::from_fn(|d| {
                            let s = if corner[d] == 1 { 1.0 } else { -1.0 };
                            s / spacing[d]
                        });
                        shape[n] = f[0] * f[1] * f[2];
                        grad[n] = [df[0] * f[1] * f[2], f[0] * df[1] * f[2], f[0] * f[1] * df[2]];
                    }
                    let mut strain = StrainOperator::zeros();
                    for (n, g) in grad.iter().enumerate() {
                        let c = 3 * n;
                        strain[(0, c)] = g[0];
                        strain[(1, c + 1)] = g[1];
                        strain[(2, c + 2)] = g[2];
                        strain[(3, c + 1)] = g[2];
                        strain[(3, c + 2)] = g[1];
                        strain[(4, c)] = g[2];
                        strain[(4, c + 2)] = g[0];
                        strain[(5, c)] = g[1];
                        strain[(5, c + 1)] = g[0];
                    }
                    points.push(GaussPoint { local: [t1 * h1, t2 * h2, t3 * h3], shape, strain, weight });
                }
            }
        }
        HexElement { spacing, points }
    }

    pub fn volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// `int B^T D B`.
    pub fn stiffness(&self, d: &SMatrix<f64, 6, 6>) -> ElementMatrix {
        let mut k = ElementMatrix::zeros();
        for p in &self.points {
            let db = d * p.strain;
            k += p.strain.transpose() * db * p.weight;
        }
        k
    }

    /// Right-hand side `-int B^T D s(p)` for a prescribed engineering strain
    /// field evaluated at each quadrature point.
    pub fn prestrain_load<F>(&self, d: &SMatrix<f64, 6, 6>, strain_at: F) -> ElementVector
    where
        F: Fn(&GaussPoint) -> Vector6<f64>,
    {
        let mut f = ElementVector::zeros();
        for p in &self.points {
            let stress = d * strain_at(p);
            f -= p.strain.transpose() * stress * p.weight;
        }
        f
    }

    /// `int N_n e_comp` for a unit body force in direction `comp`.
    pub fn body_load(&self, comp: usize) -> ElementVector {
        let mut f = ElementVector::zeros();
        for p in &self.points {
            for n in 0..8 {
                f[3 * n + comp] += p.shape[n] * p.weight;
            }
        }
        f
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{isotropic_hooke, SymMat3};

    fn affine_dofs(s: &SymMat3, spacing: [f64; 3]) -> ElementVector {
        let m = s.to_matrix();
        let mut u = ElementVector::zeros();
        for n in 0..8 {
            let x = nalgebra::Vector3::new(
                (n & 1) as f64 * spacing[0],
                ((n >> 1) & 1) as f64 * spacing[1],
                ((n >> 2) & 1) as f64 * spacing[2],
            );
            let v = m * x;
            for i in 0..3 {
                u[3 * n + i] = v[i];
            }
        }
        u
    }

    #[test]
    fn affine_field_energy_is_exact() {
        let h = isotropic_hooke(1.3, 0.7).unwrap();
        let d = h.voigt_matrix();
        let spacing = [0.25, 0.5, 0.1];
        let el = HexElement::new(spacing);
        let k = el.stiffness(&d);
        let s = SymMat3([0.3, -0.2, 0.5, 0.1, -0.4, 0.25]);
        let u = affine_dofs(&s, spacing);
        let energy = (u.transpose() * k * u)[(0, 0)];
        assert!((energy - h.quad(&s) * el.volume()).abs() < 1e-13);
    }

    #[test]
    fn rigid_translation_in_kernel() {
        let d = isotropic_hooke(1.0, 1.0).unwrap().voigt_matrix();
        let k = HexElement::new([0.1, 0.2, 0.3]).stiffness(&d);
        for comp in 0..3 {
            let t = ElementVector::from_fn(|i, _| if i % 3 == comp { 1.0 } else { 0.0 });
            assert!((k * t).norm() < 1e-13);
        }
        assert!((k - k.transpose()).norm() < 1e-13);
    }

    #[test]
    fn body_load_sums_to_volume() {
        let el = HexElement::new([0.5, 0.25, 0.2]);
        let f = el.body_load(1);
        assert!((f.sum() - el.volume()).abs() < 1e-15);
        for n in 0..8 {
            assert!((f[3 * n + 1] - el.volume() / 8.0).abs() < 1e-15);
        }
    }
}
