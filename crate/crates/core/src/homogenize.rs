//! Homogenized tensors assembled from the correctors, the limit quadratic
//! form they define, and checks of their structure.
//!
//! All 3x3 tensors are indexed by the in-plane basis `(11, 22, 12)`: entry
//! `(I, J)` is the coefficient pairing `M^I` with `M^J`. Because `M^{12}`
//! has a one in both off-diagonal slots, a symmetric 2x2 strain `z` enters
//! through its tensor components `(z11, z22, z12)` and the 12 slot already
//! carries the engineering doubling. The 6x6 matrix-phase tensors use the
//! order `(11, 22, 33, 23, 13, 12)` with the same convention.

use nalgebra::{Matrix3, SMatrix, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::cellsolve::{fingerprint, gather, CorrectorSet, NodalField};
use crate::error::{Error, Result};
use crate::hex::HexElement;
use crate::microcell::{build_periodic_mesh, PeriodicMesh, Phase, VoxelCell};
use crate::plate::{LoadField, PrestrainField};
use crate::tensor::{HookeTensor, StrainBasis, SymMat2, SymMat3};

pub type Mat3 = [[f64; 3]; 3];
pub type Mat6 = [[f64; 6]; 6];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogenizedTensors {
    /// Membrane tensor.
    #[serde(rename = "A")]
    pub a: Mat3,
    /// Coupling tensor, `B[I][J] = <a (y3 M^I + e(chi_b[I])) : M^J>`.
    #[serde(rename = "Bc")]
    pub b: Mat3,
    /// Bending tensor.
    #[serde(rename = "C")]
    pub c: Mat3,
    /// Matrix tensor relaxed by the pre-strain correctors.
    #[serde(rename = "AM")]
    pub am: Option<Mat6>,
    /// Plain matrix-phase average of the Hooke tensor in the `M^K` basis.
    #[serde(rename = "DM")]
    pub dm: Option<Mat6>,
    /// Stress of the unit-force correctors paired with the basis strains,
    /// `P[alpha][L] = <a e(chi_p[alpha]) : M^L>`.
    #[serde(rename = "P")]
    pub pm: Option<[[f64; 6]; 2]>,
    pub vol_b: f64,
    pub vol_m: f64,
    pub vol_y: f64,
    pub kappa: f64,
    pub frame_kind: bool,
    pub materials_isotropic: bool,
    pub fingerprint: String,
}

fn to_mat3(m: &Matrix3<f64>) -> Mat3 {
    std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))
}

fn frobenius<const N: usize>(m: &[[f64; N]; N]) -> f64 {
    m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

fn sym3(m: &Mat3) -> Matrix3<f64> {
    let x = Matrix3::from_fn(|i, j| m[i][j]);
    0.5 * (x + x.transpose())
}

/// Assemble every homogenized coefficient with the same 2x2x2 Gauss rule
/// used for the stiffness.
pub fn assemble_homogenized(
    cell: &VoxelCell,
    frame: &HookeTensor,
    matrix: &HookeTensor,
    correctors: &CorrectorSet,
) -> Result<HomogenizedTensors> {
    let expected = fingerprint(cell, frame, matrix);
    if expected != correctors.fingerprint {
        return Err(Error::Stale { expected, found: correctors.fingerprint.clone() });
    }
    let mesh = build_periodic_mesh(cell);
    let element = HexElement::new(mesh.spacing);
    let membrane = StrainBasis.membrane().map(|m| m.to_strain_voigt());
    let full = StrainBasis.full().map(|m| m.to_strain_voigt());

    let d = frame.voigt_matrix();
    let mut a = Matrix3::zeros();
    let mut b = Matrix3::zeros();
    let mut c = Matrix3::zeros();
    for_phase_elements(&mesh, Phase::Frame, |el, z| {
        let um: Vec<_> = correctors.chi_m.iter().map(|f| gather(f, el)).collect();
        let ub: Vec<_> = correctors.chi_b.iter().map(|f| gather(f, el)).collect();
        for p in &element.points {
            let y3 = z + p.local[2];
            for i in 0..3 {
                let sm = d * (membrane[i] + p.strain * um[i]);
                let sb = d * (membrane[i] * y3 + p.strain * ub[i]);
                for j in 0..3 {
                    a[(i, j)] += p.weight * sm.dot(&membrane[j]);
                    b[(i, j)] += p.weight * sb.dot(&membrane[j]);
                    c[(i, j)] += p.weight * y3 * sb.dot(&membrane[j]);
                }
            }
        }
    });
    a /= cell.vol_b;
    b /= cell.vol_b;
    c /= cell.vol_b;

    let (mut am, mut dm, mut pm) = (None, None, None);
    if !correctors.degenerate_matrix && cell.vol_m > 0.0 {
        let dmat = matrix.voigt_matrix();
        let mut amx = SMatrix::<f64, 6, 6>::zeros();
        let mut dmx = SMatrix::<f64, 6, 6>::zeros();
        let mut pmx = SMatrix::<f64, 2, 6>::zeros();
        let with_pre = correctors.chi_pre.len() == 6;
        for_phase_elements(&mesh, Phase::Matrix, |el, _z| {
            let up: Vec<_> = correctors.chi_p.iter().map(|f| gather(f, el)).collect();
            let upre: Vec<_> = correctors.chi_pre.iter().map(|f| gather(f, el)).collect();
            for p in &element.points {
                for k in 0..6 {
                    let plain = dmat * full[k];
                    let relaxed = if with_pre { dmat * (full[k] + p.strain * upre[k]) } else { plain };
                    for l in 0..6 {
                        dmx[(k, l)] += p.weight * plain.dot(&full[l]);
                        amx[(k, l)] += p.weight * relaxed.dot(&full[l]);
                    }
                }
                for (alpha, u) in up.iter().enumerate() {
                    let s = dmat * (p.strain * u);
                    for l in 0..6 {
                        pmx[(alpha, l)] += p.weight * s.dot(&full[l]);
                    }
                }
            }
        });
        dmx /= cell.vol_m;
        amx /= cell.vol_m;
        pmx /= cell.vol_m;
        dm = Some(std::array::from_fn(|i| std::array::from_fn(|j| dmx[(i, j)])));
        if with_pre {
            am = Some(std::array::from_fn(|i| std::array::from_fn(|j| amx[(i, j)])));
        }
        pm = Some(std::array::from_fn(|i| std::array::from_fn(|j| pmx[(i, j)])));
    }

    Ok(HomogenizedTensors {
        a: to_mat3(&a),
        b: to_mat3(&b),
        c: to_mat3(&c),
        am,
        dm,
        pm,
        vol_b: cell.vol_b,
        vol_m: cell.vol_m,
        vol_y: cell.vol_y(),
        kappa: cell.kappa,
        frame_kind: cell.frame_kind,
        materials_isotropic: frame.is_isotropic(1e-12) && matrix.is_isotropic(1e-12),
        fingerprint: correctors.fingerprint.clone(),
    })
}

fn for_phase_elements<F: FnMut(&[usize; 8], f64)>(mesh: &PeriodicMesh, phase: Phase, mut f: F) {
    for (e, el) in mesh.elements.iter().enumerate() {
        if mesh.element_phase[e] == phase {
            f(el, mesh.y3(mesh.element_layer(e)));
        }
    }
}

impl HomogenizedTensors {
    /// Symmetric 6x6 matrix of the limit quadratic form on `(xi, eta)`:
    /// `[[A, B^T], [B, C]]`.
    pub fn block_form(&self) -> SMatrix<f64, 6, 6> {
        let a = sym3(&self.a);
        let c = sym3(&self.c);
        let b = Matrix3::from_fn(|i, j| self.b[i][j]);
        let mut m = SMatrix::<f64, 6, 6>::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&a);
        m.fixed_view_mut::<3, 3>(0, 3).copy_from(&b.transpose());
        m.fixed_view_mut::<3, 3>(3, 0).copy_from(&b);
        m.fixed_view_mut::<3, 3>(3, 3).copy_from(&c);
        m
    }

    pub fn min_block_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.block_form()).eigenvalues.min()
    }

    /// Require a positive definite block form.
    pub fn check_coercive(&self) -> Result<f64> {
        let lam = self.min_block_eigenvalue();
        if lam > 0.0 {
            Ok(lam)
        } else {
            Err(Error::Config(format!("homogenized quadratic form is not positive definite (min eigenvalue {lam:.3e})")))
        }
    }

    pub fn has_prestrain(&self) -> bool {
        self.vol_m == 0.0 || self.am.is_some()
    }
}

/// Labels of the tensor slots as written to `tensors.json`.
pub const BASIS_LABEL: &str = "11,22,12(eng)";
pub const MATRIX_BASIS_LABEL: &str = "11,22,33,23,13,12(eng)";

/// On-disk form of the homogenized tensors with their checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorsFile {
    pub basis: String,
    pub matrix_basis: String,
    #[serde(flatten)]
    pub tensors: HomogenizedTensors,
    pub min_block_eigenvalue: f64,
    pub structure_report: StructureReport,
}

impl TensorsFile {
    pub fn new(tensors: HomogenizedTensors) -> Self {
        let structure_report = verify_structure(&tensors, tensors.materials_isotropic);
        TensorsFile {
            basis: BASIS_LABEL.into(),
            matrix_basis: MATRIX_BASIS_LABEL.into(),
            min_block_eigenvalue: tensors.min_block_eigenvalue(),
            structure_report,
            tensors,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn write(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read(path: &std::path::Path) -> Result<Self> {
        let file: TensorsFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if file.basis != BASIS_LABEL {
            return Err(Error::Format(format!("{}: unknown tensor basis `{}`", path.display(), file.basis)));
        }
        Ok(file)
    }
}

/// Limit quadratic form `Q(xi, eta) = A xi.xi + 2 B xi.eta + C eta.eta`,
/// where `xi` is the membrane strain and `eta` multiplies `y3` in the
/// Kirchhoff-Love strain `(xi + y3 eta)`.
///
/// The cross term carries the weight that the cell energy
/// `<a (M + e(Psi)) : (M + e(Psi))>` produces; it vanishes whenever the
/// coupling tensor does.
pub fn eval_limit_quadratic_form(t: &HomogenizedTensors, xi: &SymMat2, eta: &SymMat2) -> f64 {
    let x = Vector3::from(xi.0);
    let e = Vector3::from(eta.0);
    let a = Matrix3::from_fn(|i, j| t.a[i][j]);
    let b = Matrix3::from_fn(|i, j| t.b[i][j]);
    let c = Matrix3::from_fn(|i, j| t.c[i][j]);
    x.dot(&(a * x)) + 2.0 * e.dot(&(b * x)) + e.dot(&(c * e))
}

/// `(1/|Y_B|) int_{Y_B} a (M + e(Psi)) : (M + e(Psi))` for a Kirchhoff-Love
/// strain `M = (xi + y3 eta)` and a frame displacement `Psi`.
pub fn frame_energy_density(
    mesh: &PeriodicMesh,
    frame: &HookeTensor,
    vol_b: f64,
    psi: &NodalField,
    xi: &SymMat2,
    eta: &SymMat2,
) -> f64 {
    let element = HexElement::new(mesh.spacing);
    let d = frame.voigt_matrix();
    let sx = xi.embed().to_strain_voigt();
    let se = eta.embed().to_strain_voigt();
    let mut total = 0.0;
    for_phase_elements(mesh, Phase::Frame, |el, z| {
        let u = gather(psi, el);
        for p in &element.points {
            let s = sx + se * (z + p.local[2]) + p.strain * u;
            total += p.weight * s.dot(&(d * s));
        }
    });
    total / vol_b
}

/// `Psi = xi_I chi_m[I] + eta_I chi_b[I]`.
pub fn frame_displacement(correctors: &CorrectorSet, xi: &SymMat2, eta: &SymMat2) -> NodalField {
    let mut fields = correctors.chi_m.clone();
    fields.extend(correctors.chi_b.iter().cloned());
    let coeffs: Vec<f64> = xi.0.iter().chain(eta.0.iter()).copied().collect();
    crate::cellsolve::combine(&fields, &coeffs)
}

/// Relative gap between the cell energy of the corrected Kirchhoff-Love
/// strain and the limit quadratic form.
pub fn energy_identity_check(
    cell: &VoxelCell,
    frame: &HookeTensor,
    correctors: &CorrectorSet,
    t: &HomogenizedTensors,
    xi: &SymMat2,
    eta: &SymMat2,
) -> f64 {
    let mesh = build_periodic_mesh(cell);
    let psi = frame_displacement(correctors, xi, eta);
    let value = frame_energy_density(&mesh, frame, cell.vol_b, &psi, xi, eta);
    (value - eval_limit_quadratic_form(t, xi, eta)).abs() / value.abs().max(1.0)
}

/// Residuals of the orthotropy equalities expected for isotropic
/// constituents on the square-symmetric frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    /// Thresholds are applied only for isotropic materials on the frame geometry.
    pub applicable: bool,
    pub threshold: f64,
    /// `|B| / sqrt(|A| |C|)`.
    pub b_zero: f64,
    pub a_1111_eq_2222: f64,
    pub a_aa12_zero: f64,
    pub c_1111_eq_2222: f64,
    pub c_aa12_zero: f64,
    pub am_1111_eq_2222: f64,
    pub am_aa12_zero: f64,
    pub passed: Option<bool>,
}

impl StructureReport {
    pub fn checks(&self) -> [(&'static str, f64); 7] {
        [
            ("b_hom = 0", self.b_zero),
            ("a_1111 = a_2222", self.a_1111_eq_2222),
            ("a_aa12 = 0", self.a_aa12_zero),
            ("c_1111 = c_2222", self.c_1111_eq_2222),
            ("c_aa12 = 0", self.c_aa12_zero),
            ("aM_1111 = aM_2222", self.am_1111_eq_2222),
            ("aM_aa12 = 0", self.am_aa12_zero),
        ]
    }
}

pub const STRUCTURE_THRESHOLD: f64 = 1e-8;

pub fn verify_structure(t: &HomogenizedTensors, material_isotropic: bool) -> StructureReport {
    let na = frobenius(&t.a).max(f64::MIN_POSITIVE);
    let nc = frobenius(&t.c).max(f64::MIN_POSITIVE);
    let equal = |m: &Mat3, n: f64| (m[0][0] - m[1][1]).abs() / n;
    let shear = |m: &Mat3, n: f64| [m[0][2], m[1][2], m[2][0], m[2][1]].iter().fold(0.0f64, |x, v| x.max(v.abs())) / n;
    let (am_eq, am_sh) = match &t.am {
        Some(am) => {
            let n = frobenius(am).max(f64::MIN_POSITIVE);
            let sh = [am[0][5], am[1][5], am[5][0], am[5][1]].iter().fold(0.0f64, |x, v| x.max(v.abs())) / n;
            ((am[0][0] - am[1][1]).abs() / n, sh)
        }
        None => (0.0, 0.0),
    };
    let applicable = material_isotropic && t.frame_kind;
    let mut report = StructureReport {
        applicable,
        threshold: STRUCTURE_THRESHOLD,
        b_zero: frobenius(&t.b) / (na * nc).sqrt(),
        a_1111_eq_2222: equal(&t.a, na),
        a_aa12_zero: shear(&t.a, na),
        c_1111_eq_2222: equal(&t.c, nc),
        c_aa12_zero: shear(&t.c, nc),
        am_1111_eq_2222: am_eq,
        am_aa12_zero: am_sh,
        passed: None,
    };
    if applicable {
        report.passed = Some(report.checks().iter().all(|(_, r)| *r < STRUCTURE_THRESHOLD));
    }
    report
}

/// Pointwise stored-energy density of the pre-strained matrix,
///
/// ```text
/// j(x') = 1/2 ( f_alpha(x') P[alpha] . s(x') + s(x') . DM s(x') )
/// ```
///
/// with `s` the components of `Sym(B(x'))` in the `M^K` basis. The
/// force/pre-strain pairing contracts the matrix tensor with `Sym(B)`
/// through the unit-force correctors, one in-plane force component at a
/// time. The density does not depend on the plate displacement.
#[derive(Debug, Clone)]
pub struct OffsetField {
    dm: Mat6,
    pm: [[f64; 6]; 2],
    prestrain: PrestrainField,
    load: LoadField,
}

impl OffsetField {
    pub fn density(&self, x: f64, y: f64) -> f64 {
        let s: SymMat3 = self.prestrain.at(x, y);
        let f = self.load.eval(x, y);
        let mut dss = 0.0;
        for k in 0..6 {
            for l in 0..6 {
                dss += self.dm[k][l] * s.0[k] * s.0[l];
            }
        }
        let mut fs = 0.0;
        for alpha in 0..2 {
            if f[alpha] != 0.0 {
                fs += f[alpha] * (0..6).map(|l| self.pm[alpha][l] * s.0[l]).sum::<f64>();
            }
        }
        0.5 * (fs + dss)
    }
}

/// Offset density field for the given pre-strain and loading; `None`
/// when it vanishes identically.
pub fn prestrain_offset(
    t: &HomogenizedTensors,
    prestrain: &PrestrainField,
    load: &LoadField,
) -> Result<Option<OffsetField>> {
    if prestrain.is_zero() || t.vol_m == 0.0 {
        return Ok(None);
    }
    let (Some(dm), Some(pm), Some(_)) = (t.dm, t.pm, t.am) else {
        return Err(Error::Config(
            "pre-strain requested but the tensors were assembled without pre-strain correctors".into(),
        ));
    };
    Ok(Some(OffsetField { dm, pm, prestrain: *prestrain, load: load.clone() }))
}
