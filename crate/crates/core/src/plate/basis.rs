//! Shape functions of the plate element: bilinear for `(u1, u2)`,
//! Bogner-Fox-Schmidt bicubic Hermite for `w`.

use nalgebra::SVector;

pub type Dofs = SVector<f64, 24>;

/// Cubic Hermite functions on `[0, h]` at `x`: value, first and second
/// derivative of `(g0, g1, g2, g3)`, where `g0, g2` interpolate the end
/// values and `g1, g3` the end slopes.
pub fn hermite_1d(x: f64, h: f64) -> [[f64; 3]; 4] {
    let t = x / h;
    let (t2, t3) = (t * t, t * t * t);
    [
        [1.0 - 3.0 * t2 + 2.0 * t3, (-6.0 * t + 6.0 * t2) / h, (-6.0 + 12.0 * t) / (h * h)],
        [h * (t - 2.0 * t2 + t3), 1.0 - 4.0 * t + 3.0 * t2, (-4.0 + 6.0 * t) / h],
        [3.0 * t2 - 2.0 * t3, (6.0 * t - 6.0 * t2) / h, (6.0 - 12.0 * t) / (h * h)],
        [h * (-t2 + t3), -2.0 * t + 3.0 * t2, (-2.0 + 6.0 * t) / h],
    ]
}

/// Every interpolated quantity at one point of an element, as a linear
/// functional of the 24 element unknowns.
#[derive(Debug, Clone)]
pub struct PointBasis {
    pub u1: Dofs,
    pub u2: Dofs,
    pub w: Dofs,
    pub u1x: Dofs,
    pub u1y: Dofs,
    pub u2x: Dofs,
    pub u2y: Dofs,
    pub wx: Dofs,
    pub wy: Dofs,
    pub wxx: Dofs,
    pub wyy: Dofs,
    pub wxy: Dofs,
}

impl PointBasis {
    /// Basis at offset `(x, y)` from the lower-left corner of an
    /// `hx x hy` element.
    pub fn new(x: f64, y: f64, hx: f64, hy: f64) -> Self {
        let mut b = PointBasis {
            u1: Dofs::zeros(),
            u2: Dofs::zeros(),
            w: Dofs::zeros(),
            u1x: Dofs::zeros(),
            u1y: Dofs::zeros(),
            u2x: Dofs::zeros(),
            u2y: Dofs::zeros(),
            wx: Dofs::zeros(),
            wy: Dofs::zeros(),
            wxx: Dofs::zeros(),
            wyy: Dofs::zeros(),
            wxy: Dofs::zeros(),
        };
        let (tx, ty) = (x / hx, y / hy);
        let hxf = hermite_1d(x, hx);
        let hyf = hermite_1d(y, hy);
        for a in 0..4 {
            let (cx, cy) = (a & 1, a >> 1);
            let (lx, dlx) = if cx == 1 { (tx, 1.0 / hx) } else { (1.0 - tx, -1.0 / hx) };
            let (ly, dly) = if cy == 1 { (ty, 1.0 / hy) } else { (1.0 - ty, -1.0 / hy) };
            let base = 6 * a;
            b.u1[base] = lx * ly;
            b.u2[base + 1] = lx * ly;
            b.u1x[base] = dlx * ly;
            b.u1y[base] = lx * dly;
            b.u2x[base + 1] = dlx * ly;
            b.u2y[base + 1] = lx * dly;

            let (vx, sx) = (hxf[2 * cx], hxf[2 * cx + 1]);
            let (vy, sy) = (hyf[2 * cy], hyf[2 * cy + 1]);
            for (k, (fx, fy)) in [(vx, vy), (sx, vy), (vx, sy), (sx, sy)].into_iter().enumerate() {
                let d = base + 2 + k;
                b.w[d] = fx[0] * fy[0];
                b.wx[d] = fx[1] * fy[0];
                b.wy[d] = fx[0] * fy[1];
                b.wxx[d] = fx[2] * fy[0];
                b.wyy[d] = fx[0] * fy[2];
                b.wxy[d] = fx[1] * fy[1];
            }
        }
        b
    }
}

#[derive(Debug, Clone)]
pub struct QuadraturePoint {
    pub offset: [f64; 2],
    pub weight: f64,
    pub basis: PointBasis,
}

/// Basis tabulated at the 3x3 Gauss points of the reference element; the
/// grid is uniform so one table serves every element.
#[derive(Debug, Clone)]
pub struct ElementBasis {
    pub points: Vec<QuadraturePoint>,
}

impl ElementBasis {
    pub fn new(hx: f64, hy: f64) -> Self {
        let g = (0.6f64).sqrt() / 2.0;
        let abscissae = [0.5 - g, 0.5, 0.5 + g];
        let weights = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];
        let mut points = Vec::with_capacity(9);
        for (ty, wy) in abscissae.iter().zip(&weights) {
            for (tx, wx) in abscissae.iter().zip(&weights) {
                let offset = [tx * hx, ty * hy];
                points.push(QuadraturePoint {
                    offset,
                    weight: wx * wy * hx * hy,
                    basis: PointBasis::new(offset[0], offset[1], hx, hy),
                });
            }
        }
        ElementBasis { points }
    }
}
