//! Force densities and matrix pre-strain over the plate.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::SymMat3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LoadTerm {
    Const { v: f64 },
    /// `v exp(-|x - c|^2 / (2 sigma^2))`.
    Gauss { cx: f64, cy: f64, sigma: f64, v: f64 },
}

impl LoadTerm {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match *self {
            LoadTerm::Const { v } => v,
            LoadTerm::Gauss { cx, cy, sigma, v } => {
                let r2 = (x - cx).powi(2) + (y - cy).powi(2);
                v * (-r2 / (2.0 * sigma * sigma)).exp()
            }
        }
    }

    fn scaled(&self, t: f64) -> LoadTerm {
        match *self {
            LoadTerm::Const { v } => LoadTerm::Const { v: v * t },
            LoadTerm::Gauss { cx, cy, sigma, v } => LoadTerm::Gauss { cx, cy, sigma, v: v * t },
        }
    }
}

impl fmt::Display for LoadTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LoadTerm::Const { v } => write!(f, "const:{v}"),
            LoadTerm::Gauss { cx, cy, sigma, v } => write!(f, "gauss:{cx},{cy},{sigma},{v}"),
        }
    }
}

/// `(f1, f2, f3)` as sums of analytic terms.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadField {
    pub components: [Vec<LoadTerm>; 3],
}

impl LoadField {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn transverse(v: f64) -> Self {
        let mut f = Self::default();
        f.components[2].push(LoadTerm::Const { v });
        f
    }

    pub fn eval(&self, x: f64, y: f64) -> [f64; 3] {
        std::array::from_fn(|c| self.components[c].iter().map(|t| t.eval(x, y)).sum())
    }

    pub fn scaled(&self, t: f64) -> Self {
        LoadField { components: self.components.clone().map(|c| c.iter().map(|term| term.scaled(t)).collect()) }
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().flatten().all(|t| match t {
            LoadTerm::Const { v } | LoadTerm::Gauss { v, .. } => *v == 0.0,
        })
    }

    pub fn has_in_plane(&self) -> bool {
        !self.components[0].is_empty() || !self.components[1].is_empty()
    }
}

impl FromStr for LoadField {
    type Err = Error;

    /// `;`-separated `fK=const:v` or `fK=gauss:cx,cy,sigma,v` items;
    /// repeated components add up.
    fn from_str(s: &str) -> Result<Self> {
        let mut f = LoadField::default();
        for item in s.split(';').map(str::trim).filter(|t| !t.is_empty()) {
            let bad = |why: &str| Error::Config(format!("load `{item}`: {why}"));
            let (comp, spec) = item.split_once('=').ok_or_else(|| bad("expected `fK=...`"))?;
            let c = match comp.trim() {
                "f1" => 0,
                "f2" => 1,
                "f3" => 2,
                _ => return Err(bad("component must be f1, f2 or f3")),
            };
            let (kind, args) = spec.split_once(':').ok_or_else(|| bad("expected `const:v` or `gauss:cx,cy,sigma,v`"))?;
            let v: Vec<f64> = args
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("non-numeric argument"))?;
            if v.iter().any(|x| !x.is_finite()) {
                return Err(bad("arguments must be finite"));
            }
            let term = match (kind.trim(), v.as_slice()) {
                ("const", [v]) => LoadTerm::Const { v: *v },
                ("gauss", [cx, cy, sigma, v]) if *sigma > 0.0 => LoadTerm::Gauss { cx: *cx, cy: *cy, sigma: *sigma, v: *v },
                ("gauss", [_, _, _, _]) => return Err(bad("sigma must be positive")),
                _ => return Err(bad("expected `const:v` or `gauss:cx,cy,sigma,v`")),
            };
            f.components[c].push(term);
        }
        Ok(f)
    }
}

impl fmt::Display for LoadField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (c, terms) in self.components.iter().enumerate() {
            for t in terms {
                if !first {
                    f.write_str(";")?;
                }
                first = false;
                write!(f, "f{}={t}", c + 1)?;
            }
        }
        Ok(())
    }
}

/// Symmetric part of the matrix pre-strain, constant over the plate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PrestrainField {
    pub sym_b: SymMat3,
}

impl PrestrainField {
    pub fn zero() -> Self {
        Self::default()
    }

    /// Symmetric part of `b`.
    pub fn from_matrix(b: [[f64; 3]; 3]) -> Self {
        let s = |i: usize, j: usize| 0.5 * (b[i][j] + b[j][i]);
        PrestrainField { sym_b: SymMat3([s(0, 0), s(1, 1), s(2, 2), s(1, 2), s(0, 2), s(0, 1)]) }
    }

    pub fn at(&self, _x: f64, _y: f64) -> SymMat3 {
        self.sym_b
    }

    pub fn is_zero(&self) -> bool {
        self.sym_b.0.iter().all(|v| *v == 0.0)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PrestrainFile {
    #[serde(rename = "B")]
    b: [[f64; 3]; 3],
}

/// Read `{"B": [[..], [..], [..]]}`; the symmetric part is kept.
pub fn read_prestrain(path: &Path) -> Result<PrestrainField> {
    let text = std::fs::read_to_string(path)?;
    let file: PrestrainFile = serde_json::from_str(&text)?;
    if file.b.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Config(format!("{}: pre-strain entries must be finite", path.display())));
    }
    Ok(PrestrainField::from_matrix(file.b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_the_mini_language() {
        let f: LoadField = "f3=const:1.5; f1=gauss:0,0.5,0.2,2".parse().unwrap();
        assert_eq!(f.eval(0.3, -0.1)[2], 1.5);
        assert!((f.eval(0.0, 0.5)[0] - 2.0).abs() < 1e-15);
        let r2: f64 = 0.2 * 0.2;
        assert!((f.eval(0.2, 0.5)[0] - 2.0 * (-r2 / (2.0 * 0.04)).exp()).abs() < 1e-15);
        assert_eq!(f.eval(0.0, 0.0)[1], 0.0);
        assert_eq!(f.to_string().parse::<LoadField>().unwrap(), f);
    }

    #[test]
    fn rejects_malformed_loads() {
        for s in ["f4=const:1", "f3=const", "f3=gauss:0,0,1", "f3=gauss:0,0,0,1", "f3=const:x", "f3=const:inf"] {
            assert!(s.parse::<LoadField>().is_err(), "{s}");
        }
        assert!("".parse::<LoadField>().unwrap().is_zero());
    }

    #[test]
    fn scaling_is_linear() {
        let f: LoadField = "f3=gauss:0.1,0,0.3,2;f2=const:-1".parse().unwrap();
        let g = f.scaled(0.25);
        for (a, b) in f.eval(0.2, 0.4).iter().zip(g.eval(0.2, 0.4)) {
            assert!((0.25 * a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn prestrain_keeps_symmetric_part() {
        let p = PrestrainField::from_matrix([[1.0, 2.0, 0.0], [0.0, 3.0, 4.0], [2.0, 0.0, 5.0]]);
        assert_eq!(p.sym_b.0, [1.0, 3.0, 5.0, 2.0, 1.0, 1.0]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.json");
        std::fs::write(&path, r#"{"B": [[1,2,0],[0,3,4],[2,0,5]]}"#).unwrap();
        assert_eq!(read_prestrain(&path).unwrap(), p);
        std::fs::write(&path, r#"{"B": [[1,2,0],[0,3,4],[2,0,5]], "x": 1}"#).unwrap();
        assert!(read_prestrain(&path).is_err());
    }
}
