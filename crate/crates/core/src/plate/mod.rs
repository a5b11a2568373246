//! Clamped von Karman plate on `(-L, L)^2` with the homogenized tensors.
//!
//! The in-plane displacement is bilinear, the deflection is a bicubic
//! Hermite (Bogner-Fox-Schmidt) field. Every node carries six unknowns
//! `[u1, u2, w, w_x, w_y, w_xy]`, node `(i, j)` has index `i + (m1 + 1) j`
//! and its unknowns occupy slots `6 node .. 6 node + 6`.

mod basis;
mod energy;
mod load;
mod newton;
mod solution;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use basis::{ElementBasis, PointBasis};
pub use energy::{eval_energy, eval_gradient, EnergyParts, PlateProblem};
pub use load::{read_prestrain, LoadField, LoadTerm, PrestrainField};
pub use newton::{linear_bending_solve, solve_vk, solve_vk_recording, NewtonOptions, TraceEntry, VkSolution};
pub use solution::{GridInfo, PlateSolution, Volumes};

pub const DOFS_PER_NODE: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ClampSpec {
    Edge { sides: Vec<Side> },
    Disc { cx: f64, cy: f64, r: f64 },
}

impl FromStr for ClampSpec {
    type Err = Error;

    /// `disc:cx,cy,R` or `edge:left,right,...` (or `edge:all`).
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("clamp `{s}`: expected `disc:cx,cy,R` or `edge:side[,side...]`"));
        let (kind, args) = s.split_once(':').ok_or_else(bad)?;
        match kind.trim() {
            "disc" => {
                let v: Vec<f64> = args.split(',').map(|t| t.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
                if v.len() != 3 {
                    return Err(bad());
                }
                Ok(ClampSpec::Disc { cx: v[0], cy: v[1], r: v[2] })
            }
            "edge" => {
                let mut sides = Vec::new();
                for t in args.split(',') {
                    match t.trim() {
                        "all" => sides.extend([Side::Left, Side::Right, Side::Bottom, Side::Top]),
                        "left" => sides.push(Side::Left),
                        "right" => sides.push(Side::Right),
                        "bottom" => sides.push(Side::Bottom),
                        "top" => sides.push(Side::Top),
                        _ => return Err(bad()),
                    }
                }
                sides.sort_by_key(|s| *s as u8);
                sides.dedup();
                Ok(ClampSpec::Edge { sides })
            }
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for ClampSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClampSpec::Disc { cx, cy, r } => write!(f, "disc:{cx},{cy},{r}"),
            ClampSpec::Edge { sides } => {
                let names: Vec<&str> = sides
                    .iter()
                    .map(|s| match s {
                        Side::Left => "left",
                        Side::Right => "right",
                        Side::Bottom => "bottom",
                        Side::Top => "top",
                    })
                    .collect();
                write!(f, "edge:{}", names.join(","))
            }
        }
    }
}

/// Uniform `m1 x m2` grid on `(-L, L)^2` with its clamp mask.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateMesh {
    pub l: f64,
    pub m1: usize,
    pub m2: usize,
    pub hx: f64,
    pub hy: f64,
    pub clamp: ClampSpec,
    pub clamped: Vec<bool>,
}

impl PlateMesh {
    pub fn new(l: f64, m1: usize, m2: usize, clamp: ClampSpec) -> Result<Self> {
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::Config(format!("plate half-side L must be positive, got {l}")));
        }
        if m1 == 0 || m2 == 0 {
            return Err(Error::Config("plate grid needs at least one element per direction".into()));
        }
        let hx = 2.0 * l / m1 as f64;
        let hy = 2.0 * l / m2 as f64;
        let n = (m1 + 1) * (m2 + 1);
        let mut clamped = vec![false; n];
        match &clamp {
            ClampSpec::Disc { cx, cy, r } => {
                if !(*r > 0.0) || cx.abs() + r > l * (1.0 + 1e-12) || cy.abs() + r > l * (1.0 + 1e-12) {
                    return Err(Error::Config(format!("clamp disc ({cx}, {cy}, {r}) must lie inside the closed plate")));
                }
                for j in 0..=m2 {
                    for i in 0..=m1 {
                        let x = -l + i as f64 * hx;
                        let y = -l + j as f64 * hy;
                        if (x - cx).powi(2) + (y - cy).powi(2) <= r * r * (1.0 + 1e-12) {
                            clamped[i + (m1 + 1) * j] = true;
                        }
                    }
                }
            }
            ClampSpec::Edge { sides } => {
                for j in 0..=m2 {
                    for i in 0..=m1 {
                        let hit = sides.iter().any(|s| match s {
                            Side::Left => i == 0,
                            Side::Right => i == m1,
                            Side::Bottom => j == 0,
                            Side::Top => j == m2,
                        });
                        clamped[i + (m1 + 1) * j] = hit;
                    }
                }
            }
        }
        let count = clamped.iter().filter(|c| **c).count();
        if count < 2 {
            return Err(Error::ClampInsufficient(format!(
                "{clamp} captures {count} grid node(s); at least two are needed to remove the in-plane rotation"
            )));
        }
        Ok(PlateMesh { l, m1, m2, hx, hy, clamp, clamped })
    }

    pub fn n_nodes(&self) -> usize {
        (self.m1 + 1) * (self.m2 + 1)
    }

    pub fn n_dofs(&self) -> usize {
        DOFS_PER_NODE * self.n_nodes()
    }

    pub fn n_elements(&self) -> usize {
        self.m1 * self.m2
    }

    pub fn node(&self, i: usize, j: usize) -> usize {
        i + (self.m1 + 1) * j
    }

    pub fn node_coords(&self, n: usize) -> [f64; 2] {
        let i = n % (self.m1 + 1);
        let j = n / (self.m1 + 1);
        [-self.l + i as f64 * self.hx, -self.l + j as f64 * self.hy]
    }

    /// Corner nodes of element `e` in the order `(0,0), (1,0), (0,1), (1,1)`.
    pub fn element_nodes(&self, e: usize) -> [usize; 4] {
        let i = e % self.m1;
        let j = e / self.m1;
        [self.node(i, j), self.node(i + 1, j), self.node(i, j + 1), self.node(i + 1, j + 1)]
    }

    /// Lower-left corner of element `e`.
    pub fn element_origin(&self, e: usize) -> [f64; 2] {
        let i = e % self.m1;
        let j = e / self.m1;
        [-self.l + i as f64 * self.hx, -self.l + j as f64 * self.hy]
    }

    /// Global unknowns of element `e`, local slot `6 a + k`.
    pub fn element_dofs(&self, e: usize) -> [usize; 24] {
        let nodes = self.element_nodes(e);
        std::array::from_fn(|d| DOFS_PER_NODE * nodes[d / 6] + d % 6)
    }

    pub fn dof_clamped(&self, dof: usize) -> bool {
        self.clamped[dof / DOFS_PER_NODE]
    }

    /// Element containing `(x, y)` and the offset from its lower-left
    /// corner. Points on the boundary belong to the adjacent interior element.
    pub fn locate(&self, x: f64, y: f64) -> Result<(usize, [f64; 2])> {
        let tol = 1e-12 * self.l;
        if !(x.abs() <= self.l + tol && y.abs() <= self.l + tol) {
            return Err(Error::Domain(x, y));
        }
        let i = (((x + self.l) / self.hx).floor().max(0.0) as usize).min(self.m1 - 1);
        let j = (((y + self.l) / self.hy).floor().max(0.0) as usize).min(self.m2 - 1);
        let e = i + self.m1 * j;
        let o = self.element_origin(e);
        Ok((e, [x - o[0], y - o[1]]))
    }

    /// Zero every clamped unknown.
    pub fn apply_clamp(&self, v: &mut [f64]) {
        for (n, c) in self.clamped.iter().enumerate() {
            if *c {
                v[DOFS_PER_NODE * n..DOFS_PER_NODE * (n + 1)].fill(0.0);
            }
        }
    }
}

/// Nodal unknowns of the plate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateState {
    pub um: Vec<[f64; 2]>,
    /// `(w, w_x, w_y, w_xy)` per node.
    pub u3: Vec<[f64; 4]>,
}

impl PlateState {
    pub fn zeros(mesh: &PlateMesh) -> Self {
        PlateState { um: vec![[0.0; 2]; mesh.n_nodes()], u3: vec![[0.0; 4]; mesh.n_nodes()] }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(DOFS_PER_NODE * self.um.len());
        for (m, w) in self.um.iter().zip(&self.u3) {
            v.extend_from_slice(m);
            v.extend_from_slice(w);
        }
        v
    }

    pub fn from_vec(v: &[f64]) -> Self {
        let n = v.len() / DOFS_PER_NODE;
        let mut s = PlateState { um: Vec::with_capacity(n), u3: Vec::with_capacity(n) };
        for c in v.chunks_exact(DOFS_PER_NODE) {
            s.um.push([c[0], c[1]]);
            s.u3.push([c[2], c[3], c[4], c[5]]);
        }
        s
    }

    pub fn max_abs_deflection(&self) -> f64 {
        self.u3.iter().map(|w| w[0].abs()).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod solver_tests;
