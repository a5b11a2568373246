use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::homogenize::HomogenizedTensors;
use crate::tensor::isotropic_hooke;

/// Plausible orthotropic tensors; `coupling` scales a nonzero `B`.
pub(crate) fn synthetic(coupling: f64) -> HomogenizedTensors {
    let m = isotropic_hooke(0.3, 0.2).unwrap();
    let w = [1.0, 1.0, 1.0, 2.0, 2.0, 2.0];
    let dm: [[f64; 6]; 6] = std::array::from_fn(|k| std::array::from_fn(|l| w[k] * m.voigt()[k][l] * w[l]));
    let mut pm = [[0.0; 6]; 2];
    pm[0] = [0.01, -0.02, 0.0, 0.0, 0.03, 0.005];
    pm[1] = [-0.004, 0.01, 0.002, 0.02, 0.0, 0.0];
    HomogenizedTensors {
        a: [[2.0, 0.6, 0.0], [0.6, 2.0, 0.0], [0.0, 0.0, 2.8]],
        b: [[0.02, 0.004, 0.0], [0.001, 0.015, 0.003], [0.0, 0.002, 0.01]].map(|r| r.map(|v| v * coupling)),
        c: [[0.05, 0.012, 0.0], [0.012, 0.05, 0.0], [0.0, 0.0, 0.07]],
        am: Some(dm),
        dm: Some(dm),
        pm: Some(pm),
        vol_b: 0.3,
        vol_m: 0.2,
        vol_y: 0.5,
        kappa: 0.25,
        frame_kind: true,
        materials_isotropic: true,
        fingerprint: "synthetic".into(),
    }
}

fn disc(m: usize) -> PlateMesh {
    let r = 0.3f64.max(2.02 / m as f64);
    PlateMesh::new(1.0, m, m, ClampSpec::Disc { cx: 0.0, cy: 0.0, r }).unwrap()
}

fn random_state(mesh: &PlateMesh, rng: &mut ChaCha8Rng, scale: f64) -> Vec<f64> {
    let mut q: Vec<f64> = (0..mesh.n_dofs())
        .map(|d| {
            let s = if d % 6 < 2 { 0.1 * scale } else { scale };
            rng.gen_range(-s..s)
        })
        .collect();
    mesh.apply_clamp(&mut q);
    q
}

fn fd_errors(problem: &PlateProblem<'_>, q: &[f64], rng: &mut ChaCha8Rng) -> (f64, f64) {
    let g = problem.gradient_vec(q);
    let energy = |x: &[f64]| problem.energy(&PlateState::from_vec(x));
    let mut dir: Vec<f64> = (0..q.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    problem.mesh.apply_clamp(&mut dir);
    let h = 1e-6;
    let plus: Vec<f64> = q.iter().zip(&dir).map(|(a, b)| a + h * b).collect();
    let minus: Vec<f64> = q.iter().zip(&dir).map(|(a, b)| a - h * b).collect();
    let fd = (energy(&plus) - energy(&minus)) / (2.0 * h);
    let an: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
    let directional = (fd - an).abs() / an.abs();

    let free: Vec<usize> = (0..q.len()).filter(|d| !problem.mesh.dof_clamped(*d)).collect();
    let (mut num, mut den) = (0.0, 0.0);
    for _ in 0..24 {
        let d = free[rng.gen_range(0..free.len())];
        let mut x = q.to_vec();
        x[d] += h;
        let ep = energy(&x);
        x[d] -= 2.0 * h;
        let em = energy(&x);
        let fd = (ep - em) / (2.0 * h);
        num += (fd - g[d]).powi(2);
        den += g[d].powi(2);
    }
    (directional, (num / den).sqrt())
}

#[test]
fn zero_state_has_zero_energy() {
    let t = synthetic(1.0);
    let mesh = disc(4);
    let z = PlateState::zeros(&mesh);
    assert_eq!(eval_energy(&mesh, &t, &LoadField::zero(), &PrestrainField::zero(), &z).unwrap(), 0.0);
    assert_eq!(eval_energy(&mesh, &t, &LoadField::transverse(3.0), &PrestrainField::zero(), &z).unwrap(), 0.0);
}

#[test]
fn gradient_at_zero_is_the_load_vector() {
    let t = synthetic(1.0);
    let mesh = disc(4);
    let load: LoadField = "f1=const:0.5;f3=gauss:0.2,0.1,0.4,2".parse().unwrap();
    let p = PlateProblem::new(&mesh, &t, load, PrestrainField::zero()).unwrap();
    let g = p.gradient(&PlateState::zeros(&mesh));
    for (d, (a, b)) in g.iter().zip(p.load_vector()).enumerate() {
        assert_eq!(*a, -b);
        if mesh.dof_clamped(d) {
            assert_eq!(*a, 0.0);
        }
    }
    // total transverse force: |Y| int f3 recovered from the w-value unknowns
    let sum: f64 = p.load_vector().iter().skip(2).step_by(6).sum();
    assert!(sum > 0.0);
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mesh = disc(8);
    for coupling in [0.0, 1.0] {
        let t = synthetic(coupling);
        let load: LoadField = "f1=const:0.3;f2=gauss:0,0,0.5,-0.2;f3=const:1".parse().unwrap();
        for prestrain in [PrestrainField::zero(), PrestrainField::from_matrix([[0.01, 0.0, 0.002], [0.0, -0.02, 0.0], [0.002, 0.0, 0.005]])] {
            let p = PlateProblem::new(&mesh, &t, load.clone(), prestrain).unwrap();
            for _ in 0..4 {
                let q = random_state(&mesh, &mut rng, 0.1);
                let (dir, coord) = fd_errors(&p, &q, &mut rng);
                assert!(dir < 1e-6 && coord < 1e-6, "{dir} {coord}");
            }
        }
    }
}

#[test]
fn hessian_matches_gradient_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mesh = disc(3);
    let t = synthetic(1.0);
    let p = PlateProblem::new(&mesh, &t, LoadField::transverse(1.0), PrestrainField::zero()).unwrap();
    let q = random_state(&mesh, &mut rng, 0.2);
    let h = p.dense_hessian(&q);
    assert!((&h - h.transpose()).amax() < 1e-12 * h.amax());
    let step = 1e-6;
    for d in (0..q.len()).filter(|d| !mesh.dof_clamped(*d)).step_by(5) {
        let mut x = q.clone();
        x[d] += step;
        let gp = p.gradient_vec(&x);
        x[d] -= 2.0 * step;
        let gm = p.gradient_vec(&x);
        for r in (0..q.len()).filter(|r| !mesh.dof_clamped(*r)) {
            let fd = (gp[r] - gm[r]) / (2.0 * step);
            assert!((fd - h[(r, d)]).abs() < 1e-6 * h.amax(), "({r},{d}) {fd} vs {}", h[(r, d)]);
        }
    }
}

#[test]
fn bending_patch_energy_is_exact() {
    // w = (a x^2 + b y^2) / 2 + c x y has constant D^2 w = ((a, c), (c, b))
    let (a, b, c) = (0.3, -0.2, 0.15);
    let mut t = synthetic(0.0);
    t.a = [[0.0; 3]; 3];
    let mesh = PlateMesh::new(1.0, 5, 4, "edge:left".parse().unwrap()).unwrap();
    let p = PlateProblem::new(&mesh, &t, LoadField::zero(), PrestrainField::zero()).unwrap();
    let mut q = vec![0.0; mesh.n_dofs()];
    for n in 0..mesh.n_nodes() {
        let [x, y] = mesh.node_coords(n);
        q[6 * n + 2] = 0.5 * (a * x * x + b * y * y) + c * x * y;
        q[6 * n + 3] = a * x + c * y;
        q[6 * n + 4] = b * y + c * x;
        q[6 * n + 5] = c;
    }
    let eta = [-a, -b, -c];
    let mut form = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            form += t.c[i][j] * eta[i] * eta[j];
        }
    }
    let expect = 0.5 * t.vol_b * form * 4.0;
    assert!((p.elastic_energy(&q) - expect).abs() < 1e-13 * expect);
}

#[test]
fn membrane_patch_and_frame_indifference() {
    let t = synthetic(1.0);
    let mesh = PlateMesh::new(1.0, 4, 4, "edge:left".parse().unwrap()).unwrap();
    let p = PlateProblem::new(&mesh, &t, LoadField::zero(), PrestrainField::zero()).unwrap();
    let (e11, e22, g12) = (0.01, -0.02, 0.006);
    let mut q = vec![0.0; mesh.n_dofs()];
    for n in 0..mesh.n_nodes() {
        let [x, y] = mesh.node_coords(n);
        q[6 * n] = e11 * x + g12 * y;
        q[6 * n + 1] = e22 * y;
    }
    let z = [e11, e22, 0.5 * g12];
    let mut form = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            form += t.a[i][j] * z[i] * z[j];
        }
    }
    let e0 = p.elastic_energy(&q);
    assert!((e0 - 0.5 * t.vol_b * form * 4.0).abs() < 1e-13 * e0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..5 {
        let (c1, c2) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let shifted: Vec<f64> = q.iter().enumerate().map(|(d, v)| v + [c1, c2, 0.0, 0.0, 0.0, 0.0][d % 6]).collect();
        assert!((p.elastic_energy(&shifted) - e0).abs() < 1e-12 * e0);
    }
}

#[test]
fn no_load_gives_the_zero_state() {
    let t = synthetic(1.0);
    let mesh = disc(6);
    let sol = solve_vk(&mesh, &t, &LoadField::zero(), &PrestrainField::zero(), &NewtonOptions::default()).unwrap();
    assert_eq!(sol.newton_iterations, 0);
    assert_eq!(sol.energy.total, 0.0);
    assert!(sol.state.to_vec().iter().all(|v| *v == 0.0));
}

#[test]
fn linear_bending_oracle_properties() {
    let t = synthetic(0.0);
    let mesh = disc(8);
    assert!(linear_bending_solve(&mesh, &t.c, t.vol_b, t.vol_y, &LoadField::zero()).unwrap().iter().flatten().all(|v| *v == 0.0));
    let f = LoadField::transverse(1.0);
    let w1 = linear_bending_solve(&mesh, &t.c, t.vol_b, t.vol_y, &f).unwrap();
    let w2 = linear_bending_solve(&mesh, &t.c, t.vol_b, t.vol_y, &f.scaled(2.0)).unwrap();
    for (a, b) in w1.iter().flatten().zip(w2.iter().flatten()) {
        assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1e-12));
    }
    // at the minimizer the stored energy is half the work of the load
    let mut bending = t.clone();
    bending.a = [[0.0; 3]; 3];
    let p = PlateProblem::new(&mesh, &bending, f, PrestrainField::zero()).unwrap();
    let q = PlateState { um: vec![[0.0; 2]; mesh.n_nodes()], u3: w1 }.to_vec();
    let stored = p.elastic_energy(&q);
    let work: f64 = p.load_vector().iter().zip(&q).map(|(a, b)| a * b).sum();
    assert!((stored - 0.5 * work).abs() < 1e-10 * stored, "{stored} vs {}", 0.5 * work);
}

#[test]
fn small_load_matches_linear_bending() {
    let t = synthetic(0.0);
    let mesh = disc(16);
    let unit = LoadField::transverse(1.0);
    let w_unit = linear_bending_solve(&mesh, &t.c, t.vol_b, t.vol_y, &unit).unwrap();
    let peak = w_unit.iter().map(|w| w[0].abs()).fold(0.0, f64::max);
    let scale = 0.005 * mesh.l / peak;
    let load = unit.scaled(scale);
    let sol = solve_vk(&mesh, &t, &load, &PrestrainField::zero(), &NewtonOptions::default()).unwrap();
    assert!(sol.newton_iterations <= 5, "{}", sol.newton_iterations);
    assert!(sol.trace.windows(2).all(|w| w[1].energy <= w[0].energy));
    let diff = sol.state.u3.iter().zip(&w_unit).map(|(a, b)| (a[0] - scale * b[0]).abs()).fold(0.0, f64::max);
    assert!(diff < 0.02 * scale * peak, "{diff}");
}

#[test]
fn square_symmetric_problem_has_symmetric_deflection() {
    let t = synthetic(0.0);
    let mesh = disc(8);
    let sol = solve_vk(&mesh, &t, &LoadField::transverse(0.05), &PrestrainField::zero(), &NewtonOptions::default()).unwrap();
    let w = |i: usize, j: usize| sol.state.u3[mesh.node(i, j)][0];
    let peak = sol.state.max_abs_deflection();
    assert!(peak > 0.0);
    for i in 0..=8 {
        for j in 0..=8 {
            assert!((w(i, j) - w(j, i)).abs() <= 1e-8 * peak);
        }
    }
}

#[test]
fn in_plane_load_keeps_the_plate_flat() {
    let t = synthetic(0.0);
    let mesh = disc(8);
    let load: LoadField = "f1=gauss:0.5,0,0.3,1;f2=const:-0.5".parse().unwrap();
    let sol = solve_vk(&mesh, &t, &load, &PrestrainField::zero(), &NewtonOptions::default()).unwrap();
    assert!(sol.state.max_abs_deflection() == 0.0);
    assert!(sol.state.um.iter().any(|u| u[0] != 0.0));
    let p = PlateProblem::new(&mesh, &t, load, PrestrainField::zero()).unwrap();
    let g = p.gradient(&sol.state);
    assert!(g.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1e-9 * (1.0 + p.load_norm()));
}

#[test]
fn load_ramping_reaches_the_same_tolerance() {
    let t = synthetic(0.0);
    let mesh = disc(8);
    let opts = NewtonOptions { load_steps: 3, ..NewtonOptions::default() };
    let sol = solve_vk(&mesh, &t, &LoadField::transverse(0.1), &PrestrainField::zero(), &opts).unwrap();
    assert_eq!(sol.trace.last().unwrap().load_step, 3);
    for step in 1..=3 {
        let energies: Vec<f64> = sol.trace.iter().filter(|e| e.load_step == step).map(|e| e.energy).collect();
        assert!(energies.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn prestrain_shifts_energy_but_not_iterates() {
    let t = synthetic(0.0);
    let mesh = disc(8);
    let load = LoadField::transverse(0.05);
    let b = PrestrainField::from_matrix([[0.02, 0.01, 0.0], [0.01, -0.01, 0.0], [0.0, 0.0, 0.03]]);
    let f0: LoadField = "f3=const:0.05".parse().unwrap();
    let plain = solve_vk_recording(&mesh, &t, &load, &PrestrainField::zero(), &NewtonOptions::default()).unwrap();
    let pre = solve_vk_recording(&mesh, &t, &f0, &b, &NewtonOptions::default()).unwrap();
    assert_eq!(plain.iterates, pre.iterates);
    let m = isotropic_hooke(0.3, 0.2).unwrap();
    let expect = t.vol_m * 0.5 * m.quad(&b.sym_b) * 4.0;
    let diff = pre.energy.total - plain.energy.total;
    assert!((diff - expect).abs() < 1e-12 * expect, "{diff} vs {expect}");
}

