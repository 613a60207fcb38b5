// temporary instrumentation: replicate the splitting loop with logging
use ndarray::{Array1, Array2};
use oco_s2_core::comparator::*;
use oco_s2_core::costs::CostConfig;
use oco_s2_core::linalg::norm2;
use oco_s2_core::lti::*;

fn clamp_box(u: &Array2<f64>) -> Array2<f64> { u.mapv(|x| x.clamp(0.0, 1.0)) }

fn apply_diff(u: &Array2<f64>) -> Array2<f64> {
    let t_len = u.nrows();
    let mut z = Array2::zeros((t_len - 1, u.ncols()));
    for r in 0..t_len - 1 { let row = &u.row(r + 1) - &u.row(r); z.row_mut(r).assign(&row); }
    z
}

fn project_path_ball(z: &Array2<f64>, v: f64) -> (Array2<f64>, usize) {
    let norms: Vec<f64> = (0..z.nrows()).map(|r| norm2(&z.row(r).to_owned())).collect();
    let total: f64 = norms.iter().sum();
    if total <= v { return (z.clone(), z.nrows()); }
    let mut sorted = norms.clone();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0; let mut tau = 0.0; let mut kstar = 0;
    for (k, &s) in sorted.iter().enumerate() {
        cumsum += s;
        let cand = (cumsum - v) / (k + 1) as f64;
        if s - cand > 0.0 { tau = cand; kstar = k + 1; } else { break; }
    }
    let mut out = Array2::zeros(z.raw_dim());
    for r in 0..z.nrows() {
        if norms[r] > tau {
            let s = (norms[r] - tau) / norms[r];
            let row = &z.row(r) * s; out.row_mut(r).assign(&row);
        }
    }
    (out, kstar)
}

fn main() {
    let t_len = 400usize;
    let model = SystemModel::diagonal(10, 0.95, 0.1, -0.1).unwrap();
    let cfg = CostConfig::coordinate_owned(0.2, 0.8, 10).unwrap();
    let d = generate_disturbances(t_len, 10, 0, &DisturbanceParams::default()).unwrap();
    let v = default_budget(&d, 0.45);
    println!("V_T = {v}");

    // mirror of the production loop (gamma = 1/L)
    let gain = 0.1 / 0.05;
    let l = 0.8 + 0.2 * gain * gain;
    let gamma = 1.0 / l;

    // tridiagonal solve via dense Gaussian elimination for the probe
    let gp = |y_u: &Array2<f64>, y_z: &Array2<f64>| -> (Array2<f64>, Array2<f64>) {
        let t = y_u.nrows(); let n = y_u.ncols();
        // rhs = y_u + D^T y_z
        let mut rhs = y_u.clone();
        for r in 0..t - 1 {
            for j in 0..n { rhs[[r, j]] -= y_z[[r, j]]; rhs[[r + 1, j]] += y_z[[r, j]]; }
        }
        // Thomas
        let diag = |i: usize| if i == 0 || i == t - 1 { 2.0 } else { 3.0 };
        let mut denom = vec![0.0; t]; let mut upper = vec![0.0; t];
        denom[0] = diag(0); upper[0] = -1.0 / denom[0];
        for i in 1..t { denom[i] = diag(i) + upper[i - 1]; if i < t - 1 { upper[i] = -1.0 / denom[i]; } }
        let mut u = Array2::zeros((t, n));
        for j in 0..n {
            let mut work = vec![0.0; t];
            work[0] = rhs[[0, j]] / denom[0];
            for i in 1..t { work[i] = (rhs[[i, j]] + work[i - 1]) / denom[i]; }
            u[[t - 1, j]] = work[t - 1];
            for i in (0..t - 1).rev() { u[[i, j]] = work[i] - upper[i] * u[[i + 1, j]]; }
        }
        let z = apply_diff(&u);
        (u, z)
    };

    let grad = |u: &Array2<f64>| -> (f64, Array2<f64>) {
        let n_chi = 10;
        let mut chis = Array2::<f64>::zeros((t_len, n_chi));
        let mut value = 0.0;
        let mut chi = Array1::<f64>::zeros(n_chi);
        for t in 1..=t_len {
            if t >= 2 {
                chi = model.a().dot(&chi) + model.b().dot(&u.row(t - 2)) + model.e().dot(&d.at(t - 1));
            }
            chis.row_mut(t - 1).assign(&chi);
            let track = &u.row(t - 1) - &d.at(t);
            value += 0.1 * chi.iter().map(|x| x * x).sum::<f64>() + 0.4 * track.iter().map(|x| x * x).sum::<f64>();
        }
        let a_t = model.a().t(); let b_t = model.b().t();
        let mut g = Array2::<f64>::zeros((t_len, 10));
        let mut p = Array1::<f64>::zeros(n_chi);
        for s in (1..=t_len).rev() {
            let track = (&u.row(s - 1) - &d.at(s)) * 0.8;
            let row = &b_t.dot(&p) * 0.2 + &track;
            g.row_mut(s - 1).assign(&row);
            if s >= 2 { p = &chis.row(s - 1) + &a_t.dot(&p); }
        }
        (value, g)
    };

    let mut w_u = clamp_box(d.data());
    let (z0, _) = project_path_ball(&apply_diff(&w_u), v);
    let mut w_z = z0;
    for iter in 0..20000 {
        let u_g = clamp_box(&w_u);
        let (z_g, kstar) = project_path_ball(&w_z, v);
        let (f, g) = grad(&u_g);
        let y_u = &(&u_g * 2.0) - &w_u - &(&g * gamma);
        let y_z = &(&z_g * 2.0) - &w_z;
        let (u_f, z_f) = gp(&y_u, &y_z);
        let r_u = u_f.iter().zip(u_g.iter()).fold(0f64, |m, (a, b)| m.max((a - b).abs()));
        let r_z = z_f.iter().zip(z_g.iter()).fold(0f64, |m, (a, b)| m.max((a - b).abs()));
        if iter % 500 == 0 || iter == 19999 {
            println!("iter {iter}: r_u={r_u:.3e} r_z={r_z:.3e} f={f:.12} active={kstar} path={:.9}", path_length(&u_g));
        }
        w_u += &(&u_f - &u_g);
        w_z += &(&z_f - &z_g);
    }
}
