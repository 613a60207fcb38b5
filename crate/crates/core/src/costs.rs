//! Stage costs, the diagonal surrogate cost, its client-wise decomposition,
//! and analytic gradients.
//!
//! The shipped instance is the quadratic
//! `c_t(χ, u) = (α/2)‖χ‖² + (β/2)‖u − d_t‖²` over the unit box. With the
//! diagonal surrogate state `χ̄_t(u) = P u + w_t` (where `P = Σ_{i<H} A^i B`
//! and `w_t = Σ_{i<H} A^i E d_{t-1-i}`), the surrogate cost decomposes
//! exactly across clients: client `i` owns its coordinate set and its local
//! cost is the owned share scaled by `N`, so the average over clients
//! reproduces `c_t(χ̄_t(u), u)` as an identity.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{norm2, spectral_norm, sym_eig_max};
use crate::lti::{DisturbanceSequence, SystemModel};
use crate::rng::{substream, STREAM_CONSTANT_PROBE};
use crate::{config_err, Result};

/// Cost weights and the client ownership map.
#[derive(Debug, Clone)]
pub struct CostConfig {
    pub alpha: f64,
    pub beta: f64,
    /// `ownership[i]` is the coordinate set owned by client `i`; the sets
    /// partition `0..n_u`.
    pub ownership: Vec<Vec<usize>>,
    n_u: usize,
}

impl CostConfig {
    /// Default assignment: client `i` owns coordinate `i`, so `N = n_u`.
    pub fn coordinate_owned(alpha: f64, beta: f64, n_u: usize) -> Result<Self> {
        let ownership = (0..n_u).map(|i| vec![i]).collect();
        CostConfig::with_ownership(alpha, beta, ownership, n_u)
    }

    pub fn with_ownership(
        alpha: f64,
        beta: f64,
        ownership: Vec<Vec<usize>>,
        n_u: usize,
    ) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0 && beta.is_finite() && beta >= 0.0) {
            return config_err("alpha and beta must be finite and nonnegative");
        }
        if ownership.is_empty() {
            return config_err("at least one client is required");
        }
        let mut seen = vec![false; n_u];
        for coords in &ownership {
            for &j in coords {
                if j >= n_u {
                    return config_err(format!("owned coordinate {j} out of range"));
                }
                if seen[j] {
                    return config_err(format!("coordinate {j} owned by two clients"));
                }
                seen[j] = true;
            }
        }
        if seen.iter().any(|&s| !s) {
            return config_err("ownership must cover every coordinate");
        }
        Ok(CostConfig {
            alpha,
            beta,
            ownership,
            n_u,
        })
    }

    pub fn n_clients(&self) -> usize {
        self.ownership.len()
    }
    pub fn n_u(&self) -> usize {
        self.n_u
    }
}

/// `c_t(χ, u) = (α/2)‖χ‖² + (β/2)‖u − d_t‖²`.
pub fn stage_cost(
    chi: ArrayView1<f64>,
    u: ArrayView1<f64>,
    d_t: ArrayView1<f64>,
    cfg: &CostConfig,
) -> f64 {
    debug_assert_eq!(u.len(), d_t.len());
    let chi_sq: f64 = chi.iter().map(|x| x * x).sum();
    let track_sq: f64 = u.iter().zip(d_t.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    0.5 * cfg.alpha * chi_sq + 0.5 * cfg.beta * track_sq
}

/// Precomputed surrogate machinery for one `(model, disturbances, H)` triple:
/// `P = Σ_{i<H} A^i B` and the disturbance convolutions
/// `w_t = Σ_{i<H} A^i E d_{t-1-i}` for every round.
#[derive(Debug, Clone)]
pub struct SurrogateContext<'a> {
    pub model: &'a SystemModel,
    pub cfg: &'a CostConfig,
    pub d: &'a DisturbanceSequence,
    pub h: usize,
    p: Array2<f64>,
    w: Array2<f64>,
}

impl<'a> SurrogateContext<'a> {
    pub fn build(
        model: &'a SystemModel,
        cfg: &'a CostConfig,
        d: &'a DisturbanceSequence,
        h: usize,
    ) -> Result<Self> {
        if h == 0 {
            return config_err("memory length H must be at least 1");
        }
        if cfg.n_u() != model.n_u() {
            return config_err("cost config width does not match the model");
        }
        if model.n_chi() != model.n_u() || model.n_d() != model.n_u() {
            return config_err(
                "the client-wise surrogate decomposition requires n_chi = n_u = n_d",
            );
        }
        if d.dim() != model.n_d() {
            return config_err("disturbance width does not match the model");
        }
        let n = model.n_chi();
        let t_len = d.horizon();

        // P = sum_{i<H} A^i B and the per-lag kernels A^i E.
        let mut p = Array2::zeros((n, model.n_u()));
        let mut kernels: Vec<Array2<f64>> = Vec::with_capacity(h);
        let mut power = Array2::eye(n);
        for i in 0..h {
            p += &power.dot(model.b());
            kernels.push(power.dot(model.e()));
            if i + 1 < h {
                power = power.dot(model.a());
            }
        }

        let mut w = Array2::zeros((t_len, n));
        for t in 1..=t_len {
            let mut acc = Array1::<f64>::zeros(n);
            for (i, kernel) in kernels.iter().enumerate() {
                let time = t as i64 - 1 - i as i64;
                if time >= 1 {
                    acc += &kernel.dot(&d.at(time as usize));
                }
            }
            w.row_mut(t - 1).assign(&acc);
        }

        Ok(SurrogateContext {
            model,
            cfg,
            d,
            h,
            p,
            w,
        })
    }

    pub fn horizon(&self) -> usize {
        self.d.horizon()
    }
    pub fn n_u(&self) -> usize {
        self.cfg.n_u()
    }
    pub fn p(&self) -> &Array2<f64> {
        &self.p
    }
    pub fn w_at(&self, t: usize) -> ArrayView1<'_, f64> {
        self.w.row(t - 1)
    }

    /// `χ̄_t(u) = P u + w_t`.
    pub fn surrogate_state(&self, t: usize, u: ArrayView1<f64>) -> Array1<f64> {
        self.p.dot(&u) + &self.w.row(t - 1)
    }

    /// Diagonal surrogate cost `c_t(χ̄_t(u), u)`.
    pub fn surrogate_cost(&self, t: usize, u: ArrayView1<f64>) -> f64 {
        let chi = self.surrogate_state(t, u);
        stage_cost(chi.view(), u, self.d.at(t), self.cfg)
    }

    /// Local surrogate cost of client `i`: the owned coordinate share of the
    /// surrogate cost, scaled by `N` so the client average is exact.
    pub fn local_cost(&self, client: usize, t: usize, u: ArrayView1<f64>) -> Result<f64> {
        let coords = self.owned(client)?;
        let chi = self.surrogate_state(t, u);
        let d_t = self.d.at(t);
        let n = self.cfg.n_clients() as f64;
        let mut acc = 0.0;
        for &j in coords {
            let track = u[j] - d_t[j];
            acc += 0.5 * self.cfg.alpha * chi[j] * chi[j] + 0.5 * self.cfg.beta * track * track;
        }
        Ok(n * acc)
    }

    /// Analytic gradient of the local surrogate cost:
    /// `∇c_{i,t}(u) = N·(α Σ_{j∈O_i} χ̄_j P_{j,·} + β Σ_{j∈O_i} (u_j − d_{t,j}) e_j)`.
    pub fn local_gradient(&self, client: usize, t: usize, u: ArrayView1<f64>) -> Result<Array1<f64>> {
        let coords = self.owned(client)?;
        let chi = self.surrogate_state(t, u);
        let d_t = self.d.at(t);
        let n = self.cfg.n_clients() as f64;
        let mut g = Array1::zeros(self.n_u());
        for &j in coords {
            let scale = self.cfg.alpha * chi[j];
            for k in 0..self.n_u() {
                g[k] += scale * self.p[[j, k]];
            }
            g[j] += self.cfg.beta * (u[j] - d_t[j]);
        }
        Ok(g * n)
    }

    /// Gradient of the full surrogate cost `α Pᵀ χ̄_t(u) + β (u − d_t)`;
    /// algebraically the client average of the local gradients.
    pub fn full_gradient(&self, t: usize, u: ArrayView1<f64>) -> Array1<f64> {
        let chi = self.surrogate_state(t, u);
        let mut g = self.p.t().dot(&chi) * self.cfg.alpha;
        let d_t = self.d.at(t);
        for k in 0..self.n_u() {
            g[k] += self.cfg.beta * (u[k] - d_t[k]);
        }
        g
    }

    fn owned(&self, client: usize) -> Result<&[usize]> {
        self.cfg
            .ownership
            .get(client)
            .map(|v| v.as_slice())
            .ok_or_else(|| crate::Error::Config(format!("unknown client index {client}")))
    }
}

/// Audited bounds for the analysis assumptions: gradient and smoothness
/// constants, heterogeneity, the state-Lipschitz constant, and the geometry
/// of the unit box.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionConstants {
    /// Bound on every local gradient norm.
    pub g_loc: f64,
    /// Bound on the client-averaged gradient norm.
    pub g_beta: f64,
    /// Smoothness (gradient Lipschitz) constant of the local costs.
    pub l_beta: f64,
    /// Sampled upper bound on the client gradient variance.
    pub sigma_het_sq: f64,
    /// State-Lipschitz constant of the stage cost over the certified state ball.
    pub l_chi: f64,
    /// Decision radius of the unit box, `√n_u`.
    pub r: f64,
    /// Diameter of the unit box, `√n_u`.
    pub d_diam: f64,
    /// Prediction norm scale; defaults to `g_beta` so full block gradients
    /// are admissible predictions.
    pub g_p: f64,
    /// Uniform state bound used for `l_chi`.
    pub d_chi: f64,
}

/// Closed-form corner bounds for the gradient constants plus a sampled
/// maximization for the heterogeneity bound (64 box points × every round).
/// Only the unit box is supported.
pub fn estimate_constants(ctx: &SurrogateContext<'_>) -> AssumptionConstants {
    let cfg = ctx.cfg;
    let n_u = ctx.n_u();
    let n_clients = cfg.n_clients();
    let n_f = n_clients as f64;
    let t_len = ctx.horizon();

    // Per state coordinate j: |χ̄_{t,j}(u)| <= max_{u in box} |p_j·u| + max_t |w_{t,j}|.
    let mut chi_hi = vec![0.0_f64; n_u];
    for j in 0..n_u {
        let mut pos = 0.0;
        let mut neg = 0.0;
        for k in 0..n_u {
            let v = ctx.p[[j, k]];
            if v > 0.0 {
                pos += v;
            } else {
                neg -= v;
            }
        }
        let mut w_hi = 0.0_f64;
        for t in 1..=t_len {
            w_hi = w_hi.max(ctx.w_at(t)[j].abs());
        }
        chi_hi[j] = pos.max(neg) + w_hi;
    }
    // Per decision coordinate k: |u_k - d_{t,k}| <= max over u in [0,1], all t.
    let mut track_hi = vec![0.0_f64; n_u];
    for k in 0..n_u {
        for t in 1..=t_len {
            let d = ctx.d.at(t)[k];
            track_hi[k] = track_hi[k].max(d.abs().max((1.0 - d).abs()));
        }
    }

    // Coordinate-wise gradient envelope per client, then the norm.
    let mut g_loc = 0.0_f64;
    let mut l_beta = 0.0_f64;
    for coords in &cfg.ownership {
        let mut bound_sq = 0.0;
        for k in 0..n_u {
            let mut b = 0.0;
            for &j in coords {
                b += cfg.alpha * chi_hi[j] * ctx.p[[j, k]].abs();
            }
            if coords.contains(&k) {
                b += cfg.beta * track_hi[k];
            }
            bound_sq += (n_f * b) * (n_f * b);
        }
        g_loc = g_loc.max(bound_sq.sqrt());

        // Hessian of the local cost: N(α Σ_{j∈O_i} p_j p_jᵀ + β diag(mask)).
        let mut hess = Array2::zeros((n_u, n_u));
        for &j in coords {
            for k in 0..n_u {
                for l in 0..n_u {
                    hess[[k, l]] += cfg.alpha * ctx.p[[j, k]] * ctx.p[[j, l]];
                }
            }
            hess[[j, j]] += cfg.beta;
        }
        l_beta = l_beta.max(n_f * sym_eig_max(&hess).max(0.0));
    }

    // Averaged gradient envelope.
    let mut g_beta_sq = 0.0;
    for k in 0..n_u {
        let mut b = cfg.beta * track_hi[k];
        for j in 0..n_u {
            b += cfg.alpha * chi_hi[j] * ctx.p[[j, k]].abs();
        }
        g_beta_sq += b * b;
    }
    let g_beta = g_beta_sq.sqrt();

    // Heterogeneity: sampled maximization over 64 box points × all rounds.
    let mut probe = substream(ctx.d.seed(), STREAM_CONSTANT_PROBE);
    let mut sigma_het_sq = 0.0_f64;
    for _ in 0..64 {
        let u = Array1::from_shape_fn(n_u, |_| probe.gen_range(0.0..1.0));
        for t in 1..=t_len {
            let v = client_gradient_variance(ctx, t, u.view());
            sigma_het_sq = sigma_het_sq.max(v);
        }
    }

    let r = (n_u as f64).sqrt();
    let d_diam = (n_u as f64).sqrt();
    let d_chi = ctx.model.state_norm_bound(r, ctx.d.d_max());
    AssumptionConstants {
        g_loc,
        g_beta,
        l_beta,
        sigma_het_sq,
        l_chi: cfg.alpha * d_chi,
        r,
        d_diam,
        g_p: g_beta,
        d_chi,
    }
}

/// `(1/N) Σ_i ‖∇c_{i,t}(u) − (1/N) Σ_j ∇c_{j,t}(u)‖²` at one `(t, u)`.
pub fn client_gradient_variance(ctx: &SurrogateContext<'_>, t: usize, u: ArrayView1<f64>) -> f64 {
    let n = ctx.cfg.n_clients();
    let grads: Vec<Array1<f64>> = (0..n)
        .map(|i| ctx.local_gradient(i, t, u).expect("valid client"))
        .collect();
    let mut mean = Array1::<f64>::zeros(ctx.n_u());
    for g in &grads {
        mean += g;
    }
    mean /= n as f64;
    grads
        .iter()
        .map(|g| {
            let diff = g - &mean;
            norm2(&diff).powi(2)
        })
        .sum::<f64>()
        / n as f64
}

/// One-sided audit helpers used by tests and reports.
impl AssumptionConstants {
    /// `Λ`-style participation factor `(N−m)/(m(N−1))`; `0` at full participation.
    pub fn participation_factor(m: usize, n: usize) -> f64 {
        if m >= n || n <= 1 {
            0.0
        } else {
            (n - m) as f64 / (m as f64 * (n - 1) as f64)
        }
    }
}

/// Spectral norm of a matrix (re-exported here because the audits quote
/// `‖B‖`, `‖E‖` next to the cost constants).
pub fn operator_norm(m: &Array2<f64>) -> f64 {
    spectral_norm(m)
}
