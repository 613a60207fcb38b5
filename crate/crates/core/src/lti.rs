//! Stateful dynamics layer: state evolution, synthetic disturbance
//! generation, and the finite-window / diagonal surrogate states.
//!
//! Time is 1-indexed throughout: the state recursion is
//! `χ_{t+1} = A χ_t + B u_t + E d_t` with the zero-padding convention
//! `u_t = 0`, `d_t = 0` for `t ≤ 0`, so `χ_1 = 0`.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::linalg::{norm2, spectral_norm};
use crate::rng::{fnv1a, substream, STREAM_DISTURBANCE, STREAM_SHIFTS};
use crate::{config_err, Result};

/// Stable linear system `χ_{t+1} = A χ_t + B u_t + E d_t` together with its
/// fading-memory certificate `‖A^k‖ ≤ C_A ρ^k`.
#[derive(Debug, Clone)]
pub struct SystemModel {
    a: Array2<f64>,
    b: Array2<f64>,
    e: Array2<f64>,
    c_a: f64,
    rho: f64,
}

impl SystemModel {
    /// Builds a model and numerically checks the stability certificate for
    /// powers `k = 0..=k_check`.
    pub fn new(
        a: Array2<f64>,
        b: Array2<f64>,
        e: Array2<f64>,
        c_a: f64,
        rho: f64,
        k_check: usize,
    ) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return config_err("A must be square");
        }
        if b.nrows() != n {
            return config_err("B must have as many rows as A");
        }
        if e.nrows() != n {
            return config_err("E must have as many rows as A");
        }
        if !(c_a >= 1.0 && c_a.is_finite()) {
            return config_err("C_A must be a finite scalar >= 1");
        }
        if !(rho > 0.0 && rho < 1.0) {
            return config_err("rho must lie in (0, 1)");
        }
        let model = SystemModel { a, b, e, c_a, rho };
        model.verify_stability(k_check)?;
        Ok(model)
    }

    /// The diagonal instance `A = a_d·I`, `B = b_d·I`, `E = e_d·I` with the
    /// exact certificate `C_A = 1`, `ρ = |a_d|` (since `‖(a_d I)^k‖ = |a_d|^k`).
    pub fn diagonal(n: usize, a_d: f64, b_d: f64, e_d: f64) -> Result<Self> {
        if n == 0 {
            return config_err("dimension must be positive");
        }
        if !(a_d.abs() > 0.0 && a_d.abs() < 1.0) {
            return config_err("diagonal instance needs 0 < |a_d| < 1");
        }
        Ok(SystemModel {
            a: Array2::from_diag_elem(n, a_d),
            b: Array2::from_diag_elem(n, b_d),
            e: Array2::from_diag_elem(n, e_d),
            c_a: 1.0,
            rho: a_d.abs(),
        })
    }

    /// Checks `‖A^k‖ ≤ C_A ρ^k` for `k = 0..=k_check` (small float slack for
    /// the accumulated matrix powers).
    pub fn verify_stability(&self, k_check: usize) -> Result<()> {
        let n = self.n_chi();
        let mut power = Array2::eye(n);
        for k in 0..=k_check {
            let norm = spectral_norm(&power);
            let bound = self.c_a * self.rho.powi(k as i32);
            if norm > bound * (1.0 + 1e-9) + 1e-14 {
                return config_err(format!(
                    "stability certificate violated at k={k}: ||A^k|| = {norm} > C_A rho^k = {bound}"
                ));
            }
            if k < k_check {
                power = power.dot(&self.a);
            }
        }
        Ok(())
    }

    pub fn a(&self) -> &Array2<f64> {
        &self.a
    }
    pub fn b(&self) -> &Array2<f64> {
        &self.b
    }
    pub fn e(&self) -> &Array2<f64> {
        &self.e
    }
    pub fn c_a(&self) -> f64 {
        self.c_a
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }
    pub fn n_chi(&self) -> usize {
        self.a.nrows()
    }
    pub fn n_u(&self) -> usize {
        self.b.ncols()
    }
    pub fn n_d(&self) -> usize {
        self.e.ncols()
    }

    /// Uniform state bound `D_χ = C_A/(1−ρ)·(‖B‖R + ‖E‖D_d)` for decisions of
    /// norm at most `r` and disturbances of norm at most `d_d`.
    pub fn state_norm_bound(&self, r: f64, d_d: f64) -> f64 {
        self.c_a / (1.0 - self.rho) * (spectral_norm(&self.b) * r + spectral_norm(&self.e) * d_d)
    }

    fn check_step_dims(&self, chi: usize, u: usize, d: usize) -> Result<()> {
        if chi != self.n_chi() || u != self.n_u() || d != self.n_d() {
            return config_err(format!(
                "dimension mismatch: got chi={chi}, u={u}, d={d}; model expects {}, {}, {}",
                self.n_chi(),
                self.n_u(),
                self.n_d()
            ));
        }
        Ok(())
    }
}

/// One step of the dynamics: `A χ + B u + E d`.
pub fn step(
    model: &SystemModel,
    chi: ArrayView1<f64>,
    u: ArrayView1<f64>,
    d: ArrayView1<f64>,
) -> Result<Array1<f64>> {
    model.check_step_dims(chi.len(), u.len(), d.len())?;
    Ok(model.a.dot(&chi) + model.b.dot(&u) + model.e.dot(&d))
}

/// Knobs of the synthetic disturbance generator: per-coordinate sinusoids,
/// a small number of piecewise level shifts, and clipped Gaussian noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceParams {
    pub amp_range: (f64, f64),
    pub freq_range: (f64, f64),
    pub n_shifts: usize,
    pub shift_mag: f64,
    pub noise_std: f64,
    pub clip: f64,
}

impl Default for DisturbanceParams {
    fn default() -> Self {
        DisturbanceParams {
            amp_range: (0.1, 0.3),
            freq_range: (1.0 / 40.0, 1.0 / 15.0),
            n_shifts: 2,
            shift_mag: 0.2,
            noise_std: 0.02,
            clip: 0.05,
        }
    }
}

impl DisturbanceParams {
    fn validate(&self) -> Result<()> {
        let ranges = [self.amp_range, self.freq_range];
        for (lo, hi) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return config_err("disturbance parameter ranges must be finite with lo <= hi");
            }
        }
        if !(self.shift_mag >= 0.0 && self.noise_std >= 0.0 && self.clip >= 0.0) {
            return config_err("shift magnitude, noise std, and clip must be nonnegative");
        }
        Ok(())
    }

    fn fingerprint_bytes(&self, out: &mut Vec<u8>) {
        for v in [
            self.amp_range.0,
            self.amp_range.1,
            self.freq_range.0,
            self.freq_range.1,
            self.shift_mag,
            self.noise_std,
            self.clip,
        ] {
            out.extend_from_slice(&v.to_bits().to_le_bytes());
        }
        out.extend_from_slice(&(self.n_shifts as u64).to_le_bytes());
    }
}

/// A realized disturbance sequence `d_1..d_T` with its recorded bound
/// `D_d = max_t ‖d_t‖₂` and a provenance fingerprint of `(seed, T, n_d, params)`.
#[derive(Debug, Clone)]
pub struct DisturbanceSequence {
    data: Array2<f64>,
    d_max: f64,
    seed: u64,
    params: DisturbanceParams,
    provenance: u64,
}

impl DisturbanceSequence {
    /// Row `t-1` is `d_t`.
    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }
    pub fn at(&self, t: usize) -> ArrayView1<'_, f64> {
        self.data.row(t - 1)
    }
    pub fn horizon(&self) -> usize {
        self.data.nrows()
    }
    pub fn dim(&self) -> usize {
        self.data.ncols()
    }
    /// Realized bound `D_d`; recorded rather than assumed so bound checks are tight.
    pub fn d_max(&self) -> f64 {
        self.d_max
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn params(&self) -> &DisturbanceParams {
        &self.params
    }
    pub fn provenance(&self) -> u64 {
        self.provenance
    }

    /// Wraps an explicit array (tests and file-driven runs).
    pub fn from_array(data: Array2<f64>, seed: u64) -> Self {
        let d_max = data
            .rows()
            .into_iter()
            .map(|r| norm2(&r.to_owned()))
            .fold(0.0_f64, f64::max);
        let params = DisturbanceParams::default();
        let provenance = fingerprint(seed ^ 0x5eed_da7a, data.nrows(), data.ncols(), &params);
        DisturbanceSequence {
            data,
            d_max,
            seed,
            params,
            provenance,
        }
    }
}

fn fingerprint(seed: u64, t_len: usize, n_d: usize, params: &DisturbanceParams) -> u64 {
    let mut bytes = Vec::with_capacity(80);
    bytes.extend_from_slice(&seed.to_le_bytes());
    bytes.extend_from_slice(&(t_len as u64).to_le_bytes());
    bytes.extend_from_slice(&(n_d as u64).to_le_bytes());
    params.fingerprint_bytes(&mut bytes);
    fnv1a(&bytes)
}

/// Generates `d_1..d_T`. Deterministic given `(seed, params)`: the sinusoid
/// draws and noise use one substream, the shift schedule another.
pub fn generate_disturbances(
    t_len: usize,
    n_d: usize,
    seed: u64,
    params: &DisturbanceParams,
) -> Result<DisturbanceSequence> {
    if t_len == 0 {
        return config_err("horizon must be at least 1");
    }
    if n_d == 0 {
        return config_err("disturbance dimension must be positive");
    }
    params.validate()?;

    let mut rng = substream(seed, STREAM_DISTURBANCE);
    let mut amps = Vec::with_capacity(n_d);
    let mut freqs = Vec::with_capacity(n_d);
    let mut phases = Vec::with_capacity(n_d);
    for _ in 0..n_d {
        amps.push(sample_range(&mut rng, params.amp_range));
        freqs.push(sample_range(&mut rng, params.freq_range));
        phases.push(rng.gen_range(0.0..std::f64::consts::TAU));
    }

    let mut shift_rng = substream(seed, STREAM_SHIFTS);
    // shift_levels[j][t-1] = piecewise-constant level of coordinate j at round t
    let mut shift_levels = vec![vec![0.0_f64; t_len]; n_d];
    for levels in shift_levels.iter_mut() {
        for _ in 0..params.n_shifts {
            let at = shift_rng.gen_range(1..=t_len);
            let delta = shift_rng.gen_range(-params.shift_mag..=params.shift_mag);
            for (t0, level) in levels.iter_mut().enumerate() {
                if t0 + 1 >= at {
                    *level += delta;
                }
            }
        }
    }

    let normal = Normal::new(0.0, params.noise_std.max(f64::MIN_POSITIVE))
        .map_err(|e| crate::Error::Config(e.to_string()))?;
    let mut data = Array2::zeros((t_len, n_d));
    for t0 in 0..t_len {
        for j in 0..n_d {
            let t = (t0 + 1) as f64;
            let wave = amps[j] * (std::f64::consts::TAU * freqs[j] * t + phases[j]).sin();
            let noise = if params.noise_std > 0.0 {
                let raw: f64 = normal.sample(&mut rng);
                raw.clamp(-params.clip, params.clip)
            } else {
                0.0
            };
            data[[t0, j]] = wave + shift_levels[j][t0] + noise;
        }
    }

    let d_max = data
        .rows()
        .into_iter()
        .map(|r| norm2(&r.to_owned()))
        .fold(0.0_f64, f64::max);
    Ok(DisturbanceSequence {
        data,
        d_max,
        seed,
        provenance: fingerprint(seed, t_len, n_d, params),
        params: params.clone(),
    })
}

fn sample_range(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// A realized run: decisions, states, and (once attached) stage costs.
///
/// `states` has `T+1` rows; row `t-1` is `χ_t`, so row 0 is `χ_1 = 0` and the
/// last row is the terminal `χ_{T+1}`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub u: Array2<f64>,
    pub states: Array2<f64>,
    pub stage_costs: Option<Array1<f64>>,
    pub provenance: u64,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.u.nrows()
    }
    /// `χ_t` for `t = 1..=T+1`.
    pub fn state_at(&self, t: usize) -> ArrayView1<'_, f64> {
        self.states.row(t - 1)
    }
    /// `u_t` for `t = 1..=T`.
    pub fn decision_at(&self, t: usize) -> ArrayView1<'_, f64> {
        self.u.row(t - 1)
    }

    /// Re-checks `χ_{t+1} − (Aχ_t + Bu_t + Ed_t)` and returns the largest
    /// componentwise residual.
    pub fn dynamics_residual_max(&self, model: &SystemModel, d: &DisturbanceSequence) -> f64 {
        let t_len = self.horizon();
        let mut worst = 0.0_f64;
        for t in 1..=t_len {
            let pred = model.a.dot(&self.state_at(t))
                + model.b.dot(&self.decision_at(t))
                + model.e.dot(&d.at(t));
            for (got, want) in self.state_at(t + 1).iter().zip(pred.iter()) {
                worst = worst.max((got - want).abs());
            }
        }
        worst
    }
}

/// Forward recursion over the whole horizon.
pub fn simulate(
    model: &SystemModel,
    u: &Array2<f64>,
    d: &DisturbanceSequence,
) -> Result<Trajectory> {
    let t_len = u.nrows();
    if t_len != d.horizon() {
        return config_err(format!(
            "decision sequence has {} rounds but disturbances have {}",
            t_len,
            d.horizon()
        ));
    }
    if u.ncols() != model.n_u() || d.dim() != model.n_d() {
        return config_err("decision/disturbance width does not match the model");
    }
    let n = model.n_chi();
    let mut states = Array2::zeros((t_len + 1, n));
    let mut chi = Array1::zeros(n);
    for t in 1..=t_len {
        chi = model.a.dot(&chi) + model.b.dot(&u.row(t - 1)) + model.e.dot(&d.at(t));
        states.row_mut(t).assign(&chi);
    }
    Ok(Trajectory {
        u: u.clone(),
        states,
        stage_costs: None,
        provenance: d.provenance(),
    })
}

/// `χ_t` evaluated from the unrolled representation
/// `χ_t = Σ_{i=0}^{t-2} A^i (B u_{t-1-i} + E d_{t-1-i})` — an independent
/// route used to cross-check the recursion.
pub fn unrolled_state(
    model: &SystemModel,
    u: &Array2<f64>,
    d: &DisturbanceSequence,
    t: usize,
) -> Array1<f64> {
    // Horner over the window: acc <- A·acc + v_s for s = t-1 down to 1.
    let mut acc = Array1::zeros(model.n_chi());
    for s in 1..t {
        acc = model.a.dot(&acc);
        // lag order: contributions enter oldest-first so each gets one more A
        let idx = s; // v_s with s = 1..t-1, applied oldest to newest
        let v = model.b.dot(&u.row(idx - 1)) + model.e.dot(&d.at(idx));
        acc += &v;
    }
    acc
}

/// All states via the unrolled representation (rows as in [`Trajectory`]).
pub fn unrolled_states(model: &SystemModel, u: &Array2<f64>, d: &DisturbanceSequence) -> Array2<f64> {
    let t_len = u.nrows();
    let mut states = Array2::zeros((t_len + 1, model.n_chi()));
    for t in 1..=t_len + 1 {
        states.row_mut(t - 1).assign(&unrolled_state(model, u, d, t));
    }
    states
}

/// Extracts the `H`-deep lag window ending just before round `t` from a
/// 1-indexed sequence, zero-padding lags that reach `t ≤ 0`.
/// Row `i` of the result is the entry at time `t-1-i`.
pub fn lag_window(seq: &Array2<f64>, t: usize, h: usize) -> Array2<f64> {
    let mut win = Array2::zeros((h, seq.ncols()));
    for i in 0..h {
        let time = t as i64 - 1 - i as i64;
        if time >= 1 && (time as usize) <= seq.nrows() {
            win.row_mut(i).assign(&seq.row(time as usize - 1));
        }
    }
    win
}

/// Finite-window state `χ̂_t = Σ_{i=0}^{H-1} A^i (B u_{t-1-i} + E d_{t-1-i})`.
/// Windows are lag-ordered (row `i` ↔ lag `i+1`) and must have exactly `H` rows.
pub fn finite_window_state(
    model: &SystemModel,
    u_window: &Array2<f64>,
    d_window: &Array2<f64>,
) -> Result<Array1<f64>> {
    let h = u_window.nrows();
    if d_window.nrows() != h {
        return config_err("decision and disturbance windows must have the same depth");
    }
    if h == 0 {
        return config_err("window must cover at least one round");
    }
    if u_window.ncols() != model.n_u() || d_window.ncols() != model.n_d() {
        return config_err("window width does not match the model");
    }
    let mut acc = Array1::zeros(model.n_chi());
    for i in (0..h).rev() {
        acc = model.a.dot(&acc);
        let v = model.b.dot(&u_window.row(i)) + model.e.dot(&d_window.row(i));
        acc += &v;
    }
    Ok(acc)
}

/// Diagonal surrogate state `χ̄_t(u) = Σ_{i=0}^{H-1} A^i (B u + E d_{t-1-i})`:
/// the finite-window state with every past action replaced by `u`.
pub fn diagonal_surrogate_state(
    model: &SystemModel,
    u: ArrayView1<f64>,
    d_window: &Array2<f64>,
) -> Result<Array1<f64>> {
    let h = d_window.nrows();
    if h == 0 {
        return config_err("window must cover at least one round");
    }
    if u.len() != model.n_u() || d_window.ncols() != model.n_d() {
        return config_err("dimension mismatch in surrogate state");
    }
    let bu = model.b.dot(&u);
    let mut acc = Array1::zeros(model.n_chi());
    for i in (0..h).rev() {
        acc = model.a.dot(&acc);
        let v = &bu + &model.e.dot(&d_window.row(i));
        acc += &v;
    }
    Ok(acc)
}
