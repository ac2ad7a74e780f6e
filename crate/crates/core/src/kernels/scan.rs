//! Diagonal state-space recurrence over a sequence.
//!
//! For every channel `d` and state `k`:
//!
//! ```text
//! X_t[d,k] = exp(-Δ[d]·A[d,k]) · X_{t-1}[d,k] + B[d,k] · U_t[d]
//! Y_t[d]   = Σ_k C[d,k] · X_t[d,k] + D[d] · U_t[d]
//! ```
//!
//! with `X_0 = 0`. The forward pass keeps the state only at chunk boundaries;
//! the backward pass replays one chunk at a time, so memory stays at
//! `O((T / CHUNK + CHUNK) · channels · states)`.

use crate::error::{GsanError, Result};
use crate::tensor::Real;

pub const CHUNK: usize = 64;

#[derive(Clone, Copy)]
pub struct ScanParams<'a> {
    pub delta: &'a [Real],
    pub a: &'a [Real],
    pub b: &'a [Real],
    pub c: &'a [Real],
    pub d: &'a [Real],
    pub channels: usize,
    pub states: usize,
}

impl ScanParams<'_> {
    /// `exp(-Δ[d]·A[d,k])`, rejecting any factor above 1.
    pub fn decay(&self) -> Result<Vec<Real>> {
        let mut out = Vec::with_capacity(self.channels * self.states);
        for d in 0..self.channels {
            for k in 0..self.states {
                let r = (-self.delta[d] * self.a[d * self.states + k]).exp();
                if !r.is_finite() || r > 1.0 {
                    return Err(GsanError::UnstableDecay {
                        factor: r as f64,
                        channel: d,
                        state: k,
                    });
                }
                out.push(r);
            }
        }
        Ok(out)
    }
}

pub struct ScanOutput {
    pub y: Vec<Real>,
    /// State before step `c * CHUNK`, for each chunk `c`.
    pub checkpoints: Vec<Vec<Real>>,
    pub decay: Vec<Real>,
}

fn step(
    state: &mut [Real],
    decay: &[Real],
    p: &ScanParams<'_>,
    u_row: &[Real],
    y_row: Option<&mut [Real]>,
) {
    let ks = p.states;
    match y_row {
        Some(y_row) => {
            for d in 0..p.channels {
                let u = u_row[d];
                let mut acc = p.d[d] * u;
                for k in 0..ks {
                    let i = d * ks + k;
                    state[i] = decay[i] * state[i] + p.b[i] * u;
                    acc += p.c[i] * state[i];
                }
                y_row[d] = acc;
            }
        }
        None => {
            for d in 0..p.channels {
                let u = u_row[d];
                for k in 0..ks {
                    let i = d * ks + k;
                    state[i] = decay[i] * state[i] + p.b[i] * u;
                }
            }
        }
    }
}

pub fn forward(u: &[Real], steps: usize, p: &ScanParams<'_>) -> Result<ScanOutput> {
    let decay = p.decay()?;
    let (ch, ks) = (p.channels, p.states);
    let mut state = vec![0.0; ch * ks];
    let mut y = vec![0.0; steps * ch];
    let mut checkpoints = Vec::with_capacity(steps.div_ceil(CHUNK));
    for t in 0..steps {
        if t % CHUNK == 0 {
            checkpoints.push(state.clone());
        }
        step(
            &mut state,
            &decay,
            p,
            &u[t * ch..(t + 1) * ch],
            Some(&mut y[t * ch..(t + 1) * ch]),
        );
    }
    Ok(ScanOutput {
        y,
        checkpoints,
        decay,
    })
}

/// Final state `X_T` after consuming all of `u`.
pub fn final_state(u: &[Real], steps: usize, p: &ScanParams<'_>) -> Result<Vec<Real>> {
    let decay = p.decay()?;
    let ch = p.channels;
    let mut state = vec![0.0; ch * p.states];
    for t in 0..steps {
        step(&mut state, &decay, p, &u[t * ch..(t + 1) * ch], None);
    }
    Ok(state)
}

pub struct ScanGrads {
    pub u: Vec<Real>,
    pub delta: Vec<Real>,
    pub a: Vec<Real>,
    pub b: Vec<Real>,
    pub c: Vec<Real>,
    pub d: Vec<Real>,
}

pub fn backward(
    grad_y: &[Real],
    u: &[Real],
    steps: usize,
    p: &ScanParams<'_>,
    fwd: &ScanOutput,
) -> ScanGrads {
    let (ch, ks) = (p.channels, p.states);
    let n = ch * ks;
    let decay = &fwd.decay;
    let mut gu = vec![0.0; steps * ch];
    let mut gb = vec![0.0; n];
    let mut gc = vec![0.0; n];
    let mut gd = vec![0.0; ch];
    let mut gdecay = vec![0.0; n];
    // dL/dX_{t+1} · r, carried backwards in time
    let mut carry = vec![0.0; n];
    let mut states = vec![0.0; (CHUNK + 1) * n];

    for (chunk, start_state) in fwd.checkpoints.iter().enumerate().rev() {
        let start = chunk * CHUNK;
        let end = (start + CHUNK).min(steps);
        // states[0] = X_{start-1}; states[j+1] = X_{start+j}
        states[..n].copy_from_slice(start_state);
        for t in start..end {
            let j = t - start;
            let (prev, next) = states.split_at_mut((j + 1) * n);
            next[..n].copy_from_slice(&prev[j * n..]);
            step(&mut next[..n], decay, p, &u[t * ch..(t + 1) * ch], None);
        }
        for t in (start..end).rev() {
            let j = t - start;
            let x_prev = &states[j * n..(j + 1) * n];
            let x_now = &states[(j + 1) * n..(j + 2) * n];
            for d in 0..ch {
                let g = grad_y[t * ch + d];
                let uv = u[t * ch + d];
                gd[d] += g * uv;
                let mut du = p.d[d] * g;
                for k in 0..ks {
                    let i = d * ks + k;
                    let lam = g * p.c[i] + carry[i];
                    gc[i] += g * x_now[i];
                    gb[i] += lam * uv;
                    du += lam * p.b[i];
                    gdecay[i] += lam * x_prev[i];
                    carry[i] = decay[i] * lam;
                }
                gu[t * ch + d] = du;
            }
        }
    }

    let mut gdelta = vec![0.0; ch];
    let mut ga = vec![0.0; n];
    for d in 0..ch {
        for k in 0..ks {
            let i = d * ks + k;
            // r = exp(-Δ A): dr/dΔ = -A r, dr/dA = -Δ r
            let dr = gdecay[i] * decay[i];
            gdelta[d] -= dr * p.a[i];
            ga[i] -= dr * p.delta[d];
        }
    }
    ScanGrads {
        u: gu,
        delta: gdelta,
        a: ga,
        b: gb,
        c: gc,
        d: gd,
    }
}

/// Constant-input reading of the recurrence: every row `u_i` is held fixed for
/// `repeats` steps and the last output is returned, independently per row.
///
/// `Y_i[d] = Σ_k C[d,k]·B[d,k]·G[d,k]·u_i[d] + D[d]·u_i[d]` with
/// `G = Σ_{s<repeats} r^s`.
pub fn constant_forward(u: &[Real], rows: usize, repeats: usize, p: &ScanParams<'_>) -> Result<Vec<Real>> {
    let decay = p.decay()?;
    let (ch, ks) = (p.channels, p.states);
    let gain: Vec<Real> = (0..ch)
        .map(|d| {
            (0..ks)
                .map(|k| {
                    let i = d * ks + k;
                    p.c[i] * p.b[i] * geometric(decay[i], repeats).0
                })
                .sum::<Real>()
                + p.d[d]
        })
        .collect();
    let mut y = vec![0.0; rows * ch];
    for r in 0..rows {
        for d in 0..ch {
            y[r * ch + d] = gain[d] * u[r * ch + d];
        }
    }
    Ok(y)
}

/// `(Σ_{s<n} r^s, Σ_{s<n} s·r^{s-1})`
fn geometric(r: Real, n: usize) -> (Real, Real) {
    let mut sum = 0.0;
    let mut deriv = 0.0;
    let mut pow = 1.0;
    for s in 0..n {
        sum += pow;
        if s + 1 < n {
            deriv += (s + 1) as Real * pow;
        }
        pow *= r;
    }
    (sum, deriv)
}

pub fn constant_backward(
    grad_y: &[Real],
    u: &[Real],
    rows: usize,
    repeats: usize,
    p: &ScanParams<'_>,
) -> Result<ScanGrads> {
    let decay = p.decay()?;
    let (ch, ks) = (p.channels, p.states);
    let n = ch * ks;
    // s[d] = Σ_rows g·u
    let mut s = vec![0.0; ch];
    for r in 0..rows {
        for d in 0..ch {
            s[d] += grad_y[r * ch + d] * u[r * ch + d];
        }
    }
    let mut gain = vec![0.0; ch];
    let mut gb = vec![0.0; n];
    let mut gc = vec![0.0; n];
    let mut ga = vec![0.0; n];
    let mut gdelta = vec![0.0; ch];
    for d in 0..ch {
        gain[d] = p.d[d];
        for k in 0..ks {
            let i = d * ks + k;
            let (geo, dgeo) = geometric(decay[i], repeats);
            gain[d] += p.c[i] * p.b[i] * geo;
            gc[i] = s[d] * p.b[i] * geo;
            gb[i] = s[d] * p.c[i] * geo;
            let dr = s[d] * p.c[i] * p.b[i] * dgeo * decay[i];
            gdelta[d] -= dr * p.a[i];
            ga[i] = -dr * p.delta[d];
        }
    }
    let mut gu = vec![0.0; rows * ch];
    for r in 0..rows {
        for d in 0..ch {
            gu[r * ch + d] = gain[d] * grad_y[r * ch + d];
        }
    }
    Ok(ScanGrads {
        u: gu,
        delta: gdelta,
        a: ga,
        b: gb,
        c: gc,
        d: s,
    })
}
