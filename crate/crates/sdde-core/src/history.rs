//! Rolling history buffer for the delayed state and its phase-space norms.
//!
//! A segment stores `u` on the uniform grid `t_now - r = tau_0 < ... <
//! tau_N = t_now` with spacing `dt` dividing `r`, optionally together with
//! the matching derivatives. Delayed lookups interpolate linearly between
//! grid entries and are exact at grid times, which is where the integrator
//! actually lands whenever the lag is a multiple of `dt`.
//!
//! The norms mirror the phase space the well-posedness theory lives in:
//!
//! ```text
//! |phi|_C  = max_i ||u(tau_i)||
//! lip(phi) = max_i ||A^(-1/2) (u(tau_{i+1}) - u(tau_i))|| / dt
//! |phi|_CL = |phi|_C + lip(phi) + ||A^(1/2) u(t_now)||
//! ```
//!
//! These are discrete surrogates: the grid Lipschitz and Hölder quotients
//! lower-bound their continuum counterparts, and agree with them up to grid
//! resolution on histories with bounded second differences.

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::spectral::{SpectralState, Spectrum};

#[derive(Debug, Clone)]
pub struct HistorySegment {
    states: VecDeque<SpectralState>,
    derivs: Option<VecDeque<SpectralState>>,
    r: f64,
    dt: f64,
}

/// Absolute slack accepted when matching times against the buffer grid,
/// scaled by the magnitude of the times involved.
fn time_tol(scale: f64) -> f64 {
    1e-12 * (1.0 + scale.abs())
}

impl HistorySegment {
    /// Fills the buffer by sampling `phi` on the uniform grid over
    /// `[-r, 0]`; the derivative buffer comes from centered differences
    /// (one-sided at the ends).
    pub fn from_function(
        phi: impl Fn(f64) -> SpectralState,
        r: f64,
        dt: f64,
        m: usize,
    ) -> Result<Self> {
        let n = checked_steps(r, dt)?;
        let mut states = VecDeque::with_capacity(n + 1);
        for i in 0..=n {
            let theta = (i as f64 - n as f64) * dt;
            let u = phi(theta);
            if u.order() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: u.order(),
                });
            }
            states.push_back(u.at_time(theta));
        }
        let derivs = finite_difference_derivs(&states, dt);
        Ok(Self {
            states,
            derivs: Some(derivs),
            r,
            dt,
        })
    }

    /// Rebuilds a segment from explicit samples (checkpoint restore, tests).
    /// Validates uniform spacing, matching dimensions, and that the span
    /// equals `r`.
    pub fn from_parts(
        states: Vec<SpectralState>,
        derivs: Option<Vec<SpectralState>>,
        r: f64,
        dt: f64,
    ) -> Result<Self> {
        let n = checked_steps(r, dt)?;
        if states.len() != n + 1 {
            return Err(Error::MalformedSnapshot(format!(
                "expected {} samples spanning r = {r} at dt = {dt}, got {}",
                n + 1,
                states.len()
            )));
        }
        let m = states[0].order();
        for w in states.windows(2) {
            let gap = w[1].time - w[0].time;
            if (gap - dt).abs() > time_tol(w[1].time) * 10.0 {
                return Err(Error::MalformedSnapshot(format!(
                    "non-uniform spacing {gap} between t = {} and t = {}",
                    w[0].time, w[1].time
                )));
            }
        }
        if states.iter().any(|s| s.order() != m) {
            return Err(Error::MalformedSnapshot(
                "inconsistent mode counts across samples".into(),
            ));
        }
        if let Some(d) = &derivs {
            if d.len() != states.len() {
                return Err(Error::MalformedSnapshot(
                    "derivative buffer length differs from state buffer".into(),
                ));
            }
            if d.iter().any(|s| s.order() != m) {
                return Err(Error::MalformedSnapshot(
                    "inconsistent mode counts in derivative buffer".into(),
                ));
            }
        }
        Ok(Self {
            states: states.into(),
            derivs: derivs.map(VecDeque::from),
            r,
            dt,
        })
    }

    /// Drops the oldest entry and appends `(u_new, udot_new)`. `u_new` must
    /// sit exactly one step after the current head.
    pub fn push(&mut self, u_new: SpectralState, udot_new: SpectralState) -> Result<()> {
        let expected = self.t_now() + self.dt;
        if (u_new.time - expected).abs() > time_tol(expected) {
            return Err(Error::NonContiguousPush {
                expected,
                got: u_new.time,
            });
        }
        let m = self.order();
        if u_new.order() != m || udot_new.order() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: u_new.order().min(udot_new.order()),
            });
        }
        self.states.pop_front();
        self.states.push_back(u_new);
        if let Some(d) = &mut self.derivs {
            d.pop_front();
            d.push_back(udot_new.at_time(expected));
        }
        Ok(())
    }

    /// Linear interpolation of the stored history; exact (bit-identical) at
    /// grid times. Queries outside `[t_now - r, t_now]` beyond rounding slack
    /// are rejected: they mean the lag functional escaped its codomain.
    pub fn sample(&self, t_query: f64) -> Result<SpectralState> {
        let lo = self.t_oldest();
        let hi = self.t_now();
        let slack = 1e-9 * self.dt.max(1e-9 * (1.0 + hi.abs()));
        if t_query < lo - slack || t_query > hi + slack {
            return Err(Error::QueryOutsideWindow {
                t: t_query,
                lo,
                hi,
            });
        }
        let t = t_query.clamp(lo, hi);
        let pos = (t - lo) / self.dt;
        let i = (pos.floor() as usize).min(self.states.len() - 2);
        let w = pos - i as f64;
        if w <= 1e-9 {
            return Ok(self.states[i].clone());
        }
        if w >= 1.0 - 1e-9 {
            return Ok(self.states[i + 1].clone());
        }
        let a = &self.states[i];
        let b = &self.states[i + 1];
        let coeffs = a
            .coeffs
            .iter()
            .zip(&b.coeffs)
            .map(|(x, y)| (1.0 - w) * x + w * y)
            .collect();
        Ok(SpectralState::new(coeffs, t))
    }

    /// `max_i ||u(tau_i)||` over the buffer.
    pub fn c_norm(&self) -> f64 {
        self.states.iter().map(SpectralState::norm).fold(0.0, f64::max)
    }

    /// Largest adjacent difference quotient of `A^(-1/2) u`:
    /// `max_i ||A^(-1/2)(u_{i+1} - u_i)|| / dt`.
    pub fn lip_seminorm(&self, s: &Spectrum) -> Result<f64> {
        let mut best = 0.0f64;
        for i in 0..self.states.len() - 1 {
            let d = self.states[i + 1].sub(&self.states[i]);
            let q = s.frac_norm(&d, -0.5)? / self.dt;
            best = best.max(q);
        }
        Ok(best)
    }

    /// Discrete phase-space norm: `c_norm + lip_seminorm + ||A^(1/2) u(t_now)||`.
    pub fn cl_norm(&self, s: &Spectrum) -> Result<f64> {
        Ok(self.c_norm() + self.lip_seminorm(s)? + s.frac_norm(self.head(), 0.5)?)
    }

    /// Largest Hölder quotient `||A^(1-beta)(u_i - u_j)|| / |tau_i - tau_j|^alpha`
    /// over all grid pairs.
    pub fn holder_seminorm(&self, alpha: f64, beta: f64, s: &Spectrum) -> Result<f64> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::OutOfRange(format!(
                "holder exponent alpha must be in (0, 1], got {alpha}"
            )));
        }
        let power = 1.0 - beta;
        let mut best = 0.0f64;
        for i in 0..self.states.len() {
            for j in i + 1..self.states.len() {
                let d = self.states[j].sub(&self.states[i]);
                let gap = (self.states[j].time - self.states[i].time).abs();
                let q = s.frac_norm(&d, power)? / gap.powf(alpha);
                best = best.max(q);
            }
        }
        Ok(best)
    }

    /// Entrywise difference of two segments on the same grid.
    pub fn difference(&self, other: &HistorySegment) -> Result<HistorySegment> {
        if self.order() != other.order() {
            return Err(Error::DimensionMismatch {
                expected: self.order(),
                got: other.order(),
            });
        }
        if self.states.len() != other.states.len()
            || (self.dt - other.dt).abs() > time_tol(self.dt)
            || (self.t_now() - other.t_now()).abs() > time_tol(self.t_now())
        {
            return Err(Error::MalformedSnapshot(
                "segments live on different grids".into(),
            ));
        }
        let states: Vec<SpectralState> = self
            .states
            .iter()
            .zip(&other.states)
            .map(|(a, b)| a.sub(b))
            .collect();
        let derivs = match (&self.derivs, &other.derivs) {
            (Some(da), Some(db)) => Some(da.iter().zip(db).map(|(a, b)| a.sub(b)).collect()),
            _ => None,
        };
        Ok(HistorySegment {
            states: states.into(),
            derivs: derivs.map(|d: Vec<SpectralState>| d.into()),
            r: self.r,
            dt: self.dt,
        })
    }

    pub fn t_now(&self) -> f64 {
        self.states.back().expect("buffer nonempty").time
    }

    pub fn t_oldest(&self) -> f64 {
        self.states.front().expect("buffer nonempty").time
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of stored samples (`r/dt + 1`).
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Mode count of the stored states.
    pub fn order(&self) -> usize {
        self.states[0].order()
    }

    /// Newest stored state, `u(t_now)`.
    pub fn head(&self) -> &SpectralState {
        self.states.back().expect("buffer nonempty")
    }

    /// Newest stored derivative, if the buffer carries one.
    pub fn head_deriv(&self) -> Option<&SpectralState> {
        self.derivs.as_ref().map(|d| d.back().expect("parallel buffer"))
    }

    pub fn has_derivs(&self) -> bool {
        self.derivs.is_some()
    }

    pub fn state_at(&self, i: usize) -> &SpectralState {
        &self.states[i]
    }

    pub fn deriv_at(&self, i: usize) -> Option<&SpectralState> {
        self.derivs.as_ref().map(|d| &d[i])
    }

    pub fn states(&self) -> impl Iterator<Item = &SpectralState> {
        self.states.iter()
    }

    /// Writes the flat snapshot format: one row per time, columns
    /// `t, u_1..u_m` plus `du_1..du_m` when derivatives are stored, 17
    /// significant digits throughout.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        let m = self.order();
        let mut header = String::from("t");
        for k in 1..=m {
            header.push_str(&format!(",u_{k}"));
        }
        if self.derivs.is_some() {
            for k in 1..=m {
                header.push_str(&format!(",du_{k}"));
            }
        }
        writeln!(w, "{header}")?;
        for (i, state) in self.states.iter().enumerate() {
            let mut row = format_g17(state.time);
            for c in &state.coeffs {
                row.push(',');
                row.push_str(&format_g17(*c));
            }
            if let Some(d) = &self.derivs {
                for c in &d[i].coeffs {
                    row.push(',');
                    row.push_str(&format_g17(*c));
                }
            }
            writeln!(w, "{row}")?;
        }
        Ok(())
    }

    /// Reads the format written by [`HistorySegment::write_csv`]. The delay
    /// horizon is recovered from the time span.
    pub fn read_csv(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::MalformedSnapshot("empty snapshot".into()))?
            .map_err(|e| Error::MalformedSnapshot(e.to_string()))?;
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.first() != Some(&"t") {
            return Err(Error::MalformedSnapshot(format!(
                "expected header starting with 't', got '{header}'"
            )));
        }
        let with_derivs = cols.iter().any(|c| c.starts_with("du_"));
        let m = if with_derivs {
            (cols.len() - 1) / 2
        } else {
            cols.len() - 1
        };
        if m == 0 || cols.len() != 1 + m * if with_derivs { 2 } else { 1 } {
            return Err(Error::MalformedSnapshot(format!(
                "inconsistent column count {}",
                cols.len()
            )));
        }
        let mut states = Vec::new();
        let mut derivs: Vec<SpectralState> = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::MalformedSnapshot(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: std::result::Result<Vec<f64>, _> =
                line.trim().split(',').map(str::parse::<f64>).collect();
            let fields = fields.map_err(|e| {
                Error::MalformedSnapshot(format!("row {}: {e}", lineno + 2))
            })?;
            if fields.len() != cols.len() {
                return Err(Error::MalformedSnapshot(format!(
                    "row {}: expected {} fields, got {}",
                    lineno + 2,
                    cols.len(),
                    fields.len()
                )));
            }
            let t = fields[0];
            states.push(SpectralState::new(fields[1..1 + m].to_vec(), t));
            if with_derivs {
                derivs.push(SpectralState::new(fields[1 + m..].to_vec(), t));
            }
        }
        if states.len() < 2 {
            return Err(Error::MalformedSnapshot(
                "snapshot needs at least two samples".into(),
            ));
        }
        let span = states.last().unwrap().time - states[0].time;
        let n = states.len() - 1;
        // The averaged step is the best grid reconstruction available: a
        // single difference of neighbouring times can be an ulp off the
        // step the writer used, and that noise would leak into every
        // difference-quotient seminorm measured on the segment.
        Self::from_parts(
            states,
            if with_derivs { Some(derivs) } else { None },
            span,
            span / n as f64,
        )
    }
}

/// Number of steps `n = r/dt`, validated to be a positive integer within 1e-9.
fn checked_steps(r: f64, dt: f64) -> Result<usize> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::OutOfRange(format!(
            "delay horizon r must be positive, got {r}"
        )));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::OutOfRange(format!(
            "step dt must be positive, got {dt}"
        )));
    }
    let ratio = r / dt;
    let n = ratio.round();
    if (ratio - n).abs() > 1e-9 || n < 1.0 {
        return Err(Error::NonDivisibleDelay { r, dt });
    }
    let n = n as usize;
    // n*dt and r agree to rounding once the ratio test passes; keep the
    // stronger invariant visible.
    debug_assert!((n as f64 * dt - r).abs() <= 1e-9 * r.max(1.0));
    Ok(n)
}

fn finite_difference_derivs(states: &VecDeque<SpectralState>, dt: f64) -> VecDeque<SpectralState> {
    let n = states.len();
    let mut derivs = VecDeque::with_capacity(n);
    for i in 0..n {
        let d = if i == 0 {
            states[1].sub(&states[0]).scaled(1.0 / dt)
        } else if i == n - 1 {
            states[n - 1].sub(&states[n - 2]).scaled(1.0 / dt)
        } else {
            states[i + 1].sub(&states[i - 1]).scaled(0.5 / dt)
        };
        derivs.push_back(d.at_time(states[i].time));
    }
    derivs
}

/// Renders a float with 17 significant digits: enough for an exact f64
/// round trip through text.
pub fn format_g17(x: f64) -> String {
    format!("{x:.16e}")
}
