//! Dormand–Prince 5(4) integrator on fixed-size states.
//!
//! The integrator keeps its step size between calls to [`Dopri5::advance`],
//! so a trajectory can be sampled at a sequence of output points without
//! restarting the step-size controller. Each `advance` lands exactly on its
//! target by clipping the final step.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dopri5Options {
    pub rtol: f64,
    pub atol: f64,
    /// Largest step magnitude.
    pub h_max: f64,
    pub max_steps: usize,
}

impl Dopri5Options {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            h_max: f64::INFINITY,
            max_steps: 200_000,
        }
    }

    pub fn h_max(mut self, h_max: f64) -> Self {
        self.h_max = h_max;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError<E> {
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64, y: Vec<f64> },
    #[error("step budget exhausted at t = {t}")]
    TooManySteps { t: f64, y: Vec<f64> },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64, y: Vec<f64> },
    #[error(transparent)]
    Rhs(E),
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// fifth-order minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Debug, Clone)]
pub struct Dopri5 {
    opts: Dopri5Options,
    h: Option<f64>,
    pub accepted: usize,
    pub rejected: usize,
}

fn combine<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        *o += h * acc;
    }
    out
}

impl Dopri5 {
    pub fn new(opts: Dopri5Options) -> Self {
        Self {
            opts,
            h: None,
            accepted: 0,
            rejected: 0,
        }
    }

    /// Integrates `y' = rhs(t, y)` from `*t` to `t_end`, updating `t` and `y`.
    ///
    /// `observer` sees every accepted step, including the final one at `t_end`.
    pub fn advance<const N: usize, E, F, O>(
        &mut self,
        t: &mut f64,
        y: &mut [f64; N],
        t_end: f64,
        mut rhs: F,
        mut observer: O,
    ) -> Result<(), OdeError<E>>
    where
        F: FnMut(f64, &[f64; N]) -> Result<[f64; N], E>,
        O: FnMut(f64, &[f64; N]),
    {
        let span = t_end - *t;
        if span == 0.0 {
            return Ok(());
        }
        let dir = span.signum();
        let mut h = self
            .h
            .map(f64::abs)
            .unwrap_or_else(|| (1e-2 * span.abs()).max(1e-6))
            .min(self.opts.h_max)
            .min(span.abs());
        let mut k1 = rhs(*t, y).map_err(OdeError::Rhs)?;
        let mut steps = 0;

        loop {
            let remaining = (t_end - *t) * dir;
            if remaining <= 0.0 {
                break;
            }
            steps += 1;
            if steps > self.opts.max_steps {
                return Err(OdeError::TooManySteps { t: *t, y: y.to_vec() });
            }
            let h_min = 16.0 * f64::EPSILON * t.abs().max(1.0);
            if h < h_min {
                return Err(OdeError::StepUnderflow { t: *t, y: y.to_vec() });
            }
            let last = h >= remaining;
            let step = if last { remaining } else { h } * dir;

            let k2 = rhs(*t + C2 * step, &combine(y, step, &[(A21, &k1)])).map_err(OdeError::Rhs)?;
            let k3 = rhs(*t + C3 * step, &combine(y, step, &[(A31, &k1), (A32, &k2)]))
                .map_err(OdeError::Rhs)?;
            let k4 = rhs(
                *t + C4 * step,
                &combine(y, step, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
            )
            .map_err(OdeError::Rhs)?;
            let k5 = rhs(
                *t + C5 * step,
                &combine(y, step, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
            )
            .map_err(OdeError::Rhs)?;
            let k6 = rhs(
                *t + step,
                &combine(y, step, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
            )
            .map_err(OdeError::Rhs)?;
            let y_new = combine(y, step, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
            let t_new = if last { t_end } else { *t + step };
            let k7 = rhs(t_new, &y_new).map_err(OdeError::Rhs)?;

            let mut err_sq = 0.0;
            for i in 0..N {
                let e = step
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let scale = self.opts.atol + self.opts.rtol * y[i].abs().max(y_new[i].abs());
                err_sq += (e / scale) * (e / scale);
            }
            let err = (err_sq / N as f64).sqrt();
            if !err.is_finite() {
                if y_new.iter().all(|v| v.is_finite()) {
                    h *= 0.2;
                    self.rejected += 1;
                    continue;
                }
                return Err(OdeError::NonFinite { t: t_new, y: y_new.to_vec() });
            }

            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 {
                *t = t_new;
                *y = y_new;
                k1 = k7;
                self.accepted += 1;
                observer(*t, y);
                if !last {
                    h = (h * factor).min(self.opts.h_max);
                }
            } else {
                self.rejected += 1;
                h *= factor.min(1.0);
            }
        }
        *t = t_end;
        self.h = Some(h);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    #[test]
    fn harmonic_oscillator_full_period() {
        let mut solver = Dopri5::new(Dopri5Options::with_tol(1e-11));
        let mut t = 0.0;
        let mut y = [1.0, 0.0];
        let tau = 2.0 * std::f64::consts::PI;
        solver
            .advance(&mut t, &mut y, tau, |_, y| Ok::<_, Infallible>([y[1], -y[0]]), |_, _| {})
            .unwrap();
        assert_eq!(t, tau);
        assert!((y[0] - 1.0).abs() < 1e-9 && y[1].abs() < 1e-9, "{y:?}");
    }

    #[test]
    fn backward_integration_of_exponential() {
        let mut solver = Dopri5::new(Dopri5Options::with_tol(1e-12));
        let mut t = 1.0;
        let mut y = [1f64.exp()];
        solver
            .advance(&mut t, &mut y, 0.0, |_, y| Ok::<_, Infallible>([y[0]]), |_, _| {})
            .unwrap();
        assert!((y[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn sequential_targets_hit_exactly() {
        let mut solver = Dopri5::new(Dopri5Options::with_tol(1e-10));
        let mut t = 0.0;
        let mut y = [0.0];
        for k in 1..=10 {
            let target = k as f64 * 0.1;
            solver
                .advance(&mut t, &mut y, target, |t, _| Ok::<_, Infallible>([t.cos()]), |_, _| {})
                .unwrap();
            assert_eq!(t, target);
            assert!((y[0] - target.sin()).abs() < 1e-9);
        }
    }

    #[test]
    fn blow_up_is_reported() {
        // y' = y^2 from y(0)=1 blows up at t = 1
        let mut solver = Dopri5::new(Dopri5Options::with_tol(1e-8));
        let mut t = 0.0;
        let mut y = [1.0];
        let err = solver
            .advance(&mut t, &mut y, 2.0, |_, y| Ok::<_, Infallible>([y[0] * y[0]]), |_, _| {})
            .unwrap_err();
        assert!(matches!(
            err,
            OdeError::StepUnderflow { .. } | OdeError::NonFinite { .. } | OdeError::TooManySteps { .. }
        ));
    }

    #[test]
    fn rhs_errors_propagate() {
        let mut solver = Dopri5::new(Dopri5Options::with_tol(1e-8));
        let mut t = 0.0;
        let mut y = [1.0];
        let err = solver
            .advance(
                &mut t,
                &mut y,
                5.0,
                |_, y| if y[0] > 10.0 { Err("guard") } else { Ok([y[0]]) },
                |_, _| {},
            )
            .unwrap_err();
        assert_eq!(err, OdeError::Rhs("guard"));
    }
}
