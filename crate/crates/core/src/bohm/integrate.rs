use serde::{Deserialize, Serialize};

use super::wave::{Configuration, PilotWave};
use crate::error::{domain, Error, Result};

/// Fixed-step RK4 with optional step doubling.
///
/// With a tolerance set, each step is compared against two half steps and
/// halved recursively while the two disagree by more than `tolerance` in
/// either particle coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Integrator {
    pub dt: f64,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default = "default_halvings")]
    pub max_halvings: u32,
    /// Steps right after a measurement window grow geometrically: the first
    /// is `graded_start`, each later one is `graded_ratio` times the time
    /// elapsed since the window, until they reach `dt`.
    #[serde(default = "default_graded_start")]
    pub graded_start: f64,
    #[serde(default = "default_graded_ratio")]
    pub graded_ratio: f64,
}

fn default_halvings() -> u32 {
    12
}

fn default_graded_start() -> f64 {
    1e-7
}

fn default_graded_ratio() -> f64 {
    0.05
}

impl Default for Integrator {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            tolerance: None,
            max_halvings: default_halvings(),
            graded_start: default_graded_start(),
            graded_ratio: default_graded_ratio(),
        }
    }
}

/// A trajectory that ran into a node of the wave.
#[derive(Debug, Clone)]
pub struct NodeHit {
    pub t: f64,
    pub density: f64,
    pub partial: Vec<(f64, Configuration)>,
}

impl From<NodeHit> for Error {
    fn from(hit: NodeHit) -> Self {
        Error::Node { t: hit.t, density: hit.density }
    }
}

/// Outcome of integrating one trajectory.
#[derive(Debug, Clone)]
pub enum TrajectoryResult {
    Complete(Vec<(f64, Configuration)>),
    Node(NodeHit),
}

impl Integrator {
    pub fn new(dt: f64) -> Result<Self> {
        let it = Self { dt, ..Self::default() };
        it.validate()?;
        Ok(it)
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = Some(tolerance);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return domain(format!("time step must be positive, got {}", self.dt));
        }
        if !(self.graded_start > 0.0 && self.graded_ratio > 0.0 && self.graded_ratio.is_finite()) {
            return domain("graded step parameters must be positive");
        }
        if let Some(tol) = self.tolerance {
            if !(tol > 0.0 && tol.is_finite()) {
                return domain(format!("step tolerance must be positive, got {tol}"));
            }
        }
        Ok(())
    }

    /// Uniform step count that lands exactly on `t1`.
    fn steps(&self, t0: f64, t1: f64) -> usize {
        let n = ((t1 - t0).abs() / self.dt - 1e-9).ceil();
        n.max(0.0) as usize
    }

    fn rk4(wave: &PilotWave, q: &Configuration, t: f64, h: f64) -> Result<Configuration> {
        let k1 = wave.velocity(q, t)?;
        let at = |dx: f64, dy: f64| Configuration { x: q.x + dx, y: q.y + dy, ..*q };
        let k2 = wave.velocity(&at(0.5 * h * k1.x, 0.5 * h * k1.y), t + 0.5 * h)?;
        let k3 = wave.velocity(&at(0.5 * h * k2.x, 0.5 * h * k2.y), t + 0.5 * h)?;
        let k4 = wave.velocity(&at(h * k3.x, h * k3.y), t + h)?;
        Ok(at(
            h / 6.0 * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
            h / 6.0 * (k1.y + 2.0 * k2.y + 2.0 * k3.y + k4.y),
        ))
    }

    fn adaptive(&self, wave: &PilotWave, q: &Configuration, t: f64, h: f64, depth: u32) -> Result<Configuration> {
        let Some(tol) = self.tolerance else {
            return Self::rk4(wave, q, t, h);
        };
        let full = Self::rk4(wave, q, t, h)?;
        let mid = Self::rk4(wave, q, t, 0.5 * h)?;
        let two = Self::rk4(wave, &mid, t + 0.5 * h, 0.5 * h)?;
        let err = (full.x - two.x).abs().max((full.y - two.y).abs());
        if err <= tol || depth >= self.max_halvings {
            return Ok(two);
        }
        let mid = self.adaptive(wave, q, t, 0.5 * h, depth + 1)?;
        self.adaptive(wave, &mid, t + 0.5 * h, 0.5 * h, depth + 1)
    }

    /// Advances `q` from `t0` to exactly `t1` (either direction) without
    /// recording the path.
    pub fn advance(&self, wave: &PilotWave, q: &Configuration, t0: f64, t1: f64) -> Result<Configuration> {
        let n = self.steps(t0, t1);
        if n == 0 {
            return Ok(*q);
        }
        let h = (t1 - t0) / n as f64;
        let mut cur = *q;
        for k in 0..n {
            let t = t0 + k as f64 * h;
            cur = self.adaptive(wave, &cur, t, h, 0)?;
            if !cur.is_finite() {
                return Err(Error::Node { t: t + h, density: 0.0 });
            }
        }
        Ok(cur)
    }

    /// Advances `q` from a measurement window at `t0` to `t1 > t0`, grading
    /// the steps so the fast transients of a sharp projection are resolved.
    ///
    /// A freely evolving bin projection refocuses onto a sharp bin every half
    /// period `pi / omega` after the window, and the edge transients return
    /// time-reversed on the approach. Steps therefore grow geometrically away
    /// from the window and from every refocusing time, and shrink the same way
    /// towards each refocusing time, which they land on exactly.
    pub fn advance_after_window(&self, wave: &PilotWave, q: &Configuration, t0: f64, t1: f64) -> Result<Configuration> {
        if t1 < t0 {
            return domain("graded steps run forward from the window");
        }
        let half = std::f64::consts::PI / wave.basis().frequency();
        // refocusing times strictly inside (t0, t1]; an end point within
        // rounding of one counts as that time
        let snap = 1e-12 * (1.0 + t1.abs());
        let mut singular = Vec::new();
        let mut k = 1.0;
        while t0 + k * half <= t1 + snap {
            singular.push(if (t0 + k * half - t1).abs() <= snap { t1 } else { t0 + k * half });
            k += 1.0;
        }
        // distance at which the approach grading takes over from `dt`
        let reach = self.dt / self.graded_ratio;

        let mut t = t0;
        let mut last = t0;
        let mut cur = *q;
        let mut upcoming = singular.into_iter().peekable();
        while t < t1 {
            let next = upcoming.peek().copied();
            let end = next.unwrap_or(t1);
            let since = t - last;
            let grow = if since > 0.0 { (self.graded_ratio * since).max(self.graded_start) } else { self.graded_start };
            if grow >= self.dt {
                // cruise with uniform steps up to the approach zone
                let cruise_to = match next {
                    Some(s) => s - reach,
                    None => t1,
                };
                if cruise_to > t {
                    cur = self.advance(wave, &cur, t, cruise_to)?;
                    t = cruise_to;
                    if t >= t1 {
                        break;
                    }
                    continue;
                }
            }
            let mut h = grow.min(self.dt);
            if next.is_some() {
                h = h.min((self.graded_ratio * (end - t)).max(self.graded_start));
            }
            let landing = t + h >= end;
            if landing {
                h = end - t;
            }
            cur = self.adaptive(wave, &cur, t, h, 0)?;
            if !cur.is_finite() {
                return Err(Error::Node { t: t + h, density: 0.0 });
            }
            if landing {
                t = end;
                if next.is_some() {
                    upcoming.next();
                    last = end;
                }
            } else {
                t += h;
            }
        }
        Ok(cur)
    }

    /// Advances through the given increasing or decreasing `times`, returning
    /// the configuration at each.
    pub fn advance_through(
        &self,
        wave: &PilotWave,
        q: &Configuration,
        t0: f64,
        times: &[f64],
    ) -> Result<Vec<Configuration>> {
        let mut out = Vec::with_capacity(times.len());
        let (mut t, mut cur) = (t0, *q);
        for &s in times {
            cur = self.advance(wave, &cur, t, s)?;
            t = s;
            out.push(cur);
        }
        Ok(out)
    }

    /// Integrates and records every step from `t0` to `t1`.
    pub fn integrate_trajectory(&self, wave: &PilotWave, q: &Configuration, t0: f64, t1: f64) -> TrajectoryResult {
        let n = self.steps(t0, t1);
        let mut path = vec![(t0, *q)];
        if n == 0 {
            return TrajectoryResult::Complete(path);
        }
        let h = (t1 - t0) / n as f64;
        let mut cur = *q;
        for k in 0..n {
            let t = t0 + k as f64 * h;
            match self.adaptive(wave, &cur, t, h, 0) {
                Ok(next) if next.is_finite() => {
                    cur = next;
                    let s = if k + 1 == n { t1 } else { t + h };
                    path.push((s, cur));
                }
                Ok(_) => return TrajectoryResult::Node(NodeHit { t, density: 0.0, partial: path }),
                Err(Error::Node { t, density }) => {
                    return TrajectoryResult::Node(NodeHit { t, density, partial: path })
                }
                Err(_) => {
                    let density = wave.density(&cur, t).unwrap_or(0.0);
                    return TrajectoryResult::Node(NodeHit { t, density, partial: path });
                }
            }
        }
        TrajectoryResult::Complete(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{CMatrix, OscillatorBasis, WaveCoefficients};
    use crate::measurement::PointerModel;
    use num_complex::Complex64;

    fn wave(theta: f64) -> PilotWave {
        let basis = OscillatorBasis::harmonic(8).unwrap();
        let mut c = CMatrix::zeros(8, 8);
        c[(0, 0)] = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        c[(1, 0)] = Complex64::from_polar(std::f64::consts::FRAC_1_SQRT_2, theta);
        let psi = WaveCoefficients::from_matrix(c, 1e-12).unwrap();
        let d = PointerModel::default_for_gap(1.0).unwrap();
        PilotWave::bare(&basis, &psi, [d, d]).unwrap()
    }

    #[test]
    fn endpoint_hit_exactly() {
        let w = wave(2.5);
        let it = Integrator::new(0.03).unwrap();
        let TrajectoryResult::Complete(path) = it.integrate_trajectory(&w, &Configuration::new(0.4, 0.1, 0.0, 0.0), 0.0, 1.0)
        else {
            panic!("node")
        };
        assert_eq!(path.last().unwrap().0, 1.0);
        assert_eq!(path.len(), 35);
    }

    #[test]
    fn time_reversal_returns_to_start() {
        let w = wave(2.5);
        let it = Integrator::new(1e-3).unwrap();
        let q0 = Configuration::new(0.4, -0.3, 0.0, 0.0);
        let q1 = it.advance(&w, &q0, 0.0, 2.0).unwrap();
        assert!((q1.x - q0.x).abs() > 0.05);
        let back = it.advance(&w, &q1, 2.0, 0.0).unwrap();
        assert!((back.x - q0.x).abs() < 1e-8 && (back.y - q0.y).abs() < 1e-12);
    }

    #[test]
    fn fourth_order_convergence() {
        let w = wave(2.5);
        let q0 = Configuration::new(-0.7, 0.0, 0.0, 0.0);
        let reference = Integrator::new(1e-4).unwrap().advance(&w, &q0, 0.0, 2.0).unwrap();
        let e1 = (Integrator::new(0.1).unwrap().advance(&w, &q0, 0.0, 2.0).unwrap().x - reference.x).abs();
        let e2 = (Integrator::new(0.05).unwrap().advance(&w, &q0, 0.0, 2.0).unwrap().x - reference.x).abs();
        assert!(e2 < e1 / 10.0, "{e1} {e2}");
        let adaptive = Integrator::new(0.1).unwrap().with_tolerance(1e-9).advance(&w, &q0, 0.0, 2.0).unwrap();
        assert!((adaptive.x - reference.x).abs() < 1e-7);
    }

    #[test]
    fn advance_through_matches_separate_calls() {
        let w = wave(2.5);
        let it = Integrator::new(1e-2).unwrap();
        let q0 = Configuration::new(0.2, 0.2, 0.0, 0.0);
        let all = it.advance_through(&w, &q0, 0.0, &[0.5, 1.25]).unwrap();
        let a = it.advance(&w, &q0, 0.0, 0.5).unwrap();
        let b = it.advance(&w, &a, 0.5, 1.25).unwrap();
        assert_eq!(all, vec![a, b]);
    }

    #[test]
    fn invalid_step_rejected() {
        assert!(Integrator::new(0.0).is_err());
        assert!(Integrator::new(f64::NAN).is_err());
    }
}
