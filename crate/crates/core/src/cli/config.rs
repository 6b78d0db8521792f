use std::path::PathBuf;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bohm::{Integrator, DEFAULT_NODE_FLOOR};
use crate::error::{Error, Result};
use crate::hilbert::{CMatrix, OscillatorBasis, WaveCoefficients};
use crate::measurement::{PointerModel, DEFAULT_SEPARATION, DEFAULT_SIGMA, DEFAULT_WINDOW};
use crate::sqm::BinnedObservable;

/// A complete run description, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub basis: BasisConfig,
    #[serde(default)]
    pub state: StateConfig,
    #[serde(default)]
    pub times: TimesConfig,
    #[serde(default)]
    pub bins: BinsConfig,
    #[serde(default)]
    pub pointer_a: PointerConfig,
    #[serde(default)]
    pub pointer_b: PointerConfig,
    #[serde(default)]
    pub monte_carlo: MonteCarloConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    pub mass: f64,
    pub frequency: f64,
    pub n_max: usize,
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self { mass: 1.0, frequency: 1.0, n_max: 32 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    /// `(|0>|1> + |1>|0>) / sqrt 2`.
    Entangled01,
    /// `|0>|1>`.
    Product01,
    /// `|1>|0>`.
    Product10,
    /// Explicit coefficients.
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    pub kind: StateKind,
    /// `[m, n, re, im]` entries of the coefficient tensor (custom only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub coefficients: Vec<[f64; 4]>,
}

impl Default for StateConfig {
    fn default() -> Self {
        Self { kind: StateKind::Entangled01, coefficients: Vec::new() }
    }
}

/// Rows are every `(t1, t1 + delta_t)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimesConfig {
    pub t1: Vec<f64>,
    pub delta_t: Vec<f64>,
}

impl Default for TimesConfig {
    fn default() -> Self {
        use std::f64::consts::PI;
        Self { t1: vec![0.5], delta_t: vec![0.0, PI / 4.0, PI / 2.0, PI, 2.0 * PI] }
    }
}

/// Detector array: `count` equal bins on `[lo, hi]`, outer bins extended to
/// infinity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinsConfig {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Default for BinsConfig {
    fn default() -> Self {
        Self { lo: -4.0, hi: 4.0, count: 8 }
    }
}

/// Pointer width, window length and separation ratio between adjacent
/// outcomes; the coupling is derived from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointerConfig {
    pub sigma: f64,
    pub t_m: f64,
    pub separation: f64,
    #[serde(default)]
    pub ready_center: f64,
}

impl Default for PointerConfig {
    fn default() -> Self {
        Self { sigma: DEFAULT_SIGMA, t_m: DEFAULT_WINDOW, separation: DEFAULT_SEPARATION, ready_center: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    /// Ensemble size of the unmeasured correlator.
    pub n: usize,
    /// Ensemble size of the measured trajectory tables (0 skips them).
    pub trajectory_n: usize,
    pub seed: u64,
    pub dt: f64,
    /// Density below which a trajectory counts as lost at a node.
    #[serde(default = "default_node_floor")]
    pub node_floor: f64,
}

fn default_node_floor() -> f64 {
    DEFAULT_NODE_FLOOR
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self { n: 20_000, trajectory_n: 1_000, seed: 1, dt: 1e-2, node_floor: DEFAULT_NODE_FLOOR }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub stem: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), stem: "twotime".into() }
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{field} must be positive and finite, got {v}")))
    }
}

fn finite(field: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{field} must be finite, got {v}")))
    }
}

impl ScenarioConfig {
    /// Parses and validates TOML text.
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        positive("basis.mass", self.basis.mass)?;
        positive("basis.frequency", self.basis.frequency)?;
        if self.basis.n_max < 2 {
            return Err(Error::Config(format!("basis.n_max must be at least 2, got {}", self.basis.n_max)));
        }
        if self.times.t1.is_empty() || self.times.delta_t.is_empty() {
            return Err(Error::Config("times.t1 and times.delta_t must be non-empty".into()));
        }
        for (i, t) in self.times.t1.iter().enumerate() {
            finite(&format!("times.t1[{i}]"), *t)?;
            if *t < 0.0 {
                return Err(Error::Config(format!("times.t1[{i}] must not precede the preparation at 0, got {t}")));
            }
        }
        for (i, d) in self.times.delta_t.iter().enumerate() {
            finite(&format!("times.delta_t[{i}]"), *d)?;
        }
        for (t1, t2) in self.time_pairs() {
            if t2 < 0.0 {
                return Err(Error::Config(format!("t2 = t1 + delta_t = {t2} precedes the preparation (t1 = {t1})")));
            }
        }
        finite("bins.lo", self.bins.lo)?;
        finite("bins.hi", self.bins.hi)?;
        if !(self.bins.hi > self.bins.lo) || self.bins.count == 0 {
            return Err(Error::Config("bins need hi > lo and count >= 1".into()));
        }
        for (name, p) in [("pointer_a", &self.pointer_a), ("pointer_b", &self.pointer_b)] {
            positive(&format!("{name}.sigma"), p.sigma)?;
            positive(&format!("{name}.t_m"), p.t_m)?;
            positive(&format!("{name}.separation"), p.separation)?;
            finite(&format!("{name}.ready_center"), p.ready_center)?;
        }
        if self.monte_carlo.n == 0 {
            return Err(Error::Config("monte_carlo.n must be at least 1".into()));
        }
        positive("monte_carlo.dt", self.monte_carlo.dt)?;
        positive("monte_carlo.node_floor", self.monte_carlo.node_floor)?;
        if self.output.stem.is_empty() || self.output.stem.contains(['/', '\\']) {
            return Err(Error::Config("output.stem must be a plain file name".into()));
        }
        match self.state.kind {
            StateKind::Custom => {
                if self.state.coefficients.is_empty() {
                    return Err(Error::Config("state.coefficients required for kind = \"custom\"".into()));
                }
                for (i, [m, n, re, im]) in self.state.coefficients.iter().enumerate() {
                    let index_ok = |v: f64| v >= 0.0 && v.fract() == 0.0 && (v as usize) < self.basis.n_max;
                    if !index_ok(*m) || !index_ok(*n) {
                        return Err(Error::Config(format!(
                            "state.coefficients[{i}]: levels must be integers below n_max = {}",
                            self.basis.n_max
                        )));
                    }
                    finite(&format!("state.coefficients[{i}].re"), *re)?;
                    finite(&format!("state.coefficients[{i}].im"), *im)?;
                }
            }
            _ if !self.state.coefficients.is_empty() => {
                return Err(Error::Config("state.coefficients only apply to kind = \"custom\"".into()));
            }
            _ => {}
        }
        // building the objects catches anything the field checks missed
        self.basis()?;
        self.initial_state()?;
        self.binned(&self.basis()?)?;
        Ok(())
    }

    /// `(t1, t2)` rows in configuration order.
    pub fn time_pairs(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for &t1 in &self.times.t1 {
            for &d in &self.times.delta_t {
                out.push((t1, t1 + d));
            }
        }
        out
    }

    pub fn basis(&self) -> Result<OscillatorBasis> {
        OscillatorBasis::new(self.basis.mass, self.basis.frequency, self.basis.n_max)
            .map_err(|e| Error::Config(format!("basis: {e}")))
    }

    pub fn initial_state(&self) -> Result<WaveCoefficients> {
        let n = self.basis.n_max;
        let built = match self.state.kind {
            StateKind::Entangled01 => WaveCoefficients::entangled01(n),
            StateKind::Product01 => WaveCoefficients::product(0, 1, n),
            StateKind::Product10 => WaveCoefficients::product(1, 0, n),
            StateKind::Custom => {
                let mut c = CMatrix::zeros(n, n);
                for [m, k, re, im] in &self.state.coefficients {
                    c[(*m as usize, *k as usize)] += Complex64::new(*re, *im);
                }
                WaveCoefficients::from_matrix(c, 1e-8)
            }
        };
        built.map_err(|e| Error::Config(format!("state: {e}")))
    }

    pub fn binned(&self, basis: &OscillatorBasis) -> Result<BinnedObservable> {
        BinnedObservable::uniform(basis, self.bins.lo, self.bins.hi, self.bins.count)
            .map_err(|e| Error::Config(format!("bins: {e}")))
    }

    pub fn devices(&self, binned: &BinnedObservable) -> Result<[PointerModel; 2]> {
        let build = |p: &PointerConfig| -> Result<PointerModel> {
            let mut d = PointerModel::with_separation(p.sigma, p.t_m, binned.delta(), p.separation)?;
            d.ready_center = p.ready_center;
            Ok(d)
        };
        Ok([build(&self.pointer_a)?, build(&self.pointer_b)?])
    }

    pub fn integrator(&self) -> Integrator {
        Integrator { dt: self.monte_carlo.dt, ..Integrator::default() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = ScenarioConfig::from_toml("").unwrap();
        assert_eq!(c.basis.n_max, 32);
        let again = ScenarioConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(ScenarioConfig::from_toml("[basis]\nmass = 1.0\nfrequency = 1.0\nn_max = 8\nspin = 1").is_err());
        assert!(ScenarioConfig::from_toml("colour = 3").is_err());
        assert!(ScenarioConfig::from_toml("[basis]\nmass = -1.0\nfrequency = 1.0\nn_max = 8").is_err());
        assert!(ScenarioConfig::from_toml("[monte_carlo]\nn = 10\ntrajectory_n = 0\nseed = 1\ndt = 0.0").is_err());
        let err = ScenarioConfig::from_toml("[times]\nt1 = [0.5]\ndelta_t = [-1.0]").unwrap_err();
        assert!(err.to_string().contains("precedes"), "{err}");
    }

    #[test]
    fn custom_state() {
        let text = "[state]\nkind = \"custom\"\ncoefficients = [[0, 0, 0.6, 0.0], [1, 1, 0.0, 0.8]]";
        let c = ScenarioConfig::from_toml(text).unwrap();
        let s = c.initial_state().unwrap();
        assert!((s.coeffs()[(1, 1)].im - 0.8).abs() < 1e-15);
        let bad = "[state]\nkind = \"custom\"\ncoefficients = [[0, 0, 0.6, 0.0]]";
        assert!(ScenarioConfig::from_toml(bad).is_err());
        let out_of_range = "[state]\nkind = \"custom\"\ncoefficients = [[40, 0, 1.0, 0.0]]";
        assert!(ScenarioConfig::from_toml(out_of_range).is_err());
    }
}
