//! Stationary test processes: ARMA(1,1), squared ARMA(2,3) and a truncated
//! Gaussian linear process with polynomially decaying mixing coefficients.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::seed;

/// Marginal variance of the ARMA(1,1) preset as quoted for its initial draw.
pub const ARMA11_MARGINAL_VAR: f64 = 1.5833;
/// Marginal variance `v^2` of the latent ARMA(2,3) preset.
pub const ARMA23_MARGINAL_VAR: f64 = 1.0776;
/// Upper quartile of N(0,1) as rounded for the squared-ARMA median, `(0.675 v)^2`.
pub const ARMA23_MEDIAN_Z: f64 = 0.675;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Arma11,
    NonlinearArma23,
    PolyMixing,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Arma11 => "arma11",
            ModelKind::NonlinearArma23 => "arma23sq",
            ModelKind::PolyMixing => "polymix",
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "arma11" => Ok(ModelKind::Arma11),
            "arma23sq" => Ok(ModelKind::NonlinearArma23),
            "polymix" => Ok(ModelKind::PolyMixing),
            other => Err(Error::invalid(format!(
                "unknown model `{other}` (expected arma11, arma23sq or polymix)"
            ))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Decay class of the strong-mixing coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MixingClass {
    Exponential,
    /// `alpha(t) = O(t^-beta)` with `beta < beta_bound`.
    Polynomial { beta_bound: f64 },
}

/// How the lagged state of an ARMA recursion is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitMode {
    /// Lagged observations and innovations drawn jointly from their exact
    /// stationary law, so `X_1` already has the stationary marginal.
    #[default]
    Stationary,
    /// Lagged observations drawn independently from the quoted marginal,
    /// independent of the lagged innovations.
    Paper,
}

impl FromStr for InitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stationary" => Ok(InitMode::Stationary),
            "paper" => Ok(InitMode::Paper),
            other => Err(Error::invalid(format!(
                "unknown init mode `{other}` (expected stationary or paper)"
            ))),
        }
    }
}

/// A data generating process that the experiment harness can simulate from.
pub trait Process: Sync {
    fn label(&self) -> String;

    fn simulate(&self, n: usize, seed: u64) -> Result<Vec<f64>>;

    /// Population p-quantile of the stationary marginal.
    fn population_quantile(&self, _p: f64) -> Result<f64> {
        Err(Error::invalid(format!(
            "model {} has no closed-form quantile",
            self.label()
        )))
    }

    /// Stationary marginal CDF.
    fn population_cdf(&self, _x: f64) -> Result<f64> {
        Err(Error::invalid(format!(
            "model {} has no closed-form distribution function",
            self.label()
        )))
    }
}

/// One of the three preset processes with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    kind: ModelKind,
    params: BTreeMap<String, f64>,
    marginal_sd: f64,
    mixing_class: MixingClass,
    init: InitMode,
    burn_in: usize,
}

impl ModelSpec {
    /// `X_t - 0.4 X_{t-1} = e_t + 0.3 e_{t-1}`.
    pub fn arma11() -> Self {
        ModelSpec {
            kind: ModelKind::Arma11,
            params: [("phi", 0.4), ("theta", 0.3)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            marginal_sd: ARMA11_MARGINAL_VAR.sqrt(),
            mixing_class: MixingClass::Exponential,
            init: InitMode::default(),
            burn_in: 0,
        }
    }

    /// `Y_t = X_t^2` with
    /// `X_t - 0.1 X_{t-1} + 0.3 X_{t-2} = e_t + 0.1 e_{t-1} + 0.2 e_{t-2} - 0.1 e_{t-3}`.
    pub fn arma23_squared() -> Self {
        ModelSpec {
            kind: ModelKind::NonlinearArma23,
            params: [
                ("ar1", 0.1),
                ("ar2", -0.3),
                ("ma1", 0.1),
                ("ma2", 0.2),
                ("ma3", -0.1),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
            marginal_sd: ARMA23_MARGINAL_VAR.sqrt(),
            mixing_class: MixingClass::Exponential,
            init: InitMode::default(),
            burn_in: 0,
        }
    }

    /// `X_t = sum_{j<K} (j+1)^-nu Z_{t-j}`. The preset is `nu = 10`, `K = 100`.
    pub fn poly_mixing(nu: f64, truncation: usize) -> Result<Self> {
        if !(nu > 2.0) || !nu.is_finite() {
            return Err(Error::invalid(format!(
                "polymix requires nu > 2 (got {nu})"
            )));
        }
        if truncation == 0 {
            return Err(Error::invalid("polymix truncation K must be >= 1"));
        }
        let var: f64 = poly_coefficients(nu, truncation).iter().map(|c| c * c).sum();
        Ok(ModelSpec {
            kind: ModelKind::PolyMixing,
            params: [("nu".to_string(), nu), ("K".to_string(), truncation as f64)]
                .into_iter()
                .collect(),
            marginal_sd: var.sqrt(),
            mixing_class: MixingClass::Polynomial {
                beta_bound: nu - 2.0,
            },
            init: InitMode::default(),
            burn_in: 0,
        })
    }

    pub fn poly_mixing_preset() -> Self {
        Self::poly_mixing(10.0, 100).expect("preset parameters are valid")
    }

    /// Preset by name: `arma11`, `arma23sq` or `polymix`.
    pub fn preset(name: &str) -> Result<Self> {
        Ok(match name.parse::<ModelKind>()? {
            ModelKind::Arma11 => Self::arma11(),
            ModelKind::NonlinearArma23 => Self::arma23_squared(),
            ModelKind::PolyMixing => Self::poly_mixing_preset(),
        })
    }

    pub fn with_init(mut self, init: InitMode) -> Self {
        self.init = init;
        self
    }

    /// Discard this many leading observations of the recursion.
    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = burn_in;
        self
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn marginal_sd(&self) -> f64 {
        self.marginal_sd
    }

    pub fn mixing_class(&self) -> MixingClass {
        self.mixing_class
    }

    pub fn init(&self) -> InitMode {
        self.init
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in
    }

    fn param(&self, key: &str) -> f64 {
        self.params[key]
    }

    fn latent_arma(&self) -> Option<Arma> {
        match self.kind {
            ModelKind::Arma11 => Some(Arma::new(
                vec![self.param("phi")],
                vec![self.param("theta")],
                ARMA11_MARGINAL_VAR,
            )),
            ModelKind::NonlinearArma23 => Some(Arma::new(
                vec![self.param("ar1"), self.param("ar2")],
                vec![self.param("ma1"), self.param("ma2"), self.param("ma3")],
                ARMA23_MARGINAL_VAR,
            )),
            ModelKind::PolyMixing => None,
        }
    }

    /// Latent Gaussian path. Equals [`ModelSpec::generate`] except for the
    /// squared ARMA(2,3), where this returns the `X_t` before squaring.
    pub fn generate_latent(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::invalid("series length n must be >= 1"));
        }
        let mut rng = seed::stream(seed);
        Ok(match self.latent_arma() {
            Some(arma) => arma.simulate(n, self.init, self.burn_in, &mut rng),
            None => {
                let coefs = poly_coefficients(self.param("nu"), self.param("K") as usize);
                simulate_linear(&coefs, n, &mut rng)
            }
        })
    }

    pub fn generate(&self, n: usize, seed: u64) -> Result<TimeSeries> {
        let mut values = self.generate_latent(n, seed)?;
        if self.kind == ModelKind::NonlinearArma23 {
            values.iter_mut().for_each(|x| *x *= *x);
        }
        Ok(TimeSeries {
            values,
            model: Some(self.clone()),
            seed: Some(seed),
        })
    }
}

impl Process for ModelSpec {
    /// Kind, parameters and initialization, e.g. `arma11(phi=0.4,theta=0.3;init=stationary;burn_in=0)`.
    fn label(&self) -> String {
        let params: Vec<String> = self.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let init = match self.init {
            InitMode::Stationary => "stationary",
            InitMode::Paper => "paper",
        };
        format!("{}({};init={init};burn_in={})", self.kind.name(), params.join(","), self.burn_in)
    }

    fn simulate(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        self.generate(n, seed).map(TimeSeries::into_values)
    }

    fn population_quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::invalid(format!("p must lie in (0,1), got {p}")));
        }
        let std_normal = Normal::standard();
        match self.kind {
            ModelKind::Arma11 | ModelKind::PolyMixing => {
                if p == 0.5 {
                    Ok(0.0)
                } else {
                    Ok(self.marginal_sd * std_normal.inverse_cdf(p))
                }
            }
            ModelKind::NonlinearArma23 => {
                // P(X^2 <= u) = 2 Phi(sqrt(u)/v) - 1; the median uses the rounded 0.675.
                let z = if p == 0.5 {
                    ARMA23_MEDIAN_Z
                } else {
                    std_normal.inverse_cdf((1.0 + p) / 2.0)
                };
                Ok((z * self.marginal_sd).powi(2))
            }
        }
    }

    fn population_cdf(&self, x: f64) -> Result<f64> {
        let std_normal = Normal::standard();
        match self.kind {
            ModelKind::Arma11 | ModelKind::PolyMixing => Ok(std_normal.cdf(x / self.marginal_sd)),
            ModelKind::NonlinearArma23 => {
                if x <= 0.0 {
                    Ok(0.0)
                } else {
                    Ok(2.0 * std_normal.cdf(x.sqrt() / self.marginal_sd) - 1.0)
                }
            }
        }
    }
}

/// `c_j = (j+1)^-nu` for `j = 0..K`.
pub fn poly_coefficients(nu: f64, truncation: usize) -> Vec<f64> {
    (0..truncation).map(|j| (1.0 / (j + 1) as f64).powf(nu)).collect()
}

/// An observed or simulated series.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: Vec<f64>,
    model: Option<ModelSpec>,
    seed: Option<u64>,
}

impl TimeSeries {
    /// Wrap observed data. Fails on an empty sequence.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("time series must contain at least one value"));
        }
        Ok(TimeSeries {
            values,
            model: None,
            seed: None,
        })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn model(&self) -> Option<&ModelSpec> {
        self.model.as_ref()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }
}

impl Deref for TimeSeries {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.values
    }
}

pub fn gen_arma11(n: usize, seed: u64) -> Result<TimeSeries> {
    ModelSpec::arma11().generate(n, seed)
}

pub fn gen_nonlinear_arma23(n: usize, seed: u64) -> Result<TimeSeries> {
    ModelSpec::arma23_squared().generate(n, seed)
}

pub fn gen_poly_mixing(n: usize, nu: f64, truncation: usize, seed: u64) -> Result<TimeSeries> {
    ModelSpec::poly_mixing(nu, truncation)?.generate(n, seed)
}

/// `X_t = sum_i ar_i X_{t-i} + e_t + sum_j ma_j e_{t-j}`.
#[derive(Debug, Clone)]
struct Arma {
    ar: Vec<f64>,
    ma: Vec<f64>,
    quoted_marginal_var: f64,
}

impl Arma {
    fn new(ar: Vec<f64>, ma: Vec<f64>, quoted_marginal_var: f64) -> Self {
        Arma {
            ar,
            ma,
            quoted_marginal_var,
        }
    }

    /// MA(infinity) weights, truncated once they are negligible.
    fn psi_weights(&self) -> Vec<f64> {
        let mut psi: Vec<f64> = Vec::with_capacity(256);
        for k in 0..4096 {
            let mut v = match k {
                0 => 1.0,
                k if k <= self.ma.len() => self.ma[k - 1],
                _ => 0.0,
            };
            for (i, a) in self.ar.iter().enumerate() {
                if k > i {
                    v += a * psi[k - i - 1];
                }
            }
            psi.push(v);
            let tail_quiet = k > self.ma.len() + self.ar.len()
                && psi[psi.len().saturating_sub(self.ar.len().max(1))..]
                    .iter()
                    .all(|w| w.abs() < 1e-18);
            if tail_quiet {
                break;
            }
        }
        psi
    }

    /// Lower Cholesky factor of the joint covariance of
    /// `(X_0, X_{-1}, .., X_{1-p}, e_0, e_{-1}, .., e_{1-q})`.
    fn stationary_state_factor(&self) -> DMatrix<f64> {
        let (p, q) = (self.ar.len(), self.ma.len());
        let psi = self.psi_weights();
        let psi_at = |k: usize| psi.get(k).copied().unwrap_or(0.0);
        let autocov =
            |h: usize| -> f64 { (0..psi.len()).map(|k| psi[k] * psi_at(k + h)).sum() };
        let dim = p + q;
        let cov = DMatrix::from_fn(dim, dim, |r, c| match (r < p, c < p) {
            (true, true) => autocov(r.abs_diff(c)),
            // Cov(X_{-a}, e_{-c}) = psi_{c-a} when c >= a.
            (true, false) => (c - p).checked_sub(r).map_or(0.0, psi_at),
            (false, true) => (r - p).checked_sub(c).map_or(0.0, psi_at),
            (false, false) => f64::from(u8::from(r == c)),
        });
        cov.cholesky()
            .expect("stationary ARMA state covariance is positive definite")
            .l()
    }

    fn simulate(&self, n: usize, init: InitMode, burn_in: usize, rng: &mut seed::Stream) -> Vec<f64> {
        let (p, q) = (self.ar.len(), self.ma.len());
        let state: Vec<f64> = match init {
            InitMode::Stationary => {
                let z: Vec<f64> = (0..p + q).map(|_| StandardNormal.sample(rng)).collect();
                let factor = self.stationary_state_factor();
                (0..p + q)
                    .map(|r| (0..=r).map(|c| factor[(r, c)] * z[c]).sum())
                    .collect()
            }
            InitMode::Paper => {
                let sd = self.quoted_marginal_var.sqrt();
                (0..p + q)
                    .map(|i| {
                        let z: f64 = StandardNormal.sample(rng);
                        if i < p {
                            sd * z
                        } else {
                            z
                        }
                    })
                    .collect()
            }
        };
        let steps = burn_in + n;
        // Oldest first: x = [X_{1-p}, .., X_0, X_1, ..], e likewise.
        let mut x: Vec<f64> = state[..p].iter().rev().copied().collect();
        let mut e: Vec<f64> = state[p..].iter().rev().copied().collect();
        x.reserve(steps);
        e.reserve(steps);
        for _ in 0..steps {
            let eps: f64 = StandardNormal.sample(rng);
            let mut v = eps;
            for (i, a) in self.ar.iter().enumerate() {
                v += a * x[x.len() - 1 - i];
            }
            for (j, m) in self.ma.iter().enumerate() {
                v += m * e[e.len() - 1 - j];
            }
            x.push(v);
            e.push(eps);
        }
        x.split_off(p + burn_in)
    }
}

fn simulate_linear(coefs: &[f64], n: usize, rng: &mut seed::Stream) -> Vec<f64> {
    let k = coefs.len();
    // z[i] holds Z_{i + 2 - K}, so X_t uses z[t + K - 2 - j].
    let z: Vec<f64> = (0..n + k - 1).map(|_| StandardNormal.sample(rng)).collect();
    (1..=n)
        .map(|t| {
            coefs
                .iter()
                .enumerate()
                .map(|(j, c)| c * z[t + k - 2 - j])
                .sum()
        })
        .collect()
}
