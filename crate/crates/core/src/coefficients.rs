//! Standard risk coefficients: the worst-case risk of a zero-mean, unit-variance linear loss,
//! which is the only way a risk measure enters the closed-form robust risk of a portfolio.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ADMISSIBILITY_TOL: f64 = 1e-10;

/// Structural assumption on the distributions in the ambiguity set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StructuralClass {
    /// All distributions with finite second moments.
    AllL2,
    Symmetric,
    SymmetricLinearUnimodal,
    Gaussian,
}

impl fmt::Display for StructuralClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StructuralClass::AllL2 => "all-l2",
            StructuralClass::Symmetric => "symmetric",
            StructuralClass::SymmetricLinearUnimodal => "symmetric-linear-unimodal",
            StructuralClass::Gaussian => "gaussian",
        })
    }
}

impl FromStr for StructuralClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "all-l2" | "l2" | "all" => Ok(StructuralClass::AllL2),
            "symmetric" | "sym" => Ok(StructuralClass::Symmetric),
            "symmetric-linear-unimodal" | "slu" => Ok(StructuralClass::SymmetricLinearUnimodal),
            "gaussian" | "normal" => Ok(StructuralClass::Gaussian),
            other => Err(Error::InvalidInput(format!("unknown structural class '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PieceKind {
    /// Value `v_k` on `[t_k, t_{k+1})`; the last point carries the value at 1.
    #[default]
    Step,
    /// Linear interpolation between the points.
    Linear,
}

/// Function on `[0, 1]` given by finitely many `(breakpoint, value)` points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseFn {
    #[serde(default)]
    pub kind: PieceKind,
    pub points: Vec<(f64, f64)>,
}

impl PiecewiseFn {
    pub fn step(points: Vec<(f64, f64)>) -> Result<Self> {
        let f = PiecewiseFn { kind: PieceKind::Step, points };
        f.check_grid()?;
        Ok(f)
    }

    pub fn linear(points: Vec<(f64, f64)>) -> Result<Self> {
        let f = PiecewiseFn { kind: PieceKind::Linear, points };
        f.check_grid()?;
        Ok(f)
    }

    /// Spectrum `ψ = (1/β)·1_{[1−β, 1)}` of CVaR at level `β`.
    pub fn cvar_spectrum(beta: f64) -> Result<Self> {
        check_level(beta)?;
        Self::step(vec![(0.0, 0.0), (1.0 - beta, 1.0 / beta), (1.0, 1.0 / beta)])
    }

    /// Distortion `h(τ) = max{τ − 1 + β, 0}/β` of CVaR at level `β`.
    pub fn cvar_distortion(beta: f64) -> Result<Self> {
        check_level(beta)?;
        Self::linear(vec![(0.0, 0.0), (1.0 - beta, 0.0), (1.0, 1.0)])
    }

    /// Indicator distortion `h = 1_{[t, 1]}`. With `t = 1 − β` it reproduces VaR at level `β`
    /// under the quantile representation `∫ F⁻¹ dh`.
    pub fn indicator_distortion(t: f64) -> Result<Self> {
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::OutOfRange(t));
        }
        Self::step(vec![(0.0, 0.0), (t, 1.0), (1.0, 1.0)])
    }

    fn check_grid(&self) -> Result<()> {
        let p = &self.points;
        if p.len() < 2 {
            return Err(Error::InvalidInput("piecewise function needs at least two points".into()));
        }
        if p.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        if p[0].0 != 0.0 || p[p.len() - 1].0 != 1.0 {
            return Err(Error::InvalidInput("breakpoints must start at 0 and end at 1".into()));
        }
        if p.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidInput("breakpoints must be strictly increasing".into()));
        }
        Ok(())
    }

    /// `∫₀¹ f`.
    pub fn integral(&self) -> f64 {
        self.pieces().map(|(a, b, l, r)| 0.5 * (l + r) * (b - a)).sum()
    }

    /// `∫₀¹ f²`, exact for both kinds.
    pub fn integral_sq(&self) -> f64 {
        self.pieces().map(|(a, b, l, r)| (b - a) * (l * l + l * r + r * r) / 3.0).sum()
    }

    /// Each piece as `(start, end, value at start, value just before end)`.
    fn pieces(&self) -> impl Iterator<Item = (f64, f64, f64, f64)> + '_ {
        self.points.windows(2).map(move |w| match self.kind {
            PieceKind::Step => (w[0].0, w[1].0, w[0].1, w[0].1),
            PieceKind::Linear => (w[0].0, w[1].0, w[0].1, w[1].1),
        })
    }

    fn nondecreasing(&self) -> bool {
        let vals: Vec<f64> = match self.kind {
            PieceKind::Step => self.points[..self.points.len() - 1].iter().map(|p| p.1).collect(),
            PieceKind::Linear => self.points.iter().map(|p| p.1).collect(),
        };
        vals.windows(2).all(|w| w[1] >= w[0])
    }

    pub fn check_spectrum(&self) -> Result<()> {
        self.check_grid().map_err(|e| Error::NotAdmissibleSpectrum(e.to_string()))?;
        let bad = |m: &str| Err(Error::NotAdmissibleSpectrum(m.into()));
        if self.pieces().any(|(_, _, l, r)| l < 0.0 || r < 0.0) {
            return bad("spectrum must be nonnegative");
        }
        if !self.nondecreasing() {
            return bad("spectrum must be nondecreasing");
        }
        if (self.integral() - 1.0).abs() > ADMISSIBILITY_TOL {
            return Err(Error::NotAdmissibleSpectrum(format!("spectrum integrates to {}, not 1", self.integral())));
        }
        Ok(())
    }

    /// Checks a distortion; step distortions are right-continuous by construction.
    pub fn check_distortion(&self) -> Result<()> {
        self.check_grid().map_err(|e| Error::NotAdmissibleDistortion(e.to_string()))?;
        let bad = |m: &str| Err(Error::NotAdmissibleDistortion(m.into()));
        let p = &self.points;
        let k = p.len();
        if p[0].1 != 0.0 || (p[k - 1].1 - 1.0).abs() > ADMISSIBILITY_TOL {
            return bad("distortion must satisfy h(0) = 0 and h(1) = 1");
        }
        if self.kind == PieceKind::Step && (p[k - 2].1 - 1.0).abs() > ADMISSIBILITY_TOL {
            return bad("distortion must tend to 1 at 1");
        }
        if p.iter().any(|&(_, v)| !(0.0..=1.0 + ADMISSIBILITY_TOL).contains(&v)) {
            return bad("distortion values must lie in [0, 1]");
        }
        if !self.nondecreasing() {
            return bad("distortion must be nondecreasing");
        }
        Ok(())
    }

    /// Running integral `τ ↦ ∫₀^τ f` of a step function, as a piecewise-linear function.
    pub fn cumulative(&self) -> Result<PiecewiseFn> {
        if self.kind != PieceKind::Step {
            return Err(Error::InvalidInput("cumulative integral is only provided for step functions".into()));
        }
        let mut acc = 0.0;
        let mut pts = vec![(0.0, 0.0)];
        for (a, b, v, _) in self.pieces() {
            acc += v * (b - a);
            pts.push((b, acc));
        }
        PiecewiseFn::linear(pts)
    }

    /// Lower convex hull of the graph, as vertices sorted by abscissa.
    fn lower_hull(&self) -> Vec<(f64, f64)> {
        // graph vertices, including left limits at the jumps of a step function
        let mut pts: Vec<(f64, f64)> = Vec::with_capacity(2 * self.points.len());
        match self.kind {
            PieceKind::Step => {
                for (a, b, v, _) in self.pieces() {
                    pts.push((a, v));
                    pts.push((b, v));
                }
                pts.push(*self.points.last().unwrap());
            }
            PieceKind::Linear => pts.extend(self.points.iter().copied()),
        }
        pts.push((0.0, 0.0));
        pts.push((1.0, 1.0));
        // stable sort keeps earlier breakpoints first on ties; the lowest point per abscissa wins
        pts.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1)));
        pts.dedup_by(|q, p| q.0 == p.0);

        let mut hull: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
        for p in pts {
            while hull.len() >= 2 {
                let (o, a) = (hull[hull.len() - 2], hull[hull.len() - 1]);
                let cross = (a.0 - o.0) * (p.1 - o.1) - (a.1 - o.1) * (p.0 - o.0);
                if cross <= 0.0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        hull
    }
}

fn check_level(beta: f64) -> Result<()> {
    if beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        Err(Error::BadBeta(beta))
    }
}

/// Law-invariant risk measure applied to a loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum RiskMeasure {
    #[serde(rename = "var")]
    VaR { beta: f64 },
    #[serde(rename = "cvar")]
    CVaR { beta: f64 },
    MeanStd { beta: f64 },
    MeanVariance { beta: f64 },
    Spectral { psi: PiecewiseFn },
    Kusuoka { spectra: Vec<PiecewiseFn> },
    Distortion { h: PiecewiseFn },
}

impl RiskMeasure {
    fn name(&self) -> &'static str {
        match self {
            RiskMeasure::VaR { .. } => "var",
            RiskMeasure::CVaR { .. } => "cvar",
            RiskMeasure::MeanStd { .. } => "mean-std",
            RiskMeasure::MeanVariance { .. } => "mean-variance",
            RiskMeasure::Spectral { .. } => "spectral",
            RiskMeasure::Kusuoka { .. } => "kusuoka",
            RiskMeasure::Distortion { .. } => "distortion",
        }
    }
}

/// Parses the short forms `var:β`, `cvar:β`, `mean-std:β`, `mean-variance:β`, or a JSON object.
impl FromStr for RiskMeasure {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.starts_with('{') {
            return serde_json::from_str(s).map_err(|e| Error::InvalidInput(format!("risk measure JSON: {e}")));
        }
        let (name, arg) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidInput(format!("expected <name>:<level>, got '{s}'")))?;
        let beta: f64 = arg.trim().parse().map_err(|_| Error::InvalidInput(format!("bad level '{arg}'")))?;
        match name.trim().to_ascii_lowercase().as_str() {
            "var" => Ok(RiskMeasure::VaR { beta }),
            "cvar" => Ok(RiskMeasure::CVaR { beta }),
            "mean-std" | "meanstd" => Ok(RiskMeasure::MeanStd { beta }),
            "mean-variance" | "mean-var" | "meanvar" => Ok(RiskMeasure::MeanVariance { beta }),
            other => Err(Error::InvalidInput(format!("unknown risk measure '{other}'"))),
        }
    }
}

/// Standard risk coefficient of `risk` under `class`. May be negative (Gaussian VaR above the
/// median); consumers that need `α ≥ 0` check it themselves.
pub fn standard_risk_coefficient(risk: &RiskMeasure, class: StructuralClass) -> Result<f64> {
    use StructuralClass::*;
    let unsupported = || Error::UnsupportedPair { risk: risk.name().into(), class: class.to_string() };
    match risk {
        RiskMeasure::VaR { beta } => {
            let b = *beta;
            check_level(b)?;
            Ok(match class {
                AllL2 => ((1.0 - b) / b).sqrt(),
                Symmetric if b < 0.5 => (1.0 / (2.0 * b)).sqrt(),
                SymmetricLinearUnimodal if b < 0.5 => 2.0 / (3.0 * (2.0 * b).sqrt()),
                Symmetric | SymmetricLinearUnimodal => 0.0,
                Gaussian => gaussian_inverse_cdf(1.0 - b)?,
            })
        }
        RiskMeasure::CVaR { beta } => {
            let b = *beta;
            check_level(b)?;
            Ok(match class {
                AllL2 => ((1.0 - b) / b).sqrt(),
                Symmetric if b < 0.5 => (1.0 / (2.0 * b)).sqrt(),
                Symmetric => (1.0 - b).sqrt() / (std::f64::consts::SQRT_2 * b),
                SymmetricLinearUnimodal if b <= 1.0 / 3.0 => 2.0 / (3.0 * b.sqrt()),
                SymmetricLinearUnimodal if b <= 2.0 / 3.0 => 3f64.sqrt() * (1.0 - b),
                SymmetricLinearUnimodal => 2.0 * (1.0 - b).sqrt() / (3.0 * b),
                Gaussian => {
                    let z = gaussian_inverse_cdf(1.0 - b)?;
                    (-0.5 * z * z).exp() / ((2.0 * std::f64::consts::PI).sqrt() * b)
                }
            })
        }
        RiskMeasure::MeanStd { beta } => {
            if !(*beta >= 0.0) || !beta.is_finite() {
                return Err(Error::BadBeta(*beta));
            }
            Ok(*beta)
        }
        RiskMeasure::MeanVariance { .. } => Err(Error::NotPositiveHomogeneous),
        RiskMeasure::Spectral { psi } if class == AllL2 => spectral_alpha(psi),
        RiskMeasure::Kusuoka { spectra } if class == AllL2 => kusuoka_alpha(spectra),
        RiskMeasure::Distortion { h } if class == AllL2 => distortion_alpha(h),
        _ => Err(unsupported()),
    }
}

/// `(∫ψ² − 1)^{1/2}` for an admissible spectrum.
pub fn spectral_alpha(psi: &PiecewiseFn) -> Result<f64> {
    psi.check_spectrum()?;
    Ok((psi.integral_sq() - 1.0).max(0.0).sqrt())
}

/// Largest spectral coefficient over a finite family.
pub fn kusuoka_alpha(spectra: &[PiecewiseFn]) -> Result<f64> {
    if spectra.is_empty() {
        return Err(Error::EmptyFamily);
    }
    spectra.iter().map(spectral_alpha).try_fold(f64::NEG_INFINITY, |m, a| Ok(m.max(a?)))
}

/// `(∫(h'_cvx)² − 1)^{1/2}` where `h_cvx` is the convex envelope of the distortion.
pub fn distortion_alpha(h: &PiecewiseFn) -> Result<f64> {
    h.check_distortion()?;
    let hull = h.lower_hull();
    let sq: f64 = hull
        .windows(2)
        .map(|w| {
            let dx = w[1].0 - w[0].0;
            let slope = (w[1].1 - w[0].1) / dx;
            slope * slope * dx
        })
        .sum();
    Ok((sq - 1.0).max(0.0).sqrt())
}

/// Standard normal CDF.
pub fn gaussian_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Inverse of the standard normal CDF: a rational initial guess refined by one Halley step.
pub fn gaussian_inverse_cdf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::OutOfRange(p));
    }
    if p > 0.5 {
        // exact antisymmetry between p and 1 − p
        return Ok(-lower_inverse_cdf(1.0 - p));
    }
    Ok(lower_inverse_cdf(p))
}

/// Inverse CDF on `(0, 1/2]`.
fn lower_inverse_cdf(p: f64) -> f64 {
    if p == 0.5 {
        return 0.0;
    }
    const A: [f64; 6] = [-3.969683028665376e1, 2.209460984245205e2, -2.759285104469687e2, 1.383577518672690e2, -3.066479806614716e1, 2.506628277459239];
    const B: [f64; 5] = [-5.447609879822406e1, 1.615858368580409e2, -1.556989798598866e2, 6.680131188771972e1, -1.328068155288572e1];
    const C: [f64; 6] = [-7.784894002430293e-3, -3.223964580411365e-1, -2.400758277161838, -2.549732539343734, 4.374664141464968, 2.938163982698783];
    const D: [f64; 4] = [7.784695709041462e-3, 3.224671290700398e-1, 2.445134137142996, 3.754408661907416];
    const P_LOW: f64 = 0.02425;

    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5]) / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    let e = gaussian_cdf(x) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}
