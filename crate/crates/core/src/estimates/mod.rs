//! Functional error majorants, the error identity and element indicators.
//!
//! Every majorant bounds a squared error norm. Reports keep the raw integrals so the
//! total can be recomputed from its parts.

mod flux;
mod integrals;

pub use flux::{optimize_flux, FluxReconstruction};
pub use integrals::{integrate_residuals, residual_sample, ElementIntegrals, EstimateContext, ResidualSample};

use serde::Serialize;

use crate::error::{Error, Result};

/// Spatial domains with a known Friedrichs constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpatialDomain {
    /// `(0, l_1) x ... x (0, l_d)`.
    Box { lengths: [f64; 2], dim: usize },
    /// `r_in <= |x| <= r_out` in the first quadrant.
    QuarterAnnulus { r_in: f64, r_out: f64 },
}

/// Constant `C_F` of `||w||_Q <= C_F ||grad_x w||_Q` for `w` vanishing on the lateral boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FriedrichsConstant(pub f64);

impl FriedrichsConstant {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// `1 / sqrt(lambda_1)` for boxes; the annulus uses its enclosing square.
pub fn friedrichs_constant(domain: &SpatialDomain) -> Result<FriedrichsConstant> {
    let pi = std::f64::consts::PI;
    match *domain {
        SpatialDomain::Box { lengths, dim } => {
            if !(1..=2).contains(&dim) || lengths[..dim].iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
                return Err(Error::InvalidParameter(format!("unsupported box domain {lengths:?} in {dim}d")));
            }
            let lambda: f64 = lengths[..dim].iter().map(|l| (pi / l).powi(2)).sum();
            Ok(FriedrichsConstant(1.0 / lambda.sqrt()))
        }
        SpatialDomain::QuarterAnnulus { r_in, r_out } => {
            if !(r_in > 0.0 && r_out > r_in && r_out.is_finite()) {
                return Err(Error::InvalidParameter(format!("unsupported annulus radii {r_in}, {r_out}")));
            }
            friedrichs_constant(&SpatialDomain::Box { lengths: [r_out, r_out], dim: 2 })
        }
    }
}

/// `(1 + beta) a2 + (1 + 1/beta) b2`, with the limits `beta -> 0` and `beta -> inf`.
pub fn pair_bound(beta: f64, a2: f64, b2: f64) -> f64 {
    if beta.is_infinite() {
        return if a2 == 0.0 { b2 } else { f64::INFINITY };
    }
    if beta == 0.0 {
        return if b2 == 0.0 { a2 } else { f64::INFINITY };
    }
    (1.0 + beta) * a2 + (1.0 + 1.0 / beta) * b2
}

/// Minimizer `sqrt(b2 / a2)` of [`pair_bound`] and the minimum `(a + b)^2`.
pub fn optimal_pair(a2: f64, b2: f64) -> (f64, f64) {
    if a2 == 0.0 && b2 == 0.0 {
        return (1.0, 0.0);
    }
    if a2 == 0.0 {
        return (f64::INFINITY, b2);
    }
    if b2 == 0.0 {
        return (0.0, a2);
    }
    let p = (b2 / a2).sqrt();
    (p, pair_bound(p, a2, b2))
}

/// `beta = C_F m_eq / m_d`.
pub fn optimal_beta(m_d: f64, m_eq: f64, c_f: f64) -> f64 {
    optimal_pair(m_d * m_d, c_f * c_f * m_eq * m_eq).0
}

/// `alpha = ||R_eq|| / ||div R_d||`.
pub fn optimal_alpha_sh(div_rd: f64, r_eq: f64) -> f64 {
    optimal_pair(div_rd * div_rd, r_eq * r_eq).0
}

/// Which bound a report carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MajorantKind {
    I,
    ISh,
    II,
    IISh,
    EId,
}

/// Stored components of a report, enough to recompute its value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum MajorantTerms {
    I { m_d2: f64, m_eq2: f64, c_f: f64, beta: f64 },
    ISh { m_d2: f64, m_eq2: f64, div_rd2: f64, c_f: f64, beta: f64, alpha: f64, delta: f64 },
    II { rd2: f64, req2: f64, eta2_final: f64, f_term: f64, sigma0: f64, c_f: f64, beta: f64 },
    IISh { m_i: f64, rd2_final: f64, dt_rd2: f64, req2: f64, delta: f64, alpha: f64, zeta: f64, epsilon: f64 },
    EId { strong2: f64, initial2: f64 },
}

impl MajorantTerms {
    /// Total value from the stored components.
    pub fn recombine(&self) -> f64 {
        match *self {
            MajorantTerms::I { m_d2, m_eq2, c_f, beta } => pair_bound(beta, m_d2, c_f * c_f * m_eq2),
            MajorantTerms::ISh { m_d2, m_eq2, div_rd2, c_f, beta, alpha, delta } => {
                let tail = if delta == 0.0 { 0.0 } else { delta * pair_bound(alpha, div_rd2, m_eq2) };
                pair_bound(beta, m_d2, c_f * c_f * m_eq2) + tail
            }
            MajorantTerms::II { rd2, req2, eta2_final, f_term, sigma0, c_f, beta } => {
                eta2_final + 2.0 * f_term + sigma0 + pair_bound(beta, rd2, c_f * c_f * req2)
            }
            MajorantTerms::IISh { m_i, rd2_final, dt_rd2, req2, delta, alpha, zeta, epsilon } => {
                epsilon * delta * rd2_final + zeta * (pair_bound(alpha, m_i, delta * delta * dt_rd2) + delta * req2)
            }
            MajorantTerms::EId { strong2, initial2 } => strong2 + initial2,
        }
    }

    pub fn beta(&self) -> Option<f64> {
        match *self {
            MajorantTerms::I { beta, .. } | MajorantTerms::ISh { beta, .. } | MajorantTerms::II { beta, .. } => Some(beta),
            _ => None,
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match *self {
            MajorantTerms::ISh { alpha, .. } | MajorantTerms::IISh { alpha, .. } => Some(alpha),
            _ => None,
        }
    }
}

/// Wall-clock seconds spent on one estimate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct EstimateTimings {
    pub t_as: f64,
    pub t_sol: f64,
    pub t_ew: f64,
}

/// A computed bound with its parts and element-wise split.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MajorantReport {
    pub kind: MajorantKind,
    /// Value of the bound on the squared norm.
    pub value: f64,
    pub terms: MajorantTerms,
    pub indicators: Vec<f64>,
    pub timings: EstimateTimings,
}

impl MajorantReport {
    fn new(kind: MajorantKind, terms: MajorantTerms, indicators: Vec<f64>, t_ew: f64) -> Self {
        Self { kind, value: terms.recombine(), terms, indicators, timings: EstimateTimings { t_ew, ..Default::default() } }
    }

    /// Square root of the bound.
    pub fn norm(&self) -> f64 {
        self.value.sqrt()
    }
}

fn sum_by<F: Fn(&ElementIntegrals) -> f64>(ints: &[ElementIntegrals], f: F) -> f64 {
    ints.iter().map(f).sum()
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::InvalidParameter(format!("delta_h = {delta} must be nonnegative")));
    }
    Ok(())
}

/// `M^I = (1+beta)||y - grad v||^2 + (1+1/beta) C_F^2 ||div y + f - dt v||^2`.
///
/// `beta = None` picks the optimum for the given residuals.
pub fn majorant_i(ints: &[ElementIntegrals], c_f: f64, beta: Option<f64>, t_ew: f64) -> MajorantReport {
    let m_d2 = sum_by(ints, |e| e.rd2);
    let m_eq2 = sum_by(ints, |e| e.req2);
    let beta = beta.unwrap_or_else(|| optimal_beta(m_d2.sqrt(), m_eq2.sqrt(), c_f));
    let ind = ints.iter().map(|e| e.rd2).collect();
    MajorantReport::new(MajorantKind::I, MajorantTerms::I { m_d2, m_eq2, c_f, beta }, ind, t_ew)
}

/// `M^I_{s,h} = M^I + delta_h [(1+alpha)||div R_d||^2 + (1+1/alpha)||R_eq||^2]`.
pub fn majorant_i_sh(
    ints: &[ElementIntegrals],
    c_f: f64,
    delta: f64,
    beta: Option<f64>,
    alpha: Option<f64>,
    t_ew: f64,
) -> Result<MajorantReport> {
    check_delta(delta)?;
    let m_d2 = sum_by(ints, |e| e.rd2);
    let m_eq2 = sum_by(ints, |e| e.req2);
    let div_rd2 = sum_by(ints, |e| e.div_rd2);
    let beta = beta.unwrap_or_else(|| optimal_beta(m_d2.sqrt(), m_eq2.sqrt(), c_f));
    let alpha = alpha.unwrap_or_else(|| optimal_alpha_sh(div_rd2.sqrt(), m_eq2.sqrt()));
    let ind = ints.iter().map(|e| e.rd2).collect();
    let terms = MajorantTerms::ISh { m_d2, m_eq2, div_rd2, c_f, beta, alpha, delta };
    Ok(MajorantReport::new(MajorantKind::ISh, terms, ind, t_ew))
}

/// `M^II = ||w - v||^2_{Sigma_T} + 2 F(v, w - v) + (1+beta)||R^II_d||^2 + C_F^2 (1+1/beta)||R^II_eq||^2`
/// plus the initial-face terms `||u_0 - v||^2 - 2 (w - v, u_0 - v)` on `Sigma_0`, which vanish
/// when both `v` and `w` match `u_0` there.
pub fn majorant_ii(ints: &[ElementIntegrals], c_f: f64, beta: Option<f64>, t_ew: f64) -> MajorantReport {
    let rd2 = sum_by(ints, |e| e.rd2_ii);
    let req2 = sum_by(ints, |e| e.req2_ii);
    let beta = beta.unwrap_or_else(|| optimal_beta(rd2.sqrt(), req2.sqrt(), c_f));
    let terms = MajorantTerms::II {
        rd2,
        req2,
        eta2_final: sum_by(ints, |e| e.eta2_final),
        f_term: sum_by(ints, |e| e.f_term),
        sigma0: sum_by(ints, |e| e.sigma0_ii),
        c_f,
        beta,
    };
    let ind = ints.iter().map(|e| e.rd2_ii).collect();
    MajorantReport::new(MajorantKind::II, terms, ind, t_ew)
}

/// Gap constant `4 (1 + beta) - 2` of `M^II`.
pub fn gap_constant(report: &MajorantReport) -> Option<f64> {
    match report.terms {
        MajorantTerms::II { beta, .. } => Some(4.0 * (1.0 + beta) - 2.0),
        _ => None,
    }
}

/// Second stabilized majorant with `zeta = 1`, `epsilon = 2`:
/// `eps delta ||R_d||^2_{Sigma_T} + zeta [(1+alpha) M^I + (1+1/alpha) delta^2 ||dt R_d||^2 + delta ||R_eq||^2]`.
pub fn majorant_ii_sh(
    ints: &[ElementIntegrals],
    c_f: f64,
    delta: f64,
    beta: Option<f64>,
    alpha: Option<f64>,
    t_ew: f64,
) -> Result<MajorantReport> {
    majorant_ii_sh_general(ints, c_f, delta, beta, alpha, 1.0, 2.0, t_ew)
}

/// [`majorant_ii_sh`] with free `zeta >= 1/2` and `epsilon >= 1`.
#[allow(clippy::too_many_arguments)]
pub fn majorant_ii_sh_general(
    ints: &[ElementIntegrals],
    c_f: f64,
    delta: f64,
    beta: Option<f64>,
    alpha: Option<f64>,
    zeta: f64,
    epsilon: f64,
    t_ew: f64,
) -> Result<MajorantReport> {
    check_delta(delta)?;
    if !(zeta >= 0.5) || !(epsilon >= 1.0) {
        return Err(Error::InvalidParameter(format!("zeta = {zeta}, epsilon = {epsilon} out of range")));
    }
    let m_i = majorant_i(ints, c_f, beta, 0.0).value;
    let dt_rd2 = sum_by(ints, |e| e.dt_rd2);
    let alpha = alpha.unwrap_or_else(|| optimal_pair(m_i, delta * delta * dt_rd2).0);
    let terms = MajorantTerms::IISh {
        m_i,
        rd2_final: sum_by(ints, |e| e.rd2_final),
        dt_rd2,
        req2: sum_by(ints, |e| e.req2),
        delta,
        alpha,
        zeta,
        epsilon,
    };
    let ind = ints.iter().map(|e| e.rd2).collect();
    Ok(MajorantReport::new(MajorantKind::IISh, terms, ind, t_ew))
}

/// `EId^2 = ||grad(u_0 - v)||^2_{Sigma_0} + ||Lap v + f - dt v||^2_Q`, equal to `|||e|||^2_L`.
pub fn error_identity(ints: &[ElementIntegrals], t_ew: f64) -> MajorantReport {
    let terms = MajorantTerms::EId { strong2: sum_by(ints, |e| e.strong2), initial2: sum_by(ints, |e| e.initial2) };
    let ind = ints.iter().map(|e| e.strong2 + e.initial2).collect();
    MajorantReport::new(MajorantKind::EId, terms, ind, t_ew)
}

/// Source of the element-wise refinement indicator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum IndicatorKind {
    /// `||y - grad v||^2_K`.
    MajorantDual,
    /// `EId^2_K`.
    Identity,
    /// `||grad e||^2_K`; needs the exact solution.
    ExactEnergy,
    /// `||Lap v + f - dt v||^2_K`.
    Residual,
}

impl IndicatorKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::MajorantDual => "majorant_dual",
            Self::Identity => "identity",
            Self::ExactEnergy => "exact_energy",
            Self::Residual => "residual",
        }
    }
}

impl std::str::FromStr for IndicatorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "majorant_dual" | "majorant" | "md" => Ok(Self::MajorantDual),
            "identity" | "eid" => Ok(Self::Identity),
            "exact_energy" | "exact" => Ok(Self::ExactEnergy),
            "residual" => Ok(Self::Residual),
            _ => Err(Error::InvalidParameter(format!("unknown indicator kind '{s}'"))),
        }
    }
}

/// Element-wise indicator. `exact` carries `||grad e||^2_K` when the solution is known.
pub fn element_indicators(ints: &[ElementIntegrals], kind: IndicatorKind, exact: Option<&[f64]>) -> Result<Vec<f64>> {
    Ok(match kind {
        IndicatorKind::MajorantDual => ints.iter().map(|e| e.rd2).collect(),
        IndicatorKind::Identity => ints.iter().map(|e| e.strong2 + e.initial2).collect(),
        IndicatorKind::Residual => ints.iter().map(|e| e.strong2).collect(),
        IndicatorKind::ExactEnergy => {
            let ex = exact.ok_or_else(|| Error::InvalidParameter("exact_energy indicator needs the exact solution".into()))?;
            if ex.len() != ints.len() {
                return Err(Error::DimensionMismatch("exact indicator length".into()));
            }
            ex.to_vec()
        }
    })
}

#[cfg(test)]
mod tests;
