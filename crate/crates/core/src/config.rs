//! Study configuration as flat `key = value` text.
//!
//! Keys: `problem`, `p`, `q`, `r`, `M`, `L`, `nref`, `nref0`, `theta`, `marking`, `sigma`,
//! `indicator`, `estimators`, `n_it`, `quadrature`, `output`. Lines starting with `#` are comments.

use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;

use crate::adapt::{MarkingCriterion, MarkingKind};
use crate::error::{Error, Result};
use crate::estimates::IndicatorKind;
use crate::study::ProblemSpec;

/// Which estimates a study evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EstimatorSet {
    pub m1: bool,
    pub m1_sh: bool,
    pub m2: bool,
    pub m2_sh: bool,
    pub eid: bool,
}

impl EstimatorSet {
    pub fn all() -> Self {
        Self { m1: true, m1_sh: true, m2: true, m2_sh: true, eid: true }
    }

    pub fn needs_flux(&self) -> bool {
        self.m1 || self.m1_sh || self.m2 || self.m2_sh
    }
}

impl FromStr for EstimatorSet {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let mut set = Self { m1: false, m1_sh: false, m2: false, m2_sh: false, eid: false };
        for item in s.split(',').map(str::trim).filter(|x| !x.is_empty()) {
            match item.to_ascii_lowercase().as_str() {
                "all" => set = Self::all(),
                "m1" | "maj_i" => set.m1 = true,
                "m1_sh" | "maj_i_sh" => set.m1_sh = true,
                "m2" | "maj_ii" => set.m2 = true,
                "m2_sh" | "maj_ii_sh" => set.m2_sh = true,
                "eid" => set.eid = true,
                _ => return Err(Error::InvalidParameter(format!("unknown estimator '{item}'"))),
            }
        }
        Ok(set)
    }
}

/// Parameters of one refinement study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyConfig {
    pub problem: String,
    /// Degrees of `u_h`, `y_h`, `w_h`.
    pub p: usize,
    pub q: usize,
    pub r: usize,
    /// Coarsening ratios of the flux and `w_h` meshes.
    pub m_ratio: usize,
    pub l_ratio: usize,
    /// Number of refinement steps (levels computed).
    pub nref: usize,
    /// Uniform refinements of the initial mesh.
    pub nref0: u32,
    pub theta: f64,
    pub marking: MarkingCriterion,
    pub indicator: IndicatorKind,
    pub estimators: EstimatorSet,
    pub n_it: usize,
    /// Gauss points per direction for norms and estimates.
    pub quadrature: Option<usize>,
    pub output: Option<PathBuf>,
}

impl StudyConfig {
    /// Defaults of the catalog entry `problem`.
    pub fn for_problem(problem: &str) -> Result<Self> {
        let spec = ProblemSpec::catalog(problem)?;
        let bulk = |s| MarkingCriterion::new(MarkingKind::Bulk, s);
        let mut c = Self {
            problem: spec.name(),
            p: 2,
            q: 3,
            r: 3,
            m_ratio: 7,
            l_ratio: 7,
            nref: 5,
            nref0: 1,
            theta: 0.0,
            marking: MarkingCriterion::new(MarkingKind::Uniform, 0.0)?,
            indicator: IndicatorKind::MajorantDual,
            estimators: EstimatorSet::all(),
            n_it: 2,
            quadrature: None,
            output: None,
        };
        match spec {
            ProblemSpec::Ex1 => {}
            ProblemSpec::Ex2 { k1, .. } if k1 == 1.0 => {
                (c.q, c.r, c.nref0, c.nref) = (4, 4, 3, 4);
                c.marking = bulk(0.6)?;
            }
            ProblemSpec::Ex2 { .. } => {
                (c.q, c.r, c.nref0, c.nref) = (7, 7, 4, 3);
                c.marking = bulk(0.6)?;
            }
            ProblemSpec::Ex3 | ProblemSpec::Ex3TwoD => {
                (c.m_ratio, c.l_ratio, c.nref0, c.nref) = (1, 1, 4, 4);
                if spec == ProblemSpec::Ex3TwoD {
                    (c.nref0, c.nref) = (2, 2);
                }
                c.marking = bulk(0.6)?;
            }
            ProblemSpec::Ex4 => {
                (c.m_ratio, c.l_ratio, c.nref0, c.nref) = (2, 2, 1, 3);
                c.marking = bulk(0.4)?;
            }
            ProblemSpec::Ex6 { .. } => {
                (c.m_ratio, c.l_ratio, c.nref0, c.nref) = (1, 1, 2, 4);
                c.marking = bulk(0.4)?;
            }
        }
        Ok(c)
    }

    /// Parses `key = value` text; the `problem` key selects the defaults the other keys override.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format { line: ln + 1, msg: format!("expected key = value, got '{line}'") })?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let problem = pairs
            .iter()
            .find(|(k, _)| k == "problem")
            .map(|(_, v)| v.clone())
            .ok_or_else(|| Error::InvalidParameter("missing 'problem'".into()))?;
        let mut cfg = Self::for_problem(&problem)?;
        for (k, v) in &pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one key from text.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::InvalidParameter(format!("{key}: cannot parse '{v}'")))
        }
        match key {
            "problem" => {
                ProblemSpec::catalog(value)?;
                self.problem = value.to_string();
            }
            "p" => self.p = num(key, value)?,
            "q" => self.q = num(key, value)?,
            "r" => self.r = num(key, value)?,
            "M" | "m_ratio" => self.m_ratio = num(key, value)?,
            "L" | "l_ratio" => self.l_ratio = num(key, value)?,
            "nref" => self.nref = num(key, value)?,
            "nref0" => self.nref0 = num(key, value)?,
            "theta" => self.theta = num(key, value)?,
            "marking" => self.marking = MarkingCriterion::new(value.parse()?, self.marking.sigma)?,
            "sigma" => self.marking = MarkingCriterion::new(self.marking.kind, num(key, value)?)?,
            "indicator" => self.indicator = value.parse()?,
            "estimators" => self.estimators = value.parse()?,
            "n_it" => self.n_it = num(key, value)?,
            "quadrature" => self.quadrature = Some(num(key, value)?),
            "output" => self.output = Some(PathBuf::from(value)),
            _ => return Err(Error::InvalidParameter(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        ProblemSpec::catalog(&self.problem)?;
        for (name, deg) in [("p", self.p), ("q", self.q), ("r", self.r)] {
            if !(1..=7).contains(&deg) {
                return bad(format!("{name} = {deg} outside 1..=7"));
            }
        }
        if self.p < 2 {
            return bad("p must be >= 2 (the estimates need second derivatives)".into());
        }
        if self.m_ratio == 0 || self.l_ratio == 0 {
            return bad("coarsening ratios must be >= 1".into());
        }
        if self.nref == 0 {
            return bad("nref must be >= 1".into());
        }
        if self.nref0 > 10 {
            return bad(format!("nref0 = {} too large", self.nref0));
        }
        if !(self.theta >= 0.0) || !self.theta.is_finite() {
            return bad(format!("theta = {} must be nonnegative", self.theta));
        }
        if self.n_it == 0 {
            return bad("n_it must be >= 1".into());
        }
        if let Some(n) = self.quadrature {
            if !(1..=crate::quadrature::MAX_POINTS).contains(&n) {
                return bad(format!("quadrature = {n} outside 1..={}", crate::quadrature::MAX_POINTS));
            }
        }
        if self.indicator == IndicatorKind::MajorantDual && !self.estimators.needs_flux() {
            return bad("indicator majorant_dual needs a majorant estimator".into());
        }
        Ok(())
    }

    /// Gauss points per direction for norms and estimates.
    pub fn estimate_points(&self) -> usize {
        self.quadrature.unwrap_or_else(|| (self.p.max(self.q).max(self.r) + 2).min(crate::quadrature::MAX_POINTS))
    }

    /// Canonical `key = value` text.
    pub fn to_text(&self) -> String {
        let est = &self.estimators;
        let names: Vec<&str> = [(est.m1, "m1"), (est.m1_sh, "m1_sh"), (est.m2, "m2"), (est.m2_sh, "m2_sh"), (est.eid, "eid")]
            .iter()
            .filter(|(b, _)| *b)
            .map(|(_, n)| *n)
            .collect();
        let mut s = format!(
            "problem = {}\np = {}\nq = {}\nr = {}\nM = {}\nL = {}\nnref = {}\nnref0 = {}\ntheta = {}\nmarking = {}\nsigma = {}\nindicator = {}\nestimators = {}\nn_it = {}\n",
            self.problem,
            self.p,
            self.q,
            self.r,
            self.m_ratio,
            self.l_ratio,
            self.nref,
            self.nref0,
            self.theta,
            self.marking.kind.name(),
            self.marking.sigma,
            self.indicator.name(),
            names.join(","),
            self.n_it
        );
        if let Some(n) = self.quadrature {
            s += &format!("quadrature = {n}\n");
        }
        if let Some(o) = &self.output {
            s += &format!("output = {}\n", o.display());
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_round_trip() {
        let c = StudyConfig::parse("# comment\nproblem = ex1\np=3\nsigma = 0.5\nmarking = bulk\n").unwrap();
        assert_eq!((c.p, c.q, c.m_ratio), (3, 3, 7));
        assert_eq!(c.marking.kind, MarkingKind::Bulk);
        assert_eq!(c.marking.sigma, 0.5);
        assert_eq!(StudyConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn defaults_per_problem() {
        let c = StudyConfig::for_problem("ex2-1").unwrap();
        assert_eq!((c.q, c.r, c.nref0, c.marking.sigma), (4, 4, 3, 0.6));
        let c = StudyConfig::for_problem("ex4").unwrap();
        assert_eq!((c.m_ratio, c.marking.sigma), (2, 0.4));
        for name in ProblemSpec::names() {
            StudyConfig::for_problem(name).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(StudyConfig::parse("p = 2\n").is_err());
        assert!(StudyConfig::parse("problem = nope\n").is_err());
        assert!(StudyConfig::parse("problem = ex1\np = 9\n").is_err());
        assert!(StudyConfig::parse("problem = ex1\nsigma = 2\n").is_err());
        assert!(StudyConfig::parse("problem = ex1\nfoo = 1\n").is_err());
        assert!(StudyConfig::parse("problem = ex1\njunk\n").is_err());
        assert!(StudyConfig::parse("problem = ex1\ntheta = -1\n").is_err());
        assert!(StudyConfig::parse("problem = ex1\nestimators = eid\n").is_err());
        assert!(StudyConfig::parse("problem = ex1\nestimators = eid\nindicator = identity\n").is_ok());
    }
}
