//! Experiment orchestration: the regime-classification sweep over
//! `(α, ε)`, the `K` report and the verification suites.

pub mod verify;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell::{k_report, KReport};
use crate::epsdomain::{solve_eps_spectrum_extended, EpsProblem, EpsResultFile, MeshRule};
use crate::limit1d::{limit_mesh, solve_limit_spectrum_extended, LimitBc, LimitKind, DEFAULT_LIMIT_ELEMENTS, DEFAULT_MODE_CUTOFF};
use crate::profile::{load_profile, OscillationProfile, PerturbationParams, ProfileFile};
use crate::{Error, Result};

pub use verify::{run_verify, SuiteResult, VerifyLevel, VerifyOptions, VerifyReport};

/// `ε = 1/n`, written in configs either as a number or as `"1/n"`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "EpsInput", into = "String")]
pub struct EpsValue(pub u32);

#[derive(Deserialize)]
#[serde(untagged)]
enum EpsInput {
    Number(f64),
    Text(String),
}

impl EpsValue {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(d) = s.strip_prefix("1/") {
            let n: u32 = d.trim().parse().map_err(|_| Error::InvalidInput(format!("bad ε {s:?}")))?;
            return PerturbationParams::<f64>::new(n, 1.0).map(|_| EpsValue(n));
        }
        let v: f64 = s.parse().map_err(|_| Error::InvalidInput(format!("bad ε {s:?}")))?;
        Self::from_f64(v)
    }

    pub fn from_f64(v: f64) -> Result<Self> {
        PerturbationParams::from_epsilon(v, 1.0).map(|p| EpsValue(p.denominator()))
    }

    pub fn value(self) -> f64 {
        1.0 / self.0 as f64
    }
}

impl TryFrom<EpsInput> for EpsValue {
    type Error = Error;

    fn try_from(v: EpsInput) -> Result<Self> {
        match v {
            EpsInput::Number(x) => Self::from_f64(x),
            EpsInput::Text(s) => Self::parse(&s),
        }
    }
}

impl From<EpsValue> for String {
    fn from(v: EpsValue) -> String {
        format!("1/{}", v.0)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshOverrides {
    pub elements_per_period: Option<usize>,
    pub layer_elements: Option<usize>,
    /// Elements of the limit-problem mesh.
    pub limit_elements: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepChecks {
    /// Refuse to run when the three `K` routes disagree.
    #[serde(default = "yes")]
    pub cell_agreement: bool,
    /// Also evaluate the strange term with the opposite sign.
    #[serde(default = "yes")]
    pub flipped_sign: bool,
}

impl Default for SweepChecks {
    fn default() -> Self {
        SweepChecks { cell_agreement: true, flipped_sign: true }
    }
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Profile JSON; `b = 1 + cos(2πȳ)` when absent.
    #[serde(default)]
    pub profile: Option<PathBuf>,
    #[serde(default = "default_alphas")]
    pub alpha: Vec<f64>,
    #[serde(default = "default_eps")]
    pub eps: Vec<EpsValue>,
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default = "default_modes")]
    pub modes: usize,
    #[serde(default)]
    pub mesh: MeshOverrides,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub checks: SweepChecks,
}

fn default_alphas() -> Vec<f64> {
    vec![1.0, 1.5, 2.0]
}

fn default_eps() -> Vec<EpsValue> {
    [4, 8, 16, 32].into_iter().map(EpsValue).collect()
}

fn default_count() -> usize {
    3
}

fn default_modes() -> usize {
    DEFAULT_MODE_CUTOFF
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            profile: None,
            alpha: default_alphas(),
            eps: default_eps(),
            count: default_count(),
            modes: default_modes(),
            mesh: MeshOverrides::default(),
            out: None,
            checks: SweepChecks::default(),
        }
    }
}

impl SweepConfig {
    /// Reads a config; a relative profile path is taken relative to the
    /// config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: SweepConfig = serde_json::from_str(&text)?;
        if let (Some(p), Some(dir)) = (&cfg.profile, path.parent()) {
            if p.is_relative() {
                cfg.profile = Some(dir.join(p));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha.is_empty() || self.eps.is_empty() {
            return Err(Error::InvalidInput("the α and ε lists must be non-empty".into()));
        }
        if let Some(a) = self.alpha.iter().find(|a| !(**a > 0.0) || !a.is_finite()) {
            return Err(Error::InvalidInput(format!("α = {a} must be positive")));
        }
        if self.count == 0 || self.count > crate::epsdomain::MAX_EIGEN_COUNT {
            return Err(Error::InvalidInput(format!("count must be in 1..={}", crate::epsdomain::MAX_EIGEN_COUNT)));
        }
        if self.eps.iter().any(|e| e.0 < 2) {
            return Err(Error::InvalidInput("ε must be below 1".into()));
        }
        Ok(())
    }

    pub fn load_profile(&self) -> Result<OscillationProfile<f64>> {
        match &self.profile {
            Some(p) => load_profile(p),
            None => OscillationProfile::cosine(1.0, 1.0),
        }
    }

    pub fn mesh_rule(&self, alpha: f64) -> MeshRule {
        let base = MeshRule::for_alpha(alpha);
        MeshRule {
            elements_per_period: self.mesh.elements_per_period.unwrap_or(base.elements_per_period),
            layer_elements: self.mesh.layer_elements.unwrap_or(base.layer_elements),
        }
    }
}

/// Regime of Theorem-style classification.
pub type Regime = LimitKind;

/// The limit each `α` should select: `α > 3/2` intermediate, `α = 3/2`
/// strange term, `α < 3/2` Dirichlet unless the profile is constant.
pub fn predicted_regime(alpha: f64, profile_constant: bool) -> Regime {
    if profile_constant || alpha > 1.5 + 1e-12 {
        LimitKind::Intermediate
    } else if (alpha - 1.5).abs() <= 1e-12 {
        LimitKind::StrangeTerm
    } else {
        LimitKind::DirichletOnW
    }
}

/// Nearest limit; ties go to the earlier of intermediate, strange, Dirichlet.
pub fn classify(d_int: f64, d_hat: f64, d_dir: f64) -> Option<Regime> {
    let cands = [(d_int, LimitKind::Intermediate), (d_hat, LimitKind::StrangeTerm), (d_dir, LimitKind::DirichletOnW)];
    if cands.iter().any(|(d, _)| !d.is_finite()) {
        return None;
    }
    cands.iter().fold(None, |best: Option<(f64, Regime)>, &(d, r)| match best {
        Some((bd, _)) if bd <= d => best,
        _ => Some((d, r)),
    }).map(|(_, r)| r)
}

/// One `(α, ε, j)` row. The serialized table keeps the opposite-sign
/// strange term and the case error next to the columns of the CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub alpha: f64,
    pub eps: f64,
    /// 1-based eigenvalue index.
    pub j: usize,
    pub lambda_eps: f64,
    pub lambda_int: f64,
    pub lambda_hat: f64,
    pub lambda_dir: f64,
    pub d_int: f64,
    pub d_hat: f64,
    pub d_dir: f64,
    pub predicted: Regime,
    pub classified: Option<Regime>,
    pub lambda_hat_flipped: Option<f64>,
    pub d_hat_flipped: Option<f64>,
    pub error: Option<String>,
}

/// Signed strange-term distances for the ground eigenvalue at the smallest
/// `ε` of each `α = 3/2` column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignCheck {
    pub alpha: f64,
    pub eps: f64,
    pub lambda_eps: f64,
    pub lambda_hat_literal: f64,
    pub lambda_hat_flipped: f64,
    pub d_hat_literal: f64,
    pub d_hat_flipped: f64,
    /// The opposite-sign strange term is the closer of the two.
    pub opposite_sign_preferred: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitValues {
    pub int: Vec<f64>,
    pub hat: Vec<f64>,
    pub hat_flipped: Option<Vec<f64>>,
    pub dir: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    #[serde(rename = "K")]
    pub k: f64,
    pub limits: LimitValues,
    pub rows: Vec<ConvergenceRow>,
    pub cases: Vec<EpsResultFile>,
    pub sign_checks: Vec<SignCheck>,
}

pub const CSV_HEADER: &str =
    "alpha,eps,j,lambda_eps,lambda_int,lambda_hat,lambda_dir,d_int,d_hat,d_dir,predicted,classified";

/// 17 significant digits, round-trip exact.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "NaN".into()
    }
}

impl ConvergenceTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let vals = [r.alpha, r.eps];
            let rest = [r.lambda_eps, r.lambda_int, r.lambda_hat, r.lambda_dir, r.d_int, r.d_hat, r.d_dir];
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                fmt17(vals[0]),
                fmt17(vals[1]),
                r.j,
                rest.iter().map(|v| fmt17(*v)).collect::<Vec<_>>().join(","),
                r.predicted.name(),
                r.classified.map_or("failed", |c| c.name()),
            );
        }
        out
    }

    pub fn sign_csv(&self) -> String {
        let mut out =
            String::from("alpha,eps,lambda_eps,lambda_hat_literal,lambda_hat_flipped,d_hat_literal,d_hat_flipped,opposite_sign_preferred\n");
        for s in &self.sign_checks {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                fmt17(s.alpha),
                fmt17(s.eps),
                fmt17(s.lambda_eps),
                fmt17(s.lambda_hat_literal),
                fmt17(s.lambda_hat_flipped),
                fmt17(s.d_hat_literal),
                fmt17(s.d_hat_flipped),
                s.opposite_sign_preferred
            );
        }
        out
    }

    /// Writes `table.csv`, `table.json`, `strange_sign.csv` and one JSON per case.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir.join("cases"))?;
        std::fs::write(dir.join("table.csv"), self.to_csv())?;
        std::fs::write(dir.join("table.json"), serde_json::to_string_pretty(self)?)?;
        std::fs::write(dir.join("strange_sign.csv"), self.sign_csv())?;
        for c in &self.cases {
            let name = format!("alpha{}_eps1-{}.json", c.alpha, (1.0 / c.eps).round() as u64);
            std::fs::write(dir.join("cases").join(name), serde_json::to_string_pretty(c)?)?;
        }
        Ok(())
    }

    /// Rows of one `α` with index `j`, in ε order.
    pub fn column(&self, alpha: f64, j: usize) -> Vec<&ConvergenceRow> {
        self.rows.iter().filter(|r| r.alpha == alpha && r.j == j).collect()
    }
}

/// Drops modes with `max |k_i| > cutoff`.
pub fn truncate_profile(p: &ProfileFile, cutoff: i32) -> ProfileFile {
    let modes = p.modes.iter().filter(|m| m.k.iter().all(|k| k.abs() <= cutoff)).cloned().collect();
    ProfileFile { modes, ..p.clone() }
}

pub const DEFAULT_CELL_CUTOFF: i32 = 64;

/// `K` by the three routes for the profile in `path`.
pub fn run_cell_k(path: &Path, cutoff: i32) -> Result<KReport> {
    let text = std::fs::read_to_string(path)?;
    let file: ProfileFile = serde_json::from_str(&text)?;
    let profile = truncate_profile(&file, cutoff).into_profile::<f64>()?;
    k_report(&profile)
}

/// Limit spectra used by a sweep.
pub fn limit_values(k: f64, modes: usize, count: usize, elements: usize, flipped: bool) -> Result<LimitValues> {
    let mesh = limit_mesh::<f64>(elements)?;
    let spec = |bc: LimitBc<f64>| solve_limit_spectrum_extended(&bc, modes, count, &mesh).map(|s| s.values());
    Ok(LimitValues {
        int: spec(LimitBc::intermediate())?,
        hat: spec(LimitBc::strange(k)?)?,
        hat_flipped: if flipped { Some(spec(LimitBc::strange_flipped(k)?)?) } else { None },
        dir: spec(LimitBc::dirichlet())?,
    })
}

fn solve_case(profile: &OscillationProfile<f64>, alpha: f64, eps: EpsValue, rule: MeshRule, count: usize) -> Result<EpsResultFile> {
    let params = PerturbationParams::new(eps.0, alpha)?;
    let problem = EpsProblem::with_rule(profile.clone(), params, rule)?;
    let (_, r) = solve_eps_spectrum_extended(&problem, count)?;
    Ok(r.to_file())
}

/// Runs every `(α, ε)` case and tabulates the distances to the limits. A
/// failing case leaves `NaN` rows with the error message.
pub fn run_converge(cfg: &SweepConfig) -> Result<ConvergenceTable> {
    cfg.validate()?;
    let profile = cfg.load_profile()?;
    let report = k_report(&profile)?;
    if cfg.checks.cell_agreement && !report.agrees() {
        return Err(Error::InvalidInput(format!(
            "K routes disagree: energy {}, boundary {}, test function {}",
            report.k_energy, report.k_boundary, report.k_testfunction
        )));
    }
    let k = report.k_energy;
    let limits = limit_values(
        k,
        cfg.modes,
        cfg.count,
        cfg.mesh.limit_elements.unwrap_or(DEFAULT_LIMIT_ELEMENTS),
        cfg.checks.flipped_sign,
    )?;
    let jobs: Vec<(f64, EpsValue)> = cfg.alpha.iter().flat_map(|&a| cfg.eps.iter().map(move |&e| (a, e))).collect();
    let results: Vec<Result<EpsResultFile>> = jobs
        .par_iter()
        .map(|&(a, e)| solve_case(&profile, a, e, cfg.mesh_rule(a), cfg.count))
        .collect();
    let constant = profile.is_constant();
    let mut rows = Vec::new();
    let mut cases = Vec::new();
    for (&(alpha, eps), res) in jobs.iter().zip(results) {
        let (values, error) = match res {
            Ok(file) => {
                let v = file.eigs.clone();
                cases.push(file);
                (v, None)
            }
            Err(e) => (vec![f64::NAN; cfg.count], Some(e.to_string())),
        };
        for j in 0..cfg.count {
            let le = values.get(j).copied().unwrap_or(f64::NAN);
            let d = |x: f64| (le - x).abs();
            let (d_int, d_hat, d_dir) = (d(limits.int[j]), d(limits.hat[j]), d(limits.dir[j]));
            let flipped = limits.hat_flipped.as_ref().map(|h| h[j]);
            rows.push(ConvergenceRow {
                alpha,
                eps: eps.value(),
                j: j + 1,
                lambda_eps: le,
                lambda_int: limits.int[j],
                lambda_hat: limits.hat[j],
                lambda_dir: limits.dir[j],
                d_int,
                d_hat,
                d_dir,
                predicted: predicted_regime(alpha, constant),
                classified: classify(d_int, d_hat, d_dir),
                lambda_hat_flipped: flipped,
                d_hat_flipped: flipped.map(d),
                error: error.clone(),
            });
        }
    }
    let sign_checks = sign_checks(&rows, cfg);
    Ok(ConvergenceTable { k, limits, rows, cases, sign_checks })
}

fn sign_checks(rows: &[ConvergenceRow], cfg: &SweepConfig) -> Vec<SignCheck> {
    let Some(smallest) = cfg.eps.iter().max().map(|e| e.value()) else {
        return Vec::new();
    };
    let mut by_alpha: BTreeMap<u64, SignCheck> = BTreeMap::new();
    for r in rows {
        if r.predicted != LimitKind::StrangeTerm || r.j != 1 || r.eps != smallest {
            continue;
        }
        let (Some(lf), Some(df)) = (r.lambda_hat_flipped, r.d_hat_flipped) else {
            continue;
        };
        by_alpha.insert(
            r.alpha.to_bits(),
            SignCheck {
                alpha: r.alpha,
                eps: r.eps,
                lambda_eps: r.lambda_eps,
                lambda_hat_literal: r.lambda_hat,
                lambda_hat_flipped: lf,
                d_hat_literal: r.d_hat,
                d_hat_flipped: df,
                opposite_sign_preferred: df < r.d_hat,
            },
        );
    }
    by_alpha.into_values().collect()
}
