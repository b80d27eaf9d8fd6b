//! Scenario files and flag merging. A scenario is fully parsed and resolved
//! before any computation starts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use aubrykit::lattice::{convergents, PeriodLattice};
use aubrykit::potentials::{custom_potential, fk_potential, morse_approximation, FkSpec, LocalPotential, TrigSeries, TrigTerm};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("malformed scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

/// Potential section of a scenario file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    /// `fk`, `free` or `custom`.
    pub kind: Option<String>,
    pub k: Option<f64>,
    /// Onsite series; overrides `k` when present.
    pub terms: Option<Vec<TrigTerm>>,
    /// Bond scale of `custom`.
    pub coupling: Option<f64>,
    pub morse_n: Option<f64>,
    pub morse_epsilon: Option<f64>,
}

/// Command-specific options of a scenario file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionsSection {
    /// Flow time.
    pub t: Option<f64>,
    /// Start `ξ` of `flow`, or `x` of `standard-map`.
    pub x0: Option<f64>,
    /// Start momentum of `standard-map`.
    pub y0: Option<f64>,
    /// Seeded perturbation amplitude of the `flow` start.
    pub perturbation: Option<f64>,
    pub steps: Option<usize>,
    pub multistart: Option<usize>,
    pub grid: Option<usize>,
    pub grid_per_dof: Option<usize>,
}

/// Scenario file contents; every key is optional and flags take precedence.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub potential: Option<PotentialSection>,
    /// Row-major period matrix, rows separated by `;`, entries by `,`.
    pub p: Option<String>,
    pub q: Option<String>,
    pub omega: Option<String>,
    pub convergents: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<String>,
    pub tol: Option<f64>,
    pub quick: Option<bool>,
    pub options: Option<OptionsSection>,
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Read { path: path.into(), source })?;
        Ok(toml::from_str(&text)?)
    }
}

/// Flag values that override the scenario file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub potential: Option<String>,
    pub k: Option<f64>,
    pub p: Option<String>,
    pub q: Option<String>,
    pub omega: Option<String>,
    pub convergents: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<String>,
    pub tol: Option<f64>,
    pub quick: bool,
}

/// Resolved lattice request.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum LatticeSpec {
    Periods { d: usize, p: Vec<i64>, q: Vec<i64> },
    Rotation { omega: Vec<f64>, convergents: usize },
    Unspecified,
}

/// Fully resolved scenario; its canonical JSON is what gets hashed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Scenario {
    pub command: String,
    pub potential_kind: String,
    pub v: TrigSeries,
    pub coupling: f64,
    pub morse: Option<(f64, f64)>,
    pub lattice: LatticeSpec,
    pub seed: u64,
    pub tol: f64,
    pub quick: bool,
    pub options: OptionsSection,
    #[serde(skip)]
    pub out: PathBuf,
}

pub fn parse_ints(s: &str) -> Result<Vec<i64>, ScenarioError> {
    s.split(',')
        .map(|t| t.trim().parse::<i64>().map_err(|_| invalid(format!("not an integer: {t:?}"))))
        .collect()
}

/// `"a,b;c,d"` as `(d, row-major entries)`.
pub fn parse_matrix(s: &str) -> Result<(usize, Vec<i64>), ScenarioError> {
    let rows: Vec<Vec<i64>> = s.split(';').map(parse_ints).collect::<Result<_, _>>()?;
    let d = rows.len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(invalid(format!("period matrix {s:?} is not square")));
    }
    Ok((d, rows.concat()))
}

fn parse_floats(s: &str) -> Result<Vec<f64>, ScenarioError> {
    s.split(',')
        .map(|t| {
            let t = t.trim();
            if let Some((a, b)) = t.split_once('/') {
                let (a, b): (f64, f64) = (
                    a.trim().parse().map_err(|_| invalid(format!("not a number: {t:?}")))?,
                    b.trim().parse().map_err(|_| invalid(format!("not a number: {t:?}")))?,
                );
                return Ok(a / b);
            }
            match t {
                "golden" => Ok((5f64.sqrt() - 1.0) / 2.0),
                _ => t.parse().map_err(|_| invalid(format!("not a number: {t:?}"))),
            }
        })
        .collect()
}

fn finite(name: &str, v: f64) -> Result<f64, ScenarioError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(format!("{name} must be finite")))
    }
}

impl Scenario {
    pub fn resolve(command: &str, file: ScenarioFile, o: Overrides) -> Result<Self, ScenarioError> {
        let pot = file.potential.unwrap_or_default();
        let kind = o.potential.or(pot.kind).unwrap_or_else(|| "fk".into());
        let k = finite("k", o.k.or(pot.k).unwrap_or(1.0))?;
        let v = match (kind.as_str(), pot.terms) {
            ("free", Some(_)) => return Err(invalid("potential `free` takes no terms")),
            ("free", None) => TrigSeries::zero(),
            ("fk", None) => TrigSeries::standard(k),
            ("fk" | "custom", Some(terms)) => {
                if terms.iter().any(|t| !t.cos.is_finite() || !t.sin.is_finite()) {
                    return Err(invalid("potential terms must be finite"));
                }
                TrigSeries { terms }
            }
            ("custom", None) => TrigSeries::standard(k),
            (other, _) => return Err(invalid(format!("unknown potential {other:?} (expected fk, free or custom)"))),
        };
        let coupling = finite("coupling", pot.coupling.unwrap_or(1.0))?;
        if coupling <= 0.0 {
            return Err(invalid("coupling must be positive"));
        }
        let morse = match (pot.morse_n, pot.morse_epsilon) {
            (None, None) => None,
            (Some(n), Some(e)) if n > 0.0 && e >= 0.0 && n.is_finite() && e.is_finite() => Some((n, e)),
            _ => return Err(invalid("morse_n > 0 and morse_epsilon >= 0 must be given together")),
        };

        let p = o.p.or(file.p);
        let q = o.q.or(file.q);
        let omega = o.omega.or(file.omega);
        let n_conv = o.convergents.or(file.convergents);
        let lattice = match (p, q, omega) {
            (Some(p), Some(q), None) => {
                let (d, p) = parse_matrix(&p)?;
                let q = parse_ints(&q)?;
                if q.len() != d {
                    return Err(invalid(format!("q has {} entries, expected {d}", q.len())));
                }
                PeriodLattice::new(d, p.clone(), q.clone()).map_err(|e| invalid(e.to_string()))?;
                LatticeSpec::Periods { d, p, q }
            }
            (None, None, Some(w)) => {
                let omega = parse_floats(&w)?;
                if omega.len() != 1 {
                    return Err(invalid("rotation targets are one-dimensional"));
                }
                let convergents = n_conv.unwrap_or(6);
                if convergents == 0 {
                    return Err(invalid("convergents must be at least 1"));
                }
                LatticeSpec::Rotation { omega, convergents }
            }
            (None, None, None) => LatticeSpec::Unspecified,
            (Some(_), None, _) | (None, Some(_), _) => return Err(invalid("p and q must be given together")),
            (Some(_), Some(_), Some(_)) => return Err(invalid("give either p and q or omega, not both")),
        };

        let tol = finite("tol", o.tol.or(file.tol).unwrap_or(1e-8))?;
        if tol <= 0.0 {
            return Err(invalid("tol must be positive"));
        }
        let options = file.options.unwrap_or_default();
        if let Some(t) = options.t {
            if !(t.is_finite() && t > 0.0) {
                return Err(invalid("options.t must be positive"));
            }
        }
        for (name, v) in [("x0", options.x0), ("y0", options.y0), ("perturbation", options.perturbation)] {
            if let Some(v) = v {
                finite(name, v)?;
            }
        }
        if options.multistart == Some(0) || options.grid == Some(0) || options.grid_per_dof.is_some_and(|g| g < 2) {
            return Err(invalid("multistart and grid must be positive, grid_per_dof at least 2"));
        }
        Ok(Scenario {
            command: command.into(),
            potential_kind: kind,
            v,
            coupling,
            morse,
            lattice,
            seed: o.seed.or(file.seed).unwrap_or(0),
            tol,
            quick: o.quick || file.quick.unwrap_or(false),
            options,
            out: PathBuf::from(o.out.or(file.out).unwrap_or_else(|| "aubrykit-out".into())),
        })
    }

    pub fn dim(&self) -> usize {
        match &self.lattice {
            LatticeSpec::Periods { d, .. } => *d,
            _ => 1,
        }
    }

    /// The periodicity lattice: explicit periods, or the last convergent of
    /// the rotation target.
    pub fn period_lattice(&self) -> Result<PeriodLattice, ScenarioError> {
        match &self.lattice {
            LatticeSpec::Periods { d, p, q } => PeriodLattice::new(*d, p.clone(), q.clone()).map_err(|e| invalid(e.to_string())),
            LatticeSpec::Rotation { .. } => self.convergent_lattices()?.pop().ok_or_else(|| invalid("no convergents")),
            LatticeSpec::Unspecified => Err(invalid("this command needs --p and --q or --omega")),
        }
    }

    pub fn convergent_lattices(&self) -> Result<Vec<PeriodLattice>, ScenarioError> {
        match &self.lattice {
            LatticeSpec::Rotation { omega, convergents: n } => convergents(omega[0], *n)
                .into_iter()
                .map(|(a, b)| PeriodLattice::from_fraction(a, b).map_err(|e| invalid(e.to_string())))
                .collect(),
            _ => Err(invalid("this command needs --omega")),
        }
    }

    /// The unperturbed potential in dimension `d`.
    pub fn base_potential(&self, d: usize) -> LocalPotential {
        match self.potential_kind.as_str() {
            "custom" => custom_potential(d, self.v.clone(), self.coupling),
            _ => fk_potential(FkSpec { d, v: self.v.clone() }),
        }
    }

    /// The base potential, Morse-approximated when the scenario asks for it.
    pub fn potential(&self, lattice: &PeriodLattice) -> aubrykit::Result<LocalPotential> {
        let base = self.base_potential(lattice.dim());
        match self.morse {
            Some((n, eps)) => morse_approximation(&base, lattice, n, self.seed, eps),
            None => Ok(base),
        }
    }
}
