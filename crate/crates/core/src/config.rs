//! Line-oriented `key = value` configuration files.
//!
//! Blank lines and everything after `#` are ignored. Recognised keys:
//!
//! | key | meaning | default |
//! |-----|---------|---------|
//! | `a`, `b` | interval ends | required |
//! | `alpha1`, `alpha2` | `w(a)`, `w(b)` | 0 |
//! | `beta1`, `beta2` | `w''(a)`, `w''(b)` | 0 |
//! | `K` | contact stiffness | required |
//! | `g` | contact surface, an [`Expr`] in `x` | required |
//! | `N` | interior nodes for `solve` | none |
//! | `Ns` | comma-separated refinement ladder for `study` | none |
//! | `tol` | step tolerance | `1e-10 (1 + ‖B̄‖₂)` |
//! | `max_iter` | iteration cap | 100000 |
//! | `seed` | RNG seed | 0 |
//! | `out` | output directory | `out` |

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use serde::Serialize;

use crate::discretize::MIN_INTERIOR_NODES;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::model::{BvpSpec, PiecewiseLinearContact};
use crate::solvers::DEFAULT_MAX_ITER;

const KEYS: &[&str] = &[
    "a", "b", "alpha1", "alpha2", "beta1", "beta2", "K", "g", "N", "Ns", "tol", "max_iter", "seed",
    "out",
];

/// Samples used to check that `g` is finite on `[a, b]`.
const SURFACE_SAMPLES: usize = 1000;

#[derive(Debug, Clone, Serialize)]
pub struct StudyConfig {
    pub spec: BvpSpec,
    pub stiffness: f64,
    /// Source text of `g`, kept for reports.
    pub surface_text: String,
    #[serde(skip)]
    pub surface: Expr,
    pub n: Option<usize>,
    pub ns: Vec<usize>,
    pub tol: Option<f64>,
    pub max_iter: usize,
    pub seed: u64,
    pub out: PathBuf,
}

impl StudyConfig {
    /// The contact law with `g` and its symbolic derivative.
    pub fn contact(&self) -> PiecewiseLinearContact {
        let g = Arc::new(self.surface.clone());
        let dg = Arc::new(self.surface.derivative());
        PiecewiseLinearContact::new(self.stiffness, move |x| g.eval(x), move |x| dg.eval(x))
            .expect("stiffness validated at parse time")
    }

    /// `N`, or an error naming the key when it was not given.
    pub fn single_n(&self) -> Result<usize> {
        self.n
            .ok_or_else(|| invalid("N", "required by this command"))
    }
}

fn invalid(key: &str, message: impl Into<String>) -> Error {
    Error::ConfigInvalid {
        key: key.to_string(),
        message: message.into(),
    }
}

struct Entry<'a> {
    line: usize,
    value: &'a str,
}

fn number(entries: &BTreeMap<&str, Entry<'_>>, key: &str, default: Option<f64>) -> Result<f64> {
    match entries.get(key) {
        Some(e) => e.value.parse::<f64>().map_err(|_| Error::ConfigParse {
            line: e.line,
            message: format!("`{key}` expects a number, got `{}`", e.value),
        }),
        None => default.ok_or_else(|| invalid(key, "missing")),
    }
}

fn count(text: &str, key: &str, line: usize) -> Result<usize> {
    text.trim()
        .parse::<usize>()
        .map_err(|_| Error::ConfigParse {
            line,
            message: format!(
                "`{key}` expects a non-negative integer, got `{}`",
                text.trim()
            ),
        })
}

pub fn parse_config(text: &str) -> Result<StudyConfig> {
    let mut entries: BTreeMap<&str, Entry<'_>> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(Error::ConfigParse {
                line,
                message: format!("expected `key = value`, got `{content}`"),
            });
        };
        let key = key.trim();
        let value = value.trim();
        let Some(&known) = KEYS.iter().find(|k| **k == key) else {
            return Err(Error::ConfigParse {
                line,
                message: format!("unknown key `{key}`"),
            });
        };
        if value.is_empty() {
            return Err(Error::ConfigParse {
                line,
                message: format!("empty value for `{key}`"),
            });
        }
        if entries.insert(known, Entry { line, value }).is_some() {
            return Err(Error::ConfigParse {
                line,
                message: format!("duplicate key `{key}`"),
            });
        }
    }

    let a = number(&entries, "a", None)?;
    let b = number(&entries, "b", None)?;
    let alpha1 = number(&entries, "alpha1", Some(0.0))?;
    let alpha2 = number(&entries, "alpha2", Some(0.0))?;
    let beta1 = number(&entries, "beta1", Some(0.0))?;
    let beta2 = number(&entries, "beta2", Some(0.0))?;
    let spec = BvpSpec::new(a, b, alpha1, alpha2, beta1, beta2).map_err(|e| {
        invalid(
            if b.is_finite() && a.is_finite() {
                "b"
            } else {
                "a"
            },
            e.to_string(),
        )
    })?;

    let stiffness = number(&entries, "K", None)?;
    if !stiffness.is_finite() || stiffness < 0.0 {
        return Err(invalid(
            "K",
            format!("must be finite and >= 0, got {stiffness}"),
        ));
    }

    let surface_text = entries
        .get("g")
        .map(|e| e.value.to_string())
        .ok_or_else(|| invalid("g", "missing"))?;
    let surface = Expr::parse(&surface_text).map_err(|e| invalid("g", e.to_string()))?;
    for i in 0..=SURFACE_SAMPLES {
        let x = spec.a + (spec.b - spec.a) * i as f64 / SURFACE_SAMPLES as f64;
        let v = surface.eval(x);
        if !v.is_finite() {
            return Err(invalid("g", format!("evaluates to {v} at x = {x}")));
        }
    }

    let n = match entries.get("N") {
        Some(e) => {
            let n = count(e.value, "N", e.line)?;
            if n < MIN_INTERIOR_NODES {
                return Err(invalid(
                    "N",
                    format!("needs at least {MIN_INTERIOR_NODES} interior nodes, got {n}"),
                ));
            }
            Some(n)
        }
        None => None,
    };

    let ns = match entries.get("Ns") {
        Some(e) => {
            let ns = e
                .value
                .split(',')
                .map(|t| count(t, "Ns", e.line))
                .collect::<Result<Vec<_>>>()?;
            if let Some(&small) = ns.iter().find(|&&n| n < MIN_INTERIOR_NODES) {
                return Err(invalid(
                    "Ns",
                    format!("entry {small} is below {MIN_INTERIOR_NODES}"),
                ));
            }
            if ns.windows(2).any(|p| p[1] <= p[0]) {
                return Err(invalid("Ns", "entries must be strictly increasing"));
            }
            ns
        }
        None => Vec::new(),
    };

    let tol = match entries.get("tol") {
        Some(_) => {
            let t = number(&entries, "tol", None)?;
            if !(t > 0.0 && t.is_finite()) {
                return Err(invalid("tol", format!("must be positive, got {t}")));
            }
            Some(t)
        }
        None => None,
    };

    let max_iter = match entries.get("max_iter") {
        Some(e) => count(e.value, "max_iter", e.line)?,
        None => DEFAULT_MAX_ITER,
    };
    if max_iter == 0 {
        return Err(invalid("max_iter", "must be at least 1"));
    }
    let seed = match entries.get("seed") {
        Some(e) => e.value.parse::<u64>().map_err(|_| Error::ConfigParse {
            line: e.line,
            message: format!("`seed` expects an unsigned integer, got `{}`", e.value),
        })?,
        None => 0,
    };
    let out = entries
        .get("out")
        .map_or_else(|| PathBuf::from("out"), |e| PathBuf::from(e.value));

    Ok(StudyConfig {
        spec,
        stiffness,
        surface_text,
        surface,
        n,
        ns,
        tol,
        max_iter,
        seed,
        out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "a = 0\nb = 1\nK = 10\ng = x/2\n";

    fn with(extra: &str) -> Result<StudyConfig> {
        parse_config(&format!("{BASE}{extra}"))
    }

    fn invalid_key(r: Result<StudyConfig>) -> String {
        match r {
            Err(Error::ConfigInvalid { key, .. }) => key,
            other => panic!("expected invariant error, got {other:?}"),
        }
    }

    fn parse_line(r: Result<StudyConfig>) -> usize {
        match r {
            Err(Error::ConfigParse { line, .. }) => line,
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn shipped_example() {
        let text = include_str!("../examples/vocalfold.cfg");
        let cfg = parse_config(text).unwrap();
        assert_eq!(
            cfg.spec,
            BvpSpec::new(0.0, 1.0, 0.0, 0.0, -20.0, -20.0).unwrap()
        );
        assert_eq!(cfg.stiffness, 1e4);
        assert_eq!(cfg.surface.eval(0.5), 0.25);
        assert_eq!(cfg.n, Some(50));
        assert_eq!(cfg.ns, vec![11, 23, 47]);
        assert_eq!(cfg.seed, 0);
        let contact = cfg.contact();
        assert_eq!(contact.surface_slope(0.3), 0.5);
    }

    #[test]
    fn defaults() {
        let cfg = with("").unwrap();
        assert_eq!((cfg.spec.alpha1, cfg.spec.beta2), (0.0, 0.0));
        assert_eq!(cfg.tol, None);
        assert_eq!(cfg.max_iter, DEFAULT_MAX_ITER);
        assert_eq!(cfg.out, PathBuf::from("out"));
        assert!(cfg.single_n().is_err());
    }

    #[test]
    fn malformed_surface_names_key() {
        let r = parse_config("a = 0\nb = 1\nK = 1\ng = x/\n");
        assert_eq!(invalid_key(r), "g");
        assert_eq!(
            invalid_key(parse_config("a=0\nb=1\nK=1\ng=1/(x-0.5)\n")),
            "g"
        );
    }

    #[test]
    fn ladder_invariants() {
        assert_eq!(invalid_key(with("Ns = 10,20,15\n")), "Ns");
        assert_eq!(invalid_key(with("Ns = 3, 7\n")), "Ns");
        assert_eq!(invalid_key(with("N = 4\n")), "N");
        assert_eq!(with("Ns = 5, 11 ,23\n").unwrap().ns, vec![5, 11, 23]);
    }

    #[test]
    fn line_numbers() {
        assert_eq!(parse_line(with("# fine\nspeed = 3\n")), 6);
        assert_eq!(parse_line(with("K = 2\n")), 5);
        assert_eq!(parse_line(with("just words\n")), 5);
        assert_eq!(parse_line(with("N = ten\n")), 5);
        assert_eq!(parse_line(with("tol = \n")), 5);
    }

    #[test]
    fn invariant_violations() {
        assert_eq!(
            invalid_key(parse_config("a = 1\nb = 0\nK = 1\ng = 0\n")),
            "b"
        );
        assert_eq!(invalid_key(with("tol = -1\n")), "tol");
        assert_eq!(
            invalid_key(parse_config("a = 0\nb = 1\nK = -3\ng = 0\n")),
            "K"
        );
        assert_eq!(invalid_key(parse_config("a = 0\nb = 1\ng = 0\n")), "K");
        assert_eq!(invalid_key(with("max_iter = 0\n")), "max_iter");
    }
}
