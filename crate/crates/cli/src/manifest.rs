use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub gamma: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_tol() -> f64 {
    1e-8
}

fn default_max_iter() -> usize {
    10_000
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Outputs {
    pub trace: Option<PathBuf>,
    pub summary: Option<PathBuf>,
    pub certificate: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum ReferencePolicy {
    /// Solve for the reference, caching it beside the problem bundle.
    Compute,
    Load { path: PathBuf },
    #[default]
    None,
}

/// One solve-and-certify run. Relative paths resolve against the manifest's
/// directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub problem: PathBuf,
    pub config: RunConfig,
    #[serde(default)]
    pub outputs: Outputs,
    #[serde(default)]
    pub reference: ReferencePolicy,
}

impl RunManifest {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.config.gamma > 0.0 && self.config.gamma.is_finite()) {
            return Err(format!("gamma must be positive, got {}", self.config.gamma));
        }
        let mut paths: Vec<&Path> = vec![self.problem.as_path()];
        paths.extend(
            [&self.outputs.trace, &self.outputs.summary, &self.outputs.certificate]
                .into_iter()
                .flatten()
                .map(PathBuf::as_path),
        );
        if let ReferencePolicy::Load { path } = &self.reference {
            paths.push(path);
        }
        for (i, a) in paths.iter().enumerate() {
            if paths[..i].contains(a) {
                return Err(format!("path {} is used twice in the manifest", a.display()));
            }
        }
        Ok(())
    }

    pub fn resolve(mut self, base: &Path) -> Self {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.problem);
        for p in [
            &mut self.outputs.trace,
            &mut self.outputs.summary,
            &mut self.outputs.certificate,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        if let ReferencePolicy::Load { path } = &mut self.reference {
            fix(path);
        }
        self
    }
}

/// Reference cache location for a problem bundle.
pub fn reference_cache(problem: &Path) -> PathBuf {
    problem.with_file_name("reference.json")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest() -> RunManifest {
        RunManifest {
            problem: "p/problem.json".into(),
            config: RunConfig {
                gamma: 1.0,
                tol: 1e-8,
                max_iter: 10,
            },
            outputs: Outputs {
                trace: Some("trace.csv".into()),
                summary: Some("summary.json".into()),
                certificate: None,
            },
            reference: ReferencePolicy::None,
        }
    }

    #[test]
    fn duplicate_paths_rejected() {
        assert!(manifest().validate().is_ok());
        let mut m = manifest();
        m.outputs.summary = Some("trace.csv".into());
        assert!(m.validate().is_err());
        let mut m = manifest();
        m.config.gamma = 0.0;
        assert!(m.validate().is_err());
    }

    #[test]
    fn defaults_and_resolution() {
        let m: RunManifest =
            serde_json::from_str(r#"{"problem": "a/problem.json", "config": {"gamma": 2}}"#).unwrap();
        assert_eq!(m.config.tol, 1e-8);
        assert_eq!(m.config.max_iter, 10_000);
        assert_eq!(m.reference, ReferencePolicy::None);
        let m = m.resolve(Path::new("/runs"));
        assert_eq!(m.problem, PathBuf::from("/runs/a/problem.json"));
        assert_eq!(reference_cache(&m.problem), PathBuf::from("/runs/a/reference.json"));
    }

    #[test]
    fn reference_policy_json() {
        let r: ReferencePolicy = serde_json::from_str(r#"{"policy": "load", "path": "r.json"}"#).unwrap();
        assert_eq!(r, ReferencePolicy::Load { path: "r.json".into() });
    }
}
