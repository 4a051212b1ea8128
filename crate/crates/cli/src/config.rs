//! Strict JSON config files. Every command's config struct rejects unknown
//! keys; command-line flags override whatever the file sets.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;

use crate::error::{CliError, CliResult};

/// Parses `path` as a `T`, or returns `T::default()` when no file is given.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Paths read from a config file are relative to that file's directory.
pub fn relative_to(config: Option<&Path>, path: PathBuf) -> PathBuf {
    match config.and_then(Path::parent) {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path,
    }
}

/// Fails unless the file exists.
pub fn require_input(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "input file {} does not exist",
            path.display()
        )))
    }
}

/// Fails unless the output's parent directory exists. Nothing is created.
pub fn require_output(path: &Path) -> CliResult<()> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty());
    match parent {
        Some(dir) if !dir.is_dir() => Err(CliError::Config(format!(
            "output directory {} does not exist",
            dir.display()
        ))),
        _ if path.is_dir() => Err(CliError::Config(format!(
            "output path {} is a directory",
            path.display()
        ))),
        _ => Ok(()),
    }
}

/// Writes `bytes` to `path`, or to stdout when no path is given.
pub fn emit(path: Option<&PathBuf>, bytes: &[u8]) -> CliResult<()> {
    use std::io::Write;
    match path {
        Some(p) => std::fs::write(p, bytes)
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}

/// A non-empty grid of values, each inside `range` (open interval).
pub fn check_grid(name: &str, values: &[f64], range: (f64, f64)) -> CliResult<()> {
    if values.is_empty() {
        return Err(CliError::Config(format!("`{name}` grid is empty")));
    }
    if let Some(bad) = values
        .iter()
        .find(|v| !v.is_finite() || **v <= range.0 || **v >= range.1)
    {
        return Err(CliError::Config(format!(
            "`{name}` value {bad} is outside ({}, {})",
            range.0, range.1
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Default, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Demo {
        #[allow(dead_code)]
        n: Option<usize>,
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"n": 3, "m": 1}"#).unwrap();
        let err = load::<Demo>(Some(&p)).unwrap_err();
        assert!(matches!(err, CliError::Config(m) if m.contains("unknown field `m`")));
    }

    #[test]
    fn output_parent_must_exist() {
        assert!(require_output(Path::new("/definitely/not/here/out.csv")).is_err());
        assert!(require_output(Path::new("out.csv")).is_ok());
    }

    #[test]
    fn grids_must_be_nonempty_and_in_range() {
        assert!(check_grid("rho", &[], (-1.0, 1.0)).is_err());
        assert!(check_grid("rho", &[1.0], (-1.0, 1.0)).is_err());
        assert!(check_grid("rho", &[0.0, 0.9], (-1.0, 1.0)).is_ok());
    }
}
