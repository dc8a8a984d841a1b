//! `--config` handling: `key=value` overrides, either inline or read from a
//! file with one pair per line, applied to the core configuration structs.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use slicetopo::classifier::SoftmaxConfig;
use slicetopo::{
    ColumnOrigin, DataConfig, EssentialPolicy, RecognitionConfig, ScalePolicy, SliceParams, TrainConfig, Weighting,
};

use crate::CliError;

/// Expands `--config` arguments into ordered key/value pairs. An argument
/// containing `=` is a pair; anything else names a file of pairs, where blank
/// lines and `#` comments are skipped.
pub fn collect_pairs(entries: &[String]) -> Result<Vec<(String, String)>, CliError> {
    let mut pairs = Vec::new();
    for entry in entries {
        if entry.contains('=') {
            pairs.push(split_pair(entry)?);
            continue;
        }
        let path = Path::new(entry);
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("--config {entry}: not a key=value pair or readable file ({e})")))?;
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if !line.is_empty() {
                pairs.push(split_pair(line)?);
            }
        }
    }
    Ok(pairs)
}

fn split_pair(s: &str) -> Result<(String, String), CliError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("expected key=value, got '{s}'")))?;
    let (k, v) = (k.trim(), v.trim());
    if k.is_empty() {
        return Err(CliError::Usage(format!("empty key in '{s}'")));
    }
    Ok((k.replace('-', "_"), v.to_string()))
}

pub fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("invalid value '{value}' for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(CliError::Usage(format!("invalid boolean '{value}' for {key}"))),
    }
}

/// `R`, `RxC` or `R,C`.
pub fn parse_grid(key: &str, value: &str) -> Result<(usize, usize), CliError> {
    let parts: Vec<&str> = value.split(['x', 'X', ',']).collect();
    let grid = match parts.as_slice() {
        [n] => {
            let n = parse(key, n)?;
            (n, n)
        }
        [r, c] => (parse(key, r)?, parse(key, c)?),
        _ => return Err(CliError::Usage(format!("invalid grid '{value}' for {key}"))),
    };
    if grid.0 == 0 || grid.1 == 0 {
        return Err(CliError::Usage(format!("{key} needs positive dimensions")));
    }
    Ok(grid)
}

/// A settings group that accepts some keys. `apply` returns `Ok(false)` for
/// keys it does not own.
pub trait Settings {
    fn apply(&mut self, key: &str, value: &str) -> Result<bool, CliError>;
    fn entries(&self) -> Vec<(&'static str, String)>;
}

/// Applies every pair to the first group that owns its key.
pub fn apply_pairs(pairs: &[(String, String)], groups: &mut [&mut dyn Settings]) -> Result<(), CliError> {
    'pairs: for (k, v) in pairs {
        for g in groups.iter_mut() {
            if g.apply(k, v)? {
                continue 'pairs;
            }
        }
        return Err(CliError::Usage(format!("unknown config key '{k}'")));
    }
    Ok(())
}

/// Writes the resolved configuration to stderr, one `key = value` per line.
pub fn log_resolved(command: &str, groups: &[&dyn Settings]) {
    for g in groups {
        for (k, v) in g.entries() {
            eprintln!("[{command}] {k} = {v}");
        }
    }
}

impl Settings for DataConfig {
    fn apply(&mut self, key: &str, value: &str) -> Result<bool, CliError> {
        match key {
            "n_dirs" => self.n_dirs = parse(key, value)?,
            "train_distance" => self.train_distance = parse(key, value)?,
            "probe_fraction" => self.probe_fraction = parse(key, value)?,
            "probe_alpha" => self.probe_alpha = parse::<f64>(key, value)?.to_radians(),
            "occluder_toward_camera" => self.occluder.toward_camera = parse(key, value)?,
            "scenes_per_sequence" => self.scenes_per_sequence = parse(key, value)?,
            "sequences" => {
                self.sequence_sizes = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| parse(key, s.trim()))
                    .collect::<Result<_, _>>()?
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let sizes: Vec<String> = self.sequence_sizes.iter().map(|s| s.to_string()).collect();
        vec![
            ("seed", self.seed.to_string()),
            ("n_dirs", self.n_dirs.to_string()),
            ("train_distance", self.train_distance.to_string()),
            ("probe_fraction", self.probe_fraction.to_string()),
            ("probe_alpha", self.probe_alpha.to_degrees().to_string()),
            ("occluder_toward_camera", self.occluder.toward_camera.to_string()),
            ("sequences", sizes.join(",")),
            ("scenes_per_sequence", self.scenes_per_sequence.to_string()),
        ]
    }
}

fn rebuild_slice(current: &SliceParams, sigma1: f64, sigma2: f64) -> Result<SliceParams, CliError> {
    SliceParams::new(sigma1, sigma2)
        .map(|p| p.with_column_origin(current.column_origin))
        .map_err(|e| CliError::Usage(e.to_string()))
}

impl Settings for TrainConfig {
    fn apply(&mut self, key: &str, value: &str) -> Result<bool, CliError> {
        match key {
            "sigma1" => self.slice = rebuild_slice(&self.slice, parse(key, value)?, self.slice.sigma2)?,
            "sigma2" => self.slice = rebuild_slice(&self.slice, self.slice.sigma1, parse(key, value)?)?,
            "column_origin" => {
                self.slice.column_origin = match value {
                    "per_slice" => ColumnOrigin::PerSlice,
                    "frame" => ColumnOrigin::Frame,
                    _ => return Err(CliError::Usage(format!("column_origin must be per_slice or frame, got '{value}'"))),
                }
            }
            "alpha" => self.alpha = parse::<f64>(key, value)?.to_radians(),
            "essential" => {
                self.essential = match value {
                    "drop" => EssentialPolicy::Drop,
                    "cap" => EssentialPolicy::CapAtMax,
                    _ => return Err(CliError::Usage(format!("essential must be drop or cap, got '{value}'"))),
                }
            }
            "pi_grid" => self.pi_grid = parse_grid(key, value)?,
            "pi_bandwidth" => {
                self.pi_bandwidth = match value {
                    "auto" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "weighting" => {
                self.weighting = match value {
                    "linear" => Weighting::LinearPersistence,
                    "constant" => Weighting::Constant,
                    _ => return Err(CliError::Usage(format!("weighting must be linear or constant, got '{value}'"))),
                }
            }
            "l2" => self.softmax.l2 = parse(key, value)?,
            "iterations" => self.softmax.iterations = parse(key, value)?,
            "mirror" => self.mirror = parse_bool(key, value)?,
            "train_scale" => self.train_scale = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let SoftmaxConfig { l2, iterations } = self.softmax;
        vec![
            ("sigma1", self.slice.sigma1.to_string()),
            ("sigma2", self.slice.sigma2.to_string()),
            (
                "column_origin",
                match self.slice.column_origin {
                    ColumnOrigin::PerSlice => "per_slice",
                    ColumnOrigin::Frame => "frame",
                }
                .into(),
            ),
            ("alpha", self.alpha.to_degrees().to_string()),
            (
                "essential",
                match self.essential {
                    EssentialPolicy::Drop => "drop",
                    EssentialPolicy::CapAtMax => "cap",
                }
                .into(),
            ),
            ("pi_grid", format!("{}x{}", self.pi_grid.0, self.pi_grid.1)),
            (
                "pi_bandwidth",
                self.pi_bandwidth.map_or_else(|| "auto".into(), |b| b.to_string()),
            ),
            (
                "weighting",
                match self.weighting {
                    Weighting::LinearPersistence => "linear",
                    Weighting::Constant => "constant",
                }
                .into(),
            ),
            ("l2", l2.to_string()),
            ("iterations", iterations.to_string()),
            ("mirror", self.mirror.to_string()),
            ("train_scale", self.train_scale.to_string()),
        ]
    }
}

impl Settings for RecognitionConfig {
    fn apply(&mut self, key: &str, value: &str) -> Result<bool, CliError> {
        match key {
            "tau_ratio" => self.tau_ratio = parse(key, value)?,
            "tau_d" => self.tau_d = parse(key, value)?,
            "scale_tolerance" => self.scale_tolerance = parse(key, value)?,
            "scale_policy" => {
                self.scale_policy = match value {
                    "metric" => ScalePolicy::Metric,
                    "rescale" => ScalePolicy::Rescale,
                    _ => return Err(CliError::Usage(format!("scale_policy must be metric or rescale, got '{value}'"))),
                }
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("tau_ratio", self.tau_ratio.to_string()),
            ("tau_d", self.tau_d.to_string()),
            ("scale_tolerance", self.scale_tolerance.to_string()),
            (
                "scale_policy",
                match self.scale_policy {
                    ScalePolicy::Metric => "metric",
                    ScalePolicy::Rescale => "rescale",
                }
                .into(),
            ),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_come_inline_or_from_files() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("cfg.txt");
        fs::write(&file, "# comment\nsigma1 = 0.05\n\nl2=0.01\n").unwrap();
        let pairs = collect_pairs(&["pi-grid=8x8".into(), file.to_string_lossy().into_owned()]).unwrap();
        assert_eq!(
            pairs,
            vec![
                ("pi_grid".to_string(), "8x8".to_string()),
                ("sigma1".to_string(), "0.05".to_string()),
                ("l2".to_string(), "0.01".to_string()),
            ]
        );
        let mut train = TrainConfig::default();
        apply_pairs(&pairs, &mut [&mut train]).unwrap();
        assert_eq!(train.pi_grid, (8, 8));
        assert_eq!(train.slice.sigma1, 0.05);
        assert_eq!(train.softmax.l2, 0.01);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_usage_errors() {
        let mut train = TrainConfig::default();
        let bad = [("nope".to_string(), "1".to_string())];
        assert!(matches!(apply_pairs(&bad, &mut [&mut train]), Err(CliError::Usage(_))));
        let bad = [("sigma1".to_string(), "-1".to_string())];
        assert!(matches!(apply_pairs(&bad, &mut [&mut train]), Err(CliError::Usage(_))));
        assert!(parse_grid("g", "0x3").is_err());
        assert_eq!(parse_grid("g", "4,6").unwrap(), (4, 6));
    }

    #[test]
    fn groups_split_keys_between_them() {
        let mut train = TrainConfig::default();
        let mut rec = RecognitionConfig::default();
        let pairs = [
            ("tau_ratio".to_string(), "1.3".to_string()),
            ("iterations".to_string(), "20".to_string()),
        ];
        apply_pairs(&pairs, &mut [&mut train, &mut rec]).unwrap();
        assert_eq!(rec.tau_ratio, 1.3);
        assert_eq!(train.softmax.iterations, 20);
    }
}
