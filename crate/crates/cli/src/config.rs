//! Command line and the validated run configuration.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use specopt_core::potential::{self, SourceTerm};

use crate::CliError;

/// Seed used when neither `--seed` nor `SPECOPT_SEED` is given.
pub const DEFAULT_SEED: u64 = potential::DEFAULT_SEED;
pub const SEED_ENV: &str = "SPECOPT_SEED";

#[derive(Debug, Parser)]
#[command(name = "specopt", version, about = "Torsion, spectra and optimal shapes on metric graphs; optimal potentials on intervals")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Output {
    /// Directory for the artifacts (created if missing).
    #[arg(long, default_value = "specopt-out")]
    pub out: PathBuf,
    /// Write SVG reports next to the CSV files.
    #[arg(long, overrides_with = "no_svg")]
    pub svg: bool,
    #[arg(long = "no-svg")]
    pub no_svg: bool,
}

impl Output {
    pub fn svg(&self) -> bool {
        !self.no_svg
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact torsion function of a graph file.
    SolveGraph {
        #[arg(long)]
        input: PathBuf,
        /// Spacing of the samples written to solution.csv.
        #[arg(long, default_value_t = 0.01)]
        mesh: f64,
        #[command(flatten)]
        output: Output,
    },
    /// Smallest Laplacian eigenvalues of a graph file.
    Spectrum {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 1e-3)]
        mesh: f64,
        /// Number of eigenvalues.
        #[arg(long, default_value_t = 5)]
        count: usize,
        #[command(flatten)]
        output: Output,
    },
    /// Best tree through the pins of a pin file for one budget or a sweep.
    OptimizeGraph {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, conflicts_with = "sweep", required_unless_present = "sweep")]
        budget: Option<f64>,
        /// Budgets `a:b:step`.
        #[arg(long)]
        sweep: Option<String>,
        /// Random starts per template.
        #[arg(long, default_value_t = 64)]
        starts: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        output: Output,
    },
    /// Optimal potential for `-u'' + V u = f` under `∫V^p = 1`.
    OptimizePotential {
        #[arg(long, allow_negative_numbers = true)]
        p: f64,
        /// `const:<c>`, `sin`, `step`, or `<file.csv>[:<column>]`.
        #[arg(long, default_value = "const:1")]
        f: String,
        /// Interval `a:b`.
        #[arg(long, default_value = "-1:1", allow_hyphen_values = true)]
        domain: String,
        #[arg(long, default_value_t = 1e-4)]
        mesh: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        output: Output,
    },
    /// Admissible spiky potentials whose energies climb to zero, `0 < p < 1`.
    DemoNonexistence {
        #[arg(long)]
        p: f64,
        #[arg(long, default_value = "const:1")]
        f: String,
        #[arg(long, default_value = "-1:1", allow_hyphen_values = true)]
        domain: String,
        #[arg(long, default_value_t = 64)]
        n_max: usize,
        #[command(flatten)]
        output: Output,
    },
}

/// Parsed `a:b` or `a:b:step`.
pub fn parse_range(text: &str, parts: usize) -> Result<Vec<f64>, CliError> {
    let values: Vec<f64> = text
        .split(':')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Config(format!("cannot read `{text}` as {parts} numbers separated by `:`")))?;
    if values.len() != parts || values.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Config(format!("expected {parts} finite numbers separated by `:`, got `{text}`")));
    }
    Ok(values)
}

pub fn parse_domain(text: &str) -> Result<(f64, f64), CliError> {
    let v = parse_range(text, 2)?;
    if v[1] <= v[0] {
        return Err(CliError::Config(format!("domain `{text}` is empty")));
    }
    Ok((v[0], v[1]))
}

/// `--seed`, then `SPECOPT_SEED`, then [`DEFAULT_SEED`].
pub fn resolve_seed(flag: Option<u64>, env: Option<String>) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match env {
        Some(text) => text
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("{SEED_ENV}=`{text}` is not an unsigned integer"))),
        None => Ok(DEFAULT_SEED),
    }
}

/// A builtin source or one column of a CSV file. The column is chosen by
/// header name or 0-based index; the last column by default.
pub fn parse_source(text: &str) -> Result<SourceTerm, CliError> {
    if let Ok(s) = text.parse::<SourceTerm>() {
        return Ok(s);
    }
    if text.starts_with("const:") {
        return Err(CliError::Config(format!("bad constant source `{text}`")));
    }
    let (path, column) = match text.rsplit_once(':') {
        Some((p, c)) if !std::path::Path::new(text).exists() => (p, Some(c)),
        _ => (text, None),
    };
    let content = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("source `{text}` is neither a builtin nor a readable file: {e}")))?;
    let rows: Vec<Vec<&str>> = content
        .lines()
        .map(|l| l.trim())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.split(',').map(str::trim).collect())
        .collect();
    let Some(first) = rows.first() else {
        return Err(CliError::Config(format!("`{path}` has no rows")));
    };
    let has_header = first.iter().any(|c| c.parse::<f64>().is_err());
    let index = match column {
        None => first.len() - 1,
        Some(c) => match c.parse::<usize>() {
            Ok(i) => i,
            Err(_) if has_header => first
                .iter()
                .position(|h| *h == c)
                .ok_or_else(|| CliError::Config(format!("`{path}` has no column `{c}`")))?,
            Err(_) => return Err(CliError::Config(format!("`{path}` has no header to look up `{c}`"))),
        },
    };
    let body = if has_header { &rows[1..] } else { &rows[..] };
    let values = body
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.get(index)
                .and_then(|c| c.parse::<f64>().ok())
                .ok_or_else(|| CliError::Config(format!("`{path}` row {}: no number in column {index}", i + 1)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SourceTerm::Samples(values))
}

/// One point per line, coordinates separated by spaces or commas; `#`
/// starts a comment.
pub fn parse_pins(text: &str) -> Result<Vec<Vec<f64>>, CliError> {
    let mut pins = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let point = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| CliError::Config(format!("pin file line {}: `{line}` is not a point", i + 1)))?;
        pins.push(point);
    }
    Ok(pins)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(parse_range("1.8:1.93:0.005", 3).unwrap(), vec![1.8, 1.93, 0.005]);
        assert_eq!(parse_domain("-1:1").unwrap(), (-1.0, 1.0));
        assert!(parse_domain("1:1").is_err());
        assert!(parse_range("1:x", 2).is_err());
    }

    #[test]
    fn seeds() {
        assert_eq!(resolve_seed(Some(3), Some("9".into())).unwrap(), 3);
        assert_eq!(resolve_seed(None, Some("9".into())).unwrap(), 9);
        assert_eq!(resolve_seed(None, None).unwrap(), DEFAULT_SEED);
        assert!(resolve_seed(None, Some("nine".into())).is_err());
    }

    #[test]
    fn pins() {
        let p = parse_pins("# triangle\n0 0\n1, 0\n0.5 0.8660254037844386\n").unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p[1], vec![1.0, 0.0]);
        assert!(parse_pins("0 zero").is_err());
    }

    #[test]
    fn sources() {
        assert_eq!(parse_source("sin").unwrap(), SourceTerm::Sin);
        assert!(parse_source("const:q").is_err());
        assert!(parse_source("no-such-file.csv").is_err());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        std::fs::write(&path, "x,f\n0,1\n0.5,2\n1,3\n").unwrap();
        let p = path.to_str().unwrap();
        assert_eq!(parse_source(p).unwrap(), SourceTerm::Samples(vec![1.0, 2.0, 3.0]));
        assert_eq!(parse_source(&format!("{p}:x")).unwrap(), SourceTerm::Samples(vec![0.0, 0.5, 1.0]));
        assert_eq!(parse_source(&format!("{p}:0")).unwrap(), SourceTerm::Samples(vec![0.0, 0.5, 1.0]));
        assert!(parse_source(&format!("{p}:y")).is_err());
    }
}
