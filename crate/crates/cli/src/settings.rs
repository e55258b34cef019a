//! Run settings gathered from flags and an optional JSON config file.

use clap::Args;
use jsqlab_core::{JsqError, Result};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::path::{Path, PathBuf};

macro_rules! settings {
    ($( $(#[$doc:meta])* $field:ident : $ty:ty ),* $(,)?) => {
        /// Every tunable of every subcommand. Unset fields fall back to the
        /// config file, then to per-command defaults.
        #[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
        #[serde(rename_all = "kebab-case", deny_unknown_fields)]
        pub struct Settings {
            $(
                $(#[$doc])*
                #[arg(long, global = true)]
                #[serde(default, skip_serializing_if = "Option::is_none")]
                pub $field: Option<$ty>,
            )*
        }

        impl Settings {
            /// Fills fields unset here from `other`.
            pub fn or(self, other: Settings) -> Settings {
                Settings { $( $field: self.$field.or(other.$field), )* }
            }
        }
    };
}

settings! {
    /// Seed for every random stream.
    seed: u64,
    /// Where to write the JSON report; a CSV companion goes next to it.
    out: PathBuf,
    /// Number of servers.
    n: u64,
    /// Halfin-Whitt parameter, arrival rate n(1 - beta/sqrt(n)).
    beta: f64,
    kappa: f64,
    kappa1: f64,
    kappa2: f64,
    /// Lower edge of the window for the third-level bound.
    kappa_tilde: f64,
    alpha: f64,
    /// Grid as "x1lo:x1hi:N,x2lo:x2hi:M".
    grid: String,
    horizon: f64,
    burn_in: f64,
    /// Number of tracked levels.
    trunc_b: usize,
    /// Cap on the total customer count for the exact solver.
    cap_c: u64,
    /// Comma-separated field names.
    fields: String,
    tol: f64,
    /// Number of random states for the expansion check.
    states: usize,
    /// Euler step of the diffusion.
    step: f64,
    thinning: usize,
    batches: usize,
    /// Comma-separated server counts.
    ns: String,
    samples: usize,
    interval: f64,
    /// Replicas per start point for the decay probe; enables the probe.
    replicas: usize,
    /// Comma-separated checkpoint times for the decay probe.
    checkpoints: String,
    /// CSV file receiving diffusion samples.
    dump_samples: PathBuf,
    /// Comma-separated alpha values; enables scan mode.
    scan_alpha: String,
    scan_kappa1: String,
    scan_kappa2: String,
    /// Grid points per axis in scan mode.
    scan_points: usize,
}

/// Reads a JSON object whose keys are flag names, optionally namespaced with
/// dots ("model.n"). Underscores are accepted in place of hyphens.
pub fn load_file(path: &Path) -> Result<Settings> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        JsqError::InvalidParameter(format!("cannot read config {}: {e}", path.display()))
    })?;
    let value: Value = serde_json::from_str(&text).map_err(|e| {
        JsqError::InvalidParameter(format!("config {} is not valid JSON: {e}", path.display()))
    })?;
    let Value::Object(raw) = value else {
        return Err(JsqError::InvalidParameter(
            "config must be a JSON object".into(),
        ));
    };
    let mut flat = Map::new();
    for (key, v) in raw {
        let leaf = key.rsplit('.').next().unwrap_or(&key).replace('_', "-");
        if flat.insert(leaf.clone(), v).is_some() {
            return Err(JsqError::InvalidParameter(format!(
                "config sets '{leaf}' twice"
            )));
        }
    }
    serde_json::from_value(Value::Object(flat))
        .map_err(|e| JsqError::InvalidParameter(format!("config: {e}")))
}

pub fn parse_list<T: std::str::FromStr>(what: &str, s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|p| p.trim())
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse()
                .map_err(|_| JsqError::InvalidParameter(format!("bad {what} entry '{p}'")))
        })
        .collect()
}

/// JSQLAB_THREADS, when set, caps the worker count. All work here runs on
/// one thread, so the cap only needs to be positive.
pub fn thread_cap() -> Result<Option<usize>> {
    match std::env::var("JSQLAB_THREADS") {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(k) if k >= 1 => Ok(Some(k)),
            _ => Err(JsqError::InvalidParameter(format!(
                "JSQLAB_THREADS must be a positive integer, got '{s}'"
            ))),
        },
    }
}
