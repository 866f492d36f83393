use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Rate/queue model, queue allowed to go negative.
    A,
    /// Rate/queue model with the queue held at zero when empty.
    ASwitched,
    /// Small-buffer model with queue feedback.
    B,
    /// Small-buffer model driven towards a virtual capacity.
    BNoqueue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChartKind {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EquationKind {
    /// `z^2 e^z + a z + beta`
    AFull,
    /// `z e^z + a`
    ANoqueue,
    /// `z + kappa_tau e^{-z}`
    ScalarDelay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// `lo:hi:n`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl FromStr for Range {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, n] = parts[..] else {
            return Err(format!("expected lo:hi:n, got {s:?}"));
        };
        let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?} in {s:?}: {e}"));
        let range = Range {
            lo: num(lo)?,
            hi: num(hi)?,
            n: n.trim().parse().map_err(|e| format!("count {n:?} in {s:?}: {e}"))?,
        };
        if !(range.lo.is_finite() && range.hi.is_finite() && range.lo < range.hi) {
            return Err(format!("range {s:?} needs finite lo < hi"));
        }
        if range.n < 2 {
            return Err(format!("range {s:?} needs at least 2 samples"));
        }
        Ok(range)
    }
}

impl TryFrom<String> for Range {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Range> for String {
    fn from(r: Range) -> String {
        r.to_string()
    }
}

impl fmt::Display for Range {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.lo, self.hi, self.n)
    }
}

/// `a=<v>`; the text of the value is kept for output file names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Phase {
    pub a: f64,
    pub label: String,
}

impl FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let value = s
            .strip_prefix("a=")
            .ok_or_else(|| format!("expected a=<value>, got {s:?}"))?
            .trim();
        let a: f64 = value.parse().map_err(|e| format!("{value:?}: {e}"))?;
        if !(a.is_finite() && a > 0.0) {
            return Err(format!("phase gain {value:?} must be positive"));
        }
        Ok(Phase {
            a,
            label: value.to_string(),
        })
    }
}

impl TryFrom<String> for Phase {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Phase> for String {
    fn from(p: Phase) -> String {
        format!("a={}", p.label)
    }
}

/// Fills every unset field of `$dst` from `$src`.
macro_rules! merge_fields {
    ($dst:expr, $src:expr; $($field:ident),* $(,)?) => {
        $( if $dst.$field.is_none() { $dst.$field = $src.$field; } )*
    };
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    /// Queue gain of the rate/queue model.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Queue gain of the small-buffer model.
    #[arg(long)]
    pub b: Option<f64>,
    /// Virtual-capacity fraction (small-buffer model without queue feedback).
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Traffic variability (small-buffer model with queue feedback).
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub capacity: Option<f64>,
    #[arg(long)]
    pub rtt: Option<f64>,
    /// Number of flows (rate/queue model).
    #[arg(long)]
    pub flows: Option<u32>,
}

impl ModelArgs {
    pub fn merge(&mut self, file: ModelArgs) {
        merge_fields!(self, file; model, beta, b, gamma, sigma, capacity, rtt, flows);
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct SimulateArgs {
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Step; defaults to RTT/200.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Initial rate offset relative to equilibrium.
    #[arg(long)]
    pub perturbation: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct ChartArgs {
    #[arg(long, value_enum)]
    pub model: Option<ChartKind>,
    #[arg(long)]
    pub a_range: Option<Range>,
    /// Range of beta (model a) or b (model b).
    #[arg(long)]
    pub second_range: Option<Range>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct BifurcateArgs {
    /// Gain range `lo:hi:n`.
    #[arg(long)]
    pub range: Option<Range>,
    /// Defaults to 400 RTT.
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Defaults to RTT/200.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Fraction of each run discarded before measuring.
    #[arg(long)]
    pub transient: Option<f64>,
    #[arg(long)]
    pub perturbation: Option<f64>,
    /// Relative peak-to-peak amplitude separating converged from cycling.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Also write the phase portrait at this gain; repeatable.
    #[arg(long = "phase", value_name = "a=<v>")]
    #[serde(rename = "phase")]
    pub phases: Vec<Phase>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct RootsArgs {
    #[arg(long, value_enum)]
    pub eq: Option<EquationKind>,
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub kappa_tau: Option<f64>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub re_min: Option<f64>,
    #[arg(long)]
    pub re_max: Option<f64>,
    #[arg(long)]
    pub im_max: Option<f64>,
    /// Also write the roots to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl SimulateArgs {
    pub fn merge(&mut self, file: SimulateArgs) {
        merge_fields!(self, file; a, t_end, dt, perturbation, out, format);
    }
}

impl ChartArgs {
    pub fn merge(&mut self, file: ChartArgs) {
        merge_fields!(self, file; model, a_range, second_range, out);
    }
}

impl BifurcateArgs {
    pub fn merge(&mut self, file: BifurcateArgs) {
        merge_fields!(self, file; range, t_end, dt, transient, perturbation, threshold, out);
        if self.phases.is_empty() {
            self.phases = file.phases;
        }
    }
}

impl RootsArgs {
    pub fn merge(&mut self, file: RootsArgs) {
        merge_fields!(self, file; eq, a, beta, kappa_tau, count, re_min, re_max, im_max, out);
    }
}

/// Config file keys understood by `T`: its serialized default lists every
/// field.
pub fn keys_of<T: Serialize + Default>() -> Vec<String> {
    match serde_json::to_value(T::default()) {
        Ok(Value::Object(map)) => map.keys().cloned().collect(),
        _ => Vec::new(),
    }
}

/// Reads a flat JSON object of flag values, rejecting keys outside `known`.
pub fn read_config(path: &Path, known: &[String]) -> Result<Map<String, Value>, Failure> {
    let bad = |e: String| Failure::Usage(format!("config {}: {e}", path.display()));
    let text = std::fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    let Value::Object(map) = value else {
        return Err(bad("expected a JSON object".into()));
    };
    if let Some(key) = map.keys().find(|k| !known.contains(k)) {
        return Err(bad(format!("unknown key {key:?}")));
    }
    Ok(map)
}

/// The part of a config map that `T` understands.
pub fn config_part<T>(map: &Map<String, Value>, path: &Path) -> Result<T, Failure>
where
    T: Serialize + DeserializeOwned + Default,
{
    let keys = keys_of::<T>();
    let own: Map<String, Value> = map
        .iter()
        .filter(|(k, _)| keys.contains(k))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    serde_json::from_value(Value::Object(own)).map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))
}
