//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};
use sparsepush::baselines::BaselineKind;
use sparsepush::mixing::MaskConvention;
use sparsepush::optimize::StepSchedule;

use crate::data::RowNorm;
use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Consensus,
    Linreg,
    Logistic,
    SpectralSweep,
    EpsilonSweep,
    SizeSweep,
    BaselineCompare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleKind {
    Zero,
    Quadratic,
    Linreg,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlphaKind {
    Harmonic,
    InvSqrt,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Topology {
    Er,
    Ring,
    Complete,
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    Random,
    Zero,
}

macro_rules! keyword_enum {
    ($ty:ty, $what:literal, { $($text:literal => $variant:expr),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($text => Ok($variant),)+
                    _ => Err(format!(concat!("expected ", $what, " (one of {})"), [$($text),+].join(", "))),
                }
            }
        }
    };
}

keyword_enum!(ExperimentKind, "an experiment kind", {
    "consensus" => ExperimentKind::Consensus,
    "linreg" => ExperimentKind::Linreg,
    "logistic" => ExperimentKind::Logistic,
    "spectral-sweep" => ExperimentKind::SpectralSweep,
    "epsilon-sweep" => ExperimentKind::EpsilonSweep,
    "size-sweep" => ExperimentKind::SizeSweep,
    "baseline-compare" => ExperimentKind::BaselineCompare,
});

keyword_enum!(OracleKind, "an oracle", {
    "zero" => OracleKind::Zero,
    "quadratic" => OracleKind::Quadratic,
    "linreg" => OracleKind::Linreg,
    "logistic" => OracleKind::Logistic,
});

keyword_enum!(AlphaKind, "a step-size kind", {
    "harmonic" => AlphaKind::Harmonic,
    "inv_sqrt" => AlphaKind::InvSqrt,
    "explicit" => AlphaKind::Explicit,
});

keyword_enum!(Init, "an initialization", {
    "random" => Init::Random,
    "zero" => Init::Zero,
});

keyword_enum!(RowNorm, "a row normalization", {
    "l2" => RowNorm::UnitL2,
    "sum" => RowNorm::SumToOne,
    "none" => RowNorm::None,
});

impl ExperimentKind {
    pub fn tag(self) -> &'static str {
        match self {
            Self::Consensus => "consensus",
            Self::Linreg => "linreg",
            Self::Logistic => "logistic",
            Self::SpectralSweep => "spectral-sweep",
            Self::EpsilonSweep => "epsilon-sweep",
            Self::SizeSweep => "size-sweep",
            Self::BaselineCompare => "baseline-compare",
        }
    }
}

impl OracleKind {
    pub fn tag(self) -> &'static str {
        match self {
            Self::Zero => "zero",
            Self::Quadratic => "quadratic",
            Self::Linreg => "linreg",
            Self::Logistic => "logistic",
        }
    }
}

fn mask_tag(m: MaskConvention) -> &'static str {
    match m {
        MaskConvention::SenderMask => "sender",
        MaskConvention::LiteralReceiver => "literal-receiver",
    }
}

fn parse_mask(s: &str) -> std::result::Result<MaskConvention, String> {
    match s {
        "sender" => Ok(MaskConvention::SenderMask),
        "literal-receiver" => Ok(MaskConvention::LiteralReceiver),
        _ => Err("expected a mask convention (one of sender, literal-receiver)".into()),
    }
}

fn parse_baseline(s: &str) -> std::result::Result<BaselineKind, String> {
    match s {
        "q-grad-push" => Ok(BaselineKind::QGradPush),
        "q-de-dgd" => Ok(BaselineKind::QDeDGD),
        _ => Err(format!("unknown baseline `{s}` (one of q-grad-push, q-de-dgd)")),
    }
}

fn parse_bool(s: &str) -> std::result::Result<bool, String> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err("expected true or false".into()),
    }
}

/// Every accepted key, in canonical order.
pub const KEYS: &[&str] = &[
    "experiment",
    "n",
    "d",
    "k",
    "q",
    "B",
    "epsilon",
    "T",
    "topology",
    "p_edge",
    "schedule_file",
    "seed",
    "seeds",
    "oracle",
    "alpha_kind",
    "alpha_scale",
    "alpha_list",
    "mu",
    "mask_convention",
    "baselines",
    "q_match",
    "samples_per_node",
    "total_samples",
    "noise_var",
    "row_norm",
    "classes",
    "separation",
    "images",
    "labels",
    "max_items",
    "init",
    "eps_list",
    "n_list",
    "k_list",
    "threshold",
    "track_spectrum",
    "out",
    "name",
];

const REQUIRED: &[&str] = &["n", "d", "k", "T"];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    /// Window length `B`.
    pub window: usize,
    pub epsilon: f64,
    /// Horizon `T` in steps.
    pub horizon: usize,
    pub topology: Topology,
    pub p_edge: f64,
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub oracle: OracleKind,
    pub alpha_kind: AlphaKind,
    pub alpha_scale: f64,
    pub alpha_list: Vec<f64>,
    pub mu: f64,
    pub mask_convention: MaskConvention,
    pub baselines: Vec<BaselineKind>,
    /// Sparsification rate whose bit budget the baselines match.
    pub q_match: f64,
    pub samples_per_node: usize,
    /// When set, each node gets `total_samples / n` samples.
    pub total_samples: Option<usize>,
    pub noise_var: f64,
    pub row_norm: RowNorm,
    pub classes: usize,
    pub separation: f64,
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub max_items: Option<usize>,
    pub init: Init,
    pub eps_list: Vec<f64>,
    pub n_list: Vec<usize>,
    pub k_list: Vec<usize>,
    pub threshold: f64,
    pub track_spectrum: bool,
    pub out: PathBuf,
    pub name: String,
}

impl ExperimentConfig {
    /// `q = k/d`.
    pub fn q(&self) -> f64 {
        self.k as f64 / self.d as f64
    }

    pub fn step_schedule(&self) -> StepSchedule {
        match self.alpha_kind {
            AlphaKind::Harmonic => StepSchedule::Harmonic { a: self.alpha_scale },
            AlphaKind::InvSqrt => StepSchedule::InvSqrt { a: self.alpha_scale },
            AlphaKind::Explicit => StepSchedule::Explicit(self.alpha_list.clone()),
        }
    }

    /// Samples held by each of `n` nodes.
    pub fn per_node(&self, n: usize) -> usize {
        self.total_samples.map_or(self.samples_per_node, |t| t / n.max(1))
    }

    /// Canonical rendering: every key, fixed order, fixed number formatting.
    pub fn to_text(&self) -> String {
        let list = |v: &[String]| v.join(", ");
        let floats = |v: &[f64]| list(&v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>());
        let ints = |v: &[usize]| list(&v.iter().map(|x| x.to_string()).collect::<Vec<_>>());
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let (topology, schedule_file) = match &self.topology {
            Topology::Er => ("er".to_string(), None),
            Topology::Ring => ("ring".to_string(), None),
            Topology::Complete => ("complete".to_string(), None),
            Topology::File(p) => ("file".to_string(), Some(p.display().to_string())),
        };
        let init = match self.init {
            Init::Random => "random",
            Init::Zero => "zero",
        };
        let alpha_kind = match self.alpha_kind {
            AlphaKind::Harmonic => "harmonic",
            AlphaKind::InvSqrt => "inv_sqrt",
            AlphaKind::Explicit => "explicit",
        };
        let row_norm = match self.row_norm {
            RowNorm::UnitL2 => "l2",
            RowNorm::SumToOne => "sum",
            RowNorm::None => "none",
        };
        let baselines: Vec<String> = self.baselines.iter().map(|b| b.name(true).to_string()).collect();
        let values: Vec<(&str, Option<String>)> = vec![
            ("experiment", Some(self.experiment.tag().into())),
            ("n", Some(self.n.to_string())),
            ("d", Some(self.d.to_string())),
            ("k", Some(self.k.to_string())),
            ("q", Some(format!("{:e}", self.q()))),
            ("B", Some(self.window.to_string())),
            ("epsilon", Some(format!("{:e}", self.epsilon))),
            ("T", Some(self.horizon.to_string())),
            ("topology", Some(topology)),
            ("p_edge", Some(format!("{:e}", self.p_edge))),
            ("schedule_file", schedule_file),
            ("seed", Some(self.seed.to_string())),
            ("seeds", Some(list(&self.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>()))),
            ("oracle", Some(self.oracle.tag().into())),
            ("alpha_kind", Some(alpha_kind.into())),
            ("alpha_scale", Some(format!("{:e}", self.alpha_scale))),
            ("alpha_list", Some(floats(&self.alpha_list))),
            ("mu", Some(format!("{:e}", self.mu))),
            ("mask_convention", Some(mask_tag(self.mask_convention).into())),
            ("baselines", Some(list(&baselines))),
            ("q_match", Some(format!("{:e}", self.q_match))),
            ("samples_per_node", Some(self.samples_per_node.to_string())),
            ("total_samples", self.total_samples.map(|t| t.to_string())),
            ("noise_var", Some(format!("{:e}", self.noise_var))),
            ("row_norm", Some(row_norm.into())),
            ("classes", Some(self.classes.to_string())),
            ("separation", Some(format!("{:e}", self.separation))),
            ("images", path(&self.images)),
            ("labels", path(&self.labels)),
            ("max_items", self.max_items.map(|m| m.to_string())),
            ("init", Some(init.into())),
            ("eps_list", Some(floats(&self.eps_list))),
            ("n_list", Some(ints(&self.n_list))),
            ("k_list", Some(ints(&self.k_list))),
            ("threshold", Some(format!("{:e}", self.threshold))),
            ("track_spectrum", Some(self.track_spectrum.to_string())),
            ("out", Some(self.out.display().to_string())),
            ("name", Some(self.name.clone())),
        ];
        let mut text = String::new();
        for (key, value) in values {
            if let Some(v) = value {
                let _ = writeln!(text, "{key} = {v}");
            }
        }
        text
    }

    /// SHA-256 of the canonical rendering without the output directory, hex
    /// encoded, so relocated reruns keep their provenance.
    pub fn hash(&self) -> String {
        let text: String = self.to_text().lines().filter(|l| !l.starts_with("out =")).map(|l| format!("{l}\n")).collect();
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Replace the seed everywhere it is used.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.seeds = vec![seed];
        self
    }

    /// Cross-field checks, run after parsing.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Validation(m));
        if self.n == 0 || self.d == 0 {
            return bad(format!("n and d must be positive (n={}, d={})", self.n, self.d));
        }
        if self.k == 0 || self.k > self.d {
            return bad(format!("k must satisfy 1 <= k <= d (k={}, d={})", self.k, self.d));
        }
        if self.window == 0 {
            return bad("B must be at least 1".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        if !(self.p_edge > 0.0 && self.p_edge <= 1.0) {
            return bad(format!("p_edge must lie in (0, 1], got {}", self.p_edge));
        }
        if !(self.q_match > 0.0 && self.q_match <= 1.0) {
            return bad(format!("q_match must lie in (0, 1], got {}", self.q_match));
        }
        if self.alpha_kind == AlphaKind::Explicit && self.alpha_list.is_empty() {
            return bad("alpha_kind = explicit needs a non-empty alpha_list".into());
        }
        self.step_schedule().validate()?;
        if self.classes < 2 {
            return bad(format!("classes must be at least 2, got {}", self.classes));
        }
        if self.k_list.iter().any(|&k| k == 0 || k > self.d) {
            return bad(format!("every k_list entry must lie in 1..={}", self.d));
        }
        if self.n_list.iter().any(|&n| n == 0) {
            return bad("n_list entries must be positive".into());
        }
        if self.eps_list.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return bad("eps_list entries must lie in (0, 1)".into());
        }
        if self.images.is_some() != self.labels.is_some() {
            return bad("images and labels must be given together".into());
        }
        let mut paths: Vec<&PathBuf> = self.images.iter().chain(self.labels.iter()).collect();
        if let Topology::File(p) = &self.topology {
            paths.push(p);
        }
        for p in paths {
            if !p.is_file() {
                return bad(format!("referenced file {} does not exist", p.display()));
            }
        }
        Ok(())
    }
}

/// Read and parse a config file. Relative paths inside it resolve against
/// the file's directory.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_config(&text, path)
}

struct Entry {
    line: usize,
    value: String,
}

struct Fields<'a> {
    path: &'a Path,
    entries: BTreeMap<&'static str, Entry>,
    last_line: usize,
}

impl Fields<'_> {
    fn err(&self, line: usize, msg: String) -> HarnessError {
        HarnessError::Config { path: self.path.to_path_buf(), line, msg }
    }

    fn get<T>(&self, key: &str, parse: impl Fn(&str) -> std::result::Result<T, String>) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(e) => parse(&e.value).map(Some).map_err(|m| self.err(e.line, format!("`{key}`: {m}"))),
        }
    }

    fn num<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key, |s| s.parse::<T>().map_err(|_| format!("cannot parse `{s}` as {}", type_name::<T>())))
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        self.get(key, |s| {
            s.split(',')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<T>().map_err(|_| format!("cannot parse list item `{t}` as {}", type_name::<T>())))
                .collect()
        })
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        let base = self.path.parent().unwrap_or(Path::new(""));
        self.entries.get(key).map(|e| base.join(&e.value))
    }

    fn required<T: FromStr>(&self, key: &str) -> Result<T> {
        self.num(key)?
            .ok_or_else(|| self.err(self.last_line + 1, format!("missing required key `{key}`")))
    }
}

fn type_name<T>() -> &'static str {
    let full = std::any::type_name::<T>();
    match full {
        "f64" => "a number",
        "usize" | "u64" => "a non-negative integer",
        _ => full,
    }
}

/// Parse config text; `path` is used for messages and relative paths.
pub fn parse_config(text: &str, path: &Path) -> Result<ExperimentConfig> {
    let mut fields = Fields { path, entries: BTreeMap::new(), last_line: 0 };
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        fields.last_line = line;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(fields.err(line, format!("expected `key = value`, found `{content}`")));
        };
        let key = key.trim();
        let Some(&known) = KEYS.iter().find(|&&k| k == key) else {
            return Err(fields.err(line, format!("unknown key `{key}`")));
        };
        if let Some(prev) = fields.entries.get(known) {
            return Err(fields.err(line, format!("duplicate key `{key}` (first set on line {})", prev.line)));
        }
        fields.entries.insert(known, Entry { line, value: value.trim().to_string() });
    }

    for key in REQUIRED {
        fields.num::<usize>(key)?;
    }
    for key in REQUIRED {
        fields.required::<String>(key)?;
    }
    let experiment = fields.get("experiment", str::parse)?.unwrap_or(ExperimentKind::Consensus);
    let n: usize = fields.required("n")?;
    let d: usize = fields.required("d")?;
    let k: usize = fields.required("k")?;
    let seed: u64 = fields.num("seed")?.unwrap_or(0);
    let default_oracle = match experiment {
        ExperimentKind::Consensus | ExperimentKind::EpsilonSweep | ExperimentKind::SpectralSweep => OracleKind::Zero,
        ExperimentKind::Logistic => OracleKind::Logistic,
        ExperimentKind::Linreg | ExperimentKind::SizeSweep | ExperimentKind::BaselineCompare => OracleKind::Linreg,
    };
    let oracle = fields.get("oracle", str::parse)?.unwrap_or(default_oracle);
    let schedule_file = fields.path("schedule_file");
    let topology = match fields.get("topology", |s| Ok::<_, String>(s.to_string()))?.as_deref() {
        None if schedule_file.is_some() => Topology::File(schedule_file.clone().unwrap()),
        None | Some("er") => Topology::Er,
        Some("ring") => Topology::Ring,
        Some("complete") => Topology::Complete,
        Some("file") => match schedule_file.clone() {
            Some(p) => Topology::File(p),
            None => {
                let line = fields.entries["topology"].line;
                return Err(fields.err(line, "`topology = file` needs `schedule_file`".into()));
            }
        },
        Some(other) => {
            let line = fields.entries["topology"].line;
            return Err(fields.err(line, format!("`topology`: expected er, ring, complete or file, found `{other}`")));
        }
    };
    if schedule_file.is_some() && !matches!(topology, Topology::File(_)) {
        let line = fields.entries["schedule_file"].line;
        return Err(fields.err(line, "`schedule_file` requires `topology = file`".into()));
    }
    let default_threshold = match experiment {
        ExperimentKind::SizeSweep => 0.5,
        ExperimentKind::BaselineCompare | ExperimentKind::Linreg => 1e-2,
        _ => 1e-4,
    };

    let cfg = ExperimentConfig {
        experiment,
        n,
        d,
        k,
        window: fields.num("B")?.unwrap_or(1),
        epsilon: fields.num("epsilon")?.unwrap_or(0.05),
        horizon: fields.required("T")?,
        topology,
        p_edge: fields.num("p_edge")?.unwrap_or(0.9),
        seed,
        seeds: fields.list("seeds")?.unwrap_or_else(|| vec![seed]),
        oracle,
        alpha_kind: fields.get("alpha_kind", str::parse)?.unwrap_or(AlphaKind::Harmonic),
        alpha_scale: fields.num("alpha_scale")?.unwrap_or(if oracle == OracleKind::Logistic { 0.02 } else { 0.2 }),
        alpha_list: fields.list("alpha_list")?.unwrap_or_default(),
        mu: fields.num("mu")?.unwrap_or(1e-5),
        mask_convention: fields.get("mask_convention", parse_mask)?.unwrap_or_default(),
        baselines: fields
            .get("baselines", |s| s.split(',').map(str::trim).filter(|t| !t.is_empty()).map(parse_baseline).collect())?
            .unwrap_or_else(|| vec![BaselineKind::QGradPush, BaselineKind::QDeDGD]),
        q_match: fields.num("q_match")?.unwrap_or(k as f64 / d.max(1) as f64),
        samples_per_node: fields.num("samples_per_node")?.unwrap_or(50),
        total_samples: fields.num("total_samples")?,
        noise_var: fields.num("noise_var")?.unwrap_or(0.01),
        row_norm: fields.get("row_norm", str::parse)?.unwrap_or(RowNorm::UnitL2),
        classes: fields.num("classes")?.unwrap_or(2),
        separation: fields.num("separation")?.unwrap_or(3.0),
        images: fields.path("images"),
        labels: fields.path("labels"),
        max_items: fields.num("max_items")?,
        init: fields.get("init", str::parse)?.unwrap_or(if oracle == OracleKind::Logistic { Init::Zero } else { Init::Random }),
        eps_list: fields.list("eps_list")?.unwrap_or_else(|| vec![0.1, 0.05, 0.02, 0.01]),
        n_list: fields.list("n_list")?.unwrap_or_else(|| vec![5, 10, 20, 40]),
        k_list: fields.list("k_list")?.unwrap_or_else(|| (1..=d).collect()),
        threshold: fields.num("threshold")?.unwrap_or(default_threshold),
        track_spectrum: fields.get("track_spectrum", parse_bool)?.unwrap_or(experiment == ExperimentKind::SpectralSweep),
        out: fields.path("out").unwrap_or_else(|| PathBuf::from("out")),
        name: fields.get("name", |s| Ok::<_, String>(s.to_string()))?.unwrap_or_else(|| experiment.tag().to_string()),
    };
    if let Some(q) = fields.num::<f64>("q")? {
        if (q * d as f64).round() as usize != k {
            let line = fields.entries["q"].line;
            return Err(fields.err(line, format!("`q = {q}` is inconsistent with k={k}, d={d} (k/d = {})", cfg.q())));
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        parse_config(text, Path::new("test.cfg"))
    }

    #[test]
    fn minimal_consensus() {
        let cfg = parse("n = 10\nd = 16\nk = 16\nB = 1\nepsilon = 0.05\nT = 500\n").unwrap();
        assert_eq!((cfg.n, cfg.d, cfg.k, cfg.window, cfg.horizon), (10, 16, 16, 1, 500));
        assert_eq!(cfg.experiment, ExperimentKind::Consensus);
        assert_eq!(cfg.oracle, OracleKind::Zero);
        assert_eq!(cfg.q(), 1.0);
    }

    #[test]
    fn k_above_d_rejected() {
        let err = parse("n = 10\nd = 4\nk = 5\nT = 10\n").unwrap_err();
        assert!(matches!(err, HarnessError::Validation(_)), "{err}");
    }

    #[test]
    fn replication_q() {
        let text = "experiment = linreg\nn = 10\nd = 128\nk = 12\nq = 0.09\nB = 1\nT = 2000\nsamples_per_node = 200\n";
        let cfg = parse(text).unwrap();
        assert_eq!(cfg.q(), 0.09375);
        assert!(parse(&text.replace("0.09", "0.5")).is_err());
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("n = 10\nd = 4\nfoo = 1\n", 3, "unknown key"),
            ("n = 10\nd = four\n", 2, "cannot parse"),
            ("n = 10\n# comment\nd = 4\nk = 2\n", 5, "missing required key `T`"),
            ("n = 10\nn = 11\n", 2, "duplicate"),
            ("n 10\n", 1, "expected `key = value`"),
            ("n = 3\nd = 2\nk = 1\nT = 1\noracle = cubic\n", 5, "expected an oracle"),
        ];
        for (text, line, needle) in cases {
            match parse(text) {
                Err(HarnessError::Config { line: l, msg, .. }) => {
                    assert_eq!(l, line, "{text:?}: {msg}");
                    assert!(msg.contains(needle), "{msg}");
                }
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn canonical_text_round_trips() {
        let cfg = parse("experiment = epsilon-sweep\nn = 10\nd = 16\nk = 8\nT = 300\neps_list = 0.1, 0.01\nseeds = 1,2\n").unwrap();
        let again = parse(&cfg.to_text()).unwrap();
        let mut expected = cfg.clone();
        expected.out = PathBuf::from("out");
        assert_eq!(again, expected);
        assert_eq!(cfg.hash(), cfg.clone().hash());
        assert_ne!(cfg.hash(), cfg.with_seed(9).hash());
    }

    #[test]
    fn missing_schedule_file_rejected() {
        let err = parse("n = 3\nd = 2\nk = 1\nT = 1\nschedule_file = does-not-exist.txt\n").unwrap_err();
        assert!(err.to_string().contains("does not exist"), "{err}");
    }
}
