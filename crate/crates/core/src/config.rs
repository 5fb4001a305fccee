//! Plain-text scenario configuration.
//!
//! The format is flat `key = value` lines grouped under `[section]` headers,
//! with `#` comments; repeatable keys (`edge`, `cost`) take whitespace-
//! separated tuples. It is deliberately trivial to parse and diff. Sections
//! and keys:
//!
//! ```text
//! [scenario]
//! name = my-run            # optional label
//! seed = 42                # required; every random draw derives from it
//! n = 10                   # agent count
//! k = 0.0                  # resource total
//! x0 = uniform             # or: random <lo> <hi> | explicit <v1> ... <vn>
//!
//! [graph]
//! type = cycle             # cycle | scale-free-deletions | explicit
//! weight_min = 0.5         # generated link weights (generators only)
//! weight_max = 1.5
//! snapshots = 4            # scale-free-deletions only
//! deletion_fraction = 0.3  # scale-free-deletions only
//! segment_duration = 25    # scale-free-deletions only
//! edge = 0 1 1.0           # explicit only; repeated "i j w" triples
//!
//! [costs]
//! family = quartic         # quartic | quadlse | quadratic | explicit requires per-agent "cost =" lines
//! cost = 1.0 0.0           # explicit only, one line per agent:
//!                          #   quartic "b a", quadlse "a b c d", quadratic "p q"
//!
//! [protocol]
//! kind = combined          # linear | sign-power | combined
//! eta1 = 1.0
//! eta2 = 1.0               # combined only
//! v1 = 0.1                 # sign-power and combined
//! v2 = 1.6                 # combined only
//!
//! [integration]
//! h = 0.00001              # step size
//! t_end = 2.0
//! sample_every = 200       # optional, default 100
//! stop_tol = 1e-6          # optional; stop when dispersion stays below
//! stop_patience = 3        # optional, default 3 consecutive samples
//!
//! [output]
//! dir = out                # optional; CLI flag overrides
//! ```
//!
//! The absence of `seed` is an error, never a time-based default.

use crate::cost::CostFunction;
use crate::dynamics::ProtocolKind;
use crate::harness::X0Policy;

/// Parse failure with the offending line when known.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    AtLine { line: usize, message: String },
    #[error("{0}")]
    Missing(String),
}

fn at(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError::AtLine { line, message: message.into() }
}

/// How to build the graph schedule.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphSpec {
    Cycle { w_min: f64, w_max: f64 },
    ScaleFreeDeletions {
        snapshots: usize,
        deletion_fraction: f64,
        w_min: f64,
        w_max: f64,
        segment_duration: f64,
    },
    Explicit { edges: Vec<(usize, usize, f64)> },
}

/// How to build the cost ensemble.
#[derive(Debug, Clone, PartialEq)]
pub enum CostSpec {
    RandomQuartic,
    RandomQuadLse,
    RandomQuadratic,
    Explicit(Vec<CostFunction>),
}

/// Raw protocol parameters before validation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolConfig {
    pub kind: ProtocolKind,
    pub eta1: f64,
    pub eta2: f64,
    pub v1: f64,
    pub v2: f64,
    pub dim: usize,
}

/// Integration parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integration {
    pub h: f64,
    pub t_end: f64,
    pub sample_every: usize,
    pub stop_tol: Option<f64>,
    pub stop_patience: usize,
}

/// A parsed (not yet materialized) scenario description.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub n: usize,
    pub k: f64,
    pub x0: X0Policy,
    pub graph: GraphSpec,
    pub costs: CostSpec,
    pub protocol: ProtocolConfig,
    pub integration: Integration,
    pub output_dir: Option<String>,
}

/// One `key = value` occurrence.
#[derive(Debug, Clone)]
struct Entry {
    section: String,
    key: String,
    value: String,
    line: usize,
}

fn tokenize(text: &str) -> Result<Vec<Entry>, ConfigError> {
    let mut entries = Vec::new();
    let mut section = String::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let stripped = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if stripped.is_empty() {
            continue;
        }
        if let Some(rest) = stripped.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| at(line, "unterminated section header"))?;
            section = name.trim().to_string();
            continue;
        }
        let (key, value) = stripped
            .split_once('=')
            .ok_or_else(|| at(line, format!("expected 'key = value', got '{stripped}'")))?;
        if section.is_empty() {
            return Err(at(line, "key outside any [section]"));
        }
        entries.push(Entry {
            section: section.clone(),
            key: key.trim().to_string(),
            value: value.trim().to_string(),
            line,
        });
    }
    Ok(entries)
}

struct Section<'a> {
    name: &'a str,
    entries: Vec<&'a Entry>,
}

impl<'a> Section<'a> {
    fn get(&self, key: &str) -> Option<&'a Entry> {
        self.entries.iter().find(|e| e.key == key).copied()
    }

    fn all(&self, key: &str) -> Vec<&'a Entry> {
        self.entries.iter().filter(|e| e.key == key).copied().collect()
    }

    fn require(&self, key: &str) -> Result<&'a Entry, ConfigError> {
        self.get(key)
            .ok_or_else(|| ConfigError::Missing(format!("[{}] is missing '{key}'", self.name)))
    }

    fn check_known(&self, known: &[&str]) -> Result<(), ConfigError> {
        for e in &self.entries {
            if !known.contains(&e.key.as_str()) {
                return Err(at(e.line, format!("unknown key '{}' in [{}]", e.key, self.name)));
            }
        }
        Ok(())
    }
}

fn parse_f64(e: &Entry) -> Result<f64, ConfigError> {
    e.value
        .parse::<f64>()
        .map_err(|_| at(e.line, format!("'{}' must be a number, got '{}'", e.key, e.value)))
}

fn parse_usize(e: &Entry) -> Result<usize, ConfigError> {
    e.value
        .parse::<usize>()
        .map_err(|_| at(e.line, format!("'{}' must be a nonnegative integer, got '{}'", e.key, e.value)))
}

fn parse_u64(e: &Entry) -> Result<u64, ConfigError> {
    e.value
        .parse::<u64>()
        .map_err(|_| at(e.line, format!("'{}' must be an unsigned integer, got '{}'", e.key, e.value)))
}

fn parse_floats(e: &Entry, expected: usize) -> Result<Vec<f64>, ConfigError> {
    let vals: Result<Vec<f64>, _> =
        e.value.split_whitespace().map(|t| t.parse::<f64>()).collect();
    let vals =
        vals.map_err(|_| at(e.line, format!("'{}' expects numbers, got '{}'", e.key, e.value)))?;
    if vals.len() != expected {
        return Err(at(
            e.line,
            format!("'{}' expects {expected} values, got {}", e.key, vals.len()),
        ));
    }
    Ok(vals)
}

/// Parses the configuration text; `default_name` labels the scenario when
/// the `name` key is absent.
pub fn parse_scenario_config(text: &str, default_name: &str) -> Result<ScenarioConfig, ConfigError> {
    let entries = tokenize(text)?;
    for e in &entries {
        const SECTIONS: [&str; 6] =
            ["scenario", "graph", "costs", "protocol", "integration", "output"];
        if !SECTIONS.contains(&e.section.as_str()) {
            return Err(at(e.line, format!("unknown section [{}]", e.section)));
        }
    }
    let section = |name: &'static str| Section {
        name,
        entries: entries.iter().filter(|e| e.section == name).collect(),
    };

    // [scenario]
    let sc = section("scenario");
    sc.check_known(&["name", "seed", "n", "k", "x0"])?;
    let name = sc.get("name").map(|e| e.value.clone()).unwrap_or_else(|| default_name.to_string());
    let seed = parse_u64(sc.require("seed")?)?;
    let n = parse_usize(sc.require("n")?)?;
    let k = parse_f64(sc.require("k")?)?;
    let x0 = match sc.get("x0") {
        None => X0Policy::Uniform,
        Some(e) => {
            let mut tokens = e.value.split_whitespace();
            match tokens.next() {
                Some("uniform") => X0Policy::Uniform,
                Some("random") => {
                    let rest: Vec<&str> = tokens.collect();
                    if rest.len() != 2 {
                        return Err(at(e.line, "x0 = random expects '<lo> <hi>'"));
                    }
                    let lo = rest[0].parse::<f64>().map_err(|_| at(e.line, "bad lower bound"))?;
                    let hi = rest[1].parse::<f64>().map_err(|_| at(e.line, "bad upper bound"))?;
                    X0Policy::Random { lo, hi }
                }
                Some("explicit") => {
                    let vals: Result<Vec<f64>, _> = tokens.map(|t| t.parse::<f64>()).collect();
                    let vals = vals.map_err(|_| at(e.line, "x0 = explicit expects numbers"))?;
                    if vals.len() != n {
                        return Err(at(
                            e.line,
                            format!("x0 = explicit expects {n} values, got {}", vals.len()),
                        ));
                    }
                    X0Policy::Explicit(vals)
                }
                _ => return Err(at(e.line, "x0 must be 'uniform', 'random <lo> <hi>', or 'explicit ...'")),
            }
        }
    };

    // [graph]
    let gr = section("graph");
    gr.check_known(&[
        "type",
        "weight_min",
        "weight_max",
        "snapshots",
        "deletion_fraction",
        "segment_duration",
        "edge",
    ])?;
    let gtype = gr.require("type")?;
    let w_min = gr.get("weight_min").map(parse_f64).transpose()?.unwrap_or(0.5);
    let w_max = gr.get("weight_max").map(parse_f64).transpose()?.unwrap_or(1.5);
    let graph = match gtype.value.as_str() {
        "cycle" => GraphSpec::Cycle { w_min, w_max },
        "scale-free-deletions" => GraphSpec::ScaleFreeDeletions {
            snapshots: gr.get("snapshots").map(parse_usize).transpose()?.unwrap_or(4),
            deletion_fraction: gr
                .get("deletion_fraction")
                .map(parse_f64)
                .transpose()?
                .unwrap_or(0.3),
            w_min,
            w_max,
            segment_duration: gr
                .get("segment_duration")
                .map(parse_f64)
                .transpose()?
                .unwrap_or(25.0),
        },
        "explicit" => {
            let mut edges = Vec::new();
            for e in gr.all("edge") {
                let toks: Vec<&str> = e.value.split_whitespace().collect();
                if toks.len() != 3 {
                    return Err(at(e.line, "edge expects 'i j w'"));
                }
                let i = toks[0].parse::<usize>().map_err(|_| at(e.line, "bad edge endpoint"))?;
                let j = toks[1].parse::<usize>().map_err(|_| at(e.line, "bad edge endpoint"))?;
                let w = toks[2].parse::<f64>().map_err(|_| at(e.line, "bad edge weight"))?;
                edges.push((i, j, w));
            }
            if edges.is_empty() {
                return Err(ConfigError::Missing(
                    "[graph] type = explicit needs at least one 'edge = i j w'".into(),
                ));
            }
            GraphSpec::Explicit { edges }
        }
        other => {
            return Err(at(
                gtype.line,
                format!("unknown graph type '{other}' (cycle | scale-free-deletions | explicit)"),
            ))
        }
    };

    // [costs]
    let co = section("costs");
    co.check_known(&["family", "cost"])?;
    let family = co.require("family")?;
    let costs = match family.value.as_str() {
        "quartic" | "quadlse" | "quadratic" => {
            let explicit = co.all("cost");
            if explicit.is_empty() {
                match family.value.as_str() {
                    "quartic" => CostSpec::RandomQuartic,
                    "quadlse" => CostSpec::RandomQuadLse,
                    _ => CostSpec::RandomQuadratic,
                }
            } else {
                let mut list = Vec::with_capacity(explicit.len());
                for e in explicit {
                    let f = match family.value.as_str() {
                        "quartic" => {
                            let v = parse_floats(e, 2)?;
                            CostFunction::quartic(v[0], v[1])
                        }
                        "quadlse" => {
                            let v = parse_floats(e, 4)?;
                            CostFunction::quad_lse(v[0], v[1], v[2], v[3])
                        }
                        _ => {
                            let v = parse_floats(e, 2)?;
                            CostFunction::quadratic(v[0], v[1])
                        }
                    }
                    .map_err(|err| at(e.line, err.to_string()))?;
                    list.push(f);
                }
                CostSpec::Explicit(list)
            }
        }
        other => {
            return Err(at(
                family.line,
                format!("unknown cost family '{other}' (quartic | quadlse | quadratic)"),
            ))
        }
    };

    // [protocol]
    let pr = section("protocol");
    pr.check_known(&["kind", "eta1", "eta2", "v1", "v2", "dim"])?;
    let kind_entry = pr.require("kind")?;
    let kind = match kind_entry.value.as_str() {
        "linear" => ProtocolKind::Linear,
        "sign-power" => ProtocolKind::SignPower,
        "combined" => ProtocolKind::Combined,
        "combined-vector" => ProtocolKind::CombinedVector,
        other => {
            return Err(at(
                kind_entry.line,
                format!("unknown protocol kind '{other}' (linear | sign-power | combined)"),
            ))
        }
    };
    let protocol = ProtocolConfig {
        kind,
        eta1: parse_f64(pr.require("eta1")?)?,
        eta2: pr.get("eta2").map(parse_f64).transpose()?.unwrap_or(0.0),
        v1: pr.get("v1").map(parse_f64).transpose()?.unwrap_or(1.0),
        v2: pr.get("v2").map(parse_f64).transpose()?.unwrap_or(1.0),
        dim: pr.get("dim").map(parse_usize).transpose()?.unwrap_or(1),
    };

    // [integration]
    let it = section("integration");
    it.check_known(&["h", "t_end", "sample_every", "stop_tol", "stop_patience"])?;
    let integration = Integration {
        h: parse_f64(it.require("h")?)?,
        t_end: parse_f64(it.require("t_end")?)?,
        sample_every: it.get("sample_every").map(parse_usize).transpose()?.unwrap_or(100),
        stop_tol: it.get("stop_tol").map(parse_f64).transpose()?,
        stop_patience: it.get("stop_patience").map(parse_usize).transpose()?.unwrap_or(3),
    };

    // [output]
    let out = section("output");
    out.check_known(&["dir"])?;
    let output_dir = out.get("dir").map(|e| e.value.clone());

    Ok(ScenarioConfig { name, seed, n, k, x0, graph, costs, protocol, integration, output_dir })
}

/// Renders a config back to text, in the canonical section order.
///
/// Reference scenarios are exported through this so a written config file
/// re-parses to the identical scenario.
pub fn render_scenario_config(c: &ScenarioConfig) -> String {
    let mut s = String::new();
    s.push_str("[scenario]\n");
    s.push_str(&format!("name = {}\n", c.name));
    s.push_str(&format!("seed = {}\n", c.seed));
    s.push_str(&format!("n = {}\n", c.n));
    s.push_str(&format!("k = {}\n", c.k));
    match &c.x0 {
        X0Policy::Uniform => s.push_str("x0 = uniform\n"),
        X0Policy::Random { lo, hi } => s.push_str(&format!("x0 = random {lo} {hi}\n")),
        X0Policy::Explicit(vals) => {
            s.push_str("x0 = explicit");
            for v in vals {
                s.push_str(&format!(" {v}"));
            }
            s.push('\n');
        }
    }
    s.push_str("\n[graph]\n");
    match &c.graph {
        GraphSpec::Cycle { w_min, w_max } => {
            s.push_str("type = cycle\n");
            s.push_str(&format!("weight_min = {w_min}\nweight_max = {w_max}\n"));
        }
        GraphSpec::ScaleFreeDeletions {
            snapshots,
            deletion_fraction,
            w_min,
            w_max,
            segment_duration,
        } => {
            s.push_str("type = scale-free-deletions\n");
            s.push_str(&format!("snapshots = {snapshots}\n"));
            s.push_str(&format!("deletion_fraction = {deletion_fraction}\n"));
            s.push_str(&format!("weight_min = {w_min}\nweight_max = {w_max}\n"));
            s.push_str(&format!("segment_duration = {segment_duration}\n"));
        }
        GraphSpec::Explicit { edges } => {
            s.push_str("type = explicit\n");
            for (i, j, w) in edges {
                s.push_str(&format!("edge = {i} {j} {w}\n"));
            }
        }
    }
    s.push_str("\n[costs]\n");
    match &c.costs {
        CostSpec::RandomQuartic => s.push_str("family = quartic\n"),
        CostSpec::RandomQuadLse => s.push_str("family = quadlse\n"),
        CostSpec::RandomQuadratic => s.push_str("family = quadratic\n"),
        CostSpec::Explicit(list) => {
            let family = match list.first() {
                Some(CostFunction::Quartic { .. }) => "quartic",
                Some(CostFunction::QuadLse { .. }) => "quadlse",
                _ => "quadratic",
            };
            s.push_str(&format!("family = {family}\n"));
            for f in list {
                match f {
                    CostFunction::Quartic { b, a } => s.push_str(&format!("cost = {b} {a}\n")),
                    CostFunction::QuadLse { a, b, c: cc, d } => {
                        s.push_str(&format!("cost = {a} {b} {cc} {d}\n"))
                    }
                    CostFunction::Quadratic { p, q } => s.push_str(&format!("cost = {p} {q}\n")),
                }
            }
        }
    }
    s.push_str("\n[protocol]\n");
    let p = &c.protocol;
    s.push_str(&format!("kind = {}\n", p.kind.slug()));
    s.push_str(&format!("eta1 = {}\n", p.eta1));
    match p.kind {
        ProtocolKind::Linear => {}
        ProtocolKind::SignPower => s.push_str(&format!("v1 = {}\n", p.v1)),
        ProtocolKind::Combined | ProtocolKind::CombinedVector => {
            s.push_str(&format!("eta2 = {}\n", p.eta2));
            s.push_str(&format!("v1 = {}\nv2 = {}\n", p.v1, p.v2));
            if p.dim != 1 {
                s.push_str(&format!("dim = {}\n", p.dim));
            }
        }
    }
    s.push_str("\n[integration]\n");
    let i = &c.integration;
    s.push_str(&format!("h = {}\nt_end = {}\nsample_every = {}\n", i.h, i.t_end, i.sample_every));
    if let Some(tol) = i.stop_tol {
        s.push_str(&format!("stop_tol = {tol}\n"));
    }
    s.push_str(&format!("stop_patience = {}\n", i.stop_patience));
    if let Some(dir) = &c.output_dir {
        s.push_str(&format!("\n[output]\ndir = {dir}\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
# two agents trading over one link
[scenario]
name = tiny
seed = 7
n = 2
k = 3.0
x0 = explicit 1.5 1.5

[graph]
type = explicit
edge = 0 1 1.0

[costs]
family = quartic
cost = 1.0 0.0
cost = 2.0 0.0

[protocol]
kind = combined
eta1 = 1.0
eta2 = 1.0
v1 = 0.5
v2 = 1.6

[integration]
h = 0.0001
t_end = 2.0
sample_every = 100
"#;

    #[test]
    fn parses_a_full_config() {
        let c = parse_scenario_config(SAMPLE, "fallback").unwrap();
        assert_eq!(c.name, "tiny");
        assert_eq!(c.seed, 7);
        assert_eq!(c.n, 2);
        assert_eq!(c.k, 3.0);
        assert_eq!(c.x0, X0Policy::Explicit(vec![1.5, 1.5]));
        assert_eq!(c.graph, GraphSpec::Explicit { edges: vec![(0, 1, 1.0)] });
        match &c.costs {
            CostSpec::Explicit(list) => assert_eq!(list.len(), 2),
            other => panic!("expected explicit costs, got {other:?}"),
        }
        assert_eq!(c.protocol.kind, ProtocolKind::Combined);
        assert_eq!(c.integration.sample_every, 100);
    }

    #[test]
    fn seed_is_mandatory() {
        let text = SAMPLE.replace("seed = 7", "");
        let err = parse_scenario_config(&text, "x").unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected_with_line_numbers() {
        let text = format!("{SAMPLE}\n[integration]\nwarp_speed = 9\n");
        let err = parse_scenario_config(&text, "x").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("warp_speed") && msg.contains("line"), "{msg}");
    }

    #[test]
    fn bad_numbers_point_at_the_line() {
        let text = SAMPLE.replace("h = 0.0001", "h = fast");
        let err = parse_scenario_config(&text, "x").unwrap_err();
        assert!(err.to_string().contains("'h' must be a number"), "{err}");
    }

    #[test]
    fn render_round_trips() {
        let c = parse_scenario_config(SAMPLE, "fallback").unwrap();
        let rendered = render_scenario_config(&c);
        let back = parse_scenario_config(&rendered, "fallback").unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn reference_configs_round_trip_through_text() {
        for config in [
            crate::harness::reference_scenario_cycle_config(11),
            crate::harness::reference_scenario_switching_config(3),
        ] {
            let text = render_scenario_config(&config);
            let back = parse_scenario_config(&text, &config.name).unwrap();
            assert_eq!(config, back);
        }
    }
}
