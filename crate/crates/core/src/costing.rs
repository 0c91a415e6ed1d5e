//! Per-note cost and latency for API teachers versus a locally hosted tagger.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CostError {
    #[error("no pricing for model {0:?}")]
    UnknownModel(String),
    #[error("baseline must be positive, got {0}")]
    NonPositiveBaseline(f64),
    #[error("baseline system {0:?} has no usage records")]
    MissingBaseline(String),
    #[error("usage line {line}: {msg}")]
    Usage { line: usize, msg: String },
    #[error("invalid pricing: {0}")]
    Pricing(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Default hourly rate for local inference (one 80GB A100, averaged over vendors).
pub const DEFAULT_GPU_HOURLY_USD: f64 = 4.74;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelPrice {
    pub input_per_million_usd: f64,
    pub output_per_million_usd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PricingTable {
    #[serde(default)]
    pub models: BTreeMap<String, ModelPrice>,
    #[serde(default = "default_gpu_rate")]
    pub gpu_hourly_usd: f64,
}

fn default_gpu_rate() -> f64 {
    DEFAULT_GPU_HOURLY_USD
}

impl PricingTable {
    pub fn validate(&self) -> Result<(), CostError> {
        let bad = |v: f64| !(v.is_finite() && v >= 0.0);
        if bad(self.gpu_hourly_usd) {
            return Err(CostError::Pricing(format!("gpu_hourly_usd = {}", self.gpu_hourly_usd)));
        }
        for (m, p) in &self.models {
            if bad(p.input_per_million_usd) || bad(p.output_per_million_usd) {
                return Err(CostError::Pricing(format!("negative or non-finite price for {m}")));
            }
        }
        Ok(())
    }

    pub fn parse(input: &str) -> Result<Self, CostError> {
        let t: PricingTable =
            serde_json::from_str(input).map_err(|e| CostError::Pricing(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }

    pub fn read(path: &Path) -> Result<Self, CostError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn price(&self, model: &str) -> Result<&ModelPrice, CostError> {
        self.models
            .get(model)
            .ok_or_else(|| CostError::UnknownModel(model.to_string()))
    }
}

pub fn llm_note_cost(tokens_in: u64, tokens_out: u64, price: &ModelPrice) -> f64 {
    tokens_in as f64 * price.input_per_million_usd / 1e6
        + tokens_out as f64 * price.output_per_million_usd / 1e6
}

pub fn gpu_note_cost(inference_seconds: f64, gpu_hourly_usd: f64) -> f64 {
    inference_seconds / 3600.0 * gpu_hourly_usd
}

/// Signed percent difference of `value` relative to `baseline`.
pub fn percent_diff(value: f64, baseline: f64) -> Result<f64, CostError> {
    if baseline.is_nan() || baseline <= 0.0 {
        return Err(CostError::NonPositiveBaseline(baseline));
    }
    Ok(100.0 * (value - baseline) / baseline)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Usage {
    Llm { tokens_in: u64, tokens_out: u64 },
    Local { inference_seconds: f64 },
}

/// One note processed by one system.
#[derive(Debug, Clone, PartialEq)]
pub struct UsageRecord {
    pub system: String,
    pub doc_id: String,
    pub usage: Usage,
    pub latency_seconds: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct UsageLine {
    system: String,
    doc_id: String,
    tokens_in: Option<u64>,
    tokens_out: Option<u64>,
    inference_seconds: Option<f64>,
    latency_seconds: f64,
}

/// JSON lines with either `tokens_in`/`tokens_out` or `inference_seconds`.
pub fn parse_usage(input: &str) -> Result<Vec<UsageRecord>, CostError> {
    let mut out = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| CostError::Usage { line: idx + 1, msg };
        let u: UsageLine = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        let usage = match (u.tokens_in, u.tokens_out, u.inference_seconds) {
            (Some(i), Some(o), None) => Usage::Llm {
                tokens_in: i,
                tokens_out: o,
            },
            (None, None, Some(s)) if s.is_finite() && s >= 0.0 => Usage::Local {
                inference_seconds: s,
            },
            _ => {
                return Err(err(
                    "need tokens_in and tokens_out, or a non-negative inference_seconds".into(),
                ))
            }
        };
        if !(u.latency_seconds.is_finite() && u.latency_seconds >= 0.0) {
            return Err(err("latency_seconds must be non-negative".into()));
        }
        out.push(UsageRecord {
            system: u.system,
            doc_id: u.doc_id,
            usage,
            latency_seconds: u.latency_seconds,
        });
    }
    Ok(out)
}

pub fn read_usage(path: &Path) -> Result<Vec<UsageRecord>, CostError> {
    parse_usage(&fs::read_to_string(path)?)
}

pub fn record_cost(record: &UsageRecord, pricing: &PricingTable) -> Result<f64, CostError> {
    match record.usage {
        Usage::Llm {
            tokens_in,
            tokens_out,
        } => Ok(llm_note_cost(tokens_in, tokens_out, pricing.price(&record.system)?)),
        Usage::Local { inference_seconds } => {
            Ok(gpu_note_cost(inference_seconds, pricing.gpu_hourly_usd))
        }
    }
}

/// Percent differences against the baseline system's matching column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PercentDiffs {
    pub total_cost: f64,
    pub total_time: f64,
    pub cost_per_note: f64,
    pub time_per_note: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemCost {
    pub system: String,
    pub notes: usize,
    pub total_cost_usd: f64,
    pub total_time_s: f64,
    pub cost_per_note_usd: f64,
    pub time_per_note_s: f64,
    pub vs_baseline: PercentDiffs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub baseline: String,
    /// Baseline first, then the other systems by name.
    pub systems: Vec<SystemCost>,
}

#[derive(Default)]
struct Totals {
    notes: usize,
    cost: f64,
    time: f64,
}

pub fn build_cost_report(
    records: &[UsageRecord],
    pricing: &PricingTable,
    baseline: &str,
) -> Result<CostReport, CostError> {
    let mut totals: BTreeMap<&str, Totals> = BTreeMap::new();
    for r in records {
        let t = totals.entry(r.system.as_str()).or_default();
        t.notes += 1;
        t.cost += record_cost(r, pricing)?;
        t.time += r.latency_seconds;
    }
    let base = totals
        .get(baseline)
        .ok_or_else(|| CostError::MissingBaseline(baseline.to_string()))?;
    let base_notes = base.notes as f64;
    let (b_cost, b_time) = (base.cost, base.time);

    let mut systems = Vec::with_capacity(totals.len());
    let order = std::iter::once(baseline).chain(totals.keys().copied().filter(|s| *s != baseline));
    for name in order {
        let t = &totals[name];
        let n = t.notes as f64;
        let (cpn, tpn) = (t.cost / n, t.time / n);
        systems.push(SystemCost {
            system: name.to_string(),
            notes: t.notes,
            total_cost_usd: t.cost,
            total_time_s: t.time,
            cost_per_note_usd: cpn,
            time_per_note_s: tpn,
            vs_baseline: PercentDiffs {
                total_cost: percent_diff(t.cost, b_cost)?,
                total_time: percent_diff(t.time, b_time)?,
                cost_per_note: percent_diff(cpn, b_cost / base_notes)?,
                time_per_note: percent_diff(tpn, b_time / base_notes)?,
            },
        });
    }
    Ok(CostReport {
        baseline: baseline.to_string(),
        systems,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gpt4o() -> ModelPrice {
        ModelPrice {
            input_per_million_usd: 2.5,
            output_per_million_usd: 10.0,
        }
    }

    #[test]
    fn llm_cost_by_hand() {
        assert!((llm_note_cost(1000, 500, &gpt4o()) - 0.0075).abs() < 1e-12);
        assert_eq!(llm_note_cost(0, 0, &gpt4o()), 0.0);
        assert!((llm_note_cost(2000, 1000, &gpt4o()) - 2.0 * 0.0075).abs() < 1e-12);
    }

    #[test]
    fn gpu_cost() {
        let c = gpu_note_cost(0.14, 4.74);
        assert!((c - 0.000187).abs() / 0.000187 < 0.02);
        assert!((gpu_note_cost(3600.0, 28.0) - 28.0).abs() < 1e-12);
        assert_eq!(gpu_note_cost(0.0, 4.74), 0.0);
    }

    #[test]
    fn percent_differences() {
        assert!((percent_diff(0.0159, 0.000187).unwrap() - 8402.0).abs() / 8402.0 < 0.005);
        assert!((percent_diff(0.58, 0.14).unwrap() - 314.3).abs() < 0.1);
        assert_eq!(percent_diff(3.0, 3.0).unwrap(), 0.0);
        assert!(percent_diff(1.0, 0.0).is_err());
        assert!(percent_diff(1.0, -1.0).is_err());
    }

    #[test]
    fn unknown_model() {
        let p = PricingTable { models: BTreeMap::new(), gpu_hourly_usd: 4.74 };
        let r = UsageRecord {
            system: "gpt-4o".into(),
            doc_id: "d".into(),
            usage: Usage::Llm { tokens_in: 1, tokens_out: 1 },
            latency_seconds: 1.0,
        };
        assert!(matches!(record_cost(&r, &p), Err(CostError::UnknownModel(_))));
    }

    fn local(doc: &str, s: f64) -> UsageRecord {
        UsageRecord {
            system: "bert".into(),
            doc_id: doc.into(),
            usage: Usage::Local { inference_seconds: s },
            latency_seconds: s,
        }
    }

    fn pricing() -> PricingTable {
        PricingTable {
            models: [("gpt-4o".to_string(), gpt4o())].into_iter().collect(),
            gpu_hourly_usd: 4.74,
        }
    }

    #[test]
    fn baseline_only_report() {
        let rep = build_cost_report(&[local("a", 0.1), local("b", 0.2)], &pricing(), "bert").unwrap();
        assert_eq!(rep.systems.len(), 1);
        let s = &rep.systems[0];
        assert_eq!(s.notes, 2);
        assert!((s.time_per_note_s - 0.15).abs() < 1e-12);
        assert_eq!(s.vs_baseline.total_cost, 0.0);
        assert_eq!(s.vs_baseline.time_per_note, 0.0);
    }

    #[test]
    fn identical_systems_have_zero_diff() {
        let mut other = local("a", 0.1);
        other.system = "bert2".into();
        let rep = build_cost_report(&[local("a", 0.1), other], &pricing(), "bert").unwrap();
        assert_eq!(rep.systems[1].system, "bert2");
        assert!(rep.systems[1].vs_baseline.cost_per_note.abs() < 1e-9);
    }

    #[test]
    fn missing_baseline() {
        assert!(matches!(
            build_cost_report(&[local("a", 0.1)], &pricing(), "gpt-4o"),
            Err(CostError::MissingBaseline(_))
        ));
    }

    #[test]
    fn usage_lines() {
        let text = "{\"system\":\"gpt-4o\",\"doc_id\":\"a\",\"tokens_in\":10,\"tokens_out\":2,\"latency_seconds\":1.5}\n{\"system\":\"bert\",\"doc_id\":\"a\",\"inference_seconds\":0.1,\"latency_seconds\":0.1}\n";
        let recs = parse_usage(text).unwrap();
        assert_eq!(recs.len(), 2);
        assert!(matches!(recs[1].usage, Usage::Local { .. }));
        let both = "{\"system\":\"x\",\"doc_id\":\"a\",\"tokens_in\":1,\"tokens_out\":1,\"inference_seconds\":1,\"latency_seconds\":1}";
        assert!(matches!(parse_usage(both), Err(CostError::Usage { line: 1, .. })));
    }

    #[test]
    fn pricing_file() {
        let t = PricingTable::parse(
            r#"{"models":{"gpt-4o":{"input_per_million_usd":2.5,"output_per_million_usd":10}}}"#,
        )
        .unwrap();
        assert_eq!(t.gpu_hourly_usd, DEFAULT_GPU_HOURLY_USD);
        assert!(PricingTable::parse(r#"{"gpu_hourly_usd":-1}"#).is_err());
    }

    proptest! {
        #[test]
        fn costs_are_linear(i in 0u64..1_000_000, o in 0u64..1_000_000, k in 1u64..10) {
            let one = llm_note_cost(i, o, &gpt4o());
            let scaled = llm_note_cost(i * k, o * k, &gpt4o());
            prop_assert!((scaled - k as f64 * one).abs() <= 1e-9 * scaled.max(1.0));
            prop_assert!(llm_note_cost(i + 1, o, &gpt4o()) >= one);
        }

        #[test]
        fn percent_diff_inverts(a in 0.0f64..1e4, b in 1e-6f64..1e4) {
            let p = percent_diff(a, b).unwrap();
            prop_assert!((b * (1.0 + p / 100.0) - a).abs() <= 1e-9 * a.max(b));
        }

        #[test]
        fn totals_equal_record_sums(
            secs in proptest::collection::vec(0.0f64..5.0, 1..20),
            toks in proptest::collection::vec((0u64..5000, 0u64..2000, 0.0f64..5.0), 0..20),
        ) {
            let mut recs: Vec<UsageRecord> =
                secs.iter().enumerate().map(|(i, &s)| local(&i.to_string(), s)).collect();
            for (i, &(ti, to, lat)) in toks.iter().enumerate() {
                recs.push(UsageRecord {
                    system: "gpt-4o".into(),
                    doc_id: i.to_string(),
                    usage: Usage::Llm { tokens_in: ti, tokens_out: to },
                    latency_seconds: lat,
                });
            }
            // Keep the baseline strictly positive.
            recs.push(local("z", 0.5));
            let rep = build_cost_report(&recs, &pricing(), "bert").unwrap();
            for s in &rep.systems {
                let mine: Vec<&UsageRecord> = recs.iter().filter(|r| r.system == s.system).collect();
                let cost: f64 = mine.iter().map(|r| record_cost(r, &pricing()).unwrap()).sum();
                let time: f64 = mine.iter().map(|r| r.latency_seconds).sum();
                prop_assert_eq!(s.notes, mine.len());
                prop_assert!((s.total_cost_usd - cost).abs() < 1e-9);
                prop_assert!((s.total_time_s - time).abs() < 1e-9);
            }
        }
    }
}
