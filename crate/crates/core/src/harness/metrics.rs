//! Evaluation metrics and their `key=value` file format.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_rational::Ratio;

use crate::agent::EpisodeResult;
use crate::types::{Task, TaskType};

pub type SuccessRate = Ratio<u64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Ablation {
    Full,
    NoHigh,
    NoLow,
    NoMemory,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::Full, Ablation::NoHigh, Ablation::NoLow, Ablation::NoMemory];

    pub fn as_str(&self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoHigh => "no_high",
            Ablation::NoLow => "no_low",
            Ablation::NoMemory => "no_memory",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.as_str() == s)
    }

    pub fn uses_high(&self) -> bool {
        matches!(self, Ablation::Full | Ablation::NoLow)
    }

    pub fn uses_low(&self) -> bool {
        matches!(self, Ablation::Full | Ablation::NoHigh)
    }
}

impl std::fmt::Display for Ablation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Rounds `r` half-up to `places` decimal places and renders it.
pub fn format_decimal(r: Ratio<u64>, places: u32) -> String {
    let scale = 10u64.pow(places);
    let (n, d) = (*r.numer(), *r.denom());
    let scaled = (2 * n * scale + d) / (2 * d);
    if places == 0 {
        return scaled.to_string();
    }
    format!("{}.{:0width$}", scaled / scale, scaled % scale, width = places as usize)
}

/// `successes / episodes` as a percentage to one decimal place.
pub fn format_percent(rate: SuccessRate) -> String {
    format!("{}%", format_decimal(rate * 100, 1))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TypeCount {
    pub successes: u64,
    pub episodes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalMetrics {
    pub label: String,
    pub env: String,
    pub seeds: Vec<u64>,
    pub episodes: u64,
    pub successes: u64,
    pub total_steps: u64,
    pub per_type: BTreeMap<TaskType, TypeCount>,
    pub high_retrievals: u64,
    pub low_retrievals: u64,
    pub model_calls: u64,
    pub aborted: u64,
    /// Longest episode, kept to check budget conformance.
    pub max_steps: u64,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("malformed metrics file: {0}")]
pub struct MetricsParseError(pub String);

impl EvalMetrics {
    pub fn new(label: impl Into<String>, env: impl Into<String>, seeds: Vec<u64>) -> Self {
        Self {
            label: label.into(),
            env: env.into(),
            seeds,
            episodes: 0,
            successes: 0,
            total_steps: 0,
            per_type: BTreeMap::new(),
            high_retrievals: 0,
            low_retrievals: 0,
            model_calls: 0,
            aborted: 0,
            max_steps: 0,
        }
    }

    pub fn record(&mut self, task: &Task, r: &EpisodeResult) {
        self.episodes += 1;
        self.successes += r.success as u64;
        self.total_steps += r.steps_used as u64;
        self.max_steps = self.max_steps.max(r.steps_used as u64);
        let t = self.per_type.entry(task.task_type).or_default();
        t.episodes += 1;
        t.successes += r.success as u64;
        self.high_retrievals += r.high_retrievals as u64;
        self.low_retrievals += r.low_retrievals as u64;
        self.model_calls += r.model_calls as u64;
        self.aborted += r.aborted.is_some() as u64;
    }

    /// Pools another run's counts into this one. With equal episode counts
    /// per seed, the pooled rate is the mean of the per-seed rates.
    pub fn merge(&mut self, other: &EvalMetrics) {
        self.episodes += other.episodes;
        self.successes += other.successes;
        self.total_steps += other.total_steps;
        self.max_steps = self.max_steps.max(other.max_steps);
        for (ty, c) in &other.per_type {
            let t = self.per_type.entry(*ty).or_default();
            t.episodes += c.episodes;
            t.successes += c.successes;
        }
        self.high_retrievals += other.high_retrievals;
        self.low_retrievals += other.low_retrievals;
        self.model_calls += other.model_calls;
        self.aborted += other.aborted;
    }

    /// `None` when there were no episodes.
    pub fn success_rate(&self) -> Option<SuccessRate> {
        (self.episodes > 0).then(|| Ratio::new(self.successes, self.episodes))
    }

    pub fn mean_steps(&self) -> Option<Ratio<u64>> {
        (self.episodes > 0).then(|| Ratio::new(self.total_steps, self.episodes))
    }

    pub fn success_rate_text(&self) -> String {
        self.success_rate().map_or_else(|| "n/a".into(), format_percent)
    }

    pub fn mean_steps_text(&self) -> String {
        self.mean_steps().map_or_else(|| "n/a".into(), |m| format_decimal(m, 2))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let _ = writeln!(s, "label={}", self.label);
        let _ = writeln!(s, "env={}", self.env);
        let _ = writeln!(s, "seeds={}", seeds.join(","));
        let _ = writeln!(s, "episodes={}", self.episodes);
        let _ = writeln!(s, "successes={}", self.successes);
        let _ = writeln!(s, "success_rate={}", self.success_rate_text());
        let _ = writeln!(s, "total_steps={}", self.total_steps);
        let _ = writeln!(s, "mean_steps={}", self.mean_steps_text());
        let _ = writeln!(s, "max_steps={}", self.max_steps);
        let _ = writeln!(s, "high_retrievals={}", self.high_retrievals);
        let _ = writeln!(s, "low_retrievals={}", self.low_retrievals);
        let _ = writeln!(s, "model_calls={}", self.model_calls);
        let _ = writeln!(s, "aborted={}", self.aborted);
        for (ty, c) in &self.per_type {
            let _ = writeln!(s, "type.{ty}={}/{}", c.successes, c.episodes);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, MetricsParseError> {
        let err = |m: String| MetricsParseError(m);
        let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
        let mut per_type = BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| err(format!("no `=` in {line:?}")))?;
            if let Some(ty) = k.strip_prefix("type.") {
                let ty = TaskType::parse(ty).ok_or_else(|| err(format!("unknown task type {ty:?}")))?;
                let (a, b) = v.split_once('/').ok_or_else(|| err(format!("bad type count {v:?}")))?;
                let count = TypeCount {
                    successes: a.parse().map_err(|_| err(format!("bad count {a:?}")))?,
                    episodes: b.parse().map_err(|_| err(format!("bad count {b:?}")))?,
                };
                per_type.insert(ty, count);
            } else {
                fields.insert(k, v);
            }
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| err(format!("missing {k}")));
        let int = |k: &str| -> Result<u64, MetricsParseError> {
            get(k)?.parse().map_err(|_| err(format!("bad integer for {k}")))
        };
        let seeds = get("seeds")?;
        let seeds = if seeds.is_empty() {
            Vec::new()
        } else {
            seeds
                .split(',')
                .map(|s| s.parse().map_err(|_| err(format!("bad seed {s:?}"))))
                .collect::<Result<_, _>>()?
        };
        let m = EvalMetrics {
            label: get("label")?.into(),
            env: get("env")?.into(),
            seeds,
            episodes: int("episodes")?,
            successes: int("successes")?,
            total_steps: int("total_steps")?,
            per_type,
            high_retrievals: int("high_retrievals")?,
            low_retrievals: int("low_retrievals")?,
            model_calls: int("model_calls")?,
            aborted: int("aborted")?,
            max_steps: int("max_steps")?,
        };
        m.check().map_err(err)?;
        Ok(m)
    }

    /// Overall counts must equal the sums of the per-type counts.
    pub fn check(&self) -> Result<(), String> {
        let s: u64 = self.per_type.values().map(|c| c.successes).sum();
        let e: u64 = self.per_type.values().map(|c| c.episodes).sum();
        if s != self.successes || e != self.episodes {
            return Err(format!(
                "per-type counts {s}/{e} disagree with overall {}/{}",
                self.successes, self.episodes
            ));
        }
        if self.successes > self.episodes {
            return Err("more successes than episodes".into());
        }
        Ok(())
    }
}

/// Fixed-width table with one row per metrics record, sorted by label.
pub fn summary_table(rows: &[EvalMetrics]) -> String {
    let mut rows: Vec<&EvalMetrics> = rows.iter().collect();
    rows.sort_by(|a, b| a.label.cmp(&b.label));
    let header = ["label", "env", "episodes", "successes", "success_rate", "mean_steps", "high_retr", "low_retr"];
    let cells: Vec<[String; 8]> = rows
        .iter()
        .map(|m| {
            [
                m.label.clone(),
                m.env.clone(),
                m.episodes.to_string(),
                m.successes.to_string(),
                m.success_rate_text(),
                m.mean_steps_text(),
                m.high_retrievals.to_string(),
                m.low_retrievals.to_string(),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let line = |row: &[&str]| -> String {
        let parts: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        format!("{}\n", parts.join(" | ").trim_end())
    };
    let mut out = line(&header);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&format!("{}\n", rule.join("-+-")));
    for row in &cells {
        let r: Vec<&str> = row.iter().map(String::as_str).collect();
        out.push_str(&line(&r));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Split, Trajectory};
    use proptest::prelude::*;

    #[test]
    fn percent_rounding_examples() {
        assert_eq!(format_percent(Ratio::new(1, 3)), "33.3%");
        assert_eq!(format_percent(Ratio::new(2, 3)), "66.7%");
        assert_eq!(format_percent(Ratio::new(1, 8)), "12.5%");
        assert_eq!(format_percent(Ratio::new(1, 16)), "6.3%");
        assert_eq!(format_percent(Ratio::new(6, 6)), "100.0%");
        assert_eq!(format_percent(Ratio::new(0, 7)), "0.0%");
        assert_eq!(format_decimal(Ratio::new(35, 6), 2), "5.83");
        assert_eq!(format_decimal(Ratio::new(7, 2), 0), "4");
    }

    proptest! {
        // Oracle: exact integer arithmetic on tenths of a percent, compared
        // against the floating-point rendering away from rounding ties.
        #[test]
        fn percent_matches_float_rendering(s in 0u64..500, extra in 0u64..500) {
            let e = s + extra + 1;
            prop_assume!((2000 * s) % (2 * e) != e);
            let f = 100.0 * s as f64 / e as f64;
            prop_assert_eq!(format_percent(Ratio::new(s, e)), format!("{f:.1}%"));
        }
    }

    fn result(success: bool, steps: usize) -> EpisodeResult {
        EpisodeResult {
            trajectory: Trajectory::new("t"),
            subgoals_dispatched: Vec::new(),
            success,
            steps_used: steps,
            high_retrievals: 2,
            low_retrievals: 3,
            model_calls: 7,
            aborted: None,
        }
    }

    fn sample() -> EvalMetrics {
        let a = Task::new("a", "put a book on the shelf", TaskType::PickAndPlace, Split::Test).unwrap();
        let b = Task::new("b", "heat an egg and place it on the desk", TaskType::PickHeatThenPlace, Split::Test).unwrap();
        let mut m = EvalMetrics::new("no_low", "text_house", vec![0, 1]);
        m.record(&a, &result(true, 5));
        m.record(&b, &result(false, 30));
        m.record(&b, &result(true, 8));
        m
    }

    #[test]
    fn record_and_text_round_trip() {
        let m = sample();
        assert_eq!(m.success_rate(), Some(Ratio::new(2, 3)));
        assert_eq!(m.success_rate_text(), "66.7%");
        assert_eq!(m.mean_steps_text(), "14.33");
        assert_eq!(m.max_steps, 30);
        assert_eq!(m.per_type[&TaskType::PickHeatThenPlace], TypeCount { successes: 1, episodes: 2 });
        m.check().unwrap();
        assert_eq!(EvalMetrics::from_text(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn inconsistent_counts_are_rejected() {
        let text = sample().to_text().replace("successes=2", "successes=3");
        assert!(EvalMetrics::from_text(&text).is_err());
    }

    #[test]
    fn table_sorted_by_label() {
        let mut a = sample();
        a.label = "no_memory".into();
        let b = sample();
        let mut c = sample();
        c.label = "full".into();
        let t = summary_table(&[a, b, c]);
        let labels: Vec<&str> = t.lines().skip(2).map(|l| l.split(' ').next().unwrap()).collect();
        assert_eq!(labels, ["full", "no_low", "no_memory"]);
        assert_eq!(summary_table(&[sample()]).lines().count(), 3);
    }

    #[test]
    fn ablation_levels() {
        assert!(Ablation::Full.uses_high() && Ablation::Full.uses_low());
        assert!(!Ablation::NoHigh.uses_high() && Ablation::NoHigh.uses_low());
        assert!(Ablation::NoLow.uses_high() && !Ablation::NoLow.uses_low());
        assert!(!Ablation::NoMemory.uses_high() && !Ablation::NoMemory.uses_low());
        assert_eq!(Ablation::parse("no_high"), Some(Ablation::NoHigh));
    }
}
