use std::fmt::Write as _;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{Mode, ScriptedTask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub id: String,
    pub mode: Mode,
    pub answer: Option<String>,
    pub gold_answer: String,
    pub correct: bool,
    pub interventions: u32,
    pub completion_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl TaskReport {
    pub fn errored(task: &ScriptedTask, error: String) -> Self {
        TaskReport {
            id: task.id.clone(),
            mode: task.mode,
            answer: None,
            gold_answer: task.gold_answer.clone(),
            correct: false,
            interventions: 0,
            completion_seconds: 0.0,
            error: Some(error),
        }
    }
}

/// `num / den` in tenths, rounded half up. `den` must be non-zero.
pub fn ratio_tenths(num: u64, den: u64) -> u64 {
    (num * 20 + den) / (den * 2)
}

pub fn format_tenths(t: u64) -> String {
    format!("{}.{}", t / 10, t % 10)
}

fn ser_tenths<S: Serializer>(t: &u64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(*t as f64 / 10.0)
}

fn de_tenths<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
    let v = f64::deserialize(d)?;
    Ok((v * 10.0).round().max(0.0) as u64)
}

/// Aggregate over one mode, or over the whole suite when `mode` is None.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: Option<Mode>,
    pub tasks: u64,
    pub correct: u64,
    pub errored: u64,
    /// Percentage correct, in tenths of a percent.
    #[serde(rename = "accuracy", serialize_with = "ser_tenths", deserialize_with = "de_tenths")]
    pub accuracy_tenths: u64,
    #[serde(rename = "mean_interventions", serialize_with = "ser_tenths", deserialize_with = "de_tenths")]
    pub mean_interventions_tenths: u64,
    pub mean_completion_seconds: f64,
}

impl ModeSummary {
    fn over<'a>(mode: Option<Mode>, reports: impl Iterator<Item = &'a TaskReport>) -> Option<Self> {
        let (mut tasks, mut correct, mut errored, mut interventions, mut seconds) = (0u64, 0u64, 0u64, 0u64, 0.0);
        for r in reports {
            tasks += 1;
            correct += u64::from(r.correct);
            errored += u64::from(r.error.is_some());
            interventions += u64::from(r.interventions);
            seconds += r.completion_seconds;
        }
        (tasks > 0).then(|| ModeSummary {
            mode,
            tasks,
            correct,
            errored,
            accuracy_tenths: ratio_tenths(correct * 100, tasks),
            mean_interventions_tenths: ratio_tenths(interventions, tasks),
            mean_completion_seconds: seconds / tasks as f64,
        })
    }

    pub fn label(&self) -> &'static str {
        self.mode.map_or("OVERALL", Mode::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub tasks: Vec<TaskReport>,
    pub modes: Vec<ModeSummary>,
    pub overall: ModeSummary,
    pub errored: Vec<String>,
}

impl SuiteReport {
    /// Panics on an empty list; callers reject empty suites first.
    pub fn from_tasks(tasks: Vec<TaskReport>) -> Self {
        let modes = Mode::ALL
            .iter()
            .filter_map(|&m| ModeSummary::over(Some(m), tasks.iter().filter(|t| t.mode == m)))
            .collect();
        let overall = ModeSummary::over(None, tasks.iter()).expect("suite is non-empty");
        let errored = tasks.iter().filter(|t| t.error.is_some()).map(|t| t.id.clone()).collect();
        SuiteReport { tasks, modes, overall, errored }
    }

    pub fn mode(&self, mode: Mode) -> Option<&ModeSummary> {
        self.modes.iter().find(|m| m.mode == Some(mode))
    }

    pub fn has_errors(&self) -> bool {
        !self.errored.is_empty()
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Per-task rows followed by the per-mode summary table.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let id_w = self.tasks.iter().map(|t| t.id.len()).max().unwrap_or(0).max(4);
        let _ = writeln!(out, "{:<id_w$}  {:<12}  {:<10}  {:<10}  {:>7}  {:>13}  {:>9}", "task", "mode", "answer", "gold", "correct", "interventions", "time_s");
        for t in &self.tasks {
            let answer = t.answer.as_deref().unwrap_or("-");
            let correct = if t.error.is_some() { "ERROR" } else if t.correct { "yes" } else { "no" };
            let _ = writeln!(
                out,
                "{:<id_w$}  {:<12}  {:<10}  {:<10}  {:>7}  {:>13}  {:>9.3}",
                t.id, t.mode.as_str(), answer, t.gold_answer, correct, t.interventions, t.completion_seconds
            );
        }
        for t in self.tasks.iter().filter(|t| t.error.is_some()) {
            let _ = writeln!(out, "error {}: {}", t.id, t.error.as_deref().unwrap_or_default());
        }
        out.push('\n');
        let _ = writeln!(out, "{:<12}  {:>5}  {:>7}  {:>8}  {:>13}  {:>9}", "mode", "tasks", "correct", "accuracy", "interventions", "time_s");
        for m in self.modes.iter().chain(std::iter::once(&self.overall)) {
            let _ = writeln!(
                out,
                "{:<12}  {:>5}  {:>7}  {:>8}  {:>13}  {:>9.3}",
                m.label(),
                m.tasks,
                m.correct,
                format_tenths(m.accuracy_tenths),
                format_tenths(m.mean_interventions_tenths),
                m.mean_completion_seconds
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tenths_round_half_up() {
        assert_eq!(format_tenths(ratio_tenths(200, 3)), "66.7");
        assert_eq!(format_tenths(ratio_tenths(100, 3)), "33.3");
        assert_eq!(format_tenths(ratio_tenths(100, 8)), "12.5");
        // 1/16 = 6.25 -> 6.3
        assert_eq!(format_tenths(ratio_tenths(100, 16)), "6.3");
        assert_eq!(format_tenths(ratio_tenths(2, 1)), "2.0");
        assert_eq!(format_tenths(ratio_tenths(0, 5)), "0.0");
        assert_eq!(format_tenths(ratio_tenths(500, 5)), "100.0");
    }

    fn report(id: &str, mode: Mode, correct: bool, interventions: u32) -> TaskReport {
        TaskReport {
            id: id.into(),
            mode,
            answer: Some("1".into()),
            gold_answer: "1".into(),
            correct,
            interventions,
            completion_seconds: 0.5,
            error: None,
        }
    }

    #[test]
    fn summary_and_json_round_trip() {
        let r = SuiteReport::from_tasks(vec![
            report("a", Mode::Viscot, true, 2),
            report("b", Mode::Viscot, true, 1),
            report("c", Mode::StandardCot, false, 0),
        ]);
        assert_eq!(r.overall.accuracy_tenths, 667);
        assert_eq!(r.mode(Mode::Viscot).unwrap().mean_interventions_tenths, 15);
        assert!(r.mode(Mode::ZeroShot).is_none());
        let json: serde_json::Value = serde_json::from_str(&r.to_json_string()).unwrap();
        assert_eq!(json["overall"]["accuracy"], 66.7);
        let back: SuiteReport = serde_json::from_str(&r.to_json_string()).unwrap();
        assert_eq!(back, r);
        let text = r.to_text();
        assert!(text.lines().any(|l| l.starts_with("OVERALL") && l.contains("66.7")));
    }

    #[test]
    fn single_task_mean_interventions() {
        let r = SuiteReport::from_tasks(vec![report("a", Mode::Viscot, true, 2)]);
        assert_eq!(format_tenths(r.overall.mean_interventions_tenths), "2.0");
    }
}
