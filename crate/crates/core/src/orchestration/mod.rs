//! Tool-based orchestration of a synthesis session: every pipeline
//! operation is a tool, a controller model picks the next one, and finished
//! trajectories feed a statistics-gated memory pool.

mod controller;
mod memory;
mod session;
mod tools;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use controller::{fallback_after, next_tool, parse_tool_choice, ToolChoice, FALLBACK_SEQUENCE};
pub use memory::{lower_median, stats_of, MemoryPool, PoolStats, DEFAULT_POOL_CAP};
pub use session::{
    builtin_registry, run_session, Artifacts, SessionConfig, SessionOutcome, SessionState,
    SynthesisRequest, DEFAULT_MAX_STEPS,
};
pub use tools::{
    ArgKind, ArgSpec, Handler, Registry, ToolOutput, ToolResult, ToolSpec, ToolStatus,
};

use crate::validation::Verdict;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub tool: String,
    pub args_digest: String,
    pub outcome: ToolStatus,
    pub summary_line: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub function_name: String,
    pub category: String,
    pub steps: Vec<TrajectoryStep>,
    pub tool_counts: BTreeMap<String, usize>,
    pub total_count: usize,
    pub summary: String,
    pub verdict: Verdict,
}

impl TrajectoryRecord {
    pub fn new(
        function_name: &str,
        category: &str,
        steps: Vec<TrajectoryStep>,
        summary: String,
        verdict: Verdict,
    ) -> Self {
        let mut tool_counts = BTreeMap::new();
        for s in &steps {
            *tool_counts.entry(s.tool.clone()).or_insert(0) += 1;
        }
        TrajectoryRecord {
            function_name: function_name.to_string(),
            category: category.to_string(),
            total_count: steps.len(),
            steps,
            tool_counts,
            summary,
            verdict,
        }
    }

    /// A record of `steps` stop calls, for tests and tooling that only
    /// care about counts.
    pub fn synthetic(function_name: &str, category: &str, steps: usize) -> Self {
        let steps = (0..steps)
            .map(|_| TrajectoryStep {
                tool: "stop".into(),
                args_digest: String::new(),
                outcome: ToolStatus::Success,
                summary_line: String::new(),
            })
            .collect();
        Self::new(function_name, category, steps, String::new(), Verdict::Fail)
    }

    /// Counts agree with the step list.
    pub fn is_consistent(&self) -> bool {
        let mut counts = BTreeMap::new();
        for s in &self.steps {
            *counts.entry(s.tool.clone()).or_insert(0usize) += 1;
        }
        counts == self.tool_counts
            && self.total_count == self.steps.len()
            && counts.values().sum::<usize>() == self.total_count
    }

    pub fn tool_sequence(&self) -> Vec<&str> {
        self.steps.iter().map(|s| s.tool.as_str()).collect()
    }

    pub fn to_json(&self) -> crate::Result<String> {
        crate::util::to_json_pretty(self)
    }
}
