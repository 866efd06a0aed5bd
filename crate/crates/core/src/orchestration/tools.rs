//! Operations wrapped as tools: metadata for the controller prompt, a
//! handler, and a router that turns every call into a uniform result.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgKind {
    Int,
    Str,
    Bool,
}

impl ArgKind {
    fn accepts(self, v: &Value) -> bool {
        match self {
            ArgKind::Int => v.as_i64().is_some(),
            ArgKind::Str => v.is_string(),
            ArgKind::Bool => v.is_boolean(),
        }
    }

    fn name(self) -> &'static str {
        match self {
            ArgKind::Int => "integer",
            ArgKind::Str => "string",
            ArgKind::Bool => "boolean",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArgSpec {
    pub name: String,
    pub kind: ArgKind,
    pub required: bool,
}

impl ArgSpec {
    pub fn required(name: &str, kind: ArgKind) -> Self {
        ArgSpec {
            name: name.into(),
            kind,
            required: true,
        }
    }

    pub fn optional(name: &str, kind: ArgKind) -> Self {
        ArgSpec {
            name: name.into(),
            kind,
            required: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolStatus {
    Success,
    Failure,
    Info,
}

impl ToolStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ToolStatus::Success => "success",
            ToolStatus::Failure => "failure",
            ToolStatus::Info => "info",
        }
    }
}

/// What a handler returns; the router adds the tool name.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolOutput {
    pub status: ToolStatus,
    pub payload: Value,
    pub summary_line: String,
    /// Ends the session.
    pub terminal: bool,
}

impl ToolOutput {
    pub fn new(status: ToolStatus, payload: Value, summary_line: impl Into<String>) -> Self {
        ToolOutput {
            status,
            payload,
            summary_line: summary_line.into(),
            terminal: false,
        }
    }
}

/// Standardized result of a routed call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResult {
    pub tool: String,
    pub status: ToolStatus,
    pub payload: Value,
    pub summary_line: String,
    #[serde(default)]
    pub terminal: bool,
}

pub type Handler<S> = Arc<dyn Fn(&mut S, &Map<String, Value>) -> Result<ToolOutput> + Send + Sync>;

pub struct ToolSpec<S> {
    pub name: String,
    pub description: String,
    pub args: Vec<ArgSpec>,
    pub handler: Handler<S>,
}

impl<S> Clone for ToolSpec<S> {
    fn clone(&self) -> Self {
        ToolSpec {
            name: self.name.clone(),
            description: self.description.clone(),
            args: self.args.clone(),
            handler: Arc::clone(&self.handler),
        }
    }
}

impl<S> ToolSpec<S> {
    pub fn new(
        name: &str,
        description: &str,
        args: Vec<ArgSpec>,
        handler: impl Fn(&mut S, &Map<String, Value>) -> Result<ToolOutput> + Send + Sync + 'static,
    ) -> Self {
        ToolSpec {
            name: name.into(),
            description: description.into(),
            args,
            handler: Arc::new(handler),
        }
    }

    /// `name(arg: kind, ...)` as shown to the controller.
    pub fn manifest_line(&self) -> String {
        let args: Vec<String> = self
            .args
            .iter()
            .map(|a| {
                format!(
                    "{}{}: {}",
                    a.name,
                    if a.required { "" } else { "?" },
                    a.kind.name()
                )
            })
            .collect();
        format!("{}({}): {}", self.name, args.join(", "), self.description)
    }

    fn check_args(&self, args: &Map<String, Value>) -> std::result::Result<(), String> {
        for a in &self.args {
            match args.get(&a.name) {
                None | Some(Value::Null) if a.required => {
                    return Err(format!("missing required argument `{}`", a.name))
                }
                Some(v) if !v.is_null() && !a.kind.accepts(v) => {
                    return Err(format!("argument `{}` must be a {}", a.name, a.kind.name()))
                }
                _ => {}
            }
        }
        if let Some(extra) = args
            .keys()
            .find(|k| !self.args.iter().any(|a| &a.name == *k))
        {
            return Err(format!("unknown argument `{extra}`"));
        }
        Ok(())
    }
}

impl<S> std::fmt::Debug for ToolSpec<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ToolSpec")
            .field("name", &self.name)
            .field("args", &self.args)
            .finish()
    }
}

/// Tools in registration order.
pub struct Registry<S> {
    tools: Vec<ToolSpec<S>>,
}

impl<S> Default for Registry<S> {
    fn default() -> Self {
        Registry { tools: Vec::new() }
    }
}

impl<S> Registry<S> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, spec: ToolSpec<S>) -> Result<()> {
        if spec.description.trim().is_empty() {
            return Err(Error::Tool(format!(
                "tool `{}` needs a description",
                spec.name
            )));
        }
        if self.get(&spec.name).is_some() {
            return Err(Error::Tool(format!(
                "tool `{}` is already registered",
                spec.name
            )));
        }
        self.tools.push(spec);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ToolSpec<S>> {
        self.tools.iter().find(|t| t.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.tools.iter().map(|t| t.name.as_str()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    pub fn manifest(&self) -> String {
        self.tools
            .iter()
            .map(|t| format!("- {}\n", t.manifest_line()))
            .collect()
    }

    /// Invokes a tool. Unknown tools, schema violations, handler errors and
    /// handler panics all come back as failure results.
    pub fn route(&self, state: &mut S, tool: &str, args: &Map<String, Value>) -> ToolResult {
        let failure = |message: String| ToolResult {
            tool: tool.to_string(),
            status: ToolStatus::Failure,
            payload: Value::String(message.clone()),
            summary_line: message,
            terminal: false,
        };
        let Some(spec) = self.get(tool) else {
            return failure(format!("unknown tool `{tool}`"));
        };
        if let Err(e) = spec.check_args(args) {
            return failure(format!("{tool}: {e}"));
        }
        match catch_unwind(AssertUnwindSafe(|| (spec.handler)(state, args))) {
            Ok(Ok(out)) => ToolResult {
                tool: tool.to_string(),
                status: out.status,
                payload: out.payload,
                summary_line: out.summary_line,
                terminal: out.terminal,
            },
            Ok(Err(e)) => failure(format!("{tool}: {e}")),
            Err(panic) => {
                let what = panic
                    .downcast_ref::<&str>()
                    .map(|s| s.to_string())
                    .or_else(|| panic.downcast_ref::<String>().cloned())
                    .unwrap_or_else(|| "unknown panic".into());
                failure(format!("{tool} panicked: {what}"))
            }
        }
    }
}
