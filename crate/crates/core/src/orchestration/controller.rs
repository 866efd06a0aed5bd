//! Choosing the next tool with the controller model.

use serde_json::{Map, Value};

use super::{Registry, TrajectoryRecord, TrajectoryStep};
use crate::characterize::FunctionDeclaration;
use crate::llm::{extract_json, Gateway, Message, Prompt};

/// Tool order used when the controller twice fails to name a tool.
pub const FALLBACK_SEQUENCE: [&str; 4] = ["plan_agent", "code_agent", "validate_agent", "stop"];

#[derive(Debug, Clone, PartialEq)]
pub struct ToolChoice {
    pub tool: String,
    pub args: Map<String, Value>,
    /// The choice came from the fallback sequence.
    pub fallback: bool,
}

/// Next tool of the fallback sequence after `last`; tools outside the
/// sequence restart it.
pub fn fallback_after(last: Option<&str>) -> &'static str {
    match last.and_then(|t| FALLBACK_SEQUENCE.iter().position(|s| *s == t)) {
        Some(i) if i + 1 < FALLBACK_SEQUENCE.len() => FALLBACK_SEQUENCE[i + 1],
        Some(_) => "stop",
        None => FALLBACK_SEQUENCE[0],
    }
}

fn word_at(text: &str, at: usize, len: usize) -> bool {
    let b = text.as_bytes();
    let ident = |c: u8| c.is_ascii_alphanumeric() || c == b'_';
    (at == 0 || !ident(b[at - 1])) && (at + len >= b.len() || !ident(b[at + len]))
}

/// Reads a tool choice from a reply: a JSON object with `tool` and
/// optional `args`, or else the first registered tool named in the text.
pub fn parse_tool_choice(reply: &str, names: &[&str]) -> Option<(String, Map<String, Value>)> {
    if let Some(Value::Object(obj)) = extract_json(reply) {
        if let Some(tool) = obj.get("tool").and_then(Value::as_str) {
            if names.contains(&tool) {
                let args = match obj.get("args") {
                    Some(Value::Object(a)) => a.clone(),
                    _ => Map::new(),
                };
                return Some((tool.to_string(), args));
            }
            return None;
        }
    }
    names
        .iter()
        .filter_map(|n| {
            reply
                .match_indices(n)
                .find(|(at, _)| word_at(reply, *at, n.len()))
                .map(|(at, _)| (at, *n))
        })
        .min()
        .map(|(_, n)| (n.to_string(), Map::new()))
}

fn controller_prompt<S>(
    gateway: &Gateway,
    decl: &FunctionDeclaration,
    steps: &[TrajectoryStep],
    references: &[&TrajectoryRecord],
    registry: &Registry<S>,
    failures: u32,
) -> Prompt {
    let system = format!(
        "You control a tool-based session that adds a new native SQL function to a database code base.\n\
         Task: controller\n\
         Pick the next tool. Reply with one JSON object {{\"tool\": \"<name>\", \"args\": {{...}}}}.\n\n\
         Tools:\n{}",
        registry.manifest()
    );
    let mut user = format!("Function: {}\nCategory: {}\n", decl.name, decl.category);
    match steps.last() {
        Some(s) => user.push_str(&format!("Last step: {} ({})\n", s.tool, s.outcome.as_str())),
        None => user.push_str("Last step: none\n"),
    }
    user.push_str(&format!("Failures so far: {failures}\n\nTrajectory:\n"));
    for (i, s) in steps.iter().enumerate() {
        user.push_str(&format!(
            "{}. {} [{}] {}\n",
            i + 1,
            s.tool,
            s.outcome.as_str(),
            s.summary_line
        ));
    }
    if !references.is_empty() {
        user.push_str("\nReference trajectories of this category:\n");
        for r in references {
            user.push_str(&format!(
                "- {} ({:?}, {} steps): {}\n  {}\n",
                r.function_name,
                r.verdict,
                r.total_count,
                r.tool_sequence().join(" > "),
                r.summary
            ));
        }
    }
    gateway.prompt("controller", system, user)
}

/// Asks the controller for the next tool, retrying once with a
/// correction, then falling back to the static sequence.
pub fn next_tool<S>(
    gateway: &Gateway,
    decl: &FunctionDeclaration,
    steps: &[TrajectoryStep],
    references: &[&TrajectoryRecord],
    registry: &Registry<S>,
    failures: u32,
) -> ToolChoice {
    let names = registry.names();
    let mut prompt = controller_prompt(gateway, decl, steps, references, registry, failures);
    let first = gateway.complete(&prompt);
    match &first {
        Ok(reply) => {
            if let Some((tool, args)) = parse_tool_choice(reply, &names) {
                return ToolChoice {
                    tool,
                    args,
                    fallback: false,
                };
            }
            log::warn!("controller reply names no registered tool; asking again");
            prompt.messages.push(Message {
                role: "assistant".into(),
                content: reply.clone(),
            });
            prompt.messages.push(Message {
                role: "user".into(),
                content: format!(
                    "That reply did not name a registered tool. Answer with {{\"tool\": ..., \"args\": {{...}}}} using one of: {}.",
                    names.join(", ")
                ),
            });
            if let Ok(reply) = gateway.complete(&prompt) {
                if let Some((tool, args)) = parse_tool_choice(&reply, &names) {
                    return ToolChoice {
                        tool,
                        args,
                        fallback: false,
                    };
                }
            }
        }
        Err(e) => log::warn!("controller call failed: {e}"),
    }
    let last = steps.last().map(|s| s.tool.as_str());
    let mut tool = fallback_after(last);
    if !names.contains(&tool) {
        tool = "stop";
    }
    log::warn!("controller unusable; falling back to {tool}");
    ToolChoice {
        tool: tool.to_string(),
        args: Map::new(),
        fallback: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const NAMES: [&str; 3] = ["code_agent", "validate_agent", "stop"];

    #[test]
    fn parses_json_and_free_text() {
        let (t, a) =
            parse_tool_choice("{\"tool\": \"validate_agent\", \"args\": {}}", &NAMES).unwrap();
        assert_eq!((t.as_str(), a.len()), ("validate_agent", 0));
        let (t, _) = parse_tool_choice("I would call stop now, not code_agent.", &NAMES).unwrap();
        assert_eq!(t, "stop");
        assert!(parse_tool_choice("{\"tool\": \"dance\"}", &NAMES).is_none());
        assert!(parse_tool_choice("no idea", &NAMES).is_none());
        assert!(parse_tool_choice("nonstop", &NAMES).is_none());
    }

    #[test]
    fn fallback_walks_the_sequence() {
        assert_eq!(fallback_after(None), "plan_agent");
        assert_eq!(fallback_after(Some("plan_agent")), "code_agent");
        assert_eq!(fallback_after(Some("code_agent")), "validate_agent");
        assert_eq!(fallback_after(Some("validate_agent")), "stop");
        assert_eq!(fallback_after(Some("read_file")), "plan_agent");
    }
}
