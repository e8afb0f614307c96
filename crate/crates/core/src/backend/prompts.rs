//! Editable prompt templates for the external backend.
//!
//! A template may reference `{payload}` (pretty-printed request payload),
//! `{kind}`, and any top-level scalar field of the payload by name. Other
//! braces are left untouched.

use std::collections::BTreeMap;
use std::path::Path;

use super::RequestKind;
use crate::error::Result;

const KINDS: [(RequestKind, &str, &str); 6] = [
    (RequestKind::GeneratePersona, "generate_persona.txt", include_str!("../../templates/generate_persona.txt")),
    (RequestKind::PlanStep, "plan_step.txt", include_str!("../../templates/plan_step.txt")),
    (RequestKind::WriteReport, "write_report.txt", include_str!("../../templates/write_report.txt")),
    (RequestKind::Review, "review.txt", include_str!("../../templates/review.txt")),
    (RequestKind::MetaReview, "meta_review.txt", include_str!("../../templates/meta_review.txt")),
    (RequestKind::Embed, "embed.txt", include_str!("../../templates/embed.txt")),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    templates: BTreeMap<RequestKind, String>,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            templates: KINDS.iter().map(|(k, _, body)| (*k, body.to_string())).collect(),
        }
    }
}

impl PromptTemplates {
    /// Built-in templates, overridden by any same-named file found in `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut t = PromptTemplates::default();
        for (kind, file, _) in KINDS {
            let path = dir.join(file);
            if path.exists() {
                t.templates.insert(kind, std::fs::read_to_string(path)?);
            }
        }
        Ok(t)
    }

    pub fn render(&self, kind: RequestKind, payload: &serde_json::Value) -> String {
        let template = &self.templates[&kind];
        let mut vars: BTreeMap<String, String> = BTreeMap::new();
        vars.insert("kind".into(), format!("{kind:?}"));
        vars.insert(
            "payload".into(),
            serde_json::to_string_pretty(payload).expect("payload serializes"),
        );
        if let Some(obj) = payload.as_object() {
            for (k, v) in obj {
                let s = match v {
                    serde_json::Value::String(s) => s.clone(),
                    serde_json::Value::Number(n) => n.to_string(),
                    serde_json::Value::Bool(b) => b.to_string(),
                    _ => continue,
                };
                vars.entry(k.clone()).or_insert(s);
            }
        }
        substitute(template, &vars)
    }
}

fn substitute(template: &str, vars: &BTreeMap<String, String>) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let name_len = after
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(after.len());
        let name = &after[..name_len];
        match (after[name_len..].starts_with('}'), vars.get(name)) {
            (true, Some(value)) if !name.is_empty() => {
                out.push_str(value);
                rest = &after[name_len + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}
