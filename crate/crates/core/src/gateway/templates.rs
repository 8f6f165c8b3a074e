//! Meta-prompt templates with `{{slot}}` placeholders.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template {template}: unresolved slot {{{{{slot}}}}}")]
    UnresolvedSlot { template: String, slot: String },
    #[error("cannot read template {path}: {message}")]
    Read { path: String, message: String },
}

fn slot_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| Regex::new(r"\{\{\s*([A-Za-z_][A-Za-z0-9_]*)\s*\}\}").expect("valid regex"))
}

/// Substitute `{{name}}` slots. Every slot in the template must be bound.
pub fn render(name: &str, template: &str, slots: &BTreeMap<String, String>) -> Result<String, TemplateError> {
    if let Some(missing) = slot_pattern()
        .captures_iter(template)
        .map(|c| c[1].to_string())
        .find(|s| !slots.contains_key(s))
    {
        return Err(TemplateError::UnresolvedSlot {
            template: name.to_string(),
            slot: missing,
        });
    }
    Ok(slot_pattern()
        .replace_all(template, |c: &regex::Captures<'_>| slots[&c[1]].clone())
        .into_owned())
}

/// Slot names referenced by a template, in order of first appearance.
pub fn slot_names(template: &str) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for c in slot_pattern().captures_iter(template) {
        if !names.iter().any(|n| n == &c[1]) {
            names.push(c[1].to_string());
        }
    }
    names
}

/// Global context plus the classify, gradient and edit meta-prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaPromptSet {
    pub context: String,
    /// Slots: `prompt`, `clause`.
    pub classify_template: String,
    /// Slots: `prompt`, `errors`.
    pub gradient_template: String,
    /// Slots: `prompt`, `gradient`, `k`.
    pub edit_template: String,
}

impl Default for MetaPromptSet {
    fn default() -> Self {
        Self {
            context: include_str!("../../templates/context.txt").trim_end().to_string(),
            classify_template: include_str!("../../templates/classify.txt").to_string(),
            gradient_template: include_str!("../../templates/gradient.txt").to_string(),
            edit_template: include_str!("../../templates/edit.txt").to_string(),
        }
    }
}

/// File overrides for a [`MetaPromptSet`]; unset entries keep the built-in text.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplatePaths {
    pub context: Option<String>,
    pub classify: Option<String>,
    pub gradient: Option<String>,
    pub edit: Option<String>,
}

fn read(path: &str) -> Result<String, TemplateError> {
    fs::read_to_string(Path::new(path)).map_err(|e| TemplateError::Read {
        path: path.to_string(),
        message: e.to_string(),
    })
}

impl MetaPromptSet {
    pub fn load(paths: &TemplatePaths) -> Result<Self, TemplateError> {
        let mut set = Self::default();
        if let Some(p) = &paths.context {
            set.context = read(p)?.trim_end().to_string();
        }
        if let Some(p) = &paths.classify {
            set.classify_template = read(p)?;
        }
        if let Some(p) = &paths.gradient {
            set.gradient_template = read(p)?;
        }
        if let Some(p) = &paths.edit {
            set.edit_template = read(p)?;
        }
        Ok(set)
    }
}

pub(crate) fn bind<const N: usize>(pairs: [(&str, &str); N]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_bound_slots() {
        let out = render("t", "a {{x}} b {{ y }} {{x}}", &bind([("x", "1"), ("y", "2")])).unwrap();
        assert_eq!(out, "a 1 b 2 1");
    }

    #[test]
    fn unresolved_slot_is_an_error() {
        let err = render("classify", "{{prompt}} {{clause}}", &bind([("prompt", "p")])).unwrap_err();
        assert_eq!(
            err,
            TemplateError::UnresolvedSlot {
                template: "classify".into(),
                slot: "clause".into()
            }
        );
    }

    #[test]
    fn slot_values_are_not_rescanned() {
        let out = render("t", "{{a}}", &bind([("a", "{{b}}")])).unwrap();
        assert_eq!(out, "{{b}}");
    }

    #[test]
    fn default_templates_use_expected_slots() {
        let m = MetaPromptSet::default();
        assert_eq!(slot_names(&m.classify_template), ["prompt", "clause"]);
        assert_eq!(slot_names(&m.gradient_template), ["prompt", "errors"]);
        assert_eq!(slot_names(&m.edit_template), ["prompt", "gradient", "k"]);
        assert!(slot_names(&m.context).is_empty());
    }
}
