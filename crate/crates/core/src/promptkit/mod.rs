//! Prompt rendering and completion parsing.
//!
//! A prompt has four sections: task description, entity definitions, solved examples and the
//! query. Outputs are rendered as `{type:[value, value], type:[]}` with one key per schema type.

mod parse;

use serde::{Deserialize, Serialize};

use crate::corpus::{EntitySchema, LabeledSentence, NerOutput};

pub use parse::{parse_output, Grounding, ParseError, ParsedOutput};

pub const DEFAULT_TEMPLATE_ID: &str = "ragner-default-v1";
const DEFAULT_TEMPLATE: &str = include_str!("../../data/templates/ragner-default-v1.txt");
const DEFAULT_TASK: &str = include_str!("../../data/templates/ragner-default-v1.task.txt");

const PLACEHOLDERS: [&str; 4] = ["task_description", "entity_definitions", "examples", "query"];

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("example {index} has output keys {found:?}, expected {expected:?}")]
    SchemaMismatch {
        index: usize,
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("template is missing the {{{0}}} placeholder")]
    MissingPlaceholder(&'static str),
}

/// A prompt template with `{task_description}`, `{entity_definitions}`, `{examples}` and
/// `{query}` placeholders. Other braces are literal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub id: String,
    pub body: String,
    pub task_description: String,
}

impl Default for Template {
    fn default() -> Self {
        Self {
            id: DEFAULT_TEMPLATE_ID.to_string(),
            body: DEFAULT_TEMPLATE.to_string(),
            task_description: DEFAULT_TASK.trim_end().to_string(),
        }
    }
}

impl Template {
    pub fn new(id: &str, body: &str, task_description: &str) -> Result<Self, PromptError> {
        for p in PLACEHOLDERS {
            if !body.contains(&format!("{{{p}}}")) {
                return Err(PromptError::MissingPlaceholder(p));
            }
        }
        Ok(Self {
            id: id.to_string(),
            body: body.to_string(),
            task_description: task_description.to_string(),
        })
    }

    /// Single-pass substitution, so placeholder text inside values is never expanded.
    fn fill(&self, values: [&str; 4]) -> String {
        let mut out = String::with_capacity(self.body.len() + values.iter().map(|v| v.len()).sum::<usize>());
        let mut rest = self.body.as_str();
        'scan: while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            for (name, value) in PLACEHOLDERS.iter().zip(values) {
                if let Some(tail) = after.strip_prefix(name).and_then(|t| t.strip_prefix('}')) {
                    out.push_str(value);
                    rest = tail;
                    continue 'scan;
                }
            }
            out.push('{');
            rest = after;
        }
        out.push_str(rest);
        out
    }
}

/// Which end of the example block the most similar example sits at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExampleOrder {
    /// Most similar example last, next to the query.
    #[default]
    AscendingSimilarity,
    DescendingSimilarity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub template_id: String,
    pub task_description: String,
    /// `(type, definition)` in schema order.
    pub entity_definitions: Vec<(String, String)>,
    /// Rendered `(input, output)` pairs in prompt order.
    pub examples: Vec<(String, String)>,
    pub example_order: ExampleOrder,
    pub user_query: String,
    pub rendered: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PromptBuilder {
    pub template: Template,
    pub order: ExampleOrder,
}

impl PromptBuilder {
    pub fn new(template: Template, order: ExampleOrder) -> Self {
        Self { template, order }
    }

    pub fn template_id(&self) -> &str {
        &self.template.id
    }

    /// `examples` come in retrieval order, most similar first.
    pub fn build(
        &self,
        schema: &EntitySchema,
        examples: &[(LabeledSentence, NerOutput)],
        query_text: &str,
    ) -> Result<Prompt, PromptError> {
        let names = schema.names();
        for (index, (_, out)) in examples.iter().enumerate() {
            let found: Vec<String> = out.keys().into_iter().map(String::from).collect();
            if found != names {
                return Err(PromptError::SchemaMismatch {
                    index,
                    expected: names,
                    found,
                });
            }
        }
        let mut rendered_examples: Vec<(String, String)> = examples
            .iter()
            .map(|(s, out)| (s.text(), render_output(out)))
            .collect();
        if self.order == ExampleOrder::AscendingSimilarity {
            rendered_examples.reverse();
        }
        let entity_definitions: Vec<(String, String)> = schema
            .types()
            .iter()
            .map(|t| (t.name.clone(), t.definition.clone()))
            .collect();

        let defs_block = entity_definitions
            .iter()
            .map(|(n, d)| format!("- {n}: {d}"))
            .collect::<Vec<_>>()
            .join("\n");
        let examples_block = rendered_examples
            .iter()
            .map(|(i, o)| format!("Input: {i}\nOutput: {o}"))
            .collect::<Vec<_>>()
            .join("\n\n");
        let rendered = self.template.fill([
            &self.template.task_description,
            &defs_block,
            &examples_block,
            query_text,
        ]);
        Ok(Prompt {
            template_id: self.template.id.clone(),
            task_description: self.template.task_description.clone(),
            entity_definitions,
            examples: rendered_examples,
            example_order: self.order,
            user_query: query_text.to_string(),
            rendered,
        })
    }
}

impl Prompt {
    /// The rendered output of the most similar in-prompt example.
    pub fn nearest_example_output(&self) -> Option<&str> {
        let ex = match self.example_order {
            ExampleOrder::AscendingSimilarity => self.examples.last(),
            ExampleOrder::DescendingSimilarity => self.examples.first(),
        };
        ex.map(|(_, o)| o.as_str())
    }

    pub fn type_names(&self) -> Vec<String> {
        self.entity_definitions.iter().map(|(n, _)| n.clone()).collect()
    }
}

/// `Input: <text>\nOutput: <dict>`.
pub fn render_example(sentence: &LabeledSentence, gold: &NerOutput) -> String {
    format!("Input: {}\nOutput: {}", sentence.text(), render_output(gold))
}

/// `{k1:[v1, v2], k2:[]}` in entry order. Values that would confuse the parser are quoted.
pub fn render_output(out: &NerOutput) -> String {
    let mut s = String::from("{");
    for (i, (k, vals)) in out.entries.iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        s.push_str(&render_scalar(k));
        s.push_str(":[");
        for (j, v) in vals.iter().enumerate() {
            if j > 0 {
                s.push_str(", ");
            }
            s.push_str(&render_scalar(v));
        }
        s.push(']');
    }
    s.push('}');
    s
}

fn needs_quotes(v: &str) -> bool {
    v.is_empty()
        || v.starts_with(char::is_whitespace)
        || v.ends_with(char::is_whitespace)
        || v.chars().any(|c| matches!(c, ',' | '[' | ']' | '{' | '}' | '\'' | '"' | ':' | '\\'))
}

fn render_scalar(v: &str) -> String {
    if !needs_quotes(v) {
        return v.to_string();
    }
    let mut s = String::with_capacity(v.len() + 2);
    s.push('"');
    for c in v.chars() {
        if c == '"' || c == '\\' {
            s.push('\\');
        }
        s.push(c);
    }
    s.push('"');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema_pt() -> EntitySchema {
        EntitySchema::from_pairs(&[("product", "a product"), ("time", "a time expression")]).unwrap()
    }

    fn pick_up() -> (LabeledSentence, NerOutput) {
        let s = LabeledSentence::new(
            1,
            "Can i pick this up tomorrow".split(' ').map(String::from).collect(),
            &[("time", 5, 6)],
        );
        let out = crate::corpus::gold_output(&s, &schema_pt()).unwrap();
        (s, out)
    }

    #[test]
    fn renders_the_reference_example() {
        let (s, out) = pick_up();
        assert_eq!(
            render_example(&s, &out),
            "Input: Can i pick this up tomorrow\nOutput: {product:[], time:[tomorrow]}"
        );
    }

    #[test]
    fn all_empty_gold() {
        let out = NerOutput::empty(&["product", "time"]);
        assert_eq!(render_output(&out), "{product:[], time:[]}");
    }

    #[test]
    fn prompt_sections_in_order() {
        let p = PromptBuilder::default()
            .build(&schema_pt(), &[pick_up()], "buy a macbook")
            .unwrap();
        let r = &p.rendered;
        let at = |needle: &str| r.find(needle).unwrap_or_else(|| panic!("{needle} missing"));
        assert!(at(&p.task_description) < at("- product: a product"));
        assert!(at("- time: a time expression") < at("Input: Can i pick"));
        assert!(at("Output: {product:[], time:[tomorrow]}") < at("Input: buy a macbook"));
        assert!(r.trim_end().ends_with("Output:"));
        assert_eq!(p.template_id, DEFAULT_TEMPLATE_ID);
    }

    #[test]
    fn zero_examples() {
        let p = PromptBuilder::default().build(&schema_pt(), &[], "hello").unwrap();
        assert!(p.examples.is_empty());
        assert_eq!(p.rendered.matches("Input:").count(), 1);
    }

    #[test]
    fn example_order() {
        let schema = schema_pt();
        let exs: Vec<_> = (0..5)
            .map(|i| {
                let s = LabeledSentence::from_text(i, &format!("example number {i}"));
                (s, NerOutput::empty(&["product", "time"]))
            })
            .collect();
        let asc = PromptBuilder::default().build(&schema, &exs, "q").unwrap();
        assert_eq!(asc.examples.len(), 5);
        assert_eq!(asc.rendered.matches("Input:").count(), 6);
        assert_eq!(asc.examples.last().unwrap().0, "example number 0");
        let desc = PromptBuilder::new(Template::default(), ExampleOrder::DescendingSimilarity)
            .build(&schema, &exs, "q")
            .unwrap();
        assert_eq!(desc.examples[0].0, "example number 0");
    }

    #[test]
    fn schema_mismatch() {
        let (s, _) = pick_up();
        let bad = NerOutput::empty(&["time", "product"]);
        let err = PromptBuilder::default().build(&schema_pt(), &[(s, bad)], "q").unwrap_err();
        assert!(matches!(err, PromptError::SchemaMismatch { index: 0, .. }));
    }

    #[test]
    fn deterministic_and_placeholder_safe() {
        let b = PromptBuilder::default();
        let q = "what about {examples} and {query}";
        let a = b.build(&schema_pt(), &[pick_up()], q).unwrap();
        let c = b.build(&schema_pt(), &[pick_up()], q).unwrap();
        assert_eq!(a.rendered, c.rendered);
        assert!(a.rendered.contains(q));
        assert_eq!(a.rendered.matches("Input: Can i").count(), 1);
    }

    #[test]
    fn template_validation() {
        assert_eq!(
            Template::new("x", "{task_description} {examples} {query}", "t").unwrap_err(),
            PromptError::MissingPlaceholder("entity_definitions")
        );
    }

    #[test]
    fn awkward_values_are_quoted() {
        let out = NerOutput {
            entries: vec![
                ("person".into(), vec!["O'Brien".into(), "Smith, Jr.".into()]),
                ("misc".into(), vec!["a \"b\"".into(), "x:y".into()]),
            ],
            unrecognized: vec![],
        };
        assert_eq!(
            render_output(&out),
            r#"{person:["O'Brien", "Smith, Jr."], misc:["a \"b\"", "x:y"]}"#
        );
    }
}
