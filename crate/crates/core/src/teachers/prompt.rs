use serde::{Deserialize, Serialize};

use super::TeacherError;
use crate::corpus::Document;
use crate::spanlab::LabelClass;

const PLACEHOLDER: &str = "{note}";

/// How the teacher is asked to format its answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMode {
    DelimitedString,
    StructuredObject,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    task: LabelClass,
    body: String,
    output_mode: OutputMode,
}

impl PromptTemplate {
    pub fn new(
        task: LabelClass,
        body: impl Into<String>,
        output_mode: OutputMode,
    ) -> Result<Self, TeacherError> {
        let body = body.into();
        match body.matches(PLACEHOLDER).count() {
            1 => Ok(PromptTemplate {
                task,
                body,
                output_mode,
            }),
            n => Err(TeacherError::Placeholder(n)),
        }
    }

    /// The shipped prompt for a task.
    pub fn builtin(task: LabelClass) -> Self {
        let (raw, mode) = match task {
            LabelClass::Med => (
                include_str!("../../prompts/medication.txt"),
                OutputMode::DelimitedString,
            ),
            LabelClass::Dis => (
                include_str!("../../prompts/disease.txt"),
                OutputMode::DelimitedString,
            ),
            LabelClass::Sym => (
                include_str!("../../prompts/symptom.txt"),
                OutputMode::StructuredObject,
            ),
        };
        PromptTemplate::new(task, raw.trim_end_matches('\n'), mode)
            .expect("shipped prompts carry one placeholder")
    }

    pub fn task(&self) -> LabelClass {
        self.task
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn output_mode(&self) -> OutputMode {
        self.output_mode
    }
}

/// Substitutes the note text for the single placeholder.
pub fn render_prompt(template: &PromptTemplate, document: &Document) -> Result<String, TeacherError> {
    if !template.body.contains(PLACEHOLDER) {
        return Err(TeacherError::Placeholder(0));
    }
    Ok(template.body.replacen(PLACEHOLDER, &document.text, 1))
}
