//! Prompt rendering. One template drives every surface that touches model
//! text: answering prompts, permutation scoring continuations, pairwise
//! continuations, generation prefixes, and the canonical text a
//! contaminated mock memorizes. Keeping these in lockstep matters: scoring
//! only lines up with memorized content when both come from the same
//! renderer.

use serde::{Deserialize, Serialize};

use crate::dataset::McqInstance;
use crate::error::{Error, Result};
use crate::permutations::OrderLabel;

const QUESTION_PLACEHOLDER: &str = "{question}";
const LETTER_PLACEHOLDER: &str = "{letter}";
const TEXT_PLACEHOLDER: &str = "{text}";

/// Text patterns for rendering an instance into model input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptTemplate {
    /// Pattern for the question; must contain `{question}`.
    pub question_block: String,
    /// Pattern for one option line; must contain `{letter}` and `{text}`.
    pub option_line: String,
    /// Trailing cue that precedes the answer.
    pub answer_cue: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate {
            question_block: "{question}\n".to_string(),
            option_line: "{letter}. {text}\n".to_string(),
            answer_cue: "Answer:".to_string(),
        }
    }
}

impl PromptTemplate {
    pub fn validate(&self) -> Result<()> {
        if !self.question_block.contains(QUESTION_PLACEHOLDER) {
            return Err(Error::Config(format!(
                "question_block must contain `{QUESTION_PLACEHOLDER}`"
            )));
        }
        if !self.option_line.contains(LETTER_PLACEHOLDER)
            || !self.option_line.contains(TEXT_PLACEHOLDER)
        {
            return Err(Error::Config(format!(
                "option_line must contain `{LETTER_PLACEHOLDER}` and `{TEXT_PLACEHOLDER}`"
            )));
        }
        Ok(())
    }

    pub fn slot_letter(slot: usize) -> char {
        (b'A' + slot as u8) as char
    }

    pub fn render_question(&self, question: &str) -> String {
        self.question_block.replace(QUESTION_PLACEHOLDER, question)
    }

    pub fn render_option_line(&self, slot: usize, text: &str) -> String {
        self.option_line
            .replace(LETTER_PLACEHOLDER, &Self::slot_letter(slot).to_string())
            .replace(TEXT_PLACEHOLDER, text)
    }

    /// Option lines for the given texts, letters following slot position.
    pub fn render_option_block<'a, I>(&self, texts: I) -> String
    where
        I: IntoIterator<Item = &'a str>,
    {
        texts
            .into_iter()
            .enumerate()
            .map(|(slot, text)| self.render_option_line(slot, text))
            .collect()
    }

    /// Question, options in original order, and the answer cue.
    pub fn render_prompt(&self, inst: &McqInstance) -> String {
        let mut out = self.render_question(&inst.question);
        out.push_str(&self.render_option_block(inst.options.iter().map(String::as_str)));
        out.push_str(&self.answer_cue);
        out
    }

    /// Conditioning prefix for ordering scores: the question block alone.
    pub fn score_prefix(&self, inst: &McqInstance) -> String {
        self.render_question(&inst.question)
    }

    /// Continuation holding every option rendered in the given order.
    pub fn ordering_continuation(&self, inst: &McqInstance, order: &OrderLabel) -> Result<String> {
        if order.arity() != inst.option_count() {
            return Err(Error::InvalidArgument(format!(
                "order `{order}` does not match instance `{}` with {} options",
                inst.id,
                inst.option_count()
            )));
        }
        Ok(self.render_option_block(
            order
                .slot_sources()
                .into_iter()
                .map(|i| inst.options[i].as_str()),
        ))
    }

    /// Continuation holding exactly two options as the first two lines.
    pub fn pair_continuation(&self, first: &str, second: &str) -> String {
        self.render_option_block([first, second])
    }

    /// Prefix used when coaxing the model to produce option `index`
    /// (0-based): question, preceding option lines, then the target
    /// option's line up to where its text would start.
    pub fn generation_prefix(&self, inst: &McqInstance, index: usize) -> String {
        let mut out = self.render_question(&inst.question);
        out.push_str(
            &self.render_option_block(inst.options[..index].iter().map(String::as_str)),
        );
        let cue_pattern = self
            .option_line
            .split(TEXT_PLACEHOLDER)
            .next()
            .unwrap_or_default();
        out.push_str(
            &cue_pattern.replace(LETTER_PLACEHOLDER, &Self::slot_letter(index).to_string()),
        );
        out
    }

    /// Continuation scored when answering: a space then the option text.
    pub fn answer_continuation(&self, option_text: &str) -> String {
        format!(" {option_text}")
    }

    /// The full text a leak would plant in training data: the rendered
    /// prompt completed with the gold option.
    pub fn canonical_text(&self, inst: &McqInstance) -> String {
        let mut out = self.render_prompt(inst);
        out.push(' ');
        out.push_str(inst.gold_text());
        out
    }

    /// Check that a rendered prompt embeds each option text verbatim.
    pub fn embeds_options_verbatim(&self, inst: &McqInstance) -> bool {
        let rendered = self.render_prompt(inst);
        inst.options.iter().all(|o| rendered.contains(o.as_str()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst() -> McqInstance {
        McqInstance {
            id: "x".into(),
            question: "Which tropism points away from gravity?".into(),
            options: vec![
                "positive thigmotropism".into(),
                "negative phototropism".into(),
                "positive phototropism".into(),
                "negative gravitropism".into(),
            ],
            answer_index: 3,
            subject: None,
        }
    }

    #[test]
    fn default_prompt_layout() {
        let t = PromptTemplate::default();
        let prompt = t.render_prompt(&inst());
        assert_eq!(
            prompt,
            "Which tropism points away from gravity?\n\
             A. positive thigmotropism\n\
             B. negative phototropism\n\
             C. positive phototropism\n\
             D. negative gravitropism\n\
             Answer:"
        );
    }

    #[test]
    fn options_embedded_verbatim() {
        assert!(PromptTemplate::default().embeds_options_verbatim(&inst()));
    }

    #[test]
    fn ordering_continuation_reorders_texts_not_letters() {
        let t = PromptTemplate::default();
        let order = OrderLabel::parse("BACD").unwrap();
        let cont = t.ordering_continuation(&inst(), &order).unwrap();
        assert!(cont.starts_with("A. negative phototropism\nB. positive thigmotropism\n"));
    }

    #[test]
    fn generation_prefix_ends_with_letter_cue() {
        let t = PromptTemplate::default();
        let p = t.generation_prefix(&inst(), 1);
        assert!(p.ends_with("A. positive thigmotropism\nB. "), "{p:?}");
        let p0 = t.generation_prefix(&inst(), 0);
        assert!(p0.ends_with("gravity?\nA. "), "{p0:?}");
    }

    #[test]
    fn canonical_text_completes_with_gold() {
        let t = PromptTemplate::default();
        let text = t.canonical_text(&inst());
        assert!(text.ends_with("Answer: negative gravitropism"));
    }

    #[test]
    fn bad_templates_rejected() {
        let no_text = PromptTemplate {
            option_line: "{letter}.".into(),
            ..PromptTemplate::default()
        };
        assert!(no_text.validate().is_err());
        let no_question = PromptTemplate {
            question_block: "static".into(),
            ..PromptTemplate::default()
        };
        assert!(no_question.validate().is_err());
    }
}
