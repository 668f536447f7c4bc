//! Prompt template assets and their content hashes.

use super::PromptKind;
use sha2::{Digest, Sha256};

/// Instruction block for structured-CoT teacher requests.
pub const ALR_TEMPLATE: &str = include_str!("../../assets/alr_distill_prompt.txt");

/// Instruction block for free-form-CoT teacher requests.
pub const VANILLA_TEMPLATE: &str = include_str!("../../assets/vanilla_distill_prompt.txt");

/// Instruction block for the answer-validation judge.
pub const JUDGE_TEMPLATE: &str = include_str!("../../assets/judge_prompt.txt");

pub fn template_for(kind: PromptKind) -> &'static str {
    match kind {
        PromptKind::Alr => ALR_TEMPLATE,
        PromptKind::Vanilla => VANILLA_TEMPLATE,
    }
}

/// SHA-256 of a template text, hex-encoded.
pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Hash of the stored asset for a prompt kind; teacher requests must carry
/// an instruction block hashing to exactly this value.
pub fn template_sha256(kind: PromptKind) -> String {
    sha256_hex(template_for(kind))
}

/// Fills the judge template with one (question, response, answer) triple.
pub fn build_judge_prompt(question: &str, response_answer: &str, gt_answer: &str) -> String {
    format!(
        "{JUDGE_TEMPLATE}\nQuestion:\n{question}\n\nResponse:\n{response_answer}\n\nAnswer:\n{gt_answer}\n\nOutput:\n"
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn templates_are_distinct_and_nonempty() {
        assert!(ALR_TEMPLATE.contains("\\boxed{Question Analysis}"));
        assert!(ALR_TEMPLATE.contains("{\"evidence_pages\": [5], \"answer\": \"Not answerable\"}"));
        assert!(VANILLA_TEMPLATE.contains("Let's think step by step."));
        assert!(JUDGE_TEMPLATE.contains("the exact string Error"));
        assert_ne!(template_sha256(PromptKind::Alr), template_sha256(PromptKind::Vanilla));
    }

    #[test]
    fn alr_template_example_parses_under_the_grammar() {
        let start = ALR_TEMPLATE.find("<think>\n\\boxed{Question Analysis}\nThe user asks").unwrap();
        let end = ALR_TEMPLATE.rfind("</answer>").unwrap() + "</answer>".len();
        let example = &ALR_TEMPLATE[start..end];
        let outcome = crate::grammar::parse_alr(example);
        assert!(outcome.is_ok(), "{:?}", outcome.diagnostics);
        let r = outcome.response.unwrap();
        assert_eq!(r.evidence_pages, vec![5]);
        assert_eq!(r.final_answer, "Not answerable");
    }

    #[test]
    fn judge_prompt_embeds_fields_after_template() {
        let p = build_judge_prompt("Q?", "2001/07/27", "2001-07-27");
        assert!(p.starts_with(JUDGE_TEMPLATE));
        assert!(p.contains("Response:\n2001/07/27"));
        assert!(p.contains("Answer:\n2001-07-27"));
        assert!(p.ends_with("Output:\n"));
    }
}
