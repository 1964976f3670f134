use thiserror::Error;

use super::{ChatMessage, ContextEntry, PromptStrategy, Role, StrategyKind};
use crate::qa_data::QaItem;

pub const STANDARD_QA_PROMPT_DIRECT: &str = "You are a knowledgeable question-answering assistant, specializing in multiple-choice questions. Based on the question and the list of choices provided, select the best answer. Carefully evaluate each option before deciding. Provide your choice (e.g., 0, 1, 2, etc) along with a brief explanation of your reasoning.

Respond only with the following format, nothing else:
Answer: [Provide the answer here]
Rationale: [Provide the rationale here]

Do not include any additional text, headers, or explanations outside this format.";

pub const STANDARD_QA_PROMPT_GRADUAL: &str = "You are a highly knowledgeable assistant skilled in multi-step reasoning for multiple-choice question answering. Based on the question and the list of choices provided, select the best answer. Carefully evaluate each option before deciding. Provide your choice (e.g., 0, 1, 2, etc) along with a brief explanation of your reasoning.
Respond only with the following format, nothing else:
Answer: [Provide the answer here]
Rationale: [Provide the rationale here]

Do not include any additional text, headers, or explanations outside this format.";

pub const ABSTAIN_QA_PROMPT: &str = "You are a highly knowledgeable assistant skilled in multi-step reasoning for multiple-choice question answering. Based on the question and the list of choices provided, select the best answer. Carefully evaluate each option before deciding. Provide your choice (e.g., 0, 1, 2, etc) along with a brief explanation of your reasoning.
Respond only with the following format, nothing else:
Answer: [Provide answer here or 'none of the above']
Rationale: [Provide the rationale here]

Do not include any additional text, headers, or explanations outside this format.";

pub const EXPLORATION_PROMPT: &str = "You are an expert assistant specializing in multiple-choice questions, dedicated to exploring multiple ways of thinking to provide accurate answers. Below, you will see an LLM's previous answer, including the choice it selected and its reasoning, followed by the feedback: 'Wrong answer! Try again.'

Your task is to **think outside the box** and use a **completely different line of reasoning** to approach the question. Carefully reassess each option, explore alternative interpretations, and **avoid repeating the same ideas**. Focus on providing fresh insights and explain your reasoning in a distinct way.

Respond only with the following format, nothing else:
Answer: [Provide answer here or 'none of the above']
Rationale: [Provide the rationale here]

Do not include any additional text, headers, or explanations outside this format.";

pub const DIRECT_FEEDBACK: &str = "Wrong Answer! Try again.";

pub const GRADUAL_FEEDBACK: &str = "Env: The previous response was insufficient; explore a new line of reasoning to approach a more accurate answer.";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("turn must be >= 1")]
    ZeroTurn,
    #[error("context holds {got} prior turns but turn {turn} expects {}", turn - 1)]
    ContextLengthMismatch { turn: usize, got: usize },
}

/// `[0: 'first', 1: 'second']`
pub fn render_choices(choices: &[String]) -> String {
    let body = choices
        .iter()
        .enumerate()
        .map(|(i, c)| format!("{i}: '{c}'"))
        .collect::<Vec<_>>()
        .join(", ");
    format!("[{body}]")
}

/// Builds the `[System, User]` message pair for one turn.
pub fn build_prompt(
    item: &QaItem,
    context: &[ContextEntry],
    turn: usize,
    strategy: &PromptStrategy,
) -> Result<Vec<ChatMessage>, PromptError> {
    if turn == 0 {
        return Err(PromptError::ZeroTurn);
    }
    if context.len() != turn - 1 {
        return Err(PromptError::ContextLengthMismatch {
            turn,
            got: context.len(),
        });
    }

    let mut user = format!(
        "Question: {}\nChoices: {}.",
        item.question.trim_end(),
        render_choices(&item.choices)
    );
    for (i, entry) in context.iter().enumerate() {
        user.push_str("\n\n");
        match strategy.kind {
            StrategyKind::Direct => {
                user.push_str(&format!(
                    "Previous LLM Answer: Answer: {}\nRationale: {}",
                    entry.answer,
                    entry.rationale.trim_end()
                ));
            }
            StrategyKind::Gradual => {
                let n = i + 1;
                user.push_str(&format!(
                    "LLM Answer {n}: {}\nRationale {n}: {}",
                    entry.answer,
                    entry.rationale.trim_end()
                ));
            }
        }
        user.push('\n');
        user.push_str(strategy.feedback_line());
    }

    Ok(vec![
        ChatMessage {
            role: Role::System,
            content: strategy.system_prompt(turn).to_string(),
        },
        ChatMessage {
            role: Role::User,
            content: user,
        },
    ])
}
