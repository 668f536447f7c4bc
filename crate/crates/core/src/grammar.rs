//! Parsing, validation, and rendering of the ALR
//! (Analysis–Localization–Reasoning) structured output format.
//!
//! A well-formed response is a `<think>` block carrying exactly three
//! `\boxed{...}` headings — `Question Analysis`, `Evidence Localization`,
//! `Reasoning Process`, in that order, each followed by its section body —
//! and then an `<answer>` block holding a single JSON object with exactly
//! the keys `evidence_pages` (array of positive integers, no duplicates)
//! and `answer` (string):
//!
//! ```text
//! <think>
//! \boxed{Question Analysis}
//! ...
//! \boxed{Evidence Localization}
//! ...
//! \boxed{Reasoning Process}
//! ...
//! </think>
//! <answer>
//! {"evidence_pages": [5], "answer": "Not answerable"}
//! </answer>
//! ```
//!
//! Parsing never fails with an error: every defect is reported through
//! [`ParseOutcome`] diagnostics carrying character offsets. In the default
//! strict mode, non-whitespace text outside the two blocks is a defect;
//! [`ParseOptions::lenient`] tolerates surrounding text.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

pub const THINK_OPEN: &str = "<think>";
pub const THINK_CLOSE: &str = "</think>";
pub const ANSWER_OPEN: &str = "<answer>";
pub const ANSWER_CLOSE: &str = "</answer>";
pub const HEADING_MARKER: &str = "\\boxed{";

/// The three section titles, in required order.
pub const SECTION_TITLES: [&str; 3] =
    ["Question Analysis", "Evidence Localization", "Reasoning Process"];

/// A parsed structured response: three thought sections, the cited evidence
/// pages, and the final answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlrResponse {
    pub analysis: String,
    pub localization: String,
    pub reasoning: String,
    /// Ordered set of 1-based page identifiers, order as emitted.
    pub evidence_pages: Vec<u32>,
    /// Final answer, trimmed, otherwise verbatim.
    pub final_answer: String,
}

impl AlrResponse {
    /// Checks the invariants required for canonical rendering: pages are
    /// distinct and >= 1, text fields are trimmed, and no field embeds a
    /// structural token that would break the round trip.
    pub fn validate(&self) -> Result<(), RenderError> {
        let mut seen = BTreeSet::new();
        for &p in &self.evidence_pages {
            if p < 1 {
                return Err(RenderError::PageOutOfRange(p));
            }
            if !seen.insert(p) {
                return Err(RenderError::DuplicatePage(p));
            }
        }
        for (name, text) in self.text_fields() {
            if text.trim() != text {
                return Err(RenderError::UntrimmedField(name));
            }
        }
        for (name, text) in [
            ("analysis", &self.analysis),
            ("localization", &self.localization),
            ("reasoning", &self.reasoning),
        ] {
            for token in [THINK_CLOSE, HEADING_MARKER] {
                if text.contains(token) {
                    return Err(RenderError::EmbeddedToken { field: name, token });
                }
            }
        }
        if self.final_answer.contains(ANSWER_CLOSE) {
            return Err(RenderError::EmbeddedToken { field: "final_answer", token: ANSWER_CLOSE });
        }
        Ok(())
    }

    /// Evidence pages as a set.
    pub fn page_set(&self) -> BTreeSet<u32> {
        self.evidence_pages.iter().copied().collect()
    }

    fn text_fields(&self) -> [(&'static str, &String); 4] {
        [
            ("analysis", &self.analysis),
            ("localization", &self.localization),
            ("reasoning", &self.reasoning),
            ("final_answer", &self.final_answer),
        ]
    }
}

/// A single parse defect: a human-readable message anchored at a character
/// offset into the raw text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseStatus {
    Ok,
    Malformed,
}

/// Result of parsing raw model output. `status == Ok` iff `response` is
/// present and `diagnostics` is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseOutcome {
    pub status: ParseStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub response: Option<AlrResponse>,
    pub diagnostics: Vec<Diagnostic>,
}

impl ParseOutcome {
    pub fn ok(response: AlrResponse) -> Self {
        ParseOutcome { status: ParseStatus::Ok, response: Some(response), diagnostics: Vec::new() }
    }

    pub fn malformed(diagnostics: Vec<Diagnostic>) -> Self {
        debug_assert!(!diagnostics.is_empty(), "malformed outcome needs at least one diagnostic");
        ParseOutcome { status: ParseStatus::Malformed, response: None, diagnostics }
    }

    pub fn is_ok(&self) -> bool {
        self.status == ParseStatus::Ok
    }
}

/// Parser knobs. The default is strict: any non-whitespace text before
/// `<think>`, between the blocks, or after `</answer>` is a defect.
#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Tolerate non-whitespace text surrounding the two blocks.
    pub lenient: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RenderError {
    #[error("evidence page {0} out of range: pages are 1-based")]
    PageOutOfRange(u32),
    #[error("duplicate evidence page {0}")]
    DuplicatePage(u32),
    #[error("field `{0}` must be trimmed")]
    UntrimmedField(&'static str),
    #[error("field `{field}` embeds the structural token `{token}`")]
    EmbeddedToken { field: &'static str, token: &'static str },
}

/// Parses raw model output in strict mode.
pub fn parse_alr(raw: &str) -> ParseOutcome {
    parse_alr_with(raw, ParseOptions::default())
}

/// Parses raw model output with explicit options.
pub fn parse_alr_with(raw: &str, opts: ParseOptions) -> ParseOutcome {
    let mut p = Parser::new(raw, opts);
    let sections = p.parse_think_block(SectionMode::Structured);
    let answer = p.parse_answer_block(AnswerMode::Json);
    p.finish(sections, answer)
}

/// Parses the unstructured variant: a free-text `<think>` body and a plain
/// string `<answer>` body. The thought text lands in `reasoning`; the other
/// sections and the page list are empty.
pub fn parse_vanilla(raw: &str) -> ParseOutcome {
    parse_vanilla_with(raw, ParseOptions::default())
}

pub fn parse_vanilla_with(raw: &str, opts: ParseOptions) -> ParseOutcome {
    let mut p = Parser::new(raw, opts);
    let sections = p.parse_think_block(SectionMode::FreeText);
    let answer = p.parse_answer_block(AnswerMode::PlainText);
    p.finish(sections, answer)
}

/// Renders the canonical template text for a valid response. Pages are
/// emitted in ascending order; `parse_alr` on the result reproduces the
/// input field-for-field (pages compared as sets).
pub fn render_alr(r: &AlrResponse) -> Result<String, RenderError> {
    r.validate()?;
    let mut pages = r.evidence_pages.clone();
    pages.sort_unstable();
    let page_list =
        pages.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(", ");
    let answer_json = serde_json::to_string(&r.final_answer).expect("string serializes");
    Ok(format!(
        "{THINK_OPEN}\n\
         \\boxed{{{qa}}}\n{analysis}\n\
         \\boxed{{{el}}}\n{localization}\n\
         \\boxed{{{rp}}}\n{reasoning}\n\
         {THINK_CLOSE}\n\
         {ANSWER_OPEN}\n\
         {{\"evidence_pages\": [{page_list}], \"answer\": {answer_json}}}\n\
         {ANSWER_CLOSE}\n",
        qa = SECTION_TITLES[0],
        el = SECTION_TITLES[1],
        rp = SECTION_TITLES[2],
        analysis = r.analysis,
        localization = r.localization,
        reasoning = r.reasoning,
    ))
}

#[derive(Clone, Copy, PartialEq)]
enum SectionMode {
    Structured,
    FreeText,
}

#[derive(Clone, Copy, PartialEq)]
enum AnswerMode {
    Json,
    PlainText,
}

/// Sections plus the answer payload accumulated while scanning.
type Sections = [String; 3];

struct Parser<'a> {
    raw: &'a str,
    opts: ParseOptions,
    diagnostics: Vec<Diagnostic>,
    /// Byte position just past `</think>`, or where the answer search starts.
    after_think: usize,
    think_found: bool,
}

impl<'a> Parser<'a> {
    fn new(raw: &'a str, opts: ParseOptions) -> Self {
        Parser { raw, opts, diagnostics: Vec::new(), after_think: 0, think_found: false }
    }

    fn diag(&mut self, byte_offset: usize, message: impl Into<String>) {
        let offset = self.raw[..byte_offset.min(self.raw.len())].chars().count();
        self.diagnostics.push(Diagnostic { offset, message: message.into() });
    }

    fn parse_think_block(&mut self, mode: SectionMode) -> Option<Sections> {
        let open = match self.raw.find(THINK_OPEN) {
            Some(pos) => pos,
            None => {
                self.diag(0, format!("missing {THINK_OPEN} tag"));
                return None;
            }
        };
        if !self.opts.lenient && !self.raw[..open].trim().is_empty() {
            self.diag(0, format!("unexpected text before {THINK_OPEN} tag"));
        }
        let body_start = open + THINK_OPEN.len();
        let close = match self.raw[body_start..].find(THINK_CLOSE) {
            Some(rel) => body_start + rel,
            None => {
                self.diag(open, format!("missing {THINK_CLOSE} tag"));
                self.after_think = self.raw.len();
                return None;
            }
        };
        self.after_think = close + THINK_CLOSE.len();
        self.think_found = true;
        match mode {
            SectionMode::FreeText => {
                let body = self.raw[body_start..close].trim().to_string();
                Some([String::new(), String::new(), body])
            }
            SectionMode::Structured => self.parse_sections(body_start, close),
        }
    }

    fn parse_sections(&mut self, body_start: usize, body_end: usize) -> Option<Sections> {
        let body = &self.raw[body_start..body_end];

        // Collect every \boxed{...} heading with its spans.
        struct Heading {
            title: String,
            marker: usize, // byte offset of `\boxed{` within `body`
            body_from: usize, // byte offset just past `}` within `body`
        }
        let mut headings: Vec<Heading> = Vec::new();
        let mut cursor = 0;
        while let Some(rel) = body[cursor..].find(HEADING_MARKER) {
            let marker = cursor + rel;
            let title_start = marker + HEADING_MARKER.len();
            match body[title_start..].find('}') {
                None => {
                    self.diag(body_start + marker, "unterminated \\boxed{ heading");
                    return None;
                }
                Some(trel) => {
                    let title_end = title_start + trel;
                    headings.push(Heading {
                        title: body[title_start..title_end].trim().to_string(),
                        marker,
                        body_from: title_end + 1,
                    });
                    cursor = title_end + 1;
                }
            }
        }

        if let Some(first) = headings.first() {
            if !body[..first.marker].trim().is_empty() {
                self.diag(body_start, "unexpected text before the first \\boxed heading");
            }
        }

        let titles: Vec<&str> = headings.iter().map(|h| h.title.as_str()).collect();
        if titles == SECTION_TITLES {
            let mut out: Sections = Default::default();
            for (i, h) in headings.iter().enumerate() {
                let until = headings.get(i + 1).map_or(body.len(), |n| n.marker);
                out[i] = body[h.body_from..until].trim().to_string();
            }
            return Some(out);
        }

        // Mismatch: report what is wrong with the heading sequence.
        let known_once = SECTION_TITLES
            .iter()
            .all(|t| titles.iter().filter(|x| *x == t).count() == 1);
        let unknown: Vec<&Heading> =
            headings.iter().filter(|h| !SECTION_TITLES.contains(&h.title.as_str())).collect();
        if known_once && unknown.is_empty() {
            // Same multiset, wrong order.
            for (i, h) in headings.iter().enumerate() {
                if h.title != SECTION_TITLES[i] {
                    self.diag(
                        body_start + h.marker,
                        format!("heading \\boxed{{{}}} out of order", h.title),
                    );
                    break;
                }
            }
        } else {
            for title in SECTION_TITLES {
                let count = titles.iter().filter(|x| **x == title).count();
                if count == 0 {
                    self.diag(body_start, format!("missing \\boxed{{{title}}} heading"));
                } else if count > 1 {
                    let second = headings
                        .iter()
                        .filter(|h| h.title == title)
                        .nth(1)
                        .expect("count > 1");
                    self.diag(
                        body_start + second.marker,
                        format!("duplicate heading \\boxed{{{title}}}"),
                    );
                }
            }
            for h in unknown {
                self.diag(
                    body_start + h.marker,
                    format!("unknown heading \\boxed{{{}}}", h.title),
                );
            }
        }
        None
    }

    fn parse_answer_block(&mut self, mode: AnswerMode) -> Option<(Vec<u32>, String)> {
        let from = self.after_think;
        let open = match self.raw[from..].find(ANSWER_OPEN) {
            Some(rel) => from + rel,
            None => {
                self.diag(from, format!("missing {ANSWER_OPEN} tag"));
                return None;
            }
        };
        if self.think_found && !self.opts.lenient && !self.raw[from..open].trim().is_empty() {
            self.diag(from, format!("unexpected text between {THINK_CLOSE} and {ANSWER_OPEN}"));
        }
        let body_start = open + ANSWER_OPEN.len();
        let close = match self.raw[body_start..].find(ANSWER_CLOSE) {
            Some(rel) => body_start + rel,
            None => {
                self.diag(open, format!("missing {ANSWER_CLOSE} tag"));
                return None;
            }
        };
        let tail_start = close + ANSWER_CLOSE.len();
        if !self.opts.lenient && !self.raw[tail_start..].trim().is_empty() {
            self.diag(tail_start, format!("trailing text after {ANSWER_CLOSE}"));
        }
        let body = &self.raw[body_start..close];
        match mode {
            AnswerMode::PlainText => Some((Vec::new(), body.trim().to_string())),
            AnswerMode::Json => self.parse_answer_json(body, body_start),
        }
    }

    fn parse_answer_json(&mut self, body: &str, body_start: usize) -> Option<(Vec<u32>, String)> {
        let trimmed = body.trim();
        let json_at = body_start + (body.len() - body.trim_start().len());
        let value: serde_json::Value = match serde_json::from_str(trimmed) {
            Ok(v) => v,
            Err(e) => {
                self.diag(json_at, format!("invalid JSON in {ANSWER_OPEN} block: {e}"));
                return None;
            }
        };
        let map = match value {
            serde_json::Value::Object(map) => map,
            _ => {
                self.diag(json_at, format!("{ANSWER_OPEN} block must contain a JSON object"));
                return None;
            }
        };

        let before = self.diagnostics.len();
        for key in map.keys() {
            if key != "evidence_pages" && key != "answer" {
                self.diag(json_at, format!("unexpected key `{key}` in answer object"));
            }
        }
        for key in ["evidence_pages", "answer"] {
            if !map.contains_key(key) {
                self.diag(json_at, format!("missing key `{key}` in answer object"));
            }
        }

        let pages = match map.get("evidence_pages") {
            Some(serde_json::Value::Array(items)) => {
                let mut pages = Vec::with_capacity(items.len());
                let mut seen = BTreeSet::new();
                for item in items {
                    match item.as_u64() {
                        Some(v) if v >= 1 && v <= u64::from(u32::MAX) => {
                            let v = v as u32;
                            if !seen.insert(v) {
                                self.diag(json_at, format!("duplicate page {v}"));
                            } else {
                                pages.push(v);
                            }
                        }
                        Some(v) => {
                            self.diag(json_at, format!("page {v} out of range: pages are 1-based"));
                        }
                        None => match item.as_i64() {
                            Some(v) => self.diag(
                                json_at,
                                format!("page {v} out of range: pages are 1-based"),
                            ),
                            None => self.diag(json_at, format!("non-integer page {item}")),
                        },
                    }
                }
                Some(pages)
            }
            Some(_) => {
                self.diag(json_at, "`evidence_pages` must be an array of integers");
                None
            }
            None => None,
        };
        let answer = match map.get("answer") {
            Some(serde_json::Value::String(s)) => Some(s.trim().to_string()),
            Some(_) => {
                self.diag(json_at, "`answer` must be a string");
                None
            }
            None => None,
        };

        if self.diagnostics.len() > before {
            return None;
        }
        Some((pages?, answer?))
    }

    fn finish(self, sections: Option<Sections>, answer: Option<(Vec<u32>, String)>) -> ParseOutcome {
        match (sections, answer, self.diagnostics.is_empty()) {
            (Some([analysis, localization, reasoning]), Some((evidence_pages, final_answer)), true) => {
                ParseOutcome::ok(AlrResponse {
                    analysis,
                    localization,
                    reasoning,
                    evidence_pages,
                    final_answer,
                })
            }
            (_, _, _) => {
                let mut diagnostics = self.diagnostics;
                if diagnostics.is_empty() {
                    diagnostics.push(Diagnostic {
                        offset: 0,
                        message: "internal: structure incomplete without diagnostics".into(),
                    });
                }
                ParseOutcome::malformed(diagnostics)
            }
        }
    }
}
