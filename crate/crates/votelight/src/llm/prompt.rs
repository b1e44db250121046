//! Prompt construction and `<signal>` tag parsing for the LLM controller.
//!
//! The template text never changes between runs; only the state block in
//! the middle is filled from the observation. A golden-file test pins the
//! exact bytes.

use thiserror::Error;

use crate::sim::{governed_lane_index, Dir, Movement, ObservationState, Phase, PHASES};

/// Everything needed to render one per-intersection prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptContext {
    pub observation: ObservationState,
}

impl PromptContext {
    pub fn new(observation: ObservationState) -> Self {
        PromptContext { observation }
    }
}

pub const SYSTEM_PROMPT: &str = "You are an expert traffic signal control engineer. \
You reason carefully about intersection state and answer in the requested format.";

const PREAMBLE: &str = "A traffic light regulates a four-section intersection with northern, \
southern, eastern, and western sections, each containing two lanes: one for through traffic \
and one for left-turns. Each lane is further divided into three segments. Segment 1 is the \
closest to the intersection. Segment 2 is in the middle. Segment 3 is the farthest. In a \
lane, there may be early queued vehicles and approaching vehicles traveling in different \
segments. Early queued vehicles have arrived at the intersection and await passage \
permission. Approaching vehicles will arrive at the intersection in the future. The traffic \
light has 4 signal phases. Each signal relieves vehicles' flow in the group of two specific \
lanes. The state of the intersection is listed below. It describes:

- The group of lanes relieving vehicles' flow under each signal phase.

- The number of early queued vehicles of the allowed lanes of each signal.

- The number of approaching vehicles in different segments of the allowed lanes of each signal.
";

const CLOSING: &str = "Please answer:
Which is the most effective traffic signal that will most significantly improve the traffic \
condition during the next phase?
Requirements:

- Let's think step by step.

- You can only choose one of the signals listed above.

- You must follow the following steps to provide your analysis:

Step 1: Provide your analysis for identifying the optimal traffic signal.

Step 2: Answer your chosen signal.

- Your choice can only be given after finishing the analysis.

- Your choice must be identified by the tag: <signal>YOUR_CHOICE</signal>.";

fn lane_name(approach: Dir, movement: Movement) -> String {
    let side = match approach {
        Dir::North => "northern",
        Dir::South => "southern",
        Dir::East => "eastern",
        Dir::West => "western",
    };
    let kind = match movement {
        Movement::Through => "through",
        Movement::Left => "left-turn",
        Movement::Right => "right-turn",
    };
    format!("{side} {kind} lane")
}

fn state_block(obs: &ObservationState) -> String {
    let mut s = String::new();
    for phase in PHASES {
        let [a, b] = phase.governed_lanes();
        s.push_str(&format!(
            "Signal {} relieves the {} and the {}.\n",
            phase.code(),
            lane_name(a.0, a.1),
            lane_name(b.0, b.1)
        ));
        for (approach, movement) in [a, b] {
            let lane = governed_lane_index(approach, movement).unwrap();
            let name = lane_name(approach, movement);
            s.push_str(&format!(
                "- Early queued vehicles of the {}: {}.\n",
                name, obs.queued[lane]
            ));
            let seg = obs.approaching[lane];
            s.push_str(&format!(
                "- Approaching vehicles of the {}: segment 1: {}, segment 2: {}, segment 3: {}.\n",
                name, seg[0], seg[1], seg[2]
            ));
        }
    }
    s.push_str(&format!("The current signal phase is {}.\n", obs.phase.code()));
    s
}

/// Render the full user prompt for one intersection.
pub fn build_prompt(ctx: &PromptContext) -> String {
    format!("{PREAMBLE}\n{}\n{CLOSING}", state_block(&ctx.observation))
}

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("no <signal> tag found in the response")]
    MissingTag,
    #[error("tag content {0:?} is not a known signal code")]
    UnknownCode(String),
}

/// Extract the chosen phase from raw model output. The last
/// `<signal>...</signal>` span wins; matching is case-insensitive and the
/// content is trimmed before lookup.
pub fn parse_signal(raw: &str) -> Result<Phase, ParseError> {
    let lower = raw.to_ascii_lowercase();
    let mut last: Option<(usize, usize)> = None;
    let mut from = 0;
    while let Some(open) = lower[from..].find("<signal>") {
        let start = from + open + "<signal>".len();
        match lower[start..].find("</signal>") {
            Some(close) => {
                last = Some((start, start + close));
                from = start + close + "</signal>".len();
            }
            None => break,
        }
    }
    let (start, end) = last.ok_or(ParseError::MissingTag)?;
    let content = raw[start..end].trim();
    Phase::from_code(content).ok_or_else(|| ParseError::UnknownCode(content.to_string()))
}
