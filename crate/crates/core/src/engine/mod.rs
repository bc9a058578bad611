//! The runtime the learner lives in: level text, test evaluation on every
//! prompt, helper commands and event emission.

mod events;
mod render;
mod select;
mod session;
mod shellrc;
mod typewriter;

pub use events::{
    events_endpoint, flush_queue, post_event, queue_dir, spool_event, ta_dir, Delivery, EventSink,
    FlushPolicy, FlushReport, MemorySink, NullSink, SpoolSink, QUEUE_LIMIT,
};
pub use render::{
    delay_for, render_level, RenderedText, Segment, Styles, ANSI_BOLD, ANSI_CODE, ANSI_ITALIC, ANSI_RESET,
    ANSI_UNDERLINE, CHAR_DELAY_MS, SENTENCE_END_DELAY_MS,
};
pub use select::{fnv1a, level_rng, select_next_level, session_seed};
pub use session::{
    evaluate_test, parse_prompt_tag, prompt_tag, EngineError, EngineSession, Identity, SessionConfig,
    ShellTestRunner, TestRunner, TickAction, TickOutcome, CURRENT_LEVEL_FILE,
};
pub use shellrc::SHELL_RC;
pub use typewriter::{typewriter_print, NeverSkip, SkipSignal, TerminalSkip};
