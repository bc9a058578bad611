//! Markdown subset to styled, timed characters.
//!
//! Supported markup: `**bold**`, `*italic*`, `_italic_`, `__underline__` and
//! `` `code` ``. Unbalanced markers are printed literally.

use std::io::{self, Write};

pub const CHAR_DELAY_MS: u64 = 50;
pub const SENTENCE_END_DELAY_MS: u64 = 500;

pub const ANSI_BOLD: &str = "\x1b[1m";
pub const ANSI_ITALIC: &str = "\x1b[3m";
pub const ANSI_UNDERLINE: &str = "\x1b[4m";
pub const ANSI_CODE: &str = "\x1b[36m";
pub const ANSI_RESET: &str = "\x1b[0m";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Styles {
    pub bold: bool,
    pub italic: bool,
    pub underline: bool,
    pub code: bool,
}

impl Styles {
    pub fn is_plain(&self) -> bool {
        *self == Styles::default()
    }

    fn write_ansi(&self, out: &mut dyn Write) -> io::Result<()> {
        if self.bold {
            out.write_all(ANSI_BOLD.as_bytes())?;
        }
        if self.italic {
            out.write_all(ANSI_ITALIC.as_bytes())?;
        }
        if self.underline {
            out.write_all(ANSI_UNDERLINE.as_bytes())?;
        }
        if self.code {
            out.write_all(ANSI_CODE.as_bytes())?;
        }
        Ok(())
    }
}

/// One printed character with its style and the pause that follows it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub text: String,
    pub styles: Styles,
    pub delay_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RenderedText {
    pub segments: Vec<Segment>,
}

impl RenderedText {
    pub fn plain_text(&self) -> String {
        self.segments.iter().map(|s| s.text.as_str()).collect()
    }

    pub fn total_delay_ms(&self) -> u64 {
        self.segments.iter().map(|s| s.delay_ms).sum()
    }

    /// Writes the text in one go, with ANSI styling when `ansi` is set.
    pub fn write_to(&self, out: &mut dyn Write, ansi: bool) -> io::Result<()> {
        let mut current = Styles::default();
        for seg in &self.segments {
            if ansi {
                switch_style(out, &mut current, seg.styles)?;
            }
            out.write_all(seg.text.as_bytes())?;
        }
        if ansi {
            switch_style(out, &mut current, Styles::default())?;
        }
        Ok(())
    }
}

pub(crate) fn switch_style(out: &mut dyn Write, current: &mut Styles, wanted: Styles) -> io::Result<()> {
    if *current == wanted {
        return Ok(());
    }
    if !current.is_plain() {
        out.write_all(ANSI_RESET.as_bytes())?;
    }
    wanted.write_ansi(out)?;
    *current = wanted;
    Ok(())
}

pub fn delay_for(c: char) -> u64 {
    if matches!(c, '.' | '!' | '?') {
        SENTENCE_END_DELAY_MS
    } else {
        CHAR_DELAY_MS
    }
}

pub fn render_level(body: &str) -> RenderedText {
    let chars: Vec<char> = body.chars().collect();
    let mut segments = Vec::with_capacity(chars.len());
    render_range(&chars, 0, chars.len(), Styles::default(), &mut segments);
    RenderedText { segments }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Marker {
    Code,
    DoubleStar,
    Star,
    DoubleUnderscore,
    Underscore,
}

impl Marker {
    fn len(self) -> usize {
        match self {
            Marker::DoubleStar | Marker::DoubleUnderscore => 2,
            _ => 1,
        }
    }
}

fn marker_at(chars: &[char], i: usize, end: usize) -> Option<Marker> {
    let next = |c| i + 1 < end && chars[i + 1] == c;
    match chars[i] {
        '`' => Some(Marker::Code),
        '*' if next('*') => Some(Marker::DoubleStar),
        '*' => Some(Marker::Star),
        '_' if next('_') => Some(Marker::DoubleUnderscore),
        '_' => Some(Marker::Underscore),
        _ => None,
    }
}

fn can_open(chars: &[char], i: usize, m: Marker, end: usize) -> bool {
    let after = i + m.len();
    if after >= end || chars[after].is_whitespace() {
        return m == Marker::Code && after < end;
    }
    if matches!(m, Marker::Underscore | Marker::DoubleUnderscore) && i > 0 && chars[i - 1].is_alphanumeric() {
        return false;
    }
    true
}

fn can_close(chars: &[char], i: usize, m: Marker, end: usize) -> bool {
    if m == Marker::Code {
        return true;
    }
    if i == 0 || chars[i - 1].is_whitespace() {
        return false;
    }
    let after = i + m.len();
    if matches!(m, Marker::Underscore | Marker::DoubleUnderscore) && after < end && chars[after].is_alphanumeric() {
        return false;
    }
    true
}

/// Position of the marker closing `m` opened just before `from`.
fn find_closer(chars: &[char], from: usize, end: usize, m: Marker) -> Option<usize> {
    let mut j = from;
    while j < end {
        match marker_at(chars, j, end) {
            Some(found) if found == m && j > from && can_close(chars, j, m, end) => return Some(j),
            Some(Marker::Code) if m != Marker::Code => {
                // Skip over a complete code span; markers inside do not count.
                match (j + 1..end).find(|&k| chars[k] == '`') {
                    Some(k) => j = k + 1,
                    None => j += 1,
                }
            }
            Some(found) => j += found.len(),
            None => j += 1,
        }
    }
    None
}

fn render_range(chars: &[char], start: usize, end: usize, styles: Styles, out: &mut Vec<Segment>) {
    let mut i = start;
    while i < end {
        if !styles.code {
            if let Some(m) = marker_at(chars, i, end) {
                let inner_start = i + m.len();
                if can_open(chars, i, m, end) {
                    if let Some(close) = find_closer(chars, inner_start, end, m) {
                        let mut inner = styles;
                        match m {
                            Marker::Code => inner.code = true,
                            Marker::DoubleStar => inner.bold = true,
                            Marker::Star | Marker::Underscore => inner.italic = true,
                            Marker::DoubleUnderscore => inner.underline = true,
                        }
                        if m == Marker::Code {
                            for &c in &chars[inner_start..close] {
                                push_char(out, c, inner);
                            }
                        } else {
                            render_range(chars, inner_start, close, inner, out);
                        }
                        i = close + m.len();
                        continue;
                    }
                }
                for &c in &chars[i..inner_start] {
                    push_char(out, c, styles);
                }
                i = inner_start;
                continue;
            }
        }
        push_char(out, chars[i], styles);
        i += 1;
    }
}

fn push_char(out: &mut Vec<Segment>, c: char, styles: Styles) {
    out.push(Segment {
        text: c.to_string(),
        styles,
        delay_ms: delay_for(c),
    });
}
