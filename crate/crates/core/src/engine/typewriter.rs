use std::fs::File;
use std::io::{self, Read, Write};
use std::os::fd::AsRawFd;
use std::thread;
use std::time::{Duration, Instant};

use super::render::{switch_style, RenderedText, Styles};

/// Source of the "print the rest now" key press.
pub trait SkipSignal {
    fn skip_requested(&mut self) -> bool;
}

pub struct NeverSkip;

impl SkipSignal for NeverSkip {
    fn skip_requested(&mut self) -> bool {
        false
    }
}

impl<F: FnMut() -> bool> SkipSignal for F {
    fn skip_requested(&mut self) -> bool {
        self()
    }
}

/// Watches the controlling terminal for Enter or Space.
///
/// Puts `/dev/tty` into non-canonical, no-echo, non-blocking read mode for
/// its lifetime and restores the previous settings on drop.
pub struct TerminalSkip {
    tty: File,
    saved: libc::termios,
}

impl TerminalSkip {
    pub fn open() -> io::Result<Self> {
        let tty = File::open("/dev/tty")?;
        let fd = tty.as_raw_fd();
        // SAFETY: termios is plain data and `fd` is a valid open descriptor.
        unsafe {
            let mut saved: libc::termios = std::mem::zeroed();
            if libc::tcgetattr(fd, &mut saved) != 0 {
                return Err(io::Error::last_os_error());
            }
            let mut raw = saved;
            raw.c_lflag &= !(libc::ICANON | libc::ECHO);
            raw.c_cc[libc::VMIN] = 0;
            raw.c_cc[libc::VTIME] = 0;
            if libc::tcsetattr(fd, libc::TCSANOW, &raw) != 0 {
                return Err(io::Error::last_os_error());
            }
            Ok(Self { tty, saved })
        }
    }
}

impl SkipSignal for TerminalSkip {
    fn skip_requested(&mut self) -> bool {
        let mut buf = [0u8; 32];
        match self.tty.read(&mut buf) {
            Ok(n) => buf[..n].iter().any(|b| matches!(b, b'\n' | b'\r' | b' ')),
            Err(_) => false,
        }
    }
}

impl Drop for TerminalSkip {
    fn drop(&mut self) {
        // SAFETY: restoring settings captured from the same descriptor.
        unsafe {
            libc::tcflush(self.tty.as_raw_fd(), libc::TCIFLUSH);
            libc::tcsetattr(self.tty.as_raw_fd(), libc::TCSANOW, &self.saved);
        }
    }
}

const POLL_SLICE: Duration = Duration::from_millis(10);

/// Prints `rendered` character by character, pausing after each one for its
/// delay. Once `skip` fires the remainder is written at once. With `delays`
/// off everything is written immediately.
pub fn typewriter_print(
    rendered: &RenderedText,
    out: &mut dyn Write,
    skip: &mut dyn SkipSignal,
    delays: bool,
    ansi: bool,
) -> io::Result<()> {
    let mut current = Styles::default();
    let mut pacing = delays;
    let start = Instant::now();
    let mut due = Duration::ZERO;

    for seg in &rendered.segments {
        if ansi {
            switch_style(out, &mut current, seg.styles)?;
        }
        out.write_all(seg.text.as_bytes())?;
        if !pacing {
            continue;
        }
        out.flush()?;
        due += Duration::from_millis(seg.delay_ms);
        loop {
            if skip.skip_requested() {
                pacing = false;
                break;
            }
            let elapsed = start.elapsed();
            if elapsed >= due {
                break;
            }
            thread::sleep((due - elapsed).min(POLL_SLICE));
        }
    }
    if ansi {
        switch_style(out, &mut current, Styles::default())?;
    }
    out.flush()
}
