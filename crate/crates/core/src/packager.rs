//! Self-extracting bundles.
//!
//! Layout of a bundle file:
//!
//! ```text
//! #!/bin/sh stub ... padded so the marker line ends on a 4096-byte boundary
//! __TA_PAYLOAD_BELOW__
//! <gzip-compressed tar payload>
//! TA_CKSUM <crc> <payload length>
//! ```
//!
//! The checksum is the POSIX `cksum` CRC so the stub can check it with
//! nothing but standard utilities.

use std::fs::{self, File};
use std::io::{self, Read, Write};
use std::os::unix::fs::PermissionsExt;
use std::path::{Component, Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::{Compression, GzBuilder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PAYLOAD_MARKER: &str = "__TA_PAYLOAD_BELOW__";
pub const TRAILER_PREFIX: &str = "TA_CKSUM ";
const BLOCK: usize = 4096;

#[derive(Debug, Error)]
pub enum PackError {
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("missing source file {0}")]
    MissingSource(PathBuf),
    #[error("not a bundle: {0}")]
    NotABundle(&'static str),
    #[error("truncated bundle: payload needs {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("checksum mismatch: trailer says {expected}, payload has {found}")]
    ChecksumMismatch { expected: u32, found: u32 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleEntry {
    /// Relative path inside the bundle.
    pub path: String,
    /// Where to read the file from when building. Relative paths are
    /// resolved against the manifest's directory.
    pub source: PathBuf,
    #[serde(default)]
    pub executable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleManifest {
    pub challenge_name: String,
    /// Entry path run after extraction, from inside the extraction directory.
    pub entrypoint: String,
    /// Arguments passed to the entrypoint before any given on the command line.
    #[serde(default)]
    pub args: Vec<String>,
    pub entries: Vec<BundleEntry>,
}

impl BundleManifest {
    /// Parses a YAML manifest and resolves relative sources against `base`.
    pub fn from_yaml(text: &str, base: &Path) -> Result<Self, PackError> {
        let mut m: BundleManifest =
            serde_yaml::from_str(text).map_err(|e| PackError::Manifest(e.to_string()))?;
        for e in &mut m.entries {
            if e.source.is_relative() {
                e.source = base.join(&e.source);
            }
        }
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self, PackError> {
        let text = fs::read_to_string(path)?;
        Self::from_yaml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<(), PackError> {
        if self.challenge_name.is_empty() {
            return Err(PackError::Manifest("challenge_name is empty".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for e in &self.entries {
            check_relative(&e.path)?;
            if !seen.insert(normalize(&e.path)) {
                return Err(PackError::Manifest(format!("duplicate entry `{}`", e.path)));
            }
        }
        check_relative(&self.entrypoint)?;
        if !seen.contains(&normalize(&self.entrypoint)) {
            return Err(PackError::Manifest(format!(
                "entrypoint `{}` is not among the entries",
                self.entrypoint
            )));
        }
        Ok(())
    }
}

fn normalize(p: &str) -> String {
    Path::new(p)
        .components()
        .filter(|c| !matches!(c, Component::CurDir))
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

fn check_relative(p: &str) -> Result<(), PackError> {
    let path = Path::new(p);
    if p.is_empty() || normalize(p).is_empty() {
        return Err(PackError::Manifest("empty path".into()));
    }
    if path.components().any(|c| !matches!(c, Component::Normal(_) | Component::CurDir)) {
        return Err(PackError::Manifest(format!("`{p}` must be relative without `..`")));
    }
    if p.contains('\n') {
        return Err(PackError::Manifest(format!("`{p}` contains a newline")));
    }
    Ok(())
}

/// One file found in a bundle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchivedFile {
    pub path: String,
    pub size: u64,
    pub executable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchiveSummary {
    pub challenge_name: String,
    pub entrypoint: String,
    pub files: Vec<ArchivedFile>,
    pub payload_len: usize,
    pub checksum: u32,
}

/// CRC computed by POSIX `cksum`: polynomial 0x04C11DB7, MSB first, over
/// the data followed by its length in as few little-endian-ordered bytes as
/// needed, then inverted.
pub fn posix_cksum(data: &[u8]) -> u32 {
    fn step(mut crc: u32, byte: u8) -> u32 {
        crc ^= u32::from(byte) << 24;
        for _ in 0..8 {
            crc = if crc & 0x8000_0000 != 0 {
                (crc << 1) ^ 0x04C1_1DB7
            } else {
                crc << 1
            };
        }
        crc
    }
    let mut crc = data.iter().fold(0u32, |c, &b| step(c, b));
    let mut len = data.len() as u64;
    while len > 0 {
        crc = step(crc, (len & 0xff) as u8);
        len >>= 8;
    }
    !crc
}

fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

const STUB: &str = r#"#!/bin/sh
# Self-extracting terminal adventure.
# Options: --check  verify the payload checksum and exit
#          --list   list the bundled files and exit
#          --keep   keep the extraction directory
#          --target DIR  extract into DIR (implies --keep)
#          --noexec extract without running the entrypoint
#          --       pass the remaining arguments to the entrypoint
CHALLENGE=@CHALLENGE@
ENTRY=@ENTRY@
SKIP_LINES=@SKIP_LINES@
keep=0 check=0 list=0 noexec=0 target=
while [ $# -gt 0 ]; do
    case $1 in
        --keep) keep=1 ;;
        --check) check=1 ;;
        --list) list=1 ;;
        --noexec) noexec=1 ;;
        --target)
            if [ $# -lt 2 ]; then echo "$0: --target needs a directory" >&2; exit 2; fi
            target=$2; keep=1; shift ;;
        --) shift; break ;;
        *) break ;;
    esac
    shift
done
self=$0
# "sh bundle.run" leaves a bare name in $0 that names a file in the current directory.
case $self in */*) ;; *) [ -f "$self" ] || self=$(command -v -- "$self") ;; esac
die() { echo "$CHALLENGE: $*" >&2; exit 1; }
offset=$(head -n "$SKIP_LINES" "$self" | wc -c)
offset=$((offset + 0))
trailer=$(tail -n 1 "$self")
case $trailer in "TA_CKSUM "*) ;; *) die "bundle trailer missing" ;; esac
rest=${trailer#TA_CKSUM }
want_crc=${rest%% *}
want_len=${rest#* }
work=$(mktemp -d "${TMPDIR:-/tmp}/ta.XXXXXX" 2>/dev/null) || {
    work=${TMPDIR:-/tmp}/ta.$$
    (umask 077 && mkdir "$work") || die "cannot create a temporary directory"
}
cleanup() { rm -rf "$work"; }
trap cleanup EXIT
trap 'exit 130' INT
trap 'exit 143' TERM
blocks=$((want_len / 4096))
remainder=$((want_len % 4096))
{
    if [ "$blocks" -gt 0 ]; then
        dd if="$self" bs=4096 skip=$((offset / 4096)) count="$blocks" 2>/dev/null
    fi
    if [ "$remainder" -gt 0 ]; then
        dd if="$self" bs=1 skip=$((offset + blocks * 4096)) count="$remainder" 2>/dev/null
    fi
} > "$work/payload.tgz" || die "cannot read payload"
sum=$(cksum < "$work/payload.tgz")
got_crc=${sum%% *}
got_len=${sum##* }
if [ "$got_crc" != "$want_crc" ] || [ "$got_len" -ne "$want_len" ]; then
    die "payload checksum mismatch; the file is damaged"
fi
if [ "$check" = 1 ]; then
    echo "$CHALLENGE: payload ok ($want_len bytes, crc $want_crc)"
    exit 0
fi
if [ "$list" = 1 ]; then
    gzip -dc "$work/payload.tgz" | tar -tf -
    exit $?
fi
if [ -n "$target" ]; then
    mkdir -p "$target" || die "cannot create $target"
    dir=$(cd "$target" && pwd)
else
    dir=$work/root
    mkdir "$dir" || die "cannot create extraction directory"
fi
gzip -dc "$work/payload.tgz" | (cd "$dir" && tar -xf -) || die "extraction failed"
rm -f "$work/payload.tgz"
if [ "$keep" = 1 ] && [ -z "$target" ]; then
    trap - EXIT
    echo "$CHALLENGE: extracted to $dir" >&2
fi
if [ "$noexec" = 1 ]; then
    [ "$keep" = 1 ] || [ -n "$target" ] || echo "$CHALLENGE: --noexec without --keep removes the files again" >&2
    exit 0
fi
cd "$dir" || die "cannot enter $dir"
./"$ENTRY" @ARGS@ "$@"
status=$?
cd / || :
exit $status
"#;

fn render_stub(manifest: &BundleManifest) -> Vec<u8> {
    let args = manifest.args.iter().map(|a| shell_quote(a)).collect::<Vec<_>>().join(" ");
    let fill = |skip: usize| {
        STUB.replace("@CHALLENGE@", &shell_quote(&manifest.challenge_name))
            .replace("@ENTRY@", &shell_quote(&normalize(&manifest.entrypoint)))
            .replace("@ARGS@", &args)
            .replace("@SKIP_LINES@", &skip.to_string())
    };
    // Padding line plus marker line follow the body.
    let lines = fill(0).lines().count() + 2;
    let body = fill(lines);
    let unpadded = body.len() + 1 + PAYLOAD_MARKER.len() + 1;
    let hashes = 1 + (BLOCK - (unpadded + 1) % BLOCK) % BLOCK;
    let mut out = body.into_bytes();
    out.extend(std::iter::repeat_n(b'#', hashes));
    out.push(b'\n');
    out.extend_from_slice(PAYLOAD_MARKER.as_bytes());
    out.push(b'\n');
    debug_assert_eq!(out.len() % BLOCK, 0);
    out
}

fn build_payload(manifest: &BundleManifest) -> Result<Vec<u8>, PackError> {
    let gz = GzBuilder::new().mtime(0).write(Vec::new(), Compression::best());
    let mut tar = tar::Builder::new(gz);
    tar.mode(tar::HeaderMode::Deterministic);
    for entry in &manifest.entries {
        let data = fs::read(&entry.source).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => PackError::MissingSource(entry.source.clone()),
            _ => PackError::Io(e),
        })?;
        let mut header = tar::Header::new_ustar();
        header.set_size(data.len() as u64);
        header.set_mode(if entry.executable { 0o755 } else { 0o644 });
        header.set_mtime(0);
        header.set_uid(0);
        header.set_gid(0);
        header.set_entry_type(tar::EntryType::Regular);
        tar.append_data(&mut header, normalize(&entry.path), data.as_slice())?;
    }
    Ok(tar.into_inner()?.finish()?)
}

/// Writes an executable bundle for `manifest` to `output`.
pub fn build_archive(manifest: &BundleManifest, output: &Path) -> Result<ArchiveSummary, PackError> {
    manifest.validate()?;
    let payload = build_payload(manifest)?;
    let crc = posix_cksum(&payload);
    let mut bytes = render_stub(manifest);
    bytes.extend_from_slice(&payload);
    bytes.extend_from_slice(format!("\n{TRAILER_PREFIX}{crc} {}\n", payload.len()).as_bytes());

    let dir = output.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(&bytes)?;
    tmp.as_file().set_permissions(fs::Permissions::from_mode(0o755))?;
    tmp.persist(output).map_err(|e| e.error)?;
    summarize(&bytes)
}

struct Parsed<'a> {
    challenge_name: String,
    entrypoint: String,
    payload: &'a [u8],
    checksum: u32,
}

fn stub_value(stub: &str, key: &str) -> Option<String> {
    let line = stub.lines().find_map(|l| l.strip_prefix(key)?.strip_prefix('='))?;
    let inner = line.strip_prefix('\'')?.strip_suffix('\'')?;
    Some(inner.replace(r"'\''", "'"))
}

fn parse_bundle(bytes: &[u8]) -> Result<Parsed<'_>, PackError> {
    let marker = format!("\n{PAYLOAD_MARKER}\n");
    let at = bytes
        .windows(marker.len())
        .position(|w| w == marker.as_bytes())
        .ok_or(PackError::NotABundle("payload marker not found"))?;
    let stub = std::str::from_utf8(&bytes[..at]).map_err(|_| PackError::NotABundle("stub is not text"))?;
    let start = at + marker.len();

    let body = bytes.strip_suffix(b"\n").ok_or(PackError::NotABundle("trailer missing"))?;
    let line_start = body.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    if line_start <= start {
        return Err(PackError::NotABundle("trailer missing"));
    }
    let trailer = std::str::from_utf8(&body[line_start..])
        .ok()
        .and_then(|t| t.strip_prefix(TRAILER_PREFIX))
        .ok_or(PackError::NotABundle("trailer missing"))?;
    let (crc, len) = trailer.split_once(' ').ok_or(PackError::NotABundle("malformed trailer"))?;
    let checksum: u32 = crc.parse().map_err(|_| PackError::NotABundle("malformed trailer"))?;
    let len: usize = len.parse().map_err(|_| PackError::NotABundle("malformed trailer"))?;

    // The payload is followed by the newline that opens the trailer line.
    let available = line_start - 1 - start;
    if available != len {
        return Err(PackError::Truncated { expected: len, found: available });
    }
    Ok(Parsed {
        challenge_name: stub_value(stub, "CHALLENGE").unwrap_or_default(),
        entrypoint: stub_value(stub, "ENTRY").unwrap_or_default(),
        payload: &bytes[start..start + len],
        checksum,
    })
}

fn checked(bytes: &[u8]) -> Result<Parsed<'_>, PackError> {
    let parsed = parse_bundle(bytes)?;
    let found = posix_cksum(parsed.payload);
    if found != parsed.checksum {
        return Err(PackError::ChecksumMismatch { expected: parsed.checksum, found });
    }
    Ok(parsed)
}

fn summarize(bytes: &[u8]) -> Result<ArchiveSummary, PackError> {
    let parsed = checked(bytes)?;
    let mut files = Vec::new();
    let mut archive = tar::Archive::new(GzDecoder::new(parsed.payload));
    for entry in archive.entries()? {
        let entry = entry?;
        files.push(ArchivedFile {
            path: entry.path()?.to_string_lossy().into_owned(),
            size: entry.header().size()?,
            executable: entry.header().mode()? & 0o111 != 0,
        });
    }
    Ok(ArchiveSummary {
        challenge_name: parsed.challenge_name,
        entrypoint: parsed.entrypoint,
        files,
        payload_len: parsed.payload.len(),
        checksum: parsed.checksum,
    })
}

fn read_all(path: &Path) -> Result<Vec<u8>, PackError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    Ok(bytes)
}

/// Checks the payload checksum and lists the contents without running anything.
pub fn verify_archive(archive: &Path) -> Result<ArchiveSummary, PackError> {
    summarize(&read_all(archive)?)
}

/// Verifies the bundle and unpacks its payload into `dest`.
pub fn extract_archive(archive: &Path, dest: &Path) -> Result<ArchiveSummary, PackError> {
    let bytes = read_all(archive)?;
    let summary = summarize(&bytes)?;
    let parsed = parse_bundle(&bytes)?;
    fs::create_dir_all(dest)?;
    let mut tar = tar::Archive::new(GzDecoder::new(parsed.payload));
    tar.set_preserve_permissions(true);
    tar.unpack(dest)?;
    Ok(summary)
}
