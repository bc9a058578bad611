/// Shell configuration shipped with every adventure. bash reads it through
/// `--rcfile`; the engine binary is found through `$TA_BIN`.
///
/// Before each prompt `__ta_prompt_hook` hands the newest history entry to
/// `ta tick`, which evaluates the level test, prints any level text on
/// stderr and answers with the new prompt on stdout. Test drivers can set
/// `TA_LAST_COMMAND` instead of relying on history.
pub const SHELL_RC: &str = r#"# terminal adventure session
if [ -f "$HOME/.bashrc" ] && [ -z "$TA_NO_USER_RC" ]; then
    . "$HOME/.bashrc"
fi

# Every command must produce a new history entry, even repeats.
HISTCONTROL=
HISTIGNORE=

ta_print_again() {
    "$TA_BIN" print-again
}

ta_help() {
    "$TA_BIN" help-request
}

__ta_histno() {
    local entry
    entry=$(HISTTIMEFORMAT= builtin history 1 2>/dev/null)
    entry=${entry#"${entry%%[![:space:]]*}"}
    printf '%s' "${entry%%[![:digit:]]*}"
}

__ta_last_histno=$(__ta_histno)

__ta_prompt_hook() {
    local cmd= have=
    if [ -n "${TA_LAST_COMMAND+set}" ]; then
        cmd=$TA_LAST_COMMAND
        have=1
        unset TA_LAST_COMMAND
    else
        local entry no
        entry=$(HISTTIMEFORMAT= builtin history 1 2>/dev/null)
        entry=${entry#"${entry%%[![:space:]]*}"}
        no=${entry%%[![:digit:]]*}
        if [ -n "$no" ] && [ "$no" != "$__ta_last_histno" ]; then
            __ta_last_histno=$no
            cmd=${entry#"$no"}
            cmd=${cmd#"${cmd%%[![:space:]]*}"}
            have=1
        fi
    fi
    if [ -n "$have" ]; then
        PS1=$("$TA_BIN" tick --command "$cmd")
    else
        PS1=$("$TA_BIN" tick)
    fi
}

PROMPT_COMMAND=__ta_prompt_hook
"#;

#[cfg(test)]
mod tests {
    use super::*;
    use std::process::Command;

    #[test]
    fn rc_is_valid_bash() {
        let out = Command::new("bash").arg("-n").arg("-c").arg(SHELL_RC).output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }

    #[test]
    fn hook_passes_command_to_engine() {
        let dir = tempfile::tempdir().unwrap();
        let fake = dir.path().join("ta");
        std::fs::write(&fake, "#!/bin/sh\nprintf '[fake:%s]' \"$*\"\n").unwrap();
        let mut perms = std::fs::metadata(&fake).unwrap().permissions();
        std::os::unix::fs::PermissionsExt::set_mode(&mut perms, 0o755);
        std::fs::set_permissions(&fake, perms).unwrap();

        let script = format!(
            "{SHELL_RC}\nTA_LAST_COMMAND='cd /tmp'; __ta_prompt_hook; echo \"$PS1\"; __ta_prompt_hook; echo \"$PS1\""
        );
        let out = Command::new("bash")
            .arg("-c")
            .arg(script)
            .env("TA_BIN", &fake)
            .env("TA_NO_USER_RC", "1")
            .output()
            .unwrap();
        assert_eq!(
            String::from_utf8_lossy(&out.stdout),
            "[fake:tick --command cd /tmp]\n[fake:tick]\n"
        );
    }
}
