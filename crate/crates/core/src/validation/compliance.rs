//! Build-level validation: run the profile's build command under a
//! timeout and classify its diagnostics.

use std::io::Read;
use std::os::unix::process::CommandExt;
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::LazyLock;
use std::time::{Duration, Instant};

use regex::Regex;

use super::{Diagnostic, ErrorClass, Stage, StageOutcome};
use crate::profile::DbProfile;
use crate::{Error, Result};

/// Exit status `sh` uses when the command itself cannot be found.
const SH_NOT_FOUND: i32 = 127;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShellRun {
    pub status: Option<i32>,
    pub stdout: String,
    pub stderr: String,
    pub timed_out: bool,
    pub elapsed: Duration,
}

impl ShellRun {
    pub fn success(&self) -> bool {
        !self.timed_out && self.status == Some(0)
    }
}

/// Runs `sh -c command` in `cwd`, killing the whole process group when
/// `timeout` elapses.
pub fn run_shell(command: &str, cwd: &Path, timeout: Duration) -> Result<ShellRun> {
    let started = Instant::now();
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command)
        .current_dir(cwd)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0)
        .spawn()
        .map_err(|e| Error::io(cwd, e))?;

    let mut out_pipe = child.stdout.take().expect("piped stdout");
    let mut err_pipe = child.stderr.take().expect("piped stderr");
    let out_reader = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = out_pipe.read_to_end(&mut buf);
        buf
    });
    let err_reader = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = err_pipe.read_to_end(&mut buf);
        buf
    });

    let pgid = child.id() as libc::pid_t;
    let mut timed_out = false;
    let status = loop {
        match child.try_wait().map_err(|e| Error::io(cwd, e))? {
            Some(st) => break st,
            None if started.elapsed() >= timeout => {
                // SAFETY: signalling a process group we created; a stale id
                // only makes kill fail with ESRCH.
                unsafe {
                    libc::kill(-pgid, libc::SIGKILL);
                }
                timed_out = true;
                break child.wait().map_err(|e| Error::io(cwd, e))?;
            }
            None => std::thread::sleep(Duration::from_millis(10)),
        }
    };
    // Grandchildren may still hold the pipes; they were killed with the
    // group on timeout, otherwise they exit with the build.
    let stdout = String::from_utf8_lossy(&out_reader.join().unwrap_or_default()).into_owned();
    let stderr = String::from_utf8_lossy(&err_reader.join().unwrap_or_default()).into_owned();
    Ok(ShellRun {
        status: status.code(),
        stdout,
        stderr,
        timed_out,
        elapsed: started.elapsed(),
    })
}

/// Output lines kept when none matches a pattern.
const UNMATCHED_LINES_KEPT: usize = 20;

static LOCATION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?P<file>[^:\s]+):(?P<line>\d+)(?::\d+)?:").unwrap());

/// Diagnostics for the output lines that match a profile pattern. When no
/// line matches, the first non-empty lines are kept with class `other` so
/// the failure is never silent.
pub fn classify_output(output: &str, profile: &DbProfile) -> Result<Vec<Diagnostic>> {
    let patterns: Vec<(Regex, ErrorClass)> = profile
        .compliance_patterns
        .iter()
        .map(|p| {
            Regex::new(&p.pattern)
                .map(|re| (re, p.class))
                .map_err(|e| Error::Config(format!("bad compliance pattern: {e}")))
        })
        .collect::<Result<_>>()?;
    let located = |class: ErrorClass, line: &str| {
        let d = Diagnostic::error(class, line.trim());
        match LOCATION.captures(line) {
            Some(c) => d.at(&c["file"], c["line"].parse().ok()),
            None => d,
        }
    };
    let lines: Vec<&str> = output
        .lines()
        .map(str::trim_end)
        .filter(|l| !l.trim().is_empty())
        .collect();
    let matched: Vec<Diagnostic> = lines
        .iter()
        .filter_map(|line| {
            patterns
                .iter()
                .find(|(re, _)| re.is_match(line))
                .map(|(_, class)| located(*class, line))
        })
        .collect();
    if !matched.is_empty() {
        return Ok(matched);
    }
    Ok(lines
        .iter()
        .take(UNMATCHED_LINES_KEPT)
        .map(|line| located(ErrorClass::Other, line))
        .collect())
}

/// Runs the build. Returns the outcome and the raw stderr for archiving.
pub fn validate_compliance(root: &Path, profile: &DbProfile) -> Result<(StageOutcome, String)> {
    if profile.build_command.trim().is_empty() {
        return Err(Error::Config("profile has no build_command".into()));
    }
    let run = run_shell(
        &profile.build_command,
        root,
        Duration::from_secs(profile.build_timeout),
    )?;
    if run.timed_out {
        let d = Diagnostic::error(
            ErrorClass::Timeout,
            format!("build exceeded {} s and was killed", profile.build_timeout),
        );
        return Ok((StageOutcome::fail(Stage::Compliance, vec![d]), run.stderr));
    }
    if run.status == Some(SH_NOT_FOUND) && run.stderr.contains("not found") {
        return Err(Error::Config(format!(
            "build command not found: {}",
            run.stderr.trim()
        )));
    }
    if run.success() {
        return Ok((StageOutcome::pass(Stage::Compliance, vec![]), run.stderr));
    }
    let mut diags = classify_output(&run.stderr, profile)?;
    if diags.is_empty() {
        diags = classify_output(&run.stdout, profile)?;
    }
    diags.push(Diagnostic::error(
        ErrorClass::BuildFailure,
        format!("build exited with status {:?}", run.status),
    ));
    Ok((StageOutcome::fail(Stage::Compliance, diags), run.stderr))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(cmd: &str, timeout: u64) -> DbProfile {
        let mut p = crate::index::tests::profile();
        p.build_command = cmd.into();
        p.build_timeout = timeout;
        p
    }

    #[test]
    fn success_and_failure() {
        let d = tempfile::tempdir().unwrap();
        let (ok, _) = validate_compliance(d.path(), &profile("true", 5)).unwrap();
        assert!(ok.passed);
        let (bad, stderr) = validate_compliance(
            d.path(),
            &profile(
                "echo \"x.c:3:5: error: redefinition of 'f'\" >&2; echo 'noise' >&2; exit 1",
                5,
            ),
        )
        .unwrap();
        assert!(!bad.passed);
        assert!(stderr.contains("redefinition"));
        assert_eq!(
            bad.diagnostics[0].error_class,
            Some(ErrorClass::IncorrectDeclaration)
        );
        assert_eq!(bad.diagnostics[0].line, Some(3));
        // The noise line is dropped; the exit status follows.
        assert_eq!(bad.diagnostics.len(), 2);
        assert_eq!(
            bad.diagnostics[1].error_class,
            Some(ErrorClass::BuildFailure)
        );
        let (quiet, _) =
            validate_compliance(d.path(), &profile("echo 'it broke' >&2; exit 1", 5)).unwrap();
        assert_eq!(quiet.diagnostics[0].error_class, Some(ErrorClass::Other));
    }

    #[test]
    fn timeout_kills_the_group() {
        let d = tempfile::tempdir().unwrap();
        let start = Instant::now();
        let (o, _) = validate_compliance(d.path(), &profile("sleep 30 & sleep 30", 1)).unwrap();
        assert!(start.elapsed() < Duration::from_secs(1 + 5));
        assert_eq!(o.error_classes(), vec![ErrorClass::Timeout]);
    }

    #[test]
    fn missing_command_is_configuration_error() {
        let d = tempfile::tempdir().unwrap();
        let err =
            validate_compliance(d.path(), &profile("definitely-not-a-command-xyz", 5)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn classification_order() {
        let p = profile("true", 5);
        let d = classify_output(
            "a.c:1:1: error: 'xInverse' undeclared here\nb.c:2: undefined reference to `g'\nld: error: x",
            &p,
        )
        .unwrap();
        let classes: Vec<_> = d.iter().map(|d| d.error_class.unwrap()).collect();
        assert_eq!(
            classes,
            vec![
                ErrorClass::IncorrectDeclaration,
                ErrorClass::IncorrectReference,
                ErrorClass::BuildFailure
            ]
        );
    }
}
