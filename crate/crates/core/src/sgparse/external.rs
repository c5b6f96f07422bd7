use std::io::Write;
use std::process::{Command, Stdio};

use super::{sentences_of, AnswerChunk, ChunkExtractor, ParseError};
use crate::corpus::InstructionSample;

/// A parser running as a child process.
///
/// The process receives one [`super::Sentence`] JSON object per line on stdin
/// and must answer with [`AnswerChunk`] JSON lines on stdout. Chunks are
/// validated against the sample before being returned.
#[derive(Debug, Clone)]
pub struct ExternalParser {
    pub program: String,
    pub args: Vec<String>,
}

impl ExternalParser {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        ExternalParser { program: program.into(), args }
    }

    /// Split a shell-ish command line on whitespace.
    pub fn from_command_line(cmd: &str) -> Option<Self> {
        let mut parts = cmd.split_whitespace().map(str::to_string);
        let program = parts.next()?;
        Some(ExternalParser { program, args: parts.collect() })
    }
}

impl ChunkExtractor for ExternalParser {
    fn extract(&self, sample: &InstructionSample) -> Result<Vec<AnswerChunk>, ParseError> {
        let mut input = String::new();
        for s in sentences_of(sample) {
            input.push_str(&serde_json::to_string(&s).expect("sentence serializes"));
            input.push('\n');
        }
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| ParseError::External(format!("{}: {e}", self.program)))?;
        {
            let mut stdin = child.stdin.take().expect("piped stdin");
            stdin.write_all(input.as_bytes()).map_err(|e| ParseError::External(e.to_string()))?;
        }
        let output = child.wait_with_output().map_err(|e| ParseError::External(e.to_string()))?;
        if !output.status.success() {
            return Err(ParseError::External(format!(
                "{} exited with {}: {}",
                self.program,
                output.status,
                String::from_utf8_lossy(&output.stderr).trim()
            )));
        }
        let stdout = String::from_utf8(output.stdout).map_err(|e| ParseError::External(e.to_string()))?;
        let mut chunks = Vec::new();
        for (i, line) in stdout.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let chunk: AnswerChunk =
                serde_json::from_str(line).map_err(|e| ParseError::External(format!("output line {}: {e}", i + 1)))?;
            chunk.validate(sample).map_err(ParseError::InvalidChunk)?;
            chunks.push(chunk);
        }
        Ok(chunks)
    }
}
