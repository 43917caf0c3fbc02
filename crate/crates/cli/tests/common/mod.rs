#![allow(dead_code)]

use std::process::{Command, Output};

use serde_json::Value;

pub fn klopt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_klopt"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

pub fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

/// Report text without the `started_at` line.
pub fn body(text: &[u8]) -> String {
    String::from_utf8_lossy(text)
        .lines()
        .filter(|l| !l.trim_start().starts_with("\"started_at\""))
        .collect::<Vec<_>>()
        .join("\n")
}
