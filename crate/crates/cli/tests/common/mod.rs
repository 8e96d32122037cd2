#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tcf_core::corpus::EmailRecord;
use tcf_core::stats::derive_stream;
use tcf_core::Label;

pub fn tcf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tcf"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

const WORDS: [&str; 24] = [
    "account", "verify", "password", "invoice", "meeting", "urgent", "click", "bank", "update", "report",
    "schedule", "team", "offer", "prize", "login", "security", "notice", "project", "review", "payment",
    "friday", "lunch", "confirm", "details",
];

/// `n` emails of 20 to 39 words with alternating labels; every fifth one
/// carries a link and every seventh a header block.
pub fn corpus(n: usize, seed: u64) -> Vec<EmailRecord> {
    (0..n)
        .map(|i| {
            let mut s = derive_stream(seed, &format!("email/{i}"));
            let len = 20 + s.index(20);
            let mut words: Vec<String> = (0..len).map(|_| WORDS[s.index(WORDS.len())].to_string()).collect();
            if i % 5 == 0 {
                words.insert(3, format!("https://example.com/{i}"));
            }
            let mut text = words.join(" ");
            if i % 7 == 0 {
                text = format!("From: someone@example.com\nSubject: note {i}\n\n{text}");
            }
            EmailRecord {
                id: format!("e{i}"),
                email_text: text,
                label: if i % 2 == 0 { Label::Phishing } else { Label::Safe },
            }
        })
        .collect()
}

pub fn write_jsonl<T: serde::Serialize>(path: &Path, items: &[T]) {
    let mut s = String::new();
    for i in items {
        s.push_str(&serde_json::to_string(i).unwrap());
        s.push('\n');
    }
    fs::write(path, s).unwrap();
}

pub fn lexicon(path: &Path) {
    fs::write(
        path,
        "account\tprofile\nverify\tconfirm\nurgent\timmediate\nclick\tpress\nbank\tlender\nmeeting\tcall\n",
    )
    .unwrap();
}

/// All files of a directory, by name.
pub fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

pub fn line_count(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count()
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub fn join(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
