use std::fmt::Display;
use std::path::PathBuf;
use std::time::Instant;

use crate::{Cli, CliError, Command};

/// Flat `key=value` record written beside a command's main output.
pub struct Manifest {
    path: PathBuf,
    entries: Vec<(String, String)>,
    started: Instant,
}

fn manifest_path(cmd: &Command) -> PathBuf {
    let beside = |p: &PathBuf| {
        let mut s = p.clone().into_os_string();
        s.push(".manifest");
        PathBuf::from(s)
    };
    match cmd {
        Command::Validate { out, .. } => beside(out),
        Command::Solve(a) => beside(&a.out),
        Command::Policy(a) => beside(&a.out),
        Command::Simulate(a) => beside(&a.summary),
        Command::Example(a) => beside(&a.out),
        Command::Ramsey(a) => a.out_dir.join("ramsey.manifest"),
    }
}

impl Manifest {
    pub fn new(cli: &Cli) -> Self {
        let mut m = Self {
            path: manifest_path(&cli.command),
            entries: Vec::new(),
            started: Instant::now(),
        };
        let args: Vec<String> = std::env::args().skip(1).collect();
        m.set("recdual_version", env!("CARGO_PKG_VERSION"));
        m.set("args", args.join(" "));
        m.set("threads", cli.threads);
        m.set("config", format!("{:?}", cli.command).replace('\n', " "));
        m
    }

    /// Sets `key`, replacing an earlier value.
    pub fn set(&mut self, key: &str, value: impl Display) {
        let v = value.to_string().replace('\n', " ");
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = v,
            None => self.entries.push((key.to_string(), v)),
        }
    }

    pub fn finish(&mut self, err: Option<&CliError>) {
        self.set("wall_time_s", format!("{:.3}", self.started.elapsed().as_secs_f64()));
        match err {
            None => {
                self.set("status", "ok");
                self.set("exit_code", 0);
            }
            Some(e) => {
                self.set("status", "error");
                self.set("exit_code", e.code());
                self.set("error", e.message());
            }
        }
    }

    pub fn write(&self) -> std::io::Result<()> {
        if let Some(dir) = self.path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut text = String::new();
        for (k, v) in &self.entries {
            text.push_str(&format!("{k}={v}\n"));
        }
        std::fs::write(&self.path, text)
    }
}
