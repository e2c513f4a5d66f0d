//! Output emission: RFC-4180-style CSV (dot decimal, comma separated, a
//! leading `#` comment block for self-description) and JSON summaries that
//! echo the resolved configuration and its content hash.

use crate::config::Config;
use serde::Serialize;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

pub struct OutDir {
    dir: PathBuf,
    header: String,
}

impl OutDir {
    pub fn new(dir: &Path, cfg: &Config) -> std::io::Result<OutDir> {
        fs::create_dir_all(dir)?;
        let header = format!(
            "# phoscat {} config_hash={}\n",
            env!("CARGO_PKG_VERSION"),
            cfg.content_hash()
        );
        Ok(OutDir {
            dir: dir.to_path_buf(),
            header,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Write a CSV with the self-describing comment block.
    pub fn csv(&self, name: &str, columns: &[&str], rows: &[Vec<f64>]) -> std::io::Result<PathBuf> {
        let path = self.path(name);
        let mut f = fs::File::create(&path)?;
        f.write_all(self.header.as_bytes())?;
        writeln!(f, "{}", columns.join(","))?;
        for row in rows {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.12e}")).collect();
            writeln!(f, "{}", line.join(","))?;
        }
        Ok(path)
    }

    /// Write a JSON document wrapping the payload with the config echo.
    pub fn json<T: Serialize>(
        &self,
        name: &str,
        cfg: &Config,
        payload: &T,
    ) -> std::io::Result<PathBuf> {
        #[derive(Serialize)]
        struct Doc<'a, T> {
            tool: &'static str,
            version: &'static str,
            config_hash: String,
            config: &'a Config,
            #[serde(flatten)]
            payload: &'a T,
        }
        let doc = Doc {
            tool: "phoscat",
            version: env!("CARGO_PKG_VERSION"),
            config_hash: cfg.content_hash(),
            config: cfg,
            payload,
        };
        let path = self.path(name);
        let mut f = fs::File::create(&path)?;
        serde_json::to_writer_pretty(&mut f, &doc)?;
        f.write_all(b"\n")?;
        Ok(path)
    }
}
