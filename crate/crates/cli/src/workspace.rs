use std::path::{Path, PathBuf};

use bgforecast::parsers::{merge_to_frame, parse_csv};
use bgforecast::{DatasetFrame, GlucoseUnit, PipelineConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SUBDIRECTORIES: [&str; 5] = [
    "data/raw",
    "data/configurations",
    "data/trained_models",
    "data/figures",
    "data/reports",
];

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub unit: GlucoseUnit,
}

/// The on-disk layout all commands work in.
#[derive(Debug, Clone)]
pub struct WorkspaceLayout {
    pub root: PathBuf,
}

fn io(path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(bgforecast::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// `name` with `ext` appended unless it already ends with it.
fn with_extension(name: &str, ext: &str) -> String {
    if name.ends_with(&format!(".{ext}")) {
        name.to_string()
    } else {
        format!("{name}.{ext}")
    }
}

pub fn stem(name: &str) -> &str {
    let base = name.rsplit(['/', '\\']).next().unwrap_or(name);
    base.rsplit_once('.').map_or(base, |(s, _)| s)
}

impl WorkspaceLayout {
    /// Creates every subdirectory; existing content is left alone.
    pub fn setup(root: &Path) -> CliResult<Self> {
        for sub in SUBDIRECTORIES {
            let dir = root.join(sub);
            std::fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
        }
        Ok(WorkspaceLayout { root: root.to_path_buf() })
    }

    pub fn open(root: &Path) -> CliResult<Self> {
        if SUBDIRECTORIES.iter().all(|s| root.join(s).is_dir()) {
            Ok(WorkspaceLayout { root: root.to_path_buf() })
        } else {
            Err(CliError::NotInitialized(root.to_path_buf()))
        }
    }

    pub fn dir(&self, sub: &str) -> PathBuf {
        self.root.join(sub)
    }

    pub fn raw_path(&self, name: &str) -> PathBuf {
        self.dir("data/raw").join(with_extension(stem_keep_dots(name), "csv"))
    }

    pub fn config_path(&self, name: &str) -> PathBuf {
        self.dir("data/configurations").join(with_extension(stem_keep_dots(name), "json"))
    }

    pub fn artifact_path(&self, model: &str, config: &str) -> PathBuf {
        self.dir("data/trained_models").join(format!("{model}__{config}.json"))
    }

    pub fn report_path(&self, model: &str, config: &str, ext: &str) -> PathBuf {
        self.dir("data/reports").join(format!("{model}__{config}__metrics.{ext}"))
    }

    pub fn figure_path(&self, model: &str, config: &str, plot: &str) -> PathBuf {
        self.dir("data/figures").join(format!("{model}__{config}__{plot}.svg"))
    }

    pub fn settings_path(&self) -> PathBuf {
        self.root.join("data/settings.json")
    }

    pub fn settings(&self) -> CliResult<Option<Settings>> {
        let path = self.settings_path();
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| io(&path, e))?;
        let settings = serde_json::from_str(&text).map_err(|e| {
            CliError::Core(bgforecast::Error::Parse {
                context: path.display().to_string(),
                message: e.to_string(),
            })
        })?;
        Ok(Some(settings))
    }

    pub fn save_settings(&self, settings: &Settings) -> CliResult<()> {
        let path = self.settings_path();
        let mut text = serde_json::to_string_pretty(settings).expect("settings serialize");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| io(&path, e))
    }

    /// The workspace unit if one was set, otherwise the config's.
    pub fn display_unit(&self, config: &PipelineConfig) -> CliResult<GlucoseUnit> {
        Ok(self.settings()?.map_or(config.unit, |s| s.unit))
    }

    pub fn load_config(&self, name: &str) -> CliResult<(PipelineConfig, String)> {
        let path = self.config_path(name);
        if !path.is_file() {
            return Err(CliError::ConfigNotFound(path));
        }
        Ok((PipelineConfig::load(&path)?, stem(name).to_string()))
    }

    pub fn load_frame(&self, data_file: &str, interval_minutes: u32) -> CliResult<DatasetFrame> {
        let path = self.raw_path(data_file);
        if !path.is_file() {
            return Err(CliError::RawDatasetNotFound(path));
        }
        let records = parse_csv(&path)?;
        Ok(merge_to_frame(&records, interval_minutes)?)
    }
}

/// Drops a directory prefix but keeps the file name intact.
fn stem_keep_dots(name: &str) -> &str {
    name.rsplit(['/', '\\']).next().unwrap_or(name)
}
