//! File loading with path context and atomic output.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use svr_core::embedding::{self, EmbeddingSet, ScoreSet, Trial};
use svr_core::scoring::{self, PldaModel};
use svr_core::svr::{self, MlpParameters};

use crate::error::{CliError, CliResult};

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

pub fn load_evec(path: &Path) -> CliResult<EmbeddingSet> {
    embedding::load_embeddings(open(path)?).map_err(|e| CliError::core(path.display(), e))
}

pub fn load_trials(path: &Path) -> CliResult<Vec<Trial>> {
    embedding::load_trials(open(path)?).map_err(|e| CliError::core(path.display(), e))
}

pub fn load_scores(path: &Path) -> CliResult<ScoreSet> {
    embedding::load_scores(open(path)?).map_err(|e| CliError::core(path.display(), e))
}

pub fn load_model(path: &Path) -> CliResult<MlpParameters> {
    svr::load_model(open(path)?).map_err(|e| CliError::core(path.display(), e))
}

pub fn load_plda(path: &Path) -> CliResult<PldaModel> {
    scoring::load_plda(open(path)?).map_err(|e| CliError::core(path.display(), e))
}

/// Writes through `fill` into a sibling temp file, then renames it over `path`.
pub fn write_atomic<F>(path: &Path, fill: F) -> CliResult<()>
where
    F: FnOnce(&mut BufWriter<File>) -> svr_core::Result<()>,
{
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let file = File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
        let mut w = BufWriter::new(file);
        fill(&mut w).map_err(|e| CliError::core(path.display(), e))?;
        w.flush().map_err(|e| CliError::io(&tmp, e))?;
        w.get_ref().sync_all().map_err(|e| CliError::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    write_atomic(path, |w| Ok(w.write_all(text.as_bytes())?))
}

pub fn save_evec(path: &Path, set: &EmbeddingSet) -> CliResult<()> {
    write_atomic(path, |w| embedding::save_embeddings(set, w))
}

pub fn save_scores(path: &Path, scores: &ScoreSet) -> CliResult<()> {
    write_atomic(path, |w| embedding::save_scores(scores, w))
}

/// `explicit` if given, else `dir/name`.
pub fn output_path(explicit: &Option<PathBuf>, dir: &Path, name: &str) -> PathBuf {
    explicit.clone().unwrap_or_else(|| dir.join(name))
}
