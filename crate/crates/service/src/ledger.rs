//! Append-only JSON-lines rating ledger with a latest-wins index.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use paintscore::rubric::Rating;

use crate::error::ServiceError;

/// `(painting_id, rater_id)`.
pub type RatingKey = (String, String);

/// On disk every submission is one line; in memory only the newest rating
/// per painting and rater is kept. Appends are ordered, so "newest" means
/// "appended last" and replay rebuilds exactly the same index.
#[derive(Debug)]
pub struct RatingLedger {
    path: PathBuf,
    file: File,
    lines: usize,
    index: BTreeMap<RatingKey, Rating>,
}

impl RatingLedger {
    /// Opens (creating if needed) and replays the ledger at `path`.
    pub fn open(path: &Path) -> Result<Self, ServiceError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut index = BTreeMap::new();
        let mut lines = 0;
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            let all: Vec<String> = reader.lines().collect::<Result<_, _>>()?;
            let last = all.len().saturating_sub(1);
            for (i, line) in all.iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<Rating>(line) {
                    Ok(r) => {
                        index.insert((r.painting_id.clone(), r.rater_id.clone()), r);
                        lines += 1;
                    }
                    // a crash mid-append can only truncate the final line
                    Err(e) if i == last => log::warn!("{}: ignoring truncated last line: {e}", path.display()),
                    Err(e) => {
                        return Err(ServiceError::Ledger(format!("{}: line {}: {e}", path.display(), i + 1)));
                    }
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(RatingLedger {
            path: path.to_path_buf(),
            file,
            lines,
            index,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Number of submissions ever recorded.
    pub fn len(&self) -> usize {
        self.lines
    }

    pub fn is_empty(&self) -> bool {
        self.lines == 0
    }

    /// Writes one line and updates the index; returns the new length.
    pub fn append(&mut self, rating: Rating) -> Result<usize, ServiceError> {
        let mut line = serde_json::to_string(&rating)?;
        line.push('\n');
        // a single write keeps the line whole even if another process appends
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        self.index
            .insert((rating.painting_id.clone(), rating.rater_id.clone()), rating);
        self.lines += 1;
        Ok(self.lines)
    }

    pub fn latest(&self) -> &BTreeMap<RatingKey, Rating> {
        &self.index
    }

    /// Newest rating of every rater for one painting.
    pub fn for_painting(&self, painting_id: &str) -> Vec<Rating> {
        self.index
            .iter()
            .filter(|((p, _), _)| p == painting_id)
            .map(|(_, r)| r.clone())
            .collect()
    }
}
