use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use thiserror::Error;

use super::{parse_graph, serialize_graph, GraphParseError, WorldModelGraph};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("graph store I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("stored graph at {path} is unreadable: {source}")]
    Corrupt {
        path: PathBuf,
        #[source]
        source: GraphParseError,
    },
}

/// One graph text file per app under a root directory.
///
/// Writes go through a temporary file and a rename, under a store-wide
/// lock, so concurrent episodes never observe a half-written graph.
#[derive(Debug)]
pub struct GraphStore {
    root: PathBuf,
    write_lock: Mutex<()>,
}

impl GraphStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        GraphStore {
            root: root.into(),
            write_lock: Mutex::new(()),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, app_name: &str) -> PathBuf {
        let stem: String = app_name
            .trim()
            .to_lowercase()
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || c == '-' {
                    c
                } else {
                    '_'
                }
            })
            .collect();
        self.root.join(format!("{stem}.graph.txt"))
    }

    pub fn save(&self, app_name: &str, graph: &WorldModelGraph) -> Result<PathBuf, StoreError> {
        let path = self.path_for(app_name);
        let io_err = |source| StoreError::Io {
            path: path.clone(),
            source,
        };
        let _guard = self.write_lock.lock().unwrap_or_else(|p| p.into_inner());
        fs::create_dir_all(&self.root).map_err(io_err)?;
        let tmp = path.with_extension("txt.tmp");
        fs::write(&tmp, serialize_graph(graph)).map_err(io_err)?;
        fs::rename(&tmp, &path).map_err(io_err)?;
        Ok(path)
    }

    /// `Ok(None)` when nothing was ever saved for the app.
    pub fn load(&self, app_name: &str) -> Result<Option<WorldModelGraph>, StoreError> {
        let path = self.path_for(app_name);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(source) => return Err(StoreError::Io { path, source }),
        };
        parse_graph(&text)
            .map(Some)
            .map_err(|source| StoreError::Corrupt { path, source })
    }
}
