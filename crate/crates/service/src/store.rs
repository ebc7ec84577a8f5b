//! Scene, token and distribution files under the data directory. Every write
//! goes to a temporary file in the same directory and is renamed into place.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sparsescene::scene::SceneDoc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub revision: u64,
    pub scene: SceneDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frozen_snapshot: Option<SceneDoc>,
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("scenes"))?;
        fs::create_dir_all(root.join("tokens"))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn write_atomic(&self, path: &Path, bytes: &[u8]) -> io::Result<()> {
        let dir = path.parent().unwrap_or(&self.root);
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(bytes)?;
        tmp.as_file().sync_all()?;
        tmp.persist(path).map_err(|e| e.error)?;
        Ok(())
    }

    fn scene_path(&self, id: u64) -> PathBuf {
        self.root.join("scenes").join(format!("{id}.json"))
    }

    pub fn save_scene(&self, id: u64, file: &SceneFile) -> io::Result<()> {
        let bytes = serde_json::to_vec_pretty(file).map_err(io::Error::other)?;
        self.write_atomic(&self.scene_path(id), &bytes)
    }

    /// All stored scenes in id order. Files not named `<id>.json` are ignored.
    pub fn load_scenes(&self) -> io::Result<Vec<(u64, SceneFile)>> {
        let mut out = Vec::new();
        for entry in fs::read_dir(self.root.join("scenes"))? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let Some(id) = path.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse().ok()) else {
                continue;
            };
            let file: SceneFile = serde_json::from_slice(&fs::read(&path)?)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))?;
            out.push((id, file));
        }
        out.sort_by_key(|(id, _)| *id);
        Ok(out)
    }

    pub fn save_tokens(&self, id: &str, bytes: &[u8]) -> io::Result<()> {
        self.write_atomic(&self.root.join("tokens").join(format!("{id}.tok")), bytes)
    }

    pub fn load_tokens(&self) -> io::Result<Vec<(String, Vec<u8>)>> {
        let mut out = Vec::new();
        for entry in fs::read_dir(self.root.join("tokens"))? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("tok") {
                continue;
            }
            if let Some(id) = path.file_stem().and_then(|s| s.to_str()) {
                out.push((id.to_string(), fs::read(&path)?));
            }
        }
        out.sort();
        Ok(out)
    }

    fn distribution_path(&self) -> PathBuf {
        self.root.join("distribution.json")
    }

    pub fn save_distribution(&self, text: &str) -> io::Result<()> {
        self.write_atomic(&self.distribution_path(), text.as_bytes())
    }

    pub fn load_distribution(&self) -> io::Result<Option<String>> {
        match fs::read_to_string(self.distribution_path()) {
            Ok(s) => Ok(Some(s)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc() -> SceneDoc {
        SceneDoc {
            width: 4,
            height: 4,
            frozen_background: false,
            instances: vec![],
        }
    }

    #[test]
    fn scenes_round_trip_in_id_order() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        for id in [10, 2] {
            let f = SceneFile {
                revision: id,
                scene: doc(),
                frozen_snapshot: None,
            };
            store.save_scene(id, &f).unwrap();
        }
        fs::write(dir.path().join("scenes/notes.txt"), "x").unwrap();
        let loaded = store.load_scenes().unwrap();
        assert_eq!(loaded.iter().map(|(i, _)| *i).collect::<Vec<_>>(), vec![2, 10]);
        assert_eq!(loaded[1].1.revision, 10);
    }

    #[test]
    fn overwrite_leaves_no_temp_files() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let mut f = SceneFile {
            revision: 1,
            scene: doc(),
            frozen_snapshot: Some(doc()),
        };
        store.save_scene(1, &f).unwrap();
        f.revision = 2;
        store.save_scene(1, &f).unwrap();
        let names: Vec<_> = fs::read_dir(dir.path().join("scenes")).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names, vec![std::ffi::OsString::from("1.json")]);
        assert_eq!(store.load_scenes().unwrap()[0].1, f);
    }

    #[test]
    fn tokens_and_distribution() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        assert_eq!(store.load_distribution().unwrap(), None);
        store.save_distribution("{}\n").unwrap();
        assert_eq!(store.load_distribution().unwrap().as_deref(), Some("{}\n"));
        store.save_tokens("ab", b"TOKE").unwrap();
        assert_eq!(store.load_tokens().unwrap(), vec![("ab".to_string(), b"TOKE".to_vec())]);
    }
}
