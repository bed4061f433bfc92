use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use super::images::png_files;
use super::{FaceSwapId, RealFrameId};
use crate::identity::{id_reference, EmbeddingProvider, IdentityReference};
use crate::imgmetrics::ImageBuf;
use crate::{Error, Result};

/// The ordered list of face swaps a creation submission must contain,
/// with each entry's target image and each source person's reference.
#[derive(Clone, Debug)]
pub struct SwapTaskList {
    entries: Vec<FaceSwapId>,
    targets: BTreeMap<FaceSwapId, Arc<ImageBuf>>,
    source_refs: BTreeMap<String, IdentityReference>,
}

impl SwapTaskList {
    pub fn new(
        entries: Vec<FaceSwapId>,
        targets: BTreeMap<FaceSwapId, Arc<ImageBuf>>,
        source_refs: BTreeMap<String, IdentityReference>,
    ) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for e in &entries {
            if !seen.insert(e) {
                return Err(Error::Parameter(format!("duplicate task {e}")));
            }
            if !targets.contains_key(e) {
                return Err(Error::Parameter(format!("task {e} has no target image")));
            }
            if !source_refs.contains_key(&e.id_s) {
                return Err(Error::Parameter(format!("task {e} has no reference for source {}", e.id_s)));
            }
        }
        Ok(SwapTaskList {
            entries,
            targets,
            source_refs,
        })
    }

    pub fn entries(&self) -> &[FaceSwapId] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn target(&self, id: &FaceSwapId) -> &ImageBuf {
        &self.targets[id]
    }

    pub fn source_ref(&self, person: &str) -> &IdentityReference {
        &self.source_refs[person]
    }

    pub fn source_refs(&self) -> &BTreeMap<String, IdentityReference> {
        &self.source_refs
    }

    pub fn read_task_file(path: &Path) -> Result<Vec<FaceSwapId>> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(FaceSwapId::parse)
            .collect()
    }

    pub fn write_task_file(path: &Path, entries: &[FaceSwapId]) -> Result<()> {
        let text: String = entries.iter().map(|e| e.render() + "\n").collect();
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Load a task list from a dataset laid out as `tasks.txt`, `real/`
    /// (targets) and `train/real/` (source references; falls back to the
    /// person's frames in `real/` when the training split is absent).
    pub fn load(tasks_path: &Path, provider: &dyn EmbeddingProvider) -> Result<Self> {
        let root = tasks_path.parent().unwrap_or(Path::new("."));
        let entries = Self::read_task_file(tasks_path)?;
        let real_dir = root.join("real");
        let targets = entries
            .par_iter()
            .map(|e| {
                let path = real_dir.join(e.target_frame().render());
                Ok((e.clone(), Arc::new(ImageBuf::load_png(&path)?)))
            })
            .collect::<Result<BTreeMap<_, _>>>()?;

        let people: BTreeSet<&str> = entries.iter().map(|e| e.id_s.as_str()).collect();
        let by_person = |dir: &Path| -> Result<BTreeMap<String, Vec<std::path::PathBuf>>> {
            let mut map: BTreeMap<String, Vec<_>> = BTreeMap::new();
            if dir.is_dir() {
                for p in png_files(dir)? {
                    let name = p.file_name().unwrap().to_string_lossy().into_owned();
                    if let Ok(id) = RealFrameId::parse(&name) {
                        map.entry(id.person).or_default().push(p);
                    }
                }
            }
            Ok(map)
        };
        let train = by_person(&root.join("train").join("real"))?;
        let test = by_person(&real_dir)?;
        let source_refs = people
            .into_par_iter()
            .map(|person| {
                let files = train
                    .get(person)
                    .or_else(|| test.get(person))
                    .ok_or_else(|| Error::Parameter(format!("no reference frames for source {person}")))?;
                let images = files.iter().map(|p| ImageBuf::load_png(p)).collect::<Result<Vec<_>>>()?;
                Ok((person.to_string(), id_reference(&images, person, provider)?))
            })
            .collect::<Result<BTreeMap<_, _>>>()?;
        Self::new(entries, targets, source_refs)
    }
}
