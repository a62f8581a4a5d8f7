//! Split manifests: which ids went to train, val and test.

use std::path::Path;

use tumorseg_core::dataset::SplitIds;

use crate::error::{Error, Result};
use crate::io::{read_file, write_file};

pub fn to_string(ids: &SplitIds) -> String {
    let body = toml::to_string(ids).expect("split ids always serialize");
    format!(
        "# train/val/test assignment ({} / {} / {} samples)\n{body}",
        ids.train.len(),
        ids.val.len(),
        ids.test.len()
    )
}

pub fn write_manifest(path: &Path, ids: &SplitIds) -> Result<()> {
    write_file(path, to_string(ids))
}

pub fn read_manifest(path: &Path) -> Result<SplitIds> {
    let text = read_file(path)?;
    toml::from_str(&text).map_err(|e| toml_error(path, &text, &e))
}

pub(crate) fn toml_error(path: &Path, text: &str, e: &toml::de::Error) -> Error {
    let line = e
        .span()
        .map_or(0, |s| text[..s.start].matches('\n').count() as u64 + 1);
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: e.message().to_owned(),
    }
}
