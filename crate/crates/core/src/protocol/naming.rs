use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Target person, source person, video index and frame index of one
/// face-swap image, rendered as `idT_idS_vidIdx_frameIdx.png`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FaceSwapId {
    pub id_t: String,
    pub id_s: String,
    pub vid_idx: u32,
    pub frame_idx: u32,
}

/// A real frame, rendered as `idT_vidIdx_frameIdx.png`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RealFrameId {
    pub person: String,
    pub vid_idx: u32,
    pub frame_idx: u32,
}

fn naming_error(name: &str, token: &str, reason: &str) -> Error {
    Error::Naming {
        name: name.to_string(),
        token: token.to_string(),
        reason: reason.to_string(),
    }
}

fn check_label(name: &str, token: &str) -> Result<()> {
    if token.is_empty() {
        return Err(naming_error(name, token, "is an empty person label"));
    }
    Ok(())
}

fn parse_index(name: &str, token: &str) -> Result<u32> {
    if token.is_empty() || !token.bytes().all(|b| b.is_ascii_digit()) {
        return Err(naming_error(name, token, "is not a non-negative integer"));
    }
    token
        .parse()
        .map_err(|_| naming_error(name, token, "is out of range"))
}

fn split_png<'a>(name: &'a str, expected: usize) -> Result<Vec<&'a str>> {
    if name.contains('/') || name.contains('\\') {
        return Err(naming_error(name, name, "is not a basename"));
    }
    let Some(stem) = name.strip_suffix(".png") else {
        let ext = name.rsplit_once('.').map_or(name, |(_, e)| e);
        return Err(naming_error(name, ext, "must be the .png extension"));
    };
    let tokens: Vec<&str> = stem.split('_').collect();
    if tokens.len() != expected {
        return Err(naming_error(
            name,
            stem,
            &format!("splits into {} tokens, expected {expected}", tokens.len()),
        ));
    }
    Ok(tokens)
}

impl FaceSwapId {
    pub fn new(id_t: &str, id_s: &str, vid_idx: u32, frame_idx: u32) -> Result<Self> {
        Self::parse(&Self::render_parts(id_t, id_s, vid_idx, frame_idx))
    }

    pub fn parse(filename: &str) -> Result<Self> {
        let t = split_png(filename, 4)?;
        check_label(filename, t[0])?;
        check_label(filename, t[1])?;
        if t[0] == t[1] {
            return Err(naming_error(filename, t[1], "source equals target"));
        }
        Ok(FaceSwapId {
            id_t: t[0].to_string(),
            id_s: t[1].to_string(),
            vid_idx: parse_index(filename, t[2])?,
            frame_idx: parse_index(filename, t[3])?,
        })
    }

    fn render_parts(id_t: &str, id_s: &str, vid: u32, frame: u32) -> String {
        format!("{id_t}_{id_s}_{vid:04}_{frame:04}.png")
    }

    pub fn render(&self) -> String {
        Self::render_parts(&self.id_t, &self.id_s, self.vid_idx, self.frame_idx)
    }

    /// The real frame this swap is rendered onto.
    pub fn target_frame(&self) -> RealFrameId {
        RealFrameId {
            person: self.id_t.clone(),
            vid_idx: self.vid_idx,
            frame_idx: self.frame_idx,
        }
    }
}

impl RealFrameId {
    pub fn parse(filename: &str) -> Result<Self> {
        let t = split_png(filename, 3)?;
        check_label(filename, t[0])?;
        Ok(RealFrameId {
            person: t[0].to_string(),
            vid_idx: parse_index(filename, t[1])?,
            frame_idx: parse_index(filename, t[2])?,
        })
    }

    pub fn render(&self) -> String {
        format!("{}_{:04}_{:04}.png", self.person, self.vid_idx, self.frame_idx)
    }
}

impl fmt::Display for FaceSwapId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl fmt::Display for RealFrameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}
