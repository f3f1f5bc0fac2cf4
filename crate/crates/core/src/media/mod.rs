//! Clip container, latent files, task manifests and retake arithmetic.

mod clip;
mod latent;
mod manifest;

pub use clip::{
    read_clip, retake_start, validate_temporal, write_clip, ClipDims, ClipHeader, VideoClip, CLIP_MAGIC,
};
pub use latent::{latent_from_bytes, latent_to_bytes, read_latent, write_latent, LATENT_MAGIC};
pub use manifest::{
    load_task_manifest, parse_task_manifest, render_task_manifest, EditTask, ManifestEntry, TaskManifest,
};
