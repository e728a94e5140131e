//! Audio I/O, manifests, feature extraction with an on-disk cache, batching
//! and the synthetic prosody corpus.

mod batch;
mod features;
mod manifest;
pub mod oracle;
mod synth;
mod wav;

pub use batch::{batch_iter, batch_order, Batch};
pub use features::{extract_features, load_features, Dataset, Example, FeatureConfig};
pub use manifest::{Manifest, ManifestEntry, Split};
pub use synth::{
    build_synth_dataset, item_rng, synth_utterance, synth_utterance_detailed, Contour, SynthSpec, VoicedSpan,
    HIGH_F0, LOW_F0,
};
pub use wav::{crop_or_pad, encode_wav, load_wav, parse_wav, quantize, write_wav};
