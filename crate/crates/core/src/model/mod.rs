//! The network: attention layers, state-space blocks, and their composition.

pub mod checkpoint;
pub mod config;
pub mod gal;
pub mod network;
pub mod params;
pub mod s3m;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use config::{Activation, AttentionKind, GsanConfig, HeadMode, ScanOrder, TaskHead, UMode};
pub use gal::{gal_attention_matrix, gal_forward, GalOutput, GalSpec};
pub use network::{gsan_forward, layer_norm, params_on_tape, predict, ForwardOutput};
pub use params::{GalParams, GsanParams, LayerParams, ParamKind, S3mParams};
pub use s3m::{s3m_block, selective_scan};
