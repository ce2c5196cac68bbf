//! Word embeddings: co-occurrence statistics, GloVe, skip-gram with negative
//! sampling, and the plain-text vector table format.

mod cooccur;
mod glove;
mod sgns;
mod table;

pub use cooccur::{build_cooccurrence, CooccurrenceMatrix};
pub use glove::{
    glove_cell_gradient, glove_gradient, glove_loss, glove_train, weight_f, GloveConfig,
    GloveGradient, GloveParams, GloveTrained,
};
pub use sgns::{sgns_step_gradient, sgns_step_loss, sgns_train, SgnsConfig, SgnsGradient, SgnsParams};
pub use table::{load_pretrained, EmbeddingTable};
