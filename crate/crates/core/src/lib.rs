//! Embedding-centroid topic modelling with NPMI coherence scoring and
//! cross-corpus topic comparison.
//!
//! The pipeline runs corpus cleaning and segmentation, document and word
//! embeddings, dimensionality reduction (PCA or UMAP), clustering (k-means or
//! HDBSCAN), centroid topic vectors with nearest-word labels, and finally
//! cosine comparison of topic sets from two corpora. An LDA baseline is
//! included for coherence comparisons.

pub mod cluster;
pub mod coherence;
pub mod compare;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod lda;
pub mod reduce;
pub mod report;
pub mod rng;
pub mod topics;

pub use cluster::{ClusterAssignment, ClusterMethod, ClusterParams, HdbscanParams, NOISE};
pub use coherence::{coherence, npmi, CoherenceReport, WindowIndex};
pub use compare::{cosine, similarity_matrix, SimilarityReport};
pub use corpus::{build_corpus, clean_text, segment, Corpus, CorpusStats, Document, SegmentMode, SegmentOptions};
pub use embed::{read_embeddings, EmbeddingMatrix, EmbeddingProvider, JointEmbedding};
pub use error::{Error, Result};
pub use lda::{lda_fit, LdaModel};
pub use reduce::{ReduceMethod, ReducedMatrix, Reducer, UmapParams};
pub use topics::{build_topic_model, reduce_topics, Provenance, TopicModel};
