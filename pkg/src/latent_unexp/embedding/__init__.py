"""Latent spaces: HIN walks + skip-gram, autoencoder, external tables, projection."""
from .autoencoder import AutoencoderConfig, AutoencoderModel, autoencoder_loss_grad, train_autoencoder
from .projection import Projection, pca_project, write_projection
from .skipgram import SkipGramConfig, SkipGramModel, skipgram_loss_grad, train_skipgram
from .table import EmbeddingTable, load_embeddings, save_binary, save_embeddings, save_text
from .walks import WalkConfig, WalkCorpus, hetero_walks, transition_table, type_shares

__all__ = [
    "AutoencoderConfig",
    "AutoencoderModel",
    "EmbeddingTable",
    "Projection",
    "SkipGramConfig",
    "SkipGramModel",
    "WalkConfig",
    "WalkCorpus",
    "autoencoder_loss_grad",
    "hetero_walks",
    "load_embeddings",
    "pca_project",
    "save_binary",
    "save_embeddings",
    "save_text",
    "skipgram_loss_grad",
    "train_autoencoder",
    "train_skipgram",
    "transition_table",
    "type_shares",
    "write_projection",
]
