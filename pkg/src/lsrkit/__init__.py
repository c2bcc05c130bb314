"""lsrkit: desk-scale learned sparse retrieval.

Sparse MLP/MLM projection heads over pluggable embedding providers,
contrastive training with in-batch negatives, exact inverted-index
retrieval, TREC-style evaluation, and co-activation diagnostics.
"""

from .core import SparseVector, TokenSequence, Vocabulary, dot, merge_max, merge_sum, tokenize
from .diagnostics import coactivation_report, stopword_mass, top_terms
from .embeddings import FileEmbeddingProvider, ToyEmbeddingProvider
from .encoders import (
    EncoderConfig,
    MlmHeadParams,
    MlpHeadParams,
    ModelParams,
    Providers,
    encode_document,
    encode_query,
    fuse_document_vectors,
    init_params,
    load_params,
    mlm_encode,
    mlp_encode,
    save_params,
)
from .errors import ContractError, DataError, MissingRecordError, ParseError, ToolkitError
from .evaluation import (
    MetricReport,
    Qrels,
    evaluate_run,
    map_at_k,
    ndcg_at_k,
    read_qrels,
    read_run,
    recall_at_k,
    write_qrels,
    write_run,
)
from .index import (
    COMPILED_KERNELS,
    InvertedIndex,
    RankedList,
    brute_force_search,
    build_index,
    index_stats,
    search,
)
from .ingest import DocumentRecord, QueryRecord, build_query_text, load_corpus, load_queries
from .training import (
    TrainingConfig,
    TrainingPair,
    backward,
    finite_diff_check,
    flops_penalty,
    infonce_loss,
    train,
)

__version__ = "0.1.0"
