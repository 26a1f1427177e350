"""Occupation-skill demand completion: latent factors fused with convolutional text features."""

from .config import Hyperparams
from .data import (
    EntityCatalog,
    SparseIncidence,
    ingest_edges,
    ingest_entities,
    split_holdout,
    write_edges,
    write_entities,
)
from .encoder import TextEncoderParams, Vocab, build_vocab, encode_text, tokenize
from .evaluation import EvalReport, evaluate, oracle_complete, rank_skills
from .model import (
    FactorModel,
    complete_matrix,
    fused_features,
    init_model,
    load_checkpoint,
    predict_entry,
    save_checkpoint,
)
from .reporting import (
    DemandReport,
    ProficiencyThresholds,
    bin_proficiency,
    clamp_predictions,
    demand_report,
)
from .training import LossTrace, gradient, loss, sgd_step, train

__version__ = "0.1.0"
