"""Script-driven multimodal video summarization with weighted cross-modal attention."""

from . import synth
from .corpus_io import Corpus, expand_transcripts, load_corpus, save_corpus
from .metrics import (
    EvalReport, eval_multi_gt, eval_single_gt, evaluate, f_score, kendall_tau, spearman_rho,
)
from .model import (
    ModelConfig, SdMvSumParams, count_params, forward, init_params, load_checkpoint,
    save_checkpoint,
)
from .selection import knapsack_select, summary_capacity, top_fraction_select
from .training import TrainConfig, train

__version__ = "0.1.0"
