"""Sparse feature selection + masked transformer autoencoder + representation matching.

The package is organized around the three model components (dgfs, ata, rml),
the autodiff substrate they run on (diffcore), the temperature controller
(sparsity), the end-to-end assembly (model), and the surrounding tooling
(data, analysis, cli).
"""

from .ata import AtaConfig, attention, masked_attention, reconstruction_loss
from .data import Dataset, SyntheticSpec, generate_synthetic, ingest_csv, split
from .dgfs import SelectionState, apply_mask, compute_selection, straight_through_mask
from .diffcore import Tensor, gradient_check, parameter
from .gumbel import GumbelSample, gumbel_softmax, hard_limit_argmax, sample_gumbel
from .model import (
    ModelParams,
    TrainConfig,
    forward,
    load_checkpoint,
    predict,
    save_checkpoint,
    total_loss,
    train,
)
from .rml import align_loss, final_representation, project_zs, r_add, r_sub
from .sparsity import PidState, error_signal, make_pid, update_tau

__version__ = "0.1.0"
