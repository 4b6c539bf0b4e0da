"""One-layer transformers for in-context linear regression with and without
positional encodings: data, model, manual gradients, Adam training, L2 PGD
attacks, empirical gap analysis and numerically evaluated complexity bounds."""

from .attack import AttackSpec, adversarial_risk, pgd, pgd_batch
from .analysis import GapRecord, effective_weight, generalization_gap, risk
from .datagen import Dataset, build_dataset, load_dataset, save_dataset
from .grad import backward, fd_check, loss_and_grads
from .model import ModelParams, forward, forward_batch, init_params, load_checkpoint, save_checkpoint
from .train import TrainConfig, train

__version__ = "0.1.0"
