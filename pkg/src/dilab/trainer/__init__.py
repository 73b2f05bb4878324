"""Small adversarial training stack with hand-written gradients."""

from .discrepancy import DiscrepancyEstimate, estimate_latent_discrepancy
from .heads import (
    ModelStack,
    build_stack,
    classification_loss,
    generator_objective,
    ss_discriminator_loss,
    st_discriminator_loss,
)
from .sweep import DG_GRID, MSDA_GRID, median_report, sweep
from .train import SweepRecord, TrainConfig, TrainingDiverged, train_dg, train_msda

__all__ = [
    "DiscrepancyEstimate", "estimate_latent_discrepancy", "ModelStack", "build_stack",
    "classification_loss", "generator_objective", "ss_discriminator_loss", "st_discriminator_loss",
    "DG_GRID", "MSDA_GRID", "median_report", "sweep", "SweepRecord", "TrainConfig",
    "TrainingDiverged", "train_dg", "train_msda",
]
