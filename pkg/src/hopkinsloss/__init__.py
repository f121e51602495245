"""Hopkins statistic as a differentiable loss for shaping feature-space topology."""
from .hopkins import HopkinsConfig, hopkins_loss, hopkins_statistic
from .metrics import get_metric
from .synth import SynthSpec, generate
from .train import TrainConfig, fit, run_autoencoder, run_classifier

__all__ = ["HopkinsConfig", "hopkins_statistic", "hopkins_loss", "get_metric",
           "SynthSpec", "generate", "TrainConfig", "fit", "run_classifier", "run_autoencoder"]
__version__ = "0.1.0"
