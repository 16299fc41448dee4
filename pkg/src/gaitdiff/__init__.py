"""Diffusion-policy locomotion control on a synthetic quadruped proxy.

Subpackages cover the full pipeline: plant simulation, scripted gait
controllers, offline dataset generation, a small tape-based autodiff
library, the transformer denoiser, DDPM/DDIM samplers, training, and
closed-loop receding-horizon deployment with benchmark metrics.
"""

__version__ = "0.1.0"

from .backend import backend_name, have_compiled

__all__ = ["backend_name", "have_compiled", "__version__"]
