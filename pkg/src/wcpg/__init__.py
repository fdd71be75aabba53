"""Risk-aware actor-critic with a Gaussian return critic, plus the driving scenarios it is trained on."""
__version__ = "0.1.0"

from .risk import GaussianReturn, RiskLevel, cvar_coefficient, cvar_gaussian, w2_gaussian  # noqa: E402

__all__ = ["GaussianReturn", "RiskLevel", "cvar_coefficient", "cvar_gaussian", "w2_gaussian", "__version__"]
