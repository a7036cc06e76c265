from .contrast import fit_contrast_curve
from .phase_space import fit_detuning, fit_homodyne_fringe, fit_trajectory, unwrap_nearest
from .phonons import fit_coherent, reconstruct_phonons
from .result import FitResult

__all__ = ["FitResult", "fit_coherent", "fit_contrast_curve", "fit_detuning",
           "fit_homodyne_fringe", "fit_trajectory", "reconstruct_phonons", "unwrap_nearest"]
