"""Spectral spatio-temporal modeling of advection-diffusion fields.

Suppresses the Gibbs phenomenon of truncated Fourier reconstructions by
mirror-extending each frame along both axes before modeling, carries the
physics-derived coefficient dynamics onto the extended domain, and runs
Kalman filtering, forecasting, and noise-variance estimation on top.
"""

from .dynamics import AugmentedState, DiscreteTransition, build_transition, flipped_generator, matrix_exp
from .evaluate import (
    ModelSpec,
    Region,
    build_pipeline,
    gibbs_energy,
    mae,
    run_comparison,
    summarize_over_seeds,
    truncated_reconstruction,
)
from .galerkin import (
    DiffusivityField,
    TransitionGenerator,
    VelocityField,
    assemble_transition,
    normalization_c,
    psi_entry,
)
from .grid import DEFAULT_FLIP, Field, FlipVariant, GridSpec, flip_field, flip_matrix, unflip
from .gridstack import GridStack, load_stack, render_heatmap, save_stack
from .kalman import (
    FilterError,
    FilterResult,
    NoiseParams,
    StateSpaceModel,
    direct_model,
    estimate_variances,
    flipped_model,
    kf_filter,
    kf_forecast,
)
from .motion import MotionConfig, diffusivity_from_velocity, estimate_velocity
from .preprocess import WindowField, apply_window, hamming2d, reflectivity_to_rain
from .simulate import SimulationConfig, forcing_field, simulate_advection, synthetic_storm_stack
from .spectral import (
    BasisMatrix,
    FlipTransfer,
    ModeOrdering,
    SpectralState,
    WavenumberSets,
    analyze,
    basis_matrix,
    build_wavenumbers,
    flip_transfer,
    mirror_phase,
    synthesize,
)

__version__ = "0.1.0"
