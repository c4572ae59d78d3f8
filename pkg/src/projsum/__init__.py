"""Simulation and verification toolkit for the matrix model X_n = P_n + i*Q_n.

P_n and Q_n are independently Haar-rotated Hermitian matrices with two-atom
spectra.  The package samples the model, builds the hyperbola-rectangle
support geometry and the corner atom weights of the limit law, verifies the
finite-n structure theorems (support, normality of the centered square, the
minimum-singular-value bound), runs the hermitization pipeline that recovers
the spectral measure from log potentials, and measures convergence across
dimensions.
"""

__version__ = "0.1.0"

from .model import (
    InvalidDimensionError,
    ModelRealization,
    ModelSpec,
    TwoAtomLaw,
    assemble_model,
    build_two_atom_hermitian,
    sample_haar_unitary,
    substream_rng,
    substream_seed,
)
from .geometry import (
    BrownAtomWeights,
    DegenerateGeometryError,
    HyperbolaRectangle,
    atom_weights,
    dist_to_hr,
    dist_to_hr_many,
    hr_points,
    hyperbola_residual,
    in_rectangle,
    make_geometry,
    on_hyperbola,
)
from .spectra import (
    ComputationError,
    PairingReport,
    StructureReport,
    WeightedPointMeasure,
    centered_model,
    eigenspace_pairing_check,
    esd,
    freeness_diagnostic,
    min_singular_value,
    nu_n_z,
    structure_report,
    verify_sv_bound,
)
from .hermitization import (
    BrownPipelineResult,
    InvalidGridError,
    LaplacianRecovery,
    PerturbedNode,
    PotentialGrid,
    brown_pipeline,
    fk_determinant,
    laplacian_recover,
    log_potential,
    potential_grid,
    sample_potential_grid,
    worker_count,
)
from .convergence import (
    ConvergenceReport,
    CornerAtomMasses,
    TightnessEntry,
    bl_distance,
    convergence_run,
    corner_atom_masses,
    tightness_probe,
    trend_acceptable,
)

__all__ = [name for name in dir() if not name.startswith("_")]
