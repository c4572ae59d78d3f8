"""Convergence diagnostics: BL distances, corner atom masses, trend runs.

The empirical spectral distributions converge to the limit law supported on
H intersect R with corner atoms; at desk scale this module measures that
convergence with a bounded-Lipschitz distance between pooled ESDs, checks
the deterministic corner masses through an exact subspace-rank computation,
and probes tightness when atoms are pushed out to infinity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .geometry import (
    DegenerateGeometryError,
    atom_weights,
    dist_to_hr_many,
    make_geometry,
)
from .model import (
    ModelRealization,
    ModelSpec,
    TwoAtomLaw,
    assemble_model,
    build_two_atom_hermitian,
    substream_seed,
)
from .spectra import WeightedPointMeasure, esd

__all__ = [
    "CornerAtomMasses",
    "ConvergenceReport",
    "TightnessEntry",
    "bl_distance",
    "corner_atom_masses",
    "convergence_run",
    "tightness_probe",
    "trend_acceptable",
]


def _bin_measure(measure: WeightedPointMeasure, resolution: float) -> tuple[np.ndarray, np.ndarray]:
    """Snap a measure to the shared grid of spacing ``resolution``."""
    pts = np.asarray(measure.points, dtype=np.complex128)
    ij = np.stack([np.round(pts.real / resolution), np.round(pts.imag / resolution)], axis=1)
    uniq, inverse = np.unique(ij.astype(np.int64), axis=0, return_inverse=True)
    w = np.zeros(len(uniq))
    np.add.at(w, inverse, measure.weights)
    binned = (uniq[:, 0] + 1j * uniq[:, 1]) * resolution
    return binned, w / w.sum()


def bl_distance(
    mu1: WeightedPointMeasure,
    mu2: WeightedPointMeasure,
    grid_resolution: float,
) -> float:
    """Bounded-Lipschitz distance between two compactly supported measures.

    Normalization: sup of integral of f d(mu1 - mu2) over 1-Lipschitz test
    functions with values in [0, 1], so two unit atoms at distance d are
    min(d, 1) apart.  Both measures are binned on a shared grid of the
    given resolution and the distance of the binned measures is computed
    exactly, as an optimal-transport problem with ground cost
    min(1, |x - y|) solved as a linear program.  The binning perturbs each
    measure by at most resolution/sqrt(2) in this metric.
    """
    if grid_resolution <= 0:
        raise ValueError("grid_resolution must be positive")
    p1, w1 = _bin_measure(mu1, grid_resolution)
    p2, w2 = _bin_measure(mu2, grid_resolution)
    if p1.shape == p2.shape and np.array_equal(p1, p2) and np.allclose(w1, w2, atol=1e-15):
        return 0.0
    cost = np.minimum(1.0, np.abs(p1[:, None] - p2[None, :]))
    m, k = len(w1), len(w2)
    # row sums = w1, column sums = w2 over the transport plan
    a_eq = sparse.vstack(
        [
            sparse.kron(sparse.eye(m, format="csr"), np.ones((1, k)), format="csr"),
            sparse.kron(np.ones((1, m)), sparse.eye(k, format="csr"), format="csr"),
        ],
        format="csr",
    )
    b_eq = np.concatenate([w1, w2])
    res = linprog(cost.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0.0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return max(0.0, float(res.fun))


@dataclass(frozen=True)
class CornerAtomMasses:
    """Per-corner masses, in the fixed corner order of the geometry.

    ``esd_mass`` counts ESD points within the corner radius;
    ``intersection_mass`` is dim(E_a(P) int E_b(Q)) / n computed from
    principal angles between the exact eigenspaces.  The two agree for
    every realization, and both are bounded below by
    max(0, a_n + b_n - 1) with the realized weights of the matching atoms.
    """

    corners: tuple[complex, complex, complex, complex]
    esd_mass: tuple[float, float, float, float]
    intersection_mass: tuple[float, float, float, float]


def _eigenspace(matrix: np.ndarray, value: float, other: float) -> np.ndarray:
    vals, vecs = np.linalg.eigh(matrix)
    return vecs[:, np.abs(vals - value) < 0.5 * abs(other - value)]


def corner_atom_masses(
    realization: ModelRealization,
    tol: float = 1e-9,
    angle_tol: float = 1e-9,
) -> CornerAtomMasses:
    """Empirical and subspace corner masses of one realization.

    Corner eigenvalues are exact joint eigenvalues, not approximate
    clusters, so the default radius tol * scale is tiny on purpose.  The
    subspace dimension counts principal-angle cosines above 1 - angle_tol
    between the relevant eigenspaces of P_n and Q_n.  Weight-degenerate
    laws (weight 0 or 1 with distinct atoms) are fine here: the empty
    eigenspace just contributes zero everywhere.
    """
    measure = esd(realization)
    n = realization.n
    p_law, q_law = realization.realized_p_law, realization.realized_q_law
    if p_law.loc == p_law.loc_alt or q_law.loc == q_law.loc_alt:
        raise DegenerateGeometryError("corner masses need distinct atom locations")
    scale = max(abs(p_law.gap), abs(q_law.gap), 1.0)
    corners = (
        complex(p_law.loc, q_law.loc),
        complex(p_law.loc, q_law.loc_alt),
        complex(p_law.loc_alt, q_law.loc),
        complex(p_law.loc_alt, q_law.loc_alt),
    )
    bases_p = {
        p_law.loc: _eigenspace(realization.p_matrix, p_law.loc, p_law.loc_alt),
        p_law.loc_alt: _eigenspace(realization.p_matrix, p_law.loc_alt, p_law.loc),
    }
    bases_q = {
        q_law.loc: _eigenspace(realization.q_matrix, q_law.loc, q_law.loc_alt),
        q_law.loc_alt: _eigenspace(realization.q_matrix, q_law.loc_alt, q_law.loc),
    }
    esd_mass = []
    inter_mass = []
    for corner in corners:
        esd_mass.append(measure.mass_within(corner, tol * scale))
        ba = bases_p[corner.real]
        bb = bases_q[corner.imag]
        if ba.size == 0 or bb.size == 0:
            inter_mass.append(0.0)
            continue
        cosines = np.linalg.svd(ba.conj().T @ bb, compute_uv=False)
        inter_mass.append(int(np.sum(cosines > 1.0 - angle_tol)) / n)
    return CornerAtomMasses(
        corners=corners,
        esd_mass=tuple(esd_mass),
        intersection_mass=tuple(inter_mass),
    )


@dataclass(frozen=True)
class ConvergenceReport:
    """Distances to the reference ESD and per-n structural deviations."""

    n_schedule: tuple[int, ...]
    reference_n: int
    distances: tuple[float, ...]
    support_devs: tuple[float, ...]
    corner_mass_errors: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "n_schedule": list(self.n_schedule),
            "reference_n": self.reference_n,
            "distances": list(self.distances),
            "support_devs": list(self.support_devs),
            "corner_mass_errors": list(self.corner_mass_errors),
        }


def _pooled_esd(
    p_law: TwoAtomLaw, q_law: TwoAtomLaw, n: int, samples: int, seed: int
) -> WeightedPointMeasure:
    points = []
    for i in range(samples):
        child = substream_seed(seed, n, i)
        realization = assemble_model(ModelSpec(p_law=p_law, q_law=q_law, n=n, seed=child))
        points.append(esd(realization).points)
    return WeightedPointMeasure.uniform(np.concatenate(points))


def convergence_run(
    p_law: TwoAtomLaw,
    q_law: TwoAtomLaw,
    n_schedule: list[int] | tuple[int, ...],
    samples: int,
    seed: int,
    reference_n: int | None = None,
    grid_resolution: float | None = None,
) -> ConvergenceReport:
    """Pooled-ESD convergence study across a schedule of dimensions.

    For each n in the strictly increasing schedule, pools the ESD over
    ``samples`` realizations (child seeds derived from (seed, n, i)) and
    reports the BL distance to the reference pooled ESD at ``reference_n``
    (default: the largest schedule entry), the support deviation, and the
    worst corner-mass error against the realized atom-weight predictions.
    Deterministic given its arguments.
    """
    schedule = tuple(int(n) for n in n_schedule)
    if not schedule or any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError(f"schedule must be strictly increasing, got {n_schedule!r}")
    if reference_n is None:
        reference_n = schedule[-1]
    if reference_n < schedule[-1]:
        raise ValueError("reference_n must be at least the largest schedule entry")
    geom = make_geometry(p_law, q_law)
    if grid_resolution is None:
        grid_resolution = geom.scale / 200.0
    reference = _pooled_esd(p_law, q_law, reference_n, samples, seed)
    distances = []
    support_devs = []
    corner_errors = []
    for n in schedule:
        pooled = reference if n == reference_n else _pooled_esd(p_law, q_law, n, samples, seed)
        distances.append(bl_distance(pooled, reference, grid_resolution))
        support_devs.append(float(np.max(dist_to_hr_many(geom, pooled.points))))
        realized_p = build_two_atom_hermitian(p_law, n)[1]
        realized_q = build_two_atom_hermitian(q_law, n)[1]
        predicted = atom_weights(realized_p.weight, realized_q.weight).corner_weights
        empirical = [pooled.mass_within(c, 1e-9 * geom.scale) for c in geom.corners]
        corner_errors.append(max(abs(e - p) for e, p in zip(empirical, predicted)))
    return ConvergenceReport(
        n_schedule=schedule,
        reference_n=reference_n,
        distances=tuple(distances),
        support_devs=tuple(support_devs),
        corner_mass_errors=tuple(corner_errors),
    )


def trend_acceptable(distances, noises=None, noise_factor: float = 1.5) -> bool:
    """Weak-decrease check allowing one inversion within the noise allowance.

    ``noises[i]`` is the Monte Carlo noise scale attached to the step from
    entry i to entry i+1; an inversion of size at most noise_factor times
    that is tolerated, but only once.
    """
    inversions = 0
    for i in range(len(distances) - 1):
        excess = distances[i + 1] - distances[i]
        if excess <= 0:
            continue
        inversions += 1
        allowance = noise_factor * (noises[i] if noises is not None else 0.0)
        if inversions > 1 or excess > allowance:
            return False
    return True


@dataclass(frozen=True)
class TightnessEntry:
    """Escape diagnostics for one law pair; informational only."""

    p_law: TwoAtomLaw
    q_law: TwoAtomLaw
    escaped_mass: float
    window: tuple[float, float, float, float]


def tightness_probe(
    p_law_sequence,
    q_law_sequence,
    n: int,
    seed: int,
    window: tuple[float, float, float, float] | None = None,
) -> tuple[TightnessEntry, ...]:
    """ESD mass escaping a fixed window as atoms are pushed outward.

    The window defaults to the corner bounding box of the first law pair
    padded by half its scale.  When far atoms keep fixed weight the escaped
    mass stays bounded below (no tight limit exists); when their weight
    vanishes the escaped mass vanishes with it.  No pass/fail semantics.
    """
    pairs = list(zip(p_law_sequence, q_law_sequence))
    if not pairs:
        return ()
    if window is None:
        first = make_geometry(*pairs[0])
        pad = 0.5 * first.scale
        xs = [c.real for c in first.corners]
        ys = [c.imag for c in first.corners]
        window = (min(xs) - pad, max(xs) + pad, min(ys) - pad, max(ys) + pad)
    xmin, xmax, ymin, ymax = window
    out = []
    for i, (p_law, q_law) in enumerate(pairs):
        child = substream_seed(seed, 4, i)
        realization = assemble_model(ModelSpec(p_law=p_law, q_law=q_law, n=n, seed=child))
        pts = esd(realization).points
        inside = (pts.real >= xmin) & (pts.real <= xmax) & (pts.imag >= ymin) & (pts.imag <= ymax)
        out.append(
            TightnessEntry(
                p_law=p_law,
                q_law=q_law,
                escaped_mass=float(np.mean(~inside)),
                window=window,
            )
        )
    return tuple(out)
