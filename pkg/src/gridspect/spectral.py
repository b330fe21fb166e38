"""Graph-spectral machinery: transform, smoothness, high-pass filtering.

A real Laplacian's eigendecomposition supplies the graph frequencies
(eigenvalues, ascending) and an orthonormal transform basis. Signals that
vary slowly across strongly-coupled buses concentrate their transform
energy at low frequencies, so a high-pass step filter isolates exactly
the content that anomalies and injected offsets produce.

The hot path filters in the frequency domain. A vertex-domain polynomial
realisation of the same step response (monomial interpolation through all
eigenvalue nodes) is kept for parity checking; it is solved on cutoff-
normalised nodes for conditioning and escalated to extended precision
when the float64 interpolation residual is too large.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

EIG_TIE_TOL = 1e-9
POLY_MAX_NODES = 24
POLY_RESIDUAL_TOL = 1e-9


class FilterDesignError(ValueError):
    """Unsolvable filter interpolation (conflicting responses on a tie)."""


class CutoffError(ValueError):
    """No admissible cutoff index for the requested tail energy."""


@dataclass(frozen=True)
class SpectralBasis:
    """Eigenvalues (ascending) and orthonormal eigenvectors of a Laplacian.

    Eigenvector signs follow a deterministic convention: the entry of
    largest magnitude in each column is positive, ties broken by lowest
    index.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    source: str = ""

    @property
    def n(self) -> int:
        return len(self.eigenvalues)

    def normalized_frequencies(self) -> np.ndarray:
        """Eigenvalues scaled by the largest magnitude, in [0, 1]."""
        scale = np.abs(self.eigenvalues).max()
        if scale == 0:
            return np.zeros_like(self.eigenvalues)
        return self.eigenvalues / scale


@dataclass(frozen=True)
class GhpfDesign:
    """High-pass step filter tied to one spectral basis.

    ``cutoff_index`` is 1-based: components at positions >= cutoff_index
    pass. ``response`` is the 0/1 gain per eigenvalue. ``poly_coeffs``
    holds the monomial coefficients (constant term first, in the raw
    eigenvalue variable) of the degree M-1 interpolant of the response;
    ``poly_scale`` is the node normalisation used to evaluate it stably.
    """

    cutoff_index: int
    cutoff_lambda: float
    response: np.ndarray
    poly_coeffs: np.ndarray | None = None
    poly_scale: float | None = None


def spectral_basis(laplacian: np.ndarray, source: str = "") -> SpectralBasis:
    """Eigendecompose a symmetric PSD matrix into a graph-frequency basis."""
    lap = np.asarray(laplacian, dtype=float)
    asym = np.abs(lap - lap.T).max()
    if asym > 1e-10:
        raise ValueError(f"matrix is not symmetric (max asymmetry {asym:.3e})")
    eigenvalues, eigenvectors = np.linalg.eigh(lap)
    # eigh returns ascending order already; enforce the sign convention.
    for col in range(eigenvectors.shape[1]):
        vec = eigenvectors[:, col]
        lead = np.argmax(np.abs(vec))
        if vec[lead] < 0:
            eigenvectors[:, col] = -vec
    return SpectralBasis(eigenvalues=eigenvalues, eigenvectors=eigenvectors, source=source)


def gft(basis: SpectralBasis, signal: np.ndarray) -> np.ndarray:
    """Project a real vertex signal onto the spectral basis (U^T s)."""
    signal = np.asarray(signal, dtype=float)
    if signal.shape != (basis.n,):
        raise ValueError(f"signal length {signal.shape} does not match basis size {basis.n}")
    return basis.eigenvectors.T @ signal


def igft(basis: SpectralBasis, coeffs: np.ndarray) -> np.ndarray:
    """Back-project spectral coefficients to the vertex domain (U c)."""
    return basis.eigenvectors @ np.asarray(coeffs, dtype=float)


def total_variation(laplacian: np.ndarray, signal: np.ndarray) -> tuple[float, np.ndarray]:
    """Quadratic smoothness of a signal on the graph.

    Returns ``(S, local)`` where ``local[k]`` sums the edge-weighted
    squared differences between bus k and its neighbours (edge weight =
    negated off-diagonal), and ``S`` is half the sum of all local
    variations, equal to ``signal^T L signal``.
    """
    lap = np.asarray(laplacian, dtype=float)
    s = np.asarray(signal, dtype=float)
    weights = -(lap - np.diag(np.diag(lap)))
    diffs = s[:, None] - s[None, :]
    local = np.sum(weights * diffs**2, axis=1)
    return 0.5 * float(np.sum(local)), local


def _tie_class_starts(eigenvalues: np.ndarray) -> np.ndarray:
    """0-based indices where a new group of (numerically) equal eigenvalues begins."""
    if len(eigenvalues) == 0:
        return np.array([], dtype=int)
    gaps = np.diff(eigenvalues) > EIG_TIE_TOL
    return np.concatenate([[0], np.nonzero(gaps)[0] + 1])


def select_cutoff(basis: SpectralBasis, historic_spectra: list[np.ndarray],
                  epsilon: float) -> GhpfDesign:
    """Choose the cutoff so every historic spectrum's passband energy <= epsilon.

    For each spectrum the smallest 1-based index gamma is found whose
    tail energy sum(|c_m|^2, m >= gamma) does not exceed epsilon; the
    final gamma is the maximum over all spectra, rounded up to a tie-class
    boundary so the response is constant on equal eigenvalues. The cutoff
    eigenvalue sits halfway between the last stopped and first passed
    frequency, so the strict "greater than" gain rule is numerically
    unambiguous.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if not historic_spectra:
        raise ValueError("at least one historic spectrum is required")
    m = basis.n
    gamma = 1  # all-pass lower bound
    for idx, coeffs in enumerate(historic_spectra):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (m,):
            raise ValueError(f"historic spectrum {idx} has wrong length")
        # tails[g-1] = energy from 1-based position g to M
        tails = np.cumsum((coeffs**2)[::-1])[::-1]
        admissible = np.nonzero(tails <= epsilon)[0]
        if len(admissible) == 0:
            raise CutoffError(
                f"historic state {idx}: even the highest frequency alone carries "
                f"{tails[-1]:.3e} > epsilon {epsilon:.3e}"
            )
        gamma = max(gamma, int(admissible[0]) + 1)

    # Respect eigenvalue ties: shrink the passband to the next class start.
    starts = _tie_class_starts(basis.eigenvalues)
    if gamma > 1:
        later = starts[starts >= gamma - 1]
        if len(later) == 0:
            raise CutoffError(
                "cutoff falls inside the top eigenvalue tie class; "
                "no constant-response passband exists"
            )
        gamma = int(later[0]) + 1

    if gamma == 1:
        cutoff_lambda = float(basis.eigenvalues[0]) - 1.0
    else:
        cutoff_lambda = 0.5 * float(basis.eigenvalues[gamma - 2] + basis.eigenvalues[gamma - 1])
    response = (basis.eigenvalues > cutoff_lambda).astype(float)
    return GhpfDesign(cutoff_index=gamma, cutoff_lambda=cutoff_lambda, response=response)


def _solve_nodes_mpmath(nodes: np.ndarray, values: np.ndarray) -> np.ndarray:
    import mpmath as mp

    with mp.workdps(60):
        n = len(nodes)
        v = mp.matrix(n, n)
        for i in range(n):
            for j in range(n):
                v[i, j] = mp.mpf(float(nodes[i])) ** j
        rhs = mp.matrix([mp.mpf(float(x)) for x in values])
        sol = mp.lu_solve(v, rhs)
        return np.array([float(x) for x in sol])


def design_poly_filter(basis: SpectralBasis, design: GhpfDesign) -> GhpfDesign:
    """Fit the monomial polynomial that reproduces the step response.

    The interpolation runs on nodes normalised by the largest eigenvalue;
    coefficients are rescaled back to the raw eigenvalue variable on
    return. Eigenvalues equal within tolerance are collapsed to a single
    node (their responses must agree) and the remaining system is solved
    in the least-squares sense. Above ``POLY_MAX_NODES`` nodes the
    monomial basis is numerically hopeless; the design is returned
    without coefficients and a warning is emitted.
    """
    m = basis.n
    if m > POLY_MAX_NODES:
        warnings.warn(
            f"monomial filter design skipped for {m} nodes (> {POLY_MAX_NODES}); "
            "spectral-domain filtering remains exact",
            RuntimeWarning,
            stacklevel=2,
        )
        return replace(design, poly_coeffs=None, poly_scale=None)

    lams = basis.eigenvalues
    starts = _tie_class_starts(lams)
    nodes, values = [], []
    for k, start in enumerate(starts):
        end = starts[k + 1] if k + 1 < len(starts) else m
        group = design.response[start:end]
        if not np.all(group == group[0]):
            raise FilterDesignError(
                f"eigenvalue tie at positions {start + 1}..{end} has conflicting "
                "responses; no polynomial in the eigenvalue can separate them"
            )
        nodes.append(lams[start:end].mean())
        values.append(float(group[0]))
    nodes = np.array(nodes)
    values = np.array(values)

    scale = float(np.abs(lams).max())
    if scale == 0:
        scale = 1.0
    t = nodes / scale

    vander = np.vander(t, N=m, increasing=True)
    if len(nodes) == m:
        coeffs_scaled = np.linalg.solve(vander, values)
    else:
        coeffs_scaled, *_ = np.linalg.lstsq(vander, values, rcond=None)
    residual = np.max(np.abs(vander @ coeffs_scaled - values))
    if residual > POLY_RESIDUAL_TOL and len(nodes) == m:
        coeffs_scaled = _solve_nodes_mpmath(t, values)
        residual = np.max(np.abs(vander @ coeffs_scaled - values))
    if residual > 1e-6:
        raise FilterDesignError(f"interpolation residual {residual:.3e} exceeds 1e-6")

    powers = scale ** np.arange(m)
    return replace(design, poly_coeffs=coeffs_scaled / powers, poly_scale=scale)


def poly_response(design: GhpfDesign, eigenvalues: np.ndarray) -> np.ndarray:
    """Evaluate the designed polynomial at the given eigenvalues (Horner)."""
    if design.poly_coeffs is None:
        raise ValueError("design has no polynomial coefficients")
    scale = design.poly_scale or 1.0
    coeffs_scaled = design.poly_coeffs * (scale ** np.arange(len(design.poly_coeffs)))
    t = np.asarray(eigenvalues, dtype=float) / scale
    out = np.zeros_like(t)
    for c in coeffs_scaled[::-1]:
        out = out * t + c
    return out


def filter_vertex(laplacian: np.ndarray, design: GhpfDesign,
                  signal: np.ndarray) -> np.ndarray:
    """Apply the polynomial filter through matrix powers in the vertex domain."""
    if design.poly_coeffs is None:
        raise ValueError("design has no polynomial coefficients")
    lap = np.asarray(laplacian, dtype=float)
    s = np.asarray(signal, dtype=float)
    scale = design.poly_scale or 1.0
    coeffs_scaled = design.poly_coeffs * (scale ** np.arange(len(design.poly_coeffs)))
    acc = coeffs_scaled[0] * s
    power = s
    for c in coeffs_scaled[1:]:
        power = (lap @ power) / scale
        acc = acc + c * power
    return acc


def filter_and_stat(basis: SpectralBasis, design: GhpfDesign,
                    signal: np.ndarray) -> tuple[np.ndarray, float]:
    """High-pass the signal spectrally and take the peak component.

    Returns the filtered spectrum (response times transform coefficients)
    and its infinity norm, the detection statistic.
    """
    coeffs = gft(basis, signal)
    filtered = design.response * coeffs
    return filtered, float(np.max(np.abs(filtered)))
