"""Graph data structures, smoothness priors, and the filter/graph mappings.

Undirected graphs model denoisers (via the graph Laplacian); directed
bipartite-style graphs model interpolators (via the upper-right adjacency
block).  Both directions of the mapping are provided:

* a certified denoiser matrix maps to a generalized graph Laplacian,
* an invertible interpolator matrix maps to a directed adjacency block.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGraphError, PreconditionError, SingularOperatorError

# Symmetry / row-sum tolerance (relative, Frobenius).
TAU_SYM = 1e-10
# PSD slack relative to the spectral norm.
TAU_PSD = 1e-8
# Relative pivot threshold below which a matrix is treated as singular.
PIVOT_RTOL = 1e-12
# Relative tolerance for inverse-pair checks.
TAU_INV = 1e-8
# Strict positive-definiteness floor for denoiser eigenvalues.
PD_EIG_MIN = 1e-10
# Non-expansiveness slack on the spectral radius.
NONEXPANSIVE_SLACK = 1e-10
# Row/column-sum tolerance for the doubly-stochastic flag.
TAU_DS = 1e-8


@dataclass(frozen=True)
class PatchSignal:
    """A vector of pixel intensities with an optional map back to image coords."""

    values: np.ndarray
    coords: tuple | None = None

    def __len__(self):
        return len(self.values)


def as_vector(x) -> np.ndarray:
    """Accept a PatchSignal or anything array-like; return a float 1-D array."""
    if isinstance(x, PatchSignal):
        x = x.values
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-D signal, got shape {v.shape}")
    return v


def _rel_asym(m: np.ndarray) -> float:
    denom = np.linalg.norm(m)
    if denom == 0.0:
        return 0.0
    return np.linalg.norm(m - m.T) / denom


@dataclass(frozen=True)
class UndirectedGraph:
    """Symmetric adjacency/degree/Laplacian bundle for an undirected graph.

    ``laplacian`` is the combinatorial Laplacian (degree minus adjacency);
    ``generalized_laplacian`` additionally keeps self-loop mass on the
    diagonal, and is the matrix used by the MAP solvers.
    """

    node_count: int
    adjacency: np.ndarray
    degree: np.ndarray
    laplacian: np.ndarray
    generalized_laplacian: np.ndarray
    self_loop_flag: bool

    @classmethod
    def from_adjacency(cls, adjacency) -> "UndirectedGraph":
        a = np.asarray(adjacency, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"adjacency must be square, got shape {a.shape}")
        if _rel_asym(a) > TAU_SYM:
            raise ValueError("adjacency is not symmetric within tolerance")
        a = 0.5 * (a + a.T)
        n = a.shape[0]
        deg = np.diag(a.sum(axis=1))
        lap = deg - a
        loops = np.diag(np.diag(a))
        return cls(
            node_count=n,
            adjacency=a,
            degree=deg,
            laplacian=lap,
            generalized_laplacian=lap + loops,
            self_loop_flag=bool(np.any(np.abs(np.diag(a)) > 0.0)),
        )

    @classmethod
    def from_generalized_laplacian(cls, lg) -> "UndirectedGraph":
        """Recover the edge decomposition from a generalized Laplacian.

        Off-diagonal adjacency is the negated off-diagonal of ``lg``; the
        self-loop weights are the row sums of ``lg`` (which equal the
        residual diagonal mass once degrees are accounted for).
        """
        lg = np.asarray(lg, dtype=float)
        if lg.ndim != 2 or lg.shape[0] != lg.shape[1]:
            raise ValueError(f"laplacian must be square, got shape {lg.shape}")
        if _rel_asym(lg) > TAU_SYM:
            raise ValueError("generalized Laplacian is not symmetric within tolerance")
        lg = 0.5 * (lg + lg.T)
        n = lg.shape[0]
        a = -lg.copy()
        self_loops = lg.sum(axis=1)
        np.fill_diagonal(a, self_loops)
        deg = np.diag(a.sum(axis=1))
        lap = deg - a
        scale = max(np.abs(lg).max(), 1.0)
        return cls(
            node_count=n,
            adjacency=a,
            degree=deg,
            laplacian=lap,
            generalized_laplacian=lg,
            self_loop_flag=bool(np.any(np.abs(self_loops) > TAU_SYM * scale)),
        )

    def is_psd(self, rtol: float = TAU_PSD) -> bool:
        evals = np.linalg.eigvalsh(self.generalized_laplacian)
        norm = max(np.abs(evals).max(), 0.0)
        return bool(evals.min() >= -rtol * max(norm, 1.0))


@dataclass(frozen=True)
class RandomWalkView:
    """Row-stochastic adjacency and random-walk Laplacian of an undirected graph."""

    row_stochastic_adjacency: np.ndarray
    random_walk_laplacian: np.ndarray

    @classmethod
    def from_graph(cls, graph: UndirectedGraph) -> "RandomWalkView":
        deg = np.diag(graph.degree)
        if np.any(deg <= 0.0):
            raise DegenerateGraphError("graph has zero-degree nodes")
        inv_d = (1.0 / deg)[:, None]
        return cls(
            row_stochastic_adjacency=inv_d * graph.adjacency,
            random_walk_laplacian=inv_d * graph.laplacian,
        )


@dataclass(frozen=True)
class DirectedInterpGraph:
    """Directed graph whose only edges run from original to new pixels.

    Only the upper-right M-by-N adjacency block is nonzero; for an
    invertible interpolator it equals the interpolator's matrix inverse.
    """

    original_count: int
    new_count: int
    block_mn: np.ndarray

    @property
    def adjacency(self) -> np.ndarray:
        m, n = self.original_count, self.new_count
        a = np.zeros((m + n, m + n))
        a[:m, m:] = self.block_mn
        return a

    @property
    def sampler_h(self) -> np.ndarray:
        m, n = self.original_count, self.new_count
        return np.hstack([np.eye(m), np.zeros((m, n))])

    @property
    def sampler_g(self) -> np.ndarray:
        m, n = self.original_count, self.new_count
        return np.hstack([np.zeros((n, m)), np.eye(n)])


@dataclass(frozen=True)
class DenoiserOperator:
    """A square filter matrix with recorded (never assumed) property flags."""

    matrix: np.ndarray
    kind: str = "custom"
    certified_symmetric: bool = False
    certified_pd: bool = False
    certified_nonexpansive: bool = False
    doubly_stochastic: bool = False
    spectrum: np.ndarray | None = field(default=None, repr=False)
    eigvecs: np.ndarray | None = field(default=None, repr=False)

    @property
    def certified(self) -> bool:
        return (
            self.certified_symmetric
            and self.certified_pd
            and self.certified_nonexpansive
        )

    def __call__(self, y) -> np.ndarray:
        return self.matrix @ as_vector(y)


def certify_denoiser(psi_matrix, kind: str = "custom") -> DenoiserOperator:
    """Check symmetry, positive definiteness, and non-expansiveness of a filter.

    Failing checks never raise; they produce an uncertified operator that
    downstream mappings reject.  The eigendecomposition is cached on the
    returned operator for reuse (inversion, spectral-mapping checks).
    """
    psi = np.asarray(psi_matrix, dtype=float)
    if psi.ndim != 2 or psi.shape[0] != psi.shape[1]:
        raise ValueError(f"denoiser matrix must be square, got shape {psi.shape}")

    symmetric = _rel_asym(psi) <= TAU_SYM
    spectrum = None
    vecs = None
    if symmetric:
        psi = 0.5 * (psi + psi.T)
        spectrum, vecs = np.linalg.eigh(psi)
        pd = bool(spectrum.min() > PD_EIG_MIN)
        radius = np.abs(spectrum).max() if len(spectrum) else 0.0
    else:
        evals = np.linalg.eigvals(psi)
        pd = False
        radius = np.abs(evals).max() if len(evals) else 0.0
    nonexpansive = bool(radius <= 1.0 + NONEXPANSIVE_SLACK)

    row = psi.sum(axis=1)
    col = psi.sum(axis=0)
    ds = bool(
        np.all(psi >= -TAU_DS)
        and np.abs(row - 1.0).max() <= TAU_DS
        and np.abs(col - 1.0).max() <= TAU_DS
    )
    return DenoiserOperator(
        matrix=psi,
        kind=kind,
        certified_symmetric=symmetric,
        certified_pd=pd,
        certified_nonexpansive=nonexpansive,
        doubly_stochastic=ds,
        spectrum=spectrum,
        eigvecs=vecs,
    )


def glr(graph: UndirectedGraph, x) -> float:
    """Graph Laplacian regularizer: the quadratic form of the combinatorial Laplacian.

    Equals the weighted sum of squared differences over the edge set when
    weights are nonnegative.
    """
    v = as_vector(x)
    if len(v) != graph.node_count:
        raise ValueError(
            f"signal length {len(v)} != node count {graph.node_count}"
        )
    return float(v @ graph.laplacian @ v)


def gsv(view: RandomWalkView, x) -> float:
    """Graph shift variation: squared distance between a signal and its shift."""
    v = as_vector(x)
    ar = view.row_stochastic_adjacency
    if len(v) != ar.shape[0]:
        raise ValueError(f"signal length {len(v)} != node count {ar.shape[0]}")
    r = v - ar @ v
    return float(r @ r)


def denoiser_to_laplacian(psi: DenoiserOperator, mu: float) -> UndirectedGraph:
    """Map a certified denoiser to the undirected graph whose MAP filter it is.

    The generalized Laplacian is ``(inv(psi) - I) / mu``; solving the
    Laplacian-regularized MAP problem with weight ``mu`` then reproduces the
    denoiser exactly (exercised by the roundtrip tests).
    """
    if mu <= 0.0:
        raise ValueError(f"mu must be positive, got {mu}")
    if not isinstance(psi, DenoiserOperator) or not psi.certified:
        raise PreconditionError(
            "denoiser must be certified symmetric, PD, and non-expansive"
        )
    spectrum = psi.spectrum
    if spectrum is not None and np.abs(spectrum).min() <= PIVOT_RTOL * np.abs(
        spectrum
    ).max():
        raise PreconditionError("denoiser matrix is singular within pivot tolerance")
    if psi.eigvecs is not None:
        v = psi.eigvecs
        lg = (v * ((1.0 / spectrum - 1.0) / mu)) @ v.T
    else:
        n = psi.matrix.shape[0]
        lg = (np.linalg.inv(psi.matrix) - np.eye(n)) / mu
    lg = 0.5 * (lg + lg.T)
    return UndirectedGraph.from_generalized_laplacian(lg)


def interpolator_to_adjacency(theta, check: bool = True) -> DirectedInterpGraph:
    """Map an invertible square interpolator to its directed adjacency block."""
    mat = np.asarray(getattr(theta, "matrix", theta), dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise SingularOperatorError(
            f"interpolator must be square after padding, got shape {mat.shape}"
        )
    if check:
        svals = np.linalg.svd(mat, compute_uv=False)
        if svals[-1] <= 1e-10 * svals[0]:
            raise SingularOperatorError(
                "interpolator is numerically singular "
                f"(sigma_min/sigma_max = {svals[-1] / svals[0]:.3e})"
            )
    n = mat.shape[0]
    return DirectedInterpGraph(
        original_count=n, new_count=n, block_mn=np.linalg.inv(mat)
    )


def export_edges(graph: UndirectedGraph, weight_tol: float = 0.0) -> str:
    """Serialize a graph as `i j w` lines (0-based, upper triangle + self-loops)."""
    lines = []
    a = graph.adjacency
    n = graph.node_count
    for i in range(n):
        if abs(a[i, i]) > weight_tol:
            lines.append(f"{i} {i} {float(a[i, i])!r}")
        for j in range(i + 1, n):
            if abs(a[i, j]) > weight_tol:
                lines.append(f"{i} {j} {float(a[i, j])!r}")
    return "\n".join(lines) + ("\n" if lines else "")
