"""MAP solvers for denoising, interpolation, and the two joint formulations.

All four problems are convex quadratics; the assembled coefficient
matrices are symmetric positive definite, so they can be solved either by
conjugate gradient (the default for the non-separable joint system) or by
a dense factorization.  Closed-form solution operators are also provided
and double as verification oracles for the numerical paths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from .errors import PreconditionError, SingularOperatorError, SolverError
from .graphcore import DirectedInterpGraph, UndirectedGraph, as_vector


@dataclass(frozen=True)
class SolverWeights:
    """Regularization weights for the joint objectives."""

    mu: float = 0.3
    gamma: float = 0.5
    kappa: float = 0.3

    def __post_init__(self):
        if self.mu <= 0 or self.gamma <= 0 or self.kappa < 0:
            raise ValueError("require mu > 0, gamma > 0, kappa >= 0")


@dataclass(frozen=True)
class BlockSystem:
    """2x2 block partition of a square system with its Schur complement."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray

    @property
    def assembled(self) -> np.ndarray:
        return np.block([[self.a, self.b], [self.c, self.d]])

    def schur_p(self) -> np.ndarray:
        """Inverse of the Schur complement of the lower-right block."""
        try:
            d_inv_c = np.linalg.solve(self.d, self.c)
        except np.linalg.LinAlgError as exc:
            raise SingularOperatorError("lower-right block is singular") from exc
        schur = self.a - self.b @ d_inv_c
        try:
            return np.linalg.inv(schur)
        except np.linalg.LinAlgError as exc:
            raise SingularOperatorError("Schur complement is singular") from exc


@dataclass(frozen=True)
class JointSolution:
    """Solution of a joint system plus optional derived operators and stats."""

    full_signal: np.ndarray
    original_count: int
    derived_psi_star: np.ndarray | None = None
    derived_theta_star: np.ndarray | None = None
    iterations: int = 0
    residual: float = 0.0

    @property
    def denoised_block(self) -> np.ndarray:
        return self.full_signal[: self.original_count]

    @property
    def interpolated_block(self) -> np.ndarray:
        return self.full_signal[self.original_count :]


def block_inverse(system: BlockSystem) -> np.ndarray:
    """Invert a 2x2 block matrix through the Schur complement of its D block."""
    p = system.schur_p()
    d_inv = np.linalg.inv(system.d)
    top = np.hstack([p, -p @ system.b @ d_inv])
    dcp = d_inv @ system.c @ p
    bottom = np.hstack([-dcp, d_inv + dcp @ system.b @ d_inv])
    return np.vstack([top, bottom])


def cg_solve(c, b, tol: float = 1e-8, max_iter=None, jacobi: bool = False):
    """Conjugate gradient for a symmetric PD matrix or matrix-free product.

    Returns (x, stats) where stats is a dict with `iterations` and
    `residual` (relative).  Raises SolverError, carrying the best iterate,
    if the relative residual is not reduced below `tol` within `max_iter`.
    """
    b = as_vector(b)
    n = len(b)
    if callable(c):
        matvec = c
        diag = None
    else:
        c = np.asarray(c, dtype=float)
        if n <= 32:
            # Cheap sanity check on small instances; trusted for large ones.
            if np.linalg.norm(c - c.T) > 1e-8 * max(np.linalg.norm(c), 1.0):
                raise PreconditionError("CG requires a symmetric matrix")
        matvec = lambda v: c @ v
        diag = np.diag(c)
    if max_iter is None:
        max_iter = 10 * n

    b_norm = np.linalg.norm(b)
    if b_norm == 0.0:
        return np.zeros(n), {"iterations": 0, "residual": 0.0}
    inv_diag = None
    if jacobi and diag is not None and np.all(diag > 0):
        inv_diag = 1.0 / diag

    x = np.zeros(n)
    r = b.copy()
    z = inv_diag * r if inv_diag is not None else r
    p = z.copy()
    rz = r @ z
    best_x, best_res = x.copy(), np.linalg.norm(r) / b_norm
    iterations = 0
    for iterations in range(1, max_iter + 1):
        cp = matvec(p)
        denom = p @ cp
        if denom <= 0.0:
            break
        alpha = rz / denom
        x = x + alpha * p
        r = r - alpha * cp
        res = np.linalg.norm(r) / b_norm
        if res < best_res:
            best_res, best_x = res, x.copy()
        if res <= tol:
            return x, {"iterations": iterations, "residual": res}
        z = inv_diag * r if inv_diag is not None else r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(
        f"CG did not converge (relative residual {best_res:.3e} "
        f"after {iterations} iterations)",
        best_x=best_x,
        residual=best_res,
        iterations=iterations,
    )


def _laplacian_matrix(l) -> np.ndarray:
    if isinstance(l, UndirectedGraph):
        return l.generalized_laplacian
    return np.asarray(l, dtype=float)


def map_denoise(y, graph: UndirectedGraph, mu: float) -> np.ndarray:
    """Solve the Laplacian-regularized denoising problem in closed form."""
    if mu <= 0:
        raise ValueError(f"mu must be positive, got {mu}")
    y = as_vector(y)
    lg = _laplacian_matrix(graph)
    if len(y) != lg.shape[0]:
        raise ValueError("signal length does not match graph size")
    if isinstance(graph, UndirectedGraph) and not graph.is_psd():
        raise PreconditionError("graph Laplacian must be PSD")
    coeff = np.eye(len(y)) + mu * lg
    try:
        cho = sla.cho_factor(coeff)
    except np.linalg.LinAlgError as exc:
        raise PreconditionError("denoising system is not positive definite") from exc
    return sla.cho_solve(cho, y)


def _interp_system(a_mn: np.ndarray, gamma: float) -> BlockSystem:
    m, n = a_mn.shape
    return BlockSystem(
        a=(1.0 + gamma) * np.eye(m),
        b=-gamma * a_mn,
        c=-gamma * a_mn.T,
        d=gamma * (a_mn.T @ a_mn),
    )


def map_interpolate(y, graph: DirectedInterpGraph, gamma: float) -> np.ndarray:
    """Solve the shift-variation-regularized interpolation problem."""
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    y = as_vector(y)
    m, n = graph.original_count, graph.new_count
    if len(y) != m:
        raise ValueError("signal length does not match original pixel count")
    coeff = _interp_system(graph.block_mn, gamma).assembled
    rhs = np.concatenate([y, np.zeros(n)])
    try:
        x = np.linalg.solve(coeff, rhs)
    except np.linalg.LinAlgError as exc:
        raise SolverError("interpolation system is singular", residual=None) from exc
    res = np.linalg.norm(coeff @ x - rhs) / max(np.linalg.norm(rhs), 1e-300)
    if res > 1e-6:
        raise SolverError("interpolation solve inaccurate", best_x=x, residual=res)
    return x


def joint_separable(
    y,
    laplacian,
    graph: DirectedInterpGraph,
    weights: SolverWeights,
    verify: bool = True,
) -> JointSolution:
    """Joint problem with the smoothness prior on original pixels.

    Solves in closed form as denoise-then-interpolate; when `verify` is on,
    the assembled system is also solved numerically and both paths are
    required to agree to 1e-6 relative.
    """
    y = as_vector(y)
    lg = _laplacian_matrix(laplacian)
    m = graph.original_count
    if lg.shape[0] != m or len(y) != m:
        raise ValueError("dimension mismatch between signal, Laplacian, and graph")
    psi_y = map_denoise(y, laplacian, weights.mu)
    interp = np.linalg.solve(graph.block_mn, psi_y)
    x = np.concatenate([psi_y, interp])

    if verify:
        system = _interp_system(graph.block_mn, weights.gamma)
        coeff = system.assembled
        coeff[:m, :m] += weights.mu * lg
        rhs = np.concatenate([y, np.zeros(graph.new_count)])
        x_num = np.linalg.solve(coeff, rhs)
        gap = np.linalg.norm(x_num - x) / max(np.linalg.norm(x), 1e-300)
        if gap > 1e-6:
            raise SolverError(
                f"closed form and numerical solve disagree ({gap:.3e})",
                best_x=x_num,
                residual=gap,
            )
    return JointSolution(full_signal=x, original_count=m)


def nonseparable_matrix(
    graph: DirectedInterpGraph, lbar, weights: SolverWeights
) -> np.ndarray:
    """Coefficient matrix of the joint problem with the prior on new pixels."""
    a_mn = graph.block_mn
    lbar = _laplacian_matrix(lbar)
    if lbar.shape[0] != graph.new_count:
        raise ValueError("interpolated-pixel Laplacian has wrong size")
    coeff = _interp_system(a_mn, weights.gamma).assembled
    m = graph.original_count
    coeff[m:, m:] += weights.kappa * lbar
    return coeff


def joint_nonseparable(
    y,
    graph: DirectedInterpGraph,
    lbar,
    weights: SolverWeights,
    method: str = "cg",
    cg_tol: float = 1e-8,
    max_iter=None,
    jacobi: bool = False,
) -> JointSolution:
    """Joint problem with the smoothness prior on interpolated pixels.

    `method` selects conjugate gradient on the assembled system ("cg",
    the default), a dense factorization ("direct"), or the closed-form
    derived operators ("closed-form").
    """
    y = as_vector(y)
    m, n = graph.original_count, graph.new_count
    if len(y) != m:
        raise ValueError("signal length does not match original pixel count")

    if method == "closed-form":
        psi_star, theta_star = derive_operators(graph, lbar, weights)
        top = psi_star @ y
        x = np.concatenate([top, theta_star @ top])
        return JointSolution(
            full_signal=x,
            original_count=m,
            derived_psi_star=psi_star,
            derived_theta_star=theta_star,
        )

    coeff = nonseparable_matrix(graph, lbar, weights)
    rhs = np.concatenate([y, np.zeros(n)])
    if method == "direct":
        try:
            x = np.linalg.solve(coeff, rhs)
        except np.linalg.LinAlgError as exc:
            raise SolverError("joint system is singular") from exc
        res = np.linalg.norm(coeff @ x - rhs) / max(np.linalg.norm(rhs), 1e-300)
        return JointSolution(
            full_signal=x, original_count=m, iterations=1, residual=res
        )
    if method != "cg":
        raise ValueError(f"unknown solve method {method!r}")
    x, stats = cg_solve(coeff, rhs, tol=cg_tol, max_iter=max_iter, jacobi=jacobi)
    return JointSolution(
        full_signal=x,
        original_count=m,
        iterations=stats["iterations"],
        residual=stats["residual"],
    )


def derive_operators(graph: DirectedInterpGraph, lbar, weights: SolverWeights):
    """Closed-form denoiser and interpolator of the non-separable solution.

    Returns (psi_star, theta_star) such that the joint solution equals
    stacking psi_star @ y over theta_star @ psi_star @ y.
    """
    a_mn = graph.block_mn
    a_nm = a_mn.T
    lbar = _laplacian_matrix(lbar)
    gamma, kappa = weights.gamma, weights.kappa
    inner = gamma * (a_nm @ a_mn) + kappa * lbar
    try:
        inner_inv_anm = np.linalg.solve(inner, a_nm)
    except np.linalg.LinAlgError as exc:
        raise SingularOperatorError(
            "inner matrix of the derived operators is singular"
        ) from exc
    m = graph.original_count
    schur = (gamma + 1.0) * np.eye(m) - gamma**2 * (a_mn @ inner_inv_anm)
    try:
        psi_star = np.linalg.inv(schur)
    except np.linalg.LinAlgError as exc:
        raise SingularOperatorError("derived denoiser block is singular") from exc
    theta_star = gamma * inner_inv_anm
    return psi_star, theta_star


# ---------------------------------------------------------------------------
# Objectives and analytic gradients (used for optimality certificates).

def _h_select(x, m):
    return x[:m]


def objective_denoise(x, y, laplacian, mu: float) -> float:
    x, y = as_vector(x), as_vector(y)
    lg = _laplacian_matrix(laplacian)
    r = y - x
    return float(r @ r + mu * (x @ lg @ x))


def gradient_denoise(x, y, laplacian, mu: float) -> np.ndarray:
    x, y = as_vector(x), as_vector(y)
    lg = _laplacian_matrix(laplacian)
    return 2.0 * (x - y) + 2.0 * mu * (lg @ x)


def _shift_residual(x, graph: DirectedInterpGraph):
    # H (x - A x) for the block-structured adjacency.
    m = graph.original_count
    return x[:m] - graph.block_mn @ x[m:]


def objective_interpolate(x, y, graph: DirectedInterpGraph, gamma: float) -> float:
    x, y = as_vector(x), as_vector(y)
    m = graph.original_count
    r = y - x[:m]
    s = _shift_residual(x, graph)
    return float(r @ r + gamma * (s @ s))


def gradient_interpolate(x, y, graph: DirectedInterpGraph, gamma: float) -> np.ndarray:
    x, y = as_vector(x), as_vector(y)
    m = graph.original_count
    s = _shift_residual(x, graph)
    grad = np.zeros_like(x)
    grad[:m] = 2.0 * (x[:m] - y) + 2.0 * gamma * s
    grad[m:] = -2.0 * gamma * (graph.block_mn.T @ s)
    return grad


def objective_separable(x, y, laplacian, graph, weights: SolverWeights) -> float:
    x = as_vector(x)
    m = graph.original_count
    lg = _laplacian_matrix(laplacian)
    return objective_interpolate(x, y, graph, weights.gamma) + weights.mu * float(
        x[:m] @ lg @ x[:m]
    )


def gradient_separable(x, y, laplacian, graph, weights: SolverWeights) -> np.ndarray:
    x = as_vector(x)
    m = graph.original_count
    lg = _laplacian_matrix(laplacian)
    grad = gradient_interpolate(x, y, graph, weights.gamma)
    grad[:m] += 2.0 * weights.mu * (lg @ x[:m])
    return grad


def objective_nonseparable(x, y, graph, lbar, weights: SolverWeights) -> float:
    x = as_vector(x)
    m = graph.original_count
    lbar = _laplacian_matrix(lbar)
    return objective_interpolate(x, y, graph, weights.gamma) + weights.kappa * float(
        x[m:] @ lbar @ x[m:]
    )


def gradient_nonseparable(x, y, graph, lbar, weights: SolverWeights) -> np.ndarray:
    x = as_vector(x)
    m = graph.original_count
    lbar = _laplacian_matrix(lbar)
    grad = gradient_interpolate(x, y, graph, weights.gamma)
    grad[m:] += 2.0 * weights.kappa * (lbar @ x[m:])
    return grad
