"""Acceptance gate: one test per criterion, each printing a pass/fail line.

Run with `pytest -v -s tests/test_acceptance.py` to see the per-criterion
lines; the experiment-trend criterion takes several minutes.
"""

import time

import numpy as np
import pytest

from mixedgraph.denoisers import (
    KernelParams,
    bilateral_matrix,
    gaussian_matrix,
    sinkhorn_balance,
)
from mixedgraph.graphcore import denoiser_to_laplacian, interpolator_to_adjacency
from mixedgraph.interpolators import Homography, Rotation, build_patch_operator
from mixedgraph.jointsolver import (
    SolverWeights,
    derive_operators,
    gradient_denoise,
    gradient_interpolate,
    gradient_nonseparable,
    gradient_separable,
    joint_nonseparable,
    joint_separable,
    map_denoise,
    map_interpolate,
    nonseparable_matrix,
    objective_denoise,
    objective_interpolate,
    objective_nonseparable,
    objective_separable,
)
from mixedgraph.cli import main as cli_main
from mixedgraph.pipeline import ExperimentConfig, run_experiment, synthetic_texture

PAPER_H = ((1.0, 0.2, 0.0), (0.1, 1.0, 0.0), (0.0, 0.0, 1.0))


def report(num, ok, detail):
    status = "PASS" if ok else "FAIL"
    print(f"\ncriterion {num}: {status} - {detail}")
    assert ok, f"criterion {num} failed: {detail}"


def random_coords(rng, n):
    coords = rng.uniform(0.0, 2.0 * np.sqrt(n), (n, 2))
    while len(np.unique(coords, axis=0)) < n:
        coords = rng.uniform(0.0, 2.0 * np.sqrt(n), (n, 2))
    return coords


def random_denoiser(rng, n, params=KernelParams()):
    coords = random_coords(rng, n)
    if rng.integers(2):
        kernel = gaussian_matrix(coords, params)
    else:
        kernel = bilateral_matrix(coords, rng.uniform(0, 1, n), params)
    return sinkhorn_balance(kernel, kind="kernel")


def random_theta(rng, n):
    return rng.normal(size=(n, n)) + (n + 2) * np.eye(n)


def test_criterion_1_denoiser_graph_roundtrip():
    rng = np.random.default_rng(101)
    mu = 0.3
    sizes = [4, 10, 100]
    start = time.perf_counter()
    worst = 0.0
    for i in range(100):
        n = sizes[i % len(sizes)]
        psi = random_denoiser(rng, n)
        graph = denoiser_to_laplacian(psi, mu)
        y = rng.normal(size=n)
        err = np.linalg.norm(map_denoise(y, graph, mu) - psi.matrix @ y)
        worst = max(worst, err / np.linalg.norm(y))
    elapsed = time.perf_counter() - start
    report(
        1,
        worst <= 1e-6 and elapsed < 10.0,
        f"denoiser/Laplacian roundtrip, 100 instances, worst rel err "
        f"{worst:.2e}, {elapsed:.2f}s",
    )


def test_criterion_2_interpolator_graph_roundtrip():
    rng = np.random.default_rng(102)
    sizes = [2, 4, 10, 100]
    gammas = [0.1, 0.5, 10.0]
    start = time.perf_counter()
    worst = 0.0
    for i in range(100):
        n = sizes[i % len(sizes)]
        theta = random_theta(rng, n)
        graph = interpolator_to_adjacency(theta)
        y = rng.normal(size=n)
        want = np.concatenate([y, theta @ y])
        x = map_interpolate(y, graph, gammas[i % len(gammas)])
        worst = max(worst, np.linalg.norm(x - want) / np.linalg.norm(want))
    elapsed = time.perf_counter() - start
    report(
        2,
        worst <= 1e-6 and elapsed < 10.0,
        f"interpolator/adjacency roundtrip, 100 instances, worst rel err "
        f"{worst:.2e}, {elapsed:.2f}s",
    )


def test_criterion_3_separable_closed_form():
    rng = np.random.default_rng(103)
    sizes = [2, 4, 10, 20]
    worst = 0.0
    for i in range(50):
        n = sizes[i % len(sizes)]
        psi = random_denoiser(rng, n)
        graph_l = denoiser_to_laplacian(psi, 0.3)
        theta = random_theta(rng, n)
        graph = interpolator_to_adjacency(theta)
        y = rng.normal(size=n)
        weights = SolverWeights(mu=0.3, gamma=0.5)
        # closed form: denoise then interpolate
        sol = joint_separable(y, graph_l, graph, weights, verify=False)
        want = np.concatenate([psi.matrix @ y, theta @ (psi.matrix @ y)])
        # full numerical solve of the assembled system
        coeff = nonseparable_matrix(graph, np.zeros((n, n)), weights)
        coeff[:n, :n] += weights.mu * graph_l.generalized_laplacian
        x_num = np.linalg.solve(coeff, np.concatenate([y, np.zeros(n)]))
        scale = np.linalg.norm(want)
        worst = max(
            worst,
            np.linalg.norm(x_num - want) / scale,
            np.linalg.norm(sol.full_signal - want) / scale,
        )
    report(
        3,
        worst <= 1e-6,
        f"separable joint solve vs closed form, 50 instances, worst rel err {worst:.2e}",
    )


def test_criterion_4_nonseparable_derived_operators():
    rng = np.random.default_rng(104)
    sizes = [2, 4, 10, 20]
    worst = 0.0
    worst_degenerate = 0.0
    min_witness = np.inf
    for i in range(50):
        n = sizes[i % len(sizes)]
        theta = random_theta(rng, n)
        graph = interpolator_to_adjacency(theta)
        psi_bar = random_denoiser(rng, n)
        lbar = denoiser_to_laplacian(psi_bar, 0.3).generalized_laplacian
        weights = SolverWeights(mu=0.3, gamma=0.5, kappa=0.3)
        y = rng.normal(size=n)
        sol = joint_nonseparable(y, graph, lbar, weights, method="cg", cg_tol=1e-10)
        psi_star, theta_star = derive_operators(graph, lbar, weights)
        want = np.concatenate([psi_star @ y, theta_star @ psi_star @ y])
        worst = max(worst, np.linalg.norm(sol.full_signal - want) / np.linalg.norm(want))
        min_witness = min(
            min_witness, np.linalg.norm(theta_star @ psi_star - psi_bar.matrix @ theta)
        )
        sol0 = joint_nonseparable(
            y, graph, lbar, SolverWeights(mu=0.3, gamma=0.5, kappa=0.0)
        )
        want0 = np.concatenate([y, theta @ y])
        worst_degenerate = max(
            worst_degenerate,
            np.linalg.norm(sol0.full_signal - want0) / np.linalg.norm(want0),
        )
    report(
        4,
        worst <= 1e-6 and worst_degenerate <= 1e-6 and min_witness > 1e-6,
        f"non-separable solve vs derived operators, 50 instances: worst rel err "
        f"{worst:.2e}, degenerate-case err {worst_degenerate:.2e}, "
        f"min non-separability witness {min_witness:.2e}",
    )


def test_criterion_5_gradient_checks():
    def fd(fun, x, step=1e-5):
        g = np.zeros_like(x)
        for i in range(len(x)):
            e = np.zeros_like(x)
            e[i] = step
            g[i] = (fun(x + e) - fun(x - e)) / (2.0 * step)
        return g

    rng = np.random.default_rng(105)
    worst_opt = 0.0
    worst_fd = 0.0
    for n in (3, 6, 10):  # total unknowns 2n <= 20
        psi = random_denoiser(rng, n)
        graph_l = denoiser_to_laplacian(psi, 0.3)
        theta = random_theta(rng, n)
        graph = interpolator_to_adjacency(theta)
        lbar = denoiser_to_laplacian(random_denoiser(rng, n), 0.3).generalized_laplacian
        weights = SolverWeights()
        y = rng.normal(size=n)
        scale = np.linalg.norm(y)

        cases = [
            (
                map_denoise(y, graph_l, 0.3),
                lambda x: gradient_denoise(x, y, graph_l, 0.3),
                lambda x: objective_denoise(x, y, graph_l, 0.3),
            ),
            (
                map_interpolate(y, graph, 0.5),
                lambda x: gradient_interpolate(x, y, graph, 0.5),
                lambda x: objective_interpolate(x, y, graph, 0.5),
            ),
            (
                joint_separable(y, graph_l, graph, weights).full_signal,
                lambda x: gradient_separable(x, y, graph_l, graph, weights),
                lambda x: objective_separable(x, y, graph_l, graph, weights),
            ),
            (
                joint_nonseparable(y, graph, lbar, weights).full_signal,
                lambda x: gradient_nonseparable(x, y, graph, lbar, weights),
                lambda x: objective_nonseparable(x, y, graph, lbar, weights),
            ),
        ]
        for solution, grad, obj in cases:
            worst_opt = max(worst_opt, np.linalg.norm(grad(solution)) / scale)
            z = rng.normal(size=len(solution))
            g, g_fd = grad(z), fd(obj, z)
            worst_fd = max(worst_fd, np.linalg.norm(g - g_fd) / np.linalg.norm(g_fd))
    report(
        5,
        worst_opt <= 1e-6 and worst_fd <= 1e-4,
        f"gradients: worst norm at solutions {worst_opt:.2e} (rel), worst "
        f"finite-difference mismatch {worst_fd:.2e} (rel)",
    )


def test_criterion_6_balancing_properties():
    rng = np.random.default_rng(106)
    worst_sum = 0.0
    worst_asym = 0.0
    worst_radius = 0.0
    for _ in range(100):
        n = int(rng.integers(3, 40))
        w = rng.uniform(0.05, 1.0, (n, n))
        w = 0.5 * (w + w.T)
        op = sinkhorn_balance(w)
        m = op.matrix
        worst_sum = max(
            worst_sum,
            np.abs(m.sum(axis=1) - 1.0).max(),
            np.abs(m.sum(axis=0) - 1.0).max(),
        )
        worst_asym = max(worst_asym, np.abs(m - m.T).max())
        worst_radius = max(worst_radius, np.abs(np.linalg.eigvalsh(m)).max())
    report(
        6,
        worst_sum <= 1e-8 and worst_asym <= 1e-12 and worst_radius <= 1.0 + 1e-10,
        f"balancing on 100 kernels: worst sum dev {worst_sum:.2e}, worst "
        f"asymmetry {worst_asym:.2e}, worst spectral radius {worst_radius:.12f}",
    )


def test_criterion_7_interpolator_affine_oracle():
    rr, cc = np.mgrid[0:64, 0:64]
    image = 0.31 * rr - 0.17 * cc + 2.4
    worst = 0.0
    for transform in (Rotation(20.0), Homography(PAPER_H)):
        op = build_patch_operator(transform, (20, 20), (10, 10), (64, 64)).operator
        src = op.source_coords
        got = op.real_matrix @ image[src[:, 0], src[:, 1]]
        back = transform.back_project(op.target_coords.astype(float), (64, 64))
        want = 0.31 * back[:, 0] - 0.17 * back[:, 1] + 2.4
        worst = max(worst, np.abs(got - want).max())
    report(
        7,
        worst <= 1e-10,
        f"affine reproduction for 20 degree rotation and the reference "
        f"homography, worst abs err {worst:.2e}",
    )


def experiment_gaps(config, texture_name):
    image = synthetic_texture(texture_name, 512)
    curves, _ = run_experiment(config, image, texture_name)
    by_mode = {c.mode: [p[1] for p in c.points] for c in curves}
    joint, seq = by_mode["joint"], by_mode["sequential"]
    return [j - s for j, s in zip(joint, seq)], joint, seq


def test_criterion_8_experiment_trends():
    start = time.perf_counter()
    standard = SolverWeights(mu=0.3, gamma=0.5, kappa=0.3)
    nlm_weights = SolverWeights(mu=0.3, gamma=0.6, kappa=0.2)
    # The NLM smoothing knob is lowered from its CLI default so the
    # windowed kernel stays positive definite after balancing at these
    # noise levels; see the repo notes for the sweep behind this choice.
    nlm_params = KernelParams(nlm_h2=0.05)
    configs = [
        (
            "rotation+bilateral",
            "texture-a",
            ExperimentConfig(
                transform=Rotation(20.0),
                denoiser_kind="bilateral",
                weights=standard,
                noise_variances=(0.02, 0.04, 0.06, 0.08, 0.10),
                seed=21,
                method="direct",
            ),
        ),
        (
            "rotation+nlm",
            "texture-a",
            ExperimentConfig(
                transform=Rotation(20.0),
                denoiser_kind="nlm",
                kernel_params=nlm_params,
                weights=nlm_weights,
                noise_variances=(0.08, 0.125),
                seed=22,
                method="direct",
            ),
        ),
        (
            "warp+bilateral",
            "texture-b",
            ExperimentConfig(
                transform=Homography(PAPER_H),
                denoiser_kind="bilateral",
                weights=standard,
                noise_variances=(0.02, 0.06),
                seed=23,
                method="direct",
            ),
        ),
        (
            "warp+gaussian",
            "texture-b",
            ExperimentConfig(
                transform=Homography(PAPER_H),
                denoiser_kind="gaussian",
                weights=standard,
                noise_variances=(0.02, 0.06),
                seed=24,
                method="direct",
            ),
        ),
    ]

    all_gaps = {}
    for label, texture, config in configs:
        gaps, joint, seq = experiment_gaps(config, texture)
        all_gaps[label] = gaps
        print(
            f"\n  {label}: joint {['%.3f' % v for v in joint]} dB, "
            f"sequential {['%.3f' % v for v in seq]} dB, "
            f"gaps {['%.3f' % g for g in gaps]} dB"
        )
    elapsed = time.perf_counter() - start

    floor_ok = all(g >= -0.1 for gaps in all_gaps.values() for g in gaps)
    rb = all_gaps["rotation+bilateral"]
    trend_ok = all(g > 0 for g in rb) and all(
        rb[i + 1] >= rb[i] - 0.2 for i in range(len(rb) - 1)
    )
    peak_ok = 0.4 <= max(rb) <= 2.5
    runtime_ok = elapsed < 1800.0
    report(
        8,
        floor_ok and trend_ok and peak_ok and runtime_ok,
        f"trends: joint >= sequential - 0.1 dB everywhere ({floor_ok}), "
        f"rotation+bilateral gap positive/non-decreasing ({trend_ok}), "
        f"max gap {max(rb):.3f} dB in [0.4, 2.5] ({peak_ok}), "
        f"runtime {elapsed:.0f}s < 1800s ({runtime_ok})",
    )


def test_criterion_9_determinism(tmp_path):
    args = [
        "experiment",
        "--texture",
        "texture-a",
        "--texture-size",
        "64",
        "--transform",
        "rotation",
        "--angle",
        "20",
        "--denoiser",
        "bilateral",
        "--variances",
        "0.02,0.06",
        "--seed",
        "5",
        "--method",
        "direct",
    ]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli_main(args + ["--out-csv", str(a)]) == 0
    assert cli_main(args + ["--out-csv", str(b)]) == 0
    identical = a.read_bytes() == b.read_bytes()
    report(
        9,
        identical,
        f"two seeded experiment runs byte-identical: {identical} "
        f"({len(a.read_bytes())} bytes)",
    )
