"""End-to-end experiment harness: image I/O, noise, patch orchestration, PSNR.

The harness reproduces the joint-versus-sequential comparison: for each
noise variance it corrupts the image once, runs every patch job in both
modes from identical inputs, stitches the real output pixels, and scores
them against the clean image pushed through the same interpolation rows.
"""

from __future__ import annotations

import multiprocessing
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from . import denoisers, graphcore, interpolators, jointsolver
from .errors import (
    BalanceError,
    ImageIOError,
    PatchGeometryError,
    PreconditionError,
    SingularOperatorError,
    SolverError,
)

PSNR_CAP_DB = 99.0
CSV_HEADER = "image,transform,denoiser,mode,variance,psnr_db,patches_failed"


@dataclass(frozen=True)
class ImageBuffer:
    """Grayscale intensities nominally in [0, 1] with a per-pixel validity mask."""

    pixels: np.ndarray
    validity: np.ndarray

    @classmethod
    def from_array(cls, pixels) -> "ImageBuffer":
        p = np.asarray(pixels, dtype=float)
        if p.ndim != 2:
            raise ValueError(f"expected a 2-D image, got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ValueError("image contains non-finite pixels")
        return cls(pixels=p, validity=np.ones(p.shape, dtype=bool))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one experiment run."""

    transform: object
    denoiser_kind: str = "bilateral"
    kernel_params: denoisers.KernelParams = field(
        default_factory=denoisers.KernelParams
    )
    weights: jointsolver.SolverWeights = field(
        default_factory=jointsolver.SolverWeights
    )
    noise_variances: tuple = (0.02,)
    seed: int = 0
    mode: str = "both"
    patch_size: int = 10
    method: str = "cg"
    cg_tol: float = 1e-8
    jacobi: bool = False
    workers: int = 1

    def __post_init__(self):
        if any(v <= 0 for v in self.noise_variances):
            raise ValueError("noise variances must be positive")
        if self.patch_size < 2:
            raise ValueError("patch size must be at least 2")
        if self.mode not in ("joint", "sequential", "both"):
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def modes(self):
        return ("joint", "sequential") if self.mode == "both" else (self.mode,)


@dataclass(frozen=True)
class PsnrCurve:
    mode: str
    points: tuple  # ((variance, psnr_db), ...)
    image_name: str
    transform_label: str
    denoiser_kind: str


# ---------------------------------------------------------------------------
# Image I/O (binary 8-bit PGM; PNG optional via Pillow).

def load_pgm(path) -> ImageBuffer:
    with open(path, "rb") as fh:
        data = fh.read()
    pos = 0

    def token():
        nonlocal pos
        while pos < len(data):
            if data[pos : pos + 1].isspace():
                pos += 1
            elif data[pos : pos + 1] == b"#":
                while pos < len(data) and data[pos : pos + 1] != b"\n":
                    pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageIOError(f"unexpected end of header at byte {start}", offset=start)
        return data[start:pos]

    magic = token()
    if magic != b"P5":
        raise ImageIOError(f"not a binary PGM (magic {magic!r})", offset=0)
    try:
        width, height, maxval = int(token()), int(token()), int(token())
    except ValueError:
        raise ImageIOError(f"malformed header near byte {pos}", offset=pos) from None
    if maxval <= 0 or maxval > 255:
        raise ImageIOError(f"unsupported maxval {maxval}", offset=pos)
    pos += 1  # single whitespace after maxval
    need = width * height
    raster = data[pos : pos + need]
    if len(raster) != need:
        raise ImageIOError(
            f"truncated raster at byte {pos + len(raster)}", offset=pos + len(raster)
        )
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    return ImageBuffer.from_array(pixels / float(maxval))


def save_pgm(image, path) -> None:
    pixels = image.pixels if isinstance(image, ImageBuffer) else np.asarray(image)
    quantized = np.floor(np.clip(pixels, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    h, w = quantized.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(quantized.tobytes())


def load_image(path) -> ImageBuffer:
    path = str(path)
    if path.endswith(".png"):
        try:
            from PIL import Image
        except ImportError as exc:
            raise ImageIOError("PNG support requires Pillow") from exc
        arr = np.asarray(Image.open(path).convert("L"), dtype=float)
        return ImageBuffer.from_array(arr / 255.0)
    return load_pgm(path)


def save_image(image, path) -> None:
    path = str(path)
    if path.endswith(".png"):
        try:
            from PIL import Image
        except ImportError as exc:
            raise ImageIOError("PNG support requires Pillow") from exc
        pixels = image.pixels if isinstance(image, ImageBuffer) else np.asarray(image)
        quantized = np.floor(np.clip(pixels, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
        Image.fromarray(quantized, mode="L").save(path)
        return
    save_pgm(image, path)


# ---------------------------------------------------------------------------
# Synthetic test textures (deterministic procedural generation).

def synthetic_texture(name: str, size: int = 512) -> ImageBuffer:
    """Procedural grayscale textures used by the shipped experiments."""
    u = np.linspace(0.0, 1.0, size, endpoint=False)
    cc, rr = np.meshgrid(u, u)
    if name == "texture-a":
        img = (
            0.45 * np.sin(2 * np.pi * (7 * rr + 3 * cc))
            + 0.35 * np.sin(2 * np.pi * (2 * rr - 9 * cc) + 1.3)
            + 0.25 * np.sin(2 * np.pi * (23 * rr + 17 * cc) + 0.4)
            + 0.3 * np.sin(2 * np.pi * 5 * np.hypot(rr - 0.4, cc - 0.6))
        )
    elif name == "texture-b":
        rng = np.random.default_rng(20240817)
        noise = rng.standard_normal((size, size))
        img = (
            1.1 * ndimage.gaussian_filter(noise, 6.0, mode="wrap") * 12.0
            + 0.8 * ndimage.gaussian_filter(noise, 1.2, mode="wrap") * 2.5
            + 0.4 * np.sin(2 * np.pi * (4 * rr + 11 * cc))
        )
    else:
        raise ValueError(f"unknown synthetic texture {name!r}")
    lo, hi = img.min(), img.max()
    img = 0.02 + 0.96 * (img - lo) / (hi - lo)
    return ImageBuffer.from_array(img)


# ---------------------------------------------------------------------------
# Noise and metrics.

def add_gaussian_noise(image, variance: float, seed: int):
    """Add i.i.d. zero-mean Gaussian noise; output is NOT clipped to [0, 1]."""
    if variance <= 0:
        raise ValueError(f"variance must be positive, got {variance}")
    pixels = image.pixels if isinstance(image, ImageBuffer) else np.asarray(image)
    rng = np.random.default_rng(seed)
    noisy = pixels + rng.normal(0.0, np.sqrt(variance), pixels.shape)
    if isinstance(image, ImageBuffer):
        return ImageBuffer(pixels=noisy, validity=image.validity.copy())
    return noisy


def psnr(reference, test, mask=None) -> float:
    """Peak-signal-to-noise ratio in dB (peak 1.0), capped at 99 dB."""
    ref = reference.pixels if isinstance(reference, ImageBuffer) else np.asarray(reference)
    tst = test.pixels if isinstance(test, ImageBuffer) else np.asarray(test)
    if ref.shape != tst.shape:
        raise ValueError(f"shape mismatch {ref.shape} vs {tst.shape}")
    if isinstance(reference, ImageBuffer) or isinstance(test, ImageBuffer):
        joint_mask = np.ones(ref.shape, dtype=bool)
        if isinstance(reference, ImageBuffer):
            joint_mask &= reference.validity
        if isinstance(test, ImageBuffer):
            joint_mask &= test.validity
        mask = joint_mask if mask is None else (mask & joint_mask)
    if mask is None:
        mask = np.ones(ref.shape, dtype=bool)
    if not mask.any():
        raise ValueError("no valid pixels to compare")
    diff = ref[mask] - np.clip(tst[mask], 0.0, 1.0)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(1.0 / mse))


# ---------------------------------------------------------------------------
# Per-patch solve.

@dataclass(frozen=True)
class PatchResult:
    joint: np.ndarray | None
    sequential: np.ndarray | None
    failed: bool
    error: str | None = None


_PATCH_ERRORS = (
    BalanceError,
    PatchGeometryError,
    PreconditionError,
    SingularOperatorError,
    SolverError,
)


def build_patch_denoiser(op, interp_values, config):
    """Balanced denoiser over a patch's real output pixels.

    Weights are computed from the plain interpolation of the noisy input
    (clipped to [0, 1] for kernel evaluation only); dummy outputs get
    identity rows, so the full operator stays doubly stochastic.
    """
    if config.denoiser_kind == "identity":
        return denoisers.identity_operator(op.real_output_count)
    kernel = denoisers.build_denoiser(
        config.denoiser_kind,
        op.target_coords,
        np.clip(interp_values, 0.0, 1.0),
        config.kernel_params,
    )
    psi = denoisers.sinkhorn_balance(kernel, kind=config.denoiser_kind)
    if not psi.certified:
        raise PreconditionError(
            f"{config.denoiser_kind} denoiser failed certification on patch"
        )
    return psi


def run_patch(job, noisy_pixels, config, a_mn=None) -> PatchResult:
    """Solve one patch in joint and/or sequential mode from shared inputs."""
    op = job.operator
    src = op.source_coords
    y = np.asarray(noisy_pixels)[src[:, 0], src[:, 1]]
    ty = op.matrix @ y
    n_real = op.real_output_count
    try:
        psi = build_patch_denoiser(op, ty[:n_real], config)
        sequential = None
        if config.mode in ("sequential", "both"):
            sequential = psi.matrix @ ty[:n_real]
        joint = None
        if config.mode in ("joint", "both"):
            m = op.size
            if a_mn is None:
                a_mn = np.linalg.inv(op.matrix)
            graph = graphcore.DirectedInterpGraph(
                original_count=m, new_count=m, block_mn=a_mn
            )
            lbar = np.zeros((m, m))
            if config.weights.kappa > 0 and config.denoiser_kind != "identity":
                l_rr = graphcore.denoiser_to_laplacian(psi, config.weights.mu)
                lbar[:n_real, :n_real] = l_rr.generalized_laplacian
            sol = jointsolver.joint_nonseparable(
                y,
                graph,
                lbar,
                config.weights,
                method=config.method,
                cg_tol=config.cg_tol,
                jacobi=config.jacobi,
            )
            joint = sol.interpolated_block[:n_real]
        return PatchResult(joint=joint, sequential=sequential, failed=False)
    except _PATCH_ERRORS as exc:
        return PatchResult(joint=None, sequential=None, failed=True, error=str(exc))


def process_image(config: ExperimentConfig, image, mode: str) -> ImageBuffer:
    """Run every patch job in one mode and stitch the real outputs."""
    pixels = image.pixels if isinstance(image, ImageBuffer) else np.asarray(image)
    jobs = interpolators.tile_image(pixels.shape, config.transform, config.patch_size)
    if not jobs:
        raise PatchGeometryError("no valid patch jobs for this transform")
    run_config = replace(config, mode=mode)
    out = np.zeros(pixels.shape)
    mask = np.zeros(pixels.shape, dtype=bool)
    for job in jobs:
        res = run_patch(job, pixels, run_config)
        if res.failed:
            continue
        tc = job.operator.target_coords
        vals = res.joint if mode == "joint" else res.sequential
        out[tc[:, 0], tc[:, 1]] = vals
        mask[tc[:, 0], tc[:, 1]] = True
    return ImageBuffer(pixels=out, validity=mask)


# ---------------------------------------------------------------------------
# Experiment orchestration.

_POOL_STATE: dict = {}


def _pool_run(args):
    idx, vi = args
    state = _POOL_STATE
    return run_patch(
        state["jobs"][idx], state["noisy"][vi], state["config"], state["inv"][idx]
    )


def build_reference(jobs, clean_pixels, shape):
    """Clean image pushed through the real interpolation rows of every job."""
    ref = np.zeros(shape)
    mask = np.zeros(shape, dtype=bool)
    for job in jobs:
        op = job.operator
        src = op.source_coords
        vals = op.real_matrix @ clean_pixels[src[:, 0], src[:, 1]]
        tc = op.target_coords
        ref[tc[:, 0], tc[:, 1]] = vals
        mask[tc[:, 0], tc[:, 1]] = True
    return ref, mask


def run_experiment(config: ExperimentConfig, image, image_name: str = "image"):
    """Sweep noise variances and score both modes; returns (curves, csv_text)."""
    clean = image.pixels if isinstance(image, ImageBuffer) else np.asarray(image)
    shape = clean.shape
    jobs = interpolators.tile_image(shape, config.transform, config.patch_size)
    if not jobs:
        raise PatchGeometryError("no valid patch jobs for this transform")
    inverses = [np.linalg.inv(job.operator.matrix) for job in jobs]
    ref, base_mask = build_reference(jobs, clean, shape)

    noisy_per_variance = [
        add_gaussian_noise(clean, var, config.seed ^ vi)
        for vi, var in enumerate(config.noise_variances)
    ]

    results_per_variance = []
    if config.workers > 1:
        _POOL_STATE.update(
            jobs=jobs, inv=inverses, config=config, noisy=noisy_per_variance
        )
        try:
            ctx = multiprocessing.get_context("fork")
            tasks = [
                (idx, vi)
                for vi in range(len(config.noise_variances))
                for idx in range(len(jobs))
            ]
            with ctx.Pool(config.workers) as pool:
                flat = pool.map(_pool_run, tasks, chunksize=16)
            k = len(jobs)
            results_per_variance = [
                flat[vi * k : (vi + 1) * k]
                for vi in range(len(config.noise_variances))
            ]
        finally:
            _POOL_STATE.clear()
    else:
        for vi in range(len(config.noise_variances)):
            results_per_variance.append(
                [
                    run_patch(job, noisy_per_variance[vi], config, inv)
                    for job, inv in zip(jobs, inverses)
                ]
            )

    transform_label = config.transform.label()
    rows = []
    points = {mode: [] for mode in config.modes}
    for vi, var in enumerate(config.noise_variances):
        outputs = {mode: np.zeros(shape) for mode in config.modes}
        run_mask = base_mask.copy()
        failed = 0
        for job, res in zip(jobs, results_per_variance[vi]):
            tc = job.operator.target_coords
            if res.failed:
                failed += 1
                run_mask[tc[:, 0], tc[:, 1]] = False
                continue
            for mode in config.modes:
                vals = res.joint if mode == "joint" else res.sequential
                outputs[mode][tc[:, 0], tc[:, 1]] = vals
        for mode in config.modes:
            value = psnr(ref, outputs[mode], run_mask)
            points[mode].append((var, value))
            rows.append(
                f"{image_name},{transform_label},{config.denoiser_kind},"
                f"{mode},{var:g},{value:.6f},{failed}"
            )

    curves = [
        PsnrCurve(
            mode=mode,
            points=tuple(points[mode]),
            image_name=image_name,
            transform_label=transform_label,
            denoiser_kind=config.denoiser_kind,
        )
        for mode in config.modes
    ]
    csv_text = CSV_HEADER + "\n" + "\n".join(rows) + "\n"
    return curves, csv_text
