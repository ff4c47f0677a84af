"""Command-line interface for the denoising/interpolation pipeline."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from . import denoisers, graphcore, interpolators, jointsolver, pipeline


def _add_common(parser):
    parser.add_argument("--config", help="key=value config file; flags override it")
    parser.add_argument("--image", help="input image path (.pgm or .png)")
    parser.add_argument(
        "--texture",
        choices=["texture-a", "texture-b"],
        help="use a shipped synthetic texture instead of --image",
    )
    parser.add_argument("--texture-size", type=int, default=512)
    parser.add_argument(
        "--transform", default="identity", choices=["identity", "rotation", "homography"]
    )
    parser.add_argument("--angle", type=float, help="rotation angle in degrees")
    parser.add_argument("--homography", help='3x3 matrix as "a,b,c;d,e,f;g,h,i"')
    parser.add_argument(
        "--denoiser",
        default="bilateral",
        choices=["gaussian", "bilateral", "nlm", "identity"],
    )
    parser.add_argument("--spatial-var", type=float, default=0.3)
    parser.add_argument("--range-var", type=float, default=0.3)
    parser.add_argument("--nlm-patch", type=int, default=3)
    parser.add_argument("--nlm-window", type=int, default=9)
    parser.add_argument("--nlm-h2", type=float, default=0.3)
    parser.add_argument("--mu", type=float, default=0.3)
    parser.add_argument("--gamma", type=float, default=0.5)
    parser.add_argument("--kappa", type=float, default=0.3)
    parser.add_argument("--patch-size", type=int, default=10)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument(
        "--method", default="cg", choices=["cg", "direct", "closed-form"]
    )
    parser.add_argument("--closed-form", action="store_true", help="alias for --method closed-form")
    parser.add_argument("--cg-tol", type=float, default=1e-8)
    parser.add_argument("--jacobi", action="store_true", help="Jacobi-precondition CG")
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--out-image", help="output image path")


def _load_config_file(path, args):
    """Apply key=value lines from a config file as argument defaults."""
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            key = key.strip().replace("-", "_")
            value = value.strip()
            if not hasattr(args, key):
                raise SystemExit(f"unknown config key {key!r}")
            current = getattr(args, key)
            if isinstance(current, bool):
                value = value.lower() in ("1", "true", "yes")
            elif isinstance(current, int):
                value = int(value)
            elif isinstance(current, float):
                value = float(value)
            elif key in ("variances",):
                value = value
            setattr(args, key, value)


def _build_config(args, variances=(0.02,), mode="both"):
    transform = interpolators.parse_transform(
        args.transform, angle=args.angle, h=args.homography
    )
    params = denoisers.KernelParams(
        spatial_var=args.spatial_var,
        range_var=args.range_var,
        nlm_patch_size=args.nlm_patch,
        nlm_search_window=args.nlm_window,
        nlm_h2=args.nlm_h2,
    )
    weights = jointsolver.SolverWeights(mu=args.mu, gamma=args.gamma, kappa=args.kappa)
    method = "closed-form" if getattr(args, "closed_form", False) else args.method
    return pipeline.ExperimentConfig(
        transform=transform,
        denoiser_kind=args.denoiser,
        kernel_params=params,
        weights=weights,
        noise_variances=tuple(variances),
        seed=args.seed,
        mode=mode,
        patch_size=args.patch_size,
        method=method,
        cg_tol=args.cg_tol,
        jacobi=args.jacobi,
        workers=args.workers,
    )


def _load_input(args):
    if args.texture:
        name = args.texture
        return pipeline.synthetic_texture(name, args.texture_size), name
    if not args.image:
        raise SystemExit("either --image or --texture is required")
    return pipeline.load_image(args.image), args.image


def _run_mode(args, mode):
    image, _ = _load_input(args)
    run_mode = "sequential" if mode in ("denoise", "interpolate") else mode
    config = _build_config(args, mode=run_mode)
    if mode == "interpolate":
        config = replace(config, denoiser_kind="identity")
    elif mode == "denoise":
        config = replace(config, transform=interpolators.parse_transform("identity"))
    mode = run_mode
    out = pipeline.process_image(config, image, mode)
    if args.out_image:
        pipeline.save_image(out, args.out_image)
        print(f"wrote {args.out_image}")
    else:
        print("no --out-image given; nothing written")
    return 0


def _cmd_experiment(args):
    image, name = _load_input(args)
    variances = [float(v) for v in args.variances.split(",")]
    config = _build_config(args, variances=variances, mode=args.mode)
    _, csv_text = pipeline.run_experiment(config, image, image_name=name)
    if args.out_csv:
        with open(args.out_csv, "w") as fh:
            fh.write(csv_text)
        print(f"wrote {args.out_csv}")
    else:
        sys.stdout.write(csv_text)
    return 0


def _cmd_inspect_graph(args):
    image, _ = _load_input(args)
    r0, c0 = (int(v) for v in args.origin.split(","))
    n = args.size
    tile = image.pixels[r0 : r0 + n, c0 : c0 + n]
    if tile.shape != (n, n):
        raise SystemExit("patch extends past the image boundary")
    import numpy as np

    rr, cc = np.mgrid[r0 : r0 + n, c0 : c0 + n]
    coords = np.column_stack([rr.ravel(), cc.ravel()])
    params = denoisers.KernelParams(
        spatial_var=args.spatial_var,
        range_var=args.range_var,
        nlm_patch_size=args.nlm_patch,
        nlm_search_window=args.nlm_window,
        nlm_h2=args.nlm_h2,
    )
    kernel = denoisers.build_denoiser(
        args.denoiser, coords, np.clip(tile.ravel(), 0.0, 1.0), params
    )
    psi = denoisers.sinkhorn_balance(kernel, kind=args.denoiser)
    graph = graphcore.denoiser_to_laplacian(psi, args.mu)
    text = graphcore.export_edges(graph, weight_tol=args.weight_tol)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mixedgraph",
        description="Joint image denoising/interpolation via mixed-graph MAP filtering",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("denoise", "interpolate", "joint", "sequential"):
        p = sub.add_parser(name)
        _add_common(p)

    p = sub.add_parser("experiment")
    _add_common(p)
    p.add_argument("--variances", default="0.02", help="comma-separated noise variances")
    p.add_argument("--mode", default="both", choices=["joint", "sequential", "both"])
    p.add_argument("--out-csv", help="CSV output path (default: stdout)")

    p = sub.add_parser("inspect-graph")
    _add_common(p)
    p.add_argument("--origin", default="0,0", help="patch origin as row,col")
    p.add_argument("--size", type=int, default=10, help="square patch side")
    p.add_argument("--weight-tol", type=float, default=1e-12)
    p.add_argument("--out", help="edge list output path (default: stdout)")

    args = parser.parse_args(argv)
    if args.config:
        _load_config_file(args.config, args)

    if args.command in ("denoise", "interpolate", "joint", "sequential"):
        return _run_mode(args, args.command)
    if args.command == "experiment":
        return _cmd_experiment(args)
    if args.command == "inspect-graph":
        return _cmd_inspect_graph(args)
    return 2


if __name__ == "__main__":
    sys.exit(main())
