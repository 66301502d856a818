"""Command-line front end.

Exit codes: 0 success, 1 other failure, 2 I/O failure, 3 size mismatch,
4 solver divergence or folded deformation, 64 usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .colorspace import rgb_to_yuv
from .errors import DegenerateInputError, DivergenceError, NonDiffeomorphicError
from .imageio import is_gray, read_image, to_rgb, write_png
from .morphing import MorphParams
from .pipeline import build_montage, colorize_from_exemplar, resize_rgb
from .postprocess import PostParams
from .transfer import transport_rgb

log = logging.getLogger("morphcolor")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_IO = 2
EXIT_SIZE = 3
EXIT_SOLVER = 4
EXIT_USAGE = 64

MONTAGE_GUTTER = 4


class UsageError(Exception):
    pass


@dataclass
class PipelineConfig:
    source_path: Path
    target_path: Path
    output_path: Path
    morph: MorphParams
    post: Optional[PostParams]
    resize_source: bool = False
    export_montage: Optional[Path] = None
    export_intermediates: Optional[Path] = None
    emit_rgb_diagnostic: bool = False


# flag name -> value converter
_VALUE_FLAGS = {
    "source": str,
    "target": str,
    "out": str,
    "mu": float,
    "lambda": float,
    "k-steps": int,
    "levels": int,
    "outer-iters": int,
    "reg-iters": int,
    "energy-tol": float,
    "gamma": float,
    "alpha": float,
    "max-pd-iters": int,
    "export-montage": str,
    "export-intermediates": str,
}
_BOOL_FLAGS = ("no-postprocess", "resize-source", "emit-rgb-diagnostic")

_POSITIVE = ("mu", "lambda", "gamma", "alpha")
_MINIMUM = {"k-steps": 2, "levels": 1, "outer-iters": 1, "reg-iters": 1, "max-pd-iters": 1}

DEFAULTS = {
    "mu": 0.025,
    "k-steps": 24,
    "levels": 4,
    "outer-iters": 5,
    "reg-iters": 30,
    "energy-tol": 1e-4,
    "gamma": 50.0,
    "alpha": 0.005,
    "max-pd-iters": 2000,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(
        prog="morphcolor",
        description="Colorize a gray face image from a color exemplar via image morphing.",
        argument_default=argparse.SUPPRESS,
    )
    p.add_argument("--source", help="color exemplar image (PNG/PPM/PGM)")
    p.add_argument("--target", help="gray image to colorize")
    p.add_argument("--out", help="output PNG path")
    p.add_argument("--mu", type=float, help="elastic parameter mu (default 0.025)")
    p.add_argument("--lambda", type=float, help="elastic parameter lambda (default: mu)")
    p.add_argument("--k-steps", type=int, help="number of path steps K (default 24)")
    p.add_argument("--levels", type=int, help="pyramid levels (default 4)")
    p.add_argument("--outer-iters", type=int, help="alternation sweeps per level (default 5)")
    p.add_argument("--reg-iters", type=int, help="Gauss-Newton steps per registration (default 30)")
    p.add_argument("--energy-tol", type=float, help="relative energy decrease for early stop")
    p.add_argument("--gamma", type=float, help="luminance coupling of the TV term (default 50)")
    p.add_argument("--alpha", type=float, help="fidelity weight of the TV model (default 0.005)")
    p.add_argument("--max-pd-iters", type=int, help="primal-dual iteration cap (default 2000)")
    p.add_argument("--no-postprocess", action="store_true", help="skip the TV cleanup")
    p.add_argument("--resize-source", action="store_true",
                   help="bilinearly resize the source to the target size")
    p.add_argument("--export-montage", metavar="PATH", help="write the color-transport path montage")
    p.add_argument("--export-intermediates", metavar="DIR", help="write the gray path images")
    p.add_argument("--emit-rgb-diagnostic", action="store_true",
                   help="also write the RGB channels transported through the map")
    p.add_argument("--config", metavar="FILE", help="key=value configuration file")
    return p


def _parse_bool(key: str, text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"--{key}: expected a boolean, got {text!r}")


def read_config_file(path) -> dict:
    """Parse ``key=value`` lines; ``#`` starts a comment. Keys use flag spelling."""
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"--config: cannot read {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"--config: {path}:{lineno}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("_", "-")
        if key in _VALUE_FLAGS:
            try:
                values[key] = _VALUE_FLAGS[key](val)
            except ValueError:
                raise UsageError(f"--{key}: invalid value {val!r} in {path}:{lineno}") from None
        elif key in _BOOL_FLAGS:
            values[key] = _parse_bool(key, val)
        else:
            raise UsageError(f"--config: unknown key {key!r} in {path}:{lineno}")
    return values


def parse_config(argv) -> PipelineConfig:
    """Build a :class:`PipelineConfig` from flags and an optional config file.

    Flags override file values. Raises :class:`UsageError` naming the
    offending flag.
    """
    ns = vars(_build_parser().parse_args(argv))
    values = dict(DEFAULTS)
    if "config" in ns:
        values.update(read_config_file(ns.pop("config")))
    values.update({k.replace("_", "-"): v for k, v in ns.items()})

    for key in ("source", "target", "out"):
        if not values.get(key):
            raise UsageError(f"--{key} is required")
    for key in _POSITIVE:
        if key in values and not values[key] > 0:
            raise UsageError(f"--{key} must be positive, got {values[key]}")
    for key, lo in _MINIMUM.items():
        if values[key] < lo:
            raise UsageError(f"--{key} must be >= {lo}, got {values[key]}")
    if not values["energy-tol"] >= 0:
        raise UsageError(f"--energy-tol must be non-negative, got {values['energy-tol']}")

    morph = MorphParams(
        mu=values["mu"],
        lam=values.get("lambda"),
        k_steps=values["k-steps"],
        pyramid_levels=values["levels"],
        outer_iterations=values["outer-iters"],
        reg_iterations=values["reg-iters"],
        energy_tol=values["energy-tol"],
    )
    post = None
    if not values.get("no-postprocess", False):
        post = PostParams(gamma=values["gamma"], alpha=values["alpha"],
                          max_iterations=values["max-pd-iters"])
    opt_path = lambda key: Path(values[key]) if values.get(key) else None  # noqa: E731
    return PipelineConfig(
        source_path=Path(values["source"]),
        target_path=Path(values["target"]),
        output_path=Path(values["out"]),
        morph=morph,
        post=post,
        resize_source=values.get("resize-source", False),
        export_montage=opt_path("export-montage"),
        export_intermediates=opt_path("export-intermediates"),
        emit_rgb_diagnostic=values.get("emit-rgb-diagnostic", False),
    )


def _target_luminance(img: np.ndarray) -> np.ndarray:
    if img.ndim == 2:
        return img
    if is_gray(img):
        return img[..., 0]
    log.warning("event=target_not_gray action=use_luminance")
    return np.clip(rgb_to_yuv(img).y, 0.0, 1.0)


def _load(path: Path, role: str) -> np.ndarray:
    try:
        return read_image(path)
    except (OSError, ValueError) as exc:
        raise OSError(f"cannot read {role} image {str(path)!r}: {exc}") from exc


def _write(path: Path, img: np.ndarray) -> None:
    try:
        write_png(path, img)
    except (OSError, ValueError) as exc:
        raise OSError(f"cannot write {str(path)!r}: {exc}") from exc


def run(config: PipelineConfig) -> int:
    """Execute the pipeline; returns the process exit status."""
    try:
        source = to_rgb(_load(config.source_path, "source"))
        target = _target_luminance(_load(config.target_path, "target"))
    except OSError as exc:
        log.error("event=io_error message=%r", str(exc))
        return EXIT_IO

    if source.shape[:2] != target.shape:
        if not config.resize_source:
            log.error(
                "event=size_mismatch source=%dx%d target=%dx%d message=%r",
                *source.shape[:2], *target.shape,
                "morphing requires source and target of equal size; "
                "use --resize-source to rescale the source")
            return EXIT_SIZE
        source = np.clip(resize_rgb(source, target.shape), 0.0, 1.0)
        log.info("event=resize_source shape=%dx%d", *target.shape)

    def on_sweep(level, sweep, energy):
        log.info("event=sweep level=%d sweep=%d path_energy=%.10g", level, sweep, energy)

    try:
        result = colorize_from_exemplar(source, target, config.morph, config.post,
                                        callback=on_sweep)
    except (DivergenceError, NonDiffeomorphicError) as exc:
        log.error("event=solver_failure message=%r", str(exc))
        return EXIT_SOLVER
    except DegenerateInputError as exc:
        log.error("event=degenerate_input message=%r", str(exc))
        return EXIT_FAILURE

    try:
        _write(config.output_path, result.rgb)
        log.info("event=write path=%s", config.output_path)
        if config.export_montage is not None:
            montage = build_montage(result.images, result.path, result.source_uv,
                                    gutter=MONTAGE_GUTTER)
            _write(config.export_montage, montage)
            log.info("event=write path=%s", config.export_montage)
        if config.export_intermediates is not None:
            out_dir = config.export_intermediates
            out_dir.mkdir(parents=True, exist_ok=True)
            for k, img in enumerate(result.images):
                _write(out_dir / f"path_{k:03d}.png", img)
            log.info("event=write dir=%s count=%d", out_dir, len(result.images))
        if config.emit_rgb_diagnostic:
            diag = config.output_path.with_name(config.output_path.stem + "_rgb_diagnostic.png")
            _write(diag, np.clip(transport_rgb(result.phi, source), 0.0, 1.0))
            log.info("event=write path=%s", diag)
    except OSError as exc:
        log.error("event=io_error message=%r", str(exc))
        return EXIT_IO
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="severity=%(levelname)s logger=%(name)s %(message)s")
    try:
        config = parse_config(sys.argv[1:] if argv is None else argv)
    except UsageError as exc:
        print(f"morphcolor: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
