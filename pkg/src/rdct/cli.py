"""``rdct`` command line: estimate, synth and rectify.

Exit codes: 0 success, 1 usage/I/O/format errors, 2 insufficient data,
3 estimation failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .errors import EstimationFailed, InsufficientData, RDCTError, SchemaError

EXIT_OK, EXIT_USAGE, EXIT_INSUFFICIENT, EXIT_FAILED = 0, 1, 2, 3

log = logging.getLogger("rdct")

SOLVER_NAMES = {"h2lu": "H2lu", "h25": "H2.5", "h3": "H3", "h35": "H3.5", "h4": "H4"}
STUDIES = ("stability", "sensitivity", "warp", "timing")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _sigmas(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(s) for s in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated numbers") from None
    if not vals or any(not v >= 0 for v in vals):
        raise argparse.ArgumentTypeError("noise levels must be non-negative")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rdct", description="Radial undistortion and affine rectification from repeated patterns.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more log output on stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    e = sub.add_parser("estimate", help="estimate a model from a correspondence file")
    e.add_argument("--input", required=True)
    e.add_argument("--solver", required=True, choices=sorted(SOLVER_NAMES))
    e.add_argument("--max-iter", type=_positive_int, default=100)
    e.add_argument("--threshold-px", type=_positive_float, default=2.0)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", required=True)

    s = sub.add_parser("synth", help="run a synthetic benchmark study")
    s.add_argument("--study", required=True, choices=STUDIES)
    s.add_argument("--trials", type=_positive_int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--sigmas", type=_sigmas, default=None, help="noise levels in pixels, e.g. 0.5,1,2")
    s.add_argument("--out", required=True)

    r = sub.add_parser("rectify", help="undistort or rectify a PPM image with a model")
    r.add_argument("--model", required=True)
    r.add_argument("--image", required=True)
    r.add_argument("--mode", required=True, choices=("undistort", "rectify"))
    r.add_argument("--out", required=True)
    return p


def _estimate(args) -> int:
    from .io import CorrespondenceFile, ModelFile
    from .ransac import RansacConfig, lo_ransac

    corr = CorrespondenceFile.read(args.input)
    if corr.center_defaulted:
        log.warning("no distortion center given, using the image center")
    cfg = RansacConfig(max_iter=args.max_iter, pixel_threshold=args.threshold_px, seed=args.seed)
    est = lo_ransac(corr.clusters, SOLVER_NAMES[args.solver], cfg, corr.frame)
    ModelFile.from_estimate(est, corr, args.seed).write(args.out)
    log.info("lambda %.6g, vanishing line %s", est.model.lam, est.model.line.vector)
    return EXIT_OK


def _synth(args) -> int:
    from . import synth
    from .io import atomic_write

    cfg = synth.SceneConfig(n_trials=args.trials, seed=args.seed)
    if args.sigmas is not None:
        cfg = replace(cfg, noise_sigmas=args.sigmas)
    if args.study == "timing":
        rows = synth.time_solvers(cfg)
        text = synth.rows_to_csv(rows, ("solver", "calls", "mean_ms", "median_ms"))
    else:
        run = {"stability": synth.run_stability_study, "sensitivity": synth.run_sensitivity_study,
               "warp": synth.run_warp_study}[args.study]
        rows = run(cfg)
        text = synth.rows_to_csv(rows)
        column = "rms_warp_px" if args.study == "warp" else "rms_xfer_px"
        for q in synth.summarize(rows, column):
            log.info("%s sigma=%g %s: q1 %.4g median %.4g q3 %.4g (n=%d)", q["solver"], q["sigma"], column,
                     q["q1"], q["median"], q["q3"], q["n"])
    atomic_write(args.out, text)
    return EXIT_OK


def _rectify(args) -> int:
    from .image import read_ppm, warp_image, write_ppm
    from .io import ModelFile

    model = ModelFile.read(args.model)
    img = read_ppm(args.image)
    h, w = img.shape[:2]
    frame = model.frame
    if (w, h) != (model.width, model.height):
        log.warning("image is %dx%d but the model was estimated on %gx%g; rescaling the frame",
                    w, h, model.width, model.height)
        sx, sy = w / model.width, h / model.height
        from .geometry import NormalizationFrame
        frame = NormalizationFrame(w, h, (model.distortion_center[0] * sx, model.distortion_center[1] * sy))
        if abs(sx - sy) > 1e-9:
            log.warning("aspect ratio differs from the model's image; results are approximate")
    out = warp_image(img, frame, model.lam, model.line if args.mode == "rectify" else None)
    if out.cropped:
        log.warning("output canvas cropped to %gx the input area", 4)
    write_ppm(args.out, out.image)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose + 1, 2), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"estimate": _estimate, "synth": _synth, "rectify": _rectify}[args.command]
    try:
        return handler(args)
    except InsufficientData as exc:
        print(f"rdct: insufficient data: {exc}", file=sys.stderr)
        return EXIT_INSUFFICIENT
    except EstimationFailed as exc:
        print(f"rdct: estimation failed: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except SchemaError as exc:
        print(f"rdct: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        print(f"rdct: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RDCTError as exc:
        print(f"rdct: estimation failed: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
