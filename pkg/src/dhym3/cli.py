"""Command-line entry point: ``dhym3 {solve, check-lemmas, phase}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from contextlib import nullcontext
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from .config import build_background, load_run_config, load_sample_spec
from .continuation import continue_path, verify_solution
from .errors import (
    ContinuationStalledError,
    HypothesisViolatedError,
    InadmissibleClassError,
    NoConvergenceError,
    SamplerStarvedError,
    UnsupportedPhaseError,
)
from .lemmas import CHECKS
from .path_constants import compute_ct
from .torus import class_integrals_grid, grid_admissibility_rtol, write_field

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_HYPOTHESIS = 3
EXIT_STALLED = 4
EXIT_NO_CONVERGENCE = 5
EXIT_UNSUPPORTED_PHASE = 6
EXIT_LEMMA_FAILURE = 7

DEFAULT_OUT = "dhym3-out"
PHASE_TABLE_POINTS = 11

log = logging.getLogger("dhym3")


class UsageError(Exception):
    pass


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, default=_json_default) + "\n")


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def _load_background(path):
    if path is None:
        raise UsageError("--config is required")
    try:
        cfg = load_run_config(path)
    except (OSError, json.JSONDecodeError, ValidationError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    try:
        bg = build_background(cfg)
    except UnsupportedPhaseError:
        raise
    except ValueError as exc:
        raise UsageError(f"invalid config {path}: {exc}") from exc
    return cfg, bg


def _failure_payload(exc, bg, **extra) -> dict:
    trace = getattr(exc, "trace", None)
    out = {
        "error": type(exc).__name__,
        "message": str(exc),
        "theta_hat": bg.phase.theta_hat if bg is not None else None,
        "trace": trace.to_json() if trace is not None else [],
    }
    for key in ("margins", "history", "t_reached"):
        if hasattr(exc, key):
            out[key] = getattr(exc, key)
    out.update(extra)
    return out


def cmd_solve(args) -> int:
    cfg, bg = _load_background(args.config)
    out = Path(args.out or cfg.output.dir or DEFAULT_OUT)
    solver = cfg.solver.build()
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        phi, trace = continue_path(bg, solver)
    except HypothesisViolatedError as exc:
        _write_json(out / "failure.json", _failure_payload(exc, bg))
        print(f"hypothesis violated: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except InadmissibleClassError as exc:
        _write_json(out / "failure.json", _failure_payload(exc, bg))
        print(f"inadmissible class: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except ContinuationStalledError as exc:
        _write_json(out / "failure.json", _failure_payload(exc, bg))
        if exc.trace is not None:
            exc.trace.write_csv(out / "trace.csv")
        print(f"continuation stalled: {exc}", file=sys.stderr)
        return EXIT_STALLED
    except NoConvergenceError as exc:
        _write_json(out / "failure.json", _failure_payload(exc, bg))
        print(f"no convergence: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    elapsed = time.perf_counter() - t0

    report = verify_solution(bg, phi)
    trace.write_csv(out / "trace.csv")
    write_field(out / "phi.gma3", bg.grid, phi)
    _write_json(
        out / "report.json",
        {
            "theta_hat": bg.phase.theta_hat,
            "grid": {"dims_active": bg.grid.dims_active, "resolution": list(bg.grid.resolution)},
            "steps": len(trace),
            "elapsed_s": elapsed,
            "sup_phi": float(np.max(np.abs(phi))),
            "verification": report.to_json(),
        },
    )
    print(
        f"reached t=1 in {len(trace)} steps ({elapsed:.2f} s); "
        f"sup|F~-1|={report.sup_F_tilde_residual:.3e} "
        f"sup|phase-theta|={report.sup_phase_deviation:.3e}; outputs in {out}"
    )
    return EXIT_OK


def cmd_phase(args) -> int:
    _, bg = _load_background(args.config)
    ph = bg.phase
    print(f"theta_hat = {ph.theta_hat:.15g}  (tan = {ph.tan_theta:.15g})")
    ok, margins = bg.check_subsolution()
    print(
        f"subsolution: {'ok' if ok else 'VIOLATED'}  positivity margin {margins.positivity:.6g}  "
        f"pair-product margin {margins.pair_product:.6g}"
    )
    integrals = class_integrals_grid(bg)
    rtol = grid_admissibility_rtol(bg.grid)
    print("      t          c_t")
    try:
        for t in np.linspace(0.0, 1.0, PHASE_TABLE_POINTS):
            p = compute_ct(integrals, float(t), ph, rtol=rtol)
            print(f"  {t:5.2f}  {p.c_t:.15f}")
    except InadmissibleClassError as exc:
        print(f"inadmissible class: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    return EXIT_OK if ok else EXIT_HYPOTHESIS


def cmd_check_lemmas(args) -> int:
    try:
        spec = load_sample_spec(args.config, seed=args.seed)
    except (OSError, json.JSONDecodeError, TypeError, ValueError) as exc:
        raise UsageError(f"invalid lemma spec: {exc}") from exc
    out = Path(args.out or DEFAULT_OUT)
    out.mkdir(parents=True, exist_ok=True)
    all_pass = True
    for name, check in CHECKS.items():
        t0 = time.perf_counter()
        try:
            rep = check(spec)
        except SamplerStarvedError as exc:
            _write_json(out / f"{name}.json", {"lemma": name, "pass": False, "error": str(exc)})
            print(f"FAIL  {name}: sampler starved ({exc})")
            all_pass = False
            continue
        payload = rep.to_json()
        payload["elapsed_s"] = time.perf_counter() - t0
        _write_json(out / f"{name}.json", payload)
        all_pass &= rep.passed
        print(f"{'PASS' if rep.passed else 'FAIL'}  {name}: n={rep.n_valid} worst slack {rep.worst_slack:.3e}")
    return EXIT_OK if all_pass else EXIT_LEMMA_FAILURE


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON configuration")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--threads", type=int, metavar="N", help="cap BLAS/FFT thread pools")
    common.add_argument("--seed", type=int, metavar="U64", help="sampler seed (check-lemmas)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="dhym3", description="dHYM continuity-path solver on flat 3-tori")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="run the continuity path to t=1").set_defaults(fn=cmd_solve)
    sub.add_parser("check-lemmas", parents=[common], help="randomised lemma harness").set_defaults(
        fn=cmd_check_lemmas
    )
    sub.add_parser("phase", parents=[common], help="phase angle and c_t table").set_defaults(fn=cmd_phase)
    return parser


def _thread_limit(n):
    if n is None:
        return nullcontext()
    if n < 1:
        raise UsageError("--threads must be positive")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_USAGE
    try:
        with _thread_limit(args.threads):
            return args.fn(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UnsupportedPhaseError as exc:
        print(f"unsupported phase: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED_PHASE
    except Exception as exc:  # noqa: BLE001 - last-resort exit code
        log.exception("unexpected failure")
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
