"""Command-line entry points: fit, transfer, eval, and one-shot run.

Exit codes: 0 success, 1 numeric failure during optimization, 2 bad
arguments or unusable input files. Commands write their output files only
after all computation succeeded.
"""

from __future__ import annotations

import argparse
import contextlib
import os
import sys

from threadpoolctl import threadpool_limits

from . import metrics, pipeline, synthesis
from .dictionary import atlas
from .exceptions import DegenerateDistributionError, NumericFailure
from .patches import load_png, save_png
from .pipeline import FitConfig

_DEFAULTS = FitConfig()

_BOOL_KEYS = {"exact-ot"}
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _add_threads(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--threads", type=int, default=0,
        help="cap worker threads (default: hardware parallelism; "
        "env SOT_THREADS is the fallback)",
    )
    parser.add_argument(
        "--config", metavar="PATH",
        help="key=value file of defaults, overridden by explicit flags",
    )


def _add_fit_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--patch-size", type=int, default=_DEFAULTS.patch_size)
    parser.add_argument("--samples", dest="sample_count", type=int,
                        default=_DEFAULTS.sample_count,
                        help="patches sampled per image")
    parser.add_argument("--dict-size", type=int, default=_DEFAULTS.dict_size)
    parser.add_argument("--dict-size-y", type=int, default=None,
                        help="reference-side dictionary size (default: --dict-size)")
    parser.add_argument("--omp-tol", type=float, default=_DEFAULTS.omp_tol)
    parser.add_argument("--omp-k", dest="omp_max_atoms", type=int,
                        default=_DEFAULTS.omp_max_atoms,
                        help="max atoms per patch code")
    parser.add_argument("--lambda", dest="lam", type=float, default=_DEFAULTS.lam,
                        help="row-sum regularization weight")
    parser.add_argument("--tau", type=float, default=_DEFAULTS.tau)
    parser.add_argument("--gamma", type=float, default=_DEFAULTS.gamma,
                        help="transport pull weight in the dictionary update")
    parser.add_argument("--eta", type=float, default=_DEFAULTS.eta,
                        help="entropic regularization (on max-normalized cost)")
    parser.add_argument("--sinkhorn-iters", type=int, default=_DEFAULTS.sinkhorn_iters)
    parser.add_argument("--outer-iters", type=int, default=_DEFAULTS.outer_iters)
    parser.add_argument("--stop", dest="rel_loss_stop", type=float,
                        default=_DEFAULTS.rel_loss_stop,
                        help="relative loss change for early stop")
    parser.add_argument("--seed", type=int, default=_DEFAULTS.seed)
    parser.add_argument("--exact-ot", action=argparse.BooleanOptionalAction,
                        default=_DEFAULTS.exact_ot,
                        help="solve transport exactly when the instance is small enough")


def _add_transfer_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--direction", choices=("forward", "reverse"),
                        default="forward")
    parser.add_argument("--stride", type=int, default=4,
                        help="dense-grid stride for reconstruction")
    parser.add_argument("--rho", type=float, default=0.01,
                        help="gradient-consistency weight; 0 skips refinement")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sot",
        description="Optimal image transport on sparse dictionaries",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="train a transfer model from two images")
    p_fit.add_argument("--content", required=True, metavar="PNG")
    p_fit.add_argument("--reference", required=True, metavar="PNG")
    p_fit.add_argument("--out-model", required=True, metavar="PATH")
    p_fit.add_argument("--loss-csv", metavar="PATH")
    p_fit.add_argument("--atlas-dir", metavar="DIR",
                       help="write dict_x.png / dict_y.png atom mosaics here")
    _add_fit_flags(p_fit)
    _add_threads(p_fit)
    p_fit.set_defaults(func=cmd_fit)

    p_tr = sub.add_parser("transfer", help="apply a trained model to an image")
    p_tr.add_argument("--model", required=True, metavar="PATH")
    p_tr.add_argument("--input", required=True, metavar="PNG")
    p_tr.add_argument("--out", required=True, metavar="PNG")
    _add_transfer_flags(p_tr)
    _add_threads(p_tr)
    p_tr.set_defaults(func=cmd_transfer)

    p_ev = sub.add_parser("eval", help="print psnr/ssim/edge_ssim for two images")
    p_ev.add_argument("--a", required=True, metavar="PNG")
    p_ev.add_argument("--b", required=True, metavar="PNG")
    _add_threads(p_ev)
    p_ev.set_defaults(func=cmd_eval)

    p_run = sub.add_parser("run", help="fit then transfer in one shot")
    p_run.add_argument("--content", required=True, metavar="PNG")
    p_run.add_argument("--reference", required=True, metavar="PNG")
    p_run.add_argument("--out", required=True, metavar="PNG")
    _add_fit_flags(p_run)
    _add_transfer_flags(p_run)
    _add_threads(p_run)
    p_run.set_defaults(func=cmd_run)

    return parser


def _config_tokens(path: str) -> list[str]:
    """Turn a key=value config file into argument tokens."""
    tokens: list[str] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.replace("_", "-")
            if key in _BOOL_KEYS:
                if value.lower() in _TRUE:
                    tokens.append(f"--{key}")
                elif value.lower() in _FALSE:
                    tokens.append(f"--no-{key}")
                else:
                    raise ValueError(f"{path}:{lineno}: bad boolean {value!r}")
            else:
                tokens.extend([f"--{key}", value])
    return tokens


def _expand_config(argv: list[str]) -> list[str]:
    """Splice config-file tokens in before explicit flags so flags win."""
    if not argv:
        return argv
    rest, path = [], None
    i = 1
    while i < len(argv):
        tok = argv[i]
        if tok == "--config":
            if i + 1 >= len(argv):
                rest.append(tok)  # let argparse report the missing value
                i += 1
                continue
            path = argv[i + 1]
            i += 2
        elif tok.startswith("--config="):
            path = tok.split("=", 1)[1]
            i += 1
        else:
            rest.append(tok)
            i += 1
    if path is None:
        return argv
    return [argv[0]] + _config_tokens(path) + rest


def _fit_config(args: argparse.Namespace) -> FitConfig:
    return FitConfig(
        patch_size=args.patch_size,
        sample_count=args.sample_count,
        dict_size=args.dict_size,
        dict_size_y=args.dict_size_y,
        omp_tol=args.omp_tol,
        omp_max_atoms=args.omp_max_atoms,
        lam=args.lam,
        tau=args.tau,
        gamma=args.gamma,
        eta=args.eta,
        sinkhorn_iters=args.sinkhorn_iters,
        outer_iters=args.outer_iters,
        rel_loss_stop=args.rel_loss_stop,
        seed=args.seed,
        exact_ot=args.exact_ot,
    )


def _print_record(rec: pipeline.LossRecord) -> None:
    print(
        f"iter={rec.iteration} E_sp_x={rec.e_sp_x:.6g} E_sp_y={rec.e_sp_y:.6g} "
        f"E_ot_a={rec.e_ot_a:.6g} E_ot_b={rec.e_ot_b:.6g} E_c={rec.e_c:.6g}"
    )
    sys.stdout.flush()


class _OutputBatch:
    """Collects output writes; on any failure removes everything written."""

    def __init__(self):
        self.written: list[str] = []

    def write(self, path: str, writer) -> None:
        writer(path)
        self.written.append(path)

    def rollback(self) -> None:
        for path in self.written:
            with contextlib.suppress(OSError):
                os.unlink(path)


def _train(args: argparse.Namespace) -> tuple:
    content = load_png(args.content)
    reference = load_png(args.reference)
    config = _fit_config(args)
    model = pipeline.fit(content, reference, config, on_iteration=_print_record)
    return content, reference, model


def cmd_fit(args: argparse.Namespace) -> int:
    content, _, model = _train(args)
    outputs = _OutputBatch()
    try:
        outputs.write(args.out_model, lambda p: pipeline.save_model(model, p))
        if args.loss_csv:
            outputs.write(
                args.loss_csv, lambda p: pipeline.export_history_csv(model.history, p)
            )
        if args.atlas_dir:
            os.makedirs(args.atlas_dir, exist_ok=True)
            ps, ch = model.config.patch_size, content.channels
            outputs.write(
                os.path.join(args.atlas_dir, "dict_x.png"),
                lambda p: save_png(atlas(model.dict_x, ps, ch), p),
            )
            outputs.write(
                os.path.join(args.atlas_dir, "dict_y.png"),
                lambda p: save_png(atlas(model.dict_y, ps, ch), p),
            )
    except Exception:
        outputs.rollback()
        raise
    return 0


def cmd_transfer(args: argparse.Namespace) -> int:
    model = pipeline.load_model(args.model)
    content = load_png(args.input)
    result = synthesis.transfer(
        model, content, direction=args.direction, stride=args.stride, rho=args.rho
    )
    print(f"psnr={metrics.psnr(result, content):.6g}")
    print(f"edge_ssim={metrics.edge_ssim(result, content):.6g}")
    save_png(result, args.out)
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    img_a = load_png(args.a)
    img_b = load_png(args.b)
    print(f"psnr={metrics.psnr(img_a, img_b):.6g}")
    print(f"ssim={metrics.ssim(img_a, img_b):.6g}")
    print(f"edge_ssim={metrics.edge_ssim(img_a, img_b):.6g}")
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    content, _, model = _train(args)
    result = synthesis.transfer(
        model, content, direction=args.direction, stride=args.stride, rho=args.rho
    )
    print(f"psnr={metrics.psnr(result, content):.6g}")
    print(f"edge_ssim={metrics.edge_ssim(result, content):.6g}")
    save_png(result, args.out)
    return 0


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = _build_parser()
    try:
        argv = _expand_config(argv)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0

    limit = args.threads if args.threads > 0 else None
    if limit is None:
        env = os.environ.get("SOT_THREADS", "").strip()
        if env:
            try:
                limit = int(env)
            except ValueError:
                print(f"error: SOT_THREADS={env!r} is not an integer", file=sys.stderr)
                return 2
    try:
        ctx = threadpool_limits(limits=limit) if limit else contextlib.nullcontext()
        with ctx:
            return args.func(args)
    except (NumericFailure, DegenerateDistributionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:  # console-script shim
    sys.exit(main())


if __name__ == "__main__":
    entry()
