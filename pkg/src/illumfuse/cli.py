"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data/checkpoint error,
3 parameter count over budget (``params`` only).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import checkpoint, fusenet, metrics, trainer
from .errors import ArgumentError, CheckpointError, DatasetError, FormatError, IllumFuseError, ShapeError
from .imagecore import load_image, save_image, to_rgb

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_BUDGET = 0, 1, 2, 3
PARAM_BUDGET = 1_000_000

log = logging.getLogger("illumfuse")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def _config(args) -> trainer.FusionConfig:
    try:
        return trainer.load_config(args.config)
    except OSError as exc:
        raise _UsageError(f"cannot read config: {exc}") from exc
    except (ArgumentError, TypeError) as exc:
        raise _UsageError(f"bad config: {exc}") from exc


def cmd_train_enhancer(args) -> int:
    cfg = _config(args)
    ds = trainer.load_dataset(args.data)
    res = trainer.train_enhancer(ds, cfg, out=args.out)
    print(f"enhancer: {len(res.losses)} epochs, final loss {res.losses[-1] if res.losses else float('nan'):.6f}")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_train_fusion(args) -> int:
    cfg = _config(args)
    cfg = cfg.replace(
        use_stam=cfg.use_stam and not args.no_stam,
        use_adfm=cfg.use_adfm and not args.no_adfm,
        enhance_ir=cfg.enhance_ir and not args.no_enhance_ir,
        enhance_vis=cfg.enhance_vis and not args.no_enhance_vis,
    )
    enh = None
    if args.enhancer is not None:
        enh, _ = checkpoint.load_enhancer(args.enhancer)
    elif cfg.enhance_ir or cfg.enhance_vis:
        raise _UsageError("--enhancer is required unless both --no-enhance-ir and --no-enhance-vis are given")
    ds = trainer.load_dataset(args.data)
    res = trainer.train_fusion(ds, enh, cfg, out=args.out)
    print(f"fusion: {len(res.losses)} epochs, final loss {res.losses[-1] if res.losses else float('nan'):.6f}")
    print(f"wrote {args.out}")
    return EXIT_OK


def _load_models(args):
    fus, meta = checkpoint.load_fusion(args.fusion)
    enh = checkpoint.load_enhancer(args.enhancer)[0] if args.enhancer else None
    return enh, fus, bool(meta.get("enhance_ir", True)), bool(meta.get("enhance_vis", True))


def _fuse_one(enh, fus, flags, ir_path, vi_path, out_path) -> None:
    ir, vi = load_image(ir_path), to_rgb(load_image(vi_path))
    if ir.shape[:2] != vi.shape[:2]:
        raise ShapeError(f"{ir_path} is {ir.shape[1]}x{ir.shape[0]} but {vi_path} is {vi.shape[1]}x{vi.shape[0]}")
    save_image(fusenet.fuse_pair(enh, fus, ir, vi, *flags), out_path)


def cmd_fuse(args) -> int:
    enh, fus, *flags = _load_models(args)
    if os.path.isdir(args.ir) or os.path.isdir(args.vi):
        if not (os.path.isdir(args.ir) and os.path.isdir(args.vi)):
            raise DatasetError("--ir and --vi must both be files or both be directories")
        ir, vi = metrics.list_images(args.ir), metrics.list_images(args.vi)
        names = sorted(set(ir) & set(vi))
        if not names:
            raise DatasetError("no matching basenames between --ir and --vi")
        os.makedirs(args.out, exist_ok=True)
        for n in names:
            _fuse_one(enh, fus, flags, ir[n], vi[n], os.path.join(args.out, n + ".png"))
        print(f"fused {len(names)} pairs into {args.out}")
    else:
        _fuse_one(enh, fus, flags, args.ir, args.vi, args.out)
        print(f"wrote {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    report = metrics.evaluate_pairs(args.fused, args.ir, args.vi)
    paths = report.write(args.out)
    for m in report.metrics:
        print(f"{m:8s} {report.means[m]:.4f}")
    print("wrote " + ", ".join(paths))
    return EXIT_OK


def cmd_params(args) -> int:
    if args.enhancer is None and args.fusion is None:
        cfg = _config(args)
        from .fusenet import FusionModel
        from .illum import EnhancerModel

        enh, fus = EnhancerModel(cfg.enhancer_config()), FusionModel(cfg.fusion_net_config())
    else:
        enh = checkpoint.load_enhancer(args.enhancer)[0] if args.enhancer else None
        fus = checkpoint.load_fusion(args.fusion)[0] if args.fusion else None
    n_enh, n_fus = fusenet.count_parameters(enh), fusenet.count_parameters(fus)
    total = n_enh + n_fus
    print(f"enhancer {n_enh}")
    print(f"fusion   {n_fus}")
    print(f"total    {total} ({total / 1e6:.3f} M)")
    ok = total <= PARAM_BUDGET
    print(f"budget   {PARAM_BUDGET} -> {'OK' if ok else 'OVER'}")
    return EXIT_OK if ok else EXIT_BUDGET


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="illumfuse", description="Low-light infrared/visible image fusion.")
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("train-enhancer", help="stage 1: fit the illumination estimator")
    s.add_argument("--data", required=True, help="directory with ir/ and vi/ subdirectories")
    s.add_argument("--config", help="key = value config file")
    s.add_argument("--out", required=True, help="checkpoint path")
    s.set_defaults(func=cmd_train_enhancer)

    s = sub.add_parser("train-fusion", help="stage 2: fit the fusion network")
    s.add_argument("--data", required=True)
    s.add_argument("--enhancer", help="stage-1 checkpoint")
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--no-stam", action="store_true", help="uniform 0.5/0.5 loss weights")
    s.add_argument("--no-adfm", action="store_true", help="plain concatenation instead of the attention block")
    s.add_argument("--no-enhance-ir", action="store_true", help="feed raw infrared")
    s.add_argument("--no-enhance-vis", action="store_true", help="feed raw visible")
    s.set_defaults(func=cmd_train_fusion)

    s = sub.add_parser("fuse", help="fuse one pair, or every matched pair of two directories")
    s.add_argument("--ir", required=True)
    s.add_argument("--vi", required=True)
    s.add_argument("--enhancer")
    s.add_argument("--fusion", required=True)
    s.add_argument("--out", required=True, help="output image, or directory in batch mode")
    s.set_defaults(func=cmd_fuse)

    s = sub.add_parser("eval", help="score fused images against their sources")
    s.add_argument("--fused", required=True)
    s.add_argument("--ir", required=True)
    s.add_argument("--vi", required=True)
    s.add_argument("--out", required=True, help="CSV report path")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("params", help="count parameters against the 1.0 M budget")
    s.add_argument("--enhancer")
    s.add_argument("--fusion")
    s.add_argument("--config", help="count a fresh model built from this config")
    s.set_defaults(func=cmd_params)
    return p


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"illumfuse: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, DatasetError, CheckpointError, FormatError, ShapeError) as exc:
        print(f"illumfuse: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except IllumFuseError as exc:
        print(f"illumfuse: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"illumfuse: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
