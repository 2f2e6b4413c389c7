"""Command line entry point: ``avfbel {train,eval,ablate,synth,plots}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import dataset as ds
from . import pipeline as pl


def _config(args, **extra) -> pl.RunConfig:
    text = Path(args.config).read_text() if args.config else ""
    overrides = {"seed": args.seed, **extra}
    data = getattr(args, "data", None)
    if data:
        path = Path(data)
        if path.is_dir():
            overrides["samples"] = str(path / "samples.csv")
            if (path / "pairs.csv").exists():
                overrides["pairs"] = str(path / "pairs.csv")
        else:
            overrides["samples"] = str(path)
    return pl.RunConfig.from_text(text, **overrides)


def cmd_train(args):
    config = _config(args, variants=(args.variant,))
    result = pl.run_variant(args.variant, config)
    out = Path(args.out)
    pl.write_variant(result, config, out)
    (out / "config.txt").write_text(config.to_text())
    r = result.report
    print(f"{r.variant}: similarity {r.similarity:.2f}%  precision {r.precision:.4f}  "
          f"recall {r.recall:.4f}  F1 {r.f1:.4f}")


def cmd_eval(args):
    out = Path(args.out)
    ckpt = Path(args.checkpoint) if args.checkpoint else out / f"checkpoint_{pl.SLUGS[args.variant]}.json"
    config = _config(args) if (args.config or args.data or args.seed is not None) else None
    report = pl.evaluate_checkpoint(ckpt, config)
    slug = pl.SLUGS[report.variant]
    out.mkdir(parents=True, exist_ok=True)
    (out / f"eval_{slug}.json").write_text(report.to_json())
    print(f"{report.variant}: similarity {report.similarity:.2f}%  F1 {report.f1:.4f}")


def cmd_ablate(args):
    rows = pl.run_all(_config(args), args.out)
    print(pl.table_text(rows), end="")


def cmd_synth(args):
    config = _config(args, synthetic_n=args.n, samples="")
    data = pl.load_data(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "samples.csv").write_text(ds.serialize_samples(data.samples()))
    (out / "pairs.csv").write_text(ds.serialize_pairs(data))
    print(f"wrote {len(data)} pairs to {out}")


def cmd_plots(args):
    written = pl.render_plots(args.out)
    if not written:
        raise pl.PipelineError(f"no plot data found in {args.out}")
    for path in written:
        print(path)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="avfbel", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True):
        p.add_argument("--config", help="flat key = value configuration file")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", default="runs/default", help="output directory")
        if data:
            p.add_argument("--data", help="samples CSV, or a directory with samples.csv/pairs.csv")

    p = sub.add_parser("train", help="train and evaluate one variant")
    common(p)
    p.add_argument("--variant", choices=pl.VARIANTS, default="AVF-BEL")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved variant checkpoint")
    common(p)
    p.add_argument("--variant", choices=pl.VARIANTS, default="AVF-BEL")
    p.add_argument("--checkpoint", help="checkpoint path (default: OUT/checkpoint_<variant>.json)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run all variants and write the comparison table")
    common(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("synth", help="write a synthetic dataset as CSV")
    common(p, data=False)
    p.add_argument("--n", type=int, default=760, help="number of pairs")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("plots", help="render SVG figures from CSVs in --out")
    common(p, data=False)
    p.set_defaults(func=cmd_plots)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"avfbel {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
