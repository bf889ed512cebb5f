"""Command-line front end: ``mrsdc <subcommand> [options]``."""

from __future__ import annotations

import argparse
import sys

from ..errors import InvalidArgumentError, StepError
from ..quadrature import make_multirate
from .config import build_spec, keys_help, load_config
from .io import csv_text
from .studies import run_order_study, run_residual_study, run_simulation, run_work_precision, write_report

__all__ = ["build_parser", "parse_cli", "weights_rows", "main"]

STUDIES = {
    "simulate": run_simulation,
    "residual": run_residual_study,
    "order": run_order_study,
    "work-precision": run_work_precision,
}

_FLAG_KEYS = ("dt_list", "t_end", "methods", "K", "workers", "output_dir", "nx", "ny")


def weights_rows(M, P, t_left=0.0, t_right=1.0):
    """All four weight families as ``(family, m, p, j, value)`` with 1-based indices."""
    tab = make_multirate(M, P, t_left, t_right)
    rows = []
    for m in range(M):
        for j in range(M):
            rows.append(("s", m + 1, "", j + 1, tab.s[m, j]))
    for m in range(M):
        for p in range(P):
            rows.append(("s_hat", m + 1, p + 1, "", tab.s_hat[m, p]))
    for m in range(M):
        for p in range(P):
            for j in range(M):
                rows.append(("s_tilde", m + 1, p + 1, j + 1, tab.s_tilde[m, p, j]))
    for m in range(M):
        for p in range(P):
            for q in range(P):
                rows.append(("s_emb", m + 1, p + 1, q + 1, tab.s_emb[m, p, q]))
    return rows


def _dt_list(text):
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid dt list {text!r}") from None


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mrsdc",
        description="Multi-rate spectral deferred correction studies on a heated plate.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="subcommand")

    w = sub.add_parser("weights", help="print all quadrature weight families as CSV")
    w.add_argument("--M", type=int, required=True, help="standard node count")
    w.add_argument("--P", type=int, required=True, help="embedded node count")
    w.add_argument("--t-left", type=float, default=0.0)
    w.add_argument("--t-right", type=float, default=1.0)

    for name, text in [
        ("simulate", "integrate the plate and write field snapshots"),
        ("residual", "residual per sweep for one step"),
        ("order", "convergence order against a fine reference"),
        ("work-precision", "error against cost"),
    ]:
        p = sub.add_parser(
            name, help=text, description=text,
            epilog="configuration keys (file lines 'key = value', or --set key=value):\n" + keys_help(),
            formatter_class=argparse.RawDescriptionHelpFormatter,
        )
        p.add_argument("--config", required=True, help="key-value configuration file")
        p.add_argument("--dt-list", type=_dt_list, help="comma-separated step sizes (overrides dt_list)")
        p.add_argument("--t-end", type=float, help="end time (overrides t_end)")
        p.add_argument("--methods", help="method grid (overrides methods)")
        p.add_argument("--K", type=int, help="largest sweep count (overrides K)")
        p.add_argument("--workers", type=int, help="concurrent study points (overrides workers)")
        p.add_argument("--output-dir", help="output directory (overrides output_dir)")
        p.add_argument("--nx", type=int, help="elements along x (overrides nx)")
        p.add_argument("--ny", type=int, help="elements along y (overrides ny)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any key")
    return parser


def parse_cli(argv=None):
    """Parse arguments into ``(namespace, StudySpec or None)``; usage errors exit with status 2."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "weights":
        return args, None
    try:
        values = load_config(args.config)
        overrides = {}
        for item in args.set:
            if "=" not in item:
                parser.error(f"--set expects KEY=VALUE, got {item!r}")
            key, value = item.split("=", 1)
            overrides[key.strip()] = value.strip()
        for key in _FLAG_KEYS:
            value = getattr(args, key)
            if value is not None:
                overrides[key] = value
        spec = build_spec(args.command, values, overrides)
    except InvalidArgumentError as exc:
        parser.error(str(exc))
    return args, spec


def main(argv=None):
    args, spec = parse_cli(argv)
    if args.command == "weights":
        try:
            rows = weights_rows(args.M, args.P, args.t_left, args.t_right)
        except InvalidArgumentError as exc:
            print(f"mrsdc weights: error: {exc}", file=sys.stderr)
            return 2
        sys.stdout.write(csv_text(("family", "m", "p", "j", "value"), rows))
        return 0
    try:
        report = STUDIES[args.command](spec)
    except (InvalidArgumentError, StepError) as exc:
        print(f"mrsdc {args.command}: error: {exc}", file=sys.stderr)
        return 1
    files = write_report(report, spec)
    for path in files:
        print(path)
    if args.command == "simulate" and report.manifest.get("status") != "ok":
        print(f"mrsdc simulate: {report.manifest['status']}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
