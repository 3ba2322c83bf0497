"""Command line entry point.

Subcommands::

    qpergodic verify {harmonic,dissipative,integrator}
    qpergodic sweep CONFIG [--workers N] [--out DIR] [--render] [--figures]
    qpergodic partition FIELD [FIELD ...] --eps SPEC --out DIR
    qpergodic render IN OUT.ppm [--figure OUT.png]
    qpergodic phases CONFIG --k LIST [--out DIR]
    qpergodic presets

Exit status: 0 success, 1 validation failure, 2 numeric failure, 3 I/O error.
``CONFIG`` is a JSON file or the name of a bundled preset.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .config import load_config, preset_names
from .errors import FieldFileError, QPError
from .fieldfile import (
    atomic_write,
    load_field,
    load_partition,
    save_field,
    save_partition,
    sniff,
)
from .partition import (
    BOUNDED,
    CELL_STATES,
    NONCONVERGENT,
    boundedness_report,
    compare_phases,
    joint_level_sets,
    sweep,
)
from .verify import SUITES

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERIC = 2
EXIT_IO = 3


class _Fail(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _progress(label, quiet):
    if quiet:
        return None

    def report(done, total):
        print(f"{label}: rows {done}/{total}", file=sys.stderr, flush=True)

    return report


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_text(path, text):
    atomic_write(path, text.encode("utf-8"))


# ---------------------------------------------------------------------------
# verify


def cmd_verify(args):
    checks = SUITES[args.suite]()
    for c in checks:
        print(c.line())
    failed = sum(not c.passed for c in checks)
    print(f"{args.suite}: {len(checks) - failed}/{len(checks)} checks passed")
    return EXIT_NUMERIC if failed else EXIT_OK


# ---------------------------------------------------------------------------
# sweep


def field_path(out_dir, name, obs_id):
    return Path(out_dir) / f"{name}.{obs_id}.qpf"


def cmd_sweep(args):
    cfg = load_config(args.config)
    model, domain, observables, integ, escape = cfg.build()
    out_dir = Path(args.out or cfg.output.directory)
    echo = cfg.to_dict()

    start = time.perf_counter()
    fields = sweep(model, domain, observables, integ, escape, workers=args.workers,
                   progress=_progress(cfg.name, args.quiet))
    elapsed = time.perf_counter() - start

    written = []
    for f in fields:
        path = field_path(out_dir, cfg.name, f.observable_id)
        save_field(f, path, echo)
        entry = {"observable": f.observable_id, "path": path.name, "sha256": _sha256(path),
                 "escaped_cells": int(f.escaped.sum()),
                 "nonconvergent_cells": f.metadata["convergence"]["nonconvergent_cells"]}
        if args.render or cfg.output.render:
            from .render import write_raster

            ppm = path.with_suffix(".ppm")
            write_raster(f, ppm, cfg.output.colormap, path.name)
            entry["raster"] = ppm.name
        if args.figures or cfg.output.figures:
            from .plotting import plot_field

            png = path.with_suffix(".png")
            plot_field(f, png, cfg.output.colormap, model.state_names,
                       f"{cfg.name}: {f.observable_id}")
            entry["figure"] = png.name
        written.append(entry)
        print(f"wrote {path}")

    manifest = {
        "tool": "qpergodic",
        "version": __version__,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "runtime_seconds": round(elapsed, 3),
        "workers": args.workers,
        "config": echo,
        "domain": domain.describe(),
        "integrator": integ.describe(),
        "fields": written,
    }
    mpath = out_dir / f"{cfg.name}.manifest.json"
    _write_text(mpath, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"wrote {mpath}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# partition


def parse_eps(spec, n_fields):
    """Bin widths from ``auto``, a single number, or a comma list (one entry per field)."""
    items = [s.strip() for s in str(spec).split(",")]
    if len(items) == 1:
        items = items * n_fields
    if len(items) != n_fields:
        raise _Fail(EXIT_VALIDATION, f"--eps gives {len(items)} widths for {n_fields} fields")
    out = []
    for s in items:
        if s.lower() == "auto":
            out.append(None)
            continue
        try:
            v = float(s)
        except ValueError:
            raise _Fail(EXIT_VALIDATION, f"bad --eps entry {s!r}") from None
        if not (v > 0 and math.isfinite(v)):
            raise _Fail(EXIT_VALIDATION, f"bin width must be a positive finite number, got {s}")
        out.append(v)
    return out


def _fmt_label(label):
    return label if isinstance(label, str) else "(" + ", ".join(str(v) for v in label) + ")"


def report_text(report, part, sources):
    lines = [f"joint level sets of: {', '.join(b['observable'] for b in part.binning)}"]
    for b in part.binning:
        lines.append(f"  {b['observable']}: eps={b['eps']:.6g} origin={b['origin']:.6g}")
    lines.append(f"sources: {', '.join(sources)}")
    lines.append(f"grid: {part.shape[0]} x {part.shape[1]}")
    counts = {}
    for e in report.entries:
        counts[e.verdict] = counts.get(e.verdict, 0) + 1
    lines.append("verdicts: " + ", ".join(f"{k}={v}" for k, v in sorted(counts.items())))
    lines.append(f"bounded-slice cell fraction: {report.bounded_fraction():.4f}")
    lines.extend(report.notes)
    lines.append("")
    for e in report.entries:
        (i0, i1), (k0, k1) = e.bounding_box
        lines.append(f"label {_fmt_label(e.label)}: {e.verdict}, {e.count} cells, "
                     f"box [{i0:.6g}, {i1:.6g}] x [{k0:.6g}, {k1:.6g}]")
        if e.statement:
            lines.append(f"  {e.statement}")
    return "\n".join(lines) + "\n"


def report_json(report):
    return {
        "bounded_fraction": report.bounded_fraction(),
        "notes": report.notes,
        "labels": [
            {"label": e.label if isinstance(e.label, str) else list(e.label), "count": e.count,
             "verdict": e.verdict, "index_box": e.index_box, "bounding_box": e.bounding_box,
             "statement": e.statement}
            for e in report.entries
        ],
    }


def cmd_partition(args):
    fields = [load_field(p) for p in args.fields]
    eps = parse_eps(args.eps, len(fields))
    part = joint_level_sets(fields, eps)
    notes = []
    for path, f in zip(args.fields, fields):
        nc = int((f.states == NONCONVERGENT).sum())
        if nc:
            notes.append(f"note: {Path(path).name} has {nc} {CELL_STATES[NONCONVERGENT]} cells; their labels are provisional")
    report = boundedness_report(part, notes)
    out = Path(args.out)
    sources = [Path(p).name for p in args.fields]
    save_partition(part, out / "partition.json", sources)
    _write_text(out / "report.txt", report_text(report, part, sources))
    _write_text(out / "report.json", json.dumps(report_json(report), indent=2, sort_keys=True) + "\n")
    if args.render:
        from .render import write_raster

        write_raster(part, out / "partition.ppm", source="partition.json")
    n_bounded = len(report.by_verdict(BOUNDED))
    print(f"{len(report.entries)} labels, {n_bounded} bounded-slice; wrote {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# render


def cmd_render(args):
    from .render import write_raster

    kind = sniff(args.input)
    obj = load_field(args.input) if kind == "field" else load_partition(args.input)[0]
    legend = write_raster(obj, args.output, args.colormap, Path(args.input).name)
    print(f"wrote {args.output} and {legend}")
    if args.figure:
        if kind != "field":
            raise _Fail(EXIT_VALIDATION, "--figure is available for field files only")
        from .plotting import plot_field

        names = None
        if "config" in obj.metadata:
            from .config import parse_config

            names = parse_config(obj.metadata["config"]).build_model().state_names
        plot_field(obj, args.figure, args.colormap, names, f"{Path(args.input).name}")
        print(f"wrote {args.figure}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# phases


def parse_k_list(spec):
    try:
        ks = [int(s) for s in str(spec).split(",") if s.strip()]
    except ValueError:
        raise _Fail(EXIT_VALIDATION, f"--k must be a comma-separated list of integers, got {spec!r}") from None
    if not ks:
        raise _Fail(EXIT_VALIDATION, "--k list is empty")
    return ks


def phases_table(ks, comparison):
    cols = ["k"] + [f"theta0_{i + 1}" for i in range(len(comparison.phases[0]))]
    cols += ["bounded_fraction", "escaped_fraction", "labels"] + [f"overlap_k{k}" for k in ks]
    lines = ["\t".join(cols)]
    for a, (k, (ph, bf, ef, nl)) in enumerate(zip(ks, comparison.rows())):
        row = [str(k)] + [f"{t:.12g}" for t in ph] + [f"{bf:.6f}", f"{ef:.6f}", str(nl)]
        row += [f"{v:.6f}" for v in comparison.overlap[a]]
        lines.append("\t".join(row))
    return "\n".join(lines) + "\n"


def cmd_phases(args):
    ks = parse_k_list(args.k)
    cfg = load_config(args.config)
    model, domain, observables, integ, escape = cfg.build()
    obs = observables[0]
    if args.observable:
        match = [o for o in observables if o.id == args.observable]
        if not match:
            raise _Fail(EXIT_VALIDATION, f"observable {args.observable!r} not in configuration")
        obs = match[0]
    phases = [cfg.theta0(model, k) for k in ks]
    comparison = compare_phases(model, domain, obs, integ, phases, escape, workers=args.workers,
                                progress=_progress(cfg.name, args.quiet))
    out = Path(args.out or cfg.output.directory)
    table = out / f"{cfg.name}.phases.tsv"
    _write_text(table, phases_table(ks, comparison))
    print(f"wrote {table}")
    if not args.no_figure:
        from .plotting import plot_phase_summary

        png = out / f"{cfg.name}.phases.png"
        plot_phase_summary(comparison, ks, png)
        print(f"wrote {png}")
    bf = comparison.bounded_fraction
    if len(bf) > 1 and max(bf) > 0:
        print(f"bounded fraction spread (max-min)/max: {(max(bf) - min(bf)) / max(bf):.4f}")
    return EXIT_OK


def cmd_presets(args):
    for name in preset_names():
        print(name)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="qpergodic", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("verify", help="run closed-form and integrator self-checks")
    s.add_argument("suite", choices=sorted(SUITES))
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("sweep", help="compute time-average fields on a grid of initial conditions")
    s.add_argument("config", help="JSON configuration file or bundled preset name")
    s.add_argument("--workers", type=int, default=1, help="worker processes (result is independent of this)")
    s.add_argument("--out", help="output directory (overrides the configuration)")
    s.add_argument("--render", action="store_true", help="also write PPM rasters")
    s.add_argument("--figures", action="store_true", help="also write annotated PNG figures")
    s.add_argument("--quiet", action="store_true", help="suppress per-row progress")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("partition", help="joint level sets and boundedness report")
    s.add_argument("fields", nargs="+", help="field files on a common domain")
    s.add_argument("--eps", default="auto", help="bin width: 'auto' (range/32), a number, or a comma list")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--render", action="store_true", help="also write partition.ppm")
    s.set_defaults(func=cmd_partition)

    s = sub.add_parser("render", help="write a field or partition as a P6 raster")
    s.add_argument("input")
    s.add_argument("output")
    s.add_argument("--colormap", default="viridis")
    s.add_argument("--figure", help="also write an annotated PNG of a field")
    s.set_defaults(func=cmd_render)

    s = sub.add_parser("phases", help="compare boundedness across initial phases")
    s.add_argument("config")
    s.add_argument("--k", required=True, help="comma-separated phase indices, e.g. 0,2,4")
    s.add_argument("--observable", help="observable id (default: the first configured)")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", help="output directory (overrides the configuration)")
    s.add_argument("--no-figure", action="store_true", help="skip phases.png")
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=cmd_phases)

    s = sub.add_parser("presets", help="list bundled configurations")
    s.set_defaults(func=cmd_presets)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _Fail as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (FieldFileError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (FloatingPointError, ArithmeticError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (QPError, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
