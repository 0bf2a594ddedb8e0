"""Command-line driver for the benchmark scenarios.

Usage::

    smoothfem run cook --methods bes-fem,mini --meshes 2,4,8 --out results
    smoothfem run cook-neohookean --kappa 1.95,100 --steps 5
    smoothfem check --out results

``run`` executes one scenario and prints a plain-text result table plus
one line per recorded check.  With ``--out DIR`` it also writes
``DIR/<scenario>.csv`` (a timestamp comment line is the only content
allowed to differ between reruns) and ``DIR/<scenario>.json`` (reports
plus the full summary, fully deterministic).  ``check`` runs the
operator property battery and the inf-sup sweep back to back.

Options may also be read from a flat ``key = value`` file through
``--config``; command-line flags override file values, which override
the scenario defaults.  :func:`config_to_text` writes the effective
settings back in that same format, so a run is reproducible from its
saved configuration alone.

The process exits nonzero when any cell failed to solve or any recorded
check did not pass.
"""

import argparse
import dataclasses
import datetime
import math
import os
import sys

from .analysis import CSV_COLUMNS, reports_to_csv, reports_to_json
from .benchmarks import SCENARIOS, make_config, run_scenario


def _parse_names(text):
    return tuple(part.strip() for part in text.split(",") if part.strip())


def _parse_ints(text):
    return tuple(int(part) for part in _parse_names(text))


def _parse_floats(text):
    return tuple(float(part) for part in _parse_names(text))


FIELD_TYPES = {
    "methods": _parse_names,
    "meshes": _parse_ints,
    "young": float,
    "poisson": float,
    "load": float,
    "bubble": str,
    "kappa": _parse_floats,
    "mu": float,
    "steps": int,
    "distort": float,
    "seed": int,
    "pattern": str,
    "out": str,
}


def config_to_text(config):
    """Render a configuration as a flat ``key = value`` file."""
    lines = ["# benchmark scenario configuration"]
    for f in dataclasses.fields(config):
        value = getattr(config, f.name)
        if isinstance(value, tuple):
            value = ",".join(repr(v) if isinstance(v, float) else str(v)
                             for v in value)
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def parse_config_text(text):
    """Parse a ``key = value`` configuration file into typed overrides.

    Blank lines and ``#`` comments are skipped.  The returned dict maps
    field names to values ready for :func:`make_config`; a ``scenario``
    key is returned under that name as a plain string.
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', "
                             f"got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key == "scenario":
            values[key] = value
        elif key in FIELD_TYPES:
            values[key] = FIELD_TYPES[key](value)
        else:
            raise ValueError(f"line {lineno}: unknown configuration key "
                             f"{key!r}")
    return values


def _cell(value):
    if isinstance(value, float):
        return "-" if math.isnan(value) else f"{value:.6g}"
    return str(value)


def format_table(reports):
    """Render reports as an aligned plain-text table."""
    rows = [list(CSV_COLUMNS)]
    for r in reports:
        rows.append([r.method, r.mesh_id, _cell(r.h), str(r.n_elements),
                     _cell(r.err_u), _cell(r.err_p), _cell(r.err_E),
                     _cell(r.tip_uy)])
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    lines = []
    for row in rows:
        cells = [row[0].ljust(widths[0]), row[1].ljust(widths[1])]
        cells += [row[i].rjust(widths[i]) for i in range(2, len(row))]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines)


def format_checks(checks):
    """One line per recorded check, ending in PASS or FAIL."""
    lines = []
    for name, c in checks.items():
        verdict = "PASS" if c["passed"] else "FAIL"
        bound = f"{c['value']:.6g} {c['op']} {_cell(float(c['threshold']))}"
        if "tol" in c:
            bound += f" (tol {c['tol']:g})"
        lines.append(f"check {name}: {bound} [{c['source']}] {verdict}")
    return lines


def _report_scenario(config, reports, summary, stream):
    """Print the table, check lines and failures; return overall success."""
    print(f"scenario {config.scenario}", file=stream)
    print(format_table(reports), file=stream)
    checks = summary.get("checks", {})
    for line in format_checks(checks):
        print(line, file=stream)
    failures = summary.get("failures", [])
    details = {f"{r.method}/{r.mesh_id}": r.extra.get("error", "")
               for r in reports if r.extra.get("status") == "failed"}
    for cell in failures:
        print(f"failed cell {cell}: {details.get(cell, '')}", file=stream)
    n_bad = sum(1 for c in checks.values() if not c["passed"])
    print(f"{len(reports)} cells, {len(failures)} failed; "
          f"{len(checks)} checks, {n_bad} failed", file=stream)
    return not failures and n_bad == 0


def _write_outputs(config, reports, summary):
    os.makedirs(config.out, exist_ok=True)
    stamp = datetime.datetime.now().isoformat(timespec="seconds")
    base = os.path.join(config.out, config.scenario)
    with open(base + ".csv", "w", encoding="utf-8") as fh:
        fh.write(reports_to_csv(reports, timestamp=stamp))
    with open(base + ".json", "w", encoding="utf-8") as fh:
        fh.write(reports_to_json(reports, summary=summary))
    return base


def _execute(config, stream):
    reports, summary = run_scenario(config)
    ok = _report_scenario(config, reports, summary, stream)
    if config.out:
        base = _write_outputs(config, reports, summary)
        print(f"wrote {base}.csv and {base}.json", file=stream)
    return ok


def _collect_overrides(args):
    overrides = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            values = parse_config_text(fh.read())
        values.pop("scenario", None)
        overrides.update(values)
    for name in FIELD_TYPES:
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return overrides


def _cmd_run(args, stream):
    config = make_config(args.scenario, **_collect_overrides(args))
    return 0 if _execute(config, stream) else 1


def _cmd_check(args, stream):
    ok = True
    for scenario in ("lemma-checks", "infsup"):
        config = make_config(scenario, out=args.out or "")
        ok = _execute(config, stream) and ok
    return 0 if ok else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="smoothfem",
        description="Benchmark driver for smoothed and mixed simplicial "
                    "finite elements in nearly incompressible elasticity.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser(
        "run", help="execute one benchmark scenario",
        description="Execute one benchmark scenario and report per-cell "
                    "results plus pass/fail checks.")
    run.add_argument("scenario", choices=SCENARIOS)
    run.add_argument("--methods", type=_parse_names, default=None,
                     metavar="A,B,...", help="comma-separated method names")
    run.add_argument("--meshes", type=_parse_ints, default=None,
                     metavar="N,N,...", help="mesh resolutions")
    run.add_argument("--young", type=float, default=None,
                     help="Young's modulus")
    run.add_argument("--nu", dest="poisson", type=float, default=None,
                     help="Poisson ratio")
    run.add_argument("--load", type=float, default=None,
                     help="resultant edge force (Cook) or boundary pressure")
    run.add_argument("--bubble", choices=("power", "hat"), default=None,
                     help="bubble family for the enriched methods")
    run.add_argument("--kappa", type=_parse_floats, default=None,
                     metavar="K,K,...", help="bulk moduli (neo-Hookean)")
    run.add_argument("--mu", type=float, default=None,
                     help="shear modulus (neo-Hookean)")
    run.add_argument("--steps", type=int, default=None,
                     help="number of load steps (neo-Hookean)")
    run.add_argument("--distort", type=float, default=None,
                     help="interior node perturbation as a fraction of h")
    run.add_argument("--seed", type=int, default=None,
                     help="random seed for mesh distortion")
    run.add_argument("--pattern", choices=("uniform", "unstructured"),
                     default=None, help="3D block mesh pattern")
    run.add_argument("--config", default=None, metavar="FILE",
                     help="key = value file with defaults for the flags")
    run.add_argument("--out", default=None, metavar="DIR",
                     help="directory for the CSV and JSON reports")

    check = sub.add_parser(
        "check", help="run the operator property battery and inf-sup sweep",
        description="Run the operator property checks and the inf-sup "
                    "refinement sweep with their default settings.")
    check.add_argument("--out", default=None, metavar="DIR",
                       help="directory for the CSV and JSON reports")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    stream = sys.stdout
    try:
        if args.command == "run":
            return _cmd_run(args, stream)
        return _cmd_check(args, stream)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
