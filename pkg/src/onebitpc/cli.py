"""Command-line entry point: ``onebitpc <experiment> [flags]``.

Resolution order for every setting: built-in default, experiment default,
``--config`` file, explicit flags. The resolved configuration is echoed as
``# key=value`` lines at the top of every output file; passing that file back
through ``--config`` reproduces it.
"""

from __future__ import annotations

import argparse
import logging
import secrets
import sys
from dataclasses import asdict
from pathlib import Path

from . import __version__, reftables
from .experiments import EXPERIMENT_DEFAULTS, EXPERIMENTS, ExperimentConfig, ExperimentResult

OUTPUT_MAGIC = "# onebitpc-output"
OUTPUT_FORMAT = 1

log = logging.getLogger("onebitpc")


class UsageError(Exception):
    pass


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


_TABLE_KEYS = {"M": "m", "L": "levels"}


def read_config(path) -> dict[str, str]:
    """Parse a ``key=value`` config file, or the header of a previous output/table file."""
    text = Path(path).read_text().splitlines()
    known = ExperimentConfig.field_types()
    is_table = bool(text) and text[0].startswith(reftables.MAGIC)
    echoed = is_table or (bool(text) and text[0].startswith(OUTPUT_MAGIC))
    out = {}
    for i, ln in enumerate(text):
        s = ln.strip()
        if echoed:
            if not s.startswith("#"):
                if is_table:
                    # the grid lives in the first column of the table body
                    out["grid"] = ",".join(r.split(",", 1)[0] for r in text[i + 1:] if r.strip())
                break
            s = s[1:].strip()
            if "=" not in s:
                continue
        elif not s or s.startswith("#"):
            continue
        key, sep, val = s.partition("=")
        key = key.strip().replace("-", "_")
        if is_table:
            key = _TABLE_KEYS.get(key, key)
        if not sep:
            raise UsageError(f"{path}: expected key=value, got {ln!r}")
        if key not in known:
            if echoed:
                continue
            raise UsageError(f"{path}: unknown config key {key!r}")
        out[key] = val.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="onebitpc", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"onebitpc {__version__}")
    sub = ap.add_subparsers(dest="experiment", required=True)
    types = ExperimentConfig.field_types()
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key=value file (or a previous output file)")
        p.add_argument("-v", "--verbose", action="store_true")
        for key, typ in types.items():
            if key == "experiment":
                continue
            # defaults stay None so we can tell which flags were given
            p.add_argument("--" + key.replace("_", "-"), dest=key, type=typ, default=None)
    return ap


def resolve_config(experiment: str, file_values: dict, flag_values: dict) -> ExperimentConfig:
    types = ExperimentConfig.field_types()
    cfg = asdict(ExperimentConfig())
    cfg.update(EXPERIMENT_DEFAULTS[experiment])
    for src in (file_values, flag_values):
        for k, v in src.items():
            if v is None or k == "experiment":
                continue
            try:
                cfg[k] = types[k](v)
            except ValueError as exc:
                raise UsageError(f"bad value for {k}: {v!r}") from exc
    cfg["experiment"] = experiment
    if "seed" not in file_values and flag_values.get("seed") is None:
        cfg["seed"] = secrets.randbits(63)
    resolved = ExperimentConfig(**cfg)
    try:
        resolved.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return resolved


def write_result(cfg: ExperimentConfig, result: ExperimentResult, path) -> None:
    head = [f"{OUTPUT_MAGIC} experiment={cfg.experiment}", f"# format={OUTPUT_FORMAT}"]
    # the output path is left out so reruns to other paths stay byte-identical
    head += [f"# {k}={_fmt(v)}" for k, v in asdict(cfg).items() if k not in ("experiment", "out")]
    head += [f"# info.{k}={_fmt(v)}" for k, v in result.info.items()]
    lines = head + [",".join(result.columns)]
    lines += [",".join(_fmt(v) for v in row) for row in result.rows]
    Path(path).write_text("\n".join(lines) + "\n")


def run(cfg: ExperimentConfig) -> None:
    if cfg.experiment == "gen-tables":
        reftables.save(EXPERIMENTS["gen-tables"](cfg), cfg.out)
    else:
        write_result(cfg, EXPERIMENTS[cfg.experiment](cfg), cfg.out)


def main_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    flags = {k: v for k, v in vars(args).items() if k not in ("config", "verbose", "experiment")}
    try:
        file_values = read_config(args.config) if args.config else {}
        cfg = resolve_config(args.experiment, file_values, flags)
        if not cfg.out:
            raise UsageError("--out is required")
        if cfg.experiment in ("dpc-run", "single-shot-eval") and not cfg.table:
            raise UsageError(f"{cfg.experiment} requires --table")
        if cfg.experiment == "dpc-run" and cfg.levels != 3:
            raise UsageError("dpc-run uses a three-level ladder (--levels 3)")
        run(cfg)
    except UsageError as exc:
        print(f"onebitpc: usage error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"onebitpc: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(main_cli())


if __name__ == "__main__":
    main()
