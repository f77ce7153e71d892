"""Command-line interface: ``miri synth | mask | impute | eval | repro-toy``.

Exit status: 0 on success, 1 on runtime or numerical failure, 2 on
configuration or usage errors. Failures print a single line
``error: kind=<ExceptionName> message=<text>`` on stderr.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import List, Optional, Sequence

import numpy as np

from .data import atomic_write_text, load_csv, load_mask_csv, write_csv, write_mask_csv, write_matrix_csv
from .errors import ConfigError, MaskSpecError, MiriError
from .iterations import MiriConfig, run_miri
from .masking import MaskSpec, apply_mask
from .metrics import evaluate
from .numeric import Rng
from .toy import MixtureSpec, provenance, run_toy_seed, sample_mixture, summarize

THREADS_ENV = "MIRI_THREADS"


class UsageError(ConfigError):
    pass


# ---------------------------------------------------------------- config file


def _coerce(field: dataclasses.Field, raw: str, section: str):
    name, typ = field.name, str(field.type)
    try:
        if "Tuple" in typ:
            return tuple(int(v) for v in raw.replace(" ", "").split(",") if v)
        if typ == "bool":
            return configparser.ConfigParser.BOOLEAN_STATES[raw.strip().lower()]
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
        return raw.strip()
    except (ValueError, KeyError):
        raise ConfigError(f"[{section}] {name}: cannot parse {raw!r} as {typ}") from None


def _section_kwargs(parser: configparser.ConfigParser, section: str, cls) -> dict:
    if not parser.has_section(section):
        return {}
    known = {f.name: f for f in dataclasses.fields(cls)}
    out = {}
    for key, raw in parser.items(section):
        if key not in known:
            raise ConfigError(f"[{section}] unknown key {key!r}; expected one of {sorted(known)}")
        out[key] = _coerce(known[key], raw, section)
    return out


def load_config(path: Optional[str]):
    """Read an INI file with optional ``[miri]`` and ``[mask]`` sections whose
    keys are the field names of ``MiriConfig`` and ``MaskSpec``."""
    parser = configparser.ConfigParser()
    if path is not None:
        if not os.path.isfile(path):
            raise UsageError(f"config file not found: {path}")
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}".replace("\n", " ")) from None
        extra = set(parser.sections()) - {"miri", "mask"}
        if extra:
            raise ConfigError(f"{path}: unknown section(s) {sorted(extra)}")
    return _section_kwargs(parser, "miri", MiriConfig), _section_kwargs(parser, "mask", MaskSpec)


def _require_file(path: str, what: str) -> str:
    if not os.path.isfile(path):
        raise UsageError(f"{what} not found: {path}")
    return path


def _floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"cannot parse number list {text!r}") from None


def _ints(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"cannot parse integer list {text!r}") from None


# ---------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    means = [_floats(part) for part in args.means.split(";") if part.strip()]
    spec = MixtureSpec(args.n, _floats(args.weights), means, _floats(args.stds))
    x = sample_mixture(spec, Rng(args.seed))
    names = [f"x{j + 1}" for j in range(x.shape[1])]
    write_matrix_csv(args.out, x, names, comment=provenance("synth", spec.to_dict(), args.seed))
    return 0


def cmd_mask(args) -> int:
    _, mask_kw = load_config(args.config)
    for key in ("mechanism", "rate", "cond_fraction", "seed"):
        val = getattr(args, key)
        if val is not None:
            mask_kw[key] = val
    spec = MaskSpec(**mask_kw)
    ds_true = load_csv(_require_file(args.data, "data file"))
    if ds_true.n_missing:
        raise MaskSpecError(f"{args.data}: input to masking must be fully observed")
    mask = spec.generate(ds_true.raw)
    head = provenance("mask", dataclasses.asdict(spec), spec.seed)
    observed = apply_mask(ds_true.raw, mask, ds_true.feature_names)
    write_mask_csv(args.out_mask, mask, ds_true.feature_names, comment=head)
    write_csv(args.out_observed, observed, comment=head)
    return 0


def cmd_impute(args) -> int:
    miri_kw, _ = load_config(args.config)
    if args.seed is not None:
        miri_kw["seed"] = args.seed
    cfg = MiriConfig(**miri_kw)
    ds = load_csv(_require_file(args.observed, "observed data file"))
    truth = None
    if args.truth:
        truth_ds = load_csv(_require_file(args.truth, "ground-truth file"))
        if truth_ds.n_missing:
            raise ConfigError(f"{args.truth}: ground truth has missing cells")
        truth = truth_ds.raw
    state, trace = run_miri(ds, cfg, truth)
    head = provenance("impute", cfg.to_dict(), cfg.seed)
    write_matrix_csv(args.out, state.x, ds.feature_names, comment=head)
    if args.trace:
        atomic_write_text(args.trace, f"# {head}\n" + trace.to_csv())
    if truth is not None:
        text = evaluate(state.x, truth, ds.mask, cfg.mi_bins).to_text()
        if args.metrics:
            atomic_write_text(args.metrics, f"# {head}\n" + text)
        sys.stdout.write(text)
    return 0


def cmd_eval(args) -> int:
    imputed = load_csv(_require_file(args.imputed, "imputed file"))
    truth = load_csv(_require_file(args.truth, "ground-truth file"))
    mask = load_mask_csv(_require_file(args.mask, "mask file"))
    if imputed.n_missing or truth.n_missing:
        raise ConfigError("imputed and ground-truth files must not contain missing cells")
    sys.stdout.write(evaluate(imputed.raw, truth.raw, mask, args.bins).to_text())
    return 0


def _toy_worker(job):
    seed, cfg, out_dir = job
    res = run_toy_seed(seed, cfg, out_dir)
    return res["report"]


def cmd_repro_toy(args) -> int:
    miri_kw, _ = load_config(args.config)
    cfg = MiriConfig(**miri_kw)
    seeds = _ints(args.seeds) if args.seeds else list(range(args.n_seeds))
    if not seeds:
        raise UsageError("no seeds given")
    jobs = [(s, cfg, os.path.join(args.out, f"seed_{s}") if args.out else None) for s in seeds]
    threads = int(os.environ.get(THREADS_ENV, "1") or 1)
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(_toy_worker, jobs))
    else:
        reports = [_toy_worker(j) for j in jobs]
    table = summarize(reports)
    if args.out:
        atomic_write_text(os.path.join(args.out, "summary.txt"),
                          f"# {provenance('repro-toy', cfg.to_dict(), seeds[0])}\n" + table)
    sys.stdout.write(table)
    return 0


# ---------------------------------------------------------------- entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="miri", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="sample an isotropic Gaussian mixture to CSV")
    s.add_argument("--n", type=int, default=6000)
    s.add_argument("--weights", default="0.5,0.5")
    s.add_argument("--means", default="-2,-2;2,2", help="component means, ';'-separated")
    s.add_argument("--stds", default="0.5,0.5")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    m = sub.add_parser("mask", help="apply a synthetic missingness mechanism")
    m.add_argument("data")
    m.add_argument("--config")
    m.add_argument("--mechanism", choices=["MCAR", "MAR", "MNAR", "mcar", "mar", "mnar"])
    m.add_argument("--rate", type=float)
    m.add_argument("--cond-fraction", dest="cond_fraction", type=float)
    m.add_argument("--seed", type=int)
    m.add_argument("--out-mask", required=True)
    m.add_argument("--out-observed", required=True)
    m.set_defaults(func=cmd_mask)

    i = sub.add_parser("impute", help="impute the missing cells of a CSV")
    i.add_argument("observed")
    i.add_argument("--config")
    i.add_argument("--seed", type=int)
    i.add_argument("--out", required=True)
    i.add_argument("--trace")
    i.add_argument("--truth", help="fully observed ground truth, enables metrics")
    i.add_argument("--metrics", help="write the metrics record here (needs --truth)")
    i.set_defaults(func=cmd_impute)

    e = sub.add_parser("eval", help="score an imputation against ground truth")
    e.add_argument("imputed")
    e.add_argument("truth")
    e.add_argument("mask")
    e.add_argument("--bins", type=int, default=8)
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("repro-toy", help="run the two-cluster toy benchmark over several seeds")
    r.add_argument("--config")
    r.add_argument("--seeds", help="comma-separated seeds (default 0..n-seeds-1)")
    r.add_argument("--n-seeds", type=int, default=10)
    r.add_argument("--out", help="directory for per-seed artifacts and summary.txt")
    r.set_defaults(func=cmd_repro_toy)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except (ConfigError, MaskSpecError) as exc:
        code = 2
        err = exc
    except (MiriError, OSError, FloatingPointError) as exc:
        code = 1
        err = exc
    msg = " ".join(str(err).split())
    print(f"error: kind={type(err).__name__} message={msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
