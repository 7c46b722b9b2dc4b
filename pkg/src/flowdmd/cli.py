"""Command-line entry point: ``flowdmd <command> [flags]``.

Commands: ingest, fit, predict, evaluate, spectrum, plot. Every flag can
also be given in a flat ``key = value`` config file (``--config``); flags on
the command line win over the file, which wins over built-in defaults.
"""

from __future__ import annotations

import argparse
import re
import sys
import warnings
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from . import __version__, dmd, ingest, plotting
from .errors import ArgumentError, CoverageError, FlowDmdError, MappingError
from .evaluation import evaluate_model, parse_range, write_pair_series
from .ingest import ColumnMap, PlaceIndex, SnapshotMatrix

_EPOCH = date(1970, 1, 5)


def diag(msg: str) -> None:
    print(msg, file=sys.stderr)


# --- config ----------------------------------------------------------------


def read_config(path) -> dict:
    """Parse a flat ``key = value`` (or ``key: value``) file; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = re.match(r"^([A-Za-z][\w-]*)\s*[=:]\s*(.*)$", line)
        if not m:
            raise ArgumentError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        out[m.group(1).replace("-", "_")] = m.group(2).strip()
    return out


def _as_list(value) -> list[str]:
    if value is None:
        return []
    items = [value] if isinstance(value, str) else list(value)
    out = []
    for item in items:
        out.extend(tok for tok in re.split(r"[,\s]+", str(item)) if tok)
    return out


def _ranks(value) -> list[int]:
    try:
        ranks = [int(tok) for tok in _as_list(value)]
    except ValueError:
        raise ArgumentError(f"--rank expects integers, got {value!r}") from None
    if not ranks or any(r < 1 for r in ranks):
        raise ArgumentError("--rank needs one or more positive integers")
    return ranks


def _pairs(value) -> list[tuple[str, str]]:
    pairs = []
    for tok in _as_list(value):
        o, sep, d = tok.partition(":")
        if not sep or not o or not d:
            raise ArgumentError(f"--pair expects origin:dest, got {tok!r}")
        pairs.append((o, d))
    return pairs


def _float(value, name) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ArgumentError(f"--{name} expects a number, got {value!r}") from None


def resolve_weeks(text, snap: SnapshotMatrix) -> tuple[int, int]:
    """Resolve ``A:B`` given as 1-based week indices or ISO start dates."""
    if text is None:
        return 1, snap.m
    a, sep, b = str(text).partition(":")
    if re.fullmatch(r"\d+", a) and (not sep or re.fullmatch(r"\d+", b)):
        return parse_range(text)
    try:
        lo = snap.week_position(date.fromisoformat(a)) + 1
        hi = snap.week_position(date.fromisoformat(b)) + 1 if sep else lo
    except ValueError:
        raise ArgumentError(f"bad week range {text!r}") from None
    if hi < lo:
        raise ArgumentError(f"empty week range {text!r}")
    return lo, hi


def _column_map(args) -> ColumnMap:
    delim = args.delimiter
    if delim in ("\\t", "tab"):
        delim = "\t"
    return ColumnMap(
        origin=args.origin_col, dest=args.dest_col, date=args.date_col, flow=args.flow_col,
        pop=args.pop_col or None, devices=args.devices_col or None, delimiter=delim,
    )


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _single_input(args) -> Path:
    inputs = _as_list(args.input)
    if len(inputs) != 1:
        raise ArgumentError(f"{args.command} takes exactly one --input snapshot file")
    return Path(inputs[0])


def _safe(token: str) -> str:
    return re.sub(r"[^\w.-]+", "_", token)


# --- commands --------------------------------------------------------------


def cmd_ingest(args) -> int:
    inputs = _as_list(args.input)
    if not inputs:
        raise ArgumentError("ingest needs at least one --input")
    files = ingest.discover_inputs(inputs)
    if not files:
        raise ArgumentError(f"no CSV files found under {inputs}")
    cmap = _column_map(args)
    records = []
    for path in files:
        try:
            records.extend(ingest.parse_flow_csv(path, cmap))
        except FlowDmdError as exc:
            exc.args = (f"{path}: {exc}",)
            raise
    if not records:
        raise ArgumentError(f"inputs {inputs} contain no data rows")
    snap = ingest.snapshots_from_records(records, use_pop_flow=args.flow_kind == "pop")

    out = _out_dir(args)
    ingest.write_snapshots(snap, out / "snapshots.txt", meta={"flow": args.flow_kind})
    with open(out / "summary.csv", "w", encoding="utf-8") as fh:
        fh.write(f"# k={snap.k} m={snap.m}\nweek_index,week,total_flow\n")
        for t in range(snap.m):
            fh.write(f"{t + 1},{snap.week_labels[t].isoformat()},{float(snap.data[:, t].sum())!r}\n")
    if args.export_records:
        ingest.write_flow_csv(records, out / "records.csv", cmap)
    print(f"k={snap.k} m={snap.m} first_week={snap.week_labels[0]} "
          f"last_week={snap.week_labels[-1]} files={len(files)} records={len(records)}")
    return 0


def _fit_one(train: SnapshotMatrix, rank: int, dt: float):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            model = dmd.fit(train, rank, dt)
        except FlowDmdError as exc:
            exc.args = (f"rank {rank}: {exc}",)
            raise
    for w in caught:
        diag(f"warning: rank {rank}: {w.message}")
    return model


def cmd_fit(args) -> int:
    snap = ingest.read_snapshots(_single_input(args))
    lo, hi = resolve_weeks(args.train_weeks, snap)
    if hi > snap.m:
        raise CoverageError(f"training weeks {lo}:{hi} exceed the {snap.m} available")
    train = snap.select(lo - 1, hi)
    dt = _float(args.dt, "dt")
    out = _out_dir(args)
    for rank in _ranks(args.rank):
        model = _fit_one(train, rank, dt)
        path = out / f"model_r{rank}.fdmd"
        dmd.save_model(model, path)
        print(f"rank={rank} retained={model.r} svd_rank={model.svd_rank} "
              f"dropped={model.dropped_modes} spectral_radius={model.spectral_radius!r} "
              f"train_weeks={lo}:{hi} file={path}")
    return 0


def _model_places(model: dmd.DmdModel) -> PlaceIndex:
    if model.places:
        return PlaceIndex(model.places)
    k = int(round(np.sqrt(model.n)))
    if k * k != model.n:
        raise ArgumentError(f"model state size {model.n} is not a square k*k")
    return PlaceIndex(tuple(str(i) for i in range(1, k + 1)))


def forecast_labels(model: dmd.DmdModel, count: int) -> list[date]:
    start = model.t0_label or _EPOCH
    return [start + timedelta(days=7 * model.dt * j) for j in range(count)]


def cmd_predict(args) -> int:
    models = _as_list(args.model)
    if not models:
        raise ArgumentError("predict needs --model")
    horizon = int(_float(args.horizon, "horizon"))
    if horizon < 1:
        raise ArgumentError("--horizon must be >= 1")
    pairs = _pairs(args.pair)
    out = _out_dir(args)
    for mpath in map(Path, models):
        model = dmd.load_model(mpath)
        index = _model_places(model)
        values = dmd.reconstruct(model, horizon)
        labels = forecast_labels(model, horizon)
        fc = SnapshotMatrix(values, labels, index)
        meta = {"kind": "forecast", "rank": model.requested_rank, "retained": model.r,
                "dt": repr(model.dt), "model": mpath.name}
        fpath = out / f"{mpath.stem}_forecast.txt"
        ingest.write_snapshots(fc, fpath, meta=meta)
        if pairs:
            series = {f"{o}:{d}": fc.pair_series(o, d) for o, d in pairs}
            write_pair_series(out / f"{mpath.stem}_pairs.csv", labels, series,
                              times=np.arange(horizon) * model.dt)
        print(f"model={mpath.name} horizon={horizon} file={fpath}")
    return 0


def cmd_evaluate(args) -> int:
    snap = ingest.read_snapshots(_single_input(args))
    if args.test_weeks is None:
        raise ArgumentError("evaluate needs --test-weeks")
    t_lo, t_hi = resolve_weeks(args.test_weeks, snap) if _is_date_range(args.test_weeks) \
        else parse_range(args.test_weeks)
    test = range(t_lo, t_hi + 1)
    out = _out_dir(args)

    jobs = []
    models = _as_list(args.model)
    if models:
        for mpath in map(Path, models):
            jobs.append((mpath.stem, dmd.load_model(mpath), None))
    else:
        lo, hi = resolve_weeks(args.train_weeks, snap)
        if hi >= t_lo:
            raise ArgumentError("test weeks must come after the training weeks")
        train = snap.select(lo - 1, hi)
        for rank in _ranks(args.rank):
            jobs.append((f"model_r{rank}", _fit_one(train, rank, _float(args.dt, "dt")), lo))

    for stem, model, train_start in jobs:
        missing = [j for j in test if j > snap.m]
        if missing:
            last = snap.week_labels[-1]
            absent = [last + timedelta(weeks=j - snap.m) for j in missing]
            raise CoverageError(
                f"test weeks absent from the truth data: "
                f"{', '.join(f'{j} ({d})' for j, d in zip(missing, absent))}", absent)
        report = evaluate_model(model, snap, test, train_start)
        path = out / f"{stem}_errors.csv"
        report.write_csv(path)
        print(f"# {stem} (rank {model.requested_rank}) -> {path}")
        print(report.format_table())
    return 0


def _is_date_range(text) -> bool:
    return bool(re.match(r"^\d{4}-\d{2}-\d{2}", str(text)))


def cmd_spectrum(args) -> int:
    snap = ingest.read_snapshots(_single_input(args))
    lo, hi = resolve_weeks(args.train_weeks, snap)
    if hi > snap.m:
        raise CoverageError(f"weeks {lo}:{hi} exceed the {snap.m} available")
    report = dmd.spectrum(snap.select(lo - 1, hi))
    out = _out_dir(args)
    with open(out / "spectrum.csv", "w", encoding="utf-8") as fh:
        fh.write("index,singular_value\n")
        for i, s in enumerate(report.values, 1):
            fh.write(f"{i},{float(s)!r}\n")
    fig = plotting.spectrum_figure(
        report.values, title=f"Singular values of X, weeks {lo}-{hi}")
    plotting.save_svg(fig, out / "spectrum.svg")
    print(f"weeks={lo}:{hi} count={report.values.size} sigma_1={float(report.values[0])!r} "
          f"file={out / 'spectrum.csv'}")
    return 0


def cmd_plot(args) -> int:
    truth = ingest.read_snapshots(_single_input(args))
    pairs = _pairs(args.pair)
    if not pairs:
        raise ArgumentError("plot needs --pair origin:dest")
    forecasts = []
    for fpath in map(Path, _as_list(args.forecast)):
        fc, meta = ingest.read_snapshots(fpath, with_meta=True)
        if fc.n != truth.n:
            raise ArgumentError(f"{fpath}: state size {fc.n} does not match truth {truth.n}")
        label = f"r={meta['rank']}" if "rank" in meta else fpath.stem
        forecasts.append((label, fc))

    axis = sorted(set(truth.week_labels).union(*(fc.week_labels for _, fc in forecasts)))
    pos = {d: i for i, d in enumerate(axis)}
    weeks = np.arange(1, len(axis) + 1)

    def aligned(snap, o, d):
        col = np.full(len(axis), np.nan)
        col[[pos[w] for w in snap.week_labels]] = snap.pair_series(o, d)
        return col

    out = _out_dir(args)
    for o, d in pairs:
        try:
            series = {label: aligned(fc, o, d) for label, fc in forecasts}
            fig = plotting.pair_figure(weeks, aligned(truth, o, d), series,
                                       title=f"Flow between {o} and {d}")
        except MappingError as exc:
            exc.args = (f"pair {o}:{d}: {exc}",)
            raise
        path = out / f"pair_{_safe(o)}_{_safe(d)}.svg"
        plotting.save_svg(fig, path)
        print(f"pair={o}:{d} curves={len(forecasts)} file={path}")
    return 0


COMMANDS = {
    "ingest": (cmd_ingest, "parse flow CSVs into a snapshot file"),
    "fit": (cmd_fit, "fit one DMD model per rank on the training weeks"),
    "predict": (cmd_predict, "forecast from saved models"),
    "evaluate": (cmd_evaluate, "relative L2/Linf errors on test weeks"),
    "spectrum": (cmd_spectrum, "singular values of the training data"),
    "plot": (cmd_plot, "truth vs forecast curves for O-D pairs"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value file with defaults for any flag")
    common.add_argument("--input", nargs="+", help="input files or directories")
    common.add_argument("--out", default=".", help="output directory (default: .)")
    common.add_argument("--train-weeks", help="A:B, 1-based inclusive (indices or ISO dates)")
    common.add_argument("--test-weeks", help="A:B, 1-based inclusive")
    common.add_argument("--rank", nargs="+", help="target rank(s), e.g. 5,10,15")
    common.add_argument("--dt", default="1", help="time step in weeks (default 1)")
    common.add_argument("--pair", nargs="+", help="origin:dest place ids (#n = n-th place)")
    common.add_argument("--model", nargs="+", help="model file(s)")
    common.add_argument("--forecast", nargs="+", help="forecast file(s) from predict")
    common.add_argument("--horizon", default="1", help="number of forecast weeks")

    cols = common.add_argument_group("column mapping")
    defaults = ColumnMap()
    cols.add_argument("--origin-col", default=defaults.origin)
    cols.add_argument("--dest-col", default=defaults.dest)
    cols.add_argument("--date-col", default=defaults.date)
    cols.add_argument("--flow-col", default=defaults.flow)
    cols.add_argument("--pop-col", default=None)
    cols.add_argument("--devices-col", default=None)
    cols.add_argument("--delimiter", default=",")
    cols.add_argument("--flow-kind", choices=("visitor", "pop"), default="visitor",
                      help="pop rescales visitor flow by population per device")
    cols.add_argument("--export-records", action="store_true",
                      help="ingest: also write the parsed records as records.csv")

    parser = argparse.ArgumentParser(prog="flowdmd", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    parser.subcommands = {
        name: sub.add_parser(name, parents=[common], help=help_)
        for name, (_, help_) in COMMANDS.items()
    }
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        cfg = read_config(args.config)
        sub = parser.subcommands[args.command]
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(cfg) - known)
        if unknown:
            raise ArgumentError(f"{args.config}: unknown key(s) {unknown}")
        for key in ("export_records",):
            if key in cfg:
                cfg[key] = cfg[key].lower() in ("1", "true", "yes", "on")
        sub.set_defaults(**cfg)
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        return COMMANDS[args.command][0](args)
    except (FlowDmdError, OSError) as exc:
        diag(f"flowdmd: error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
