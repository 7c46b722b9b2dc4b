"""Train/test splits, forecast error metrics and planted linear test systems."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Sequence

import numpy as np

from . import dmd
from .errors import (
    ArgumentError,
    CoverageError,
    DegenerateExcitationWarning,
    DivisionGuardError,
    MappingError,
    ShapeError,
)
from .ingest import SnapshotMatrix


def _pair(truth, pred):
    truth = np.asarray(truth, dtype=float).ravel()
    pred = np.asarray(pred, dtype=float).ravel()
    if truth.shape != pred.shape:
        raise ShapeError(f"length mismatch: truth {truth.size}, prediction {pred.size}")
    return truth, pred


def _norm2(v):
    # rescale first so tiny nonzero entries cannot underflow to a zero norm
    top = np.max(np.abs(v)) if v.size else 0.0
    if top == 0 or not np.isfinite(top):
        return top
    return top * np.linalg.norm(v / top)


def relative_l2_error(truth, pred) -> float:
    truth, pred = _pair(truth, pred)
    denom = _norm2(truth)
    if denom == 0:
        raise DivisionGuardError("truth vector has zero 2-norm")
    return float(_norm2(truth - pred) / denom)


def relative_linf_error(truth, pred) -> float:
    truth, pred = _pair(truth, pred)
    denom = np.max(np.abs(truth)) if truth.size else 0.0
    if denom == 0:
        raise DivisionGuardError("truth vector is identically zero")
    return float(np.max(np.abs(truth - pred)) / denom)


@dataclass(frozen=True)
class SplitSpec:
    """Train and test week ranges, 1-based and inclusive."""

    train: tuple[int, int]
    test: tuple[int, int]

    def __post_init__(self):
        (a, b), (c, d) = self.train, self.test
        if not (1 <= a <= b and 1 <= c <= d):
            raise ArgumentError(f"week ranges must be non-empty and 1-based: {self}")
        if c <= b:
            raise ArgumentError(f"test weeks {c}:{d} must start after training weeks {a}:{b}")

    @classmethod
    def parse(cls, train: str, test: str) -> "SplitSpec":
        return cls(parse_range(train), parse_range(test))

    @property
    def train_slice(self) -> slice:
        return slice(self.train[0] - 1, self.train[1])

    @property
    def test_weeks(self) -> range:
        return range(self.test[0], self.test[1] + 1)


def parse_range(text: str) -> tuple[int, int]:
    """``"A:B"`` to ``(A, B)``; a bare ``"A"`` is the single week A."""
    a, sep, b = str(text).partition(":")
    try:
        lo = int(a)
        hi = int(b) if sep else lo
    except ValueError:
        raise ArgumentError(f"bad week range {text!r}, expected A:B") from None
    if not 1 <= lo <= hi:
        raise ArgumentError(f"bad week range {text!r}")
    return lo, hi


@dataclass(frozen=True)
class ErrorRow:
    week: date | str
    truth_norm: float
    pred_norm: float
    rel_l2: float
    rel_linf: float


@dataclass(frozen=True)
class ErrorReport:
    rows: tuple[ErrorRow, ...]
    rank: int = 0

    HEADER = ("week", "truth_l2_norm", "dmd_l2_norm", "rel_l2_error", "rel_linf_error")

    def write_csv(self, path, delimiter=","):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
            w.writerow(self.HEADER)
            for row in self.rows:
                label = row.week.isoformat() if isinstance(row.week, date) else row.week
                w.writerow([label] + [repr(float(v)) for v in
                                      (row.truth_norm, row.pred_norm, row.rel_l2, row.rel_linf)])

    @classmethod
    def read_csv(cls, path, delimiter=","):
        with open(path, encoding="utf-8", newline="") as fh:
            rd = csv.reader(fh, delimiter=delimiter)
            header = next(rd)
            if tuple(header) != cls.HEADER:
                raise ShapeError(f"{path}: unexpected header {header}")
            rows = []
            for rec in rd:
                try:
                    week = date.fromisoformat(rec[0])
                except ValueError:
                    week = rec[0]
                rows.append(ErrorRow(week, *map(float, rec[1:])))
        return cls(tuple(rows))

    def format_table(self) -> str:
        lines = ["{:<12} {:>12} {:>12} {:>10} {:>10}".format(
            "week", "|M_i|_2", "|M_dmd,i|_2", "rel L2", "rel Linf")]
        for r in self.rows:
            label = r.week.isoformat() if isinstance(r.week, date) else str(r.week)
            lines.append(f"{label:<12} {r.truth_norm:12.4e} {r.pred_norm:12.4e} "
                         f"{r.rel_l2:10.4f} {r.rel_linf:10.4f}")
        return "\n".join(lines)


def evaluate_model(model: dmd.DmdModel, snapshots: SnapshotMatrix, test_weeks: Sequence[int],
                   train_start: int | None = None) -> ErrorReport:
    """Score a fitted model against 1-based test week indices of ``snapshots``.

    Week j is forecast at ``t = (j - train_start) * dt``. When ``train_start``
    is omitted it is located from the model's first training week label.
    """
    if train_start is None:
        if model.t0_label is None:
            raise ArgumentError("model has no start label; pass train_start")
        try:
            train_start = snapshots.week_position(model.t0_label) + 1
        except MappingError:
            raise CoverageError(
                f"model start week {model.t0_label} is not in the truth data"
            ) from None
    test_weeks = list(test_weeks)
    missing = [j for j in test_weeks if not 1 <= j <= snapshots.m]
    if missing:
        raise CoverageError(
            f"test weeks {missing} are absent from the truth data (m={snapshots.m})", missing
        )
    if model.n != snapshots.n:
        raise ShapeError(f"model state size {model.n} != snapshot size {snapshots.n}")

    rows = []
    for j in test_weeks:
        truth = snapshots.data[:, j - 1]
        pred = dmd.predict(model, (j - train_start) * model.dt)
        rows.append(ErrorRow(
            week=snapshots.week_labels[j - 1],
            truth_norm=float(np.linalg.norm(truth)),
            pred_norm=float(np.linalg.norm(pred)),
            rel_l2=relative_l2_error(truth, pred),
            rel_linf=relative_linf_error(truth, pred),
        ))
    return ErrorReport(tuple(rows), model.requested_rank)


def evaluate_split(snapshots: SnapshotMatrix, split: SplitSpec, target_rank: int,
                   dt: float = 1.0) -> ErrorReport:
    """Fit on the training weeks only, then score every test week."""
    if split.train[1] > snapshots.m:
        raise CoverageError(f"training weeks {split.train} exceed m={snapshots.m}")
    train = snapshots.select(split.train_slice.start, split.train_slice.stop)
    model = dmd.fit(train, target_rank, dt)
    return evaluate_model(model, snapshots, split.test_weeks, split.train[0])


# --- planted linear systems ------------------------------------------------


def _real_blocks(spectrum, tol=1e-12):
    """Group a conjugate-closed spectrum into real eigenvalues and upper-half-plane pairs."""
    spectrum = [complex(z) for z in spectrum]
    reals = [z.real for z in spectrum if abs(z.imag) <= tol]
    upper = [z for z in spectrum if z.imag > tol]
    lower = [z for z in spectrum if z.imag < -tol]
    if len(upper) != len(lower):
        raise ArgumentError("planted spectrum is not closed under conjugation")
    unmatched = list(lower)
    for z in upper:
        hit = next((w for w in unmatched if abs(w - z.conjugate()) <= tol * max(1, abs(z))), None)
        if hit is None:
            raise ArgumentError(f"eigenvalue {z} has no conjugate partner")
        unmatched.remove(hit)
    return reals, upper


@dataclass(frozen=True, eq=False)
class PlantedSystem:
    """Linear map ``x -> B C B^+ x`` with a known spectrum.

    ``C`` is block diagonal: a 2 x 2 rotation-scaling block ``[[a, -c], [c, a]]``
    for each pair ``a +- ic`` (listed first), then 1 x 1 blocks for the real
    eigenvalues, so the generated data is exactly real.
    """

    n: int
    spectrum: tuple[complex, ...]
    basis: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        reals, pairs = _real_blocks(self.spectrum)
        q = len(reals) + 2 * len(pairs)
        basis = np.array(self.basis, dtype=float)
        if basis.shape != (self.n, q):
            raise ShapeError(f"basis must be {self.n} x {q}, got {basis.shape}")
        if np.linalg.matrix_rank(basis) < q:
            raise ArgumentError("planted basis is not of full column rank")
        basis.flags.writeable = False
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "spectrum", tuple(complex(z) for z in self.spectrum))

    @classmethod
    def random(cls, n: int, spectrum, seed: int = 0) -> "PlantedSystem":
        q = len(spectrum)
        rng = np.random.default_rng(seed)
        basis = rng.standard_normal((n, q))
        return cls(n, tuple(spectrum), basis, seed)

    @property
    def q(self) -> int:
        return len(self.spectrum)

    def block(self) -> np.ndarray:
        reals, pairs = _real_blocks(self.spectrum)
        c = np.zeros((self.q, self.q))
        for p, z in enumerate(pairs):
            i = 2 * p
            c[i:i + 2, i:i + 2] = [[z.real, -z.imag], [z.imag, z.real]]
        for p, lam in enumerate(reals):
            i = 2 * len(pairs) + p
            c[i, i] = lam
        return c

    def operator(self) -> np.ndarray:
        return self.basis @ self.block() @ np.linalg.pinv(self.basis)

    def excitation(self, x0) -> np.ndarray:
        """Magnitude of ``x0`` along each planted eigendirection (pairs first)."""
        z = np.linalg.pinv(self.basis) @ np.asarray(x0, dtype=float)
        _, pairs = _real_blocks(self.spectrum)
        npair = len(pairs)
        amp = [np.hypot(z[2 * p], z[2 * p + 1]) for p in range(npair)]
        amp += list(np.abs(z[2 * npair:]))
        return np.array(amp)

    def default_x0(self) -> np.ndarray:
        return self.basis @ np.ones(self.q)


def generate_planted(system: PlantedSystem, num_snapshots: int, x0=None) -> np.ndarray:
    """Iterate the planted map from ``x0``; column t is ``K^t x0``.

    Without ``x0`` the start state excites every planted direction equally.
    """
    if num_snapshots < 2:
        raise ArgumentError(f"num_snapshots must be >= 2, got {num_snapshots}")
    x0 = system.default_x0() if x0 is None else np.asarray(x0, dtype=float)
    if x0.shape != (system.n,):
        raise ShapeError(f"x0 must have length {system.n}")
    amp = system.excitation(x0)
    weak = np.flatnonzero(amp <= 1e-12 * max(np.linalg.norm(x0), np.finfo(float).tiny))
    if weak.size:
        warnings.warn(
            f"x0 does not excite planted direction(s) {weak.tolist()}; "
            "those modes cannot be recovered",
            DegenerateExcitationWarning,
            stacklevel=2,
        )
    c = system.block()
    z = np.linalg.pinv(system.basis) @ x0
    out = np.empty((system.n, num_snapshots))
    out[:, 0] = x0
    for t in range(1, num_snapshots):
        z = c @ z
        out[:, t] = system.basis @ z
    return out


def write_pair_series(path, labels, series: dict, times=None):
    """Write per-pair time series as columns ``t, week, <pair>...``."""
    names = list(series)
    length = len(labels)
    for name, values in series.items():
        if len(values) != length:
            raise ShapeError(f"series {name} has {len(values)} values, expected {length}")
    times = range(length) if times is None else times
    with open(Path(path), "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "week", *names])
        for i, (t, label) in enumerate(zip(times, labels)):
            lab = label.isoformat() if isinstance(label, date) else str(label)
            w.writerow([repr(float(t)), lab, *(repr(float(series[n][i])) for n in names)])
