"""Exact dynamic mode decomposition of a snapshot sequence.

Given snapshots ``x_1 .. x_m`` the fit builds ``X = [x_1 .. x_{m-1}]`` and
``X' = [x_2 .. x_m]``, truncates the SVD ``X = U S V^T`` to the target rank,
and diagonalizes the reduced operator ``A~ = U^T X' V S^-1``. The exact DMD
modes are ``Phi = X' V S^-1 W`` and forecasts are

    x(t) = Re( Phi @ (exp(omega * t) * b) ),   omega = log(lambda) / dt

with ``t = 0`` at the first training snapshot and ``b`` fitted by least
squares to that snapshot.

The continuous eigenvalues use the principal branch of the logarithm,
``Im(log lambda)`` in ``(-pi, pi]``. Frequencies above the Nyquist rate of the
sampling step are therefore reported as their slowest alias.
"""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass
from datetime import date
from pathlib import Path

import numpy as np

from . import linalg
from .errors import (
    ArgumentError,
    ConjugateConsistencyWarning,
    DegenerateDataError,
    FormatError,
    InsufficientDataError,
    ModeOverflowError,
    RankTruncationWarning,
)
from .ingest import SnapshotMatrix

#: Modes whose discrete eigenvalue has modulus at or below this are dropped.
ZERO_EIG_TOL = 1e-12
IMAG_RESIDUAL_TOL = 1e-6
_LOG_MAX = math.log(np.finfo(float).max)


@dataclass(frozen=True, eq=False)
class DmdModel:
    """A fitted exact-DMD model. Arrays are read-only after construction."""

    modes: np.ndarray            # n x r complex (Phi)
    discrete_eigs: np.ndarray    # r complex (lambda)
    cont_eigs: np.ndarray        # r complex (omega)
    amplitudes: np.ndarray       # r complex (b)
    dt: float = 1.0
    t0_label: date | None = None
    requested_rank: int = 0
    svd_rank: int = 0
    dropped_modes: int = 0
    places: tuple[str, ...] = ()

    def __post_init__(self):
        for name in ("modes", "discrete_eigs", "cont_eigs", "amplitudes"):
            arr = np.array(getattr(self, name), dtype=complex)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.modes.ndim != 2:
            raise ArgumentError("modes must be a 2-D array")
        r = self.modes.shape[1]
        for name in ("discrete_eigs", "cont_eigs", "amplitudes"):
            if getattr(self, name).shape != (r,):
                raise ArgumentError(f"{name} must have length {r}")
        object.__setattr__(self, "places", tuple(self.places))

    @property
    def n(self) -> int:
        return self.modes.shape[0]

    @property
    def r(self) -> int:
        return self.modes.shape[1]

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(self.discrete_eigs))) if self.r else 0.0

    @property
    def truncated(self) -> bool:
        """True when the requested rank exceeded the numerical rank of X."""
        return self.svd_rank < self.requested_rank


@dataclass(frozen=True)
class SpectrumReport:
    values: np.ndarray
    first_week: date | None = None
    last_week: date | None = None


def continuous_eigs(discrete_eigs, dt: float) -> np.ndarray:
    """``log(lambda) / dt`` on the principal branch, imaginary part in (-pi, pi]."""
    logs = np.log(np.asarray(discrete_eigs, dtype=complex))
    logs = np.where(logs.imag <= -np.pi, logs + 2j * np.pi, logs)
    return logs / dt


def _split(snapshots):
    if isinstance(snapshots, SnapshotMatrix):
        return snapshots.data, (snapshots.week_labels[0] if snapshots.m else None), \
            snapshots.place_index.places
    return np.asarray(snapshots, dtype=float), None, ()


def fit(snapshots, target_rank: int, dt: float = 1.0, t0_label: date | None = None) -> DmdModel:
    """Fit an exact DMD model of rank ``target_rank`` to consecutive snapshots.

    ``snapshots`` is a :class:`SnapshotMatrix` or an ``n x m`` array. When the
    data has lower numerical rank than requested, a
    :class:`RankTruncationWarning` is issued and the model is fitted at the
    numerical rank (``model.svd_rank``).
    """
    data, label, places = _split(snapshots)
    t0_label = t0_label if t0_label is not None else label
    if data.ndim != 2 or data.shape[1] < 2:
        raise InsufficientDataError(
            f"need at least 2 snapshots, got {data.shape[1] if data.ndim == 2 else 0}"
        )
    if not (dt > 0 and math.isfinite(dt)):
        raise ArgumentError(f"dt must be positive and finite, got {dt}")
    n, m = data.shape
    max_rank = min(n, m - 1)
    if not 1 <= target_rank <= max_rank:
        raise ArgumentError(f"target_rank must lie in [1, {max_rank}], got {target_rank}")

    x, xp = data[:, :-1], data[:, 1:]
    svd = linalg.reduced_svd(x, target_rank)
    if svd.effective_rank == 0:
        raise DegenerateDataError("all singular values of the training data are zero")
    if svd.effective_rank < target_rank:
        warnings.warn(
            f"target rank {target_rank} exceeds numerical rank {svd.effective_rank}; "
            f"fitting at rank {svd.effective_rank}",
            RankTruncationWarning,
            stacklevel=2,
        )
        svd = svd.truncate(svd.effective_rank)

    u, s, v = svd.u, svd.sigma, svd.v
    xp_v_sinv = (xp @ v) / s
    a_tilde = u.T @ xp_v_sinv
    lam, w = linalg.eig_dense(a_tilde)
    phi = xp_v_sinv @ w

    keep = np.abs(lam) > ZERO_EIG_TOL
    dropped = int(np.count_nonzero(~keep))
    lam, phi = lam[keep], phi[:, keep]
    if lam.size == 0:
        raise DegenerateDataError("every DMD eigenvalue is zero; no mode can be propagated")

    order = np.lexsort((-lam.imag, -np.abs(lam)))
    lam, phi = lam[order], phi[:, order]
    b = linalg.least_squares(phi, x[:, 0])

    return DmdModel(
        modes=phi,
        discrete_eigs=lam,
        cont_eigs=continuous_eigs(lam, dt),
        amplitudes=b,
        dt=float(dt),
        t0_label=t0_label,
        requested_rank=target_rank,
        svd_rank=svd.rank,
        dropped_modes=dropped,
        places=places,
    )


def _check_times(model, times):
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if not np.all(np.isfinite(times)):
        raise ArgumentError("forecast times must be finite")
    if np.any(times < 0):
        raise ArgumentError("forecast times must be >= 0 (t = 0 is the first training week)")
    growth = np.outer(model.cont_eigs.real, times)
    growth = growth + np.log(np.maximum(np.abs(model.amplitudes), np.finfo(float).tiny))[:, None]
    if np.any(growth > _LOG_MAX):
        mode, col = np.unravel_index(np.argmax(growth), growth.shape)
        raise ModeOverflowError(
            f"mode {mode} (lambda={model.discrete_eigs[mode]:.6g}) overflows at t={times[col]:g}",
            mode=int(mode),
        )
    return times


def _evaluate(model, times):
    dynamics = np.exp(np.outer(model.cont_eigs, times)) * model.amplitudes[:, None]
    out = model.modes @ dynamics
    if not np.all(np.isfinite(out)):
        mode = int(np.argmax(model.cont_eigs.real))
        raise ModeOverflowError(f"forecast overflowed; fastest-growing mode is {mode}", mode=mode)
    return out


def imag_residual(values: np.ndarray) -> float:
    """Largest imaginary magnitude relative to the largest real magnitude."""
    scale = np.max(np.abs(values.real)) if values.size else 0.0
    top = np.max(np.abs(values.imag)) if values.size else 0.0
    if top == 0:
        return 0.0
    return float(top / scale) if scale > 0 else math.inf


def predict(model: DmdModel, t: float, return_residual: bool = False):
    """Real forecast at ``t`` (in the same units as ``dt``) after the first training week.

    The result is not clamped. With ``return_residual`` the relative size of
    the discarded imaginary part comes back as a second value.
    """
    times = _check_times(model, t)
    if times.size != 1:
        raise ArgumentError("predict takes a scalar time; use reconstruct for batches")
    full = _evaluate(model, times)[:, 0]
    resid = imag_residual(full)
    if resid > IMAG_RESIDUAL_TOL:
        warnings.warn(
            f"forecast at t={times[0]:g} has imaginary residual {resid:.2e}",
            ConjugateConsistencyWarning,
            stacklevel=2,
        )
    return (full.real, resid) if return_residual else full.real


def reconstruct(model: DmdModel, num_weeks: int) -> np.ndarray:
    """Forecasts at ``t = 0, dt, ..., (num_weeks - 1) dt`` as columns."""
    if num_weeks < 1:
        raise ArgumentError(f"num_weeks must be >= 1, got {num_weeks}")
    times = _check_times(model, np.arange(num_weeks) * model.dt)
    return _evaluate(model, times).real


def spectrum(snapshots) -> SpectrumReport:
    """All singular values of ``X`` (every column but the last), decreasing."""
    data, _, _ = _split(snapshots)
    if data.ndim != 2 or data.shape[1] < 2:
        raise InsufficientDataError("need at least 2 snapshots for a spectrum")
    sigma = linalg.reduced_svd(data[:, :-1]).sigma
    first = last = None
    if isinstance(snapshots, SnapshotMatrix):
        first, last = snapshots.week_labels[0], snapshots.week_labels[-2]
    return SpectrumReport(sigma, first, last)


# --- model file ------------------------------------------------------------
#
# Little-endian binary layout:
#
#   bytes 0-7   magic b"FLOWDMD\0"
#   uint32      format version (1)
#   uint64 n, uint64 r
#   float64 dt
#   int64 requested_rank, int64 svd_rank, int64 dropped_modes
#   str t0_label (ISO date, empty if unknown)
#   uint32 number of places, then one str per place
#   discrete_eigs, cont_eigs, amplitudes: r complex values each
#   modes: n x r complex values, column-major
#
# str is uint32 byte length + UTF-8. Every complex value is stored as a
# float64 (real, imaginary) pair.

MODEL_MAGIC = b"FLOWDMD\x00"
MODEL_VERSION = 1


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def save_model(model: DmdModel, path) -> None:
    parts = [
        MODEL_MAGIC,
        struct.pack("<I", MODEL_VERSION),
        struct.pack("<QQd", model.n, model.r, model.dt),
        struct.pack("<qqq", model.requested_rank, model.svd_rank, model.dropped_modes),
        _pack_str(model.t0_label.isoformat() if model.t0_label else ""),
        struct.pack("<I", len(model.places)),
        *(_pack_str(p) for p in model.places),
    ]
    for arr in (model.discrete_eigs, model.cont_eigs, model.amplitudes):
        parts.append(np.ascontiguousarray(arr, dtype="<c16").tobytes())
    parts.append(np.asarray(model.modes, dtype="<c16").tobytes(order="F"))
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, buf, path):
        self.buf, self.pos, self.path = buf, 0, path

    def take(self, size):
        if self.pos + size > len(self.buf):
            raise FormatError(f"{self.path}: truncated model file")
        chunk = self.buf[self.pos:self.pos + size]
        self.pos += size
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self):
        (size,) = self.unpack("<I")
        return self.take(size).decode("utf-8")

    def complex(self, count):
        return np.frombuffer(self.take(16 * count), dtype="<c16").astype(complex)


def load_model(path) -> DmdModel:
    rd = _Reader(Path(path).read_bytes(), path)
    if rd.take(8) != MODEL_MAGIC:
        raise FormatError(f"{path}: not a flowdmd model file")
    (version,) = rd.unpack("<I")
    if version != MODEL_VERSION:
        raise FormatError(f"{path}: unsupported model version {version}")
    n, r, dt = rd.unpack("<QQd")
    requested, svd_rank, dropped = rd.unpack("<qqq")
    label = rd.string()
    (nplaces,) = rd.unpack("<I")
    places = tuple(rd.string() for _ in range(nplaces))
    lam, omega, b = rd.complex(r), rd.complex(r), rd.complex(r)
    modes = rd.complex(n * r).reshape((n, r), order="F")
    if rd.pos != len(rd.buf):
        raise FormatError(f"{path}: {len(rd.buf) - rd.pos} trailing bytes")
    return DmdModel(
        modes=modes,
        discrete_eigs=lam,
        cont_eigs=omega,
        amplitudes=b,
        dt=dt,
        t0_label=date.fromisoformat(label) if label else None,
        requested_rank=requested,
        svd_rank=svd_rank,
        dropped_modes=dropped,
        places=places,
    )
