from __future__ import annotations

import io
import logging
from collections.abc import Sequence
from pathlib import Path
from typing import Any, Literal

import nshconfig as C
import numpy as np

from .birman_schwinger import BSMatrix
from .errors import ConfigurationError
from .geometry import ArcLengthCurve
from .kernels import KernelParams, t_symbol
from .spectral import BoundState
from .trace import CutoffTraceResult, TraceReport
from .util import atomic_write_bytes, atomic_write_text

log = logging.getLogger(__name__)

_MATRIX_HEADER = np.dtype([("n", "<i8"), ("kappa", "<f8"), ("half_length", "<f8")])


# region CSV


def format_csv(header: Sequence[str], columns: Sequence[np.ndarray]) -> str:
    """Comma-separated, '.' decimal separator, LF line endings, one header row, full precision."""
    data = np.column_stack([np.asarray(c, dtype=np.float64) for c in columns])
    buffer = io.StringIO()
    np.savetxt(buffer, data, fmt="%.17g", delimiter=",", newline="\n", header=",".join(header), comments="")
    return buffer.getvalue()


def write_csv(path: str | Path, header: Sequence[str], columns: Sequence[np.ndarray]) -> Path:
    path = atomic_write_text(path, format_csv(header, columns))
    log.debug(f"Wrote {path}.")
    return path


def write_curve_csv(path: str | Path, curve: ArcLengthCurve) -> Path:
    """Rows ``(s, x, y, z, gamma)``."""
    return write_csv(
        path,
        ["s", "x", "y", "z", "gamma"],
        [curve.grid, *curve.points.T, curve.curvature],
    )


def write_symbol_csv(path: str | Path, kappa: KernelParams | float, p: np.ndarray) -> Path:
    """Rows ``(p, t_kappa(p))``."""
    return write_csv(path, ["p", "t"], [p, t_symbol(kappa, p)])


def write_density_csv(path: str | Path, state: BoundState) -> Path:
    """Rows ``(s, phi)``."""
    return write_csv(path, ["s", "phi"], [state.grid, state.phi])


def write_plane_csv(path: str | Path, points: np.ndarray, values: np.ndarray) -> Path:
    """Rows ``(x, y, z, f)``."""
    return write_csv(path, ["x", "y", "z", "f"], [*points.T, values])


def write_cutoff_csv(path: str | Path, result: CutoffTraceResult) -> Path:
    """Rows ``(delta, value)``."""
    return write_csv(path, ["delta", "value"], [result.deltas, result.values])


def write_matrix_csv(path: str | Path, matrix: np.ndarray, *, max_size: int = 512) -> Path:
    if matrix.shape[0] > max_size:
        raise ConfigurationError(
            f"CSV export is meant for small matrices (N <= {max_size}); use the binary layout."
        )
    header = [f"c{k}" for k in range(matrix.shape[1])]
    return write_csv(path, header, list(matrix.T))


# endregion

# region Binary matrices


def matrix_to_bytes(Q: BSMatrix) -> bytes:
    """Header ``(N: int64, kappa: float64, L: float64)`` then ``N x N`` row-major float64, little endian."""
    header = np.array([(Q.num_points, Q.kappa, Q.half_length)], dtype=_MATRIX_HEADER)
    return header.tobytes() + np.ascontiguousarray(Q.entries, dtype="<f8").tobytes()


def write_matrix_binary(path: str | Path, Q: BSMatrix) -> Path:
    return atomic_write_bytes(path, matrix_to_bytes(Q))


def read_matrix_binary(path: str | Path) -> tuple[float, float, np.ndarray]:
    """Returns ``(kappa, L, entries)``."""
    data = Path(path).read_bytes()
    header = np.frombuffer(data, dtype=_MATRIX_HEADER, count=1)[0]
    n = int(header["n"])
    expected = _MATRIX_HEADER.itemsize + 8 * n * n
    if len(data) != expected:
        raise ConfigurationError(f"{path}: expected {expected} bytes for N = {n}, found {len(data)}.")
    entries = np.frombuffer(data, dtype="<f8", offset=_MATRIX_HEADER.itemsize).reshape(n, n)
    return float(header["kappa"]), float(header["half_length"]), entries.copy()


# endregion

# region JSON records


class ThresholdRecord(C.Config):
    alpha: float
    xi_alpha: float
    kappa_alpha: float


class StateRecord(C.Config):
    kappa: float
    energy: float
    residual: float
    branch: int
    degenerate: bool = False


class SpectrumRecord(C.Config):
    curve: str
    """Family name of the curve."""

    alpha: float
    xi_alpha: float
    states: list[StateRecord]

    @classmethod
    def from_states(cls, curve: str, alpha: float, xi_alpha: float, states: Sequence[BoundState]):
        return cls(
            curve=curve,
            alpha=alpha,
            xi_alpha=xi_alpha,
            states=[
                StateRecord(
                    kappa=s.kappa_star,
                    energy=s.energy,
                    residual=s.residual,
                    branch=s.branch_index,
                    degenerate=s.degenerate,
                )
                for s in states
            ],
        )


class VerifyRecord(C.Config):
    suite: Literal["lemma", "positivity", "hs", "lower_bound", "boundary"]
    passed: bool
    details: dict[str, Any]


class CutoffRecord(C.Config):
    deltas: list[float]
    cutoff_values: list[float]
    limit: float
    agreement: float
    monotone: bool


class BlockRecord(C.Config):
    i: str
    j: str
    gamma_limit: float
    sigma_limit: float
    difference_limit: float
    bound_kind: str
    gamma_bound: float
    sigma_bound: float
    trace_norm: float
    hs_norm: float
    cutoff: CutoffRecord | None
    within_bound: bool


class TraceReportRecord(C.Config):
    kappa: float
    alpha: float
    entries: list[BlockRecord]
    cancellation_residual: dict[str, float]
    cancellation_relative: dict[str, float]
    difference_symmetry: float
    verdict: bool
    lemma_prefactor: float
    published_prefactor: float
    """Prefactor of the published bounding chain; annotation only."""

    gamma_m_length: float
    notes: list[str]

    @classmethod
    def from_report(cls, report: TraceReport):
        return cls(
            kappa=report.kappa,
            alpha=report.alpha,
            entries=[
                BlockRecord(
                    i=e.i,
                    j=e.j,
                    gamma_limit=e.gamma_limit,
                    sigma_limit=e.sigma_limit,
                    difference_limit=e.difference_limit,
                    bound_kind=e.bound_kind,
                    gamma_bound=e.gamma_bound,
                    sigma_bound=e.sigma_bound,
                    trace_norm=e.trace_norm,
                    hs_norm=e.hs_norm,
                    cutoff=None
                    if e.cutoff is None
                    else CutoffRecord(
                        deltas=e.cutoff.deltas,
                        cutoff_values=e.cutoff.values,
                        limit=e.cutoff.limit,
                        agreement=e.cutoff.agreement,
                        monotone=e.cutoff.monotone,
                    ),
                    within_bound=e.within_bound,
                )
                for e in report.entries
            ],
            cancellation_residual=report.cancellation.residuals,
            cancellation_relative=report.cancellation.relative,
            difference_symmetry=report.difference_symmetry,
            verdict=report.verdict,
            lemma_prefactor=report.lemma_prefactor,
            published_prefactor=report.published_prefactor,
            gamma_m_length=report.gamma_m_length,
            notes=report.notes,
        )


def write_json(path: str | Path, records: C.Config | Sequence[C.Config]) -> Path:
    if isinstance(records, C.Config):
        text = records.model_dump_json(indent=2)
    else:
        text = "[\n" + ",\n".join(r.model_dump_json(indent=2) for r in records) + "\n]"
    return atomic_write_text(path, text + "\n")


# endregion
