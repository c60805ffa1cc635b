from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Literal, TypeVar

import nshconfig as C
import numpy as np

from .birman_schwinger import Discretization, assemble_Q, discretize, lower_bound_check
from .errors import ConfigurationError, NumericalError, SingularPencilError
from .geometry import ArcLengthCurve, CurveSpec, reparametrize_arclength
from .io import (
    SpectrumRecord,
    ThresholdRecord,
    TraceReportRecord,
    VerifyRecord,
    write_curve_csv,
    write_cutoff_csv,
    write_density_csv,
    write_json,
    write_matrix_binary,
    write_matrix_csv,
    write_plane_csv,
    write_symbol_csv,
)
from .kernels import KernelParams, discrete_frequencies, green_convolution
from .registry import curve_registry
from .spectral import (
    eigenfunction_on_plane,
    find_bound_states,
    kappa_alpha,
    threshold,
    verify_boundary_condition,
)
from .trace import hs_norm_B, positivity_scan, trace_bound_report
from .util import is_power_of_two, resolve_num_workers

log = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


class DiscretizationConfig(C.Config):
    half_length: C.PositiveFloat = 20.0
    """``L``: the grid covers ``[-L, L)``."""

    num_points: int = 1024
    """``N``: number of grid points, a power of two."""

    def __post_init__(self):
        if not is_power_of_two(self.num_points):
            raise ConfigurationError(f"num_points must be a power of two, got {self.num_points}.")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_length / self.num_points


class PlaneConfig(C.Config):
    """A square patch ``origin + a u + b v``, ``a, b in [-1, 1]``, on which ``f`` is dumped."""

    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    u: tuple[float, float, float] = (3.0, 0.0, 0.0)
    v: tuple[float, float, float] = (0.0, 3.0, 0.0)
    resolution: int = 41


class SpectrumConfig(C.Config):
    kappa_max: C.PositiveFloat | None = None
    """Upper end of the ``kappa`` search interval. Defaults to ``4 kappa_alpha``."""

    root_tolerance: C.PositiveFloat = 1.0e-10
    """Tolerance of the root in ``kappa``."""

    num_branches: int = 4
    """Number of eigenvalue branches that are tracked."""

    threshold_margin: C.PositiveFloat = 1.0e-3
    """The search starts at ``kappa_alpha (1 + threshold_margin)``."""

    planes: list[PlaneConfig] = []
    """Planes on which the ground state is sampled for CSV output."""


class TraceConfig(C.Config):
    kappas: list[C.PositiveFloat] = [2.0]
    """``kappa`` values at which the report is computed."""

    delta_schedule: list[C.PositiveFloat] | None = None
    """Ball radii for the cut-off traces. Defaults to ``{5, 10, 20, 40} / kappa``."""

    max_quadrature_nodes: int = 48
    """Nodes per side kept in the cut-off quadrature."""

    cutoff_terms: bool = True
    """Whether to evaluate the cut-off traces at all (the closed-form limits are always reported)."""

    cancellation_window: float = 0.25
    """Fraction of each tail, next to ``Gamma_M``, left out of the cancellation residual."""


class LemmaSuiteConfig(C.Config):
    kappas: list[C.PositiveFloat] = [0.5, 1.0, 2.0]
    distances: list[C.NonNegativeFloat] = [0.0, 0.5, 1.0, 3.0]
    tolerance: C.PositiveFloat = 1.0e-6


class PositivitySuiteConfig(C.Config):
    kappa_factors: list[C.PositiveFloat] = [1.0, 1.25, 1.5, 2.0, 3.0, 4.0]
    """The scan uses ``kappa_alpha`` times these factors."""

    b_tolerance: C.PositiveFloat = 1.0e-10
    """Tolerance on negative values of ``B^kappa``, pointwise and in the spectrum."""


class HSSuiteConfig(C.Config):
    kappa: C.PositiveFloat = 1.0
    half_lengths: list[C.PositiveFloat] = [20.0, 40.0]
    spacing: C.PositiveFloat = 0.0390625
    tolerance: C.PositiveFloat = 1.0e-8


class LowerBoundSuiteConfig(C.Config):
    kappas: list[C.PositiveFloat] = [math.e**2, math.e**3, math.e**4]
    residual_tolerance: C.PositiveFloat = 0.2


class BoundarySuiteConfig(C.Config):
    s_samples: list[float] = [0.0]
    r_sequence: list[C.PositiveFloat] | None = None
    """Strictly decreasing shift radii. By default they scale with the grid spacing."""

    tolerance: C.PositiveFloat = 1.0e-2
    correction_order: Literal[1, 2] = 1
    """Number of even ``r^(2k)``, ``r^(2k) ln r`` correction pairs in the fits."""


class VerifyConfig(C.Config):
    lemma: LemmaSuiteConfig = LemmaSuiteConfig()
    positivity: PositivitySuiteConfig = PositivitySuiteConfig()
    hs: HSSuiteConfig = HSSuiteConfig()
    lower_bound: LowerBoundSuiteConfig = LowerBoundSuiteConfig()
    boundary: BoundarySuiteConfig = BoundarySuiteConfig()


OutputFormat = Literal["json", "csv", "both"]


class OutputConfig(C.Config):
    directory: Path = Path("leakywire-out")
    """Directory receiving all result files."""

    format: OutputFormat = "json"
    """Which result files to write."""

    matrices: bool = False
    """Also dump ``Q^kappa`` at the ground-state ``kappa`` (binary, plus CSV for ``N <= 512`` when CSV is on)."""

    @property
    def json(self) -> bool:
        return self.format in ("json", "both")

    @property
    def csv(self) -> bool:
        return self.format in ("csv", "both")


def _non_finite_paths(value: Any, path: str = "") -> list[str]:
    match value:
        case float() if not math.isfinite(value):
            return [path or "<root>"]
        case dict():
            return [p for k, v in value.items() for p in _non_finite_paths(v, f"{path}.{k}" if path else str(k))]
        case list() | tuple():
            return [p for k, v in enumerate(value) for p in _non_finite_paths(v, f"{path}[{k}]")]
        case _:
            return []


@curve_registry.rebuild_on_registers
class RunConfig(C.Config):
    curve: CurveSpec
    """The curve carrying the interaction."""

    alpha: float | list[float] = 0.0
    """Coupling parameter, or a list of them."""

    discretization: DiscretizationConfig = DiscretizationConfig()
    """Truncation ``[-L, L)`` and number of grid points."""

    spectrum: SpectrumConfig = SpectrumConfig()
    trace: TraceConfig = TraceConfig()
    verify: VerifyConfig = VerifyConfig()
    output: OutputConfig = OutputConfig()

    workers: int | Literal["auto"] = 1
    """Worker threads for independent ``(alpha, kappa)`` combinations. ``"auto"`` uses all but one CPU."""

    def __post_init__(self):
        if bad := _non_finite_paths(self.model_dump(exclude={"curve": {"map"}})):
            raise ConfigurationError(f"Non-finite values at: {', '.join(bad)}.")

    def alpha_values(self) -> list[float]:
        return list(self.alpha) if isinstance(self.alpha, list) else [self.alpha]


class LeakyWireRunner:
    """Runs the CLI commands for one `RunConfig` and writes their result files."""

    def __init__(self, config: RunConfig):
        self.config = config
        self._curve: ArcLengthCurve | None = None
        self._disc: Discretization | None = None

    @property
    def out_dir(self) -> Path:
        return self.config.output.directory

    def _map(self, fn: Callable[[T], R], items: Sequence[T]) -> list[R]:
        workers = min(resolve_num_workers(self.config.workers), max(len(items), 1))
        if workers <= 1:
            return [fn(item) for item in items]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))

    def discretized(self) -> tuple[ArcLengthCurve, Discretization]:
        """The configured curve, resampled on the discretization grid."""
        if self._curve is None:
            d = self.config.discretization
            sampled = reparametrize_arclength(self.config.curve, d.spacing)
            self._curve, self._disc = discretize(sampled, d.half_length, d.num_points)
            log.info(
                f"Discretized {self.config.curve.family} on N = {d.num_points} nodes over "
                f"[-{d.half_length}, {d.half_length})."
            )
        assert self._disc is not None
        return self._curve, self._disc

    # region Commands
    def threshold(self) -> list[ThresholdRecord]:
        records = [
            ThresholdRecord(alpha=alpha, xi_alpha=threshold(alpha), kappa_alpha=kappa_alpha(alpha))
            for alpha in self.config.alpha_values()
        ]
        if self.config.output.json:
            write_json(self.out_dir / "threshold.json", records)
        return records

    def spectrum(self) -> list[SpectrumRecord]:
        curve, disc = self.discretized()
        cfg = self.config.spectrum
        family = self.config.curve.family

        def solve(alpha: float):
            kappa_max = cfg.kappa_max if cfg.kappa_max is not None else 4.0 * kappa_alpha(alpha)
            return find_bound_states(
                curve,
                alpha,
                disc,
                kappa_max,
                cfg.root_tolerance,
                num_branches=cfg.num_branches,
                threshold_margin=cfg.threshold_margin,
            )

        alphas = self.config.alpha_values()
        all_states = self._map(solve, alphas)

        output = self.config.output
        if output.csv:
            write_curve_csv(self.out_dir / "curve.csv", curve)

        records = []
        for n, (alpha, states) in enumerate(zip(alphas, all_states)):
            records.append(SpectrumRecord.from_states(family, alpha, threshold(alpha), states))
            if output.matrices and states:
                Q = assemble_Q(curve, disc.kernel_params(states[0].kappa_star), disc)
                write_matrix_binary(self.out_dir / f"Q_alpha{n}.bin", Q)
                if output.csv and disc.num_points <= 512:
                    write_matrix_csv(self.out_dir / f"Q_alpha{n}.csv", Q.entries)
            if not output.csv:
                continue
            write_symbol_csv(
                self.out_dir / f"symbol_alpha{n}.csv",
                kappa_alpha(alpha),
                np.sort(discrete_frequencies(disc.num_points, disc.half_length)),
            )
            for k, state in enumerate(states):
                write_density_csv(self.out_dir / f"phi_alpha{n}_state{k}.csv", state)
            if states:
                for p, plane in enumerate(cfg.planes):
                    points, values = eigenfunction_on_plane(
                        curve, states[0], plane.origin, plane.u, plane.v, plane.resolution
                    )
                    write_plane_csv(self.out_dir / f"f_alpha{n}_plane{p}.csv", points, values)

        if self.config.output.json:
            write_json(self.out_dir / "spectrum.json", records)
        return records

    def trace(self) -> list[TraceReportRecord]:
        curve, disc = self.discretized()
        cfg = self.config.trace
        alpha = self.config.alpha_values()[0]

        def report(kappa: float) -> TraceReportRecord | None:
            try:
                result = trace_bound_report(
                    curve,
                    alpha,
                    kappa,
                    disc,
                    delta_schedule=cfg.delta_schedule,
                    max_quadrature_nodes=cfg.max_quadrature_nodes,
                    cutoff_terms=cfg.cutoff_terms,
                    cancellation_window=cfg.cancellation_window,
                )
            except SingularPencilError as e:
                log.warning(f"Excluding kappa = {kappa}: {e}")
                return None
            if self.config.output.csv:
                for entry in result.entries:
                    if entry.cutoff is not None:
                        write_cutoff_csv(
                            self.out_dir / f"cutoff_kappa{kappa:g}_{entry.i}_{entry.j}.csv",
                            entry.cutoff,
                        )
            return TraceReportRecord.from_report(result)

        records = [r for r in self._map(report, cfg.kappas) if r is not None]
        if not records:
            raise NumericalError("alpha - Q is singular at every configured kappa.")
        if self.config.output.json:
            write_json(self.out_dir / "trace.json", records)
        return records

    def verify(self, suite: Literal["lemma", "positivity", "hs", "lower_bound", "boundary"]) -> VerifyRecord:
        match suite:
            case "lemma":
                record = self._verify_lemma()
            case "positivity":
                record = self._verify_positivity()
            case "hs":
                record = self._verify_hs()
            case "lower_bound":
                record = self._verify_lower_bound()
            case "boundary":
                record = self._verify_boundary()
            case _:
                raise ConfigurationError(f"Unknown verification suite {suite!r}.")

        log.info(f"Verification suite {suite}: {'pass' if record.passed else 'FAIL'}.")
        if self.config.output.json:
            write_json(self.out_dir / f"verify_{suite}.json", record)
        return record

    # endregion

    # region Suites
    def _verify_lemma(self) -> VerifyRecord:
        cfg = self.config.verify.lemma
        cases = [(k, d) for k in cfg.kappas for d in cfg.distances]

        def run(case: tuple[float, float]) -> dict[str, float]:
            kappa, distance = case
            params = KernelParams(kappa=kappa, diagonal_cutoff=1.0)
            y, z = np.zeros(3), np.array([distance, 0.0, 0.0])
            exact = green_convolution(params, y, z, "closed_form")
            numeric = green_convolution(params, y, z, "quadrature")
            return {
                "kappa": kappa,
                "distance": distance,
                "closed_form": exact,
                "quadrature": numeric,
                "relative_error": abs(numeric - exact) / exact,
            }

        results = self._map(run, cases)
        worst = max(r["relative_error"] for r in results)
        return VerifyRecord(
            suite="lemma",
            passed=worst < cfg.tolerance,
            details={"cases": results, "max_relative_error": worst},
        )

    def _verify_positivity(self) -> VerifyRecord:
        curve, disc = self.discretized()
        alpha = self.config.alpha_values()[0]
        cfg = self.config.verify.positivity
        kappas = [kappa_alpha(alpha) * f for f in cfg.kappa_factors]
        report = positivity_scan(curve, alpha, disc, kappas)
        b_nonnegative = min(report.b_min_entries) >= -cfg.b_tolerance
        b_semidefinite = min(report.b_min_eigenvalues) >= -cfg.b_tolerance
        if not b_semidefinite:
            log.warning(
                f"B^kappa has eigenvalue {min(report.b_min_eigenvalues):.3e} below -{cfg.b_tolerance:.1e}; "
                "its kernel is nonnegative but the operator is not positive semidefinite."
            )
        return VerifyRecord(
            suite="positivity",
            passed=report.kappa_check is not None and b_nonnegative,
            details={
                "kappas": report.kappas,
                "min_eigenvalues": report.min_eigenvalues,
                "kappa_check": report.kappa_check,
                "b_min_entries": report.b_min_entries,
                "b_min_eigenvalues": report.b_min_eigenvalues,
                "b_tolerance": cfg.b_tolerance,
                "b_nonnegative": b_nonnegative,
                "b_semidefinite": b_semidefinite,
            },
        )

    def _verify_hs(self) -> VerifyRecord:
        curve, _ = self.discretized()
        cfg = self.config.verify.hs
        report = hs_norm_B(curve, cfg.kappa, cfg.half_lengths, spacing=cfg.spacing)
        return VerifyRecord(
            suite="hs",
            passed=all(d < cfg.tolerance for d in report.decrements),
            details={
                "half_lengths": report.half_lengths,
                "norms": report.norms,
                "decrements": report.decrements,
            },
        )

    def _verify_lower_bound(self) -> VerifyRecord:
        curve, disc = self.discretized()
        cfg = self.config.verify.lower_bound
        report = lower_bound_check(
            curve,
            self.config.alpha_values()[0],
            cfg.kappas,
            disc,
            residual_tolerance=cfg.residual_tolerance,
        )
        return VerifyRecord(
            suite="lower_bound",
            passed=report.passed,
            details={
                "kappas": report.kappas,
                "sigma_min": report.sigma_min,
                "excluded": report.excluded,
                "fitted_c": report.fitted_c,
                "relative_residual": report.relative_residual,
            },
        )

    def _verify_boundary(self) -> VerifyRecord:
        curve, disc = self.discretized()
        cfg = self.config.verify.boundary
        alpha = self.config.alpha_values()[0]
        spectrum = self.config.spectrum
        kappa_max = spectrum.kappa_max if spectrum.kappa_max is not None else 4.0 * kappa_alpha(alpha)
        states = find_bound_states(curve, alpha, disc, kappa_max, spectrum.root_tolerance)
        if not states:
            return VerifyRecord(
                suite="boundary",
                passed=False,
                details={"reason": "no bound state to verify"},
            )

        report = verify_boundary_condition(
            curve,
            states[0],
            cfg.s_samples,
            cfg.r_sequence,
            correction_order=cfg.correction_order,
        )
        return VerifyRecord(
            suite="boundary",
            passed=report.max_residual < cfg.tolerance and report.direction_spread < cfg.tolerance,
            details={
                "kappa": states[0].kappa_star,
                "s_samples": report.s_samples,
                "radii": report.radii,
                "xi": report.xi,
                "omega": report.omega,
                "residuals": report.residuals,
                "max_residual": report.max_residual,
                "direction_spread": report.direction_spread,
            },
        )

    # endregion
