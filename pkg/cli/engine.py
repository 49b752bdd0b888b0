"""
Command engine - runs one qkinetic command against a RunConfig and emits the
JSON result (plus CSV side files for ladders and grids).
"""

import csv
import json
import logging
import platform
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Optional, Tuple

import numpy as np
import scipy

from kinetic.histories import Graph, TimeLadder
from kinetic.kernel import collision_moments, cross_section, delta_mollification_check, maxwellian
from kinetic.oscillatory import (direct_T_eps_n1, eval_T_eps_term, mollified_delta_check,
                                 term_convergence_check, uniform_bound_check)
from kinetic.series import SeriesConfig, boltzmann_series, homogeneous_comparison
from kinetic.terms import TermBudget, TermSelector, eps_ladder, scaling_probe
from lib.quadrature import uniform_sphere
from lib.spectral import potential_fourier

from .config import COMMANDS, ConfigError, RunConfig
from .display import Display

logger = logging.getLogger(__name__)

__version__ = "0.1.0"


@contextmanager
def _options(command: str) -> Iterator[None]:
    """Bad option values become ConfigError; numerical failures later in a run do not."""
    try:
        yield
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(f"{command}: {e}") from e


@dataclass
class CommandResult:
    command: str
    config: Dict[str, Any]
    results: Dict[str, Any]
    seed: int
    versions: Dict[str, str]
    wall_time: float
    passed: bool = True
    errors: List[str] = field(default_factory=list)
    rows: List[Dict[str, Any]] = field(default_factory=list)
    files: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "config": self.config,
            "results": self.results,
            "seed": self.seed,
            "versions": self.versions,
            "wall_time": self.wall_time,
            "passed": self.passed,
            "errors": self.errors,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=_json_default)


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, complex):
        return {"real": value.real, "imag": value.imag}
    raise TypeError(f"Cannot serialise {type(value).__name__}")


def versions() -> Dict[str, str]:
    return {
        "qkinetic": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


class CommandEngine:
    def __init__(self, cfg: RunConfig, display: Optional[Display] = None, quiet: bool = False):
        self.cfg = cfg
        self.display = display or Display()
        self.quiet = quiet
        self.f0 = cfg.initial_datum()
        self.cs = cfg.cross_section()
        self._handlers: Dict[str, Callable[[], CommandResult]] = {
            "cross-section": self._cross_section,
            "solve": self._solve,
            "probe": self._probe,
            "converge": self._converge,
            "bound-check": self._bound_check,
            "delta-check": self._delta_check,
            "oracle-compare": self._oracle_compare,
        }

    def run(self, command: str, out: Optional[str] = None) -> CommandResult:
        """Run a command, write its artifacts and report to the console."""
        if command not in self._handlers:
            raise ConfigError(f"Unsupported command: {command}. Supported: {', '.join(COMMANDS)}")
        start = time.perf_counter()
        if not self.quiet:
            self.display.show_header(command, self.cfg.seed, self.cfg.dimension)
        result = self._handlers[command]()
        result.wall_time = time.perf_counter() - start
        result.files = self._write(result, out or self.cfg.output.path)
        if not self.quiet:
            self.display.show_files(result.files)
            self.display.show_footer(result.passed, result.wall_time)
        logger.info("%s finished in %.2fs (passed=%s)", command, result.wall_time, result.passed)
        return result

    # Helpers

    def _result(self, command: str, results: Dict[str, Any], checks: Dict[str, Any],
                rows: Optional[List[Dict[str, Any]]] = None) -> CommandResult:
        """Collect check reports (objects with passed/errors) into one result."""
        errors: List[str] = []
        passed = True
        for name, report in checks.items():
            ok = bool(report.passed)
            passed = passed and ok
            errors.extend(f"{name}: {e}" for e in report.errors)
            if not self.quiet:
                self.display.show_check(name, ok, report.errors)
        return CommandResult(command, self.cfg.to_dict(), results, self.cfg.seed, versions(), 0.0,
                             passed, errors, rows or [])

    def _budget(self) -> TermBudget:
        b = self.cfg.budgets
        return TermBudget(rule=b.rule, samples=b.samples, seed=self.cfg.seed, max_nodes=b.max_nodes)

    def _point(self, opts: Dict[str, Any]):
        x1 = opts.get("x1")
        v1 = opts.get("v1")
        with _options("x1/v1"):
            x1 = self.f0.x_centers[0] if x1 is None else np.broadcast_to(np.asarray(x1, float), (self.cfg.dimension,))
            v1 = self.f0.mean_velocity if v1 is None else np.broadcast_to(np.asarray(v1, float), (self.cfg.dimension,))
        return np.array(x1, dtype=float), np.array(v1, dtype=float)

    def _ladder(self, opts: Dict[str, Any]) -> Tuple[Graph, TimeLadder]:
        n, t = int(opts["n"]), float(opts["t"])
        if n not in (0, 1, 2):
            raise ConfigError(f"n must be 0, 1 or 2 for finite-eps checks, got {n}")
        times = opts.get("times")
        if times is None:
            times = {0: (), 1: (0.5 * t,), 2: (0.6 * t, 0.3 * t)}[n]
        with _options("times"):
            ladder = TimeLadder(t, tuple(times))
        return Graph(tuple(1 for _ in range(n))), ladder

    @staticmethod
    def _eps_values(opts: Dict[str, Any]) -> List[float]:
        values = [float(e) for e in opts["eps"]]
        if len(values) < 2 or any(e <= 0 for e in values):
            raise ConfigError(f"eps needs at least two positive values, got {values}")
        if any(b >= a for a, b in zip(values, values[1:])):
            raise ConfigError(f"eps must be strictly decreasing, got {values}")
        return values

    def _show_rows(self, rows: List[Dict[str, Any]], columns: List[str]):
        if not self.quiet:
            self.display.show_table(rows, columns)

    def _write(self, result: CommandResult, out: Optional[str]) -> List[str]:
        if not out:
            return []
        path = Path(out)
        json_path = path.with_suffix(".json") if path.suffix == ".csv" else path
        csv_path = path if path.suffix == ".csv" else path.with_suffix(".csv")
        json_path.parent.mkdir(parents=True, exist_ok=True)
        written = []
        if result.rows:
            columns = list(result.rows[0].keys())
            with open(csv_path, "w", newline="") as fh:
                writer = csv.DictWriter(fh, fieldnames=columns)
                writer.writeheader()
                writer.writerows(result.rows)
            written.append(str(csv_path))
        json_path.write_text(result.to_json())
        written.append(str(json_path))
        return written

    # Commands

    def _cross_section(self) -> CommandResult:
        opts = self.cfg.command("cross-section")
        d = self.cfg.dimension
        if d < 2:
            raise ConfigError("cross-section needs dimension >= 2")
        polar, azimuth, omegas = _direction_grid(d, int(opts["grid"]))
        if opts.get("w") is not None:
            w_vectors = [np.broadcast_to(np.asarray(opts["w"], dtype=float), (d,))]
            speeds = [None]
        else:
            axis = np.zeros(d)
            axis[-1] = 1.0
            speeds = [float(s) for s in opts["speeds"]]
            w_vectors = [s * axis for s in speeds]

        rows = []
        sym = _Check()
        for speed, w in zip(speeds, w_vectors):
            values = cross_section(self.cs, omegas, w)
            flipped = cross_section(self.cs, -omegas, w)
            if d == 3:
                proj = omegas @ w
                reference = np.abs(proj) * np.abs(potential_fourier(self.cs.potential, proj[:, None] * omegas)) ** 2 \
                    / (8.0 * np.pi ** 2)
                if not np.allclose(values, reference, rtol=1e-10, atol=1e-300):
                    sym.fail(f"three-dimensional closed form mismatch at w={w.tolist()}")
            for theta, phi, b, bf in zip(polar, azimuth, values, flipped):
                row = {} if speed is None else {"speed": speed}
                row.update({"omega_polar": float(theta), "omega_azimuth": float(phi), "B": float(b)})
                rows.append(row)
                if b < 0:
                    sym.fail(f"negative B at w={w.tolist()}, polar {theta:.3f}, azimuth {phi:.3f}")
                if abs(b - bf) > 1e-12 * max(1.0, abs(b)):
                    sym.fail(f"B(ω) != B(-ω) at w={w.tolist()}, polar {theta:.3f}, azimuth {phi:.3f}")
        self._show_rows(rows, list(rows[0].keys()))

        b = self.cfg.budgets
        moments = collision_moments(lambda v: maxwellian(v), self.cs, d, samples=b.samples, seed=self.cfg.seed)
        equilibrium = _Check()
        if not moments.within(self.cfg.tolerances.sigmas):
            equilibrium.fail("collision moments of the Maxwellian do not vanish within error bars")

        rng = np.random.default_rng(self.cfg.seed)
        sample_w = rng.standard_normal((16, d))
        sample_o = uniform_sphere(rng, 16, d)
        results = {
            "rows": len(rows),
            "moments": moments.to_dict(),
            "random_samples": [{"w": w.tolist(), "omega": o.tolist(), "B": float(cross_section(self.cs, o, w))}
                               for w, o in zip(sample_w, sample_o)],
        }
        return self._result("cross-section", results, {"symmetry": sym, "moments": equilibrium}, rows)

    def _solve(self) -> CommandResult:
        opts = self.cfg.command("solve")
        b = self.cfg.budgets
        x1, v1 = self._point(opts)
        t = opts.get("t")
        constant = opts.get("constant")
        if t is None:
            pilot = boltzmann_series(x1, v1, SeriesConfig(t=1.0, n_max=int(opts["n_max"]), samples=b.samples,
                                                          seed=self.cfg.seed, override=True), self.f0, self.cs)
            constant = constant or (pilot.constant if pilot.constant > 0 else None)
            t = float(opts["t_fraction"]) * pilot.radius if np.isfinite(pilot.radius) else 1.0
        with _options("solve"):
            cfg = SeriesConfig(t=float(t), n_max=int(opts["n_max"]), samples=b.samples, seed=self.cfg.seed,
                               constant=constant, override=bool(opts["override"]))
        if not opts["oracle"]:
            series = boltzmann_series(x1, v1, cfg, self.f0, self.cs)
            rows = [{"n": n, "value": o.real, "stderr": o.stderr} for n, o in enumerate(series.orders)]
            self._show_rows(rows, ["n", "value", "stderr"])
            return self._result("solve", series.to_dict(), {"series": series}, rows)

        comparison = homogeneous_comparison(x1, v1, cfg, self.f0, self.cs, iterations=int(opts["iterations"]),
                                            half_width=float(opts["half_width"]), size=int(opts["grid_size"]),
                                            sphere_points=int(opts["sphere_points"]),
                                            sigmas=self.cfg.tolerances.sigmas)
        series = comparison.series
        rows = [{"n": n, "value": o.real, "stderr": o.stderr} for n, o in enumerate(series.orders)]
        self._show_rows(rows, ["n", "value", "stderr"])
        if not self.quiet:
            self.display.show_value("series", series.value.real, series.value.stderr)
            self.display.show_value("Picard oracle", comparison.oracle.value, comparison.oracle.richardson_error)
        return self._result("solve", comparison.to_dict(), {"series": series, "oracle": comparison}, rows)

    def _probe(self) -> CommandResult:
        opts = self.cfg.command("probe")
        with _options("probe"):
            selector = TermSelector(opts["term"], j=opts.get("j"), dimension=self.cfg.dimension,
                                    summed=bool(opts["summed"]))
            ladder = eps_ladder(float(opts["ladder_start"]), int(opts["ladder_points"]))
        tol = self.cfg.tolerances
        probe = scaling_probe(selector, ladder, self.f0, self.cs, budget=self._budget(), t=float(opts["t"]),
                              window=tol.window, sigmas=tol.sigmas)
        rows = [{"eps": r["eps"], "value": r["value"], "stderr": r["stderr"]} for r in probe.rows()]
        if not self.quiet:
            self.display.show_section(f"{selector.which.value} ({probe.measured}), j={selector.j}")
        self._show_rows(rows, ["eps", "value", "stderr"])
        if not self.quiet:
            self.display.show_value("slope", probe.slope, probe.slope_stderr)
            self.display.show_value("expected", probe.expected)
            if probe.limit is not None:
                self.display.show_value("limit", probe.limit.real, probe.limit.stderr)
        return self._result("probe", probe.to_dict(), {"slope": probe}, rows)

    def _converge(self) -> CommandResult:
        opts = self.cfg.command("converge")
        graph, ladder = self._ladder(opts)
        x1, v1 = self._point(opts)
        eps = self._eps_values(opts)
        report = term_convergence_check(graph, ladder, eps, self.f0, self.cs, x1, v1,
                                        sigmas=self.cfg.tolerances.sigmas,
                                        samples=self.cfg.budgets.samples, seed=self.cfg.seed)
        rows = [{"eps": e, "value": v.real, "stderr": v.stderr, "gap": g}
                for e, v, g in zip(report.eps, report.values, report.gaps)]
        if not self.quiet:
            self.display.show_section(f"n={graph.order}, t={ladder.t:g}")
        self._show_rows(rows, ["eps", "value", "stderr", "gap"])
        if not self.quiet:
            self.display.show_value("limit", report.limit.real, report.limit.stderr)
            extrap = report.extrapolated
            self.display.show_value("extrapolated", extrap.value, extrap.stat + extrap.systematic)
        return self._result("converge", report.to_dict(), {"convergence": report}, rows)

    def _bound_check(self) -> CommandResult:
        opts = self.cfg.command("bound-check")
        graph, ladder = self._ladder(opts)
        if graph.order == 0:
            raise ConfigError("bound-check needs n >= 1")
        x1, v1 = self._point(opts)
        eps = [float(e) for e in opts["eps"]]
        if not eps or any(e <= 0 for e in eps):
            raise ConfigError(f"bound-check eps must be positive, got {eps}")
        b = self.cfg.budgets
        report = uniform_bound_check(graph, ladder, opts["s"], self.f0, self.cs, x1=x1, v1=v1, eps_ladder=eps,
                                     rule=b.rule, samples=b.samples, seed=self.cfg.seed, max_nodes=b.max_nodes,
                                     sigmas=self.cfg.tolerances.sigmas)
        rows = report.rows()
        if not self.quiet:
            self.display.show_section(f"n={graph.order}, eps={', '.join(f'{e:g}' for e in eps)}")
        self._show_rows(rows, ["s", "value", "envelope", "eps_max", "majorant"])
        return self._result("bound-check", report.to_dict(), {"bound": report}, rows)

    def _delta_check(self) -> CommandResult:
        opts = self.cfg.command("delta-check")
        tol = self.cfg.tolerances
        vpde = mollified_delta_check(ladder=opts["ladder"], headline_T=float(opts["headline_T"]),
                                     tolerance=tol.delta)
        rows = [{"T": T, "error": e} for T, e in zip(vpde.ladder, vpde.errors_by_T)]
        self._show_rows(rows, ["T", "error"])
        checks = {"dirichlet": vpde}
        results = {"dirichlet": vpde.to_dict()}
        d = self.cfg.dimension
        if d >= 2:
            w = np.zeros(d)
            w[0] = 1.0
            if opts.get("w") is not None:
                w = np.asarray(opts["w"], dtype=float)
            center = 0.25 * np.ones(d)
            gamma = lambda eta: np.exp(-0.5 * np.sum((eta - center) ** 2, axis=-1))
            reduction = delta_mollification_check(gamma, w, opts["widths"], tolerance=tol.mollification)
            checks["reduction"] = reduction
            results["reduction"] = reduction.to_dict()
        return self._result("delta-check", results, checks, rows)

    def _oracle_compare(self) -> CommandResult:
        opts = self.cfg.command("oracle-compare")
        if self.cfg.dimension != 1:
            raise ConfigError("oracle-compare runs in one dimension")
        eps = float(opts["eps"])
        if eps <= 0:
            raise ConfigError(f"oracle-compare eps must be positive, got {eps}")
        with _options("oracle-compare"):
            ladder = TimeLadder(float(opts["t"]), (float(opts["t1"]),))
        x1, v1 = self._point(opts)
        graph = Graph((1,))
        fourier = eval_T_eps_term(graph, ladder, eps, self.f0, self.cs, x1, v1, rule="tensor")
        direct = direct_T_eps_n1(ladder, eps, self.f0, self.cs, x1, v1)
        gap = abs(fourier.real - direct.real)
        scale = max(abs(direct.real), 1e-300)
        allowed = self.cfg.tolerances.oracle * scale + self.cfg.tolerances.sigmas * float(
            np.hypot(fourier.stderr, direct.stderr))
        check = _Check()
        if gap > allowed:
            check.fail(f"Fourier side {fourier.real:.6g} vs direct {direct.real:.6g} (gap {gap:.3g} > {allowed:.3g})")
        if not self.quiet:
            self.display.show_value("Fourier side", fourier.real, fourier.stderr)
            self.display.show_value("direct", direct.real, direct.stderr)
        results = {"eps": eps, "fourier": fourier.to_dict(), "direct": direct.to_dict(),
                   "gap": gap, "relative_gap": gap / scale, "allowed": allowed}
        return self._result("oracle-compare", results, {"oracle": check})


@dataclass
class _Check:
    passed: bool = True
    errors: List[str] = field(default_factory=list)

    def fail(self, message: str):
        self.passed = False
        self.errors.append(message)


def _direction_grid(dimension: int, grid: int):
    """Unit directions on a polar x azimuth grid; the polar axis is the last coordinate."""
    if grid < 2:
        raise ConfigError(f"cross-section grid must be >= 2, got {grid}")
    azimuth = np.linspace(0.0, 2.0 * np.pi, grid, endpoint=False)
    if dimension == 2:
        polar = np.full(grid, 0.5 * np.pi)
        omegas = np.stack([np.cos(azimuth), np.sin(azimuth)], axis=-1)
        return polar, azimuth, omegas
    theta, phi = np.meshgrid(np.linspace(0.0, np.pi, grid), azimuth, indexing="ij")
    theta, phi = theta.ravel(), phi.ravel()
    omegas = np.zeros((theta.size, dimension))
    omegas[:, 0] = np.sin(theta) * np.cos(phi)
    omegas[:, 1] = np.sin(theta) * np.sin(phi)
    omegas[:, -1] = np.cos(theta)
    return theta, phi, omegas
