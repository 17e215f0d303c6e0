""" Geodesic boundary-value problem: distance, minimizers, midpoints, cut times """
import logging
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np
from scipy.optimize import least_squares

from subheat.abc import SRModel
from subheat.errors import NoSolutionError, ProbeError, SubheatError
from subheat.flow import exp_jacobian, exp_map, first_conjugate_time, integrate
from subheat.types import GeodesicSolution, InitialCovector, MidpointSet, ShootOptions
from subheat.workers import map_parallel

MINIMIZING_BAND = 1e-6
OPTIMALITY_RTOL = 1e-7
SCAN_TOL = 1e-8
TIE_FACTOR = 1.05
FAMILY_RTOL = 1e-6

Guess = Tuple[np.ndarray, float]


class Shooter:
    """ Multi-start shooting solver bound to one model

    Each start on Lambda_x is scanned over a T grid, the best starts are
    refined by Levenberg-Marquardt on (params, T) and the converged
    geodesics are deduplicated in (p0, T).
    """

    def __init__(self, model: SRModel, options: ShootOptions = None, logger: logging.Logger = None):
        self.model = model
        self.options = options or ShootOptions()
        self.__logger = logger or logging.root

    @property
    def logger(self) -> logging.Logger:
        """ Logger """
        return self.__logger

    @property
    def _closed(self) -> bool:
        return type(self.model).closed_form is not SRModel.closed_form

    def endpoint(self, x, params, t) -> np.ndarray:
        if self._closed:
            return np.asarray(self.model.closed_form(x, params, t), dtype=float)
        p0 = InitialCovector.from_params(self.model, x, params)
        return exp_map(self.model, x, p0, t, self.options.flow_tol).endpoint

    def _accept_tol(self) -> float:
        if self._closed:
            return self.options.newton_tol
        return max(self.options.newton_tol, 10 * self.options.flow_tol)

    @staticmethod
    def time_grid(x, y, n_scan: int) -> np.ndarray:
        gap = float(np.linalg.norm(np.asarray(y) - np.asarray(x)))
        rho = max(gap, 2.0 * np.sqrt(gap))
        return np.linspace(0.25 * rho, 4.0 * rho, n_scan)

    def _scan(self, x, y, params, times) -> Tuple[float, float]:
        """ Best (residual, T) of one start over the T grid """
        if self._closed:
            ends = np.array([self.model.closed_form(x, params, t) for t in times])
        else:
            p0 = self.model.covector(x, params)
            try:
                sol = integrate(self.model, x, p0, times[-1], SCAN_TOL)
            except SubheatError:
                return float('inf'), float(times[0])
            ends = sol.sol(times)[:self.model.n].T
        res = np.linalg.norm(ends - y, axis=1)
        j = int(np.argmin(res))
        return float(res[j]), float(times[j])

    def _refine(self, x, y, params, T) -> GeodesicSolution | None:
        model = self.model
        k = len(params)

        def residual(v):
            return self.endpoint(x, v[:k], v[k]) - y

        if self._closed:
            jac = '2-point'
        else:
            def jac(v):
                p0 = InitialCovector.from_params(model, x, v[:k])
                return exp_jacobian(model, x, p0, v[k], self.options.flow_tol)

        try:
            fit = least_squares(residual, np.append(params, T), jac=jac, method='lm',
                                xtol=1e-15, ftol=1e-15, gtol=1e-15,
                                max_nfev=self.options.newton_max_iter * (k + 2))
        except (SubheatError, ValueError, FloatingPointError) as exc:
            self.logger.debug(f"Refinement from {params} failed: {exc}")
            return None
        v = fit.x
        res = float(np.linalg.norm(fit.fun))
        if not np.isfinite(res) or res > self._accept_tol() or abs(v[k]) < 1e-12:
            return None
        p0 = InitialCovector.from_params(model, x, v[:k])
        T = float(v[k])
        if T < 0:
            p0 = InitialCovector.from_covector(model, x, -p0.p0)
            T = -T
        return GeodesicSolution(p0=p0, T=T, residual=res)

    def _dedup(self, solutions: Iterable[GeodesicSolution]) -> List[GeodesicSolution]:
        kept: List[GeodesicSolution] = []
        keys: List[np.ndarray] = []
        for sol in sorted(solutions, key=lambda s: s.residual):
            key = np.append(sol.p0.p0, sol.T)
            if all(np.linalg.norm(key - other) > self.options.cluster_radius for other in keys):
                kept.append(sol)
                keys.append(key)
        return sorted(kept, key=lambda s: s.T)

    def _scan_families(self, scans: Sequence[Tuple[float, float]]) -> List[List[int]]:
        """ Starts grouped by scan signature, best family first

        Starts related by a symmetry of the target share their best (residual, T).
        """
        order = np.argsort([r for r, _ in scans], kind='stable')
        families: List[List[int]] = []
        last: Dict[float, List[int]] = {}
        for i in order:
            r, T = scans[i]
            family = last.get(T)
            if family and abs(r - scans[family[0]][0]) <= FAMILY_RTOL * max(abs(scans[family[0]][0]), 1e-12):
                family.append(int(i))
                continue
            last[T] = [int(i)]
            families.append(last[T])
        return families

    def solve(self, x, y, n_start: int | None = None, guesses: Sequence[Guess] = (),
              multistart: bool = True) -> List[GeodesicSolution]:
        """ All converged, deduplicated geodesics from x to y, sorted by length

        `guesses` are (params, T) pairs refined before the multi-start; with
        `multistart` False the grid is only used when no guess converges.
        One representative per scan family is refined; the remaining members
        of the families reaching the shortest length are refined afterwards.
        """
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        opts = self.options
        found = [s for s in (self._refine(x, y, np.asarray(p, dtype=float), T) for p, T in guesses) if s]
        if found and not multistart:
            return self._dedup(found)
        n_start = n_start or opts.n_start
        scale = max(float(np.linalg.norm(y - x)), 2.0 * np.sqrt(np.linalg.norm(y - x)))
        starts = self.model.start_params(x, n_start, scale, opts.seed)
        times = self.time_grid(x, y, opts.n_scan)
        scans = map_parallel(lambda s: self._scan(x, y, s, times), starts)
        families = self._scan_families(scans)
        best = scans[families[0][0]][0]
        cutoff = scans[families[min(opts.n_refine, len(families)) - 1][0]][0] * TIE_FACTOR
        chosen = [f for rank, f in enumerate(families) if rank < opts.n_refine or scans[f[0]][0] <= cutoff]
        self.logger.debug(f"Refining {len(chosen)} of {len(families)} scan families, best scan residual {best:.3g}")
        heads = map_parallel(lambda f: self._refine(x, y, starts[f[0]], scans[f[0]][1]), chosen)
        found += [s for s in heads if s]
        if not found:
            raise NoSolutionError(f"No shooting start converged from {x.tolist()} to {y.tolist()}",
                                  best_residual=float(best))
        shortest = min(s.T for s in found)
        members = [i for f, head in zip(chosen, heads)
                   if head and head.T <= shortest + MINIMIZING_BAND for i in f[1:]]
        if members:
            self.logger.debug(f"Refining {len(members)} further starts of the shortest families")
            rest = map_parallel(lambda i: self._refine(x, y, starts[i], scans[i][1]), members)
            found += [s for s in rest if s]
        return self._dedup(found)

    def distance(self, x, y, n_start: int | None = None, guesses: Sequence[Guess] = (),
                 multistart: bool = True, check_conjugate: bool = False) -> Tuple[float, List[GeodesicSolution]]:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if np.array_equal(x, y):
            return 0.0, []
        solutions = self.solve(x, y, n_start, guesses, multistart)
        d = solutions[0].T
        for sol in solutions:
            sol.is_minimizing = sol.T <= d + MINIMIZING_BAND
        if check_conjugate:
            minimizers = [s for s in solutions if s.is_minimizing]
            flags = map_parallel(lambda s: first_conjugate_time(
                self.model, x, s.p0, s.T * (1 + 1e-4), self.options.flow_tol) is not None, minimizers)
            for sol, flag in zip(minimizers, flags):
                sol.conjugate_at_or_before_T = flag
        self.logger.debug(f"d({x.tolist()}, {y.tolist()}) = {d:.12g} with {len(solutions)} geodesics")
        return d, solutions

    def midpoints(self, x, y) -> MidpointSet:
        """ Midpoints of the minimizers, with a continuum test on a densified start grid

        Both runs are merged before the length cut, so the densified grid can
        only add minimizers of the shortest length, never replace them.
        """
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        _, solutions = self.distance(x, y)
        first = sum(s.is_minimizing for s in solutions)
        _, dense = self.distance(x, y, n_start=2 * self.options.n_start)
        merged = self._dedup(solutions + dense)
        d = merged[0].T
        minimizers = [s for s in merged if s.T <= d + MINIMIZING_BAND]
        for sol in merged:
            sol.is_minimizing = sol.T <= d + MINIMIZING_BAND
        points = self._midpoints_of(x, minimizers)
        dim = 0
        if len(minimizers) > first and len(minimizers) > 2:
            dim = max(1, local_dimension(points))
        self.logger.debug(f"{len(minimizers)} minimizers of length {d:.12g}, midpoint set dimension {dim}")
        return MidpointSet(points=points, dim_estimate=dim, solutions=minimizers)

    def _midpoints_of(self, x, solutions) -> np.ndarray:
        return np.array([self.endpoint(x, s.p0.params, s.T / 2) for s in solutions])

    def cut_time(self, x, p0: InitialCovector, t_max: float, resolution: float = 1e-4) -> float | None:
        """ Last time the geodesic is minimizing, by bisection on the distance oracle

        The search is capped by the first conjugate time, after which no
        normal geodesic minimizes.
        """
        x = np.asarray(x, dtype=float)
        con = first_conjugate_time(self.model, x, p0, t_max, self.options.flow_tol)
        hi = con.time if con else t_max

        def optimal(t):
            y = self.endpoint(x, p0.params, t)
            try:
                d, _ = self.distance(x, y, guesses=[(p0.params, t)])
            except SubheatError as exc:
                raise ProbeError(f"Distance failed while probing t={t:.8g}", probe=t) from exc
            return t <= d + OPTIMALITY_RTOL * max(1.0, t)

        if optimal(hi):
            return hi if con else None
        lo = 0.0
        while hi - lo > resolution * t_max:
            mid = 0.5 * (lo + hi)
            if optimal(mid):
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)


def local_dimension(points: np.ndarray, neighbours: int = 5, rtol: float = 0.25) -> int:
    """ Median rank of local PCA over nearest-neighbour patches """
    points = np.asarray(points, dtype=float)
    if len(points) < 3:
        return 0
    k = min(neighbours, len(points) - 1)
    dims = []
    for z in points:
        gaps = np.linalg.norm(points - z, axis=1)
        patch = points[np.argsort(gaps)[1:k + 1]] - z
        sv = np.linalg.svd(patch, compute_uv=False)
        dims.append(int(np.sum(sv > rtol * sv[0])) if sv[0] > 0 else 0)
    return int(np.median(dims))


def distance(model: SRModel, x, y, opts: ShootOptions = None) -> Tuple[float, List[GeodesicSolution]]:
    return Shooter(model, opts).distance(x, y, check_conjugate=True)


def midpoints(model: SRModel, x, y, opts: ShootOptions = None) -> MidpointSet:
    return Shooter(model, opts).midpoints(x, y)


def cut_time(model: SRModel, x, p0: InitialCovector, t_max: float, opts: ShootOptions = None) -> float | None:
    return Shooter(model, opts).cut_time(x, p0, t_max)
