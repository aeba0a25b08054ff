"""Weighted nonlinear least squares for extracting OD triples from spectra.

The minimizer is Levenberg-Marquardt with a central-difference Jacobian and
box bounds enforced by step projection; accepted iterations never increase
the objective. A derivative-free simplex fallback is selectable by option.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    DegenerateFitError,
    DomainError,
    NotConvergedError,
    TooFewReplicatesWarning,
    ValidationError,
)
from .spectra import SpectrumModel, transmission_spectrum

_LAMBDA_MAX = 1e15


@dataclass(frozen=True)
class FitOptions:
    method: str = "lm"  # "lm" or "simplex"
    max_iterations: int = 200
    ftol: float = 1e-10  # relative objective decrease
    xtol: float = 1e-8  # relative parameter step
    jacobian_rel_step: float = 1e-6
    chi2_rescale: bool = True
    lambda0: float = 1e-3

    def __post_init__(self):
        if self.method not in ("lm", "simplex"):
            raise ValidationError(f"unknown fit method '{self.method}'")


@dataclass(frozen=True, eq=False)
class FitProblem:
    """Spectrum fit: observed = amplitude * T(detuning; theta).

    The parameter vector is [od per line..., linewidth_fwhm_hz,
    frequency_offset_hz, amplitude]; `free` masks which entries float.
    """

    detunings_hz: np.ndarray
    observed: np.ndarray
    weights: np.ndarray
    template: SpectrumModel
    amplitude: float = 1.0
    free: tuple[str, ...] = ()
    bounds: np.ndarray | None = None  # (n_params, 2), resolved in __post_init__
    initial_guess: np.ndarray | None = None

    def __post_init__(self):
        d = np.asarray(self.detunings_hz, dtype=float)
        y = np.asarray(self.observed, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "detunings_hz", d)
        object.__setattr__(self, "observed", y)
        object.__setattr__(self, "weights", w)
        if not (d.size == y.size == w.size):
            raise ValidationError("data arrays must have equal length")
        if np.any(w <= 0):
            raise ValidationError("weights must be positive")
        names = self.parameter_names
        unknown = [f for f in self.free if f not in names]
        if unknown:
            raise ValidationError(f"unknown free parameters {unknown}")
        if len(self.free) == 0:
            raise ValidationError("need at least one free parameter")
        if d.size < len(self.free):
            raise ValidationError(
                f"{d.size} data points cannot constrain {len(self.free)} parameters"
            )
        bounds = self._default_bounds() if self.bounds is None else np.asarray(
            self.bounds, dtype=float
        )
        if bounds.shape != (len(names), 2):
            raise ValidationError(f"bounds must have shape ({len(names)}, 2)")
        object.__setattr__(self, "bounds", bounds)
        x0 = (
            self.full_vector()
            if self.initial_guess is None
            else np.asarray(self.initial_guess, dtype=float)
        )
        if x0.size != len(names):
            raise ValidationError("initial_guess length must match parameter count")
        if np.any(x0 < bounds[:, 0]) or np.any(x0 > bounds[:, 1]):
            raise ValidationError("initial guess violates bounds")
        object.__setattr__(self, "initial_guess", x0)

    @property
    def parameter_names(self) -> tuple[str, ...]:
        return tuple(
            [f"od_f{line.excited_f}" for line in self.template.lines]
            + ["linewidth_fwhm_hz", "frequency_offset_hz", "amplitude"]
        )

    @property
    def free_mask(self) -> np.ndarray:
        names = self.parameter_names
        return np.array([n in self.free for n in names])

    def full_vector(self) -> np.ndarray:
        return np.array(
            [line.od for line in self.template.lines]
            + [
                self.template.linewidth_fwhm_hz,
                self.template.frequency_offset_hz,
                self.amplitude,
            ]
        )

    def _default_bounds(self) -> np.ndarray:
        n_lines = len(self.template.lines)
        rows = [[0.0, np.inf]] * n_lines
        rows.append([1e-3 * self.template.linewidth_fwhm_hz, np.inf])
        rows.append([-np.inf, np.inf])
        rows.append([0.0, np.inf])
        return np.array(rows)

    def model(self, x: np.ndarray) -> np.ndarray:
        n_lines = len(self.template.lines)
        lines = tuple(
            replace(line, od=x[i]) for i, line in enumerate(self.template.lines)
        )
        model = SpectrumModel(
            lines=lines,
            linewidth_fwhm_hz=x[n_lines],
            frequency_offset_hz=x[n_lines + 1],
        )
        return x[n_lines + 2] * transmission_spectrum(model, self.detunings_hz)

    def residuals(self, x: np.ndarray) -> np.ndarray:
        """Weighted residuals sqrt(w) * (y - model)."""
        return np.sqrt(self.weights) * (self.observed - self.model(x))

    def cost(self, x: np.ndarray) -> float:
        r = self.residuals(x)
        return float(r @ r)


@dataclass(frozen=True, eq=False)
class FitResult:
    best_fit: np.ndarray
    parameter_names: tuple[str, ...]
    free_mask: np.ndarray
    covariance: np.ndarray  # over free parameters, row/col order = free order
    reduced_chi2: float
    n_iterations: int
    converged: bool
    residuals: np.ndarray  # data space: observed - model
    cost_history: np.ndarray  # objective at accepted iterations
    problem: FitProblem
    options: FitOptions

    def parameter(self, name: str) -> float:
        return float(self.best_fit[self.parameter_names.index(name)])

    def stderr(self, name: str) -> float:
        free_names = [n for n, f in zip(self.parameter_names, self.free_mask) if f]
        if name not in free_names:
            return 0.0
        i = free_names.index(name)
        return float(math.sqrt(max(self.covariance[i, i], 0.0)))

    def payload(self) -> dict:
        free_names = [n for n, f in zip(self.parameter_names, self.free_mask) if f]
        return {
            "parameter_names": list(self.parameter_names),
            "best_fit": self.best_fit.tolist(),
            "free_parameters": free_names,
            "stderr": {n: self.stderr(n) for n in free_names},
            "covariance": self.covariance.tolist(),
            "reduced_chi2": self.reduced_chi2,
            "n_iterations": self.n_iterations,
            "converged": self.converged,
            "residuals": self.residuals.tolist(),
        }


def poisson_weights(counts) -> np.ndarray:
    """Default weights for count data: w = 1 / max(count, 1)."""
    counts = np.asarray(counts, dtype=float)
    return 1.0 / np.maximum(counts, 1.0)


def default_initial_guess(problem: FitProblem) -> np.ndarray:
    """ODs proportional to the template line ratios, scaled so the strongest
    line reproduces the observed half-transmission half-width through the
    analytic single-line inversion od = ln2 * (1 + (2 d/Gamma)^2)."""
    x = problem.full_vector().copy()
    n_lines = len(problem.template.lines)
    props = np.array([line.od for line in problem.template.lines], dtype=float)
    if not np.any(props > 0):
        props = np.ones(n_lines)
    props = props / props.max()
    k = int(np.argmax(props))
    center = (
        problem.template.lines[k].center_detuning_hz
        + problem.template.frequency_offset_hz
    )
    amp = problem.amplitude
    gamma = problem.template.linewidth_fwhm_hz
    low = problem.observed < 0.5 * amp
    if np.any(low):
        d_half = float(np.max(np.abs(problem.detunings_hz[low] - center)))
        od_strong = math.log(2.0) * (1.0 + (2.0 * d_half / gamma) ** 2)
    else:
        floor = max(float(np.min(problem.observed)) / amp, 1e-6) if amp > 0 else 1.0
        od_strong = max(-math.log(floor), math.log(2.0))
    x[:n_lines] = props * od_strong
    lo, hi = problem.bounds[:, 0], problem.bounds[:, 1]
    return np.clip(x, lo, hi)


def _parameter_scales(problem: FitProblem, x0: np.ndarray) -> np.ndarray:
    n_lines = len(problem.template.lines)
    gamma = problem.template.linewidth_fwhm_hz
    scales = np.empty(x0.size)
    scales[:n_lines] = np.maximum(np.abs(x0[:n_lines]), 1.0)
    scales[n_lines] = max(abs(x0[n_lines]), gamma)
    scales[n_lines + 1] = max(abs(x0[n_lines + 1]), gamma)
    scales[n_lines + 2] = max(abs(x0[n_lines + 2]), 1.0)
    return scales


def _check_degenerate_centers(problem: FitProblem):
    gamma = problem.template.linewidth_fwhm_hz
    lines = problem.template.lines
    free = problem.free
    for i in range(len(lines)):
        for j in range(i + 1, len(lines)):
            close = abs(
                lines[i].center_detuning_hz - lines[j].center_detuning_hz
            ) < 0.01 * gamma
            both_matter = (f"od_f{lines[i].excited_f}" in free) or (
                f"od_f{lines[j].excited_f}" in free
            )
            if close and both_matter:
                raise DegenerateFitError(
                    f"lines F'={lines[i].excited_f} and F'={lines[j].excited_f} "
                    f"coincide within 1% of the linewidth; their ODs are not "
                    f"separately identifiable",
                    parameter=f"od_f{lines[j].excited_f}",
                )


def _jacobian(problem, x, free_idx, scales, rel_step):
    """Central-difference Jacobian of the weighted residuals w.r.t. the free
    parameters, with evaluation points projected into bounds."""
    lo, hi = problem.bounds[:, 0], problem.bounds[:, 1]
    cols = []
    for j in free_idx:
        h = rel_step * max(abs(x[j]), scales[j])
        up = min(x[j] + h, hi[j])
        dn = max(x[j] - h, lo[j])
        if up == dn:
            raise DegenerateFitError(
                f"parameter '{problem.parameter_names[j]}' is pinned by its bounds",
                parameter=problem.parameter_names[j],
            )
        xu = x.copy()
        xu[j] = up
        xd = x.copy()
        xd[j] = dn
        cols.append((problem.residuals(xu) - problem.residuals(xd)) / (up - dn))
    # residual = sqrt(w)(y - f); J columns are d(residual)/d(theta)
    return np.column_stack(cols)


def _solve_lm(a, g, lam, problem, free_idx):
    d = np.diag(a).copy()
    bad = np.nonzero(d <= 0.0)[0]
    if bad.size:
        name = problem.parameter_names[free_idx[bad[0]]]
        raise DegenerateFitError(
            f"normal equations are singular: parameter '{name}' has no "
            f"influence on the model over the data",
            parameter=name,
        )
    try:
        return np.linalg.solve(a + lam * np.diag(d), -g)
    except np.linalg.LinAlgError:
        j = int(np.argmin(d))
        name = problem.parameter_names[free_idx[j]]
        raise DegenerateFitError(
            f"normal equations are singular near parameter '{name}'",
            parameter=name,
        ) from None


def _fit_lm(problem: FitProblem, options: FitOptions):
    lo, hi = problem.bounds[:, 0], problem.bounds[:, 1]
    free_idx = np.nonzero(problem.free_mask)[0]
    x = np.clip(problem.initial_guess.copy(), lo, hi)
    scales = _parameter_scales(problem, x)
    cost = problem.cost(x)
    history = [cost]
    lam = options.lambda0
    converged = False
    n_iter = 0
    while n_iter < options.max_iterations and not converged:
        n_iter += 1
        jac = _jacobian(problem, x, free_idx, scales, options.jacobian_rel_step)
        r = problem.residuals(x)
        a = jac.T @ jac
        g = jac.T @ r
        accepted = False
        while not accepted:
            step = _solve_lm(a, g, lam, problem, free_idx)
            x_new = x.copy()
            x_new[free_idx] = np.clip(x[free_idx] + step, lo[free_idx], hi[free_idx])
            cost_new = problem.cost(x_new)
            if cost_new < cost:
                actual = np.abs(x_new[free_idx] - x[free_idx])
                rel_step_size = float(
                    np.max(actual / np.maximum(np.abs(x[free_idx]), scales[free_idx]))
                )
                rel_decrease = (cost - cost_new) / max(cost, 1e-300)
                x = x_new
                cost = cost_new
                history.append(cost)
                lam = max(lam * 0.1, 1e-12)
                accepted = True
                if rel_decrease < options.ftol or rel_step_size < options.xtol:
                    converged = True
            else:
                lam *= 10.0
                if lam > _LAMBDA_MAX:
                    # no downhill step exists at numerical resolution
                    converged = True
                    accepted = True
    return x, cost, np.array(history), n_iter, converged


def _fit_simplex(problem: FitProblem, options: FitOptions):
    from scipy.optimize import minimize

    free_idx = np.nonzero(problem.free_mask)[0]
    lo, hi = problem.bounds[:, 0], problem.bounds[:, 1]
    x = np.clip(problem.initial_guess.copy(), lo, hi)
    history = [problem.cost(x)]

    def objective(xf):
        full = x.copy()
        full[free_idx] = xf
        return problem.cost(full)

    res = minimize(
        objective,
        x[free_idx],
        method="Nelder-Mead",
        bounds=[(lo[i], hi[i]) for i in free_idx],
        options={
            "maxiter": options.max_iterations * 50,
            "fatol": options.ftol,
            "xatol": options.xtol,
        },
    )
    x_best = x.copy()
    x_best[free_idx] = res.x
    cost = problem.cost(x_best)
    history.append(cost)
    return x_best, cost, np.array(history), int(res.nit), bool(res.success)


def _covariance(problem, options, x, cost, free_idx, scales):
    jac = _jacobian(problem, x, free_idx, scales, options.jacobian_rel_step)
    a = jac.T @ jac
    dof = max(problem.detunings_hz.size - free_idx.size, 1)
    chi2_red = cost / dof
    try:
        cov = np.linalg.inv(a)
    except np.linalg.LinAlgError:
        j = int(np.argmin(np.diag(a)))
        name = problem.parameter_names[free_idx[j]]
        raise DegenerateFitError(
            f"covariance is singular near parameter '{name}'", parameter=name
        ) from None
    if options.chi2_rescale:
        cov = cov * chi2_red
    return 0.5 * (cov + cov.T), chi2_red


def fit_spectrum(problem: FitProblem, options: FitOptions | None = None) -> FitResult:
    """Minimize sum_i w_i (y_i - amplitude * T(d_i; theta))^2 over the free
    parameters. Deterministic given problem and options."""
    options = options or FitOptions()
    _check_degenerate_centers(problem)
    if options.method == "lm":
        x, cost, history, n_iter, converged = _fit_lm(problem, options)
    else:
        x, cost, history, n_iter, converged = _fit_simplex(problem, options)
    free_idx = np.nonzero(problem.free_mask)[0]
    scales = _parameter_scales(problem, problem.initial_guess)
    cov, chi2_red = _covariance(problem, options, x, cost, free_idx, scales)
    return FitResult(
        best_fit=x,
        parameter_names=problem.parameter_names,
        free_mask=problem.free_mask,
        covariance=cov,
        reduced_chi2=chi2_red,
        n_iterations=n_iter,
        converged=converged,
        residuals=problem.observed - problem.model(x),
        cost_history=history,
        problem=problem,
        options=options,
    )


def estimate_uncertainties(
    result: FitResult,
    method: str = "covariance",
    n: int = 200,
    seed: int = 0,
) -> np.ndarray:
    """Per-free-parameter standard errors.

    "covariance": from the inverse weighted normal matrix (chi^2-rescaled per
    the fit options). "bootstrap": refit n datasets resampled with
    replacement and report the replicate standard deviation (deterministic
    in the seed).
    """
    if not result.converged:
        raise NotConvergedError(
            "refusing to estimate uncertainties from a non-converged fit"
        )
    if method == "covariance":
        return np.sqrt(np.clip(np.diag(result.covariance), 0.0, None))
    if method != "bootstrap":
        raise DomainError(f"unknown uncertainty method '{method}'")
    if n < 1:
        raise DomainError("bootstrap needs n >= 1 replicates")
    if n < 2:
        warnings.warn(
            "bootstrap with a single replicate reports zero spread",
            TooFewReplicatesWarning,
        )
    problem = result.problem
    rng = np.random.default_rng(seed)
    free_idx = np.nonzero(problem.free_mask)[0]
    replicates = np.empty((n, free_idx.size))
    m = problem.detunings_hz.size
    for k in range(n):
        pick = rng.integers(0, m, size=m)
        resampled = FitProblem(
            detunings_hz=problem.detunings_hz[pick],
            observed=problem.observed[pick],
            weights=problem.weights[pick],
            template=problem.template,
            amplitude=problem.amplitude,
            free=problem.free,
            bounds=problem.bounds,
            initial_guess=result.best_fit,
        )
        fit = fit_spectrum(resampled, result.options)
        replicates[k] = fit.best_fit[free_idx]
    if n == 1:
        return np.zeros(free_idx.size)
    return np.std(replicates, axis=0, ddof=1)


def profile_objective(
    problem: FitProblem,
    parameter: str | int,
    grid,
    options: FitOptions | None = None,
) -> np.ndarray:
    """Objective along a 1-D slice: the named parameter is pinned at each
    grid value while all other free parameters are re-optimized."""
    options = options or FitOptions()
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        return np.array([])
    names = problem.parameter_names
    if isinstance(parameter, str):
        if parameter not in names:
            raise ValidationError(f"unknown parameter '{parameter}'")
        index = names.index(parameter)
    else:
        index = int(parameter)
        if not 0 <= index < len(names):
            raise ValidationError(f"parameter index {index} out of range")
        parameter = names[index]
    others = tuple(f for f in problem.free if f != parameter)
    values = np.empty(grid.size)
    for k, value in enumerate(grid):
        x0 = problem.initial_guess.copy()
        x0[index] = value
        bounds = problem.bounds.copy()
        bounds[index] = [value, value]
        if others:
            pinned = FitProblem(
                detunings_hz=problem.detunings_hz,
                observed=problem.observed,
                weights=problem.weights,
                template=problem.template,
                amplitude=problem.amplitude,
                free=others,
                bounds=bounds,
                initial_guess=x0,
            )
            fit = fit_spectrum(pinned, options)
            values[k] = fit.cost_history[-1]
        else:
            values[k] = problem.cost(x0)
    return values
