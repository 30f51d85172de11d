"""Command-line experiment driver.

    choquardlab <subcommand> --config run.toml [--outdir DIR] [--seed N] [--jobs N] [--m-override M]

Each run writes ``<outdir>/<name>/manifest.json``, ``result.csv`` and
``report.json``. Exit status is 0 when every asserted invariant holds, 1 when
one fails (the invariant is named in the log and the report) and 2 for
configuration or parameter errors.
"""
#%%
import argparse
import logging
import sys
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
import regex

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from choquardlab import __version__
from choquardlab.choquard import (bubble_energy_estimate, compute_exponents, hls_constant_estimate,
                                  sobolev_bubble_norms)
from choquardlab.geometry import Grid, Shape, boundary_patches, build_domain, is_strictly_star_shaped
from choquardlab.spectral import first_eigen_fractional, first_eigen_local, first_eigen_mixed
from choquardlab.utility_functions import (ConvergenceError, Logger, ParameterError, Stopwatch,
                                           get_git_describe, write_csv, write_json)
from choquardlab.variational import ProblemParams, VariationalProblem, check_power
from choquardlab.verify import (OracleSuite, bubble_limit_experiment, hls_ratio_of_bubble, infimum_trend,
                                lemma45_asymptotics, lemma45_dimension_condition, manufactured_local_check,
                                nonexistence_criterion, pohozaev_terms, scaling_experiment)

logger = logging.getLogger(__name__)

#%%
SUBCOMMANDS = ('eig', 'quotient-scan', 'infimum-trend', 'mountain-pass', 'pohozaev', 'scaling', 'bubble-limit',
               'lemma45', 'hls-constant', 'oracles')

DEFAULT_TOLERANCES = {
    'eig_residual': 1e-8,
    'eig_refinement_drift': 0.05,
    'quotient_el_residual': 1e-5,
    'plateau_floor': 1e-6,
    'mountain_pass_gradient': 1e-6,
    'weak_form': 1e-5,
    'pohozaev_final': 0.10,
    'manufactured_order': 1.0,
    'scaling_local': 0.02,
    'scaling_fractional': 0.03,
    'bubble_exponent': 0.10,
    'bubble_limit': 0.05,
    'lemma45_exponent': 0.15,
    'lemma45_limit': 0.05,
    **{f'oracle_{key}': value for key, value in OracleSuite.TOLERANCES.items()},
}

# keys each subcommand needs, as (table, key)
REQUIRED = {
    'eig': [('params', 'n'), ('params', 's'), ('grid', 'L'), ('grid', 'm'), ('domain', 'kind')],
    'quotient-scan': [('params', 'n'), ('params', 's'), ('params', 'mu'), ('grid', 'L'), ('grid', 'm'),
                      ('domain', 'kind')],
    'infimum-trend': [('params', 'n'), ('params', 's'), ('params', 'mu'), ('grid', 'L'), ('grid', 'm'),
                      ('domain', 'kind')],
    'mountain-pass': [('params', 'n'), ('params', 's'), ('params', 'mu'), ('params', 'p'), ('params', 'lambda'),
                      ('grid', 'L'), ('grid', 'm'), ('domain', 'kind')],
    'pohozaev': [('params', 'n'), ('params', 's'), ('params', 'mu'), ('params', 'p'), ('params', 'lambda'),
                 ('grid', 'L'), ('grid', 'm'), ('domain', 'kind')],
    'scaling': [('params', 'n'), ('params', 's'), ('params', 'mu'), ('grid', 'L'), ('grid', 'm'),
                ('domain', 'kind')],
    'bubble-limit': [('params', 'n'), ('params', 's'), ('grid', 'L'), ('grid', 'm')],
    'lemma45': [('params', 'n'), ('params', 's'), ('params', 'mu'), ('params', 'p'), ('grid', 'L'), ('grid', 'm'),
                ('domain', 'kind')],
    'hls-constant': [('params', 'n'), ('params', 'mu')],
    'oracles': [],
}


class ConfigError(ParameterError):
    """Invalid run configuration; the message carries the file and line."""


#%%


@dataclass
class RunConfig:
    """Parsed and validated run configuration.

    Attributes:
        subcommand (str): The experiment to run.
        raw (dict): The TOML document as parsed, recorded in the manifest.
        tolerances (dict): DEFAULT_TOLERANCES merged with the [tolerances] table.
        grid (Grid): None when the experiment needs no domain grid.
        shape (Shape): None when the experiment needs no domain.
        outdir (str): Output root.
        seed (int): Seed for the randomised checks.
        workers (int): scipy.fft worker count."""

    subcommand: str
    raw: Dict
    tolerances: Dict[str, float]
    grid: Optional[Grid] = None
    shape: Optional[Shape] = None
    outdir: str = 'results'
    seed: int = 0
    workers: Optional[int] = None
    path: str = ''

    @property
    def params(self) -> Dict:
        return self.raw.get('params', {})

    @property
    def experiment(self) -> Dict:
        return self.raw.get('experiment', {})

    @property
    def name(self) -> str:
        return str(self.experiment.get('name', self.subcommand))

    def problem_params(self, lam=None, p=None) -> ProblemParams:
        params = self.params
        return ProblemParams(int(params['n']), float(params['s']), float(params['mu']),
                             float(params.get('p', 1.0) if p is None else p),
                             float(params.get('lambda', 0.0) if lam is None else lam))


def key_line(text, table, key):
    """Line number (1-based) of ``key`` inside ``[table]`` in TOML text, 0 if absent."""
    header = regex.search(rf'^[ \t]*\[[ \t]*{regex.escape(table)}[ \t]*\]', text, flags=regex.MULTILINE)
    if header is None:
        return 0
    start = header.end()
    following = regex.search(r'^[ \t]*\[', text[start:], flags=regex.MULTILINE)
    stop = start + following.start() if following else len(text)
    match = regex.search(rf'^[ \t]*{regex.escape(key)}[ \t]*=', text[start:stop], flags=regex.MULTILINE)
    offset = header.start() if match is None else start + match.start()
    return text[:offset].count('\n') + 1


def _config_error(path, text, table, key, message):
    line = key_line(text, table, key)
    location = f"{path}:{line}" if line else path
    return ConfigError(f"{location}: [{table}] {key}: {message}")


def load_config(path, subcommand, outdir=None, seed=None, jobs=None, m_override=None) -> RunConfig:
    """Read and validate a TOML run configuration before anything is allocated.

    Args:
        path (str): TOML file; None for subcommands that need no parameters.
        subcommand (str): One of SUBCOMMANDS.
        outdir (str, optional): Overrides ``[experiment].outdir``.
        seed (int, optional): Overrides ``[experiment].seed``.
        jobs (int, optional): scipy.fft workers.
        m_override (int, optional): Replaces ``[grid].m``.

    Returns:
        RunConfig: The validated configuration.

    Raises:
        ConfigError: With the file, line, table and key of the first problem."""
    text, raw = '', {}
    if path is not None:
        try:
            with open(path, 'rb') as infile:
                data = infile.read()
        except OSError as e:
            raise ConfigError(f"{path}: cannot read configuration ({e})")
        text = data.decode('utf-8')
        try:
            raw = tomllib.loads(text)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{path}: {e}")
    elif REQUIRED[subcommand]:
        raise ConfigError(f"subcommand '{subcommand}' needs --config")

    for table, key in REQUIRED[subcommand]:
        if key not in raw.get(table, {}):
            raise _config_error(path, text, table, key, "missing required key")
    if m_override is not None:
        raw.setdefault('grid', {})['m'] = int(m_override)

    unknown = set(raw.get('tolerances', {})) - set(DEFAULT_TOLERANCES)
    if unknown:
        key = sorted(unknown)[0]
        raise _config_error(path, text, 'tolerances', key, f"unknown tolerance (known: {sorted(DEFAULT_TOLERANCES)})")
    tolerances = {**DEFAULT_TOLERANCES, **{k: float(v) for k, v in raw.get('tolerances', {}).items()}}

    experiment = raw.get('experiment', {})
    config = RunConfig(subcommand, raw, tolerances,
                       outdir=outdir or experiment.get('outdir', 'results'),
                       seed=int(experiment.get('seed', 0) if seed is None else seed),
                       workers=jobs, path=path or '')
    _validate(config, text)
    return config


def _validate(config: RunConfig, text):
    path = config.path
    params = config.params

    def check(table, key, fn):
        try:
            return fn()
        except ParameterError as e:
            raise _config_error(path, text, table, key, str(e))
        except (KeyError, TypeError, ValueError) as e:
            raise _config_error(path, text, table, key, f"invalid value ({e})")

    if 'grid' in config.raw and {'L', 'm'} <= set(config.raw['grid']):
        grid = config.raw['grid']
        n = params.get('n', 1)
        config.grid = check('grid', 'm', lambda: Grid(int(n), float(grid['L']), int(grid['m'])))
    if 's' in params:
        check('params', 's', lambda: _fractional_order(params['s']))
    if 's_list' in config.experiment:
        check('experiment', 's_list', lambda: [_fractional_order(s) for s in config.experiment['s_list']])
    if 'mu' in params:
        check('params', 'mu', lambda: compute_exponents(int(params['n']), params['mu']))
    if 'p' in params and int(params.get('n', 0)) >= 3:
        strict = config.subcommand in ('mountain-pass', 'pohozaev', 'lemma45')
        check('params', 'p', lambda: check_power(int(params['n']), params['p'], strict_lower=strict))
    if 'lambda' in params:
        check('params', 'lambda', lambda: float(params['lambda']))
    if 'lambda_grid' in params:
        check('params', 'lambda_grid', lambda: _increasing(params['lambda_grid']))
    if 'domain' in config.raw:
        config.shape = check('domain', 'kind', lambda: Shape.from_dict(config.raw['domain']))
        if config.grid is not None:
            # clearance and non-emptiness are cheap shape/grid arithmetic
            check('domain', 'kind', lambda: config.shape.semi_axes(config.grid.n))
            reach = np.max(np.abs(np.asarray(config.shape.center or [0.0] * config.grid.n)) +
                           config.shape.semi_axes(config.grid.n))
            if config.grid.L - reach < 2.0 * config.grid.h - 1e-12 * config.grid.L:
                raise _config_error(path, text, 'domain', 'kind',
                                    f"shape reaches within 2h={2 * config.grid.h:.4g} of the box faces; "
                                    "enlarge [grid] L or refine m")


def _fractional_order(value):
    if not 0.0 < float(value) < 1.0:
        raise ParameterError(f"fractional order s={value} must lie in (0, 1)")
    return float(value)


def _increasing(values):
    values = [float(v) for v in values]
    if not values or any(b <= a for a, b in zip(values, values[1:])) or values[0] <= 0:
        raise ParameterError("lambda_grid must be positive and strictly increasing")
    return values


#%%


@dataclass
class Outcome:
    """What an experiment hands back to the driver."""

    table: pd.DataFrame
    report: Dict
    failures: List[str] = field(default_factory=list)

    def assert_that(self, name, condition, detail=''):
        self.report.setdefault('invariants', {})[name] = bool(condition)
        if not condition:
            self.failures.append(f"{name}{': ' + detail if detail else ''}")


def run_eig(config: RunConfig) -> Outcome:
    tol = config.tolerances
    s = float(config.params['s'])
    experiment = config.experiment
    rows = []
    outcome = Outcome(pd.DataFrame(), {})
    grids = [config.grid]
    if experiment.get('refine', False):
        grids.append(Grid(config.grid.n, config.grid.L, 2 * config.grid.m))
    values = {}
    for grid in grids:
        mask = build_domain(config.shape, grid)
        for label, solve in (('local', lambda: first_eigen_local(mask, tol['eig_residual'], workers=config.workers)),
                             ('fractional', lambda: first_eigen_fractional(mask, s, tol['eig_residual'],
                                                                           workers=config.workers)),
                             ('mixed', lambda: first_eigen_mixed(mask, s, tol['eig_residual'],
                                                                 workers=config.workers))):
            try:
                result = solve()
            except ConvergenceError as e:
                result = e.best
                outcome.assert_that(f'eig_residual[{label}, m={grid.m}]', False, str(e))
            rows.append({'m': grid.m, 'h': grid.h, **result.to_dict(),
                         'min_inside': float(np.min(result.eigenfield[mask.inside]))})
            values[(label, grid.m)] = result.eigenvalue
            outcome.assert_that(f'positivity[{label}, m={grid.m}]', rows[-1]['min_inside'] > 0.0)
        m = grid.m
        outcome.assert_that(f'superadditivity[m={m}]',
                            values[('mixed', m)] >= values[('local', m)] + values[('fractional', m)],
                            f"λ1={values[('mixed', m)]:.12g} < λloc+λs")
    if len(grids) == 2:
        m0, m1 = grids[0].m, grids[1].m
        for label in ('local', 'fractional', 'mixed'):
            drift = abs(values[(label, m1)] / values[(label, m0)] - 1.0)
            outcome.report[f'drift_{label}'] = drift
            outcome.assert_that(f'eig_refinement_drift[{label}]', drift <= tol['eig_refinement_drift'],
                                f"{drift:.3%}")
    outcome.table = pd.DataFrame(rows)
    outcome.report['eigenvalues'] = {f'{label}@{m}': v for (label, m), v in values.items()}
    return outcome


def run_quotient_scan(config: RunConfig) -> Outcome:
    tol = config.tolerances
    mask = build_domain(config.shape, config.grid)
    problem = VariationalProblem(mask, config.problem_params(lam=0.0, p=1.0), config.workers)
    lambda_1 = problem.eigen_mixed().eigenvalue
    if 'lambda_grid' in config.params:
        lams = [float(v) for v in config.params['lambda_grid']]
    else:
        fractions = config.experiment.get('lambda_fractions', list(np.linspace(0.125, 1.5, 12)))
        lams = [float(f) * lambda_1 for f in fractions]
    method = config.experiment.get('method', 'lbfgs')
    table, summary = problem.lambda_star_scan(lams, method=method, floor=tol['plateau_floor'],
                                              left_continuity=config.experiment.get('left_continuity', True),
                                              el_tol=tol['quotient_el_residual'])
    outcome = Outcome(table, {'summary': summary})
    unconverged = table.loc[~table['converged'], 'lambda'].tolist()
    if unconverged:
        logger.warning(f"Euler-Lagrange residual above {tol['quotient_el_residual']:g} at λ in {unconverged}")
    outcome.report['unconverged_lambdas'] = unconverged

    outcome.assert_that('non_increasing', summary['non_increasing'])
    lam_values = table['lambda'].to_numpy()
    S_values = table['S'].to_numpy()
    sign_ok = True
    for i, (lam, S) in enumerate(zip(lam_values, S_values)):
        # one grid step of slack on each side of λ1
        if i + 1 < len(lam_values) and lam_values[i + 1] < lambda_1 and S <= 0.0:
            sign_ok = False
        if i > 0 and lam_values[i - 1] > lambda_1 and S >= 0.0:
            sign_ok = False
    outcome.assert_that('sign_change', sign_ok)
    if np.any(lam_values <= summary['lambda_1s']):
        outcome.assert_that('plateau', summary['plateau_ok'])
    if summary['lambda_hat'] is not None:
        step = float(np.max(np.diff(lam_values))) if len(lam_values) > 1 else 0.0
        outcome.assert_that('bracket', summary['lambda_1s'] - step <= summary['lambda_hat'] < lambda_1,
                            f"λ̂*={summary['lambda_hat']:.6g}")
    s_hat, s_hat_error = _s_hat(config)
    outcome.report['s_hat'], outcome.report['s_hat_error'] = s_hat, s_hat_error
    if s_hat is not None:
        outcome.assert_that('plateau_above_hls_constant', summary['plateau'] >= s_hat - s_hat_error,
                            f"S(0)={summary['plateau']:.8g}, Ŝ={s_hat:.8g}±{s_hat_error:.2g}")
    return outcome


def run_infimum_trend(config: RunConfig) -> Outcome:
    experiment = config.experiment
    m = config.grid.m
    m_list = [int(v) for v in experiment.get('m_list', [m // 2 + (m // 2) % 2, m])]
    s_hat, s_hat_error = _s_hat(config)
    if s_hat is None:
        raise ConfigError(f"{config.path}: [experiment] the infimum trend needs s_hat or estimate_s_hat = true")
    table, summary = infimum_trend(config.shape, config.grid.n, float(config.params['s']),
                                   float(config.params['mu']), config.grid.L, m_list, s_hat,
                                   method=experiment.get('method', 'lbfgs'),
                                   max_iter=int(experiment.get('max_iter', 5000)), workers=config.workers)
    summary['s_hat_error'] = s_hat_error
    if not (summary['gap_positive'] and summary['width_shrinking']):
        logger.warning(f"infimum trend not visible on m={m_list}: {summary}")
    return Outcome(table, {'summary': summary})


def _s_hat(config: RunConfig):
    experiment = config.experiment
    if 's_hat' in experiment:
        return float(experiment['s_hat']), float(experiment.get('s_hat_error', 0.0))
    if not experiment.get('estimate_s_hat', True):
        return None, None
    estimate = hls_constant_estimate(int(config.params['n']), float(config.params['mu']),
                                     boxes=tuple(experiment.get('boxes', (4.0, 8.0, 16.0))),
                                     m=int(experiment.get('hls_m', 64)), workers=config.workers)
    return estimate.value, estimate.error


def run_mountain_pass(config: RunConfig) -> Outcome:
    tol = config.tolerances
    mask = build_domain(config.shape, config.grid)
    params = config.problem_params()
    problem = VariationalProblem(mask, params, config.workers)
    verdict = nonexistence_criterion(params.n, params.p, params.lam)
    star, _ = is_strictly_star_shaped(boundary_patches(mask))
    nonexistence = {'holds': verdict.holds, 'corollary': verdict.corollary, 'star_shaped': star}
    holds, threshold = lemma45_dimension_condition(params.n, params.s, params.mu, params.p)
    dimension = {'holds': holds, 'threshold': threshold}
    max_iter = int(config.experiment.get('max_iter', 500))

    if params.lam <= 0.0:
        descent = problem.collapse_descent(max_iter=max_iter,
                                           start_fraction=float(config.experiment.get('start_fraction', 0.25)))
        outcome = Outcome(pd.DataFrame(descent.history), {'descent': descent.to_dict(), 'nonexistence': nonexistence,
                                                          'dimension_condition': dimension})
        if verdict.holds and star:
            outcome.assert_that('trivial_collapse', descent.trivial_collapse,
                                f"‖u‖∞ {descent.start_sup:.4g} -> {descent.final_sup:.4g}")
        return outcome

    s_hat, s_hat_error = _s_hat(config)
    report = problem.mountain_pass_solve(tol=tol['mountain_pass_gradient'], s_hat=s_hat, max_iter=max_iter)
    outcome = Outcome(pd.DataFrame(report.history), {'solve': report.to_dict(), 's_hat': s_hat,
                                                     's_hat_error': s_hat_error, 'nonexistence': nonexistence,
                                                     'dimension_condition': dimension})
    outcome.assert_that('converged', report.converged, f"relative gradient {report.grad_relative:.3e}")
    outcome.assert_that('positive', report.positive)
    outcome.assert_that('weak_form', report.weak_form_residual <= tol['weak_form'],
                        f"{report.weak_form_residual:.3e}")
    outcome.assert_that('mountain_pass_geometry', report.geometry_ok)
    if report.threshold is not None:
        outcome.assert_that('below_threshold', report.below_threshold,
                            f"c={report.level:.8g}, threshold={report.threshold:.8g}")
    return outcome


def run_pohozaev(config: RunConfig) -> Outcome:
    tol = config.tolerances
    params = config.problem_params()
    m_list = [int(m) for m in config.experiment.get('m_list', [config.grid.m])]
    rows = []
    for m in m_list:
        grid = Grid(config.grid.n, config.grid.L, m)
        mask = build_domain(config.shape, grid)
        problem = VariationalProblem(mask, params, config.workers)
        solve = problem.mountain_pass_solve(tol=tol['mountain_pass_gradient'])
        patches = boundary_patches(mask, int(config.experiment.get('resolution', 2048)))
        terms = pohozaev_terms(solve.field, mask, patches, params.lam, params.p, params.s, params.mu,
                               config.workers)
        rows.append({'case': 'mixed', 'm': m, 'h': grid.h, 'converged': solve.converged, **terms.to_dict()})
    table = pd.DataFrame(rows)
    outcome = Outcome(table, {})
    residuals = table['relative_residual'].to_numpy()
    if len(residuals) > 1:
        outcome.assert_that('pohozaev_decreasing', bool(np.all(np.diff(residuals) < 0.0)))
    outcome.assert_that('pohozaev_final', residuals[-1] <= tol['pohozaev_final'], f"{residuals[-1]:.3%}")

    if config.experiment.get('manufactured', False):
        ladder = tuple(int(m) for m in config.experiment.get('manufactured_m_list', (32, 64, 128)))
        shape = Shape.from_dict(config.experiment.get('manufactured_domain', {'kind': 'box', 'a': 0.75}))
        manufactured, orders = manufactured_local_check(shape, n=2, L=1.0, m_list=ladder)
        manufactured['case'] = 'manufactured'
        outcome.table = pd.concat([table, manufactured], ignore_index=True)
        outcome.report['manufactured_orders'] = orders
        outcome.assert_that('manufactured_order', len(orders) > 0 and
                            float(np.min(orders)) >= tol['manufactured_order'], f"orders {orders}")
    return outcome


def run_scaling(config: RunConfig) -> Outcome:
    tol = config.tolerances
    mask = build_domain(config.shape, config.grid)
    experiment = config.experiment
    table, summary = scaling_experiment(mask, float(config.params['s']), float(config.params['mu']),
                                        ks=experiment.get('ks', (1, 2, 4)), radius=experiment.get('radius'),
                                        workers=config.workers)
    outcome = Outcome(table, {'summary': summary})
    outcome.assert_that('scaling_local', summary['local_max_deviation'] <= tol['scaling_local'],
                        f"{summary['local_max_deviation']:.3%}")
    outcome.assert_that('scaling_fractional', summary['fractional_max_deviation'] <= tol['scaling_fractional'],
                        f"{summary['fractional_max_deviation']:.3%}")
    return outcome


def run_bubble_limit(config: RunConfig) -> Outcome:
    tol = config.tolerances
    experiment = config.experiment
    s_list = [float(s) for s in experiment.get('s_list', [config.params['s']])]
    energy = bubble_energy_estimate(config.grid.n, tuple(experiment.get('boxes', (4.0, 8.0, 16.0))),
                                    int(experiment.get('energy_m', 96)))
    tables, summaries = [], {}
    outcome = Outcome(pd.DataFrame(), {'u_norm_sq': energy.to_dict()})
    for s in s_list:
        table, summary = bubble_limit_experiment(config.grid.n, s, ts=experiment.get('ts'), L=config.grid.L,
                                                 m=config.grid.m, follow_scale=experiment.get('follow_scale', False),
                                                 energy=energy, workers=config.workers)
        table.insert(0, 's', s)
        tables.append(table)
        summaries[str(s)] = summary
        slope = summary['slope']
        if slope['conclusive']:
            outcome.assert_that(f'bubble_exponent[s={s}]', slope['deviation'] <= tol['bubble_exponent'],
                                f"slope {slope['slope']:.4g} vs {slope['target']:.4g}")
        else:
            logger.warning(f"bubble-limit slope fit at s={s} is inconclusive")
        outcome.assert_that(f'bubble_limit[s={s}]', summary['limit_deviation'] <= tol['bubble_limit'],
                            f"{summary['limit_deviation']:.3%}")
    outcome.table = pd.concat(tables, ignore_index=True)
    outcome.report['summary'] = summaries
    return outcome


def run_lemma45(config: RunConfig) -> Outcome:
    tol = config.tolerances
    experiment = config.experiment
    mask = build_domain(config.shape, config.grid)
    n, mu, p = int(config.params['n']), float(config.params['mu']), float(config.params['p'])
    s_list = [float(s) for s in experiment.get('s_list', [config.params['s']])]
    method = experiment.get('method', 'grid')
    delta_c = float(experiment.get('delta_c', 0.5 * mask.inradius))
    if method == 'radial':
        default_eps = np.geomspace(1e-6, 1e-5, 5)
    else:
        default_eps = np.geomspace(4.0 * config.grid.h, delta_c / 4.0, 6)
    eps_list = experiment.get('eps', list(default_eps))
    s_hat = c_bubble = None
    if experiment.get('predict_limit', False):
        s_hat, _ = _s_hat(config)
        c_bubble = hls_ratio_of_bubble(n, mu, L=float(experiment.get('bubble_L', 8.0)),
                                       m=int(experiment.get('hls_m', 64)), workers=config.workers)
    tables, summaries = [], {}
    outcome = Outcome(pd.DataFrame(), {'method': method, 's_hat': s_hat, 'c_bubble': c_bubble})
    for s in s_list:
        table, summary = lemma45_asymptotics(mask, s, mu, p, eps_list, delta_c, s_hat, c_bubble, method=method,
                                             workers=config.workers)
        table.insert(0, 's', s)
        tables.append(table)
        summaries[str(s)] = summary
        for name in ('gradient', 'seminorm', 'lebesgue'):
            fit = summary[name]
            if fit['conclusive']:
                outcome.assert_that(f'lemma45_{name}[s={s}]', fit['deviation'] <= tol['lemma45_exponent'],
                                    f"slope {fit['slope']:.4g} vs {fit['target']:.4g}")
            else:
                logger.warning(f"{name} fit at s={s} inconclusive (R^2={fit['r_squared']:.3f}, "
                               f"{fit['decades']:.2f} decades)")
        if summary['limit_deviation'] is not None:
            outcome.assert_that(f'lemma45_limit[s={s}]', summary['limit_deviation'] <= tol['lemma45_limit'],
                                f"{summary['limit_deviation']:.3%}")
    outcome.table = pd.concat(tables, ignore_index=True)
    outcome.report['summary'] = summaries
    return outcome


def run_hls_constant(config: RunConfig) -> Outcome:
    experiment = config.experiment
    n, mu = int(config.params['n']), float(config.params['mu'])
    estimate = hls_constant_estimate(n, mu, boxes=tuple(experiment.get('boxes', (4.0, 8.0, 16.0))),
                                     m=int(experiment.get('hls_m', config.raw.get('grid', {}).get('m', 64))),
                                     workers=config.workers)
    report = {'estimate': estimate.to_dict(), 'sobolev_bubble_norm_sq': sobolev_bubble_norms(n)}
    return Outcome(estimate.table, report)


def run_oracles(config: RunConfig) -> Outcome:
    oracle_tolerances = {key[len('oracle_'):]: value for key, value in config.tolerances.items()
                         if key.startswith('oracle_')}
    suite = OracleSuite(seed=config.seed, tolerances=oracle_tolerances)
    table = suite.run()
    outcome = Outcome(table, {'passed': suite.passed})
    for name in suite.failed_checks():
        outcome.assert_that(f'oracle {name}', False)
    outcome.report.setdefault('invariants', {})['oracles'] = suite.passed
    return outcome


RUNNERS = {
    'eig': run_eig,
    'quotient-scan': run_quotient_scan,
    'infimum-trend': run_infimum_trend,
    'mountain-pass': run_mountain_pass,
    'pohozaev': run_pohozaev,
    'scaling': run_scaling,
    'bubble-limit': run_bubble_limit,
    'lemma45': run_lemma45,
    'hls-constant': run_hls_constant,
    'oracles': run_oracles,
}

#%%


def build_parser():
    parser = argparse.ArgumentParser(prog='choquardlab',
                                     description='Numerical experiments for the mixed local-nonlocal '
                                                 'Choquard Dirichlet problem.')
    parser.add_argument('subcommand', choices=SUBCOMMANDS, help='experiment to run')
    parser.add_argument('--config', default=None, help='TOML run configuration')
    parser.add_argument('--outdir', default=None, help='output root, overrides [experiment].outdir')
    parser.add_argument('--seed', type=int, default=None, help='seed for randomised checks')
    parser.add_argument('--jobs', type=int, default=None, help='scipy.fft worker threads')
    parser.add_argument('--m-override', type=int, default=None, help='replace [grid].m')
    parser.add_argument('--log-name', default=None, help='log file name, the subcommand by default')
    return parser


def run(subcommand, config: RunConfig):
    """Dispatch one experiment and persist its artifacts.

    Returns:
        int: 0 when every asserted invariant holds, 1 otherwise."""
    stopwatch = Stopwatch()
    folder = f"{config.outdir}/{config.name}"
    outcome = RUNNERS[subcommand](config)
    outcome.report['failures'] = outcome.failures
    outcome.report['passed'] = not outcome.failures
    manifest = {
        'subcommand': subcommand,
        'config': config.raw,
        'config_path': config.path,
        'tolerances': config.tolerances,
        'seed': config.seed,
        'jobs': config.workers,
        'git_describe': get_git_describe(),
        'version': __version__,
        'wall_time': stopwatch.elapsed(),
    }
    write_json(manifest, 'manifest', folder)
    write_csv(outcome.table, 'result', folder)
    write_json(outcome.report, 'report', folder)
    for failure in outcome.failures:
        logger.error(f"invariant failed: {failure}")
    logger.info(f"{subcommand}: wrote {folder} in {manifest['wall_time']:.1f}s")
    return 1 if outcome.failures else 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    log = Logger(args.subcommand, args.log_name or args.subcommand)
    try:
        config = load_config(args.config, args.subcommand, args.outdir, args.seed, args.jobs, args.m_override)
        return run(args.subcommand, config)
    except ParameterError as e:
        logger.error(f"configuration error: {e}")
        return 2
    except Exception as e:
        logger.error(f"{args.subcommand} failed: {e}", exc_info=True)
        return 1
    finally:
        log.close()


if __name__ == '__main__':
    sys.exit(main())
