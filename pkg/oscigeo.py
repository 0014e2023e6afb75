#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
oscigeo command line
Runs one experiment per invocation and writes its report, table and summary
"""

import sys
import math
import argparse
import logging
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from cc_geometry import cc_axiom_check, cc_ball_sample, cc_system, doubling_ratio, integrability_check
from config import LOG_LEVELS, Config
from constants import (
    COMMANDS, DEFAULT_CONFIG_FILE, EXIT_ASSERTION, EXIT_OK, EXIT_USAGE, VERSION,
)
from errors import ChartInversionError, ConfigError, OscigeoError, ResolutionError, WitnessedError
from estimator import decay_scan, oracle_integral, sublevel_compare, theorem1_verify
from homspace import build_partition, check_axioms, make_atlas
from ibp import admissible_omega, reduce_amplitude
from jets import ScalarField
from lp_ball import lp_convergence, make_mollifier, verify_finitetype
from phase_dsl import catalog_get, field_from_text
from report_generator import ReportGenerator
from scales import ScaleAssignment, canonical_assignment
from tameness import (
    certificate_holds_pointwise, epsilon_for, radial_tameness, tameness_constant, tameness_stability,
)
from utils import parse_lambda_grid, parse_params

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

Result = Tuple[bool, Dict[str, Any], Optional[Tuple[List[str], List[List[Any]]]]]


class UsageError(Exception):
    """Command line that argparse rejected"""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def scaled_field(field: ScalarField, lam: float) -> ScalarField:
    """lam * field as a field of its own"""
    rule = field.rule
    return ScalarField(field.arity, lambda c: lam * rule(c), field.params, field.domain, field.m_max,
                       f"{lam:g}*({field.name})", support=field.support, variables=field.variables)


class ExperimentRunner:
    """Builds fields, atlases and scale assignments from a Config and runs one command"""

    def __init__(self, config: Config):
        """
        Initialize runner

        Args:
            config: Validated configuration (its 'command' selects the experiment)
        """
        self.config = config
        self.dim = int(config.get('dim', 1))
        self.params = dict(config.get('params') or {})
        self.report_generator = ReportGenerator(config.output_dir)
        self.commands: Dict[str, Callable[[], Result]] = {
            'tame-check': self.tame_check,
            'eps-find': self.eps_find,
            'lp-verify': self.lp_verify,
            'axioms': self.axioms,
            'partition': self.partition,
            'reduce': self.reduce,
            'decay': self.decay,
            'sublevel': self.sublevel,
            'cc-check': self.cc_check,
        }

    # builders

    def phase(self) -> ScalarField:
        catalog = self.config.get('catalog')
        if catalog:
            return catalog_get(catalog, {'d': self.dim, **self.params})
        return field_from_text(self.config.get('phase'), self.dim, self.params)

    def amplitude(self) -> ScalarField:
        """Text amplitude on the configured support box, or a bump filling it"""
        lo, hi = (float(v) for v in self.config.get('support'))
        text = self.config.get('amplitude')
        if not text:
            return catalog_get('gaussian_bump', {'d': self.dim, 'radius': 0.5 * (hi - lo), 'center': 0.5 * (hi + lo)})
        field = field_from_text(text, self.dim, self.params)
        field.support = ([lo] * self.dim, [hi] * self.dim)
        return field

    def atlas(self):
        return make_atlas(self.config.get('atlas'), self.dim, scale_cap=0)

    def probe_points(self, n: Optional[int] = None) -> np.ndarray:
        """Seeded points with radii log-uniform in the configured region"""
        n = n or int(self.config.get('probe_points'))
        lo, hi = (float(v) for v in self.config.get('region'))
        rng = np.random.default_rng(self.config.seed)
        directions = rng.standard_normal((n, self.dim))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        radii = lo * (hi / lo) ** rng.random(n)
        return directions * radii[:, None]

    def region_samples(self) -> np.ndarray:
        lo, hi = (float(v) for v in self.config.get('region'))
        if self.dim == 1:
            side = np.linspace(lo, hi, int(self.config.get('probe_points')))
            return np.concatenate([-side[::-1], side]).reshape(-1, 1)
        return self.probe_points(4 * int(self.config.get('probe_points')))

    def assignment(self, atlas, f: ScalarField) -> ScaleAssignment:
        kind = self.config.get('assignment')
        N = int(self.config.get('N'))
        if kind == 'constant':
            return ScaleAssignment.constant(int(self.config.get('scale_value')), N)
        if kind == 'bnw':
            C = radial_tameness(f, 2, int(self.config.get('rays')), grid=int(self.config.get('grid')),
                                threads=self.config.threads).constant
            return ScaleAssignment.bnw(f, C, atlas.radix)
        return canonical_assignment(atlas, f, float(self.config.get('eps')), int(self.config.get('m')),
                                    threads=self.config.threads)

    def delta(self, system) -> np.ndarray:
        delta = self.config.get('delta')
        values = np.asarray(delta if isinstance(delta, list) else [delta], dtype=float)
        return np.full(system.d_scale, values[0]) if len(values) == 1 else values

    # commands

    def tame_check(self) -> Result:
        f = self.phase()
        m, grid = int(self.config.get('m')), int(self.config.get('grid'))
        if f.arity == 1:
            report = tameness_constant(f, float(self.config.get('interval')), m, grid)
            stability = tameness_stability(f, float(self.config.get('interval')), m, grid)
        else:
            report = radial_tameness(f, m, int(self.config.get('rays')), radius=float(self.config.get('interval')),
                                     grid=grid, threads=self.config.threads,
                                     show_progress=self.config.get('show_progress'))
            stability = None
        payload = report.to_dict()
        payload['stability'] = stability
        payload['summary'] = {'phase': f.name, 'C': report.constant, 'm': m}
        passed = math.isfinite(report.constant) and not report.violations
        if report.violations:
            payload['witness'] = report.violations[0]
        return passed, payload, (['k', 'constant', 't_argmax'], report.rows())

    def eps_find(self) -> Result:
        f = self.phase()
        grid = int(self.config.get('grid'))
        cert = epsilon_for(f, int(self.config.get('m')), int(self.config.get('ell')), grid)
        payload = {'certificate': cert.to_dict(), 'recheck': certificate_holds_pointwise(f, cert, 2 * grid),
                   'summary': {'phase': f.name, 'epsilon': cert.epsilon, 'holds': cert.holds}}
        return cert.holds and payload['recheck'], payload, None

    def lp_verify(self) -> Result:
        f = self.phase()
        m = int(self.config.get('m'))
        cert = epsilon_for(f, m, int(self.config.get('ell')), int(self.config.get('grid')))
        mollifier = make_mollifier(f.arity, m)
        report = verify_finitetype(f, cert, int(self.config.get('grid')), self.config.get('j_range'),
                                   int(self.config.get('probe_points')), self.config.threads, mollifier)
        report['convergence'] = lp_convergence(f, np.zeros(f.arity), mollifier, self.config.get('j_range'))
        report['mollifier'] = mollifier.to_dict()
        report['summary'] = {'phase': f.name, 'epsilon': cert.epsilon, 'K': report['bigfinish_constant'],
                             'refinement_ratio': report['refinement_ratio']}
        return report['passed'], report, None

    def axioms(self) -> Result:
        atlas = self.atlas()
        lo, hi = self.config.get('scales')
        report = check_axioms(atlas, self.probe_points(), list(range(int(lo), int(hi) + 1)), int(self.config.get('m')))
        payload = report.to_dict()
        payload['summary'] = dict(report.passed)
        failed = [name for name, ok in sorted(report.passed.items()) if not ok]
        if failed:
            payload['witness'] = {'axiom': failed[0], 'witness': report.witnesses.get(failed[0], [None])[0]}
        return report.all_passed, payload, None

    def partition(self) -> Result:
        atlas = self.atlas()
        f = self.phase()
        R = self.assignment(atlas, f)
        region = self.region_samples()
        partition = build_partition(atlas, R, region, R.N)
        sum_error = float(np.max(np.abs(partition.total(region) - 1.0)))
        payload = partition.to_dict()
        payload.update({'assignment': R.name, 'sum_error': sum_error,
                        'multiplicity': partition.multiplicity(region)})
        payload['summary'] = {'centers': len(partition), 'sum_error': sum_error,
                              'multiplicity': payload['multiplicity'], 'packing_bound': partition.packing_bound}
        rows = [[k, partition.centers[k].tolist(), int(partition.scales[k])] for k in range(len(partition))]
        passed = sum_error <= 1e-10 and payload['multiplicity'] <= partition.packing_bound
        return passed, payload, (['center_index', 'center', 'scale'], rows)

    def reduce(self) -> Result:
        lam = float(self.config.get('lambda'))
        f = scaled_field(self.phase(), lam)
        psi = self.amplitude()
        if self.config.get('assemble'):
            return self._assembled(f, psi)
        k = int(self.config.get('k'))
        omega = self.config.get('omega')
        omega = float(omega) if omega is not None else admissible_omega(f, psi, k)
        reduced = reduce_amplitude(f, psi, k, omega)
        tol = float(self.config.get('tolerance'))
        original = oracle_integral(f, psi, 1.0, psi.support, tol)
        after = oracle_integral(f, reduced, 1.0, psi.support, tol)
        scale = max(abs(original.value), 1e-300)
        discrepancy = abs(original.value - after.value) / scale
        bookkeeping = reduced.expansion.check()
        payload = {
            'expansion': reduced.expansion.to_dict(), 'bookkeeping_failures': bookkeeping, 'omega': omega,
            'identity': {'original': original.to_dict(), 'reduced': after.to_dict(),
                         'relative_discrepancy': discrepancy},
            'sharpjunk': reduced.sharpjunk_ratio(),
            'summary': {'phase': f.name, 'amplitude': psi.name, 'k': k, 'terms': reduced.expansion.term_count,
                        'relative_discrepancy': discrepancy},
        }
        return discrepancy <= 1e-6 and not bookkeeping, payload, None

    def _assembled(self, f: ScalarField, psi: ScalarField) -> Result:
        atlas = self.atlas()
        R = self.assignment(atlas, f)
        report = theorem1_verify(atlas, f, psi, R, float(self.config.get('eps')), int(self.config.get('m')),
                                 self.probe_points(), K_high=float(self.config.get('K_high')),
                                 K_first=float(self.config.get('K_first')), threads=self.config.threads)
        passed = report.pop('passed')
        report['summary'] = {'cells': len(report['cells']),
                             'relative_discrepancy': report['identity']['relative_discrepancy'],
                             'bound_constant': report['bound']['constant']}
        return passed, report, None

    def decay(self) -> Result:
        f, psi = self.phase(), self.amplitude()
        table = decay_scan(f, psi, parse_lambda_grid(str(self.config.get('lambda_grid'))),
                           int(self.config.get('ell')), int(self.config.get('m')),
                           tol=float(self.config.get('tolerance')), threads=self.config.threads,
                           show_progress=self.config.get('show_progress'))
        payload = table.to_dict()
        payload['summary'] = {'slope_lhs': table.slope_lhs, 'slope_rhs': table.slope_rhs,
                              'ratio_stability': table.ratio_stability}
        passed = all(row.resolved for row in table.rows) and table.ratio_stability <= 3.0
        return passed, payload, (table.CSV_HEADER, table.csv_rows())

    def sublevel(self) -> Result:
        f = self.phase()
        ell = int(self.config.get('ell'))
        rows = [sublevel_compare(f, lam, ell) for lam in parse_lambda_grid(str(self.config.get('lambda_grid')))]
        ratios = [r['ratio'] for r in rows]
        payload = {'rows': rows, 'summary': {'phase': f.name, 'ratio_min': min(ratios), 'ratio_max': max(ratios)}}
        failed = [r for r in rows if not r['passed']]
        if failed:
            payload['witness'] = {'lambda': failed[0]['lambda'], 'ratio': failed[0]['ratio'],
                                  'geometric_constant': failed[0]['geometric_constant']}
        table = [[r['lambda'], r['lhs'], r['measure'], r['ratio']] for r in rows]
        return not failed, payload, (['lambda', 'lhs', 'measure', 'ratio'], table)

    def cc_check(self) -> Result:
        system = cc_system(self.config.get('system'), steps=int(self.config.get('steps')),
                           pieces=int(self.config.get('pieces')))
        x0 = np.asarray(self.config.get('x0') or [0.0] * system.dim, dtype=float)
        delta = self.delta(system)
        integrability = integrability_check(system, x0.reshape(1, -1))
        payload: Dict[str, Any] = {'system': system.to_dict(), 'integrability': integrability}
        if not integrability['passed']:
            payload['witness'] = integrability['witnesses'][0]
            payload['summary'] = {'system': system.name, 'integrability': False}
            return False, payload, None

        paths, seed, threads = int(self.config.get('paths')), self.config.seed, self.config.threads
        method = self.config.get('volume_method')
        cloud = cc_ball_sample(system, x0, delta, paths, seed=seed, threads=threads)
        payload['cloud'] = cloud.to_dict()
        payload['volume'] = {'hull': cloud.hull_volume(), 'grid': cloud.grid_volume()}
        passed = True
        if system.admissible(2.0 * delta):
            payload['doubling'] = doubling_ratio(system, x0, delta, paths, seed, method, threads=threads)
            passed = math.isfinite(payload['doubling']['ratio'])
        if self.config.get('cc_axioms'):
            report = cc_axiom_check(system, int(self.config.get('M')), self.config.get('cc_scales'),
                                    x0.reshape(1, -1), n_paths=paths, seed=seed, volume_method=method,
                                    threads=threads)
            payload['axioms'] = report.to_dict()
            passed = passed and report.all_passed
        payload['summary'] = {'system': system.name, 'volume_hull': payload['volume']['hull'],
                              'doubling_ratio': payload.get('doubling', {}).get('ratio')}
        return passed, payload, (cloud.csv_header(), cloud.csv_rows())

    def run(self) -> Tuple[int, Dict[str, Any]]:
        """
        Run the configured command and write its outputs

        Returns:
            Exit code and the report
        """
        command = self.config.get('command')
        logger.info("=" * 60)
        logger.info(f"oscigeo {VERSION}: {command}")
        logger.info("=" * 60)

        table = None
        try:
            passed, payload, table = self.commands[command]()
        except WitnessedError as e:
            logger.error(f"{command} failed: {e}")
            passed, payload = False, {'error': str(e), 'witness': e.witness}
        except (ResolutionError, ChartInversionError) as e:
            logger.error(f"{command} unresolved: {e}")
            passed, payload = False, {'error': str(e), 'error_type': type(e).__name__, 'witness': {}}

        report = self.report_generator.build_report(command, self.config.as_dict(), passed, payload)
        self.report_generator.save_json_report(report, self.config.get('output'))
        if table is not None:
            header, rows = table
            self.report_generator.save_csv_table(header, rows, self.config.get('csv') or f"{command}.csv")
        self.report_generator.save_text_report(report)

        logger.info("=" * 60)
        logger.info(f"{command}: {'PASS' if passed else 'FAIL'}")
        logger.info("=" * 60)
        return (EXIT_OK if passed else EXIT_ASSERTION), report


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subcommand per experiment"""
    common = _Parser(add_help=False)
    common.add_argument("--config", default=DEFAULT_CONFIG_FILE, help="Path to configuration file")
    group = common.add_argument_group("fields")
    group.add_argument("--phase", help="Phase expression, e.g. 't^2'")
    group.add_argument("--amplitude", help="Amplitude expression (default: bump on --support)")
    group.add_argument("--catalog", help="Catalog phase name (overrides --phase)")
    group.add_argument("--params", help="Parameter bindings 'name=value,...'")
    group.add_argument("--dim", type=int, help="Dimension d")
    group.add_argument("--support", type=float, nargs=2, metavar=("LO", "HI"), help="Amplitude support box")

    group = common.add_argument_group("orders and scales")
    group.add_argument("--m", "--order", dest="m", type=int, help="Derivative order m")
    group.add_argument("--ell", type=int, help="Base order ell")
    group.add_argument("--eps", type=float, help="Finite-type epsilon")
    group.add_argument("--k", type=int, help="Integrations by parts")
    group.add_argument("--omega", type=float, help="Constant IBP weight (default: largest admissible)")
    group.add_argument("--atlas", help="Atlas: bnw or euclidean")
    group.add_argument("--scales", type=int, nargs=2, metavar=("LO", "HI"), help="Scale range")
    group.add_argument("--assignment", help="Scale assignment: constant, bnw or canonical")
    group.add_argument("--scale-value", dest="scale_value", type=int, help="Constant scale")
    group.add_argument("--N", type=int, help="Scale-Lipschitz bound")
    group.add_argument("--K-high", dest="K_high", type=float, help="High-derivative constant")
    group.add_argument("--K-first", dest="K_first", type=float, help="First-derivative constant")
    group.add_argument("--assemble", action="store_true", default=None, help="reduce: full partition pipeline")

    group = common.add_argument_group("resolution")
    group.add_argument("--lambda", dest="lambda_grid", help="Frequency grid 'start:stop:kind:n' or list")
    group.add_argument("--frequency", dest="lambda", type=float, help="Single frequency for reduce")
    group.add_argument("--grid", type=int, help="Grid points")
    group.add_argument("--rays", type=int, help="Ray directions")
    group.add_argument("--interval", type=float, help="Right endpoint T of (0, T]")
    group.add_argument("--probe-points", dest="probe_points", type=int, help="Probe points")
    group.add_argument("--region", type=float, nargs=2, metavar=("LO", "HI"), help="Probe radii")
    group.add_argument("--j-range", dest="j_range", type=int, nargs="+", help="Littlewood-Paley scales")
    group.add_argument("--tolerance", type=float, help="Oracle tolerance")

    group = common.add_argument_group("vector fields")
    group.add_argument("--system", help="Vector field system name")
    group.add_argument("--delta", type=float, nargs="+", help="Multi-scale delta")
    group.add_argument("--x0", type=float, nargs="+", help="Base point")
    group.add_argument("--M", type=int, help="CC radix")
    group.add_argument("--cc-scales", dest="cc_scales", type=int, nargs="+", help="CC scales j (delta = M^j)")
    group.add_argument("--cc-axioms", dest="cc_axioms", action="store_true", default=None, help="Run CC axiom checks")
    group.add_argument("--volume-method", dest="volume_method", help="grid or hull")
    group.add_argument("--paths", type=int, help="Controlled paths")
    group.add_argument("--steps", type=int, help="RK4 steps")
    group.add_argument("--pieces", type=int, help="Control pieces")

    group = common.add_argument_group("run")
    group.add_argument("--seed", type=int, help="Random seed")
    group.add_argument("--threads", type=int, help="Worker threads")
    group.add_argument("--log-level", dest="log_level", help="Logging level")
    group.add_argument("--show-progress", dest="show_progress", action="store_true", default=None,
                       help="Show progress bars")
    group.add_argument("--output-dir", dest="output_dir", help="Output directory")
    group.add_argument("--output", help="JSON report path")
    group.add_argument("--csv", help="CSV table path")

    parser = _Parser(prog="oscigeo", description="Oscillatory integrals on spaces of homogeneous type")
    parser.add_argument("--version", action="version", version=f"oscigeo {VERSION}")
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    for command in COMMANDS:
        subparsers.add_parser(command, parents=[common], help=f"Run {command}")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required")
    except UsageError as e:
        print(f"oscigeo: error: {e}", file=sys.stderr)
        return EXIT_USAGE

    flags = {k: v for k, v in vars(args).items() if k != 'config'}
    level = str(flags.get('log_level') or 'INFO').upper()
    logging.basicConfig(level=level if level in LOG_LEVELS else 'INFO', format=LOG_FORMAT)

    try:
        config = Config(args.config)
        if flags.get('params') is not None:
            flags['params'] = parse_params(flags['params'])
        if flags.get('delta') is not None and len(flags['delta']) == 1:
            flags['delta'] = flags['delta'][0]
        config.update(flags)
        if not config.validate():
            raise ConfigError("; ".join(config.errors), field='command')
        logging.getLogger().setLevel(str(config.get('log_level')).upper())
        code, _ = ExperimentRunner(config).run()
        return code
    except (ConfigError, ValueError) as e:
        logger.error(f"Usage error: {e}")
        return EXIT_USAGE
    except OscigeoError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_USAGE
    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
