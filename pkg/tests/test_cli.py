#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
Unit tests for the oscigeo command line
"""

import os
import json
import shutil
import tempfile
import unittest

from constants import EXIT_ASSERTION, EXIT_OK, EXIT_USAGE
from oscigeo import main


class TestCommandLine(unittest.TestCase):
    """Test commands, exit codes and written outputs"""

    def setUp(self):
        """Set up test fixtures"""
        self.temp_dir = tempfile.mkdtemp()
        self.config_file = os.path.join(self.temp_dir, "config.json")
        self.output_dir = os.path.join(self.temp_dir, "output")

    def tearDown(self):
        """Clean up test fixtures"""
        if os.path.exists(self.temp_dir):
            shutil.rmtree(self.temp_dir)

    def run_command(self, *args):
        return main(list(args) + ['--config', self.config_file, '--output-dir', self.output_dir,
                                  '--log-level', 'WARNING'])

    def load_report(self, command):
        with open(os.path.join(self.output_dir, f"{command}.json"), 'r', encoding='utf-8') as f:
            return json.load(f)

    def test_tame_check(self):
        """Test tame-check on t^2 reports C = 1/2"""
        code = self.run_command('tame-check', '--phase', 't^2', '--order', '4', '--grid', '256')
        self.assertEqual(code, EXIT_OK)
        report = self.load_report('tame-check')
        self.assertTrue(report['passed'])
        self.assertAlmostEqual(report['C'], 0.5, places=10)
        self.assertTrue(os.path.exists(os.path.join(self.output_dir, 'tame-check.csv')))
        self.assertTrue(os.path.exists(os.path.join(self.output_dir, 'tame-check.txt')))

    def test_nonconvex_phase(self):
        """Test a failed hypothesis exits with the assertion code and a witness"""
        code = self.run_command('tame-check', '--phase', '-t^2', '--order', '2', '--grid', '64')
        self.assertEqual(code, EXIT_ASSERTION)
        report = self.load_report('tame-check')
        self.assertFalse(report['passed'])
        self.assertIn('witness', report)

    def test_unknown_command(self):
        """Test an unknown command is a usage error"""
        self.assertEqual(main(['no-such-command']), EXIT_USAGE)
        self.assertEqual(main([]), EXIT_USAGE)

    def test_malformed_config(self):
        """Test a config file that is not JSON is a usage error"""
        with open(self.config_file, 'w', encoding='utf-8') as f:
            f.write("{not json")
        self.assertEqual(self.run_command('tame-check'), EXIT_USAGE)

    def test_invalid_lambda_grid(self):
        """Test a malformed frequency grid is a usage error"""
        self.assertEqual(self.run_command('sublevel', '--phase', 'x^2', '--lambda', '1:2:3'), EXIT_USAGE)

    def test_cc_check_grushin(self):
        """Test cc-check on the Grushin pair fails integrability at the origin"""
        code = self.run_command('cc-check', '--system', 'grushin', '--paths', '100')
        self.assertEqual(code, EXIT_ASSERTION)
        report = self.load_report('cc-check')
        self.assertFalse(report['integrability']['passed'])
        self.assertEqual(report['witness']['x'], [0.0, 0.0])

    def test_cc_check_heisenberg(self):
        """Test cc-check samples the Heisenberg ball and its doubling"""
        code = self.run_command('cc-check', '--system', 'heisenberg', '--delta', '0.25', '--paths', '2000',
                                '--steps', '8')
        self.assertEqual(code, EXIT_OK)
        report = self.load_report('cc-check')
        self.assertAlmostEqual(report['doubling']['ratio'], 16.0, delta=1.6)
        with open(os.path.join(self.output_dir, 'cc-check.csv'), 'r', encoding='utf-8') as f:
            self.assertEqual(f.readline().strip(), 'x0,x1,x2')

    def test_sublevel_reproducible(self):
        """Test two identical runs write byte-identical outputs"""
        args = ('sublevel', '--phase', 'x^2', '--lambda', '10,100,1000')
        outputs = []
        for _ in range(2):
            self.assertEqual(self.run_command(*args), EXIT_OK)
            contents = []
            for name in ('sublevel.json', 'sublevel.csv', 'sublevel.txt'):
                with open(os.path.join(self.output_dir, name), 'rb') as f:
                    contents.append(f.read())
            outputs.append(contents)
        self.assertEqual(outputs[0], outputs[1])

    def test_decay(self):
        """Test decay writes the five-column table"""
        code = self.run_command('decay', '--phase', 't^2', '--lambda', '1e2:1e4:geometric:3', '--threads', '1')
        self.assertEqual(code, EXIT_OK)
        with open(os.path.join(self.output_dir, 'decay.csv'), 'r', encoding='utf-8') as f:
            lines = f.read().splitlines()
        self.assertEqual(lines[0], 'lambda,lhs_abs,rhs_bound,ratio,resolved_flag')
        self.assertEqual(len(lines), 4)

    def test_unresolved_frequency(self):
        """Test an oracle budget overrun still writes the report with the assertion code"""
        code = self.run_command('reduce', '--phase', 't', '--frequency', '1e12', '--k', '1')
        self.assertEqual(code, EXIT_ASSERTION)
        report = self.load_report('reduce')
        self.assertFalse(report['passed'])
        self.assertEqual(report['error_type'], 'ResolutionError')
        self.assertIn('witness', report)

    def test_assembled_plane(self):
        """Test reduce --assemble on the radial atlas in the plane reaches a verdict"""
        with open(self.config_file, 'w', encoding='utf-8') as f:
            json.dump({'support': [0.5, 1.5], 'region': [0.5, 2.2], 'probe_points': 20}, f)
        code = self.run_command('reduce', '--assemble', '--atlas', 'bnw', '--dim', '2', '--phase', 'x^2 + y^2',
                                '--frequency', '100', '--assignment', 'bnw', '--m', '2', '--threads', '1')
        self.assertEqual(code, EXIT_OK)
        report = self.load_report('reduce')
        self.assertLessEqual(report['summary']['relative_discrepancy'], 1e-6)
        self.assertGreater(report['summary']['cells'], 0)


if __name__ == '__main__':
    unittest.main()
