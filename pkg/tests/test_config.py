#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
Unit tests for configuration management
"""

import unittest
import os
import shutil
import tempfile
import json
from unittest import mock

from config import Config
from errors import ConfigError


class TestConfig(unittest.TestCase):
    """Test configuration management"""

    def setUp(self):
        """Set up test fixtures"""
        self.temp_dir = tempfile.mkdtemp()
        self.config_file = os.path.join(self.temp_dir, "test_config.json")

    def tearDown(self):
        """Clean up test fixtures"""
        if os.path.exists(self.temp_dir):
            shutil.rmtree(self.temp_dir)

    def test_default_config(self):
        """Test default configuration"""
        config = Config(self.config_file)
        self.assertEqual(config.get('phase'), 't^2')
        self.assertEqual(config.get('m'), 4)
        self.assertEqual(config.seed, 0)
        self.assertTrue(config.validate())

    def test_load_from_file(self):
        """Test loading configuration from file"""
        with open(self.config_file, 'w') as f:
            json.dump({'phase': 't^4', 'lambda_grid': '10,100'}, f)

        config = Config(self.config_file)
        self.assertEqual(config.get('phase'), 't^4')
        self.assertEqual(config.get('lambda_grid'), '10,100')

    def test_malformed_file_reports_position(self):
        """Test that malformed JSON raises ConfigError with line and column"""
        with open(self.config_file, 'w') as f:
            f.write('{\n  "phase": "t^2",\n  "m": \n}')

        with self.assertRaises(ConfigError) as ctx:
            Config(self.config_file)
        self.assertEqual(ctx.exception.line, 4)
        self.assertIsNotNone(ctx.exception.column)

    def test_unknown_key_rejected(self):
        """Test that keys outside the schema are rejected with the field name"""
        with open(self.config_file, 'w') as f:
            json.dump({'frequencies': 'x'}, f)

        with self.assertRaises(ConfigError) as ctx:
            Config(self.config_file)
        self.assertEqual(ctx.exception.field, 'frequencies')

    def test_environment_overrides(self):
        """Test environment variables override file values"""
        with mock.patch.dict(os.environ, {'OSCIGEO_THREADS': '3', 'OSCIGEO_LOG_LEVEL': 'debug'}):
            config = Config(self.config_file)
        self.assertEqual(config.threads, 3)
        self.assertEqual(config.get('log_level'), 'DEBUG')

    def test_non_integer_environment(self):
        """Test a non-integer thread count in the environment"""
        with mock.patch.dict(os.environ, {'OSCIGEO_SEED': 'abc'}):
            with self.assertRaises(ConfigError):
                Config(self.config_file)

    def test_update_ignores_none(self):
        """Test flag overrides skip unset flags"""
        config = Config(self.config_file)
        config.update({'m': 6, 'phase': None})
        self.assertEqual(config.get('m'), 6)
        self.assertEqual(config.get('phase'), 't^2')

    def test_config_validation(self):
        """Test configuration validation"""
        config = Config(self.config_file)
        self.assertTrue(config.validate())

        config.set('eps', 1.5)
        config.set('ell', 4)
        config.set('catalog', 'nonexistent')
        config.set('lambda_grid', '1:0:geometric:3')
        self.assertFalse(config.validate())
        self.assertEqual(len(config.errors), 4)

    def test_delta_list_validation(self):
        """Test multi-scale delta accepts lists in (0, 1]"""
        config = Config(self.config_file)
        config.set('delta', [0.5, 0.25])
        self.assertTrue(config.validate())
        config.set('delta', [0.5, 2.0])
        self.assertFalse(config.validate())

    def test_save_and_reload(self):
        """Test saving configuration round-trips through a file"""
        config = Config(self.config_file)
        config.set('phase', 'x^2 + y^2')
        config.set('dim', 2)
        path = os.path.join(self.temp_dir, "nested", "saved.json")
        config.save(path)

        reloaded = Config(path)
        self.assertEqual(reloaded.get('phase'), 'x^2 + y^2')
        self.assertEqual(reloaded.as_dict(), config.as_dict())


if __name__ == '__main__':
    unittest.main()
