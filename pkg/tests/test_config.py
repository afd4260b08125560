"""
tests/test_config.py

Default configuration, range validation and the JSON-backed ConfigManager.

Run:
    python -m pytest tests/test_config.py -v
"""

import json
import tempfile
import unittest
from pathlib import Path

from config import DEFAULT_CONFIG, ConfigManager, get_default_config, merge_configs, validate_config


class TestDefaults(unittest.TestCase):

    def test_defaults_are_valid(self):
        validate_config(get_default_config())

    def test_copy_is_independent(self):
        cfg = get_default_config()
        cfg['belief']['speed_factors'].append(0.1)
        cfg['sim']['tick'] = 5.0
        self.assertEqual(DEFAULT_CONFIG['belief']['speed_factors'], [1.0, 0.6, 0.2])
        self.assertEqual(get_default_config()['sim']['tick'], 0.1)

    def test_shipped_config_json_matches_defaults(self):
        shipped = Path(__file__).parent.parent / "config.json"
        with open(shipped, encoding="utf-8") as f:
            self.assertEqual(json.load(f), DEFAULT_CONFIG)

    def test_merge_is_recursive(self):
        merged = merge_configs(DEFAULT_CONFIG, {'alloc': {'population': 8}})
        self.assertEqual(merged['alloc']['population'], 8)
        self.assertEqual(merged['alloc']['generations'], DEFAULT_CONFIG['alloc']['generations'])


class TestValidation(unittest.TestCase):

    def _invalid(self, update, fragment):
        with self.assertRaises(ValueError) as ctx:
            validate_config(merge_configs(DEFAULT_CONFIG, update))
        self.assertIn(fragment, str(ctx.exception))

    def test_range_names_dotted_key(self):
        self._invalid({'mapping': {'p_hit': 1.5}}, "mapping.p_hit")
        self._invalid({'sim': {'tick': 0.0}}, "sim.tick")
        self._invalid({'belief': {'coverage_scale': 1.5}}, "belief.coverage_scale")

    def test_thresholds_ordered(self):
        self._invalid({'mapping': {'free_threshold': 0.0, 'occupied_threshold': 0.0}}, "free_threshold")

    def test_speed_factors(self):
        self._invalid({'belief': {'speed_factors': [1.0, 0.6]}}, "n_ranks")
        self._invalid({'belief': {'speed_factors': [0.9, 0.6, 0.2]}}, "start at 1.0")
        self._invalid({'belief': {'speed_factors': [1.0, 0.6, 0.7]}}, "strictly decreasing")

    def test_mutation_rate(self):
        validate_config(merge_configs(DEFAULT_CONFIG, {'alloc': {'mutation_rate': 0.05}}))
        self._invalid({'alloc': {'mutation_rate': 2.0}}, "alloc.mutation_rate")


class TestConfigManager(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = Path(self.tmp.name) / "config.json"

    def tearDown(self):
        self.tmp.cleanup()

    def test_missing_file_gives_defaults(self):
        self.assertEqual(ConfigManager(str(self.path)).get_config(), DEFAULT_CONFIG)

    def test_save_and_reload(self):
        manager = ConfigManager(str(self.path))
        self.assertTrue(manager.update_config({'sim': {'max_time': 120.0}}))
        self.assertTrue(manager.save_config())
        self.assertEqual(ConfigManager(str(self.path)).get_config()['sim']['max_time'], 120.0)

    def test_partial_file_is_completed(self):
        self.path.write_text(json.dumps({'control': {'noise_std': 0.0}}), encoding="utf-8")
        cfg = ConfigManager(str(self.path)).get_config()
        self.assertEqual(cfg['control']['noise_std'], 0.0)
        self.assertEqual(cfg['control']['k_attract'], DEFAULT_CONFIG['control']['k_attract'])

    def test_invalid_file_falls_back(self):
        self.path.write_text(json.dumps({'belief': {'n_ranks': 99}}), encoding="utf-8")
        self.assertEqual(ConfigManager(str(self.path)).get_config(), DEFAULT_CONFIG)
        self.path.write_text("{broken", encoding="utf-8")
        self.assertEqual(ConfigManager(str(self.path)).get_config(), DEFAULT_CONFIG)

    def test_rejected_update_keeps_config(self):
        manager = ConfigManager(str(self.path))
        self.assertFalse(manager.update_config({'alloc': {'crossover_rate': 3.0}}))
        self.assertEqual(manager.get_config()['alloc']['crossover_rate'], 0.9)
        manager.update_config({'alloc': {'population': 4}})
        manager.reset_to_defaults()
        self.assertEqual(manager.get_config(), DEFAULT_CONFIG)


if __name__ == "__main__":
    unittest.main()
