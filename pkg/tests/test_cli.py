from choquardlab.cli import ConfigError, key_line, load_config, main
from choquardlab.utility_functions import read_json
import unittest
import os
import shutil
import tempfile

EIG_CONFIG = """[experiment]
name = "eig-small"

[params]
n = 2
s = {s}

[grid]
L = 1.0
m = 16

[domain]
kind = "ball"
r = 0.6
"""

NONEXISTENCE_CONFIG = """[experiment]
name = "nonexistence-small"

[params]
n = 3
s = 0.5
mu = 1.0
p = 2.0
lambda = -1.0

[grid]
L = 1.0
m = 12

[domain]
kind = "ball"
r = 0.6
"""

LEMMA45_CONFIG = """[experiment]
name = "lemma45-small"
method = "radial"
s_list = [0.9]
eps = [1e-6, 2.154e-6, 4.642e-6, 1e-5]

[params]
n = 3
s = 0.5
mu = 1.0
p = 2.0

[grid]
L = 1.0
m = 16

[domain]
kind = "ball"
r = 0.8
"""


class TestConfig(unittest.TestCase):

    def setUp(self):
        self.folder = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.folder, ignore_errors=True)

    def write(self, text, name='run.toml'):
        path = os.path.join(self.folder, name)
        with open(path, 'w') as outfile:
            outfile.write(text)
        return path

    def test_key_line(self):
        text = EIG_CONFIG.format(s=0.5)
        self.assertEqual(key_line(text, 'params', 's'), 6)
        self.assertEqual(key_line(text, 'grid', 'm'), 10)
        self.assertEqual(key_line(text, 'domain', 'r'), 14)
        self.assertEqual(key_line(text, 'tolerances', 'weak_form'), 0)

    def test_fractional_order_out_of_range(self):
        path = self.write(EIG_CONFIG.format(s=1.2))
        with self.assertRaises(ConfigError) as context:
            load_config(path, 'eig')
        self.assertIn(f"{path}:6: [params] s", str(context.exception))
        self.assertIn("(0, 1)", str(context.exception))

    def test_fractional_order_list(self):
        path = self.write(EIG_CONFIG.format(s=0.5).replace('name = "eig-small"\n',
                                                           'name = "eig-small"\ns_list = [0.5, 1.2]\n'))
        with self.assertRaises(ConfigError) as context:
            load_config(path, 'bubble-limit')
        self.assertIn(f"{path}:3: [experiment] s_list", str(context.exception))

    def test_missing_key(self):
        path = self.write(EIG_CONFIG.format(s=0.5).replace('kind = "ball"\n', ''))
        with self.assertRaises(ConfigError) as context:
            load_config(path, 'eig')
        self.assertIn("[domain] kind: missing required key", str(context.exception))

    def test_unknown_tolerance(self):
        path = self.write(EIG_CONFIG.format(s=0.5) + "\n[tolerances]\nweak_from = 1e-4\n")
        with self.assertRaises(ConfigError):
            load_config(path, 'eig')

    def test_overrides(self):
        path = self.write(EIG_CONFIG.format(s=0.5) + "\n[tolerances]\nweak_form = 1e-4\n")
        config = load_config(path, 'eig', outdir=self.folder, seed=3, m_override=32)
        self.assertEqual(config.grid.m, 32)
        self.assertEqual(config.seed, 3)
        self.assertEqual(config.name, 'eig-small')
        self.assertEqual(config.tolerances['weak_form'], 1e-4)
        self.assertEqual(config.tolerances['eig_residual'], 1e-8)

    def test_shape_too_close_to_box(self):
        path = self.write(EIG_CONFIG.format(s=0.5).replace('r = 0.6', 'r = 0.95'))
        with self.assertRaises(ConfigError):
            load_config(path, 'eig')


class TestMain(unittest.TestCase):

    def setUp(self):
        self.folder = tempfile.mkdtemp()
        self.previous = os.environ.get('LOG_DIR')
        os.environ['LOG_DIR'] = os.path.join(self.folder, 'logs')

    def tearDown(self):
        if self.previous is None:
            os.environ.pop('LOG_DIR', None)
        else:
            os.environ['LOG_DIR'] = self.previous
        shutil.rmtree(self.folder, ignore_errors=True)

    def write(self, text):
        path = os.path.join(self.folder, 'run.toml')
        with open(path, 'w') as outfile:
            outfile.write(text)
        return path

    def test_parameter_error_exit_code(self):
        path = self.write(EIG_CONFIG.format(s=1.2))
        self.assertEqual(main(['eig', '--config', path, '--outdir', self.folder]), 2)
        self.assertFalse(os.path.exists(os.path.join(self.folder, 'eig-small')))

    def test_eig_run(self):
        path = self.write(EIG_CONFIG.format(s=0.5))
        self.assertEqual(main(['eig', '--config', path, '--outdir', self.folder]), 0)
        run_folder = os.path.join(self.folder, 'eig-small')
        for name in ('manifest.json', 'result.csv', 'report.json'):
            self.assertTrue(os.path.isfile(os.path.join(run_folder, name)))
        report = read_json('report', run_folder)
        self.assertTrue(report['passed'])
        self.assertTrue(report['invariants']['superadditivity[m=16]'])
        manifest = read_json('manifest', run_folder)
        self.assertEqual(manifest['config']['params']['n'], 2)
        self.assertTrue(os.path.isfile(os.path.join(self.folder, 'logs', 'eig', 'eig.log')))

    def test_negative_lambda_collapses(self):
        path = self.write(NONEXISTENCE_CONFIG)
        self.assertEqual(main(['mountain-pass', '--config', path, '--outdir', self.folder]), 0)
        report = read_json('report', os.path.join(self.folder, 'nonexistence-small'))
        self.assertTrue(report['nonexistence']['holds'])
        self.assertTrue(report['nonexistence']['star_shaped'])
        self.assertTrue(report['invariants']['trivial_collapse'])
        self.assertLess(report['descent']['final_sup'], 1e-6 * report['descent']['start_sup'])

    def test_lemma45_radial_orders(self):
        path = self.write(LEMMA45_CONFIG)
        self.assertEqual(main(['lemma45', '--config', path, '--outdir', self.folder]), 0)
        run_folder = os.path.join(self.folder, 'lemma45-small')
        report = read_json('report', run_folder)
        for name in ('gradient', 'seminorm', 'lebesgue'):
            self.assertTrue(report['invariants'][f'lemma45_{name}[s=0.9]'])
        self.assertEqual(report['summary']['0.9']['method'], 'radial')

    def test_oracles(self):
        self.assertEqual(main(['oracles', '--seed', '7', '--outdir', self.folder]), 0)
        report = read_json('report', os.path.join(self.folder, 'oracles'))
        self.assertTrue(report['passed'])


if __name__ == '__main__':
    unittest.main()
