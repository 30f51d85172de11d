from choquardlab.utility_functions import Logger, read_json, to_serializable, write_csv, write_json
from fractions import Fraction
import unittest
import logging
import os
import shutil
import tempfile
import numpy as np
import pandas as pd


class TestWriteJson(unittest.TestCase):

    def setUp(self):
        self.test_folder = tempfile.mkdtemp()
        self.df = pd.DataFrame({
            'col1': [1, 2, 3],
            'col2': [4.5, 5.5, 6.5]
        })

    def tearDown(self):
        shutil.rmtree(self.test_folder, ignore_errors=True)

    def test_df_to_json(self):
        """Test writing a DataFrame to a JSON file"""
        path = write_json(self.df, "test_dataframe", self.test_folder)
        self.assertTrue(os.path.isfile(path))
        back = read_json("test_dataframe", self.test_folder, as_dataframe=True)
        pd.testing.assert_frame_equal(back, self.df)

    def test_dict_to_json(self):
        """Test writing a dictionary with numpy and Fraction values"""
        report = {'lambda': np.float64(2.5), 'converged': np.bool_(True), 'orders': np.array([1.0, 2.0]),
                  'exponent': Fraction(5, 4), 'missing': float('nan')}
        write_json(report, "report", self.test_folder)
        back = read_json("report", self.test_folder)
        self.assertEqual(back, {'lambda': 2.5, 'converged': True, 'orders': [1.0, 2.0], 'exponent': 1.25,
                                'missing': 'nan'})

    def test_nested_keys_become_strings(self):
        self.assertEqual(to_serializable({1: {'a': (np.int64(3),)}}), {'1': {'a': [3]}})


class TestWriteCsv(unittest.TestCase):

    def setUp(self):
        self.test_folder = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.test_folder, ignore_errors=True)

    def test_round_trip_precision_and_line_endings(self):
        df = pd.DataFrame({'h': [0.1, 1.0 / 3.0], 'm': [16, 32]})
        path = write_csv(df, "result", self.test_folder)
        with open(path, 'rb') as infile:
            raw = infile.read()
        self.assertTrue(raw.startswith(b'h,m\r\n'))
        self.assertEqual(raw.count(b'\r\n'), 3)
        back = pd.read_csv(path)
        self.assertEqual(back['h'].tolist(), df['h'].tolist())


class TestLogger(unittest.TestCase):

    def setUp(self):
        self.log_dir = tempfile.mkdtemp()
        self.previous = os.environ.get('LOG_DIR')
        os.environ['LOG_DIR'] = self.log_dir

    def tearDown(self):
        if self.previous is None:
            os.environ.pop('LOG_DIR', None)
        else:
            os.environ['LOG_DIR'] = self.previous
        shutil.rmtree(self.log_dir, ignore_errors=True)

    def test_module_loggers_reach_the_file(self):
        log = Logger('unit', 'events')
        logging.getLogger('choquardlab.geometry').info('grid built')
        log.close()
        self.assertEqual(log.log_file, os.path.join(self.log_dir, 'unit', 'events.log'))
        with open(log.log_file) as infile:
            content = infile.read()
        self.assertIn('choquardlab.geometry - INFO - grid built', content)
        self.assertFalse(logging.getLogger('choquardlab').handlers)


if __name__ == '__main__':
    unittest.main()
