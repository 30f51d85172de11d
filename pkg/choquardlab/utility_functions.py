#%%
import json
import logging
import os
import subprocess
import sys
import time
from fractions import Fraction

import numpy as np
import pandas as pd

#%%


class ParameterError(ValueError):
    """Raised when an input violates the precondition of an operation."""


class GridResolutionError(ValueError):
    """Raised when boundary sampling needs a finer grid than the one supplied."""


class ConvergenceError(RuntimeError):
    """Raised when an iterative solver runs out of iterations.

    Attributes:
        best: The best iterate (or partial result object) reached before giving up."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class QuadratureError(RuntimeError):
    """Raised when adaptive quadrature misses its tolerance.

    Attributes:
        value (float): The partial value returned by the quadrature routine.
        abserr (float): The routine's own absolute error estimate."""

    def __init__(self, message, value=None, abserr=None):
        super().__init__(message)
        self.value = value
        self.abserr = abserr


class Logger:
    """A class for handling logging of events during a run."""

    def __init__(self, run_name, log_name, level=logging.INFO):
        """Initialize the logger

        Handlers are attached to the package root logger, so every module logger
        (``logging.getLogger(__name__)``) writes to the same file and to stdout.

        Args:
            run_name (str): The name of the run, used as the log sub folder
            log_name (str): The name of the log file
            level (int, optional): Logging level. Defaults to logging.INFO."""

        # Get the log directory from the environment variable
        base_log_dir = os.environ.get('LOG_DIR', 'logs')

        # Create a run specific log directory
        run_log_dir = os.path.join(base_log_dir, run_name)
        os.makedirs(run_log_dir, exist_ok=True)

        log_file = os.path.join(run_log_dir, f'{log_name}.log')

        logger = logging.getLogger('choquardlab')
        logger.setLevel(level)

        # Check if the logger already has handlers
        if logger.hasHandlers():
            logger.handlers.clear()

        file_handler = logging.FileHandler(log_file)
        file_handler.setLevel(level)

        stream_handler = logging.StreamHandler(sys.stdout)
        stream_handler.setLevel(level)

        file_formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
        stream_formatter = logging.Formatter('%(message)s')

        file_handler.setFormatter(file_formatter)
        stream_handler.setFormatter(stream_formatter)

        logger.addHandler(file_handler)
        logger.addHandler(stream_handler)

        self.log_file = log_file
        self.logger = logger

    def close(self):
        """Detach and close the handlers installed by this instance."""
        for handler in list(self.logger.handlers):
            handler.close()
            self.logger.removeHandler(handler)


def to_serializable(obj):
    """Convert numpy scalars/arrays, Fractions and nested containers into JSON friendly values."""
    if isinstance(obj, dict):
        return {str(k): to_serializable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_serializable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_serializable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        if np.isnan(value) or np.isinf(value):
            return str(value)
        return value
    if isinstance(obj, Fraction):
        return float(obj)
    return obj


def write_json(obj, file_name, folder):
    """Write a Python object (dictionary, list or DataFrame) to ``<folder>/<file_name>.json``.

    Args:
        obj (Object): The object to be written. DataFrames are stored with orient='split'.
        file_name (str): The name of the json file to be created, without extension.
        folder (str): The folder to save the json file to, created if missing.

    Returns:
        str: The path of the written file."""
    os.makedirs(folder, exist_ok=True)
    path = os.path.join(folder, f'{file_name}.json')
    if isinstance(obj, pd.DataFrame):
        obj.to_json(path, orient='split')
    else:
        with open(path, 'w') as outfile:
            json.dump(to_serializable(obj), outfile, indent=2, sort_keys=True)
    return path


def read_json(file_name, folder, as_dataframe=False):
    """Read ``<folder>/<file_name>.json`` back into a Python object.

    Args:
        file_name (str): The name of the json file to be read, without extension.
        folder (str): The folder holding the file.
        as_dataframe (bool, optional): Read a file written from a DataFrame. Defaults to False.

    Returns:
        Object: The dictionary/list, or a DataFrame when ``as_dataframe`` is set."""
    path = os.path.join(folder, f'{file_name}.json')
    if as_dataframe:
        return pd.read_json(path, orient='split')
    with open(path, 'r') as infile:
        return json.load(infile)


def write_csv(df, file_name, folder):
    """Write a result table as RFC-4180 CSV with round-trip float formatting.

    Args:
        df (pd.DataFrame): The table to write.
        file_name (str): The name of the csv file, without extension.
        folder (str): Target folder, created if missing.

    Returns:
        str: The path of the written file."""
    os.makedirs(folder, exist_ok=True)
    path = os.path.join(folder, f'{file_name}.csv')
    df.to_csv(path, index=False, float_format='%.17g', lineterminator='\r\n')
    return path


def get_git_describe():
    """Return ``git describe --always --dirty`` for the working tree, or 'unknown'.

    Returns:
        str: The describe string of the checkout the code runs from."""
    try:
        description = subprocess.check_output(
            ["git", "describe", "--always", "--dirty"],
            stderr=subprocess.STDOUT,
            universal_newlines=True,
            cwd=os.path.dirname(os.path.abspath(__file__)),
        ).strip()
        return description or 'unknown'
    except (subprocess.CalledProcessError, OSError):
        return 'unknown'


class Stopwatch:
    """Wall-clock timer used for run manifests."""

    def __init__(self):
        self.start = time.perf_counter()

    def elapsed(self):
        return time.perf_counter() - self.start
