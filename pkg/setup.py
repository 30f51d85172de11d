# Always prefer setuptools over distutils
from setuptools import setup

# To use a consistent encoding
from codecs import open
from os import path

# The directory containing this file
HERE = path.abspath(path.dirname(__file__))

# Get the long description from the README file
with open(path.join(HERE, 'README.md'), encoding='utf-8') as f:
    long_description = f.read()

# This call to setup() does all the work
setup(
    name="choquardlab",
    version="0.1.0",
    description="Finite-difference and FFT experiments for the mixed local-nonlocal Choquard Dirichlet problem",
    long_description=long_description,
    long_description_content_type="text/markdown",
    url="",
    license="MIT",
    classifiers=[
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "Topic :: Scientific/Engineering :: Mathematics",
        "Operating System :: OS Independent"
    ],
    packages=["choquardlab"],
    include_package_data=True,
    python_requires=">=3.9",
    install_requires=["numpy>=1.22", "pandas>=1.5",
                      "regex", "scipy>=1.12",
                      'tomli>=1.1; python_version<"3.11"', "tqdm"],
    extras_require={"plot": ["matplotlib>=3.5"]},
    entry_points={"console_scripts": ["choquardlab=choquardlab.cli:main"]}
)
