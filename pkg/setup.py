from setuptools import find_packages, setup

from purelabel import __author__, __version__

setup(
    name="purelabel",
    version=__version__,
    author=__author__,
    description="Noisy-label purification over frozen feature embeddings",
    packages=find_packages(exclude=["tests", "docs"]),
    python_requires=">=3.7",
    install_requires=[
        "numpy ~= 1.21",
        "scipy ~= 1.7",
        "multi_key_dict ~= 2.0",
    ],
    extras_require={
        "docs": ["sphinx ~= 1.4"],
        "test": ["coverage ~= 4.2", "python-coveralls"],
    },
    entry_points={
        "console_scripts": ["purelabel = purelabel.cli:main"],
    },
    test_suite="tests",
)
