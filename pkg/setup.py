"""Optional native build of the hot simulation modules.

The package is plain Python. When Cython is importable at build time the
event-loop modules are compiled for roughly a 1.8x speedup; set
MCNET_SIM_PURE=1 to skip compilation.
"""

import os

from setuptools import setup

HOT_MODULES = ["engine", "packet", "qdisc", "nic", "netstack", "middleware", "workload"]


def extensions():
    if os.environ.get("MCNET_SIM_PURE"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    paths = [f"src/mcnet_sim/{m}.py" for m in HOT_MODULES]
    return cythonize(paths, language_level=3, quiet=True)


setup(ext_modules=extensions())
