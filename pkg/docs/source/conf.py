# -*- coding: utf-8 -*-
#
# gmreplay documentation build configuration file.
#
# This file is execfile()d with the current directory set to its
# containing dir.

import sys
import os

# autodoc imports the package from the checkout
sys.path.insert(0, os.path.abspath("../../"))

# -- General configuration ------------------------------------------------

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.mathjax",
    "sphinx.ext.viewcode",
]

templates_path = ["_templates"]
source_suffix = ".rst"
master_doc = "index"

project = "gmreplay"
copyright = "2026, gmreplay devs"

# NOTE: keep in sync with gmreplay/__init__.py
version = "0.1.0"
release = version

exclude_patterns = []
pygments_style = "sphinx"

# numpy and scipy are heavy and not needed to render docstrings
autodoc_mock_imports = ["numpy", "scipy", "peewee"]

# -- Options for HTML output ----------------------------------------------

html_theme = "nature"
htmlhelp_basename = "gmreplaydoc"

# -- Options for manual page output ---------------------------------------

man_pages = [("index", "gmreplay", "gmreplay Documentation", ["gmreplay devs"], 1)]
