import os
import sys

sys.path.insert(0, os.path.abspath("../.."))

from retstat import __version__  # noqa: E402

project = "retstat"
copyright = "2026, retstat developers"
author = "retstat developers"
release = __version__
version = ".".join(__version__.split(".")[:2])

extensions = [
    "myst_parser",
    "sphinx.ext.autodoc",
    "sphinx.ext.mathjax",
    "sphinx.ext.viewcode",
    "sphinx.ext.napoleon",
]

myst_enable_extensions = ["dollarmath", "colon_fence"]

autodoc_member_order = "bysource"
autodoc_typehints = "description"
autodoc_default_options = {"undoc-members": False, "show-inheritance": True}
napoleon_google_docstring = True
napoleon_numpy_docstring = False

templates_path = ["_templates"]
exclude_patterns = ["_build", "Thumbs.db", ".DS_Store"]

html_theme = "sphinx_rtd_theme"
html_title = f"retstat {release}"
html_static_path = []

source_suffix = {
    ".rst": "restructuredtext",
    ".md": "markdown",
}
