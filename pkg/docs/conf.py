# Configuration file for the Sphinx documentation builder.
#
# For the full list of built-in configuration values, see the documentation:
# https://www.sphinx-doc.org/en/master/usage/configuration.html

import importlib
import os
import sys

sys.path.insert(0, os.path.abspath(".."))

try:
    from climregime import __version__ as package_version
except Exception:
    package_version = "0.1.0"

# -- Project information -----------------------------------------------------

project = "climregime"
copyright = "2026, climregime developers"
author = "climregime developers"
release = package_version
version = os.environ.get("READTHEDOCS_VERSION_NAME", release)

# -- General configuration ---------------------------------------------------

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.viewcode",
    "sphinx.ext.napoleon",
    "sphinx.ext.autosummary",
    "sphinx.ext.intersphinx",
    "myst_parser",
    "sphinx_copybutton",
]

templates_path = ["_templates"]
exclude_patterns = ["_build", "Thumbs.db", ".DS_Store"]

language = "en"

# -- Autodoc configuration --------------------------------------------------
autodoc_default_options = {
    "members": True,
    "member-order": "bysource",
    "special-members": "__init__",
    "undoc-members": True,
    "exclude-members": "__weakref__",
}

# Mock the numerical stack when it is absent so autodoc can still import
# climregime modules on a bare docs builder.
_OPTIONAL_LIBS = [
    "joblib",
    "scipy",
    "tqdm",
    "xarray",
]

autodoc_mock_imports = []
for _module in _OPTIONAL_LIBS:
    try:
        importlib.import_module(_module)
    except Exception:
        autodoc_mock_imports.append(_module)  # type:ignore

# -- Napoleon settings -------------------------------------------------------
napoleon_google_docstring = True
napoleon_numpy_docstring = True
napoleon_include_init_with_doc = False
napoleon_include_private_with_doc = False
napoleon_include_special_with_doc = True
napoleon_use_param = True
napoleon_use_rtype = True

# -- Intersphinx mapping ----------------------------------------------------
intersphinx_mapping = {
    "python": ("https://docs.python.org/3", None),
    "numpy": ("https://numpy.org/doc/stable/", None),
    "pandas": ("https://pandas.pydata.org/docs/", None),
    "xarray": ("https://docs.xarray.dev/en/stable/", None),
}

# -- Options for HTML output -------------------------------------------------

html_theme = "furo"
html_title = f"{project} Documentation"

html_theme_options = {
    "navigation_with_keys": True,
    "sidebar_hide_name": False,
}

# Sphinx copybutton configuration
copybutton_prompt_text = r">>> |\.\.\. |\$ "
copybutton_prompt_is_regexp = True
copybutton_only_copy_prompt_lines = True
copybutton_remove_prompts = True
