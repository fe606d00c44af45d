# -*- coding: utf-8 -*-
#
# purelabel documentation build configuration file.

import os
import sys
sys.path.insert(0, os.path.abspath('..'))

from purelabel import __version__

# -- General configuration ------------------------------------------------

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.doctest',
    'sphinx.ext.intersphinx',
    'sphinx.ext.mathjax',
    'sphinx.ext.viewcode',
]

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

project = 'purelabel'
copyright = '2026, purelabel contributors'
author = 'purelabel contributors'

version = '.'.join(__version__.split('.')[:2])
release = __version__

language = None
exclude_patterns = ['_build', 'Thumbs.db', '.DS_Store']
pygments_style = 'sphinx'


# -- Options for HTML output ----------------------------------------------

html_theme = 'alabaster'
html_static_path = ['_static']
htmlhelp_basename = 'purelabeldoc'

# -- Options for manual page output ---------------------------------------

man_pages = [
    (master_doc, 'purelabel', 'purelabel Documentation', [author], 1)
]

intersphinx_mapping = {
    'python': ('https://docs.python.org/3', None),
    'numpy': ('https://numpy.org/doc/stable/', None),
    'scipy': ('https://docs.scipy.org/doc/scipy/', None),
}
