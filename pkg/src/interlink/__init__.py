"""Hyperlink interlinking networks of organization samples.

Crawl seed sites, harvest in/out links from pluggable providers, reduce
them to (sub)domain site keys, build dichotomized interlinking networks
and compute cohesion, inequality and centrality statistics.
"""

__version__ = "0.1.0"
