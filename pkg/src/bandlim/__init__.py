"""Band operators over finite discrete metric spaces.

Desk-scale toolkit for band and band-dominated operators: window extraction of
limit operators along directions to infinity, lower-norm localization via
metric sparsification, partitions of unity, and parametrix-based Fredholm
probes.
"""

__version__ = "0.1.0"
