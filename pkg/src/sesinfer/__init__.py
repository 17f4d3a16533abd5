"""Socioeconomic class inference from GPS mobility records.

Public surface: geodesic/grid helpers (``geo``), file loaders (``ingest``),
stay-point preprocessing (``preprocess``), activity inference
(``activity``), mobility indicators (``indicators``), skip-gram pretraining
(``embed``), the neural kernel (``nn``), the two-branch classifier
(``model``), metrics (``evaluate``), the synthetic world (``synth``) and
the pipeline/CLI glue (``pipeline``, ``cli``).
"""

__version__ = "0.1.0"
