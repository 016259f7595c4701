"""Multi-object tracking with a labeled spawning model.

Library layout:

- :mod:`spawnglmb.labels` — lineage-encoding track labels
- :mod:`spawnglmb.gaussian` — Gaussian/mixture algebra and family joints
- :mod:`spawnglmb.models` — scenario models and configuration
- :mod:`spawnglmb.assignment` — cost table, Gibbs sampler, ranked assignment
- :mod:`spawnglmb.glmb` — the filtering recursion
- :mod:`spawnglmb.estimation` — state extraction and cardinality statistics
- :mod:`spawnglmb.metrics` — OSPA, cardinality reports, ancestry analysis
- :mod:`spawnglmb.simulator` — scripted ground truth and sensor simulation
- :mod:`spawnglmb.oracle` — brute-force references used by tests
- :mod:`spawnglmb.cli` — Monte Carlo driver writing CSV reports and figures
"""

__version__ = "0.1.0"
