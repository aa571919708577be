"""Progress-aware execution supervision with rewind recovery.

Modules: ``trace`` (demonstration files), ``curation`` (training records),
``reasoning`` (record text format), ``monitor`` and ``supervisor`` (anomaly
detection and instruction substitution), ``simworld`` and ``policy`` (the
desk-scale test bed), ``harness`` (episodes, sweeps, reports).
"""

__version__ = "0.1.0"
