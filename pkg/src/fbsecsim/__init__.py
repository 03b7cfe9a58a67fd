"""Deterministic desk-scale simulator for distributed function-block control
applications under availability attacks, with an embedded rule-based
intrusion detection/prevention engine.
"""

__version__ = "0.1.0"
