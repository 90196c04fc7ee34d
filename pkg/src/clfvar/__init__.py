"""Seed-controlled training with a variance-penalised composite loss, plus the
multi-seed harness used to measure run-to-run variability."""

__version__ = "0.1.0"
