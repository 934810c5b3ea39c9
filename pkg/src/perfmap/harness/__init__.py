"""Experiment harness: JSON configs, seeded runs, CSV/figure output."""
