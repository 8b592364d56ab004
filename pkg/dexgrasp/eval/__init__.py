"""Benchmark suites, trial harness, long-horizon accounting and acceptance gates."""
