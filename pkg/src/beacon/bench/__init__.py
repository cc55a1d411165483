"""Workload bench: scenario generation, drivers, breakpoint search, reports."""
