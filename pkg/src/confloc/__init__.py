"""confloc: localize root-cause configuration properties from run-time logs.

The pipeline has two stages. Stage 1 mines log templates from may-fault
logs, compares them against a store of fault-free templates, and scores the
unmatched ("specific") templates with a weighted diagnostic-token sum.
Stage 2 matches configuration property names and values against the
recovered key log messages, optionally verifies the matches with an LLM
backend, and falls back to LLM-based indirect inference when direct
matching fails or is rejected.
"""

__version__ = "0.1.0"
