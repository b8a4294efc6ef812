"""One-time private LLM benchmarks from arXiv articles.

Builds a local article corpus, synthesizes sequencing / cloze / prediction
selection tasks from it, evaluates models with exact-match scoring, and
quantifies overestimation with rugged scores.
"""

__version__ = "0.1.0"

# Bumped whenever task construction or prompt templates change, so that
# regenerated benchmarks are never silently comparable across schemes.
GENERATOR_VERSION = "scp-1"
