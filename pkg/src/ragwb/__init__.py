"""Corpus-to-leaderboard workbench.

Pipeline: ingest a thesis corpus, build QA fine-tuning datasets, index
documents with TF-IDF, retrieve context for enriched prompts, and rank a
family of chat-endpoint model variants with a judge model.
"""

__version__ = "0.1.0"
