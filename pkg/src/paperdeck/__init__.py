"""paperdeck: a multi-agent pipeline that turns research PDFs into
editable Beamer slide decks, with an LLM-judge evaluation harness."""

__version__ = "1.0.0"
