# commands/__init__.py
"""One module per CLI subcommand; main.py parses flags and dispatches here."""
