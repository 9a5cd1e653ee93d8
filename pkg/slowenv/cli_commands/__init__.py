# slowenv/cli_commands/__init__.py
