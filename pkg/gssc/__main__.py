#!/usr/bin/env python3
"""
gssc module entry point.
Allows running gssc as a module: python -m gssc
"""

from .cli import cli

if __name__ == "__main__":
    cli()
