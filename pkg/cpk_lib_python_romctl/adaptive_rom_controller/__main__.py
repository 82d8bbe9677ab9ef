# -*- coding: utf-8 -*-
"""CLI entry point."""
from .main import main

if __name__ == "__main__":
    main()
