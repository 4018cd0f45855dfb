"""Module entry point for running the CLI via ``python -m climregime``."""

from .cli import main

if __name__ == "__main__":
    main()
