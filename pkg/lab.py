"""
Alt-Phillips Lab
Command line entry point: python lab.py run|convergence|verify
"""
from cli.main import app

if __name__ == "__main__":
    app()
