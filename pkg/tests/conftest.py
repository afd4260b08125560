"""
conftest.py: pytest configuration for episim tests.

Tests import the top-level packages (domain, gridworld, sim, ...) and cli.py
directly from the repository root.
"""
import sys
from pathlib import Path

# Ensure repo root is on the path so `import sim` and `import cli` work
sys.path.insert(0, str(Path(__file__).parent.parent))
