"""Markov-IDS channels: exact block laws, genie-aided capacity bounds and stability certificates."""

from __future__ import annotations

__version__ = "0.1.0"
