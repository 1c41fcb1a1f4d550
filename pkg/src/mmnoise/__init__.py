"""Markov-Middleton impulsive noise toolkit."""

__version__ = "0.1.0"
