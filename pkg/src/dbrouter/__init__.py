"""Database routing engine: rank relational schemas by answerability."""

__version__ = "0.1.0"
