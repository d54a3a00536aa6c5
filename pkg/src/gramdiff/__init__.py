"""Grammar-based generative fuzzing and differential testing toolkit."""

__version__ = "0.1.0"
