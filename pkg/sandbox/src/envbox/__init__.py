"""envbox: a child process that validates and evaluates generated
environment code over a newline-JSON protocol."""

__version__ = "0.1.0"
