"""Unit test package for koopnet."""
