"""Utility subpackage for koopnet."""
