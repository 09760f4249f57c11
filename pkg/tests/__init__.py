"""
Test suite for quasarbench.
"""
