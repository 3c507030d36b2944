"""
Tests for pcfgnn.
"""
