"""
Test suite for rconvmk
"""
