"""
Utility modules for pfedac
"""
