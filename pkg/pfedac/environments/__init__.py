"""
Finite MDPs, feature maps and federation generators for pfedac
"""
