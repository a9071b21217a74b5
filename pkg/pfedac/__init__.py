"""
pfedac - personalized federated actor-critic simulator on finite MDPs
"""

__version__ = "0.1.0"
