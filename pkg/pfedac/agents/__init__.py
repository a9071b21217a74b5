"""
Per-agent policy, Markov chains, critic and actor updates
"""
