"""
Federation round loop, subspace aggregation, baselines and sweeps
"""
