"""
Exact solvers for stationary laws, values, gradients and TD fixed points
"""
