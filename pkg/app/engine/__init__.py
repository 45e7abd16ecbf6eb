"""
Numerical engine: polynomials, kernels, finite generators, Monte Carlo and field analysis.
"""
