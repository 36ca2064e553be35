"""Model combination loop and convergence diagnostics"""
