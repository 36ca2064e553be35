"""
modcomb - Non-intrusive iterative combination of projection-based dynamics learners
"""
__version__ = '1.0.0'
