"""Lifted predictors and receding-horizon control"""
