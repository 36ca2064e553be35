"""Hypothesis spaces and Koopman learners"""
