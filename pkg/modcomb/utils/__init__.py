"""Run logging, artifact export and reports"""
