"""Test experiments package"""
