"""Test utils package"""
