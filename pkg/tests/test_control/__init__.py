"""Test control package"""
