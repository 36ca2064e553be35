"""Test learning package"""
