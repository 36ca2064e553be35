"""Test combination package"""
