"""Test systems package"""
