"""Tests package"""
