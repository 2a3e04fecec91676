"""
Models for the Spatial PPM Analysis Package
"""
