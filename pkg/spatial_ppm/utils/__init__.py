"""
Configuration and file I/O for the Spatial PPM Analysis Package
"""
