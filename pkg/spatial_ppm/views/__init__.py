"""
Command-line views for the Spatial PPM Analysis Package
"""
