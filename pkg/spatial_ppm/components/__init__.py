"""
Rendering and export components for the Spatial PPM Analysis Package
"""
