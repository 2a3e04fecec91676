"""
Spatial PPM Analysis Application

This is the main entry point for the command-line analysis pipeline.
"""
import os
import sys

# Add the parent directory to sys.path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from spatial_ppm.views.commands import main

if __name__ == "__main__":
    sys.exit(main())
