"""
Export module for reports of the analysis pipeline
"""
