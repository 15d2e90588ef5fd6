import os
import sys

# Ensure project directory is on the Python path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
