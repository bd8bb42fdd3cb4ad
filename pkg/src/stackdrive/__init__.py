"""
stackdrive - Stackelberg lane-change decisions in a three-lane traffic simulator.

Drivers with a disposition index q play a three-person, three-level game
for lane choice on top of a bicycle-model vehicle simulation; safety is
scored with a separating-axis collision possibility index.
"""

__version__ = "0.1.0"
__author__ = "stackdrive contributors"
