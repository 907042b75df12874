"""Test package for the thermal-hbt simulator."""
