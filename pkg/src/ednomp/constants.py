"""Physical constants shared across the package."""

# Rounded value; the numerology bounds are stated against c = 3e8.
SPEED_OF_LIGHT = 3.0e8

BASE_SCS_HZ = 15.0e3
SSB_SUBCARRIERS = 240
MU_MIN = 0
MU_MAX = 6
